"""Esquema da configuração de experimentos (um arquivo JSON por comando)"""
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple, get_args, get_origin, get_type_hints

from src.models.errors import ConfigError

DEFAULT_DATABASE_URL = 'sqlite:///src/database/app.db'


def env_threads() -> int:
    """Número de workers (NLSBNF_THREADS, padrão 1)"""
    raw = os.environ.get('NLSBNF_THREADS', '1')
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"NLSBNF_THREADS inválido: {raw}")
    if value < 1:
        raise ConfigError(f"NLSBNF_THREADS deve ser >= 1: {value}")
    return value


def env_database_url() -> str:
    return os.environ.get('NLSBNF_DATABASE_URL', DEFAULT_DATABASE_URL)


def env_log_level() -> str:
    return os.environ.get('LOG_LEVEL', 'INFO').upper()


def confine_path(root: str, path: str) -> str:
    """Resolve path relativo a root e recusa qualquer caminho fora de root"""
    base = os.path.realpath(root)
    resolved = os.path.realpath(os.path.join(base, path))
    if os.path.commonpath([base, resolved]) != base:
        raise ConfigError(f"Caminho fora da raiz de saída: {path}")
    return resolved


@dataclass(frozen=True)
class PotentialSection:
    n_max: int = 4

    def __post_init__(self):
        if self.n_max < 0:
            raise ConfigError("potential.n_max deve ser >= 0")


@dataclass(frozen=True)
class MonteCarloSection:
    gammas: Tuple[float, ...] = (1e-3, 1e-2)
    q: int = 2
    n_max: int = 4
    trials: int = 10000

    def __post_init__(self):
        if not self.gammas or any(g <= 0 for g in self.gammas):
            raise ConfigError("scan.monte_carlo.gammas deve conter valores > 0")
        if self.trials < 1:
            raise ConfigError("scan.monte_carlo.trials deve ser >= 1")


@dataclass(frozen=True)
class ScanSection:
    d: int = 1
    k_max: int = 8
    q_max: int = 2
    alpha: float = 1.0
    potential_file: Optional[str] = None
    monte_carlo: Optional[MonteCarloSection] = None

    def __post_init__(self):
        if self.q_max < 2:
            raise ConfigError("scan.q_max deve ser >= 2")


@dataclass(frozen=True)
class LadderSection:
    exponents: Tuple[int, ...] = (6, 7, 8, 9, 10)
    base: Optional[float] = None
    direction_seed: int = 0


@dataclass(frozen=True)
class NormalFormSection:
    d: int = 1
    k_max: int = 4
    p: int = 1
    sigma: float = 1.0
    r: Optional[int] = None
    nu: Optional[float] = None
    eps: Optional[float] = None
    s0: float = 1.0
    gamma: Optional[float] = None
    C: Optional[float] = None
    coeff_cap: int = 10 ** 7
    flow_dt: float = 1e-3
    potential_file: Optional[str] = None
    ladder: Optional[LadderSection] = None

    def __post_init__(self):
        manual = self.r is not None or self.nu is not None
        if manual and (self.r is None or self.nu is None):
            raise ConfigError("normal_form: r e nu devem ser dados juntos")
        if not manual and self.eps is None:
            raise ConfigError("normal_form: informe (r, nu) ou eps")
        if self.sigma not in (-1.0, 1.0):
            raise ConfigError("normal_form.sigma deve ser +1 ou -1")


@dataclass(frozen=True)
class InitialDataSection:
    amplitude: float = 0.05
    norm: str = 'h1'
    decay: float = 1.0
    seed: Optional[int] = None


@dataclass(frozen=True)
class EnsembleSection:
    seeds: Tuple[int, ...] = ()


@dataclass(frozen=True)
class SimulateSection:
    d: int = 1
    k_max: int = 16
    p: int = 1
    sigma: float = 1.0
    dt: float = 1e-3
    t_final: float = 1.0
    record_every: int = 10
    dealias: bool = True
    nonlinear_scheme: str = 'galerkin_rk4'
    s_list: Tuple[float, ...] = (1.0,)
    nns_s: float = 1.0
    nns_N: Optional[int] = None
    initial: InitialDataSection = field(default_factory=InitialDataSection)
    potential_file: Optional[str] = None
    snapshot_every: Optional[int] = None
    resume_from: Optional[str] = None
    ensemble: Optional[EnsembleSection] = None
    normal_form_check: Optional[NormalFormSection] = None

    def __post_init__(self):
        if self.dt <= 0 or self.t_final < 0:
            raise ConfigError("simulate: dt > 0 e t_final >= 0")


@dataclass(frozen=True)
class VerifySection:
    examples: int = 10
    seed: int = 0
    inject: Optional[str] = None
    suites: Tuple[str, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = '.'
    potential: PotentialSection = field(default_factory=PotentialSection)
    scan: ScanSection = field(default_factory=ScanSection)
    normal_form: Optional[NormalFormSection] = None
    simulate: SimulateSection = field(default_factory=SimulateSection)
    verify: VerifySection = field(default_factory=VerifySection)

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed deve ser inteiro de 64 bits sem sinal")

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)

    @property
    def config_hash(self) -> str:
        """SHA-256 do JSON canônico, sem o diretório de saída"""
        data = self.to_dict()
        data.pop('output_dir')
        canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def output_path(self, root: Optional[str] = None) -> str:
        path = self.output_dir if root is None else confine_path(root, self.output_dir)
        if not os.path.isdir(path):
            raise ConfigError(f"Diretório de saída inexistente: {path}")
        return path

    def confined(self, root: Optional[str]) -> 'ExperimentConfig':
        """Cópia com os arquivos de entrada resolvidos dentro de root"""
        if root is None:
            return self

        def resolve(section, *names):
            changes = {name: confine_path(root, getattr(section, name)) for name in names if getattr(section, name)}
            return dataclasses.replace(section, **changes) if changes else section

        changes = {
            'scan': resolve(self.scan, 'potential_file'),
            'simulate': resolve(self.simulate, 'potential_file', 'resume_from'),
        }
        if self.normal_form is not None:
            changes['normal_form'] = resolve(self.normal_form, 'potential_file')
        return dataclasses.replace(self, **changes)


def _unwrap_optional(hint):
    if get_origin(hint) is not None and type(None) in get_args(hint):
        inner = [a for a in get_args(hint) if a is not type(None)]
        return inner[0] if len(inner) == 1 else hint
    return hint


def _convert(hint, value, path: str):
    hint = _unwrap_optional(hint)
    if value is None:
        return None
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: esperado objeto")
        return build_section(hint, value, path)
    if get_origin(hint) is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: esperada lista")
        inner = get_args(hint)[0]
        return tuple(_convert(inner, v, f'{path}[{i}]') for i, v in enumerate(value))
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if hint in (str, bool) and isinstance(value, hint):
        return value
    raise ConfigError(f"{path}: tipo inválido ({type(value).__name__})")


def build_section(cls, data: Dict[str, Any], path: str = 'config'):
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"Chaves desconhecidas em {path}: {', '.join(unknown)}")
    kwargs = {key: _convert(hints[key], value, f'{path}.{key}') for key, value in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}")


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("Configuração deve ser um objeto JSON")
    return build_section(ExperimentConfig, data)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"Não foi possível ler {path}: {exc}")
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"JSON inválido em {path}: {exc}")
    return parse_config(data)
