from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from src.models.errors import ValidationError

Mode = Tuple[int, ...]


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (int(n) & (int(n) - 1)) == 0


def block_of_norm2(n2: int) -> int:
    """Índice dyádico a partir de |k|^2 (aritmética inteira exata)"""
    n2 = int(n2)
    if n2 < 4:
        return 0
    # floor(log2 |k|) = floor(floor(log2 |k|^2) / 2)
    return (n2.bit_length() - 1) // 2


@dataclass(frozen=True)
class TruncatedLattice:
    """Caixa [-K_max, K_max]^d com a decomposição dyádica euclidiana"""

    d: int
    k_max: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValidationError(f"Dimensão não suportada: {self.d}")
        if int(self.k_max) < 0:
            raise ValidationError(f"K_max inválido: {self.k_max}")

    @cached_property
    def n_max(self) -> int:
        # menor n com 2^n > K_max * sqrt(d), comparado em inteiros: 4^n > K^2 d
        n = 0
        while 4 ** n <= self.k_max ** 2 * self.d:
            n += 1
        return n

    @property
    def width(self) -> int:
        return 2 * self.k_max + 1

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.width,) * self.d

    @property
    def size(self) -> int:
        return self.width ** self.d

    @cached_property
    def modes(self) -> np.ndarray:
        """Modos da caixa em ordem row-major, shape (size, d)"""
        axes = [np.arange(-self.k_max, self.k_max + 1)] * self.d
        grid = np.meshgrid(*axes, indexing='ij')
        return np.stack([g.ravel() for g in grid], axis=1).astype(np.int64)

    @cached_property
    def norm2(self) -> np.ndarray:
        return np.sum(self.modes ** 2, axis=1)

    @cached_property
    def blocks(self) -> np.ndarray:
        return np.array([block_of_norm2(n2) for n2 in self.norm2], dtype=np.int64)

    @cached_property
    def bracket(self) -> np.ndarray:
        """<k> = (1 + |k|^2)^(1/2)"""
        return np.sqrt(1.0 + self.norm2)

    def contains(self, k: Iterable[int]) -> bool:
        k = tuple(int(c) for c in k)
        return len(k) == self.d and all(abs(c) <= self.k_max for c in k)

    def flat_index(self, k: Iterable[int]) -> int:
        k = tuple(int(c) for c in k)
        if not self.contains(k):
            raise ValidationError(f"Modo fora da caixa: {k}")
        index = 0
        for c in k:
            index = index * self.width + (c + self.k_max)
        return index

    def mode_at(self, index: int) -> Mode:
        return tuple(int(c) for c in self.modes[index])

    def iter_modes(self) -> List[Mode]:
        return [tuple(int(c) for c in row) for row in self.modes]

    def block_members(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.blocks == n)

    def to_dict(self) -> Dict:
        return {'d': self.d, 'k_max': self.k_max, 'n_max': self.n_max}


def block_index(k: Iterable[int], lattice: Optional[TruncatedLattice] = None) -> int:
    """n com 2^n <= |k| < 2^(n+1), ou 0 quando |k| < 2"""
    k = tuple(int(c) for c in k)
    if lattice is not None and not lattice.contains(k):
        raise ValidationError(f"Modo fora da caixa: {k}")
    return block_of_norm2(sum(c * c for c in k))


@dataclass(frozen=True, eq=False)
class FourierState:
    """Amplitudes u_k densas sobre a caixa"""

    lattice: TruncatedLattice
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.amplitudes, dtype=np.complex128).reshape(self.lattice.shape)
        if not np.all(np.isfinite(data)):
            raise ValidationError("Estado com entradas não finitas")
        data.setflags(write=False)
        object.__setattr__(self, 'amplitudes', data)

    @classmethod
    def zeros(cls, lattice: TruncatedLattice) -> 'FourierState':
        return cls(lattice, np.zeros(lattice.shape, dtype=np.complex128))

    @classmethod
    def from_modes(cls, lattice: TruncatedLattice, values: Dict[Mode, complex]) -> 'FourierState':
        flat = np.zeros(lattice.size, dtype=np.complex128)
        for k, value in values.items():
            k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
            flat[lattice.flat_index(k)] += value
        return cls(lattice, flat)

    @classmethod
    def from_flat(cls, lattice: TruncatedLattice, flat: np.ndarray) -> 'FourierState':
        return cls(lattice, np.asarray(flat).reshape(lattice.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.amplitudes.ravel()

    def __getitem__(self, k) -> complex:
        k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
        return complex(self.flat[self.lattice.flat_index(k)])

    def scaled(self, factor: complex) -> 'FourierState':
        return FourierState(self.lattice, self.amplitudes * factor)

    def support(self) -> List[Mode]:
        return [self.lattice.mode_at(i) for i in np.flatnonzero(self.flat)]


@dataclass
class NormTriple:
    l1: float
    l1_eta: float
    hs: float


@dataclass
class Observables:
    mass: float
    hs_norms: Dict[float, float]
    super_actions: np.ndarray
    nns: float

    def to_dict(self) -> Dict:
        return {
            'mass': self.mass,
            'hs_norms': {str(s): v for s, v in self.hs_norms.items()},
            'super_actions': [float(j) for j in self.super_actions],
            'nns': self.nns,
        }


def _power(values: np.ndarray, exponent: float) -> np.ndarray:
    # 0^0 = 1 e 0^s = 0 para s > 0
    return np.power(values.astype(np.float64), exponent)


def mass(u: FourierState) -> float:
    return float(np.sum(np.abs(u.flat) ** 2))


def super_actions(u: FourierState) -> np.ndarray:
    """J_0, ..., J_{n_max}"""
    lattice = u.lattice
    return np.bincount(lattice.blocks, weights=np.abs(u.flat) ** 2, minlength=lattice.n_max + 1)


def super_action(u: FourierState, n: int) -> float:
    if not 0 <= n <= u.lattice.n_max:
        raise ValidationError(f"Bloco fora do intervalo: {n}")
    return float(super_actions(u)[n])


def ns_observable(u: FourierState, s: float) -> float:
    """N_s(u) = sum_n 2^(2ns) J_n"""
    if s < 0:
        raise ValidationError("s deve ser >= 0")
    actions = super_actions(u)
    weights = np.power(2.0, 2.0 * s * np.arange(actions.size))
    return float(np.dot(weights, actions))


def nns_weights(lattice: TruncatedLattice, s: float, N: int) -> np.ndarray:
    """Pesos por modo de N_{N,s}: 2^(2ns) abaixo de N, |k|^(2s) a partir de N"""
    if not is_power_of_two(N):
        raise ValidationError(f"N deve ser potência de dois: {N}")
    n_cut = int(N).bit_length() - 1
    # com N = 1 o modo zero fica com o peso do bloco 0
    low = lattice.blocks < n_cut if n_cut > 0 else lattice.norm2 == 0
    high = lattice.norm2 >= int(N) ** 2
    weights = np.zeros(lattice.size)
    weights[low] = np.power(2.0, 2.0 * s * lattice.blocks[low])
    weights[high] = _power(lattice.norm2[high], s)
    return weights


def nns_observable(u: FourierState, s: float, N: int) -> float:
    if s < 0:
        raise ValidationError("s deve ser >= 0")
    weights = nns_weights(u.lattice, s, N)
    return float(np.dot(weights, np.abs(u.flat) ** 2))


def l1_norm(u: FourierState) -> float:
    return float(np.sum(np.abs(u.flat)))


def l1_weighted(u: FourierState, eta: float) -> float:
    return float(np.sum(u.lattice.bracket ** eta * np.abs(u.flat)))


def hs_norm(u: FourierState, s: float) -> float:
    return float(np.sqrt(np.sum(u.lattice.bracket ** (2.0 * s) * np.abs(u.flat) ** 2)))


def norms(u: FourierState, eta: float = 0.0, s: float = 0.0) -> NormTriple:
    if eta < 0 or s < 0:
        raise ValidationError("eta e s devem ser >= 0")
    return NormTriple(l1=l1_norm(u), l1_eta=l1_weighted(u, eta), hs=hs_norm(u, s))


def sobolev_constant(lattice: TruncatedLattice, s: float) -> float:
    """K_s com K_s^2 = sum_caixa <k>^(-2s); garante l1 <= K_s H^s"""
    return float(np.sqrt(np.sum(lattice.bracket ** (-2.0 * s))))


def sphere_actions(u: FourierState) -> Dict[int, float]:
    """Super-ações clássicas sum_{|k|^2 = m} |u_k|^2"""
    result: Dict[int, float] = {}
    weights = np.abs(u.flat) ** 2
    for m in np.unique(u.lattice.norm2):
        result[int(m)] = float(np.sum(weights[u.lattice.norm2 == m]))
    return result


def observables(u: FourierState, s_list: Iterable[float] = (1.0,), N: Optional[int] = None,
                s_nns: float = 1.0) -> Observables:
    if N is None:
        N = 2 ** (u.lattice.n_max + 1)
    return Observables(
        mass=mass(u),
        hs_norms={float(s): hs_norm(u, s) for s in s_list},
        super_actions=super_actions(u),
        nns=nns_observable(u, s_nns, N),
    )


def random_state(lattice: TruncatedLattice, rng: np.random.Generator, amplitude: float = 1.0,
                 decay: float = 0.0, norm: str = 'l1') -> FourierState:
    """Estado aleatório com decaimento <k>^(-decay), normalizado na norma pedida"""
    raw = rng.normal(size=lattice.size) + 1j * rng.normal(size=lattice.size)
    raw = raw * lattice.bracket ** (-decay)
    state = FourierState.from_flat(lattice, raw)
    if norm == 'l1':
        scale = l1_norm(state)
    elif norm.startswith('h'):
        scale = hs_norm(state, float(norm[1:] or 0.0))
    else:
        raise ValidationError(f"Norma desconhecida: {norm}")
    return state.scaled(amplitude / scale)
