"""Integrador split-step (Strang) para a NLS truncada de Galerkin na caixa"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.fft

from src.models.errors import BlowUpError, ValidationError
from src.services.lattice import FourierState, TruncatedLattice, observables
from src.services.polyalg import DEFAULT_COEFF_CAP, HomPoly, evaluate, nls_nonlinearity
from src.services.potential import BlockPotential, FrequencyTable

logger = logging.getLogger(__name__)

SCHEMES = ('galerkin_rk4', 'pointwise_phase')


@dataclass(frozen=True, eq=False)
class SimConfig:
    lattice: TruncatedLattice
    potential: BlockPotential
    p: int = 1
    sigma: float = 1.0
    dt: float = 1e-3
    t_final: float = 1.0
    record_every: int = 1
    dealias: bool = True
    nonlinear_scheme: str = 'galerkin_rk4'
    s_list: Sequence[float] = (1.0,)
    nns_s: float = 1.0
    nns_N: Optional[int] = None
    fast_grid: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt deve ser > 0: {self.dt}")
        if self.t_final < 0:
            raise ValidationError(f"t_final deve ser >= 0: {self.t_final}")
        if self.record_every < 1:
            raise ValidationError("record_every deve ser >= 1")
        if self.p < 1:
            raise ValidationError(f"p deve ser >= 1: {self.p}")
        if self.nonlinear_scheme not in SCHEMES:
            raise ValidationError(f"Esquema não linear desconhecido: {self.nonlinear_scheme}")
        object.__setattr__(self, 's_list', tuple(float(s) for s in self.s_list))

    @property
    def total_steps(self) -> int:
        return int(math.ceil(self.t_final / self.dt - 1e-9)) if self.t_final > 0 else 0

    @cached_property
    def grid_size(self) -> int:
        """(p+1)(2K+1) pontos por eixo tornam a projeção da não linearidade exata"""
        K = self.lattice.k_max
        size = (self.p + 1) * (2 * K + 1) if self.dealias else 2 * K + 1
        return scipy.fft.next_fast_len(size) if self.fast_grid and self.dealias else size


@dataclass
class TrajectoryRecord:
    steps: List[int] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    hamiltonian: List[float] = field(default_factory=list)
    super_actions: List[np.ndarray] = field(default_factory=list)
    hs_norms: Dict[float, List[float]] = field(default_factory=dict)
    nns: List[float] = field(default_factory=list)
    final_state: Optional[FourierState] = None
    partial: bool = False

    def __len__(self) -> int:
        return len(self.times)

    def append(self, step: int, time: float, u: FourierState, H: float, cfg: SimConfig):
        obs = observables(u, cfg.s_list, N=cfg.nns_N, s_nns=cfg.nns_s)
        self.steps.append(step)
        self.times.append(time)
        self.mass.append(obs.mass)
        self.hamiltonian.append(H)
        self.super_actions.append(obs.super_actions)
        for s, value in obs.hs_norms.items():
            self.hs_norms.setdefault(s, []).append(value)
        self.nns.append(obs.nns)

    def columns(self) -> List[str]:
        n_blocks = len(self.super_actions[0]) if self.super_actions else 0
        return (['step', 't', 'mass', 'H'] + [f'J_{n}' for n in range(n_blocks)]
                + [f'hs_{s:g}' for s in self.hs_norms] + ['nns'])

    def rows(self) -> List[List]:
        result = []
        for i, step in enumerate(self.steps):
            row = [step, self.times[i], self.mass[i], self.hamiltonian[i]]
            row += [float(j) for j in self.super_actions[i]]
            row += [values[i] for values in self.hs_norms.values()]
            row.append(self.nns[i])
            result.append(row)
        return result

    def drift_report(self, s: float = 1.0) -> Dict:
        """Derivas relativas máximas de J_n e da massa; equivalência N_s em cada amostra"""
        if not self.times:
            return {}
        J = np.array(self.super_actions)
        J0 = J[0]
        active = J0 > 0
        rel = np.zeros(J.shape[1])
        rel[active] = np.max(np.abs(J[:, active] - J0[active]), axis=0) / J0[active]
        mass = np.array(self.mass)
        equivalence = None
        if float(s) in self.hs_norms:
            hs2 = np.array(self.hs_norms[float(s)]) ** 2
            nns = np.array(self.nns)
            tol = 1e-12 * hs2
            equivalence = bool(np.all(2.0 ** (-2 * s) * hs2 <= nns + tol) and np.all(nns <= hs2 + tol))
        return {
            'max_rel_drift_J': float(rel.max()) if rel.size else 0.0,
            'rel_drift_J': [float(x) for x in rel],
            'max_rel_drift_mass': float(np.max(np.abs(mass - mass[0])) / mass[0]) if mass[0] else 0.0,
            'ns_equivalence': equivalence,
            'samples': len(self.times),
        }


class SplitStepIntegrator:
    """Meio passo linear, subpasso não linear projetado, meio passo linear"""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        lattice = cfg.lattice
        self.frequencies = FrequencyTable(lattice, cfg.potential)
        self.omega = self.frequencies.omega.reshape(lattice.shape)
        self.half_phase = np.exp(-0.5j * cfg.dt * self.omega)
        M = cfg.grid_size
        axis = np.arange(-lattice.k_max, lattice.k_max + 1) % M
        self._index = np.ix_(*([axis] * lattice.d))
        self._grid_shape = (M,) * lattice.d
        self._to_grid = (2 * math.pi) ** (-lattice.d / 2) * M ** lattice.d
        self._from_grid = (2 * math.pi) ** (lattice.d / 2) * M ** (-lattice.d)
        self._quadrature = (2 * math.pi / M) ** lattice.d
        self._spectral_P: Optional[HomPoly] = None

    def to_grid(self, a: np.ndarray) -> np.ndarray:
        padded = np.zeros(self._grid_shape, dtype=np.complex128)
        padded[self._index] = a
        return scipy.fft.ifftn(padded, workers=self.cfg.workers) * self._to_grid

    def from_grid(self, w: np.ndarray) -> np.ndarray:
        return scipy.fft.fftn(w, workers=self.cfg.workers)[self._index] * self._from_grid

    def nonlinear_term(self, a: np.ndarray) -> np.ndarray:
        """Pi(sigma |u|^(2p) u) em coeficientes de Fourier"""
        phys = self.to_grid(a)
        return self.from_grid(self.cfg.sigma * np.abs(phys) ** (2 * self.cfg.p) * phys)

    def nonlinear_step(self, a: np.ndarray, dt: float) -> np.ndarray:
        if self.cfg.sigma == 0:
            return a
        if self.cfg.nonlinear_scheme == 'pointwise_phase':
            phys = self.to_grid(a)
            phys = phys * np.exp(-1j * dt * self.cfg.sigma * np.abs(phys) ** (2 * self.cfg.p))
            return self.from_grid(phys)
        # i d/dt u = Pi(sigma |u|^(2p) u)
        k1 = -1j * self.nonlinear_term(a)
        k2 = -1j * self.nonlinear_term(a + 0.5 * dt * k1)
        k3 = -1j * self.nonlinear_term(a + 0.5 * dt * k2)
        k4 = -1j * self.nonlinear_term(a + dt * k3)
        return a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def step(self, a: np.ndarray) -> np.ndarray:
        a = a * self.half_phase
        a = self.nonlinear_step(a, self.cfg.dt)
        return a * self.half_phase

    def hamiltonian_quadrature(self, a: np.ndarray) -> float:
        """Z_2 + sigma/(p+1) int |u|^(2p+2) pela regra do trapézio no grid"""
        p = self.cfg.p
        phys = self.to_grid(a)
        potential = self.cfg.sigma / (p + 1) * self._quadrature * float(np.sum(np.abs(phys) ** (2 * p + 2)))
        return float(np.sum(self.omega * np.abs(a) ** 2)) + potential

    def hamiltonian_spectral(self, a: np.ndarray, cap: int = DEFAULT_COEFF_CAP) -> float:
        if self._spectral_P is None:
            self._spectral_P = nls_nonlinearity(self.cfg.lattice, self.cfg.p, self.cfg.sigma, cap=cap)
        u = FourierState(self.cfg.lattice, a)
        return self.frequencies.evaluate(u) + evaluate(self._spectral_P, u)


@lru_cache(maxsize=16)
def integrator_for(cfg: SimConfig) -> SplitStepIntegrator:
    return SplitStepIntegrator(cfg)


def _check_state(u: FourierState, cfg: SimConfig):
    if u.lattice != cfg.lattice:
        raise ValidationError("Estado e configuração em caixas diferentes")


def step(u: FourierState, cfg: SimConfig) -> FourierState:
    _check_state(u, cfg)
    a = integrator_for(cfg).step(u.amplitudes)
    if not np.all(np.isfinite(a)):
        raise BlowUpError("NaN/Inf no passo split-step")
    return FourierState(cfg.lattice, a)


def hamiltonian_quadrature(u: FourierState, cfg: SimConfig) -> float:
    _check_state(u, cfg)
    return integrator_for(cfg).hamiltonian_quadrature(u.amplitudes)


def hamiltonian_spectral(u: FourierState, cfg: SimConfig, cap: int = DEFAULT_COEFF_CAP) -> float:
    _check_state(u, cfg)
    return integrator_for(cfg).hamiltonian_spectral(u.amplitudes, cap=cap)


def single_mode_solution(u0: complex, t: float, cfg: SimConfig) -> complex:
    """u_0(t) = u_0 exp(-i (omega_0 + sigma (2pi)^(-pd) |u_0|^(2p)) t)"""
    omega0 = (2 * math.pi) ** (-cfg.lattice.d / 2) * float(cfg.potential.block_values[0])
    rate = omega0 + cfg.sigma * (2 * math.pi) ** (-cfg.p * cfg.lattice.d) * abs(u0) ** (2 * cfg.p)
    return u0 * complex(np.exp(-1j * rate * t))


SnapshotSink = Callable[[int, float, FourierState], None]


def simulate(u0: FourierState, cfg: SimConfig, start_step: int = 0, snapshot_every: Optional[int] = None,
             snapshot_sink: Optional[SnapshotSink] = None) -> TrajectoryRecord:
    """Trajetória com amostras a cada record_every passos; t = passo * dt"""
    _check_state(u0, cfg)
    integrator = integrator_for(cfg)
    record = TrajectoryRecord()
    total = cfg.total_steps
    if start_step < 0 or start_step > total:
        raise ValidationError(f"Passo inicial fora de [0, {total}]: {start_step}")
    a = u0.amplitudes.copy()
    n = start_step
    if n % cfg.record_every == 0 or n == total:
        record.append(n, n * cfg.dt, u0, integrator.hamiltonian_quadrature(a), cfg)
    while n < total:
        a = integrator.step(a)
        n += 1
        if not np.all(np.isfinite(a)):
            record.partial = True
            logger.error("Explosão numérica no passo %d (t=%.6g)", n, n * cfg.dt)
            raise BlowUpError(f"NaN/Inf no passo {n}", partial=record)
        if n % cfg.record_every == 0 or n == total:
            u = FourierState(cfg.lattice, a)
            record.append(n, n * cfg.dt, u, integrator.hamiltonian_quadrature(a), cfg)
        if snapshot_sink is not None and snapshot_every and n % snapshot_every == 0:
            snapshot_sink(n, n * cfg.dt, FourierState(cfg.lattice, a))
    record.final_state = FourierState(cfg.lattice, a)
    logger.info("Simulação concluída: %d passos, %d amostras", total - start_step, len(record))
    return record


def simulate_ensemble(u0_list: Sequence[FourierState], cfgs: Union[SimConfig, Sequence[SimConfig]],
                      workers: int = 1) -> List[TrajectoryRecord]:
    """Membros em paralelo; a ordem do resultado segue a da entrada"""
    if isinstance(cfgs, SimConfig):
        cfgs = [cfgs] * len(u0_list)
    if len(cfgs) != len(u0_list):
        raise ValidationError("Número de configurações e estados diferentes")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(simulate, u0_list, cfgs))
