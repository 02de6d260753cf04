"""Fluxos hamiltonianos de geradores polinomiais e transformadas de Lie por série adjunta"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from src.models.errors import BudgetExceededError, FlowEscapeError, ValidationError
from src.services.lattice import FourierState
from src.services.polyalg import DEFAULT_COEFF_CAP, HomPoly, poisson_bracket

logger = logging.getLogger(__name__)

DISCARD_TAIL_ORDERS = 32


@dataclass(frozen=True)
class FlowConfig:
    """Integração RK4 de passo fixo até t_final"""

    dt: float = 1e-3
    t_final: float = 1.0
    integrator: str = 'rk4'

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt deve ser > 0: {self.dt}")
        if abs(self.t_final) > 1:
            raise ValidationError(f"|t_final| deve ser <= 1: {self.t_final}")
        if self.integrator != 'rk4':
            raise ValidationError(f"Integrador não suportado: {self.integrator}")

    def at(self, t_final: float) -> 'FlowConfig':
        return FlowConfig(dt=self.dt, t_final=t_final, integrator=self.integrator)

    def steps(self) -> Tuple[int, float]:
        n = int(math.ceil(abs(self.t_final) / self.dt))
        return n, (self.t_final / n if n else 0.0)


@dataclass(frozen=True)
class LieSeriesBudget:
    degree_cap: int
    stage: int
    coeff_cap: int = DEFAULT_COEFF_CAP

    def __post_init__(self):
        if self.degree_cap < 4 or self.degree_cap % 2:
            raise ValidationError(f"degree_cap deve ser par e >= 4: {self.degree_cap}")
        if self.stage < 1:
            raise ValidationError(f"Estágio deve ser >= 1: {self.stage}")

    @property
    def r(self) -> int:
        return self.degree_cap // 2

    def m_q(self, q: int) -> int:
        """Menor m com (m+1)*stage + q > r"""
        m = 0
        while (m + 1) * self.stage + q <= self.r:
            m += 1
        return m


@dataclass
class DiscardEntry:
    """Cauda descartada a partir da ordem power; count = ordens somadas em bound"""

    source_q: int
    target_q: int
    power: int
    count: int
    bound: float

    def to_dict(self) -> Dict:
        return {'source_q': self.source_q, 'target_q': self.target_q, 'power': self.power,
                'count': self.count, 'bound': self.bound}


@dataclass
class DiscardLedger:
    """Termos além do grau máximo, registrados sem serem calculados"""

    entries: List[DiscardEntry] = field(default_factory=list)

    def record(self, source_q: int, target_q: int, power: int, count: int, bound: float):
        self.entries.append(DiscardEntry(source_q, target_q, power, count, bound))

    @property
    def total_count(self) -> int:
        return sum(e.count for e in self.entries)

    @property
    def max_bound(self) -> float:
        return max((e.bound for e in self.entries), default=0.0)

    def to_dict(self) -> Dict:
        return {
            'entries': [e.to_dict() for e in self.entries],
            'total_count': self.total_count,
            'max_bound': self.max_bound,
        }


def epsilon_chi(chi: HomPoly) -> float:
    """1/4 (2q ||chi||)^(-1/(2q-2))"""
    if chi.linf == 0:
        return math.inf
    q = chi.q
    return 0.25 * (2 * q * chi.linf) ** (-1.0 / (2 * q - 2))


def _l1(flat: np.ndarray) -> float:
    return float(np.sum(np.abs(flat)))


def _rk4(field_fn: Callable[[np.ndarray], np.ndarray], state: np.ndarray, h: float) -> np.ndarray:
    """Incremento de um passo RK4 clássico"""
    k1 = field_fn(state)
    k2 = field_fn(state + 0.5 * h * k1)
    k3 = field_fn(state + 0.5 * h * k2)
    k4 = field_fn(state + h * k3)
    return (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_start(chi: HomPoly, u0: FourierState) -> float:
    radius = epsilon_chi(chi)
    size = _l1(u0.flat)
    if size >= radius:
        raise FlowEscapeError(f"||u0||_l1 = {size:.3e} fora da bola de raio eps_chi = {radius:.3e}")
    return radius


def flow_with_displacement(chi: HomPoly, u0: FourierState, cfg: FlowConfig) -> Tuple[FourierState, np.ndarray]:
    """Phi_chi^t(u0) e o deslocamento acumulado Phi(u0) - u0 somado passo a passo"""
    delta = np.zeros(u0.lattice.size, dtype=np.complex128)
    if cfg.t_final == 0 or chi.is_zero():
        return u0, delta
    radius = _check_start(chi, u0)
    compiled = chi.compiled(u0.lattice)

    def vector_field(v: np.ndarray) -> np.ndarray:
        # -i d/dt u = grad chi(u)
        return 1j * compiled.gradient(v)

    nsteps, h = cfg.steps()
    state = u0.flat.copy()
    for n in range(nsteps):
        increment = _rk4(vector_field, state, h)
        state = state + increment
        delta += increment
        if not np.all(np.isfinite(state)) or _l1(state) > 2 * radius:
            raise FlowEscapeError(f"Norma l1 saiu da bola 2*eps_chi no passo {n + 1}/{nsteps}")
    return FourierState.from_flat(u0.lattice, state), delta


def flow(chi: HomPoly, u0: FourierState, cfg: FlowConfig) -> FourierState:
    return flow_with_displacement(chi, u0, cfg)[0]


def flow_tangent(chi: HomPoly, u0: FourierState, v0: FourierState, cfg: FlowConfig) -> FourierState:
    """dPhi_chi^t(u0)(v0) pelo sistema variacional acoplado"""
    if cfg.t_final == 0 or chi.is_zero():
        return v0
    radius = _check_start(chi, u0)
    compiled = chi.compiled(u0.lattice)
    size = u0.lattice.size

    def vector_field(z: np.ndarray) -> np.ndarray:
        u, w = z[:size], z[size:]
        return 1j * np.concatenate([compiled.gradient(u), compiled.gradient_derivative(u, w)])

    nsteps, h = cfg.steps()
    state = np.concatenate([u0.flat, v0.flat])
    for n in range(nsteps):
        state = state + _rk4(vector_field, state, h)
        if not np.all(np.isfinite(state)) or _l1(state[:size]) > 2 * radius:
            raise FlowEscapeError(f"Norma l1 saiu da bola 2*eps_chi no passo {n + 1}/{nsteps}")
    return FourierState.from_flat(u0.lattice, state[size:])


def symplectic_form(v: FourierState, w: FourierState) -> float:
    """(i v, w)_{L2}"""
    return float(np.real(np.vdot(w.flat, 1j * v.flat)))


def lie_series(Q: HomPoly, chi: HomPoly, n_max: int, shift: int = 0,
               cap: int = DEFAULT_COEFF_CAP) -> Dict[int, HomPoly]:
    """sum_{n=0}^{n_max} ad_chi^n Q / (n+shift)!, indexado pelo meio-grau de cada termo"""
    terms: Dict[int, HomPoly] = {}
    current = Q
    for n in range(n_max + 1):
        if n > 0:
            if chi.is_zero() or current.is_zero():
                break
            current = poisson_bracket(chi, current, cap=cap)
        term = current.scale(1.0 / math.factorial(n + shift))
        if not term.is_zero():
            terms[term.q] = terms[term.q] + term if term.q in terms else term
    return terms


def _accumulate(target: Dict[int, HomPoly], terms: Dict[int, HomPoly]):
    for q, poly in terms.items():
        target[q] = target[q] + poly if q in target else poly


def _order_factor(source_q: int, chi: HomPoly, j: int) -> float:
    # ad_chi leva grau 2q_j em 2q_{j+1}, q_j = q + j (q' - 1)
    return 4 * chi.q * (source_q + j * (chi.q - 1)) * chi.linf / (j + 1)


def discard_bound(source_q: int, chi: HomPoly, power: int, norm: float) -> float:
    """||Q|| prod_{j<n} 4 q' q_j ||chi|| / n!, cota de ||ad_chi^n Q|| / n!"""
    bound = norm
    for j in range(power):
        bound *= _order_factor(source_q, chi, j)
    return bound


def discard_tail(source_q: int, chi: HomPoly, first: int, norm: float) -> Tuple[int, float]:
    """Soma das cotas das ordens first, first+1, ... até a parcela ficar desprezível"""
    term = discard_bound(source_q, chi, first, norm)
    total, orders = 0.0, 0
    for n in range(first, first + DISCARD_TAIL_ORDERS):
        total += term
        orders += 1
        if term <= 1e-16 * total or not math.isfinite(total):
            break
        term *= _order_factor(source_q, chi, n)
    return orders, total


def lie_transform(H_parts: Iterable[HomPoly], chi: HomPoly, budget: LieSeriesBudget,
                  ledger: Optional[DiscardLedger] = None, shift: int = 0) -> Dict[int, HomPoly]:
    """Q o Phi_chi^1 truncado: sum_{n <= m_q} ad_chi^n Q / n! para cada parte Q"""
    if chi.q != budget.stage + 1:
        raise ValidationError(f"Gerador de grau {chi.degree} incompatível com o estágio {budget.stage}")
    result: Dict[int, HomPoly] = {}
    for Q in H_parts:
        if Q.q > budget.r:
            raise ValidationError(f"Parte de grau {Q.degree} acima do limite {budget.degree_cap}")
        m = budget.m_q(Q.q)
        try:
            terms = lie_series(Q, chi, m, shift=shift, cap=budget.coeff_cap)
        except BudgetExceededError:
            logger.error("Orçamento de coeficientes esgotado na transformada (q=%d, estágio %d)",
                         Q.q, budget.stage)
            raise
        _accumulate(result, terms)
        if ledger is not None and not chi.is_zero() and not Q.is_zero():
            power = m + 1
            orders, bound = discard_tail(Q.q, chi, power, Q.linf)
            ledger.record(Q.q, Q.q + power * budget.stage, power, orders, bound)
    return result
