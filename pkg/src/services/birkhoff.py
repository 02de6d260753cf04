"""Forma normal de Birkhoff: planejador de parâmetros, equação cohomológica e transformações tau"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.models.errors import FlowEscapeError, InfeasiblePlanError, ValidationError
from src.services.lattice import FourierState, TruncatedLattice, hs_norm, l1_norm, sobolev_constant
from src.services.lieflow import (DiscardLedger, FlowConfig, LieSeriesBudget, epsilon_chi,
                                  flow_with_displacement, lie_series, lie_transform)
from src.services.polyalg import (DEFAULT_COEFF_CAP, DiagonalQuadratic, HomPoly, bracket_with_diagonal,
                                  evaluate, nns_quadratic)

logger = logging.getLogger(__name__)

# raio guardado: eps_chi >= 14 rho no primeiro estágio
GUARD_FACTOR = 14.0


@dataclass(frozen=True)
class ParameterPlan:
    r: int
    nu: float
    d: int = 1
    p: int = 1
    sigma: float = 1.0
    eps: Optional[float] = None
    s0: Optional[float] = None
    eta: Optional[float] = None
    N: Optional[int] = None
    gamma_tilde: float = 1.0
    C: Optional[float] = None
    T_eps: Optional[float] = None
    r_window: Optional[Tuple[float, float]] = None
    deviations: Tuple[str, ...] = ()

    @property
    def rho(self) -> float:
        """sqrt(nu)/(C r), com C = 1 enquanto não calibrado"""
        return math.sqrt(self.nu) / ((self.C or 1.0) * self.r)

    def to_dict(self) -> Dict:
        data = dataclasses.asdict(self)
        data['rho'] = self.rho
        data['N'] = str(self.N) if self.N is not None else None
        data['r_window'] = list(self.r_window) if self.r_window else None
        data['deviations'] = list(self.deviations)
        return data


def r_window(eps: float) -> Tuple[float, float]:
    """|log eps|/(4 log|log eps|) <= r <= |log eps|/(3 log|log eps|)"""
    big = abs(math.log(eps))
    small = math.log(big)
    return big / (4 * small), big / (3 * small)


def stability_time(eps: float) -> float:
    big = abs(math.log(eps))
    return math.exp(big ** 2 / (4 * math.log(big)))


def nu_formula(gamma_tilde: float, r: int, log2_N: float) -> float:
    """gamma~ r^-4 (log2(2rN))^-(2r+1)"""
    return gamma_tilde * r ** (-4) * (math.log2(2 * r) + log2_N) ** (-(2 * r + 1))


def plan_parameters(eps: float, s0: float, d: int, p: int = 1, gamma_emp: float = 1.0,
                    sigma: float = 1.0, C: Optional[float] = None) -> ParameterPlan:
    if not eps > 0:
        raise ValidationError(f"eps deve ser > 0: {eps}")
    if eps >= math.exp(-math.e):
        raise InfeasiblePlanError(f"eps={eps} exige eps < e^-e para que log|log eps| > 1")
    if s0 <= d / 2:
        raise ValidationError(f"s0 deve ser > d/2: s0={s0}, d={d}")
    if not gamma_emp > 0:
        raise ValidationError(f"gamma deve ser > 0: {gamma_emp}")
    deviations: List[str] = []
    lo, hi = r_window(eps)
    r = int(math.floor(hi))
    if r < 2:
        raise InfeasiblePlanError(f"eps={eps}: janela de r [{lo:.4f}, {hi:.4f}] não admite r >= 2")
    if r < lo:
        deviations.append(f"r={r} abaixo da janela [{lo:.4f}, {hi:.4f}]")
    eta = min(1.0, (s0 - d / 2) / 2)
    # maior potência de dois estritamente abaixo de eps^(-r/eta)
    log2_x = (r / eta) * -math.log2(eps)
    # ceil(x) - 1 >= x - 1, então N > eps^(-r/eta) / 2 sempre vale
    m = max(math.ceil(log2_x) - 1, 0)
    N = 2 ** m
    gamma_tilde = min(gamma_emp, 1.0)
    nu = nu_formula(gamma_tilde, r, m)
    plan = ParameterPlan(r=r, nu=nu, d=d, p=p, sigma=sigma, eps=eps, s0=s0, eta=eta, N=N,
                         gamma_tilde=gamma_tilde, C=C, T_eps=stability_time(eps), r_window=(lo, hi),
                         deviations=tuple(deviations))
    for message in deviations:
        logger.warning("Planejador: %s", message)
    cfl_report(plan)
    return plan


def manual_plan(r: int, nu: float, d: int = 1, p: int = 1, sigma: float = 1.0,
                N: Optional[int] = None, C: Optional[float] = None) -> ParameterPlan:
    """Plano de bancada com (r, nu) escolhidos diretamente"""
    if r < 2:
        raise ValidationError(f"r deve ser >= 2: {r}")
    if not nu > 0:
        raise ValidationError(f"nu deve ser > 0: {nu}")
    return ParameterPlan(r=r, nu=nu, d=d, p=p, sigma=sigma, N=N, C=C, deviations=('plano manual',))


@dataclass(frozen=True)
class CflConstants:
    """Constantes existenciais substituídas por valores provisórios"""

    G: float = 2.0
    M: float = 1.0
    k_max: int = 64


def cfl_report(plan: ParameterPlan, constants: CflConstants = CflConstants()) -> Dict:
    """Restrições G K eps < rho, 4 C M G K eps < rho e o termo de decaimento do bootstrap"""
    if plan.eps is None or plan.s0 is None:
        return {'evaluated': False}
    lattice = TruncatedLattice(plan.d, constants.k_max)
    k_s0 = sobolev_constant(lattice, plan.s0)
    k_dh = sobolev_constant(lattice, plan.d / 2 + plan.eta)
    C = plan.C or 1.0
    rho = plan.rho
    cfl1 = constants.G * k_s0 * plan.eps
    cfl2 = 4 * C * constants.M * constants.G * k_dh * plan.eps
    big = abs(math.log(plan.eps))
    r_eps = plan.r_window[1]
    log_decay = (2 * r_eps * math.log(C / plan.gamma_tilde * constants.M * constants.G * k_s0)
                 + 2 * r_eps ** 2 * math.log(2 / plan.eta) + 4 * r_eps ** 2 * math.log(r_eps)
                 - big ** 2 / (36 * math.log(big)))
    report = {
        'evaluated': True,
        'K_s0': k_s0,
        'K_d2_eta': k_dh,
        'cfl1_lhs': cfl1,
        'cfl2_lhs': cfl2,
        'rho': rho,
        'cfl1_ok': cfl1 < rho,
        'cfl2_ok': cfl2 < rho,
        'log_decay_term': log_decay,
        'decay_ok': log_decay <= 0,
    }
    for key in ('cfl1_ok', 'cfl2_ok', 'decay_ok'):
        if not report[key]:
            logger.warning("Restrição %s violada com constantes provisórias", key[:-3])
    return report


def cohomological_solve(L: HomPoly, omega: DiagonalQuadratic, nu: float) -> Tuple[HomPoly, HomPoly]:
    """chi = L/Omega onde |Omega| >= nu; o resto é a parte nu-ressonante"""
    if not nu > 0:
        raise ValidationError("nu deve ser > 0")
    chi, res = {}, {}
    for key, c in L.coeffs.items():
        gap = omega.weight_gap(*key)
        if 2.0 * abs(gap) >= nu:
            chi[key] = c / (2j * gap)
        else:
            res[key] = c
    return HomPoly(L.q, chi), HomPoly(L.q, res)


@dataclass
class NormalFormResult:
    plan: ParameterPlan
    Z2: DiagonalQuadratic
    P: HomPoly
    generators: List[Tuple[HomPoly, int]]
    resonant_parts: List[HomPoly]
    discard_ledger: DiscardLedger
    certificates: Dict = field(default_factory=dict)
    flow_cfg: FlowConfig = field(default_factory=FlowConfig)

    def part(self, q: int) -> HomPoly:
        for L in self.resonant_parts:
            if L.q == q:
                return L
        return HomPoly.zero(q)

    def to_dict(self) -> Dict:
        return {
            'plan': self.plan.to_dict(),
            'generators': [{'stage': stage, 'q': chi.q, 'linf': chi.linf, 'coefficients': chi.to_records()}
                           for chi, stage in self.generators],
            'resonant_parts': [{'q': L.q, 'linf': L.linf, 'coefficients': L.to_records()}
                               for L in self.resonant_parts],
            'discard_ledger': self.discard_ledger.to_dict(),
            'certificates': self.certificates,
        }


def resonance_margin(parts: Sequence[HomPoly], omega: DiagonalQuadratic, nu: float) -> float:
    """nu - max |Omega| sobre todos os coeficientes (positivo = certificado)"""
    largest = max((2.0 * abs(omega.weight_gap(*key)) for L in parts for key in L.coeffs), default=0.0)
    return nu - largest


def fitted_size_constant(parts: Sequence[HomPoly], nu: float) -> float:
    """Menor C com ||L^(2q)|| <= C^(2q) (q^2/nu)^(q-2)"""
    values = [(L.linf / (L.q ** 2 / nu) ** (L.q - 2)) ** (1.0 / (2 * L.q)) for L in parts if L.linf > 0]
    return max(values, default=0.0)


def normal_form(Z2: DiagonalQuadratic, P: HomPoly, plan: ParameterPlan,
                cap: int = DEFAULT_COEFF_CAP, flow_cfg: Optional[FlowConfig] = None) -> NormalFormResult:
    r = plan.r
    ledger = DiscardLedger()
    parts: Dict[int, HomPoly] = {}
    if P.q > r:
        ledger.record(P.q, P.q, 0, 1, P.linf)
    else:
        parts[P.q] = P
    generators: List[Tuple[HomPoly, int]] = []
    stages = []
    for stage in range(1, r):
        logger.info("Forma normal: estágio %d/%d", stage, r - 1)
        L = parts.get(stage + 1, HomPoly.zero(stage + 1))
        chi, L_res = cohomological_solve(L, Z2, plan.nu)
        radius = epsilon_chi(chi)
        if plan.C is None and stage == 1 and math.isfinite(radius):
            C = max(1.0, GUARD_FACTOR * math.sqrt(plan.nu) / (r * radius))
            plan = dataclasses.replace(plan, C=C)
            logger.info("Constante C calibrada: %.6g (rho=%.6g)", C, plan.rho)
        if radius < 2 * plan.rho:
            logger.warning("eps_chi=%.3e abaixo do raio guardado 2*rho=%.3e no estágio %d",
                           radius, 2 * plan.rho, stage)
        budget = LieSeriesBudget(degree_cap=2 * r, stage=stage, coeff_cap=cap)
        transformed = lie_transform(list(parts.values()), chi, budget, ledger)
        W = bracket_with_diagonal(chi, Z2)
        corrections = lie_series(W, chi, budget.m_q(W.q), shift=1, cap=cap)
        for q, poly in corrections.items():
            transformed[q] = transformed[q] + poly if q in transformed else poly
        # L + {chi, Z_2} = L_res exatamente
        transformed[stage + 1] = L_res
        parts = transformed
        generators.append((chi, stage))
        stages.append({
            'stage': stage,
            'chi_linf': chi.linf,
            'L_linf': L.linf,
            'chi_bound_ok': chi.linf <= L.linf / plan.nu * (1 + 1e-12),
            'eps_chi': radius if math.isfinite(radius) else None,
            'chi_orbits': len(chi),
        })
    if plan.C is None:
        plan = dataclasses.replace(plan, C=1.0)
    resonant_parts = [parts.get(q, HomPoly.zero(q)) for q in range(2, r + 1)]
    margin = resonance_margin(resonant_parts, Z2, plan.nu)
    certificates = {
        'resonance_margin': margin,
        'resonant': margin > 0,
        'fitted_C': fitted_size_constant(resonant_parts, plan.nu),
        'stages': stages,
    }
    if margin <= 0:
        logger.warning("Certificado de ressonância falhou: margem %.3e", margin)
    return NormalFormResult(plan=plan, Z2=Z2, P=P, generators=generators, resonant_parts=resonant_parts,
                            discard_ledger=ledger, certificates=certificates, flow_cfg=flow_cfg or FlowConfig())


def _guard(result: NormalFormResult, u: FourierState, strict: bool):
    if strict and l1_norm(u) >= result.plan.rho:
        raise FlowEscapeError(f"||u||_l1 = {l1_norm(u):.3e} >= rho = {result.plan.rho:.3e}")


def _compose(result: NormalFormResult, u: FourierState, sequence, t: float) -> Tuple[FourierState, np.ndarray]:
    cfg = result.flow_cfg.at(t)
    total = np.zeros(u.lattice.size, dtype=np.complex128)
    for chi, _ in sequence:
        u, delta = flow_with_displacement(chi, u, cfg)
        total += delta
    return u, total


def apply_tau1(result: NormalFormResult, u: FourierState, strict: bool = True) -> FourierState:
    """Phi_chi1^1 o ... o Phi_chim^1 (último gerador aplicado primeiro)"""
    _guard(result, u, strict)
    return _compose(result, u, reversed(result.generators), 1.0)[0]


def apply_tau0(result: NormalFormResult, u: FourierState, strict: bool = True) -> FourierState:
    """Phi_chim^-1 o ... o Phi_chi1^-1 (primeiro gerador aplicado primeiro)"""
    _guard(result, u, strict)
    return _compose(result, u, result.generators, -1.0)[0]


def _poly_difference(P: HomPoly, u: FourierState, delta: np.ndarray) -> float:
    """P(u + delta) - P(u) por telescopagem, sem cancelar termos de ordem zero em delta"""
    compiled = P.compiled(u.lattice)
    if compiled.coef.size == 0:
        return 0.0
    flat = u.flat
    moved = flat + delta
    columns = [moved[compiled.kidx[:, j]] for j in range(P.q)] + \
              [np.conj(moved[compiled.lidx[:, j]]) for j in range(P.q)]
    base = [flat[compiled.kidx[:, j]] for j in range(P.q)] + \
           [np.conj(flat[compiled.lidx[:, j]]) for j in range(P.q)]
    total = np.zeros(compiled.coef.size, dtype=np.complex128)
    for j in range(2 * P.q):
        term = columns[j] - base[j]
        for i in range(j):
            term = term * columns[i]
        for i in range(j + 1, 2 * P.q):
            term = term * base[i]
        total += term
    return float(np.real(np.sum(compiled.coef * total)))


def residual(result: NormalFormResult, u: FourierState, strict: bool = True) -> float:
    """|H(tau1(u)) - Z_2(u) - sum L(u)| com H = Z_2 + P"""
    _guard(result, u, strict)
    _, delta = _compose(result, u, reversed(result.generators), 1.0)
    weights = result.Z2.weights
    flat = u.flat
    z2_change = float(np.sum(weights * (2.0 * np.real(np.conj(flat) * delta) + np.abs(delta) ** 2)))
    value = z2_change + _poly_difference(result.P, u, delta)
    lowest = result.part(result.P.q)
    value += evaluate(result.P - lowest, u) if result.P.q <= result.plan.r else evaluate(result.P, u)
    for L in result.resonant_parts:
        if L.q != result.P.q:
            value -= evaluate(L, u)
    return abs(value)


def residual_ladder(result: NormalFormResult, v: FourierState, exponents: Sequence[int] = range(6, 11),
                    base: Optional[float] = None) -> Dict:
    """Resíduo em ||u||_l1 = 2^-j base e a inclinação log-log ajustada"""
    base = result.plan.rho if base is None else base
    direction = v.scaled(1.0 / l1_norm(v))
    amplitudes, values = [], []
    for j in exponents:
        a = 2.0 ** (-j) * base
        amplitudes.append(a)
        values.append(residual(result, direction.scaled(a), strict=False))
    positive = [(a, x) for a, x in zip(amplitudes, values) if x > 0]
    slope = None
    if len(positive) >= 2:
        xs = np.log([a for a, _ in positive])
        ys = np.log([x for _, x in positive])
        slope = float(np.polyfit(xs, ys, 1)[0])
    return {'amplitudes': amplitudes, 'residuals': values, 'slope': slope, 'target': 2 * result.plan.r + 2}


def tau_growth(result: NormalFormResult, u: FourierState, s: float) -> Dict[str, float]:
    """Inflação de H^s e l1 por tau0 e tau1"""
    hs0 = hs_norm(u, s)
    l10 = l1_norm(u)
    t0 = apply_tau0(result, u, strict=False)
    t1 = apply_tau1(result, u, strict=False)
    return {
        'hs_tau0': hs_norm(t0, s) / hs0 if hs0 else 1.0,
        'hs_tau1': hs_norm(t1, s) / hs0 if hs0 else 1.0,
        'l1_tau0': l1_norm(t0) / l10 if l10 else 1.0,
        'l1_tau1': l1_norm(t1) / l10 if l10 else 1.0,
    }


def new_variable_rate(result: NormalFormResult, v: FourierState, N: int, s: float) -> float:
    """d/dt N_{N,s}(v) previsto: 1/2 sum_q {N_{N,s}, L^(2q)}(v)"""
    weights = nns_quadratic(v.lattice, s, N)
    total = 0.0
    for L in result.resonant_parts:
        if not L.is_zero():
            # {N, L} = -{L, N}
            total -= evaluate(bracket_with_diagonal(L, weights), v)
    return 0.5 * total
