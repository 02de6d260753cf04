"""Suítes de propriedades executadas pelo comando verify"""
import contextlib
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from src.models.errors import ValidationError
from src.services import lattice as lat
from src.services import polyalg
from src.services.birkhoff import cohomological_solve
from src.services.lieflow import FlowConfig, epsilon_chi, flow
from src.services.potential import BlockPotential, frequencies, sample_potential
from src.services.resonance import gamma_empirical, iter_pairs, outza_nu, satisfies_removal, small_divisor
from src.services.simulator import SimConfig, hamiltonian_quadrature, hamiltonian_spectral, simulate

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    worst: float = 0.0
    detail: str = ''

    def to_dict(self) -> Dict:
        return {'suite': self.suite, 'name': self.name, 'passed': self.passed,
                'worst': self.worst, 'detail': self.detail}


def _flipped_bracket(original: Callable) -> Callable:
    def bracket(P, Q, cap=polyalg.DEFAULT_COEFF_CAP):
        return original(P, Q, cap=cap).scale(-1.0)
    return bracket


def _drifted_bracket(original: Callable) -> Callable:
    def bracket(P, Q, cap=polyalg.DEFAULT_COEFF_CAP):
        return original(P, Q, cap=cap).scale(1.0 + 1e-9)
    return bracket


FAULTS = {
    'bracket_sign': ('poisson_bracket', _flipped_bracket),
    'bracket_drift': ('poisson_bracket', _drifted_bracket),
}


@contextlib.contextmanager
def inject_fault(name: Optional[str]) -> Iterator[None]:
    """Substitui temporariamente uma operação por uma versão defeituosa"""
    if name is None:
        yield
        return
    if name not in FAULTS:
        raise ValidationError(f"Falha desconhecida para injeção: {name}")
    attribute, wrap = FAULTS[name]
    original = getattr(polyalg, attribute)
    setattr(polyalg, attribute, wrap(original))
    logger.warning("Falha injetada: %s", name)
    try:
        yield
    finally:
        setattr(polyalg, attribute, original)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _unit_state(lattice: lat.TruncatedLattice, rng: np.random.Generator, l1: float = 1.0) -> lat.FourierState:
    return lat.random_state(lattice, rng, amplitude=l1, norm='l1')


def lattice_suite(examples: int, rng: np.random.Generator) -> List[CheckResult]:
    box = lat.TruncatedLattice(2, 5)
    worst_sum, worst_eq = 0.0, 0.0
    for _ in range(examples):
        u = lat.random_state(box, rng, decay=1.0)
        worst_sum = max(worst_sum, _relative(float(np.sum(lat.super_actions(u))), lat.mass(u)))
        for s in (0.0, 0.5, 1.0, 2.0):
            hs2 = lat.hs_norm(u, s) ** 2
            ns = lat.ns_observable(u, s)
            excess = max(2.0 ** (-2 * s) * hs2 - ns, ns - hs2, 0.0) / hs2
            worst_eq = max(worst_eq, excess)
    return [
        CheckResult('lattice', 'super_actions_sum_to_mass', worst_sum <= 1e-12, worst_sum),
        CheckResult('lattice', 'ns_equivalence', worst_eq <= 1e-12, worst_eq),
    ]


def polyalg_suite(examples: int, rng: np.random.Generator) -> List[CheckResult]:
    box = lat.TruncatedLattice(1, 2)
    worst_oracle, worst_bound, worst_anti, worst_grad, worst_tame = 0.0, 0.0, 0.0, 0.0, 0.0
    for i in range(examples):
        q1, q2 = 2 + i % 2, 2 + (i // 2) % 2
        P = polyalg.random_poly(box, q1, rng)
        Q = polyalg.random_poly(box, q2, rng)
        S = polyalg.poisson_bracket(P, Q)
        worst_bound = max(worst_bound, S.linf / (4 * q1 * q2 * P.linf * Q.linf))
        R = polyalg.poisson_bracket(Q, P)
        worst_anti = max(worst_anti, (S + R).linf / max(S.linf, 1e-300))
        for _ in range(5):
            u = _unit_state(box, rng)
            value = polyalg.evaluate(S, u)
            oracle = polyalg.poisson_oracle(P, Q, u)
            # |{P,Q}(u)| <= ||grad P|| ||grad Q||; essa escala só serve de piso
            grads = np.linalg.norm(polyalg.gradient(P, u).flat) * np.linalg.norm(polyalg.gradient(Q, u).flat)
            scale = max(abs(value), abs(oracle), 1e-4 * grads, 1e-300)
            worst_oracle = max(worst_oracle, abs(value - oracle) / scale)
        ratios = polyalg.tame_bound_ratio(P, lat.random_state(box, rng, decay=1.0), s=1.5)
        worst_tame = max(worst_tame, ratios['l1'], ratios['hs'])
        u = _unit_state(box, rng)
        grad = polyalg.gradient(P, u).flat
        h = 1e-6
        for index in range(box.size):
            for unit in (1.0, 1j):
                e = np.zeros(box.size, dtype=np.complex128)
                e[index] = unit
                plus = polyalg.evaluate(P, lat.FourierState.from_flat(box, u.flat + h * e))
                minus = polyalg.evaluate(P, lat.FourierState.from_flat(box, u.flat - h * e))
                numeric = (plus - minus) / (2 * h)
                exact = float(np.real(grad[index] * np.conj(unit)))
                worst_grad = max(worst_grad, abs(numeric - exact) / max(np.abs(grad).max(), 1e-300))
    return [
        CheckResult('polyalg', 'bracket_oracle', worst_oracle <= 1e-10, worst_oracle),
        CheckResult('polyalg', 'bracket_bound', worst_bound <= 1.0, worst_bound),
        CheckResult('polyalg', 'antisymmetry', worst_anti <= 1e-14, worst_anti),
        CheckResult('polyalg', 'gradient_finite_differences', worst_grad <= 1e-6, worst_grad),
        CheckResult('polyalg', 'tame_bound', worst_tame <= 1.0, worst_tame),
    ]


def lieflow_suite(examples: int, rng: np.random.Generator) -> List[CheckResult]:
    box = lat.TruncatedLattice(1, 2)
    cfg = FlowConfig(dt=1e-3, t_final=1.0)
    back = cfg.at(-1.0)
    worst_rev, worst_cons, worst_close = 0.0, 0.0, 0.0
    for _ in range(max(1, examples // 4)):
        chi = polyalg.random_poly(box, 2, rng)
        radius = epsilon_chi(chi)
        u = _unit_state(box, rng, l1=radius / 2)
        v = flow(chi, u, cfg)
        worst_rev = max(worst_rev, lat.l1_norm(lat.FourierState.from_flat(box, flow(chi, v, back).flat - u.flat)))
        c0 = polyalg.evaluate(chi, u)
        worst_cons = max(worst_cons, abs(polyalg.evaluate(chi, v) - c0) / (1 + abs(c0)))
        size = lat.l1_norm(u)
        bound = (size / radius) ** 2 * size
        moved = lat.l1_norm(lat.FourierState.from_flat(box, v.flat - u.flat))
        worst_close = max(worst_close, moved - bound)
    return [
        CheckResult('lieflow', 'reversibility', worst_rev <= 1e-8, worst_rev),
        CheckResult('lieflow', 'conservation', worst_cons <= 1e-9, worst_cons),
        CheckResult('lieflow', 'closeness', worst_close <= 1e-6, worst_close),
    ]


def birkhoff_suite(examples: int, rng: np.random.Generator) -> List[CheckResult]:
    box = lat.TruncatedLattice(1, 3)
    omega = frequencies(sample_potential(int(rng.integers(2 ** 32)), box.n_max), box)
    worst = 0.0
    for i in range(examples):
        L = polyalg.random_poly(box, 2, rng)
        nu = 10.0 ** (-(i % 4))
        chi, L_res = cohomological_solve(L, omega, nu)
        lhs = polyalg.bracket_with_diagonal(chi, omega) + L
        worst = max(worst, lhs.max_abs_diff(L_res))
    # parte ressonante com mu_2 < N comuta com N_{N,s} quando nu respeita o limiar de mu_2
    wide = lat.TruncatedLattice(1, 6)
    V = sample_potential(int(rng.integers(2 ** 32)), wide.n_max)
    wide_omega = frequencies(V, wide)
    gamma = gamma_empirical(V, wide, 2)
    leftover = 0
    for N in (2, 4):
        _, L_res = cohomological_solve(polyalg.random_poly(wide, 2, rng), wide_omega, outza_nu(gamma, 2, N))
        low, _ = polyalg.mu2_split(L_res, N)
        leftover += len(polyalg.bracket_with_diagonal(low, polyalg.nns_quadratic(wide, 1.0, N)))
    return [
        CheckResult('birkhoff', 'cohomological_identity', worst <= 1e-12, worst),
        CheckResult('birkhoff', 'low_part_commutes', leftover == 0, float(leftover)),
    ]


def resonance_suite(examples: int, rng: np.random.Generator) -> List[CheckResult]:
    box = lat.TruncatedLattice(1, 8)
    flat = frequencies(BlockPotential.zero(box.n_max), box)
    worst, gammas = 0.0, []
    for _ in range(max(1, examples // 5)):
        V = sample_potential(int(rng.integers(2 ** 32)), box.n_max)
        omega = frequencies(V, box)
        for pair in iter_pairs(box, 2):
            if not satisfies_removal(pair, box):
                worst = max(worst, abs(small_divisor(pair, omega) - small_divisor(pair, flat)))
        gammas.append(gamma_empirical(V, box, 2))
    positive = all(g > 0 for g in gammas)
    return [
        CheckResult('resonance', 'block_cancellation', worst == 0.0, worst),
        CheckResult('resonance', 'gamma_positive', positive, min(gammas), f'gammas={gammas}'),
    ]


def simulator_suite(examples: int, rng: np.random.Generator) -> List[CheckResult]:
    box = lat.TruncatedLattice(1, 4)
    V = sample_potential(int(rng.integers(2 ** 32)), box.n_max)
    cfg = SimConfig(lattice=box, potential=V, dt=1e-3, t_final=0.1, record_every=10)
    worst_mass, worst_ham = 0.0, 0.0
    for _ in range(max(1, examples // 5)):
        u0 = lat.random_state(box, rng, amplitude=0.1, norm='h1', decay=1.0)
        record = simulate(u0, cfg)
        mass = np.array(record.mass)
        worst_mass = max(worst_mass, float(np.max(np.abs(mass - mass[0])) / mass[0]) / cfg.t_final)
        worst_ham = max(worst_ham, _relative(hamiltonian_quadrature(u0, cfg), hamiltonian_spectral(u0, cfg)))
    return [
        CheckResult('simulator', 'mass_conservation', worst_mass <= 1e-10, worst_mass),
        CheckResult('simulator', 'hamiltonian_routes_agree', worst_ham <= 1e-8, worst_ham),
    ]


SUITES = {
    'lattice': lattice_suite,
    'polyalg': polyalg_suite,
    'lieflow': lieflow_suite,
    'birkhoff': birkhoff_suite,
    'resonance': resonance_suite,
    'simulator': simulator_suite,
}


def run_suites(examples: int = 10, seed: int = 0, inject: Optional[str] = None,
               suites: Sequence[str] = ()) -> List[CheckResult]:
    selected = list(suites) or list(SUITES)
    unknown = [name for name in selected if name not in SUITES]
    if unknown:
        raise ValidationError(f"Suítes desconhecidas: {', '.join(unknown)}")
    results: List[CheckResult] = []
    with inject_fault(inject):
        for name in selected:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(len(results),))))
            logger.info("Suíte %s", name)
            results.extend(SUITES[name](examples, rng))
    for result in results:
        if not result.passed:
            logger.error("Propriedade falhou: %s.%s (pior=%.3e)", result.suite, result.name, result.worst)
    return results
