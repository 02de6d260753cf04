"""Pequenos divisores, condição de remoção por contagem de blocos e constantes empíricas"""
import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.models.errors import ValidationError
from src.services.lattice import Mode, TruncatedLattice, block_index
from src.services.polyalg import (DiagonalQuadratic, Multiset, as_multiset, iter_zero_momentum_orbits,
                                  momentum, norm2)
from src.services.potential import BlockPotential, frequencies

logger = logging.getLogger(__name__)

MC_BATCH = 4096


@dataclass(frozen=True)
class IndexPair:
    """Par (k, l) de listas de q modos com momento nulo, cada lista ordenada"""

    k: Multiset
    l: Multiset

    def __post_init__(self):
        k = as_multiset(self.k)
        l = as_multiset(self.l)
        if len(k) != len(l) or len(k) < 2:
            raise ValidationError("Listas devem ter o mesmo comprimento q >= 2")
        if momentum(k) != momentum(l):
            raise ValidationError(f"Condição de momento nulo violada: {k} / {l}")
        object.__setattr__(self, 'k', k)
        object.__setattr__(self, 'l', l)

    @classmethod
    def of(cls, k: Iterable, l: Iterable) -> 'IndexPair':
        return cls(as_multiset(k), as_multiset(l))

    @property
    def q(self) -> int:
        return len(self.k)

    def swapped(self) -> 'IndexPair':
        return IndexPair(self.l, self.k)

    def norms2(self) -> List[int]:
        return sorted((norm2(m) for m in self.k + self.l), reverse=True)


@dataclass
class SmallDivisorRecord:
    pair: IndexPair
    omega_gap: float
    removal: bool
    contribution: float = math.inf

    def to_row(self) -> Dict:
        return {
            'q': self.pair.q,
            'k': ' '.join(','.join(str(c) for c in m) for m in self.pair.k),
            'l': ' '.join(','.join(str(c) for c in m) for m in self.pair.l),
            'removal': int(self.removal),
            'abs_omega': repr(2.0 * self.omega_gap),
            'gamma_contribution': repr(self.contribution),
        }


def _check_box(pair: IndexPair, lattice: TruncatedLattice):
    for m in pair.k + pair.l:
        if not lattice.contains(m):
            raise ValidationError(f"Modo fora da caixa: {m}")


def signed_gap(pair: IndexPair, omega: DiagonalQuadratic) -> float:
    """sum omega_k - sum omega_l (Omega = 2i vezes este valor)"""
    return omega.weight_gap(pair.k, pair.l)


def small_divisor(pair: IndexPair, omega: DiagonalQuadratic) -> float:
    _check_box(pair, omega.lattice)
    return 2.0 * abs(signed_gap(pair, omega))


def block_count_difference(K: Sequence[Mode], L: Sequence[Mode]) -> Counter:
    counts = Counter(block_index(k) for k in K)
    counts.subtract(block_index(l) for l in L)
    return counts


def satisfies_removal(pair: IndexPair, lattice: TruncatedLattice) -> bool:
    _check_box(pair, lattice)
    return any(block_count_difference(pair.k, pair.l).values())


def mu(pair: IndexPair, j: int) -> float:
    """j-ésimo maior entre |k_1|, ..., |l_q|"""
    if not 1 <= j <= 2 * pair.q:
        raise ValidationError(f"j fora de [1, {2 * pair.q}]: {j}")
    return math.sqrt(pair.norms2()[j - 1])


def iter_pairs(lattice: TruncatedLattice, q_max: int, q_min: int = 2) -> Iterator[IndexPair]:
    if q_max < 2:
        raise ValidationError(f"q_max deve ser >= 2: {q_max}")
    for q in range(max(2, q_min), q_max + 1):
        for K, L in iter_zero_momentum_orbits(lattice, q):
            yield IndexPair(K, L)


def gamma_contribution(pair: IndexPair, abs_omega: float) -> float:
    """|Omega| q^4 (log2 mu_1)^(2q+1); +inf quando mu_1 < 2"""
    top = pair.norms2()[0]
    if top < 4:
        return math.inf
    q = pair.q
    return abs_omega * q ** 4 * (0.5 * math.log2(top)) ** (2 * q + 1)


def scan(V: BlockPotential, lattice: TruncatedLattice, q_max: int) -> List[SmallDivisorRecord]:
    """Varredura exaustiva de todos os pares de momento nulo até q_max"""
    omega = frequencies(V, lattice)
    records = []
    for pair in iter_pairs(lattice, q_max):
        removal = any(block_count_difference(pair.k, pair.l).values())
        abs_omega = 2.0 * abs(omega.weight_gap(pair.k, pair.l))
        contribution = gamma_contribution(pair, abs_omega) if removal else math.inf
        records.append(SmallDivisorRecord(pair, abs_omega / 2.0, removal, contribution))
    logger.info("Varredura de pequenos divisores: %d pares (q <= %d, K_max=%d)",
                len(records), q_max, lattice.k_max)
    return records


def gamma_from_records(records: Iterable[SmallDivisorRecord]) -> float:
    return min((r.contribution for r in records if r.removal), default=math.inf)


def gamma_empirical(V: BlockPotential, lattice: TruncatedLattice, q_max: int) -> float:
    return gamma_from_records(scan(V, lattice, q_max))


def gamma_polynomial_empirical(V: BlockPotential, lattice: TruncatedLattice, q_max: int,
                               alpha: float = 1.0) -> float:
    """min |Omega| (max <k>)^(alpha q) sobre os pares de remoção (perda polinomial clássica)"""
    omega = frequencies(V, lattice)
    best = math.inf
    for pair in iter_pairs(lattice, q_max):
        if not any(block_count_difference(pair.k, pair.l).values()):
            continue
        bracket = math.sqrt(1.0 + pair.norms2()[0])
        value = 2.0 * abs(omega.weight_gap(pair.k, pair.l)) * bracket ** (alpha * pair.q)
        best = min(best, value)
    return best


def outza_nu(gamma: float, q: int, N: int) -> float:
    """Limiar nu = gamma q^-4 (log2(2qN))^-(2q+1)"""
    return gamma * q ** (-4) * math.log2(2 * q * N) ** (-(2 * q + 1))


def outza_check(V: BlockPotential, lattice: TruncatedLattice, q: int, N: int,
                nu: float) -> List[SmallDivisorRecord]:
    """Pares de remoção com |Omega| < nu e mu_2 < N (deveria ser vazio)"""
    omega = frequencies(V, lattice)
    violations = []
    for K, L in iter_zero_momentum_orbits(lattice, q):
        if not any(block_count_difference(K, L).values()):
            continue
        gap = abs(omega.weight_gap(K, L))
        pair = IndexPair(K, L)
        if 2.0 * gap < nu and pair.norms2()[1] < int(N) ** 2:
            violations.append(SmallDivisorRecord(pair, gap, True))
    if violations:
        logger.warning("Verificação de mu_2: %d violações (q=%d, N=%d)", len(violations), q, N)
    return violations


def removal_block_vectors(q: int, n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """Vetores distintos de diferença de contagens c != 0 e o maior rho associado"""
    blocks = range(n_max + 1)
    combos = list(itertools.combinations_with_replacement(blocks, q))
    best: Dict[Tuple[int, ...], float] = {}
    for K in combos:
        for L in combos:
            counts = np.zeros(n_max + 1, dtype=np.int64)
            for n in K:
                counts[n] += 1
            for n in L:
                counts[n] -= 1
            if not counts.any():
                continue
            top = int(np.flatnonzero(counts).max())
            rho = q ** (-4) * float(top) ** (-(2 * q + 1))
            key = tuple(int(c) for c in counts)
            best[key] = max(best.get(key, 0.0), rho)
    keys = sorted(best)
    return np.array(keys, dtype=np.float64).reshape(-1, n_max + 1), np.array([best[k] for k in keys])


def mc_event_probability(gamma: float, q: int, n_max: int, trials: int, seed: int = 0,
                         d: int = 1, batch: int = MC_BATCH) -> float:
    """Fração de potenciais amostrados em que algum par de remoção viola gamma*rho"""
    if gamma <= 0:
        raise ValidationError("gamma deve ser > 0")
    if trials < 1:
        raise ValidationError("trials deve ser >= 1")
    if n_max < 1:
        return 0.0
    vectors, rho = removal_block_vectors(q, n_max)
    scale = (2 * math.pi) ** (-d / 2)
    threshold = gamma * rho
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    hits = 0
    remaining = trials
    while remaining > 0:
        size = min(batch, remaining)
        X = rng.random((size, n_max + 1))
        f = scale * X @ vectors.T
        nearest = np.clip(np.rint(f), -q, q)
        events = np.any(2.0 * np.abs(f - nearest) <= threshold, axis=1)
        hits += int(np.count_nonzero(events))
        remaining -= size
    probability = hits / trials
    logger.info("Monte Carlo: gamma=%g q=%d n_max=%d trials=%d -> %g", gamma, q, n_max, trials, probability)
    return probability


def mc_linear_scaling(gammas: Sequence[float], q: int, n_max: int, trials: int, seed: int = 0,
                      d: int = 1) -> Dict:
    """Estimativas P(E_gamma) e a constante C = max P/gamma"""
    estimates = [mc_event_probability(g, q, n_max, trials, seed=seed, d=d) for g in gammas]
    ratios = [p / g for p, g in zip(estimates, gammas)]
    return {
        'q': q,
        'n_max': n_max,
        'trials': trials,
        'gammas': list(gammas),
        'estimates': estimates,
        'ratios': ratios,
        'C': max(ratios) if ratios else 0.0,
    }


def random_zero_momentum_pair(lattice: TruncatedLattice, q: int, rng: np.random.Generator,
                              max_tries: int = 10000) -> Optional[IndexPair]:
    """Sorteia k livremente e completa l com o modo que fecha o momento, se couber na caixa"""
    for _ in range(max_tries):
        k = [tuple(int(c) for c in rng.integers(-lattice.k_max, lattice.k_max + 1, size=lattice.d))
             for _ in range(q)]
        l = [tuple(int(c) for c in rng.integers(-lattice.k_max, lattice.k_max + 1, size=lattice.d))
             for _ in range(q - 1)]
        last = tuple(a - b for a, b in zip(momentum(k), momentum(l)))
        if lattice.contains(last):
            return IndexPair.of(k, l + [last])
    return None
