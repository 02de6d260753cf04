"""Classe H_2q de polinômios homogêneos reais, simétricos e com momento nulo.

Armazenamento por órbita: um coeficiente por órbita S_q x S_q x conjugação, com
representante canônico (listas ordenadas, lado lexicograficamente menor primeiro).
Com isso realidade e simetria viram invariantes estruturais.

Convenção: P(u) = sum_{k,l ordenados} P_{k,l} u_k1..u_kq conj(u_l1)..conj(u_lq),
(grad P)_k = 2 d P / d conj(u_k) e {P,Q}(u) = (i grad P, grad Q)_{L2}.
"""
import itertools
import logging
import math
from collections import defaultdict
from types import MappingProxyType
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from src.models.errors import BudgetExceededError, ValidationError
from src.services.lattice import (FourierState, Mode, TruncatedLattice, hs_norm, is_power_of_two,
                                  l1_norm, l1_weighted, nns_weights)

logger = logging.getLogger(__name__)

Multiset = Tuple[Mode, ...]
OrbitKey = Tuple[Multiset, Multiset]

DEFAULT_COEFF_CAP = 10 ** 7
CONSISTENCY_TOL = 1e-12


def _as_mode(k) -> Mode:
    if isinstance(k, (int, np.integer)):
        return (int(k),)
    return tuple(int(c) for c in k)


def as_multiset(modes: Iterable) -> Multiset:
    return tuple(sorted(_as_mode(k) for k in modes))


def momentum(modes: Sequence[Mode]) -> Mode:
    if not modes:
        return ()
    return tuple(int(sum(c)) for c in zip(*modes))


def multiplicity(multiset: Multiset) -> int:
    """Número de ordenações distintas do multiconjunto"""
    count = math.factorial(len(multiset))
    for _, group in itertools.groupby(multiset):
        count //= math.factorial(len(list(group)))
    return count


def canonical_key(k_list: Iterable, l_list: Iterable) -> Tuple[OrbitKey, bool]:
    """Retorna a chave canônica e se o coeficiente deve ser conjugado"""
    K = as_multiset(k_list)
    L = as_multiset(l_list)
    if K <= L:
        return (K, L), False
    return (L, K), True


def _remove_one(multiset: Multiset, mode: Mode) -> Multiset:
    index = multiset.index(mode)
    return multiset[:index] + multiset[index + 1:]


def _merge(a: Multiset, b: Multiset) -> Multiset:
    return tuple(sorted(a + b))


def norm2(mode: Mode) -> int:
    return sum(c * c for c in mode)


class _CompiledPoly:
    """Forma expandida por monômios, indexada na caixa, para avaliação vetorizada"""

    def __init__(self, kidx: np.ndarray, lidx: np.ndarray, coef: np.ndarray):
        self.kidx = kidx
        self.lidx = lidx
        self.coef = coef

    def _factors(self, flat: np.ndarray):
        uk = flat[self.kidx]
        ul = np.conj(flat[self.lidx])
        return uk, ul

    def evaluate(self, flat: np.ndarray) -> float:
        if self.coef.size == 0:
            return 0.0
        uk, ul = self._factors(flat)
        return float(np.real(np.sum(self.coef * np.prod(uk, axis=1) * np.prod(ul, axis=1))))

    def gradient(self, flat: np.ndarray) -> np.ndarray:
        grad = np.zeros(flat.size, dtype=np.complex128)
        if self.coef.size == 0:
            return grad
        uk, ul = self._factors(flat)
        head = self.coef * np.prod(uk, axis=1)
        for j in range(ul.shape[1]):
            others = np.prod(np.delete(ul, j, axis=1), axis=1)
            np.add.at(grad, self.lidx[:, j], head * others)
        return 2.0 * grad

    def gradient_derivative(self, flat: np.ndarray, direction: np.ndarray) -> np.ndarray:
        """d(grad P)(u)(w), derivada real de u -> grad P(u) na direção w"""
        out = np.zeros(flat.size, dtype=np.complex128)
        if self.coef.size == 0:
            return out
        uk, ul = self._factors(flat)
        wk = direction[self.kidx]
        wl = np.conj(direction[self.lidx])
        q = uk.shape[1]
        pk = np.prod(uk, axis=1)
        dpk = np.zeros_like(pk)
        for a in range(q):
            dpk += wk[:, a] * np.prod(np.delete(uk, a, axis=1), axis=1)
        for j in range(q):
            rest = np.delete(ul, j, axis=1)
            wrest = np.delete(wl, j, axis=1)
            others = np.prod(rest, axis=1)
            dothers = np.zeros_like(others)
            for b in range(q - 1):
                dothers += wrest[:, b] * np.prod(np.delete(rest, b, axis=1), axis=1)
            np.add.at(out, self.lidx[:, j], self.coef * (dpk * others + pk * dothers))
        return 2.0 * out


class HomPoly:
    """Polinômio homogêneo de grau 2q em H_2q, imutável após a construção"""

    __slots__ = ('q', '_coeffs', 'linf', '_compiled')

    def __init__(self, q: int, coeffs: Mapping[OrbitKey, complex]):
        if q < 2:
            raise ValidationError(f"q deve ser >= 2: {q}")
        self.q = int(q)
        cleaned = {key: complex(value) for key, value in coeffs.items() if value != 0}
        self._coeffs = MappingProxyType(cleaned)
        self.linf = max((abs(c) for c in cleaned.values()), default=0.0)
        self._compiled: Dict[TruncatedLattice, _CompiledPoly] = {}

    @classmethod
    def zero(cls, q: int) -> 'HomPoly':
        return cls(q, {})

    @property
    def coeffs(self) -> Mapping[OrbitKey, complex]:
        return self._coeffs

    @property
    def degree(self) -> int:
        return 2 * self.q

    def __len__(self) -> int:
        return len(self._coeffs)

    def is_zero(self) -> bool:
        return not self._coeffs

    def __repr__(self) -> str:
        return f'<HomPoly deg={self.degree} orbits={len(self)} linf={self.linf:.3e}>'

    def coefficient(self, k_list: Iterable, l_list: Iterable) -> complex:
        key, conjugated = canonical_key(k_list, l_list)
        value = self._coeffs.get(key, 0j)
        return value.conjugate() if conjugated else value

    def monomials(self) -> Iterator[Tuple[Multiset, Multiset, complex]]:
        """Monômios u^K conj(u)^L com coeficiente já multiplicado pelas ordenações"""
        for (K, L), c in self._coeffs.items():
            weight = multiplicity(K) * multiplicity(L)
            yield K, L, c * weight
            if K != L:
                yield L, K, c.conjugate() * weight

    def modes(self) -> List[Mode]:
        found = set()
        for K, L in self._coeffs:
            found.update(K)
            found.update(L)
        return sorted(found)

    def filter(self, predicate: Callable[[OrbitKey, complex], bool]) -> 'HomPoly':
        return HomPoly(self.q, {key: c for key, c in self._coeffs.items() if predicate(key, c)})

    def _check_compatible(self, other: 'HomPoly'):
        if self.q != other.q:
            raise ValidationError(f"Graus incompatíveis: {self.degree} e {other.degree}")

    def __add__(self, other: 'HomPoly') -> 'HomPoly':
        self._check_compatible(other)
        merged = dict(self._coeffs)
        for key, c in other._coeffs.items():
            merged[key] = merged.get(key, 0j) + c
        return HomPoly(self.q, merged)

    def __neg__(self) -> 'HomPoly':
        return self.scale(-1.0)

    def __sub__(self, other: 'HomPoly') -> 'HomPoly':
        return self + (-other)

    def scale(self, factor: float) -> 'HomPoly':
        if isinstance(factor, complex) and factor.imag != 0:
            raise ValidationError("Fator complexo quebraria a condição de realidade")
        factor = float(np.real(factor))
        return HomPoly(self.q, {key: c * factor for key, c in self._coeffs.items()})

    def __mul__(self, factor: float) -> 'HomPoly':
        return self.scale(factor)

    __rmul__ = __mul__

    def max_abs_diff(self, other: 'HomPoly') -> float:
        self._check_compatible(other)
        keys = set(self._coeffs) | set(other._coeffs)
        return max((abs(self._coeffs.get(k, 0j) - other._coeffs.get(k, 0j)) for k in keys), default=0.0)

    def compiled(self, lattice: TruncatedLattice) -> _CompiledPoly:
        cached = self._compiled.get(lattice)
        if cached is not None:
            return cached
        index = {mode: i for i, mode in enumerate(lattice.iter_modes())}
        kidx, lidx, coef = [], [], []
        for K, L, c in self.monomials():
            try:
                kidx.append([index[m] for m in K])
                lidx.append([index[m] for m in L])
            except KeyError as exc:
                raise ValidationError(f"Modo fora da caixa: {exc.args[0]}")
            coef.append(c)
        compiled = _CompiledPoly(
            np.array(kidx, dtype=np.int64).reshape(-1, self.q),
            np.array(lidx, dtype=np.int64).reshape(-1, self.q),
            np.array(coef, dtype=np.complex128),
        )
        self._compiled[lattice] = compiled
        return compiled

    def to_records(self) -> List[Dict]:
        return [
            {'q': self.q, 'k': [list(m) for m in K], 'l': [list(m) for m in L], 're': c.real, 'im': c.imag}
            for (K, L), c in sorted(self._coeffs.items())
        ]


def make_poly(q: int, raw_coeffs: Iterable[Tuple[Tuple[Iterable, Iterable], complex]],
              cap: int = DEFAULT_COEFF_CAP) -> HomPoly:
    """Canoniza entradas ((k, l), c), valida momento e consistência das duplicatas"""
    if q < 2:
        raise ValidationError(f"q deve ser >= 2: {q}")
    coeffs: Dict[OrbitKey, complex] = {}
    dimension = None
    for (k_list, l_list), value in raw_coeffs:
        k_modes = [_as_mode(k) for k in k_list]
        l_modes = [_as_mode(l) for l in l_list]
        if len(k_modes) != q or len(l_modes) != q:
            raise ValidationError(f"Listas devem ter comprimento {q}")
        dims = {len(m) for m in k_modes + l_modes}
        if dimension is not None:
            dims.add(dimension)
        if len(dims) != 1:
            raise ValidationError("Modos com dimensões diferentes")
        dimension = dims.pop()
        if momentum(k_modes) != momentum(l_modes):
            raise ValidationError(f"Condição de momento nulo violada: {k_modes} / {l_modes}")
        key, conjugated = canonical_key(k_modes, l_modes)
        value = complex(value)
        if conjugated:
            value = value.conjugate()
        scale = max(1.0, abs(value))
        if key[0] == key[1] and abs(value.imag) > CONSISTENCY_TOL * scale:
            raise ValidationError(f"Coeficiente autoconjugado não real em {key}")
        if key[0] == key[1]:
            value = complex(value.real, 0.0)
        if key in coeffs:
            if abs(coeffs[key] - value) > CONSISTENCY_TOL * scale:
                raise ValidationError(f"Duplicatas simétricas inconsistentes em {key}")
            continue
        coeffs[key] = value
        if len(coeffs) > cap:
            raise BudgetExceededError(len(coeffs), cap)
    return HomPoly(q, coeffs)


def iter_zero_momentum_orbits(lattice: TruncatedLattice, q: int) -> Iterator[OrbitKey]:
    """Todas as órbitas canônicas (K <= L) de momento nulo com modos na caixa"""
    groups: Dict[Mode, List[Multiset]] = defaultdict(list)
    for combo in itertools.combinations_with_replacement(sorted(lattice.iter_modes()), q):
        groups[momentum(combo)].append(combo)
    for members in groups.values():
        for i, K in enumerate(members):
            for L in members[i:]:
                yield K, L


def count_zero_momentum_orbits(lattice: TruncatedLattice, q: int) -> int:
    sizes: Dict[Mode, int] = defaultdict(int)
    for combo in itertools.combinations_with_replacement(sorted(lattice.iter_modes()), q):
        sizes[momentum(combo)] += 1
    return sum(n * (n + 1) // 2 for n in sizes.values())


def nls_nonlinearity(lattice: TruncatedLattice, p: int, sigma: float = 1.0,
                     cap: int = DEFAULT_COEFF_CAP) -> HomPoly:
    """P(u) = sigma/(p+1) int |u|^(2p+2) truncado na caixa"""
    if p < 1:
        raise ValidationError(f"p deve ser >= 1: {p}")
    q = p + 1
    total = count_zero_momentum_orbits(lattice, q)
    if total > cap:
        raise BudgetExceededError(total, cap)
    value = sigma * (2 * math.pi) ** (-p * lattice.d) / (p + 1)
    logger.info("Não linearidade NLS: grau %d, %d órbitas", 2 * q, total)
    return HomPoly(q, {key: complex(value) for key in iter_zero_momentum_orbits(lattice, q)})


def evaluate(P: HomPoly, u: FourierState) -> float:
    return P.compiled(u.lattice).evaluate(u.flat)


def gradient(P: HomPoly, u: FourierState) -> FourierState:
    return FourierState.from_flat(u.lattice, P.compiled(u.lattice).gradient(u.flat))


def gradient_derivative(P: HomPoly, u: FourierState, w: FourierState) -> FourierState:
    flat = P.compiled(u.lattice).gradient_derivative(u.flat, w.flat)
    return FourierState.from_flat(u.lattice, flat)


def poisson_oracle(P: HomPoly, Q: HomPoly, u: FourierState) -> float:
    """{P,Q}(u) = (i grad P(u), grad Q(u))_{L2}"""
    gp = gradient(P, u)
    gq = gradient(Q, u)
    return float(np.real(np.vdot(gq.flat, 1j * gp.flat)))


def _index_by_mode(P: HomPoly, side: int) -> Dict[Mode, List[Tuple[Multiset, Multiset, complex]]]:
    table: Dict[Mode, List[Tuple[Multiset, Multiset, complex]]] = defaultdict(list)
    for K, L, c in P.monomials():
        for mode in set((K, L)[side]):
            table[mode].append((K, L, c))
    return table


def _from_monomials(q: int, contributions: Dict[Tuple[Multiset, Multiset], List[complex]]) -> HomPoly:
    coeffs: Dict[OrbitKey, complex] = {}
    for (K, L), terms in contributions.items():
        if K > L:
            continue
        # fsum: multiconjuntos de termos opostos somam exatamente zero
        value = complex(math.fsum(t.real for t in terms), math.fsum(t.imag for t in terms))
        if value == 0:
            continue
        value /= multiplicity(K) * multiplicity(L)
        if K == L:
            value = complex(value.real, 0.0)
        coeffs[(K, L)] = value
    return HomPoly(q, coeffs)


def poisson_bracket(P: HomPoly, Q: HomPoly, cap: int = DEFAULT_COEFF_CAP) -> HomPoly:
    """S em H_{2(q+q'-1)} com S(u) = {P,Q}(u), truncado de Galerkin na caixa"""
    q_out = P.q + Q.q - 1
    contributions: Dict[Tuple[Multiset, Multiset], List[complex]] = defaultdict(list)
    if P.is_zero() or Q.is_zero():
        return HomPoly.zero(q_out)
    q_by_k = _index_by_mode(Q, 0)
    q_by_l = _index_by_mode(Q, 1)
    for K1, L1, c1 in P.monomials():
        # 2i d/dconj(u_m) P * d/du_m Q
        for m in set(L1):
            a = L1.count(m)
            L1r = _remove_one(L1, m)
            for K2, L2, c2 in q_by_k.get(m, ()):
                b = K2.count(m)
                key = (_merge(K1, _remove_one(K2, m)), _merge(L1r, L2))
                contributions[key].append(2j * ((a * b) * (c1 * c2)))
        # -2i d/du_m P * d/dconj(u_m) Q
        for m in set(K1):
            a = K1.count(m)
            K1r = _remove_one(K1, m)
            for K2, L2, c2 in q_by_l.get(m, ()):
                b = L2.count(m)
                key = (_merge(K1r, K2), _merge(L1, _remove_one(L2, m)))
                contributions[key].append(-2j * ((a * b) * (c1 * c2)))
        if len(contributions) > 2 * cap:
            raise BudgetExceededError(len(contributions) // 2, cap)
    result = _from_monomials(q_out, contributions)
    if len(result) > cap:
        raise BudgetExceededError(len(result), cap)
    return result


class DiagonalQuadratic:
    """Z(u) = sum_k g_k |u_k|^2 com pesos reais na caixa"""

    def __init__(self, lattice: TruncatedLattice, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if weights.size != lattice.size:
            raise ValidationError("Pesos devem cobrir a caixa inteira")
        if not np.all(np.isfinite(weights)):
            raise ValidationError("Pesos não finitos")
        self.lattice = lattice
        self.weights = weights
        self.weights.setflags(write=False)

    def weight(self, k) -> float:
        return float(self.weights[self.lattice.flat_index(_as_mode(k))])

    def weight_gap(self, K: Sequence[Mode], L: Sequence[Mode]) -> float:
        """sum g_k - sum g_l; multiconjuntos de pesos iguais dão exatamente 0"""
        left = math.fsum(sorted(self.weight(k) for k in K))
        right = math.fsum(sorted(self.weight(l) for l in L))
        return left - right

    def evaluate(self, u: FourierState) -> float:
        return float(np.dot(self.weights, np.abs(u.flat) ** 2))

    def gradient(self, u: FourierState) -> FourierState:
        return FourierState.from_flat(u.lattice, 2.0 * self.weights * u.flat)


def bracket_with_diagonal(P: HomPoly, Z: DiagonalQuadratic) -> HomPoly:
    """{P,Z}: coeficiente em (k,l) multiplicado por -2i (sum g_k - sum g_l)"""
    coeffs = {}
    for (K, L), c in P.coeffs.items():
        gap = Z.weight_gap(K, L)
        if gap != 0:
            coeffs[(K, L)] = -2j * gap * c
    return HomPoly(P.q, coeffs)


def small_divisor_modulus(Z: DiagonalQuadratic, K: Sequence[Mode], L: Sequence[Mode]) -> float:
    """|Omega(k,l)| = 2 |sum w_k - sum w_l|"""
    return 2.0 * abs(Z.weight_gap(K, L))


def resonant_split(P: HomPoly, omega: DiagonalQuadratic, nu: float) -> Tuple[HomPoly, HomPoly]:
    if nu <= 0:
        raise ValidationError("nu deve ser > 0")
    res, nonres = {}, {}
    for key, c in P.coeffs.items():
        target = res if small_divisor_modulus(omega, *key) < nu else nonres
        target[key] = c
    return HomPoly(P.q, res), HomPoly(P.q, nonres)


def mu2_norm2(key: OrbitKey) -> int:
    """mu_2 ao quadrado (segundo maior |k|^2 entre os 2q modos)"""
    values = sorted((norm2(m) for m in key[0] + key[1]), reverse=True)
    return values[1]


def mu2_split(P: HomPoly, N: int) -> Tuple[HomPoly, HomPoly]:
    if not is_power_of_two(N):
        raise ValidationError(f"N deve ser potência de dois: {N}")
    low, high = {}, {}
    for key, c in P.coeffs.items():
        target = low if mu2_norm2(key) < int(N) ** 2 else high
        target[key] = c
    return HomPoly(P.q, low), HomPoly(P.q, high)


def nns_quadratic(lattice: TruncatedLattice, s: float, N: int) -> DiagonalQuadratic:
    """N_{N,s} como polinômio quadrático diagonal"""
    return DiagonalQuadratic(lattice, nns_weights(lattice, s, N))


def tame_bound_ratio(P: HomPoly, u: FourierState, s: float) -> Dict[str, float]:
    """Razões ||grad P(u)|| / cota, em l1 e em H^s (cotas mansas)"""
    grad = gradient(P, u)
    q = P.q
    l1 = l1_norm(u)
    if P.linf == 0 or l1 == 0:
        return {'l1': 0.0, 'hs': 0.0}
    l1_bound = 2 * q * P.linf * l1 ** (2 * q - 1)
    hs_bound = 2 * q * (2 * q - 1) ** (1 + max(s - 1, 0.0)) * P.linf * l1 ** (2 * q - 2) * hs_norm(u, s)
    return {'l1': l1_norm(grad) / l1_bound, 'hs': hs_norm(grad, s) / hs_bound}


def maintech_ratio(L: HomPoly, u: FourierState, N: int, s: float, eta: float) -> float:
    """|{N_{N,s}, L}(u)| dividido por q^(2s+1) N^-eta ||L|| ||u||_{l1_eta} ||u||_{l1}^(2q-3) ||u||_{H^s}^2"""
    if L.is_zero():
        return 0.0
    weights = nns_quadratic(u.lattice, s, N)
    value = -evaluate(bracket_with_diagonal(L, weights), u)
    q = L.q
    scale = (q ** (2 * s + 1) * float(N) ** (-eta) * L.linf * l1_weighted(u, eta)
             * l1_norm(u) ** (2 * q - 3) * hs_norm(u, s) ** 2)
    return abs(value) / scale if scale > 0 else 0.0


def random_poly(lattice: TruncatedLattice, q: int, rng: np.random.Generator,
                density: float = 1.0, scale: float = 1.0) -> HomPoly:
    """Polinômio aleatório em H_2q sobre a caixa (testes e suíte de verificação)"""
    coeffs = {}
    for K, L in iter_zero_momentum_orbits(lattice, q):
        if density < 1.0 and rng.random() > density:
            continue
        if K == L:
            value = complex(rng.uniform(-scale, scale), 0.0)
        else:
            value = complex(rng.uniform(-scale, scale), rng.uniform(-scale, scale))
        coeffs[(K, L)] = value
    return HomPoly(q, coeffs)


def poly_from_records(records: Iterable[Dict]) -> HomPoly:
    records = list(records)
    if not records:
        raise ValidationError("Registro de polinômio vazio")
    q = int(records[0]['q'])
    raw = [((r['k'], r['l']), complex(r['re'], r['im'])) for r in records]
    return make_poly(q, raw)
