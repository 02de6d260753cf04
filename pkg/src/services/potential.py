"""Multiplicadores de Fourier aleatórios constantes por bloco e frequências lineares"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from src.models.errors import ValidationError
from src.services.lattice import Mode, TruncatedLattice, block_index
from src.services.polyalg import DiagonalQuadratic

logger = logging.getLogger(__name__)


def block_generator(seed: int, n: int) -> np.random.Generator:
    """Gerador do bloco n: depende só de (seed, n), não de n_max"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(n),))))


@dataclass(frozen=True, eq=False)
class BlockPotential:
    """V_k = X_{bloco(k)}, com X_n uniformes em [0, 1)"""

    seed: int
    block_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.block_values, dtype=np.float64).ravel()
        if values.size == 0:
            raise ValidationError("Potencial sem blocos")
        if np.any(values < 0) or np.any(values >= 1) or not np.all(np.isfinite(values)):
            raise ValidationError("Valores de bloco devem estar em [0, 1)")
        values.setflags(write=False)
        object.__setattr__(self, 'block_values', values)

    @classmethod
    def zero(cls, n_max: int) -> 'BlockPotential':
        return cls(seed=0, block_values=np.zeros(n_max + 1))

    @property
    def n_max(self) -> int:
        return self.block_values.size - 1

    def value(self, k) -> float:
        n = block_index(k)
        if n > self.n_max:
            raise ValidationError(f"Modo {tuple(k)} no bloco {n} além de n_max={self.n_max}")
        return float(self.block_values[n])

    def on_lattice(self, lattice: TruncatedLattice) -> np.ndarray:
        if lattice.n_max > self.n_max:
            raise ValidationError(f"Caixa exige {lattice.n_max + 1} blocos, potencial tem {self.n_max + 1}")
        return self.block_values[lattice.blocks]

    def to_dict(self) -> Dict:
        return {'seed': int(self.seed), 'n_max': self.n_max, 'block_values': [float(x) for x in self.block_values]}

    @classmethod
    def from_dict(cls, data: Dict) -> 'BlockPotential':
        values = data['block_values']
        if 'n_max' in data and int(data['n_max']) != len(values) - 1:
            raise ValidationError("n_max inconsistente com block_values")
        return cls(seed=int(data.get('seed', 0)), block_values=np.array(values, dtype=np.float64))


def sample_potential(seed: int, n_max: int) -> BlockPotential:
    if n_max < 0:
        raise ValidationError(f"n_max deve ser >= 0: {n_max}")
    if not 0 <= int(seed) < 2 ** 64:
        raise ValidationError(f"Seed deve caber em 64 bits: {seed}")
    values = np.array([block_generator(seed, n).random() for n in range(n_max + 1)])
    logger.debug("Potencial amostrado: seed=%d n_max=%d", seed, n_max)
    return BlockPotential(seed=int(seed), block_values=values)


class FrequencyTable(DiagonalQuadratic):
    """omega_k = |k|^2 + (2pi)^(-d/2) V_k; Z_2 = sum omega_k |u_k|^2"""

    def __init__(self, lattice: TruncatedLattice, potential: BlockPotential):
        self.potential = potential
        self.scale = (2 * math.pi) ** (-lattice.d / 2)
        omega = lattice.norm2.astype(np.float64) + self.scale * potential.on_lattice(lattice)
        super().__init__(lattice, omega)

    @property
    def omega(self) -> np.ndarray:
        return self.weights

    def weight_gap(self, K: Sequence[Mode], L: Sequence[Mode]) -> float:
        """Parte inteira exata mais a combinação das contagens por bloco"""
        integer_part = sum(sum(c * c for c in k) for k in K) - sum(sum(c * c for c in l) for l in L)
        counts = Counter(block_index(k) for k in K)
        counts.subtract(block_index(l) for l in L)
        values = self.potential.block_values
        potential_part = math.fsum(c * values[n] for n, c in counts.items() if c != 0)
        return integer_part + self.scale * potential_part


def frequencies(V: BlockPotential, lattice: TruncatedLattice) -> FrequencyTable:
    return FrequencyTable(lattice, V)
