import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.models.errors import ValidationError
from src.services.lattice import TruncatedLattice
from src.services.potential import BlockPotential, frequencies, sample_potential


class TestSamplePotential:

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 64 - 1), n_max=st.integers(0, 8))
    def test_values_in_unit_interval(self, seed, n_max):
        V = sample_potential(seed, n_max)
        assert V.block_values.size == n_max + 1
        assert np.all(V.block_values >= 0) and np.all(V.block_values < 1)

    def test_deterministic(self):
        a = sample_potential(123, 5)
        b = sample_potential(123, 5)
        assert np.array_equal(a.block_values, b.block_values)
        assert not np.array_equal(a.block_values, sample_potential(124, 5).block_values)

    def test_prefix_stable_in_n_max(self):
        short = sample_potential(99, 2)
        long = sample_potential(99, 6)
        assert np.array_equal(short.block_values, long.block_values[:3])

    def test_single_block(self):
        assert sample_potential(5, 0).block_values.shape == (1,)

    def test_invalid_arguments(self):
        with pytest.raises(ValidationError):
            sample_potential(1, -1)
        with pytest.raises(ValidationError):
            sample_potential(-1, 3)

    def test_block_constant_on_lattice(self):
        lattice = TruncatedLattice(2, 6)
        V = sample_potential(3, lattice.n_max)
        values = V.on_lattice(lattice)
        for n in range(lattice.n_max + 1):
            members = values[lattice.block_members(n)]
            assert np.all(members == V.block_values[n])

    def test_dict_roundtrip(self):
        V = sample_potential(11, 4)
        restored = BlockPotential.from_dict(V.to_dict())
        assert restored.seed == 11
        assert np.array_equal(restored.block_values, V.block_values)

    def test_rejects_out_of_range_values(self):
        with pytest.raises(ValidationError):
            BlockPotential(seed=0, block_values=np.array([0.5, 1.0]))
        with pytest.raises(ValidationError):
            BlockPotential.from_dict({'seed': 0, 'n_max': 3, 'block_values': [0.1, 0.2]})

    def test_lattice_needs_enough_blocks(self):
        with pytest.raises(ValidationError):
            sample_potential(0, 1).on_lattice(TruncatedLattice(1, 8))


class TestFrequencies:

    def test_zero_potential(self):
        omega = frequencies(BlockPotential.zero(3), TruncatedLattice(2, 2))
        assert omega.weight((1, 0)) == 1.0
        assert omega.weight((2, 2)) == 8.0

    def test_constant_shift(self):
        V = BlockPotential(seed=0, block_values=np.array([0.5, 0.0, 0.0]))
        omega = frequencies(V, TruncatedLattice(1, 3))
        assert omega.weight(0) == pytest.approx(0.5 / math.sqrt(2 * math.pi))
        assert omega.weight(0) == pytest.approx(0.19947, abs=1e-5)

    def test_gap_cancels_between_equal_block_counts(self, potential):
        lattice = TruncatedLattice(1, 4)
        omega = frequencies(potential, lattice)
        # blocos {0, 1} dos dois lados
        assert omega.weight_gap([(1,), (2,)], [(3,), (0,)]) == -4.0
