import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.models.errors import ValidationError
from src.services.lattice import (FourierState, TruncatedLattice, block_index, hs_norm, l1_norm, mass,
                                  nns_observable, nns_weights, ns_observable, observables, random_state,
                                  sobolev_constant, sphere_actions, super_action, super_actions)


def delta(lattice, k, value=1.0):
    return FourierState.from_modes(lattice, {k: value})


class TestBlocks:

    def test_block_index_examples(self):
        assert block_index((0,)) == 0
        assert block_index((2, 0)) == 1
        assert block_index((5, 5)) == 2

    def test_block_boundaries_are_exact(self):
        assert block_index((1,)) == 0
        assert block_index((3,)) == 1
        assert block_index((4,)) == 2
        assert block_index((7,)) == 2
        assert block_index((8,)) == 3
        # |(1,1)| = sqrt(2) < 2
        assert block_index((1, 1)) == 0

    def test_mode_outside_box_rejected(self, line4):
        with pytest.raises(ValidationError):
            block_index((5,), line4)

    def test_n_max_covers_box(self):
        assert TruncatedLattice(1, 4).n_max == 3
        assert TruncatedLattice(1, 3).n_max == 2
        assert TruncatedLattice(2, 5).n_max == 3
        assert TruncatedLattice(1, 0).n_max == 0

    def test_blocks_partition_box(self):
        lattice = TruncatedLattice(2, 6)
        sizes = [lattice.block_members(n).size for n in range(lattice.n_max + 1)]
        assert sum(sizes) == lattice.size

    def test_unsupported_dimension(self):
        with pytest.raises(ValidationError):
            TruncatedLattice(4, 2)


class TestSuperActions:

    def test_single_modes(self, line4):
        assert super_actions(delta(line4, 0))[0] == 1.0
        J = super_actions(delta(line4, 2))
        assert J[1] == 1.0 and J[0] == 0.0
        u = FourierState.from_modes(line4, {1: 1.0, -1: 1.0})
        assert super_action(u, 0) == 2.0

    def test_block_out_of_range(self, line4):
        with pytest.raises(ValidationError):
            super_action(delta(line4, 0), line4.n_max + 1)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_sum_is_mass(self, seed):
        lattice = TruncatedLattice(2, 5)
        rng = np.random.Generator(np.random.Philox(seed))
        u = random_state(lattice, rng, decay=1.0)
        assert math.isclose(float(np.sum(super_actions(u))), mass(u), rel_tol=1e-12)

    def test_sphere_actions_sum_to_mass(self, rng):
        u = random_state(TruncatedLattice(2, 3), rng)
        assert math.isclose(sum(sphere_actions(u).values()), mass(u), rel_tol=1e-12)


class TestObservables:

    def test_ns_examples(self, line4):
        assert ns_observable(delta(line4, 2), 1.0) == 4.0
        u3 = delta(line4, 3)
        assert ns_observable(u3, 1.0) == 4.0
        assert hs_norm(u3, 1.0) ** 2 == pytest.approx(10.0)

    def test_ns_zero_is_mass(self, rng, line4):
        u = random_state(line4, rng)
        assert ns_observable(u, 0.0) == pytest.approx(mass(u), rel=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), s=st.floats(0.0, 3.0))
    def test_ns_equivalent_to_hs(self, seed, s):
        lattice = TruncatedLattice(1, 12)
        u = random_state(lattice, np.random.Generator(np.random.Philox(seed)), decay=0.5)
        hs2 = hs_norm(u, s) ** 2
        ns = ns_observable(u, s)
        assert 2.0 ** (-2 * s) * hs2 <= ns * (1 + 1e-12)
        assert ns <= hs2 * (1 + 1e-12)

    def test_nns_low_and_high_parts(self, line4):
        assert nns_observable(delta(line4, 2), 1.0, 2) == 4.0
        assert nns_observable(delta(line4, 1), 1.0, 2) == 1.0

    def test_nns_beyond_box_is_blockwise(self, rng, line4):
        u = random_state(line4, rng)
        N = 2 ** (line4.n_max + 1)
        assert nns_observable(u, 1.5, N) == pytest.approx(ns_observable(u, 1.5), rel=1e-14)

    @pytest.mark.parametrize('s', [0.5, 1.0, 2.0])
    def test_nns_with_N_one_keeps_equivalence(self, rng, line4, s):
        assert np.all(nns_weights(line4, s, 1) > 0)
        assert nns_observable(delta(line4, 0), s, 1) == 1.0
        u = random_state(line4, rng, decay=0.5)
        hs2 = hs_norm(u, s) ** 2
        value = nns_observable(u, s, 1)
        assert 2.0 ** (-2 * s) * hs2 <= value * (1 + 1e-12)
        assert value <= hs2 * (1 + 1e-12)

    def test_nns_requires_power_of_two(self, line4):
        with pytest.raises(ValidationError):
            nns_observable(delta(line4, 1), 1.0, 3)

    def test_norm_examples(self, line4):
        u0 = delta(line4, 0)
        assert l1_norm(u0) == 1.0
        for s in (0.0, 1.0, 2.5):
            assert hs_norm(u0, s) == 1.0
        assert hs_norm(delta(line4, 1), 1.0) == pytest.approx(math.sqrt(2.0))

    def test_l1_bounded_by_sobolev(self, rng):
        lattice = TruncatedLattice(1, 16)
        u = random_state(lattice, rng, decay=1.0)
        assert l1_norm(u) <= sobolev_constant(lattice, 1.0) * hs_norm(u, 1.0)

    def test_observables_bundle(self, rng, line4):
        u = random_state(line4, rng, amplitude=0.3, norm='h1')
        obs = observables(u, s_list=(0.0, 1.0), N=4)
        assert obs.hs_norms[1.0] == pytest.approx(0.3)
        assert obs.mass == pytest.approx(obs.hs_norms[0.0] ** 2)
        assert set(obs.to_dict()) == {'mass', 'hs_norms', 'super_actions', 'nns'}


class TestFourierState:

    def test_immutable(self, line4):
        u = delta(line4, 1)
        with pytest.raises(ValueError):
            u.amplitudes[0] = 1.0

    def test_non_finite_rejected(self, line4):
        with pytest.raises(ValidationError):
            FourierState.from_modes(line4, {0: complex('nan')})

    def test_support_and_lookup(self, line4):
        u = FourierState.from_modes(line4, {-3: 2j, 1: 1.0})
        assert u.support() == [(-3,), (1,)]
        assert u[-3] == 2j

    def test_random_state_normalisation(self, rng, line4):
        assert l1_norm(random_state(line4, rng, amplitude=0.25)) == pytest.approx(0.25)
        with pytest.raises(ValidationError):
            random_state(line4, rng, norm='sup')
