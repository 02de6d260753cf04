import math

import numpy as np
import pytest

from src.models.errors import FlowEscapeError, ValidationError
from src.services.lattice import FourierState, l1_norm, random_state
from src.services.lieflow import (DISCARD_TAIL_ORDERS, DiscardLedger, FlowConfig, LieSeriesBudget, discard_bound,
                                  discard_tail, epsilon_chi, flow, flow_tangent, lie_series, lie_transform,
                                  symplectic_form)
from src.services.polyalg import HomPoly, evaluate, make_poly, poisson_bracket, random_poly


def unit_chi(scale=1.0):
    return make_poly(2, [(([0, 0], [0, 0]), scale)])


def difference(a, b):
    return l1_norm(FourierState.from_flat(a.lattice, a.flat - b.flat))


class TestEpsilonChi:

    def test_examples(self):
        assert epsilon_chi(unit_chi(1.0)) == pytest.approx(1 / 8, rel=1e-15)
        assert epsilon_chi(unit_chi(1 / 8)) == pytest.approx(math.sqrt(2) / 4, rel=1e-15)

    def test_zero_generator(self):
        assert epsilon_chi(HomPoly.zero(2)) == math.inf


class TestFlow:

    @pytest.fixture
    def setup(self, tiny, rng):
        chi = random_poly(tiny, 2, rng)
        radius = epsilon_chi(chi)
        u = random_state(tiny, rng, amplitude=radius / 2)
        return chi, u

    def test_zero_time_is_identity(self, setup):
        chi, u = setup
        assert flow(chi, u, FlowConfig(t_final=0.0)) is u

    def test_start_outside_ball(self, setup):
        chi, u = setup
        with pytest.raises(FlowEscapeError):
            flow(chi, u.scaled(4.0), FlowConfig())

    def test_reversibility(self, setup):
        chi, u = setup
        cfg = FlowConfig(dt=1e-3)
        v = flow(chi, u, cfg)
        assert difference(flow(chi, v, cfg.at(-1.0)), u) <= 1e-8

    def test_generator_conserved(self, setup):
        chi, u = setup
        v = flow(chi, u, FlowConfig())
        assert abs(evaluate(chi, v) - evaluate(chi, u)) <= 1e-9 * (1 + abs(evaluate(chi, u)))

    def test_closeness(self, setup):
        chi, u = setup
        size = l1_norm(u)
        bound = (size / epsilon_chi(chi)) ** 2 * size
        assert difference(flow(chi, u, FlowConfig()), u) <= bound + 1e-6

    def test_quartic_phase_rotation(self, tiny):
        chi = unit_chi(1.0)
        u = FourierState.from_modes(tiny, {0: 0.05})
        v = flow(chi, u, FlowConfig(dt=1e-3))
        # d/dt u_0 = i 4 |u_0|^2 u_0
        expected = 0.05 * np.exp(1j * 4 * 0.05 ** 2)
        assert v[0] == pytest.approx(expected, abs=1e-14)

    def test_symplectic_form_preserved(self, setup, rng):
        chi, u = setup
        v0 = random_state(u.lattice, rng)
        w0 = random_state(u.lattice, rng)
        cfg = FlowConfig()
        before = symplectic_form(v0, w0)
        after = symplectic_form(flow_tangent(chi, u, v0, cfg), flow_tangent(chi, u, w0, cfg))
        assert after == pytest.approx(before, abs=1e-8)

    def test_tangent_matches_finite_differences(self, setup, rng):
        chi, u = setup
        v0 = random_state(u.lattice, rng)
        cfg = FlowConfig()
        h = 1e-5
        numeric = (flow(chi, FourierState.from_flat(u.lattice, u.flat + h * v0.flat), cfg).flat
                   - flow(chi, u, cfg).flat) / h
        exact = flow_tangent(chi, u, v0, cfg).flat
        assert np.linalg.norm(numeric - exact) <= 1e-4 * np.linalg.norm(exact)

    def test_tangent_without_generator(self, setup, rng):
        _, u = setup
        v0 = random_state(u.lattice, rng)
        assert flow_tangent(HomPoly.zero(2), u, v0, FlowConfig()) is v0

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            FlowConfig(dt=0.0)
        with pytest.raises(ValidationError):
            FlowConfig(t_final=2.0)


class TestLieTransform:

    def test_m_q_bookkeeping(self):
        assert LieSeriesBudget(degree_cap=4, stage=1).m_q(2) == 0
        assert LieSeriesBudget(degree_cap=6, stage=1).m_q(2) == 1
        assert LieSeriesBudget(degree_cap=8, stage=1).m_q(2) == 2
        assert LieSeriesBudget(degree_cap=8, stage=2).m_q(3) == 0

    def test_zero_generator_keeps_input(self, tiny, rng):
        Q = random_poly(tiny, 2, rng)
        out = lie_transform([Q], HomPoly.zero(2), LieSeriesBudget(degree_cap=6, stage=1))
        assert list(out) == [2]
        assert out[2].max_abs_diff(Q) == 0.0

    def test_single_stage_keeps_only_input(self, tiny, rng):
        Q = random_poly(tiny, 2, rng)
        chi = random_poly(tiny, 2, rng)
        ledger = DiscardLedger()
        out = lie_transform([Q], chi, LieSeriesBudget(degree_cap=4, stage=1), ledger)
        assert out[2].max_abs_diff(Q) == 0.0
        entry = ledger.entries[0]
        assert (entry.source_q, entry.target_q, entry.power) == (2, 3, 1)
        assert ledger.total_count == entry.count >= 1
        assert entry.bound >= discard_bound(2, chi, 1, Q.linf)

    def test_discard_bound_follows_degree(self, tiny, rng):
        chi = random_poly(tiny, 2, rng)
        c = chi.linf
        assert discard_bound(2, chi, 0, 3.0) == 3.0
        # 4 q' q_j ||chi|| / (j+1) com q_0 = 2, q_1 = 3
        assert discard_bound(2, chi, 2, 1.0) == pytest.approx((16 * c) * (24 * c) / 2, rel=1e-12)

    def test_discard_tail_converges(self, tiny, rng):
        chi = random_poly(tiny, 2, rng, scale=1e-3)
        first = discard_bound(2, chi, 1, 1.0)
        orders, total = discard_tail(2, chi, 1, 1.0)
        assert 1 < orders < DISCARD_TAIL_ORDERS
        assert first <= total <= 1.05 * first

    def test_generator_degree_must_match_stage(self, tiny, rng):
        with pytest.raises(ValidationError):
            lie_transform([random_poly(tiny, 2, rng)], random_poly(tiny, 3, rng),
                          LieSeriesBudget(degree_cap=6, stage=1))

    def test_series_terms(self, tiny, rng):
        Q = random_poly(tiny, 2, rng)
        chi = random_poly(tiny, 2, rng)
        terms = lie_series(Q, chi, 2)
        second = poisson_bracket(chi, poisson_bracket(chi, Q)).scale(0.5)
        assert terms[4].max_abs_diff(second) <= 1e-12 * max(second.linf, 1.0)

    def test_agrees_with_flow(self, tiny, rng):
        chi = random_poly(tiny, 2, rng, scale=0.5)
        Q = random_poly(tiny, 2, rng)
        radius = epsilon_chi(chi)
        direction = random_state(tiny, rng)
        budget = LieSeriesBudget(degree_cap=6, stage=1)
        series = lie_transform([Q], chi, budget)
        errors = []
        for a in (0.04 * radius, 0.02 * radius):
            u = direction.scaled(a)
            exact = evaluate(Q, flow(chi, u, FlowConfig(dt=1e-3)))
            errors.append(abs(exact - sum(evaluate(P, u) for P in series.values())))
        # o erro descartado é de grau 2(r+1) = 8
        assert math.log2(errors[0] / errors[1]) >= 7.5
