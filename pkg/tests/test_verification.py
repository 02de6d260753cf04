import pytest

from src.models.errors import ValidationError
from src.services import polyalg
from src.services.verification import SUITES, inject_fault, run_suites


@pytest.mark.parametrize('suite', ['lattice', 'polyalg', 'lieflow', 'birkhoff', 'simulator'])
def test_suite_passes(suite):
    results = run_suites(examples=4, seed=5, suites=[suite])
    assert results
    assert all(r.suite == suite for r in results)
    assert all(r.passed for r in results), [r.to_dict() for r in results if not r.passed]


def test_resonance_suite_passes():
    results = run_suites(examples=5, seed=5, suites=['resonance'])
    assert all(r.passed for r in results)


def test_injected_fault_is_caught_and_undone():
    original = polyalg.poisson_bracket
    results = run_suites(examples=4, seed=1, inject='bracket_sign', suites=['polyalg'])
    failed = {r.name for r in results if not r.passed}
    assert 'bracket_oracle' in failed
    assert 'antisymmetry' not in failed
    assert polyalg.poisson_bracket is original


def test_bracket_oracle_is_relative_to_value():
    results = run_suites(examples=4, seed=1, inject='bracket_drift', suites=['polyalg'])
    oracle = next(r for r in results if r.name == 'bracket_oracle')
    assert not oracle.passed
    assert 1e-10 < oracle.worst <= 1.01e-9
    assert next(r for r in results if r.name == 'antisymmetry').passed


def test_fault_restored_after_error():
    original = polyalg.poisson_bracket
    with pytest.raises(RuntimeError):
        with inject_fault('bracket_sign'):
            assert polyalg.poisson_bracket is not original
            raise RuntimeError('interrompido')
    assert polyalg.poisson_bracket is original


def test_unknown_names():
    with pytest.raises(ValidationError):
        run_suites(suites=['nope'])
    with pytest.raises(ValidationError):
        run_suites(examples=1, suites=['lattice'], inject='nope')


def test_deterministic_for_seed():
    a = [r.to_dict() for r in run_suites(examples=3, seed=2, suites=['birkhoff'])]
    b = [r.to_dict() for r in run_suites(examples=3, seed=2, suites=['birkhoff'])]
    assert a == b


@pytest.mark.slow
def test_all_suites():
    results = run_suites(examples=10, seed=0)
    assert {r.suite for r in results} == set(SUITES)
    assert all(r.passed for r in results)
