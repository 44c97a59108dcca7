import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knightian.measure import (
    ConditioningError,
    FiniteMeasure,
    KernelSpec,
    condition,
    dirac,
    expectation,
    extend_uniform,
    semidirect,
)
from knightian.observation import AlphabetSchedule, enumerate_window

SCHED = AlphabetSchedule(2, 4)


def win(y=(), depth=2):
    return enumerate_window(list(y), depth, SCHED)


def test_weights_validated():
    w = win()
    with pytest.raises(ValueError):
        FiniteMeasure(w, [0.5, 0.5, 0.1, 0.0])
    with pytest.raises(ValueError):
        FiniteMeasure(w, [1.5, -0.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        FiniteMeasure(w, [1.0, 0.0])


def test_condition_uniform():
    mu = FiniteMeasure.uniform(win())
    c = condition(mu, [0])
    assert c.window.completions == [(0, 0), (0, 1)]
    assert np.allclose(c.weights, 0.5)


def test_condition_bayes_arithmetic():
    mu = FiniteMeasure(win(), [0.5, 0.25, 0.25, 0.0])
    assert np.allclose(condition(mu, [0]).weights, [2 / 3, 1 / 3])


def test_condition_dirac_identity():
    mu = dirac(win(depth=3), (1, 0, 1))
    c = condition(mu, [1, 0])
    assert c.weights.tolist() == [0.0, 1.0]


def test_condition_zero_mass_raises():
    mu = dirac(win(), (0, 0))
    with pytest.raises(ConditioningError):
        condition(mu, [1])


def test_semidirect_copy_kernel():
    mu = FiniteMeasure.uniform(win(depth=1))
    copy = KernelSpec(1, lambda h: np.eye(2)[h[0]], 2)
    out = semidirect(mu, copy)
    assert out.weights.tolist() == [0.5, 0.0, 0.0, 0.5]


def test_semidirect_uniform_kernel_is_product():
    mu = FiniteMeasure(win(depth=1), [0.3, 0.7])
    out = semidirect(mu, KernelSpec(1, lambda h: [0.5, 0.5], 2))
    assert np.allclose(out.tensor, np.outer([0.3, 0.7], [0.5, 0.5]))
    assert np.allclose(out.weights, extend_uniform(mu).weights)


def test_semidirect_deterministic_on_dirac():
    mu = dirac(win([1], depth=1), (1, 0))
    out = semidirect(mu, KernelSpec(2, lambda h: [0.0, 1.0], 2))
    assert out.weights.tolist() == [0.0, 1.0, 0.0, 0.0]


def test_semidirect_step_mismatch():
    with pytest.raises(ValueError):
        semidirect(FiniteMeasure.uniform(win(depth=1)), KernelSpec(3, lambda h: [0.5, 0.5], 2))


def test_kernel_row_validation():
    k = KernelSpec(0, {(): [0.5, 0.6]}, 2)
    with pytest.raises(ValueError):
        k(())


def test_expectation_examples():
    w = win(depth=1)
    assert expectation(FiniteMeasure(w, [0.2, 0.8]), [3.0, 3.0]) == pytest.approx(3.0)
    assert expectation(dirac(w, (1,)), [0.1, 0.9]) == pytest.approx(0.9)
    assert expectation(FiniteMeasure.uniform(w), [0.0, 1.0]) == 0.5


def test_marginals():
    mu = FiniteMeasure(win(), [0.1, 0.2, 0.3, 0.4])
    assert np.allclose(mu.next_symbol_probs(), [0.3, 0.7])
    assert mu.mass([1, 1]) == pytest.approx(0.4)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=8, max_size=8), st.integers(0, 1), st.integers(0, 1))
def test_chain_rule(raw, a, b):
    w = win(depth=3)
    mu = FiniteMeasure(w, np.array(raw) / sum(raw))
    direct = condition(mu, [a, b])
    stepwise = condition(condition(mu, [a]), [a, b])
    assert np.allclose(direct.weights, stepwise.weights, atol=1e-12)
    # P(ab c) = P(a) P(b|a) P(c|ab)
    pa = mu.mass([a])
    pb = condition(mu, [a]).mass([a, b])
    assert np.allclose(pa * pb * direct.weights, mu.weights[w.cylinder_mask([a, b])], atol=1e-12)
