import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knightian.geometry import (
    EmptyPolytopeError,
    LipschitzFunction,
    ModelPolytope,
    distance_to_model,
    kr_distance,
    kr_witness,
    lipschitz_norm,
    verify_lipschitz_ball,
    violation,
)
from knightian.measure import FiniteMeasure
from knightian.observation import AlphabetSchedule, CustomMetric, GeometricMetric, enumerate_window

from oracles import binary_model_distance_grid, kr_grid, polytope_vertices

BIN = AlphabetSchedule(2, 4)


def win(y=(), depth=1, sizes=2):
    return enumerate_window(list(y), depth, AlphabetSchedule(sizes, max(depth, 1)))


def random_measure(rng, w):
    return FiniteMeasure(w, rng.dirichlet(np.ones(w.size)))


def sum_metric():
    # additive (non-ultrametric) weights exercise the pairwise formulation
    return CustomMetric(lambda n, x, xp: sum(2.0 ** (n - m) for m in range(n, len(x)) if x[m] != xp[m]))


# -- Lipschitz norm ------------------------------------------------------------


def test_norm_zero_and_constant():
    w = win(depth=2)
    assert lipschitz_norm(np.zeros(4), w) == 0
    assert lipschitz_norm(np.ones(4), w) == 1


def test_norm_two_outcomes_distance_one():
    assert lipschitz_norm([0.0, 1.0], win()) == pytest.approx(2.0)


def test_verify_ball_cases():
    w = win(depth=2)
    assert verify_lipschitz_ball(np.zeros(4), 0.0, w)
    f = np.array([0.1, -0.1, 0.2, 0.0])
    bound = lipschitz_norm(f, w)
    assert verify_lipschitz_ball(f, bound, w)
    assert not verify_lipschitz_ball(2 * f, bound, w)


def test_lipschitz_function_records_exact_norm():
    w = win(depth=2)
    f = LipschitzFunction.from_values([0.3, -0.2, 0.0, 0.1], w)
    assert f.norm_bound == pytest.approx(lipschitz_norm(f.values, w), abs=1e-12)


# -- KR distance ---------------------------------------------------------------


def test_kr_identity_zero():
    rng = np.random.default_rng(0)
    w = win(depth=3)
    mu = random_measure(rng, w)
    assert kr_distance(mu, mu) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_kr_dirac_closed_form(depth):
    w = win([1, 0], depth=depth)
    rho_mat = GeometricMetric().matrix(w)
    for j in range(1, w.size):
        mu = FiniteMeasure.dirac(w, w.completions[0])
        nu = FiniteMeasure.dirac(w, w.completions[j])
        rho = rho_mat[0, j]
        assert kr_distance(mu, nu) == pytest.approx(2 * rho / (2 + rho), abs=1e-9)


def test_dirac_closed_form_matches_grid_oracle():
    w = win(depth=2)
    rho = GeometricMetric().matrix(w)
    for j in (1, 2):
        mu, nu = np.eye(4)[0], np.eye(4)[j]
        assert kr_grid(mu, nu, rho) == pytest.approx(2 * rho[0, j] / (2 + rho[0, j]), abs=2e-2)


def test_kr_matches_grid_oracle_small_windows():
    rng = np.random.default_rng(1)
    cases = [(win(depth=1), None), (win(depth=1, sizes=3), None), (win(depth=2), None), (win(depth=2), sum_metric())]
    for w, metric in cases:
        rho = (metric or GeometricMetric()).matrix(w)
        for _ in range(5):
            mu, nu = random_measure(rng, w), random_measure(rng, w)
            assert kr_distance(mu, nu, metric) == pytest.approx(kr_grid(mu.weights, nu.weights, rho), abs=2e-2)


def test_tree_and_pairwise_formulations_agree():
    rng = np.random.default_rng(2)
    geo = GeometricMetric()
    same = CustomMetric(lambda n, x, xp: geo.evaluate(n, x, xp))
    for sizes, depth in [(2, 3), (3, 2), ([2, 3, 2], 3)]:
        w = enumerate_window([], depth, AlphabetSchedule(sizes, depth))
        for _ in range(5):
            mu, nu = random_measure(rng, w), random_measure(rng, w)
            assert kr_distance(mu, nu) == pytest.approx(kr_distance(mu, nu, same), abs=1e-8)


def test_kr_symmetry_and_triangle_randomized():
    rng = np.random.default_rng(3)
    for w in (win(depth=2), win(depth=3), win(depth=2, sizes=3)):
        for _ in range(10):
            a, b, c = (random_measure(rng, w) for _ in range(3))
            ab, ba = kr_distance(a, b), kr_distance(b, a)
            assert ab == pytest.approx(ba, abs=1e-6)
            assert ab <= kr_distance(a, c) + kr_distance(c, b) + 1e-6


def test_kr_diameter_bound():
    rng = np.random.default_rng(4)
    w = win(depth=3)
    for _ in range(20):
        assert kr_distance(random_measure(rng, w), random_measure(rng, w)) <= 2.0


def test_kr_rescaling_metric_resolves_exactly():
    # scaling rho changes only the Lipschitz part; compare against the pairwise LP re-solve
    rng = np.random.default_rng(5)
    for w, c in [(win(depth=2), 0.5), (win(depth=1, sizes=3), 2.0), (win(depth=1, sizes=3), 4.0)]:
        mu, nu = random_measure(rng, w), random_measure(rng, w)
        base = kr_distance(mu, nu)
        scaled = CustomMetric(lambda n, x, xp, c=c: c * GeometricMetric().evaluate(n, x, xp))
        d = kr_distance(mu, nu, scaled)
        assert d == pytest.approx(kr_grid(mu.weights, nu.weights, scaled.matrix(w)), abs=2e-2)
        assert (d >= base - 1e-9) if c > 1 else (d <= base + 1e-9)


def test_kr_witness_in_ball_and_attains():
    rng = np.random.default_rng(6)
    w = win(depth=3)
    mu, nu = random_measure(rng, w), random_measure(rng, w)
    r, f = kr_witness(mu, nu)
    assert verify_lipschitz_ball(f.values, 1.0, w)
    assert (mu.weights - nu.weights) @ f.values == pytest.approx(r, abs=1e-7)


def test_kr_window_mismatch():
    with pytest.raises(ValueError):
        kr_distance(FiniteMeasure.uniform(win()), FiniteMeasure.uniform(win(depth=2)))


# -- distance to model -----------------------------------------------------------


def test_distance_binary_example_matches_two_level_grid():
    w = win()
    M = ModelPolytope(w, A_ub=[[0.6, -0.4]], b_ub=[0.0])
    mu = FiniteMeasure(w, [0.8, 0.2])
    r, f = distance_to_model(mu, M)
    oracle = binary_model_distance_grid(0.2, 0.6)
    assert oracle == pytest.approx(0.8 / 3, abs=2e-3)
    assert r == pytest.approx(oracle, abs=2e-3)
    assert r == pytest.approx(0.26666666666666666, abs=1e-9)


def test_distance_member_is_zero():
    w = win(depth=2)
    M = ModelPolytope.simplex(w)
    r, f = distance_to_model(FiniteMeasure.uniform(w), M)
    assert r == 0 and not np.any(f.values)


def test_distance_to_singleton_equals_kr():
    rng = np.random.default_rng(7)
    w = win(depth=3)
    mu, nu = random_measure(rng, w), random_measure(rng, w)
    r, _ = distance_to_model(mu, ModelPolytope.singleton(nu))
    assert r == pytest.approx(kr_distance(mu, nu), abs=1e-7)


def test_lifted_hull_matches_h_representation():
    w = win()
    mu = FiniteMeasure(w, [0.8, 0.2])
    hull = ModelPolytope.from_vertices(w, [[0.4, 0.6], [0.0, 1.0]])
    assert distance_to_model(mu, hull)[0] == pytest.approx(0.8 / 3, abs=1e-8)
    assert hull.contains(FiniteMeasure(w, [0.2, 0.8]))
    assert not hull.contains(mu)


def test_empty_polytope_flagged():
    w = win()
    M = ModelPolytope(w, A_ub=[[1.0, 1.0]], b_ub=[0.5])
    assert M.is_empty
    with pytest.raises(EmptyPolytopeError):
        distance_to_model(FiniteMeasure.uniform(w), M)


def random_polytope(rng, w, m):
    interior = rng.dirichlet(np.ones(w.size))
    A = rng.normal(size=(m, w.size))
    b = A @ interior + rng.uniform(0.0, 0.2, size=m)
    return ModelPolytope(w, A_ub=A, b_ub=b), A, b


def test_witness_guarantee_randomized():
    rng = np.random.default_rng(8)
    windows = [win(depth=1), win(depth=1, sizes=3), win(depth=2)]
    for trial in range(1000):
        w = windows[trial % 3]
        M, A, b = random_polytope(rng, w, rng.integers(1, 4))
        mu = random_measure(rng, w)
        r, f = distance_to_model(mu, M)
        assert verify_lipschitz_ball(f.values, 1.0, w)
        V = polytope_vertices(A, b, w.size)
        edge = np.min(V @ f.values) - mu.weights @ f.values
        assert edge >= r - 1e-6


def test_distance_zero_iff_feasible():
    rng = np.random.default_rng(9)
    w = win(depth=2)
    for _ in range(50):
        M, _, _ = random_polytope(rng, w, 2)
        mu = random_measure(rng, w)
        r, _ = distance_to_model(mu, M)
        assert (r <= 1e-6) == (violation(mu, M) <= 1e-6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4), st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4))
def test_kr_nonnegative_and_bounded_property(a, b):
    w = win(depth=2)
    mu = FiniteMeasure(w, np.array(a) / sum(a))
    nu = FiniteMeasure(w, np.array(b) / sum(b))
    d = kr_distance(mu, nu)
    assert 0 <= d <= 2
    assert d <= np.abs(mu.weights - nu.weights).sum() + 1e-9
