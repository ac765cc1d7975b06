import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbay.checks import random_observations
from dbay.exceptions import DuplicateInput, InsufficientObservations, OutOfDomain, SingularGramian
from dbay.gp import (
    DirichletGPRegressor,
    DirichletKernel,
    ObservationSet,
    insert_observation,
    kernel_eval,
    posterior_dense,
    posterior_interval,
    posterior_interval_grid,
    tridiagonal_inverse_elements,
)


def test_sorted_insert_and_incumbent():
    obs = ObservationSet([(0.0, 0.0), (1.0, 0.0)])
    out = insert_observation(obs, 0.5, 2.0)
    assert out.xs == [0.0, 0.5, 1.0]
    assert tuple(out.incumbent) == (0.5, 2.0)
    # value semantics: the original is untouched
    assert len(obs) == 2


def test_insert_into_empty():
    obs = insert_observation(ObservationSet(), 0.3, -1.0)
    assert len(obs) == 1 and tuple(obs.incumbent) == (0.3, -1.0)


def test_duplicate_and_out_of_domain_rejected():
    obs = ObservationSet([(0.2, 1.0)])
    with pytest.raises(DuplicateInput):
        obs.insert(0.2, 5.0)
    with pytest.raises(OutOfDomain):
        obs.insert(1.5, 0.0)


def test_random_inserts_match_rescan(rng):
    obs = ObservationSet()
    seen = []
    for _ in range(100):
        x, y = float(rng.uniform()), float(rng.normal())
        obs.insert(x, y)
        seen.append((x, y))
        assert all(a < b for a, b in zip(obs.xs, obs.xs[1:]))
        top = max(seen, key=lambda p: (p[1], -p[0]))
        assert tuple(obs.incumbent) == top


def test_incumbent_tie_prefers_smaller_x():
    obs = ObservationSet([(0.7, 1.0), (0.2, 1.0)])
    assert obs.incumbent.x == 0.2


def test_kernel_values():
    assert kernel_eval(DirichletKernel(1.0), 0.0, 0.3) == 0.0
    assert kernel_eval(DirichletKernel(1.0), 0.5, 0.5) == 0.25
    assert kernel_eval(DirichletKernel(2.0), 0.25, 0.75) == 0.25
    with pytest.raises(OutOfDomain):
        kernel_eval(DirichletKernel(1.0), -0.1, 0.5)


def test_kernel_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        DirichletKernel(0.0)


def test_kernel_symmetry(rng):
    k = DirichletKernel(1.7)
    for a, b in rng.uniform(size=(1000, 2)):
        assert kernel_eval(k, a, b) == kernel_eval(k, b, a)


def test_interval_posterior_examples():
    k = DirichletKernel(1.0)
    assert posterior_interval(ObservationSet([(0, 0), (1, 1)]), k, 0.5).mean == 0.5
    assert posterior_interval(ObservationSet([(0, 0), (1, 0)]), k, 0.5).variance == 0.25


def test_interval_posterior_needs_boundaries():
    with pytest.raises(InsufficientObservations):
        posterior_interval(ObservationSet([(0.0, 1.0), (0.5, 1.0)]), DirichletKernel(1.0), 0.2)


def test_interval_matches_dense_on_random_sets(rng):
    grid = np.linspace(0, 1, 101)
    for _ in range(50):
        obs = random_observations(rng)
        k = DirichletKernel(float(rng.uniform(0.2, 5)))
        mean, var = posterior_interval_grid(obs, k, grid)
        for x, m, v in zip(grid, mean, var):
            d = posterior_dense(obs, k, float(x))
            assert abs(m - d.mean) < 1e-8
            assert abs(v - d.variance) < 1e-8


def test_grid_and_scalar_posterior_agree(rng):
    obs = random_observations(rng)
    k = DirichletKernel(2.0)
    xs = rng.uniform(size=200)
    mean, var = posterior_interval_grid(obs, k, xs)
    for x, m, v in zip(xs, mean, var):
        p = posterior_interval(obs, k, float(x))
        assert p.mean == pytest.approx(m, abs=1e-14)
        assert p.variance == pytest.approx(v, abs=1e-14)


def test_interpolation_at_observations(rng):
    for _ in range(20):
        obs = random_observations(rng)
        k = DirichletKernel(3.0)
        for x, y in obs:
            p = posterior_interval(obs, k, x)
            assert p.mean == y
            assert p.variance <= 1e-12


@given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=15, unique=True), st.floats(0.0, 1.0))
def test_variance_nonnegative(inner, x):
    obs = ObservationSet([(0.0, 0.0), (1.0, 0.0)] + [(v, 0.0) for v in inner if v not in (0.0, 1.0)])
    assert posterior_interval(obs, DirichletKernel(1.3), x).variance >= 0.0


def test_markov_locality(rng):
    for _ in range(50):
        obs = random_observations(rng, n_min=5)
        s = int(rng.integers(1, len(obs) - 2))
        lo, hi = obs.xs[s], obs.xs[s + 1]
        xq = np.linspace(lo, hi, 17)
        before = posterior_interval_grid(obs, DirichletKernel(1.0), xq)
        # perturb an observation that is not one of the two neighbours
        far = next(i for i in range(len(obs)) if i not in (s, s + 1))
        changed = ObservationSet([(x, y + (5.0 if i == far else 0.0)) for i, (x, y) in enumerate(obs)])
        after = posterior_interval_grid(changed, DirichletKernel(1.0), xq)
        assert np.array_equal(before[0], after[0]) and np.array_equal(before[1], after[1])


def test_tridiagonal_inverse_interior_example():
    k = DirichletKernel(1.0)
    xs = [0.25, 0.5, 0.75]
    inv = tridiagonal_inverse_elements(xs, k)
    assert np.allclose(inv.off_diagonal, [-4.0, -4.0])
    assert np.max(np.abs(k.gram(xs) @ inv.to_dense() - np.eye(3))) < 1e-10


def test_tridiagonal_inverse_rejects_boundary_inputs():
    # kernel rows vanish at 0 and 1, so this Gramian is singular
    with pytest.raises(SingularGramian):
        tridiagonal_inverse_elements([0.0, 0.5, 1.0], DirichletKernel(1.0))


def test_tridiagonal_inverse_needs_three_points():
    with pytest.raises(InsufficientObservations):
        tridiagonal_inverse_elements([0.3, 0.6], DirichletKernel(1.0))


def test_tridiagonal_inverse_scales_with_lambda(rng):
    xs = np.sort(rng.uniform(0.01, 0.99, 8))
    a = tridiagonal_inverse_elements(xs, DirichletKernel(1.5))
    b = tridiagonal_inverse_elements(xs, DirichletKernel(3.0))
    assert np.allclose(b.diagonal, a.diagonal / 4, rtol=1e-14)
    assert np.allclose(b.off_diagonal, a.off_diagonal / 4, rtol=1e-14)


def test_tridiagonal_inverse_random_sets(rng):
    for _ in range(50):
        xs = np.sort(rng.uniform(0.02, 0.98, 10))
        if np.min(np.diff(xs)) < 1e-3:
            continue
        k = DirichletKernel(float(rng.uniform(0.5, 3)))
        inv = tridiagonal_inverse_elements(xs, k).to_dense()
        assert np.max(np.abs(k.gram(xs) @ inv - np.eye(10))) < 1e-8


def test_dense_posterior_trivia():
    k = DirichletKernel(1.0)
    p = posterior_dense(ObservationSet([(0.4, 2.0)]), k, 0.4)
    assert p.mean == pytest.approx(2.0) and p.variance == pytest.approx(0.0, abs=1e-12)
    p = posterior_dense(ObservationSet(), k, 0.3)
    assert p.mean == 0.0 and p.variance == pytest.approx(0.21)


def test_regressor_fit_predict():
    X = np.array([[0.0], [0.5], [1.0]])
    reg = DirichletGPRegressor(scale=1.0).fit(X, [0.0, 1.0, 0.0])
    mean, std = reg.predict([[0.25], [0.5]], return_std=True)
    assert mean.tolist() == [0.5, 1.0]
    assert std[1] == 0.0 and std[0] == pytest.approx(np.sqrt(0.125))
    assert reg.get_params() == {"scale": 1.0}


def test_regressor_rejects_out_of_range_inputs():
    with pytest.raises(OutOfDomain):
        DirichletGPRegressor().fit([[1.2]], [0.0])


def test_regressor_without_boundaries_uses_dense_route():
    reg = DirichletGPRegressor(scale=2.0).fit([[0.5]], [1.0])
    assert reg.predict([[0.5]])[0] == pytest.approx(1.0)
