"""Property-based checks of the core invariants, 100+ random cases each."""

import numpy as np
from helpers import model_from
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ideotype.climate import ClimateSet, default_generator_config, generate_climate
from ideotype.cluster import ClusteringConfig, relational_kmeans
from ideotype.cropmodel import DEFAULT_BOUNDS, Simulator, toy_yield_grid
from ideotype.moo import (
    FullEvaluator,
    ObjectivePoint,
    OptimizerConfig,
    _prune,
    mopso_cd,
    nondominated_mask,
    pareto_filter,
)
from ideotype.reconstruct import compute_residuals, cvar, expectation, quantile, reconstruct_atoms

CASES = settings(max_examples=120, deadline=None, suppress_health_check=[HealthCheck.too_slow])
CLIMATE = generate_climate(default_generator_config(years=6), seed=17)
LO, HI = DEFAULT_BOUNDS.lower, DEFAULT_BOUNDS.upper

unit_vectors = arrays(np.float64, 8, elements=st.floats(0, 1))
samples = arrays(np.float64, st.integers(1, 60), elements=st.floats(-50, 50))
alphas = st.floats(0.01, 1.0)


@CASES
@given(points=arrays(np.float64, st.tuples(st.integers(3, 12), st.just(2)), elements=st.floats(-5, 5)),
       K=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_beta_rows_stay_on_simplex(points, K, seed):
    D = np.sqrt(((points[:, None] - points[None]) ** 2).sum(-1))
    # debug mode asserts the simplex after every online step
    m = relational_kmeans(D, ClusteringConfig(K=K, T=40, restarts=1, seed=seed), debug=True)
    assert (m.beta >= 0).all()
    np.testing.assert_allclose(m.beta.sum(axis=1), 1.0, atol=1e-12)
    assert np.bincount(m.assignment, minlength=K).min() >= 1


@CASES
@given(values=samples, alpha=alphas, data=st.data())
def test_cvar_below_expectation_and_quantile(values, alpha, data):
    assert cvar(values, alpha) <= expectation(values) + 1e-9
    assert cvar(values, alpha) <= quantile(values, alpha) + 1e-9
    weights = data.draw(arrays(np.float64, values.size, elements=st.floats(0.01, 5)))
    assert cvar(values, alpha, weights) <= expectation(values, weights) + 1e-9
    assert cvar(values, alpha, weights) <= quantile(values, alpha, weights) + 1e-9
    smaller = data.draw(st.floats(0.005, alpha))
    assert cvar(values, smaller) <= cvar(values, alpha) + 1e-9


@CASES
@given(F=arrays(np.float64, st.tuples(st.integers(1, 30), st.just(2)), elements=st.floats(0, 10)),
       capacity=st.integers(1, 8))
def test_archive_mutually_nondominated(F, capacity):
    F = F.copy()
    F[:, 0] += 10.0  # keep cvar <= e
    pts = [ObjectivePoint(np.array([float(i)] + [0.0] * 7), e, c) for i, (e, c) in enumerate(F)]
    arc = pareto_filter(pts)
    assert nondominated_mask(arc.objectives).all()
    pruned = _prune(arc, capacity)
    assert len(pruned) <= capacity
    assert nondominated_mask(pruned.objectives).all()
    # every dropped point is dominated by, or tied with, a kept one
    kept = arc.objectives
    for e, c in F:
        assert ((kept[:, 0] >= e) & (kept[:, 1] >= c)).any()


def _bowl(X, C):
    """Cheap analytic stand-in for the crop model with a two-objective trade-off."""
    u = (X - LO) / (HI - LO)
    shift = C[:, 0, 4][None, :]
    return 5.0 + u[:, :1] * shift - (u[:, 1:] ** 2).sum(axis=1, keepdims=True)


@CASES
@given(seed=st.integers(0, 2**20), q=st.integers(2, 6), T=st.integers(1, 6))
def test_swarm_archive_nondominated_every_generation(seed, q, T):
    arr = np.tile([5.0, 15.0, 10.0, 2.0, 0.0], (4, 2, 1))
    arr[:, :, 4] = np.arange(4.0)[:, None]
    C = ClimateSet.from_array(arr)
    ev = FullEvaluator(C, 0.5, Simulator(model=_bowl))
    # debug asserts non-domination and capacity after each generation
    arc, _ = mopso_cd(ev, cfg=OptimizerConfig(q=q, T=T, seed=seed, alpha=0.5, debug=True))
    F = arc.objectives
    assert nondominated_mask(F).all() and (F[:, 1] <= F[:, 0]).all()


@CASES
@given(u=unit_vectors, j=st.integers(0, len(CLIMATE) - 1))
def test_more_rain_never_lowers_yield(u, j):
    x = LO + u * (HI - LO)
    c = CLIMATE.array[j]
    wetter = c.copy()
    wetter[:, 4] += 1.0
    assert toy_yield_grid(x[None], wetter[None])[0, 0] >= toy_yield_grid(x[None], c[None])[0, 0]


@CASES
@given(seed=st.integers(0, 2**20), lam=st.floats(0.01, 100), l=st.integers(1, 5), K=st.integers(1, 4))
def test_rescaled_reconstruction_scale_covariant(seed, lam, l, K):
    rng = np.random.default_rng(seed)
    N = 12
    assignment = np.concatenate([np.arange(K), rng.integers(K, size=N - K)])
    reps = [int(np.flatnonzero(assignment == k)[0]) for k in range(K)]
    model = model_from(assignment, reps)
    Y = rng.uniform(1, 6, size=(l, N))
    q = rng.uniform(1, 6, size=(1, K))
    if K > 1:
        base = reconstruct_atoms(q, compute_residuals(Y, model, "rescaled"))[0]
        scaled = reconstruct_atoms(lam * q, compute_residuals(lam * Y, model, "rescaled"))[0]
    else:
        # one class has no spread, so the rescaled method is unavailable; naive is covariant too
        base = reconstruct_atoms(q, compute_residuals(Y, model, "naive"))[0]
        scaled = reconstruct_atoms(lam * q, compute_residuals(lam * Y, model, "naive"))[0]
    np.testing.assert_allclose(scaled, lam * base, rtol=1e-9, atol=1e-12)
