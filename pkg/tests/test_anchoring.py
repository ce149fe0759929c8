import numpy as np
import pytest

from extclust.anchoring import (
    AnchorKind,
    anchor_index,
    estimate_theta_anchored,
    palm_check,
)
from extclust.errors import DegenerateCluster, InsufficientData, NoExceedance
from extclust.models import (
    ma_cluster_sampler,
    ma_extremal_objects,
    ma_tail_law,
    ma_tail_sampler,
    sample_ma_window,
)
from extclust.reference import ma_basic, ma_iid

ALL_KINDS = list(AnchorKind)


def test_anchor_index_examples():
    values = {(0,): 0.5, (1,): 2.0, (2,): 3.0, (3,): 0.2}
    assert anchor_index(values, AnchorKind.FIRST_EXCEEDANCE) == (1,)
    assert anchor_index(values, AnchorKind.LAST_EXCEEDANCE) == (2,)
    assert anchor_index(values, AnchorKind.FIRST_MAX) == (2,)

    tie = {(0, 1): 5.0, (1, 0): 5.0}
    assert anchor_index(tie, AnchorKind.FIRST_MAX) == (0, 1)

    with pytest.raises(NoExceedance):
        anchor_index({(0,): 0.3, (1,): 0.9}, AnchorKind.FIRST_EXCEEDANCE)
    with pytest.raises(DegenerateCluster):
        anchor_index({(0,): 0.0}, AnchorKind.FIRST_MAX)


def test_anchor_translation_covariance():
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = int(rng.integers(1, 3))
        n = int(rng.integers(1, 6))
        values = {}
        for _ in range(n):
            idx = tuple(int(x) for x in rng.integers(-5, 6, d))
            values[idx] = float(rng.normal() * 2.0)
        if not values or all(abs(v) <= 1.0 for v in values.values()):
            values[(0,) * d] = 1.5
        shift = tuple(int(x) for x in rng.integers(-10, 11, d))
        shifted = {tuple(a + b for a, b in zip(k, shift)): v for k, v in values.items()}
        for kind in ALL_KINDS:
            base = anchor_index(values, kind)
            moved = anchor_index(shifted, kind)
            assert moved == tuple(a + b for a, b in zip(base, shift))


def test_theta_iid_field_is_one():
    window = sample_ma_window(ma_iid(alpha=1.0), 200_000, seed=1)
    u = float(np.quantile(np.abs(window.values), 0.9995))
    for kind in ALL_KINDS:
        est = estimate_theta_anchored(window, u, m=3, kind=kind)
        assert est.theta_hat <= 1.0
        assert est.theta_hat >= 1.0 - 2 * est.stderr - 0.02


def test_theta_requires_exceedances():
    window = sample_ma_window(ma_iid(), 1000, seed=2)
    u = float(np.max(np.abs(window.values))) + 1.0
    with pytest.raises(InsufficientData):
        estimate_theta_anchored(window, u, m=2, kind=AnchorKind.FIRST_MAX)


def test_theta_ma_all_kinds_and_invariance():
    model = ma_basic(alpha=1.0)
    window = sample_ma_window(model, 100_000, seed=3)
    u = float(np.quantile(np.abs(window.values), 0.999))
    ests = {kind: estimate_theta_anchored(window, u, m=5, kind=kind) for kind in ALL_KINDS}
    for kind, est in ests.items():
        assert 0.0 <= est.theta_hat <= 1.0
        assert abs(est.theta_hat - 2.0 / 3.0) <= 3 * est.stderr
    pairs = [(a, b) for i, a in enumerate(ALL_KINDS) for b in ALL_KINDS[i + 1 :]]
    for a, b in pairs:
        se = np.hypot(ests[a].stderr, ests[b].stderr)
        assert abs(ests[a].theta_hat - ests[b].theta_hat) <= 3 * se


def test_theta_reciprocal_identity():
    model = ma_basic(alpha=1.0)
    window = sample_ma_window(model, 100_000, seed=4)
    u = float(np.quantile(np.abs(window.values), 0.999))
    est = estimate_theta_anchored(window, u, m=5, kind=AnchorKind.FIRST_MAX)
    prod = est.theta_hat * est.mean_cluster_size
    se = np.hypot(
        est.mean_cluster_size * est.stderr, est.theta_hat * est.cluster_size_se
    )
    assert abs(prod - 1.0) <= 3 * se + 1e-9


def _norm_indicator(t):
    return lambda shape: 1.0 if shape.norm > t else 0.0


def test_palm_identity_h_equal_one():
    model = ma_basic(alpha=1.0)
    theta, _ = ma_extremal_objects(model)
    res = palm_check(
        ma_cluster_sampler(model),
        ma_tail_sampler(ma_tail_law(model)),
        lambda shape: 1.0,
        theta=theta,
        reps=30_000,
        seed=5,
    )
    assert res.lhs == pytest.approx(1.0)
    assert abs(res.rhs - 1.0) <= 3 * res.rhs_se


def test_palm_identity_iid_cluster_size_one():
    model = ma_iid(alpha=1.0)
    theta, _ = ma_extremal_objects(model)
    assert theta == 1.0
    res = palm_check(
        ma_cluster_sampler(model),
        ma_tail_sampler(ma_tail_law(model)),
        lambda shape: 1.0,
        theta=theta,
        reps=5_000,
        seed=6,
    )
    # every cluster has exactly one exceedance, so both sides are exactly 1
    assert res.lhs == 1.0
    assert res.rhs == 1.0


def _palm_exact_sides(model, t):
    """Hand-integrated values of both Palm sides for h = 1{norm > t}."""
    alpha = model.alpha
    cmax = max(abs(c) for c in model.coeffs.values())
    total = sum(abs(c) ** alpha for c in model.coeffs.values())
    # lhs: norm(Y) = y * cmax / |c_J|
    lhs = 0.0
    for j, cj in model.coeffs.items():
        pj = abs(cj) ** alpha / total
        thresh = max(1.0, t * abs(cj) / cmax)
        lhs += pj * thresh ** (-alpha)
    # rhs: theta * E[1{y > t} * #{j: y |c_j|/cmax > 1}]
    theta = cmax**alpha / total
    rhs = 0.0
    for j, cj in model.coeffs.items():
        thresh = max(t, cmax / abs(cj), 1.0)
        rhs += thresh ** (-alpha)
    rhs *= theta
    return lhs, rhs


def test_palm_identity_ma_norm_indicator():
    model = ma_basic(alpha=1.0)
    theta, _ = ma_extremal_objects(model)
    lhs_exact, rhs_exact = _palm_exact_sides(model, 2.0)
    assert lhs_exact == pytest.approx(rhs_exact, abs=1e-12)
    assert lhs_exact == pytest.approx(2.0 / 3.0, abs=1e-12)

    res = palm_check(
        ma_cluster_sampler(model),
        ma_tail_sampler(ma_tail_law(model)),
        _norm_indicator(2.0),
        theta=theta,
        reps=60_000,
        seed=7,
    )
    assert abs(res.lhs - res.rhs) <= 3 * res.combined_se
    assert abs(res.lhs - lhs_exact) <= 3 * res.lhs_se
    assert abs(res.rhs - rhs_exact) <= 3 * res.rhs_se
