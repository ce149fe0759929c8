import numpy as np
import pytest
from scipy.stats import ks_2samp

from extclust.errors import InvalidModel, InvalidTruncation
from extclust.models import (
    MAModel,
    dump_ma_model,
    load_ma_model,
    ma_extremal_objects,
    ma_mdep_params,
    ma_model_from_dict,
    ma_tail_law,
    sample_innovations,
    sample_ma_window,
)
from extclust.reference import ma_basic, ma_iid


def test_identity_coefficients_reproduce_innovations():
    model = ma_iid(alpha=1.5, p=0.5)
    window = sample_ma_window(model, 1000, seed=7)
    xi = sample_innovations(model, (1000,), np.random.default_rng(7))
    assert np.array_equal(window.values, xi)


def test_empty_coefficients_rejected():
    with pytest.raises(InvalidModel):
        MAModel(dim=1, coeffs={}, alpha=1.0)
    with pytest.raises(InvalidModel):
        MAModel(dim=1, coeffs={(0,): 0.0}, alpha=1.0)


def test_tail_equivalence_ratio():
    # P(|X| > u) / P(|xi| > u) approaches sum |c_j|^alpha = 1.5; at finite u
    # the ratio carries a positive second-order bias, so the band is generous.
    model = ma_basic(alpha=1.0)
    window = sample_ma_window(model, 2_000_000, seed=11)
    absx = np.abs(window.values)
    for u in (50.0, 100.0):
        ratio = float(np.mean(absx > u) * u)
        assert abs(ratio - 1.5) < 0.2


def test_ma_tail_law_atoms():
    model = ma_basic(alpha=1.0)
    law = ma_tail_law(model)
    assert law.jump_probs[(0,)] == pytest.approx(2.0 / 3.0)
    assert law.jump_probs[(1,)] == pytest.approx(1.0 / 3.0)
    vals = law.spectral_values((1,), 1)
    assert vals == {(-1,): 2.0, (0,): 1.0}
    # sign balance p = 0: every realization has K = -1
    law_neg = ma_tail_law(ma_basic(alpha=1.0, p=0.0))
    for _, direction in law_neg.atoms():
        assert all(v <= 0 for v in direction.values())


def test_ma_tail_law_probabilities_sum_to_one():
    rng = np.random.default_rng(5)
    for _ in range(25):
        k = int(rng.integers(1, 5))
        coeffs = {}
        for _ in range(k):
            coeffs[(int(rng.integers(-4, 5)),)] = float(rng.normal())
        if not any(v != 0 for v in coeffs.values()):
            continue
        model = MAModel(dim=1, coeffs=coeffs, alpha=float(rng.uniform(0.5, 3.0)), p=float(rng.uniform(0, 1)))
        law = ma_tail_law(model)
        assert abs(sum(law.jump_probs.values()) - 1.0) < 1e-12
        assert abs(sum(p for p, _ in law.atoms()) - 1.0) < 1e-12


def test_ma_extremal_objects():
    theta, atoms = ma_extremal_objects(ma_iid())
    assert theta == 1.0
    assert atoms[0][1].support == {(0,): 1.0}

    theta1, _ = ma_extremal_objects(ma_basic(alpha=1.0))
    assert theta1 == pytest.approx(2.0 / 3.0)
    theta2, _ = ma_extremal_objects(ma_basic(alpha=2.0))
    assert theta2 == pytest.approx(0.8)

    _, atoms_pm = ma_extremal_objects(ma_basic(alpha=1.0, p=0.5))
    assert len(atoms_pm) == 2
    for prob, shape in atoms_pm:
        assert prob == pytest.approx(0.5)
        assert shape.norm == pytest.approx(1.0)
        assert shape.anchor == (0,)


def test_ma_mdep_params():
    model = ma_basic(alpha=1.0)
    assert ma_mdep_params(model, 0) == (1.0, 1.0)
    theta1, d1 = ma_mdep_params(model, 1)
    assert (theta1, d1) == (pytest.approx(2.0 / 3.0), pytest.approx(1.5))
    assert theta1 * d1 == pytest.approx(1.0)  # equals max |c_j|^alpha

    with pytest.raises(InvalidTruncation):
        ma_mdep_params(MAModel(dim=1, coeffs={(5,): 1.0}, alpha=1.0), 0)


def test_mdep_product_identity_random_models():
    rng = np.random.default_rng(9)
    for _ in range(40):
        coeffs = {(int(j),): float(rng.normal()) for j in rng.integers(-6, 7, size=rng.integers(1, 6))}
        if not any(v != 0 for v in coeffs.values()):
            continue
        alpha = float(rng.uniform(0.3, 4.0))
        model = MAModel(dim=1, coeffs=coeffs, alpha=alpha)
        for m in range(0, 8):
            kept = {j: c for j, c in model.coeffs.items() if abs(j[0]) <= m}
            if not kept:
                continue
            theta_m, d_m = ma_mdep_params(model, m)
            target = max(abs(c) ** alpha for c in kept.values())
            assert theta_m * d_m == pytest.approx(target, rel=1e-12)


def test_window_stationarity_two_point_ks():
    model = ma_basic(alpha=1.0, p=0.7)
    rng = np.random.default_rng(123)
    first, last = [], []
    for _ in range(10_000):
        w = sample_ma_window(model, 8, rng)
        first.append(w.values[0])
        last.append(w.values[7])
    stat = ks_2samp(np.array(first), np.array(last))
    assert stat.pvalue > 0.01


def test_two_dimensional_window_shape():
    model = MAModel(dim=2, coeffs={(0, 0): 1.0, (1, -1): -0.5}, alpha=1.0, p=0.5)
    w = sample_ma_window(model, (30, 40), seed=3)
    assert w.extent == (30, 40)
    assert model.dependence_range == 1  # Chebyshev diameter of {(0,0),(1,-1)}


def test_model_config_roundtrip(tmp_path):
    model = MAModel(dim=2, coeffs={(0, 0): 1.0, (2, -1): -0.25}, alpha=1.7, p=0.3, scale=2.0)
    path = tmp_path / "model.toml"
    path.write_text(dump_ma_model(model))
    back = load_ma_model(path)
    assert back == model


def test_model_config_malformed():
    with pytest.raises(InvalidModel):
        ma_model_from_dict({"dim": 1, "alpha": "not-a-number", "coeffs": []})
    with pytest.raises(InvalidModel):
        ma_model_from_dict({"dim": 1, "alpha": 1.0})


def test_a_n_matches_marginal_tail():
    # n * P(|X| > a_n) should be close to 1 by construction
    model = ma_basic(alpha=1.0)
    n = 500_000
    a_n = model.a_n(n)
    w = sample_ma_window(model, n, seed=17)
    hits = int(np.count_nonzero(np.abs(w.values) > a_n))
    assert hits <= 8  # Poisson(~1) sanity bound
