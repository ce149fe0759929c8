import io

import numpy as np
import pytest

from extclust.errors import InvalidFunctional, InvalidLevel
from extclust.lattice import box_offsets
from extclust.models import ma_tail_law, sample_ma_window
from extclust.reference import ma_basic, ma_iid
from extclust.tailproc import (
    Comparison,
    MonomialFactor,
    WindowFunctional,
    collect_tail_samples,
    expect_pareto_mixture,
    indicator,
    monomial,
    time_change_check,
    write_tail_samples_csv,
)


def test_collect_requires_positive_level():
    w = sample_ma_window(ma_iid(), 100, seed=0)
    with pytest.raises(InvalidLevel):
        collect_tail_samples(w, 0.0, [(0,)])


def test_collect_empty_above_max():
    w = sample_ma_window(ma_iid(), 1000, seed=1)
    u = float(np.max(np.abs(w.values))) + 1.0
    assert collect_tail_samples(w, u, box_offsets(1, 2)) == []


def test_spectral_normalization_exact():
    w = sample_ma_window(ma_basic(p=0.5), 20_000, seed=2)
    u = float(np.quantile(np.abs(w.values), 0.99))
    samples = collect_tail_samples(w, u, box_offsets(1, 3))
    assert samples
    for s in samples[:200]:
        assert abs(abs(s.ratios[(0,)]) - 1.0) == 0.0
        assert s.magnitude > u


def test_iid_field_has_vanishing_neighbors():
    w = sample_ma_window(ma_iid(alpha=1.0), 2_000_000, seed=3)
    u = float(np.quantile(np.abs(w.values), 0.999))
    samples = collect_tail_samples(w, u, box_offsets(1, 2))
    assert len(samples) > 1000
    for j in [(-2,), (-1,), (1,), (2,)]:
        frac = np.mean([abs(s.ratios[j]) > 0.5 for s in samples])
        assert frac < 0.02


def test_ma_neighbor_ratio_matches_tail_law():
    # P(Theta_1 > 0.4) = P(J = 0) = 2/3 for coefficients {1, 0.5}, alpha 1
    w = sample_ma_window(ma_basic(alpha=1.0), 4_000_000, seed=4)
    u = float(np.quantile(np.abs(w.values), 0.999))
    samples = collect_tail_samples(w, u, box_offsets(1, 1))
    frac = float(np.mean([s.ratios[(1,)] > 0.4 for s in samples]))
    se = np.sqrt(frac * (1 - frac) / len(samples))
    assert abs(frac - 2.0 / 3.0) < 3 * se + 0.01


def test_empirical_spectral_law_total_variation():
    # sign(Theta_1) * bucket(|Theta_1|) against the exact two-atom law
    model = ma_basic(alpha=1.0)
    w = sample_ma_window(model, 6_000_000, seed=5)
    u = float(np.quantile(np.abs(w.values), 0.999))
    samples = collect_tail_samples(w, u, box_offsets(1, 1))
    assert len(samples) >= 5000
    # exact law of Theta_1: 0.5 w.p. 2/3, 0 w.p. 1/3 (p = 1)
    atoms = {0.5: 2.0 / 3.0, 0.0: 1.0 / 3.0}
    edges = [0.25]  # midpoint between the atom magnitudes

    def bucket(x):
        return 0.5 if abs(x) > edges[0] else 0.0

    emp = {}
    for s in samples:
        key = np.sign(s.ratios[(1,)]) * bucket(s.ratios[(1,)]) + 0.0
        emp[key] = emp.get(key, 0) + 1
    n = len(samples)
    tv = 0.5 * sum(
        abs(emp.get(k, 0) / n - atoms.get(k, 0.0)) for k in set(emp) | set(atoms)
    )
    assert tv <= 0.05


def test_tail_sample_csv_export():
    w = sample_ma_window(ma_basic(), 50_000, seed=6)
    u = float(np.quantile(np.abs(w.values), 0.995))
    samples = collect_tail_samples(w, u, box_offsets(1, 1))
    buf = io.StringIO()
    write_tail_samples_csv(samples, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "center_1,level,lag_-1,lag_0,lag_1"
    assert len(lines) == len(samples) + 1


BATTERY = [
    indicator(Comparison((0,), "gt", 2.0)),
    indicator(Comparison((0,), "le", -0.5)),
    indicator(Comparison((1,), "abs_gt", 0.3)),
    indicator(Comparison((0,), "gt", 1.0), Comparison((1,), "le", 0.8)),
    indicator(Comparison((-1,), "abs_gt", 0.5)),
    monomial([MonomialFactor((0,), 1.0, 2.0)]),
    monomial([MonomialFactor((0,), 1.0, 1.5), MonomialFactor((1,), 1.0, 1.0)]),
    monomial([MonomialFactor((1,), 2.0, 2.0)]),
    monomial([MonomialFactor((-1,), 1.0, 3.0)], Comparison((0,), "gt", 1.2)),
    monomial([MonomialFactor((2,), 1.0, 1.0)], Comparison((0,), "abs_le", 4.0)),
]


def test_time_change_identity_battery():
    law = ma_tail_law(ma_basic(alpha=1.0, p=0.6))
    lags = [(j,) for j in range(-3, 4)]
    for h in BATTERY:
        for j in lags:
            lhs, rhs = time_change_check(law, h, j)
            assert abs(lhs - rhs) <= 1e-12


def test_time_change_lag_zero_trivial():
    law = ma_tail_law(ma_basic(alpha=1.3, p=0.4))
    for h in BATTERY[:4]:
        lhs, rhs = time_change_check(law, h, (0,))
        assert lhs == pytest.approx(rhs, abs=1e-15)
        # |Y_0| > 1 holds almost surely, so the indicator costs nothing
        plain = expect_pareto_mixture(law.tail_atoms(), law.alpha, h)
        assert lhs == pytest.approx(plain, abs=1e-12)


def test_time_change_outside_support_is_zero():
    law = ma_tail_law(ma_basic())
    lhs, rhs = time_change_check(law, indicator(Comparison((0,), "gt", 2.0)), (7,))
    assert lhs == 0.0 and rhs == 0.0


def test_time_change_monte_carlo_cross_check():
    model = ma_basic(alpha=1.0, p=0.6)
    law = ma_tail_law(model)
    h = indicator(Comparison((0,), "gt", 2.0))
    lhs, _ = time_change_check(law, h, (1,))
    rng = np.random.default_rng(8)
    n = 400_000
    y = rng.random(n) ** -1.0
    jumps = np.where(rng.random(n) < 2.0 / 3.0, 0, 1)
    signs = np.where(rng.random(n) < 0.6, 1.0, -1.0)
    c = {0: 1.0, 1: 0.5}
    cj = np.where(jumps == 0, 1.0, 0.5)
    y0 = y * signs * np.array([c.get(j, 0.0) for j in jumps]) / cj
    y1 = y * signs * np.array([c.get(1 + j, 0.0) for j in jumps]) / cj
    mc = float(np.mean((y0 > 2.0) & (np.abs(y1) > 1.0)))
    se = np.sqrt(mc * (1 - mc) / n)
    assert abs(mc - lhs) < 4 * se


def test_functional_evaluate_matches_integral_on_point_mass():
    # a degenerate "mixture" with one direction still integrates the Pareto
    h = monomial([MonomialFactor((0,), 1.0, 2.0)])
    direction = {(0,): 1.0}
    # E[min(y, 2)] with y Pareto(2) on [1, inf): 2 - 2/2 + (integral) = 1.5
    val = expect_pareto_mixture([(1.0, direction)], 2.0, h)
    assert val == pytest.approx(1.5, abs=1e-12)


def test_invalid_functionals_rejected():
    with pytest.raises(InvalidFunctional):
        MonomialFactor((0,), -1.0, 2.0)
    with pytest.raises(InvalidFunctional):
        MonomialFactor((0,), 1.0, float("inf"))
    with pytest.raises(InvalidFunctional):
        Comparison((0,), "between", 1.0)


def test_functional_evaluation_on_values():
    h = WindowFunctional(
        tuple(
            term
            for f in [
                indicator(Comparison((0,), "gt", 1.0)),
                monomial([MonomialFactor((1,), 1.0, 2.0)], coef=2.0),
            ]
            for term in f.terms
        )
    )
    assert h.evaluate({(0,): 1.5, (1,): 3.0}) == pytest.approx(1.0 + 2.0 * 2.0)
    assert h.evaluate({(0,): 0.5}) == 0.0
