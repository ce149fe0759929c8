"""Empirical tail/spectral-tail sampling and the exact time-change check.

Conditioning on an exceedance ``|X_i| > u`` and recording the rescaled
neighborhood ``X_{i+j} / |X_i|`` estimates the spectral tail field.  For the
analytic moving-average law the distributional shift identity

    E[ h(Y) 1{|Y_j| > 1} ] = E[ h((Y_{i-j})_i) 1{|Y_{-j}| > 1} ]

can be evaluated exactly: the law of Y is a finite mixture of rays
``y * v`` with Pareto-distributed ``y``, and the test functionals below are
piecewise powers of ``y`` along each ray, so both sides reduce to closed-form
integrals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidFunctional, InvalidLevel
from .lattice import LatticeWindow, add_index
from .models import TailLawMA


@dataclass(frozen=True)
class TailSample:
    """One exceedance neighborhood in spectral normalization.

    ``ratios[j] = X_{center+j} / |X_center|``; the entry at offset 0 has
    absolute value exactly 1.
    """

    center: tuple
    level: float
    magnitude: float
    ratios: Mapping

    def __post_init__(self):
        object.__setattr__(self, "ratios", dict(self.ratios))


def collect_tail_samples(window: LatticeWindow, u: float, lag_window) -> list:
    """All spectral tail samples of the window at level ``u``.

    ``lag_window`` is the finite set of offsets recorded around each
    exceedance; it must contain the origin.  Centers whose shifted window
    leaves the observed lattice are dropped.  Centers are visited in
    lexicographic order.
    """
    if u <= 0:
        raise InvalidLevel("exceedance level must be positive")
    offsets = sorted(tuple(j) for j in lag_window)
    d = window.dim
    if any(len(j) != d for j in offsets):
        raise ValueError("lag window dimension does not match the window")
    if (0,) * d not in offsets:
        raise ValueError("lag window must contain the origin")

    vals = window.values
    absvals = np.abs(vals)
    mask = absvals > u
    lo = [min(j[a] for j in offsets) for a in range(d)]
    hi = [max(j[a] for j in offsets) for a in range(d)]
    # keep only centers with the whole lag window inside the observed box
    interior = tuple(
        slice(max(0, -lo[a]), vals.shape[a] - max(0, hi[a])) for a in range(d)
    )
    inner = np.zeros_like(mask)
    inner[interior] = mask[interior]
    centers = np.argwhere(inner)

    samples = []
    for pos in centers:
        pos = tuple(int(x) for x in pos)
        mag = float(absvals[pos])
        ratios = {
            j: float(vals[add_index(pos, j)]) / mag for j in offsets
        }
        center = tuple(p + 1 for p in pos)  # back to 1-based lattice coords
        samples.append(TailSample(center=center, level=u, magnitude=mag, ratios=ratios))
    return samples


def write_tail_samples_csv(samples: Sequence[TailSample], fh) -> None:
    """CSV export: center coordinates, level, then one column per lag offset."""
    if not samples:
        fh.write("")
        return
    d = len(samples[0].center)
    offsets = sorted(samples[0].ratios.keys())
    writer = csv.writer(fh, lineterminator="\n")
    header = [f"center_{a + 1}" for a in range(d)] + ["level"]
    header += ["lag_" + "_".join(str(k) for k in j) for j in offsets]
    writer.writerow(header)
    for s in samples:
        row = [str(c) for c in s.center] + [repr(s.level)]
        row += [repr(s.ratios[j]) for j in offsets]
        writer.writerow(row)


# ---------------------------------------------------------------------------
# Exactly integrable window functionals
# ---------------------------------------------------------------------------

_COMPARISON_KINDS = ("gt", "le", "abs_gt", "abs_le")


@dataclass(frozen=True)
class Comparison:
    """Threshold condition on a single coordinate of the field."""

    offset: tuple
    kind: str
    threshold: float

    def __post_init__(self):
        if self.kind not in _COMPARISON_KINDS:
            raise InvalidFunctional(f"unknown comparison kind {self.kind!r}")
        object.__setattr__(self, "offset", tuple(self.offset))

    def holds(self, x: float) -> bool:
        t = self.threshold
        if self.kind == "gt":
            return x > t
        if self.kind == "le":
            return x <= t
        if self.kind == "abs_gt":
            return abs(x) > t
        return abs(x) <= t


@dataclass(frozen=True)
class MonomialFactor:
    """Bounded power factor ``min(|x_offset|, cap) ** power``."""

    offset: tuple
    power: float
    cap: float

    def __post_init__(self):
        if self.power <= 0:
            raise InvalidFunctional("monomial powers must be positive")
        if not (0 < self.cap < math.inf):
            raise InvalidFunctional("monomial factors need a finite positive cap")
        object.__setattr__(self, "offset", tuple(self.offset))


@dataclass(frozen=True)
class FunctionalTerm:
    coef: float
    conditions: tuple = ()
    factors: tuple = ()


@dataclass(frozen=True)
class WindowFunctional:
    """Finite sum of (indicator x bounded monomial) terms on finitely many lags.

    Every term is bounded and depends on finitely many coordinates, which is
    what keeps the mixture expectations below exact.
    """

    terms: tuple

    def evaluate(self, values: Mapping) -> float:
        total = 0.0
        for term in self.terms:
            part = term.coef
            for cond in term.conditions:
                if not cond.holds(values.get(cond.offset, 0.0)):
                    part = 0.0
                    break
            if part == 0.0:
                continue
            for f in term.factors:
                part *= min(abs(values.get(f.offset, 0.0)), f.cap) ** f.power
            total += part
        return total

    def shifted(self, shift) -> "WindowFunctional":
        """Functional evaluating this one on the field translated by ``-shift``.

        If ``g = self.shifted(s)`` then ``g(Y) = self((Y_{i+s})_i)``, i.e. each
        referenced lag moves from ``o`` to ``o + s``.
        """
        shift = tuple(shift)
        terms = []
        for term in self.terms:
            conds = tuple(
                Comparison(add_index(c.offset, shift), c.kind, c.threshold)
                for c in term.conditions
            )
            facs = tuple(
                MonomialFactor(add_index(f.offset, shift), f.power, f.cap)
                for f in term.factors
            )
            terms.append(FunctionalTerm(term.coef, conds, facs))
        return WindowFunctional(tuple(terms))

    def with_condition(self, cond: Comparison) -> "WindowFunctional":
        return WindowFunctional(
            tuple(
                FunctionalTerm(t.coef, t.conditions + (cond,), t.factors)
                for t in self.terms
            )
        )


def indicator(*conditions) -> WindowFunctional:
    return WindowFunctional((FunctionalTerm(1.0, tuple(conditions)), ))


def monomial(factors, *conditions, coef=1.0) -> WindowFunctional:
    return WindowFunctional(
        (FunctionalTerm(coef, tuple(conditions), tuple(factors)),)
    )


def _feasible_interval(conditions, direction: Mapping):
    """Interval of Pareto magnitudes y in [1, inf) where all conditions hold.

    Along a ray the coordinate at offset o equals ``y * v_o`` with ``y >= 1``,
    so each threshold condition cuts out a single interval in y.
    """
    lo, hi = 1.0, math.inf
    for cond in conditions:
        v = direction.get(cond.offset, 0.0)
        t = cond.threshold
        if cond.kind == "gt":
            if v > 0:
                lo = max(lo, t / v)
            elif v < 0:
                hi = min(hi, t / v)
            elif not 0.0 > t:
                return None
        elif cond.kind == "le":
            if v > 0:
                hi = min(hi, t / v)
            elif v < 0:
                lo = max(lo, t / v)
            elif not 0.0 <= t:
                return None
        elif cond.kind == "abs_gt":
            if t < 0:
                continue
            if v == 0:
                return None
            lo = max(lo, t / abs(v))
        else:  # abs_le
            if t < 0:
                return None
            if v != 0:
                hi = min(hi, t / abs(v))
    if lo >= hi:
        return None
    return lo, hi


def _pareto_piece(alpha: float, q: float, a: float, b: float) -> float:
    """Integral of ``y^q * alpha * y^(-alpha-1)`` over ``(a, b)``."""
    if b == math.inf:
        if q - alpha >= 0:
            raise InvalidFunctional("unbounded functional: diverging Pareto integral")
        return alpha / (alpha - q) * a ** (q - alpha)
    if q == alpha:
        return alpha * math.log(b / a)
    return alpha / (q - alpha) * (b ** (q - alpha) - a ** (q - alpha))


def _term_expectation(term: FunctionalTerm, direction: Mapping, alpha: float) -> float:
    interval = _feasible_interval(term.conditions, direction)
    if interval is None or term.coef == 0.0:
        return 0.0
    lo, hi = interval
    active = []
    for f in term.factors:
        v = abs(direction.get(f.offset, 0.0))
        if v == 0.0:
            return 0.0  # min(0, cap) ** power == 0 kills the term
        active.append((v, f.power, f.cap))
    cuts = sorted({f[2] / f[0] for f in active if lo < f[2] / f[0] < hi})
    knots = [lo] + cuts + [hi]
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        mid = a + 0.5 * (min(b, 2 * a + 1.0) - a)  # finite probe point in (a, b)
        const, q = 1.0, 0.0
        for v, power, cap in active:
            if mid * v < cap:
                const *= v**power
                q += power
            else:
                const *= cap**power
        total += const * _pareto_piece(alpha, q, a, b)
    return term.coef * total


def expect_pareto_mixture(atoms, alpha: float, functional: WindowFunctional) -> float:
    """Exact expectation of the functional under a Pareto ray mixture.

    ``atoms`` is an iterable of ``(probability, direction map)``; the law is
    ``y * v`` with ``v`` the direction and ``y`` Pareto(alpha) on ``[1, inf)``.
    """
    total = 0.0
    for prob, direction in atoms:
        for term in functional.terms:
            total += prob * _term_expectation(term, direction, alpha)
    return total


def time_change_check(law: TailLawMA, h: WindowFunctional, j) -> tuple:
    """Both sides of the distributional shift identity at lag ``j``.

    Returns ``(lhs, rhs)`` where
    ``lhs = E[h(Y) 1{|Y_j| > 1}]`` and ``rhs = E[h((Y_{i-j})_i) 1{|Y_{-j}| > 1}]``,
    computed by exact enumeration over the jump/sign atoms and closed-form
    integration over the Pareto magnitude.
    """
    j = tuple(j)
    d = law.model.dim
    if len(j) != d:
        raise InvalidFunctional(f"lag {j} has dimension != {d}")
    atoms = law.tail_atoms()
    neg_j = tuple(-x for x in j)

    lhs_fun = h.with_condition(Comparison(j, "abs_gt", 1.0))
    lhs = expect_pareto_mixture(atoms, law.alpha, lhs_fun)

    # h evaluated on the field shifted so that lag o reads Y_{o-j}
    rhs_fun = h.shifted(neg_j).with_condition(Comparison(neg_j, "abs_gt", 1.0))
    rhs = expect_pareto_mixture(atoms, law.alpha, rhs_fun)
    return lhs, rhs
