"""Reference models used by the test suite and the shipped example configs."""

from __future__ import annotations

import math

import numpy as np

from .alignment import ScoreModel
from .models import MAModel


def ma_basic(alpha: float = 1.0, p: float = 1.0) -> MAModel:
    """One-dimensional moving average with coefficients 1 and 1/2."""
    return MAModel(dim=1, coeffs={(0,): 1.0, (1,): 0.5}, alpha=alpha, p=p)


def ma_iid(alpha: float = 1.0, p: float = 1.0) -> MAModel:
    """Degenerate moving average equal to the innovation field."""
    return MAModel(dim=1, coeffs={(0,): 1.0}, alpha=alpha, p=p)


def four_letter_pm1() -> ScoreModel:
    """Uniform 4-letter alphabet, +1 match / -1 mismatch (lattice, span 1)."""
    return ScoreModel(
        alphabet=("A", "C", "G", "T"),
        mu_a=np.full(4, 0.25),
        mu_b=np.full(4, 0.25),
        scores=np.where(np.eye(4, dtype=bool), 1.0, -1.0),
    )


def two_letter_lattice() -> ScoreModel:
    """Uniform 2-letter alphabet, +1 match / -2 mismatch (lattice, span 1)."""
    return ScoreModel(
        alphabet=("0", "1"),
        mu_a=np.full(2, 0.5),
        mu_b=np.full(2, 0.5),
        scores=np.where(np.eye(2, dtype=bool), 1.0, -2.0),
    )


def two_letter_nonlattice() -> ScoreModel:
    """Nonlattice 2-letter reference model for the Gumbel-limit validation.

    Mismatch score -(1+sqrt(2)) and diagonal scores 1 and sqrt(3).  The three
    pairwise-incommensurable generators keep the achievable sums of the score
    walk dense, so the law of the maximal score has no heavy atoms at n ~ 1000
    (a pure two-value score matrix yields visible quasi-lattice atoms there).
    """
    mm = -(1.0 + math.sqrt(2.0))
    return ScoreModel(
        alphabet=("x", "y"),
        mu_a=np.full(2, 0.5),
        mu_b=np.full(2, 0.5),
        scores=np.array([[1.0, mm], [mm, math.sqrt(3.0)]]),
    )
