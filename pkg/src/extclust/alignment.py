"""Gapless local-alignment score statistics.

Two i.i.d. letter sequences are compared through a score function ``s`` with
negative mean; the running best gapless match ending at ``(i, j)`` satisfies
the Lindley recursion ``S_{i,j} = (S_{i-1,j-1} + s(A_i, B_j))_+`` along each
diagonal.  The maximal score over an ``n x n`` comparison is asymptotically
Gumbel:

    P(M_n - 2 log(n)/theta_star <= x)  ->  exp(-K e^{-theta_star x}),

where ``theta_star`` solves ``E[exp(theta_star s(A,B))] = 1``, ``K`` is the
product of the extremal index of the score field and the exponential-tail
prefactor ``C`` of a single stationary score, and both factors are computed
here by Monte Carlo with explicit, tolerance-driven stopping rules based on
the exponential bound ``P(walk ever rises by D) <= exp(-theta_star D)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import kstest

from .errors import (
    BracketFailure,
    DriftViolation,
    InvalidModel,
    NoPositiveScore,
    SupportViolation,
)
from .lattice import LatticeWindow

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreModel:
    """Alphabet, letter frequencies for both sequences, and a score matrix."""

    alphabet: tuple
    mu_a: np.ndarray
    mu_b: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        alphabet = tuple(str(a) for a in self.alphabet)
        mu_a = np.asarray(self.mu_a, dtype=float)
        mu_b = np.asarray(self.mu_b, dtype=float)
        scores = np.asarray(self.scores, dtype=float)
        n = len(alphabet)
        if n < 2:
            raise InvalidModel("alphabet needs at least two letters")
        if mu_a.shape != (n,) or mu_b.shape != (n,):
            raise InvalidModel("letter frequencies must match the alphabet size")
        if scores.shape != (n, n) or not np.all(np.isfinite(scores)):
            raise InvalidModel("score matrix must be finite and |E| x |E|")
        if np.any(mu_a <= 0) or np.any(mu_b <= 0):
            raise InvalidModel("every letter needs strictly positive frequency")
        if abs(mu_a.sum() - 1.0) > 1e-9 or abs(mu_b.sum() - 1.0) > 1e-9:
            raise InvalidModel("letter frequencies must sum to 1")
        mu_a = mu_a / mu_a.sum()
        mu_b = mu_b / mu_b.sum()
        for arr in (mu_a, mu_b, scores):
            arr.flags.writeable = False
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "mu_a", mu_a)
        object.__setattr__(self, "mu_b", mu_b)
        object.__setattr__(self, "scores", scores)

    @property
    def size(self) -> int:
        return len(self.alphabet)

    def pair_probs(self) -> np.ndarray:
        return np.outer(self.mu_a, self.mu_b)

    def drift(self) -> float:
        return float(np.sum(self.pair_probs() * self.scores))


def load_score_model(path) -> ScoreModel:
    """Read a score model from TOML: alphabet, freqs_a, freqs_b, score rows."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return score_model_from_dict(data)


def score_model_from_dict(data: Mapping) -> ScoreModel:
    try:
        return ScoreModel(
            alphabet=tuple(data["alphabet"]),
            mu_a=np.array(data["freqs_a"], dtype=float),
            mu_b=np.array(data["freqs_b"], dtype=float),
            scores=np.array(data["scores"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModel(f"malformed score model description: {exc}") from exc


def dump_score_model(model: ScoreModel) -> str:
    lines = ["alphabet = [" + ", ".join(f'"{a}"' for a in model.alphabet) + "]"]
    lines.append("freqs_a = [" + ", ".join(repr(float(x)) for x in model.mu_a) + "]")
    lines.append("freqs_b = [" + ", ".join(repr(float(x)) for x in model.mu_b) + "]")
    lines.append("scores = [")
    for row in model.scores:
        lines.append("    [" + ", ".join(repr(float(x)) for x in row) + "],")
    lines.append("]")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Validation and lattice detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    drift: float
    positive_mass: float
    lattice: bool
    lattice_span: Optional[float]


def _float_gcd(a: float, b: float, tol: float) -> float:
    a, b = abs(a), abs(b)
    while b > tol:
        a, b = b, abs(a - b * round(a / b))
    return a


def lattice_span(values: Sequence[float], tol: float = 1e-9) -> Optional[float]:
    """Largest span delta with all values in delta*Z, or None if nonlattice.

    Values within ``tol`` (relative to the largest magnitude) of 0 are
    ignored; a candidate span smaller than 1e-6 of the magnitude scale is
    treated as evidence of incommensurability rather than a real lattice.
    """
    scale = max((abs(v) for v in values), default=0.0)
    if scale == 0.0:
        return None
    abs_tol = tol * scale
    vals = [abs(v) for v in values if abs(v) > abs_tol]
    if not vals:
        return None
    g = 0.0
    for v in vals:
        g = _float_gcd(g, v, abs_tol)
    if g <= 1e-6 * scale:
        return None
    if all(abs(v - g * round(v / g)) <= abs_tol for v in vals):
        return g
    return None


def validate_model(model: ScoreModel, tol: float = 1e-9) -> ValidationReport:
    """Check the standing hypotheses and detect lattice-valued scores.

    Raises :class:`DriftViolation` when ``E[s(A,B)] >= 0`` and
    :class:`NoPositiveScore` when no score value is positive.
    """
    drift = model.drift()
    if drift >= 0:
        raise DriftViolation(f"mean score {drift} must be negative")
    positive_mass = float(np.sum(model.pair_probs()[model.scores > 0]))
    if positive_mass <= 0:
        raise NoPositiveScore("the score matrix never exceeds 0")
    span = lattice_span(model.scores.reshape(-1), tol=tol)
    return ValidationReport(
        drift=drift,
        positive_mass=positive_mass,
        lattice=span is not None,
        lattice_span=span,
    )


# ---------------------------------------------------------------------------
# Lundberg root, tilting, entropies
# ---------------------------------------------------------------------------


def log_mgf(model: ScoreModel, theta: float) -> float:
    """log E[exp(theta * s(A,B))] under the product letter measure."""
    w = np.log(model.pair_probs().reshape(-1))
    return float(logsumexp(theta * model.scores.reshape(-1) + w))


def lundberg_solve(model: ScoreModel, tol: float = 1e-12) -> float:
    """Unique positive root of ``E[exp(theta * s(A,B))] = 1``.

    The moment generating function is strictly convex with value 1 and
    negative slope at 0, so it crosses 1 exactly once on the positive axis.
    Exponential bracket growth followed by bisection (plus a few safeguarded
    Newton polish steps) is unconditionally safe.
    """
    validate_model(model)

    lo = 1.0
    for _ in range(200):
        if log_mgf(model, lo) < 0:
            break
        lo /= 2.0
    else:
        raise BracketFailure("could not find theta with m(theta) < 1")
    hi = lo
    for _ in range(200):
        hi *= 2.0
        if log_mgf(model, hi) > 0:
            break
    else:
        raise BracketFailure("could not bracket the root before the overflow guard")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if log_mgf(model, mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break

    theta = 0.5 * (lo + hi)
    probs = model.pair_probs().reshape(-1)
    svals = model.scores.reshape(-1)
    for _ in range(4):  # Newton polish on log m, kept inside the bracket
        f = log_mgf(model, theta)
        expo = theta * svals
        w = probs * np.exp(expo - expo.max())
        deriv = float(np.sum(w * svals) / np.sum(w))
        if deriv == 0:
            break
        cand = theta - f / deriv
        if lo <= cand <= hi:
            theta = cand
    if abs(math.exp(log_mgf(model, theta)) - 1.0) > tol:
        raise BracketFailure(f"root refinement stalled above tolerance {tol}")
    return float(theta)


@dataclass(frozen=True)
class TiltedModel:
    """Exponentially tilted pair measure ``mu*(a,b) = e^{theta* s} mu_A mu_B``."""

    theta_star: float
    mu_star: np.ndarray
    mu_star_a: np.ndarray
    mu_star_b: np.ndarray

    @property
    def normalization_error(self) -> float:
        return abs(float(self.mu_star.sum()) - 1.0)


def tilt(model: ScoreModel, theta_star: float) -> TiltedModel:
    mu_star = np.exp(theta_star * model.scores) * model.pair_probs()
    tilted = TiltedModel(
        theta_star=theta_star,
        mu_star=mu_star,
        mu_star_a=mu_star.sum(axis=1),
        mu_star_b=mu_star.sum(axis=0),
    )
    if theta_star > 0:
        mean = float(np.sum(mu_star * model.scores) / mu_star.sum())
        if mean <= 0:
            raise InvalidModel("tilted mean score is not positive; bad root?")
    return tilted


def relative_entropy(nu, mu) -> float:
    """``sum nu log(nu/mu)`` with the 0 log 0 = 0 convention."""
    nu = np.asarray(nu, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if nu.shape != mu.shape:
        raise SupportViolation("distributions live on different supports")
    mask = nu > 0
    if np.any(mu[mask] <= 0):
        raise SupportViolation("nu puts mass where mu vanishes")
    return float(np.sum(nu[mask] * np.log(nu[mask] / mu[mask])))


@dataclass(frozen=True)
class EPrimeReport:
    holds: bool
    lhs: float
    rhs: float
    margin: float


def check_E_prime(model: ScoreModel, tilted: TiltedModel) -> EPrimeReport:
    """Entropy inequality controlling off-diagonal extremal dependence.

    Evaluates ``H(mu* | mu_A x mu_B) > 2 max{H(mu*_A | mu_A), H(mu*_B | mu_B)}``
    exactly and reports the margin.
    """
    lhs = relative_entropy(tilted.mu_star, model.pair_probs())
    rhs = 2.0 * max(
        relative_entropy(tilted.mu_star_a, model.mu_a),
        relative_entropy(tilted.mu_star_b, model.mu_b),
    )
    return EPrimeReport(holds=lhs > rhs, lhs=lhs, rhs=rhs, margin=lhs - rhs)


# ---------------------------------------------------------------------------
# Increment laws and sequence sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IncrementLaw:
    """Finite discrete law of walk increments with fast inverse-cdf sampling."""

    values: np.ndarray
    probs: np.ndarray
    cdf: np.ndarray = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        probs = probs / probs.sum()
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        for arr in (values, probs, cdf):
            arr.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "cdf", cdf)

    @property
    def mean(self) -> float:
        return float(np.sum(self.values * self.probs))

    def sample(self, rng, size) -> np.ndarray:
        u = rng.random(size)
        return self.values[np.searchsorted(self.cdf, u, side="right")]


def product_increments(model: ScoreModel) -> IncrementLaw:
    """Law of ``s(A, B)`` under the product letter measure."""
    return IncrementLaw(model.scores.reshape(-1), model.pair_probs().reshape(-1))


def tilted_increments(model: ScoreModel, tilted: TiltedModel) -> IncrementLaw:
    """Law of ``s(A, B)`` under the tilted pair measure (positive drift)."""
    return IncrementLaw(model.scores.reshape(-1), tilted.mu_star.reshape(-1))


def _letter_sampler(mu: np.ndarray):
    cdf = np.cumsum(mu)
    cdf[-1] = 1.0

    def draw(rng, size):
        return np.searchsorted(cdf, rng.random(size), side="right")

    return draw


# ---------------------------------------------------------------------------
# Score field simulation
# ---------------------------------------------------------------------------


def default_burn_in(model: ScoreModel, theta_star: float, tol: float = 1e-6) -> int:
    """Diagonal burn-in making the initialization error bound below ``tol``.

    Uses the exponential rebound bound at half the drift rate:
    ``exp(-theta_star * |drift| * L / 2) < tol``.
    """
    drift = abs(model.drift())
    return int(math.ceil(2.0 * math.log(1.0 / tol) / (theta_star * drift)))


def score_field(
    model: ScoreModel,
    n: int,
    seed,
    mode: str = "truncated",
    burn_in_tol: float = 1e-6,
    theta_star: Optional[float] = None,
    return_letters: bool = False,
):
    """Simulate the ``n x n`` field of running best local alignment scores.

    ``truncated`` starts both sequences at index 1, reproducing the finite
    comparison exactly.  ``stationary`` prepends a burn-in stretch of letters
    along both axes so the returned core is (up to ``burn_in_tol``) a sample
    of the stationary score field.
    """
    if n < 1:
        raise InvalidModel("field size must be >= 1")
    if mode not in ("truncated", "stationary"):
        raise ValueError(f"unknown mode {mode!r}")
    burn = 0
    if mode == "stationary":
        if theta_star is None:
            theta_star = lundberg_solve(model)
        burn = default_burn_in(model, theta_star, burn_in_tol)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    total = n + burn
    draw_a = _letter_sampler(model.mu_a)
    draw_b = _letter_sampler(model.mu_b)
    a_seq = draw_a(rng, total)
    b_seq = draw_b(rng, total)

    out = np.empty((n, n))
    prev = np.zeros(total)
    for i in range(total):
        eps_row = model.scores[a_seq[i]][b_seq]
        cur = np.empty(total)
        cur[0] = max(eps_row[0], 0.0)
        np.maximum(prev[:-1] + eps_row[1:], 0.0, out=cur[1:])
        if i >= burn:
            out[i - burn] = cur[burn:]
        prev = cur
    window = LatticeWindow(out)
    if return_letters:
        return window, a_seq[burn:], b_seq[burn:]
    return window


def simulate_max_score(
    model: ScoreModel, n: int, rng, mode: str = "truncated", burn: int = 0
) -> float:
    """Running maximum of the score field without storing it."""
    total = n + burn
    draw_a = _letter_sampler(model.mu_a)
    draw_b = _letter_sampler(model.mu_b)
    a_seq = draw_a(rng, total)
    b_seq = draw_b(rng, total)
    prev = np.zeros(total)
    best = 0.0
    for i in range(total):
        eps_row = model.scores[a_seq[i]][b_seq]
        cur = np.empty(total)
        cur[0] = max(eps_row[0], 0.0)
        np.maximum(prev[:-1] + eps_row[1:], 0.0, out=cur[1:])
        if i >= burn:
            m = float(cur[burn:].max())
            if m > best:
                best = m
        prev = cur
    return best


def heatmap_export(window: LatticeWindow, threshold: float) -> list:
    """Sparse ``(i, j, value)`` triplets with value above the threshold."""
    if window.dim != 2:
        raise ValueError("heatmap export expects a two-dimensional window")
    hits = np.argwhere(window.values > threshold)
    return [
        (int(i) + 1, int(j) + 1, float(window.values[i, j])) for i, j in hits
    ]


# ---------------------------------------------------------------------------
# Monte Carlo constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    reps: int


def extremal_index_alignment(
    model: ScoreModel,
    theta_star: float,
    reps: int,
    tol: float = 1e-8,
    seed=0,
    chunk: int = 1 << 16,
    steps_per_round: int = 64,
) -> MonteCarloEstimate:
    """Extremal index of the score field by direct simulation.

    Draws an exponential level ``G`` with rate ``theta_star`` and runs the
    negative-drift walk of product-measure increments; the replicate succeeds
    if the walk never exceeds ``-G``.  A path is declared successful once the
    rebound needed to fail has probability below ``tol`` under the exponential
    bound, so each replicate terminates after finitely many steps.
    """
    law = product_increments(model)
    if law.mean >= 0:
        raise DriftViolation("walk drift must be negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    band = math.log(1.0 / tol) / theta_star

    n_success = 0
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        gam = rng.exponential(scale=1.0 / theta_star, size=m)
        s_cur = np.zeros(m)
        success = np.zeros(m, dtype=bool)
        alive = np.arange(m)
        rounds = 0
        while alive.size:
            inc = law.sample(rng, (alive.size, steps_per_round))
            cum = s_cur[alive, None] + np.cumsum(inc, axis=1)
            over = cum > -gam[alive, None]
            under = cum < -gam[alive, None] - band
            any_over = over.any(axis=1)
            any_under = under.any(axis=1)
            t_over = np.where(any_over, over.argmax(axis=1), steps_per_round)
            t_under = np.where(any_under, under.argmax(axis=1), steps_per_round)
            succ_now = any_under & (t_under < t_over)
            fail_now = any_over & (t_over < t_under)
            success[alive[succ_now]] = True
            cont = ~(succ_now | fail_now)
            s_cur[alive[cont]] = cum[cont, -1]
            alive = alive[cont]
            rounds += 1
            if rounds > 1_000_000:
                raise RuntimeError("walk failed to resolve; check the drift")
        n_success += int(success.sum())
        done += m

    theta = n_success / reps
    se = math.sqrt(theta * (1.0 - theta) / reps)
    return MonteCarloEstimate(value=theta, stderr=se, reps=reps)


def siegmund_overshoots(
    model: ScoreModel,
    tilted: TiltedModel,
    u_probe: float,
    reps: int,
    rng,
    chunk: int = 1 << 16,
    steps_per_round: int = 64,
) -> np.ndarray:
    """First-passage overshoots over ``u_probe`` under the tilted walk."""
    law = tilted_increments(model, tilted)
    out = np.empty(reps)
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        s_cur = np.zeros(m)
        osh = np.empty(m)
        alive = np.arange(m)
        rounds = 0
        while alive.size:
            inc = law.sample(rng, (alive.size, steps_per_round))
            cum = s_cur[alive, None] + np.cumsum(inc, axis=1)
            crossed = cum > u_probe
            any_c = crossed.any(axis=1)
            t_c = crossed.argmax(axis=1)
            hit = np.flatnonzero(any_c)
            osh[alive[hit]] = cum[hit, t_c[hit]] - u_probe
            s_cur[alive[~any_c]] = cum[~any_c, -1]
            alive = alive[~any_c]
            rounds += 1
            if rounds > 1_000_000:
                raise RuntimeError("tilted walk failed to cross; check the tilt")
        out[done : done + m] = osh
        done += m
    return out


@dataclass(frozen=True)
class TailConstantRow:
    u_probe: float
    c_hat: float
    stderr: float
    reps: int


def tail_constant_C(
    model: ScoreModel,
    theta_star: float,
    reps: int,
    u_probes: Sequence[float],
    seed=0,
) -> list:
    """Exponential-tail prefactor by tilted first-passage sampling.

    The likelihood-ratio identity ``P(sup S > u) = e^{-theta* u} E*[e^{-theta* R_u}]``
    (``R_u`` the overshoot at first passage under the tilted walk) makes the
    returned ``c_hat`` the exact level-``u`` prefactor; for nonlattice scores
    it converges to the Cramer-Lundberg constant as ``u`` grows, and a ladder
    of probe levels is reported to expose that limit.
    """
    tilted = tilt(model, theta_star)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rows = []
    for u in u_probes:
        osh = siegmund_overshoots(model, tilted, float(u), reps, rng)
        weights = np.exp(-theta_star * osh)
        rows.append(
            TailConstantRow(
                u_probe=float(u),
                c_hat=float(weights.mean()),
                stderr=float(weights.std(ddof=1) / math.sqrt(reps)),
                reps=reps,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Bundled Gumbel parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McConfig:
    theta_reps: int = 200_000
    c_reps: int = 100_000
    u_probes: Optional[Sequence[float]] = None
    tol: float = 1e-8
    seed: int = 0


@dataclass(frozen=True)
class GumbelParams:
    theta_star: float
    theta: float
    theta_se: float
    c: float
    c_se: float
    k_star: float
    lattice: bool
    lattice_span: Optional[float]
    c_ladder: tuple

    def as_dict(self) -> dict:
        return {
            "theta_star": self.theta_star,
            "theta": self.theta,
            "theta_se": self.theta_se,
            "C": self.c,
            "C_se": self.c_se,
            "K_star": self.k_star,
            "lattice": self.lattice,
            "lattice_span": self.lattice_span,
            "c_ladder": [
                {"u_probe": r.u_probe, "c_hat": r.c_hat, "stderr": r.stderr, "reps": r.reps}
                for r in self.c_ladder
            ],
        }


def gumbel_params(model: ScoreModel, config: McConfig = McConfig()) -> GumbelParams:
    """Compute ``theta_star``, the extremal index, the tail prefactor and K.

    ``K = theta * C`` exactly by construction, with ``C`` read from the
    largest probe level of the Siegmund ladder.  Deterministic given the
    config seed.
    """
    report = validate_model(model)
    theta_star = lundberg_solve(model)
    u_probes = config.u_probes
    if u_probes is None:
        u_probes = [4.0 / theta_star, 6.0 / theta_star, 8.0 / theta_star]
        if report.lattice:
            span = report.lattice_span
            u_probes = [span * max(1.0, round(u / span)) for u in u_probes]
    rng = np.random.default_rng(config.seed)
    theta_seed, c_seed = rng.spawn(2)
    theta_est = extremal_index_alignment(
        model, theta_star, config.theta_reps, tol=config.tol, seed=theta_seed
    )
    ladder = tail_constant_C(model, theta_star, config.c_reps, u_probes, seed=c_seed)
    c_row = ladder[-1]
    return GumbelParams(
        theta_star=theta_star,
        theta=theta_est.value,
        theta_se=theta_est.stderr,
        c=c_row.c_hat,
        c_se=c_row.stderr,
        k_star=theta_est.value * c_row.c_hat,
        lattice=report.lattice,
        lattice_span=report.lattice_span,
        c_ladder=tuple(ladder),
    )


def gumbel_cdf(x, theta_star: float, k_star: float):
    return np.exp(-k_star * np.exp(-theta_star * np.asarray(x, dtype=float)))


def gumbel_p_value(params: GumbelParams, n: int, score: float) -> float:
    """Tail probability of observing a maximal score at least this large."""
    x = score - 2.0 * math.log(n) / params.theta_star
    return float(1.0 - gumbel_cdf(x, params.theta_star, params.k_star))


@dataclass(frozen=True)
class GumbelCheckReport:
    ks_distance: float
    n: int
    reps: int
    lattice: bool
    decile_table: tuple  # rows (q, empirical, theoretical)
    centered_samples: np.ndarray


def gumbel_check(
    model: ScoreModel,
    params: GumbelParams,
    n: int,
    reps: int,
    seed=0,
    mode: str = "truncated",
) -> GumbelCheckReport:
    """Compare centered maxima of simulated fields with the Gumbel limit.

    Simulates ``reps`` independent score fields, centers each maximum by
    ``2 log(n)/theta_star`` and reports the Kolmogorov-Smirnov distance to
    ``exp(-K e^{-theta_star x})`` plus a decile table.  For lattice score
    models the distance is reported but carries no pass/fail meaning.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    burn = 0
    if mode == "stationary":
        burn = default_burn_in(model, params.theta_star)
    streams = rng.spawn(reps)
    maxima = np.array(
        [simulate_max_score(model, n, streams[r], mode=mode, burn=burn) for r in range(reps)]
    )
    centered = maxima - 2.0 * math.log(n) / params.theta_star

    result = kstest(centered, lambda x: gumbel_cdf(x, params.theta_star, params.k_star))
    qs = np.arange(0.1, 0.95, 0.1)
    emp = np.quantile(centered, qs)
    theo = -np.log(np.log(1.0 / qs) / params.k_star) / params.theta_star
    table = tuple((float(q), float(e), float(t)) for q, e, t in zip(qs, emp, theo))
    return GumbelCheckReport(
        ks_distance=float(result.statistic),
        n=n,
        reps=reps,
        lattice=params.lattice,
        decile_table=table,
        centered_samples=centered,
    )


# ---------------------------------------------------------------------------
# Typical cluster of the score field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WalkPath:
    """Two-sided walk realization around an extreme score.

    ``forward[k]`` is the walk value at lag ``k+1`` (product-measure
    increments, all values <= 0); ``backward[k]`` is the value at lag
    ``-(k+1)`` (negated tilted increments, all values < 0).  Both sides are
    truncated once they irrevocably leave the ``log(tol)/theta_star`` band.
    """

    forward: np.ndarray
    backward: np.ndarray
    tol: float

    @property
    def forward_increments(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.forward)))

    @property
    def backward_increments(self) -> np.ndarray:
        """Tilted increments e*; the walk at lag -k is minus their partial sum."""
        return -np.diff(np.concatenate(([0.0], self.backward)))

    def values(self) -> dict:
        out = {0: 0.0}
        for k, v in enumerate(self.forward):
            out[k + 1] = float(v)
        for k, v in enumerate(self.backward):
            out[-(k + 1)] = float(v)
        return out


@dataclass(frozen=True)
class ClusterSampleStats:
    forward_proposals: int
    backward_proposals: int

    @property
    def acceptance_rate(self) -> float:
        total = self.forward_proposals + self.backward_proposals
        return 2.0 / total if total else float("nan")


def _one_sided_conditioned(law: IncrementLaw, band: float, strict: bool, rng, max_steps: int):
    """One rejection proposal: walk stays below 0 (strictly if ``strict``).

    Returns the path values up to the decision point, or None on rejection.
    The walk is accepted once it falls below ``-band``; by the exponential
    bound its chance of ever violating the constraint afterwards is < tol.
    """
    values = []
    s = 0.0
    for _ in range(max_steps):
        s += float(law.sample(rng, 1)[0])
        if s > 0.0 or (strict and s == 0.0):
            return None
        values.append(s)
        if s < -band:
            return np.array(values)
    raise RuntimeError("conditioned walk did not resolve; raise max_steps")


def sample_cluster_Q(
    model: ScoreModel,
    theta_star: float,
    tol: float = 1e-8,
    seed=0,
    max_steps: int = 1_000_000,
):
    """One draw of the typical-cluster walk by rejection sampling.

    The forward side uses product-measure increments conditioned to stay
    nonpositive; the backward side uses negated tilted increments conditioned
    to stay strictly negative.  Returns ``(path, stats)`` with the number of
    proposals consumed.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fwd_law = product_increments(model)
    tilted = tilt(model, theta_star)
    bwd_base = tilted_increments(model, tilted)
    bwd_law = IncrementLaw(-bwd_base.values, bwd_base.probs)
    band = math.log(1.0 / tol) / theta_star

    fwd_tries = 0
    forward = None
    while forward is None:
        fwd_tries += 1
        forward = _one_sided_conditioned(fwd_law, band, strict=False, rng=rng, max_steps=max_steps)
    bwd_tries = 0
    backward = None
    while backward is None:
        bwd_tries += 1
        backward = _one_sided_conditioned(bwd_law, band, strict=True, rng=rng, max_steps=max_steps)
    path = WalkPath(forward=forward, backward=backward, tol=tol)
    return path, ClusterSampleStats(forward_proposals=fwd_tries, backward_proposals=bwd_tries)
