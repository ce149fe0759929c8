"""Finite-support moving-average fields with heavy-tailed innovations.

The generator is ``X_i = sum_j c_j * xi_{i-j}`` where the innovations
``xi`` have exact two-sided Pareto magnitude, ``P(|xi| > u) = (u/scale)^-alpha``
for ``u >= scale``, and sign +1 with probability ``p``.  All tail objects of
such a field (jump law of the dominating coefficient, extremal index,
canonical cluster shape, m-truncated constants) are available in closed form
and double as oracles for the empirical estimators.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidModel, InvalidTruncation
from .lattice import ClusterShape, LatticeWindow, canonicalize, chebyshev

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class MAModel:
    """Moving-average specification: coefficients, tail index, sign balance."""

    dim: int
    coeffs: Mapping
    alpha: float
    p: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        cleaned = {}
        for k, v in dict(self.coeffs).items():
            idx = (k,) if isinstance(k, int) else tuple(int(x) for x in k)
            if len(idx) != self.dim:
                raise InvalidModel(f"coefficient index {idx} has dimension != {self.dim}")
            if float(v) != 0.0:
                cleaned[idx] = float(v)
        if not cleaned:
            raise InvalidModel("moving-average model needs at least one nonzero coefficient")
        if not self.alpha > 0:
            raise InvalidModel("tail index alpha must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidModel("sign balance p must lie in [0, 1]")
        if not self.scale > 0:
            raise InvalidModel("innovation scale must be positive")
        object.__setattr__(self, "coeffs", cleaned)

    @property
    def support(self):
        return sorted(self.coeffs.keys())

    @property
    def support_radius(self) -> int:
        return max(chebyshev(j) for j in self.coeffs)

    @property
    def dependence_range(self) -> int:
        """Chebyshev diameter of the coefficient support.

        Field values at lattice distance strictly greater than this share no
        innovations and are therefore independent.
        """
        idxs = self.support
        return max(
            max(abs(a - b) for a, b in zip(i, j)) for i in idxs for j in idxs
        )

    def abs_alpha_sum(self) -> float:
        return float(sum(abs(c) ** self.alpha for c in self.coeffs.values()))

    def a_n(self, n: int) -> float:
        """Normalizing level with ``n^d P(|X_0| > a_n) -> 1``.

        Exact for the Pareto innovations used here (up to the tail-equivalence
        of the moving average): ``a_n = scale * (n^d * sum |c_j|^alpha)^(1/alpha)``.
        """
        return self.scale * (n**self.dim * self.abs_alpha_sum()) ** (1.0 / self.alpha)


def sample_innovations(model: MAModel, shape, rng) -> np.ndarray:
    mag = model.scale * rng.random(size=shape) ** (-1.0 / model.alpha)
    if model.p >= 1.0:
        return mag
    sign = np.where(rng.random(size=shape) < model.p, 1.0, -1.0)
    return mag * sign


def sample_ma_window(model: MAModel, extent, seed) -> LatticeWindow:
    """Stationary sample of the moving-average field on ``{1..n}^d``.

    Innovations are materialized on the extent enlarged by the coefficient
    support, so the returned window has the exact stationary law (no
    wrap-around artifacts).  Deterministic given ``seed``.
    """
    if isinstance(extent, int):
        extent = (extent,) * model.dim
    extent = tuple(int(n) for n in extent)
    if len(extent) != model.dim or min(extent) < 1:
        raise InvalidModel(f"extent {extent} incompatible with dimension {model.dim}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    lo = [min(j[a] for j in model.coeffs) for a in range(model.dim)]
    hi = [max(j[a] for j in model.coeffs) for a in range(model.dim)]
    xi_shape = tuple(extent[a] + hi[a] - lo[a] for a in range(model.dim))
    xi = sample_innovations(model, xi_shape, rng)

    out = np.zeros(extent)
    for j, c in sorted(model.coeffs.items()):
        # X_i needs xi_{i-j}; xi index 0 corresponds to lattice point 1 - hi
        slices = tuple(
            slice(hi[a] - j[a], hi[a] - j[a] + extent[a]) for a in range(model.dim)
        )
        out += c * xi[slices]
    return LatticeWindow(out)


@dataclass(frozen=True)
class TailLawMA:
    """Exact spectral tail law of a finite moving average.

    The limit of ``X/|X_0|`` given ``|X_0| > u`` is ``Theta_i = K c_{i+J} / |c_J|``
    with ``P(J = j)`` proportional to ``|c_j|^alpha`` and ``P(K = 1) = p``.
    """

    model: MAModel
    jump_probs: Mapping = field(init=False)

    def __post_init__(self):
        total = self.model.abs_alpha_sum()
        probs = {
            j: abs(c) ** self.model.alpha / total
            for j, c in sorted(self.model.coeffs.items())
        }
        object.__setattr__(self, "jump_probs", probs)

    @property
    def alpha(self) -> float:
        return self.model.alpha

    def spectral_values(self, j, k: int):
        """Realization ``Theta_i = k * c_{i+j} / |c_j|`` as an index->value map."""
        cj = abs(self.model.coeffs[tuple(j)])
        return {
            tuple(i - ji for i, ji in zip(idx, j)): k * c / cj
            for idx, c in self.model.coeffs.items()
        }

    def atoms(self):
        """All ``(probability, spectral map)`` atoms of the law of Theta."""
        out = []
        for j, pj in self.jump_probs.items():
            for k, pk in ((1, self.model.p), (-1, 1.0 - self.model.p)):
                if pj * pk > 0:
                    out.append((pj * pk, self.spectral_values(j, k)))
        return out

    def sample(self, rng, size: int = 1):
        """Draw ``size`` independent realizations of Theta."""
        jumps = list(self.jump_probs.keys())
        probs = np.array([self.jump_probs[j] for j in jumps])
        picks = rng.choice(len(jumps), size=size, p=probs)
        signs = np.where(rng.random(size) < self.model.p, 1, -1)
        return [self.spectral_values(jumps[i], int(k)) for i, k in zip(picks, signs)]

    def tail_atoms(self):
        """Atoms of the tail field Y = |Y_0| * Theta with Pareto |Y_0|.

        Returned as ``(probability, direction map)``; the Pareto magnitude on
        ``[1, inf)`` with index alpha multiplies each direction.
        """
        return self.atoms()


def ma_tail_law(model: MAModel) -> TailLawMA:
    """Analytic spectral tail law of the moving-average field."""
    return TailLawMA(model)


def ma_extremal_objects(model: MAModel):
    """Extremal index and anchored spectral cluster law of the field.

    Returns ``(theta, atoms)`` where ``theta = max_j |c_j|^alpha / sum_j |c_j|^alpha``
    and ``atoms`` is the list of ``(probability, ClusterShape)`` values of the
    normalized typical cluster ``K c / max|c|`` (one atom per realized sign).
    """
    cmax = max(abs(c) for c in model.coeffs.values())
    theta = cmax**model.alpha / model.abs_alpha_sum()
    atoms = []
    for k, pk in ((1, model.p), (-1, 1.0 - model.p)):
        if pk > 0:
            shape = canonicalize({j: k * c / cmax for j, c in model.coeffs.items()})
            atoms.append((pk, shape))
    return float(theta), atoms


def ma_tail_sampler(law: TailLawMA):
    """Sampler of the tail field Y as a canonical cluster shape.

    Draws the Pareto magnitude and one jump/sign atom of the spectral law;
    suitable as the ``tail_sampler`` argument of the Palm identity check.
    """
    jumps = list(law.jump_probs.keys())
    probs = np.array([law.jump_probs[j] for j in jumps])
    alpha = law.alpha
    p = law.model.p

    def draw(rng):
        y = rng.random() ** (-1.0 / alpha)
        j = jumps[int(rng.choice(len(jumps), p=probs))]
        k = 1 if rng.random() < p else -1
        return canonicalize({i: y * v for i, v in law.spectral_values(j, k).items()})

    return draw


def ma_cluster_sampler(model: MAModel):
    """Sampler of the typical cluster (anchored tail process) of the field."""
    _, atoms = ma_extremal_objects(model)
    probs = np.array([a[0] for a in atoms])
    shapes = [a[1] for a in atoms]
    alpha = model.alpha

    def draw(rng):
        y = rng.random() ** (-1.0 / alpha)
        shape = shapes[int(rng.choice(len(shapes), p=probs))]
        return shape.scaled(y)

    return draw


def ma_mdep_params(model: MAModel, m: int):
    """Truncated-field constants ``(theta_m, d_m)`` for lag cutoff ``m``.

    ``d_m = sum_{|j| <= m} |c_j|^alpha`` (relative to the innovation tail) and
    ``theta_m`` is the extremal index of the truncated field.  The product
    ``theta_m * d_m`` equals ``max_{|j| <= m} |c_j|^alpha`` for every ``m`` and
    saturates at ``max_j |c_j|^alpha`` once ``m`` covers the support.
    """
    if m < 0:
        raise InvalidTruncation("lag cutoff m must be >= 0")
    kept = {j: c for j, c in model.coeffs.items() if chebyshev(j) <= m}
    if not kept:
        raise InvalidTruncation(f"no nonzero coefficient with lag <= {m}")
    d_m = sum(abs(c) ** model.alpha for c in kept.values())
    theta_m = max(abs(c) ** model.alpha for c in kept.values()) / d_m
    return float(theta_m), float(d_m)


def load_ma_model(path) -> MAModel:
    """Read a moving-average model from its TOML description.

    Expected keys: ``dim``, ``alpha``, ``p`` (optional), ``scale`` (optional)
    and ``coeffs``, a list of ``{index = [...], value = ...}`` tables.
    """
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return ma_model_from_dict(data)


def ma_model_from_dict(data: Mapping) -> MAModel:
    try:
        dim = int(data["dim"])
        alpha = float(data["alpha"])
        coeffs = {
            tuple(int(i) for i in entry["index"]): float(entry["value"])
            for entry in data["coeffs"]
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModel(f"malformed moving-average model description: {exc}") from exc
    return MAModel(
        dim=dim,
        coeffs=coeffs,
        alpha=alpha,
        p=float(data.get("p", 1.0)),
        scale=float(data.get("scale", 1.0)),
    )


def dump_ma_model(model: MAModel) -> str:
    buf = io.StringIO()
    buf.write(f"dim = {model.dim}\n")
    buf.write(f"alpha = {model.alpha!r}\n")
    buf.write(f"p = {model.p!r}\n")
    buf.write(f"scale = {model.scale!r}\n")
    buf.write("coeffs = [\n")
    for j, c in sorted(model.coeffs.items()):
        buf.write(f"    {{ index = {list(j)}, value = {c!r} }},\n")
    buf.write("]\n")
    return buf.getvalue()
