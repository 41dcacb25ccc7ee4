"""Symmetric zero-centred noise laws for the two loop resistors.

Three families are supported, each parameterised by a single magnitude:

``Gaussian(sigma)``
    normal law, characteristic function ``exp(-sigma**2 t**2 / 2)``.
``SymmetricStable(alpha, scale)``
    symmetric alpha-stable law, characteristic function
    ``exp(-|scale * t|**alpha)``.  ``alpha = 2`` is the normal law with
    ``sigma = scale * sqrt(2)``; ``alpha = 1`` is Cauchy with half-width
    ``scale``.
``Uniform(half_width)``
    uniform on ``[-half_width, half_width]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Literal, Union

import numpy as np

from ._rng import SeedLike, make_rng
from ._validation import check_count, check_finite_1d, check_positive

if TYPE_CHECKING:
    from .loop import ResistorPair

ALPHA_MIN = 0.1

Family = Literal["gaussian", "stable", "uniform"]
FAMILIES: tuple[str, ...] = ("gaussian", "stable", "uniform")


@dataclass(frozen=True)
class Gaussian:
    sigma: float

    family = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "sigma", check_positive(self.sigma, "sigma"))

    @property
    def magnitude(self) -> float:
        return self.sigma

    @property
    def variance(self) -> float:
        return self.sigma**2

    def with_magnitude(self, magnitude: float) -> "Gaussian":
        return replace(self, sigma=magnitude)


@dataclass(frozen=True)
class SymmetricStable:
    alpha: float
    scale: float

    family = "stable"

    def __post_init__(self):
        alpha = check_positive(self.alpha, "alpha")
        if not ALPHA_MIN < alpha <= 2.0:
            raise ValueError(f"alpha must lie in ({ALPHA_MIN}, 2], got {alpha}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "scale", check_positive(self.scale, "scale"))

    @property
    def magnitude(self) -> float:
        return self.scale

    @property
    def variance(self) -> float:
        # finite only in the Gaussian limit
        return 2.0 * self.scale**2 if self.alpha == 2.0 else math.inf

    def with_magnitude(self, magnitude: float) -> "SymmetricStable":
        return replace(self, scale=magnitude)


@dataclass(frozen=True)
class Uniform:
    half_width: float

    family = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "half_width", check_positive(self.half_width, "half_width"))

    @property
    def magnitude(self) -> float:
        return self.half_width

    @property
    def variance(self) -> float:
        return self.half_width**2 / 3.0

    def with_magnitude(self, magnitude: float) -> "Uniform":
        return replace(self, half_width=magnitude)


NoiseModel = Union[Gaussian, SymmetricStable, Uniform]
_MODEL_TYPES = (Gaussian, SymmetricStable, Uniform)


def _check_model(model) -> NoiseModel:
    if not isinstance(model, _MODEL_TYPES):
        raise TypeError(f"expected a noise model, got {type(model).__name__}")
    # re-run the constructor guards; catches objects mutated behind the frozen API
    model.__post_init__()
    return model


def make_model(family: str, magnitude: float, alpha: float | None = None) -> NoiseModel:
    """Build a model of ``family`` with the given magnitude."""
    if family == "gaussian":
        return Gaussian(magnitude)
    if family == "stable":
        if alpha is None:
            raise ValueError("the stable family needs alpha")
        return SymmetricStable(alpha, magnitude)
    if family == "uniform":
        return Uniform(magnitude)
    raise ValueError(f"unknown noise family {family!r}; expected one of {', '.join(FAMILIES)}")


def sample_noise(model: NoiseModel, n: int, rng: SeedLike = None) -> np.ndarray:
    """Draw ``n`` i.i.d. samples (volts) from ``model``.

    The stable family uses the Chambers-Mallows-Stuck construction for
    the symmetric case::

        X = scale * sin(alpha U) / cos(U)**(1/alpha)
                  * (cos((1 - alpha) U) / W)**((1 - alpha) / alpha)

    with ``U ~ Uniform(-pi/2, pi/2)`` and ``W ~ Exp(1)``; for ``alpha = 1``
    this reduces to ``scale * tan(U)``.
    """
    model = _check_model(model)
    n = check_count(n, "n")
    rng = make_rng(rng)

    if isinstance(model, Gaussian):
        return model.sigma * rng.standard_normal(n)
    if isinstance(model, Uniform):
        return model.half_width * (2.0 * rng.random(n) - 1.0)

    alpha = model.alpha
    u = math.pi * (rng.random(n) - 0.5)
    if alpha == 1.0:
        return model.scale * np.tan(u)
    w = np.maximum(rng.standard_exponential(n), np.finfo(float).tiny)
    with np.errstate(over="ignore"):
        x = (
            np.sin(alpha * u)
            / np.cos(u) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)
        )
    return model.scale * x


def char_function(model: NoiseModel, t):
    """Characteristic function ``E[exp(i t X)]``; real since every law is symmetric."""
    model = _check_model(model)
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise ValueError("t must be finite")
    if isinstance(model, Gaussian):
        out = np.exp(-0.5 * (model.sigma * t_arr) ** 2)
    elif isinstance(model, SymmetricStable):
        out = np.exp(-np.abs(model.scale * t_arr) ** model.alpha)
    else:
        out = np.sinc(model.half_width * t_arr / math.pi)
    return float(out) if out.ndim == 0 else out


def empirical_cf(samples, t):
    """Real part of the empirical characteristic function, ``mean(cos(t x))``."""
    x = check_finite_1d(samples, "samples")
    t_arr = np.asarray(t, dtype=float)
    out = np.cos(np.multiply.outer(t_arr, x)).mean(axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NoiseAssignment:
    """Noise models attached to the low and high resistor.

    ``scaling_tag`` is ``"johnson"`` when the magnitudes were derived with
    :func:`johnson_scaling` and ``"explicit"`` otherwise.
    """

    low: NoiseModel
    high: NoiseModel
    scaling_tag: Literal["johnson", "explicit"] = "explicit"

    def __post_init__(self):
        _check_model(self.low)
        _check_model(self.high)
        if type(self.low) is not type(self.high):
            raise ValueError(
                f"low and high noise must share a family, got {self.low.family} and {self.high.family}"
            )
        if isinstance(self.low, SymmetricStable) and self.low.alpha != self.high.alpha:
            raise ValueError("low and high stable noise must share alpha")
        if self.scaling_tag not in ("johnson", "explicit"):
            raise ValueError(f"scaling_tag must be 'johnson' or 'explicit', got {self.scaling_tag!r}")

    @property
    def family(self) -> str:
        return self.low.family

    @property
    def finite_variance(self) -> bool:
        return math.isfinite(self.low.variance)

    def model_for(self, level: str) -> NoiseModel:
        if level == "L":
            return self.low
        if level == "H":
            return self.high
        raise ValueError(f"level must be 'L' or 'H', got {level!r}")

    def check_scaling(self, pair: "ResistorPair", rtol: float = 1e-12) -> None:
        """Raise if a ``johnson``-tagged assignment violates the sqrt-resistance rule for ``pair``."""
        if self.scaling_tag != "johnson":
            return
        lhs = self.low.magnitude**2 * pair.r_high
        rhs = self.high.magnitude**2 * pair.r_low
        if abs(lhs - rhs) > rtol * abs(rhs):
            raise ValueError("johnson-tagged assignment does not satisfy sqrt-resistance scaling for this pair")

    def to_dict(self) -> dict:
        d = {
            "family": self.family,
            "low_magnitude": self.low.magnitude,
            "high_magnitude": self.high.magnitude,
            "scaling": self.scaling_tag,
        }
        if isinstance(self.low, SymmetricStable):
            d["alpha"] = self.low.alpha
        return d


def johnson_scaling(
    pair: "ResistorPair", family: str, high_magnitude: float, alpha: float | None = None
) -> NoiseAssignment:
    """Scale the low-resistor magnitude as ``high_magnitude * sqrt(R_L / R_H)``.

    For the uniform family the half-width is scaled, which scales its
    standard deviation by the same ratio.
    """
    high_magnitude = check_positive(high_magnitude, "high_magnitude")
    high = make_model(family, high_magnitude, alpha)
    low = high.with_magnitude(high_magnitude * math.sqrt(pair.r_low / pair.r_high))
    return NoiseAssignment(low=low, high=high, scaling_tag="johnson")


def explicit_assignment(
    family: str, low_magnitude: float, high_magnitude: float, alpha: float | None = None
) -> NoiseAssignment:
    return NoiseAssignment(
        low=make_model(family, low_magnitude, alpha),
        high=make_model(family, high_magnitude, alpha),
        scaling_tag="explicit",
    )
