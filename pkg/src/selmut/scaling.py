"""Scaling regime, finite trait windows and lattice fields.

The carrying capacity ``K`` fixes three coupled quantities: ``log_K``, the
trait lattice step ``delta_K`` and the rescaled mutation step
``h_K = delta_K * log_K``. All logarithms are natural, so a density on the
log scale is ``n = exp(u * log_K)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .errors import OutOfRangeError, ScalingError

# Relative slack used when snapping window bounds onto lattice nodes.
_SNAP = 1e-9


@dataclass(frozen=True)
class PowerLaw:
    """``delta_K = (log K) ** -exponent``."""

    exponent: float = 2.0


@dataclass(frozen=True)
class Explicit:
    delta: float


DeltaRule = Union[PowerLaw, Explicit]


@dataclass(frozen=True)
class ScalingParams:
    K: float
    log_K: float
    delta_K: float
    h_K: float

    def __post_init__(self):
        if not self.K > 1:
            raise ScalingError(f"K must exceed 1, got {self.K}")
        if not self.delta_K > 0:
            raise ScalingError(f"delta_K must be positive, got {self.delta_K}")
        if not self.h_K < 1:
            raise ScalingError(
                f"h_K = delta_K * log K = {self.h_K:.6g} must be < 1 "
                "(lattice step too coarse for mutations of size 1/log K)"
            )


def make_scaling(K: float, delta_rule: DeltaRule = PowerLaw(2.0)) -> ScalingParams:
    """Build a consistent :class:`ScalingParams` for carrying capacity ``K``.

    >>> s = make_scaling(math.e, Explicit(0.01))
    >>> (s.log_K, s.delta_K, s.h_K)
    (1.0, 0.01, 0.01)
    """
    K = float(K)
    if not K > 1:
        raise ScalingError(f"K must exceed 1, got {K}")
    log_K = math.log(K)
    if isinstance(delta_rule, PowerLaw):
        delta = log_K ** (-float(delta_rule.exponent))
    elif isinstance(delta_rule, Explicit):
        delta = float(delta_rule.delta)
    else:
        raise ScalingError(f"unknown delta rule {delta_rule!r}")
    return ScalingParams(K=K, log_K=log_K, delta_K=delta, h_K=delta * log_K)


@dataclass(frozen=True)
class TraitWindow:
    """Finite block ``i_min..i_max`` of the lattice ``{i * delta}``."""

    x_min: float
    x_max: float
    delta: float
    i_min: int
    i_max: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise OutOfRangeError(f"empty trait window [{self.x_min}, {self.x_max}]")
        if self.i_max < self.i_min:
            raise OutOfRangeError("window contains no lattice node")

    @classmethod
    def from_bounds(cls, x_min: float, x_max: float, delta: float) -> "TraitWindow":
        if not delta > 0:
            raise ScalingError("lattice step must be positive")
        i_min = math.ceil(x_min / delta - _SNAP)
        i_max = math.floor(x_max / delta + _SNAP)
        return cls(float(x_min), float(x_max), float(delta), int(i_min), int(i_max))

    @property
    def n_nodes(self) -> int:
        return self.i_max - self.i_min + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.i_min, self.i_max + 1)

    @property
    def x(self) -> np.ndarray:
        return self.indices * self.delta

    def contains(self, x) -> bool:
        lo = self.i_min * self.delta
        hi = self.i_max * self.delta
        return bool(lo - _SNAP * self.delta <= x <= hi + _SNAP * self.delta)


@dataclass(frozen=True, eq=False)
class LatticeField:
    """One value per node of ``window``.

    ``space`` is ``"u"`` for log-densities, ``"n"`` for densities and
    ``"hj"`` for Hamilton-Jacobi grid functions. ``info`` carries optional
    diagnostics (for example the mutation-sum tail bound of a right side).
    """

    window: TraitWindow
    values: np.ndarray
    space: str = "u"
    info: Mapping = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.shape[0] != self.window.n_nodes:
            raise OutOfRangeError(
                f"field has {vals.size} values for {self.window.n_nodes} nodes"
            )
        if self.space == "n" and np.any(vals < 0):
            raise OutOfRangeError("density fields must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def x(self) -> np.ndarray:
        return self.window.x

    def max_slope(self) -> float:
        if self.values.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values))) / self.window.delta)


def sample_field(func, window: TraitWindow, space: str = "u") -> LatticeField:
    return LatticeField(window, np.asarray(func(window.x), dtype=float), space)


def interpolate(field: LatticeField, x, scaling: ScalingParams | None = None):
    """Affine interpolation between lattice nodes.

    For ``i = floor(x / delta)`` returns
    ``u_i (1 - x/delta + i) + u_{i+1} (x/delta - i)``. Accepts a scalar or an
    array of traits; every trait must lie in the window.
    """
    w = field.window
    delta = w.delta
    if scaling is not None and not math.isclose(scaling.delta_K, delta, rel_tol=1e-12):
        raise ScalingError("field window step does not match the scaling")
    xs = np.asarray(x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    lo, hi = w.i_min * delta, w.i_max * delta
    slack = _SNAP * delta
    if np.any(xs < lo - slack) or np.any(xs > hi + slack):
        raise OutOfRangeError(f"trait outside window [{lo}, {hi}]")
    s = xs / delta
    r = np.rint(s)
    s = np.where(np.abs(s - r) <= 1e-12 * np.maximum(1.0, np.abs(s)), r, s)
    i = np.floor(s).astype(np.int64)
    i = np.clip(i, w.i_min, w.i_max)
    # the right endpoint (or a rounding overshoot) sits on the last node
    last = i >= w.i_max
    i = np.where(last, w.i_max - 1, i) if w.n_nodes > 1 else i
    frac = s - i
    if w.n_nodes == 1:
        out = np.full(xs.shape, field.values[0])
    else:
        k = i - w.i_min
        out = field.values[k] * (1.0 - frac) + field.values[k + 1] * frac
    return float(out[0]) if scalar else out
