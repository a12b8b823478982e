"""Growth/mutation rates and initial data, with their certified constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidRateError
from .report import CheckReport
from .scaling import ScalingParams, TraitWindow

# Inflation applied to sampled Lipschitz estimates of user-supplied rates.
USER_LIP_INFLATION = 1.05


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, x):
        return np.full(np.shape(x), self.value, dtype=float)


@dataclass(frozen=True)
class RationalBump:
    """``amplitude / (1 + ((x - center) / width)**2)``."""

    amplitude: float = 1.0
    width: float = 1.0
    center: float = 0.0

    def __call__(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        return self.amplitude / (1.0 + z * z)


@dataclass(frozen=True)
class Sinusoid:
    """``mean + amplitude * sin(omega * x)``."""

    mean: float = 1.0
    amplitude: float = 0.5
    omega: float = 1.0

    def __call__(self, x):
        return self.mean + self.amplitude * np.sin(self.omega * np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class RateSpec:
    R: Callable
    p: Callable
    R_lower: float
    R_upper: float
    R_lip: float
    p_lower: float
    p_upper: float
    p_lip: float
    family: str = "user"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.p_lower > 0:
            raise InvalidRateError(
                f"mutation rate must be bounded below by a positive constant, got p_lower={self.p_lower}"
            )
        for name in ("R_lower", "R_upper", "R_lip", "p_upper", "p_lip"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidRateError(f"{name} must be finite")
        if self.R_lower > self.R_upper or self.p_lower > self.p_upper:
            raise InvalidRateError("lower rate bound exceeds upper bound")


def _bump_bounds(amplitude, width):
    lip = abs(amplitude) * 3.0 * math.sqrt(3.0) / (8.0 * width)
    return (min(0.0, amplitude), max(0.0, amplitude), lip)


def make_rates(family: str, **params) -> RateSpec:
    """Build a :class:`RateSpec` from a named family.

    Families and their parameters:

    ``constant``       R, p
    ``rational_bump``  amplitude, width, center (growth); p (constant mutation)
    ``sinusoidal``     R (constant growth); p_mean, p_amplitude, omega
    ``user``           R, p callables; sample_range, n_samples
    """
    if family == "constant":
        r = float(params.get("R", 1.0))
        p = float(params.get("p", 1.0))
        _reject_unknown(params, {"R", "p"})
        return RateSpec(Constant(r), Constant(p), r, r, 0.0, p, p, 0.0, family, dict(params))
    if family == "rational_bump":
        _reject_unknown(params, {"amplitude", "width", "center", "p"})
        amp = float(params.get("amplitude", 1.0))
        width = float(params.get("width", 1.0))
        if not width > 0:
            raise InvalidRateError("rational_bump width must be positive")
        p = float(params.get("p", 1.0))
        lo, hi, lip = _bump_bounds(amp, width)
        R = RationalBump(amp, width, float(params.get("center", 0.0)))
        return RateSpec(R, Constant(p), lo, hi, lip, p, p, 0.0, family, dict(params))
    if family == "sinusoidal":
        _reject_unknown(params, {"R", "p_mean", "p_amplitude", "omega"})
        r = float(params.get("R", 1.0))
        mean = float(params.get("p_mean", 1.0))
        amp = float(params.get("p_amplitude", 0.5))
        omega = float(params.get("omega", 1.0))
        p = Sinusoid(mean, amp, omega)
        return RateSpec(Constant(r), p, r, r, 0.0, mean - abs(amp), mean + abs(amp),
                        abs(amp * omega), family, dict(params))
    if family == "user":
        return _certify_user(**params)
    raise InvalidRateError(f"unknown rate family {family!r}")


def _reject_unknown(params, allowed):
    extra = set(params) - set(allowed)
    if extra:
        raise InvalidRateError(f"unknown rate parameters {sorted(extra)}")


def _certify_user(R, p, sample_range=(-50.0, 50.0), n_samples=200_001):
    # Dense sampling cannot prove a bound; the inflation keeps the Lipschitz
    # constants conservative for functions resolved by the sample.
    x = np.linspace(sample_range[0], sample_range[1], int(n_samples))
    rv = np.asarray(R(x), dtype=float)
    pv = np.asarray(p(x), dtype=float)
    if not (np.all(np.isfinite(rv)) and np.all(np.isfinite(pv))):
        raise InvalidRateError("user rates must be finite on the sampling range")
    dx = x[1] - x[0]
    r_lip = USER_LIP_INFLATION * float(np.max(np.abs(np.diff(rv)))) / dx
    p_lip = USER_LIP_INFLATION * float(np.max(np.abs(np.diff(pv)))) / dx
    return RateSpec(R, p, float(rv.min()), float(rv.max()), r_lip,
                    float(pv.min()), float(pv.max()), p_lip, "user",
                    {"sample_range": tuple(sample_range), "n_samples": int(n_samples)})


# --- initial data -----------------------------------------------------------

@dataclass(frozen=True)
class Cone:
    """``height - slope * |x - center|``."""

    slope: float = 0.5
    height: float = 0.0
    center: float = 0.0

    def __call__(self, x):
        return self.height - self.slope * np.abs(np.asarray(x, dtype=float) - self.center)


@dataclass(frozen=True)
class SmoothedCone:
    """``height - slope * (sqrt(eps**2 + (x - center)**2) - eps)``."""

    slope: float = 0.5
    height: float = 0.0
    center: float = 0.0
    eps: float = 0.5

    def __call__(self, x):
        z = np.asarray(x, dtype=float) - self.center
        return self.height - self.slope * (np.sqrt(self.eps ** 2 + z * z) - self.eps)


@dataclass(frozen=True)
class TwoCone:
    """Pointwise maximum of two cones: two peaks with a kinked valley between."""

    slope: float = 0.5
    height1: float = 0.0
    center1: float = -1.0
    height2: float = 0.0
    center2: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a = self.height1 - self.slope * np.abs(x - self.center1)
        b = self.height2 - self.slope * np.abs(x - self.center2)
        return np.maximum(a, b)


@dataclass(frozen=True)
class WavyCone:
    """Cone with a bounded ripple: ``height - slope |x - c| + amp (sin(omega x + phase) - 1)``.

    The ripple is never positive, so the cone envelope still holds; the
    discrete slope is at most ``slope + amp * omega``.
    """

    slope: float = 0.5
    height: float = 0.0
    center: float = 0.0
    amp: float = 0.05
    omega: float = 1.0
    phase: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ripple = self.amp * (np.sin(self.omega * x + self.phase) - 1.0)
        return self.height - self.slope * np.abs(x - self.center) + ripple


@dataclass(frozen=True)
class Flat:
    level: float = 0.0

    def __call__(self, x):
        return np.full(np.shape(x), self.level, dtype=float)


@dataclass(frozen=True, eq=False)
class InitialDataSpec:
    """Initial log-density ``u0`` with its decay envelope and Lipschitz bound.

    Required on every node: ``u0(x) <= -A |x| + B1`` and
    ``|u0(x + delta) - u0(x)| / delta <= L`` with ``0 < L < 1``.
    """

    u0: Callable
    A: float
    B1: float
    L: float
    family: str = "user"
    params: dict = field(default_factory=dict)


def _envelope(family, fn):
    """Analytic (A, B1) for the built-in families."""
    if family == "cone":
        return fn.slope, fn.height + fn.slope * abs(fn.center)
    if family == "smoothed_cone":
        return fn.slope, fn.height + fn.slope * (abs(fn.center) + fn.eps)
    if family == "wavy_cone":
        return fn.slope, fn.height + fn.slope * abs(fn.center)
    if family == "two_cone":
        return fn.slope, max(fn.height1 + fn.slope * abs(fn.center1),
                             fn.height2 + fn.slope * abs(fn.center2))
    return None, None


INITIAL_FAMILIES = {"cone": Cone, "smoothed_cone": SmoothedCone, "two_cone": TwoCone,
                    "wavy_cone": WavyCone, "flat": Flat}


def make_initial(family: str, L: float | None = None, A: float | None = None,
                 B1: float | None = None, **params) -> InitialDataSpec:
    """Built-in initial data; ``A``, ``B1`` and ``L`` default to the analytic values.

    The declared Lipschitz bound ``L`` defaults to the cone slope (plus the
    ripple slope for ``wavy_cone``).
    """
    try:
        cls = INITIAL_FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown initial-data family {family!r}") from None
    fn = cls(**params)
    A0, B0 = _envelope(family, fn)
    if L is None:
        L = getattr(fn, "slope", 0.0)
        if family == "wavy_cone":
            L += abs(fn.amp * fn.omega)
    return InitialDataSpec(fn, float(A if A is not None else (A0 if A0 is not None else 0.0)),
                           float(B1 if B1 is not None else (B0 if B0 is not None else 0.0)),
                           float(L), family, dict(params))


def validate_initial(spec: InitialDataSpec, scaling: ScalingParams, window: TraitWindow,
                     tolerance: float = 1e-9) -> CheckReport:
    """Check the decay envelope and the discrete Lipschitz bound on every node.

    Failures are reported, never raised. The worst margin is the smaller of
    the envelope slack ``-A|x| + B1 - u0(x)`` and the Lipschitz slack
    ``L - |discrete slope|`` over the window; ``A <= 0`` or ``L`` outside
    ``(0, 1)`` fail outright.
    """
    delta = scaling.delta_K
    if not math.isclose(window.delta, delta, rel_tol=1e-12):
        raise ValueError("window step does not match scaling")
    x = window.x
    u = np.asarray(spec.u0(x), dtype=float)
    env = (-spec.A * np.abs(x) + spec.B1) - u
    j_env = int(np.argmin(env))
    slopes = np.abs(np.diff(u)) / delta if u.size > 1 else np.zeros(0)
    lip = spec.L - slopes
    j_lip = int(np.argmin(lip)) if lip.size else 0
    worst_env = float(env[j_env])
    worst_lip = float(lip[j_lip]) if lip.size else math.inf
    constants_ok = spec.A > 0 and 0 < spec.L < 1
    if worst_env <= worst_lip:
        margin, loc, which = worst_env, (0.0, float(x[j_env])), "decay_envelope"
    else:
        margin, loc, which = worst_lip, (0.0, float(x[j_lip])), "discrete_lipschitz"
    if not constants_ok:
        margin = min(margin, -1.0)
        which = "constants"
    return CheckReport(
        "initial_data",
        bool(constants_ok and margin >= -tolerance),
        float(margin),
        loc,
        tolerance,
        {"envelope_margin": worst_env, "lipschitz_margin": worst_lip,
         "violated": which if margin < -tolerance or not constants_ok else None,
         "A": spec.A, "B1": spec.B1, "L": spec.L},
    )
