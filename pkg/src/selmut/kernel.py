"""Mutation kernels with exponential tails ``G(x) = f(x) exp(-|x|)``.

Moments are evaluated either in closed form (constant profile, i.e. the
exponential kernel family) or by adaptive quadrature on ``[-M, M]`` with the
truncation level ``M`` chosen from the analytic tail bound

    int_{|y| > M} G(y) exp(a y) dy  <=  2 f_max exp(-(1 - |a|) M) / (1 - |a|).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DivergentMomentError, KernelError

NORMALIZATION_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Kernel ``G(x) = f(x) exp(-|x|)`` with certified profile bounds.

    ``constant`` is set when ``f`` is identically that value; it enables the
    closed-form moments and the O(N) mutation sums in the lattice dynamics.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    f_min: float
    f_max: float
    name: str = "user"
    constant: float | None = None
    symmetric: bool = False

    def __post_init__(self):
        if not (self.f_min > 0):
            raise KernelError(f"profile lower bound must be positive, got {self.f_min}")
        if not (math.isfinite(self.f_max) and self.f_max >= self.f_min):
            raise KernelError(f"profile upper bound must be finite and >= f_min, got {self.f_max}")
        probe = np.linspace(-50.0, 50.0, 20001)
        vals = np.asarray(self.profile(probe), dtype=float)
        if np.any(vals < self.f_min * (1 - 1e-12)) or np.any(vals > self.f_max * (1 + 1e-12)):
            raise KernelError("profile leaves its declared bounds [f_min, f_max]")
        total = exp_moment(self, 0.0, tol=1e-12).value
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise KernelError(f"kernel integrates to {total!r}, expected 1")

    def mgf(self, q):
        """``(int G e^{q y}, int y G e^{q y})`` for an array of ``|q| < 1``.

        Uses the profile's closed form when it has one, else quadrature.
        """
        q = np.asarray(q, dtype=float)
        if hasattr(self.profile, "mgf"):
            m, dm = self.profile.mgf(q)
            return np.asarray(m, dtype=float), np.asarray(dm, dtype=float)
        flat = q.ravel()
        m = np.array([exp_moment(self, float(a), tol=1e-10).value for a in flat])
        dm = np.array([_first_moment(self, float(a)) for a in flat])
        return m.reshape(q.shape), dm.reshape(q.shape)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.profile(x), dtype=float) * np.exp(-np.abs(x))


@dataclass(frozen=True)
class MomentResult:
    value: float
    tail_bound: float
    truncation_M: float


# Profiles are module-level callables so kernels survive pickling into workers.

@dataclass(frozen=True)
class _ConstantProfile:
    c: float

    def __call__(self, x):
        return np.full(np.shape(x), self.c, dtype=float)

    def mgf(self, q):
        r, s = 1.0 - q, 1.0 + q
        return self.c * (1 / r + 1 / s), self.c * (1 / r ** 2 - 1 / s ** 2)


@dataclass(frozen=True)
class _CosineProfile:
    beta: float

    def __call__(self, x):
        return (1.0 + self.beta * np.cos(x)) / (2.0 + self.beta)

    def mgf(self, q):
        # int_0^inf cos(y) exp(-r y) dy = r / (r^2 + 1)
        b, r, s = self.beta, 1.0 - q, 1.0 + q
        m = (1 / r + 1 / s) + b * (r / (r * r + 1) + s / (s * s + 1))
        dm = (1 / r ** 2 - 1 / s ** 2) + b * ((1 - s * s) / (s * s + 1) ** 2 - (1 - r * r) / (r * r + 1) ** 2)
        return m / (2.0 + b), dm / (2.0 + b)


@dataclass(frozen=True)
class _SkewProfile:
    beta: float

    def __call__(self, x):
        return 0.5 * (1.0 + self.beta * np.tanh(x))

    def mgf(self, q):
        # tanh|y| = 1 - 2 / (exp(2|y|) + 1); the correction decays like exp(-2y)
        b, r, s = self.beta, 1.0 - q, 1.0 + q
        cr, dr = _logistic_tail(r)
        cs, ds = _logistic_tail(s)
        m = 0.5 * (1 / r + 1 / s) + 0.5 * b * (1 / r - 1 / s) - b * (cr - cs)
        dm = 0.5 * (1 / r ** 2 - 1 / s ** 2) + 0.5 * b * (1 / r ** 2 + 1 / s ** 2) - b * (dr + ds)
        return m, dm


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(200)
_GL_Y = 20.0 * (_GL_NODES + 1.0)
_GL_W = 20.0 * _GL_WEIGHTS


def _logistic_tail(r):
    """``int_0^40 exp(-r y) / (exp(2y) + 1) dy`` and the same with an extra ``y``."""
    r = np.asarray(r, dtype=float)
    g = np.exp(-np.multiply.outer(r + 2.0, _GL_Y)) / (1.0 + np.exp(-2.0 * _GL_Y))
    return g @ _GL_W, g @ (_GL_W * _GL_Y)


def exponential_kernel() -> KernelSpec:
    """``G(x) = exp(-|x|) / 2``."""
    return KernelSpec(_ConstantProfile(0.5), 0.5, 0.5, "exponential", constant=0.5, symmetric=True)


def cosine_modulated_kernel(beta: float = 0.5) -> KernelSpec:
    """``f(x) = (1 + beta cos x) / (2 + beta)``, symmetric, ``|beta| < 1``."""
    if not abs(beta) < 1:
        raise KernelError("cosine modulation needs |beta| < 1 to keep f positive")
    c = 1.0 / (2.0 + beta)
    return KernelSpec(_CosineProfile(beta), c * (1 - abs(beta)), c * (1 + abs(beta)),
                      "cosine_modulated", symmetric=True)


def skewed_kernel(beta: float = 0.5) -> KernelSpec:
    """``f(x) = (1 + beta tanh x) / 2``; asymmetric, still a probability density."""
    if not abs(beta) < 1:
        raise KernelError("skewed kernel needs |beta| < 1 to keep f positive")
    return KernelSpec(_SkewProfile(beta), 0.5 * (1 - abs(beta)), 0.5 * (1 + abs(beta)), "skewed")


KERNEL_FAMILIES = {
    "exponential": exponential_kernel,
    "cosine_modulated": cosine_modulated_kernel,
    "skewed": skewed_kernel,
}


def make_kernel(family: str, **params) -> KernelSpec:
    try:
        factory = KERNEL_FAMILIES[family]
    except KeyError:
        raise KernelError(f"unknown kernel family {family!r}") from None
    return factory(**params)


def eval_density(spec: KernelSpec, x):
    out = spec.density(x)
    return float(out) if np.ndim(out) == 0 else out


def _check_rate(a):
    if not abs(a) < 1:
        raise DivergentMomentError(
            f"exponential moment of order a={a} diverges: the kernel tail is exp(-|y|)"
        )


def tail_bound(spec: KernelSpec, a: float, M: float) -> float:
    """Upper bound on the moment integrand mass outside ``[-M, M]``."""
    r = 1.0 - abs(a)
    return 2.0 * spec.f_max * math.exp(-r * M) / r


def truncation_for(spec: KernelSpec, a: float, tol: float) -> float:
    r = 1.0 - abs(a)
    return max(1.0, math.log(2.0 * spec.f_max / (r * tol)) / r)


def _half_line(func, M, tol):
    # chunked so oscillating or slowly decaying integrands stay well resolved
    edges = np.linspace(0.0, M, max(2, int(math.ceil(M / 5.0)) + 1))
    parts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(func, lo, hi, epsabs=tol / (4 * len(edges)), epsrel=1e-13, limit=200)
        parts.append(val)
    return math.fsum(parts)


def _moment_quadrature(spec, right_rate, left_rate, a, tol):
    M = truncation_for(spec, a, tol / 2)
    f = spec.profile
    right = _half_line(lambda y: float(f(np.float64(y))) * math.exp(-right_rate * y), M, tol)
    left = _half_line(lambda y: float(f(np.float64(-y))) * math.exp(-left_rate * y), M, tol)
    return MomentResult(right + left, tail_bound(spec, a, M), M)


def _first_moment(spec, a, tol=1e-10):
    _check_rate(a)
    M = truncation_for(spec, a, tol / 4) * 1.5
    f = spec.profile
    right = _half_line(lambda y: y * float(f(np.float64(y))) * math.exp(-(1 - a) * y), M, tol)
    left = _half_line(lambda y: y * float(f(np.float64(-y))) * math.exp(-(1 + a) * y), M, tol)
    return right - left


def exp_moment(spec: KernelSpec, a: float, tol: float = 1e-12, closed_form: bool = True) -> MomentResult:
    """``int G(y) exp(a y) dy`` for ``|a| < 1``."""
    _check_rate(a)
    if closed_form and spec.constant is not None:
        c = spec.constant
        return MomentResult(2.0 * c / (1.0 - a * a), 0.0, math.inf)
    return _moment_quadrature(spec, 1.0 - a, 1.0 + a, a, tol)


def abs_exp_moment(spec: KernelSpec, a: float, tol: float = 1e-12, closed_form: bool = True) -> MomentResult:
    """``int G(y) exp(a |y|) dy`` for ``|a| < 1``."""
    _check_rate(a)
    if closed_form and spec.constant is not None:
        return MomentResult(2.0 * spec.constant / (1.0 - a), 0.0, math.inf)
    return _moment_quadrature(spec, 1.0 - a, 1.0 - a, a, tol)


def discrete_tail_bound(spec: KernelSpec, h: float, a: float, M: float) -> float:
    r = 1.0 - abs(a)
    return 2.0 * spec.f_max * math.exp(-r * (M - h)) / r * (1.0 + h)


def discrete_truncation_for(spec: KernelSpec, h: float, a: float, tol: float) -> float:
    r = 1.0 - abs(a)
    return h + max(1.0, math.log(2.0 * spec.f_max * (1.0 + h) / (r * tol)) / r)


def center_out_offsets(n: int) -> np.ndarray:
    """``0, 1, -1, 2, -2, ..., n, -n``."""
    l = np.empty(2 * n + 1, dtype=np.int64)
    l[0] = 0
    l[1::2] = np.arange(1, n + 1)
    l[2::2] = -np.arange(1, n + 1)
    return l


def discrete_exp_sum(spec: KernelSpec, h: float, a: float, M: float | None = None,
                     signed: bool = False, tol: float = 1e-13) -> MomentResult:
    """Riemann sum ``sum_{|l h| <= M} h G(l h) exp(a h |l|)``.

    With ``signed=True`` the weight is ``exp(a h l)`` instead. When ``M`` is
    omitted it is chosen so the certified tail bound is below ``tol``. The
    terms are accumulated center-outward with exactly rounded summation, so
    the result does not depend on evaluation order or thread count.
    """
    _check_rate(a)
    if not h > 0:
        raise ValueError("step h must be positive")
    if M is None:
        M = discrete_truncation_for(spec, h, a, tol)
    if not M > 0:
        raise ValueError("truncation half-width M must be positive")
    n = int(math.floor(M / h * (1 + 1e-14)))
    l = center_out_offsets(n)
    y = l * h
    expo = a * (y if signed else np.abs(y)) - np.abs(y)
    terms = h * np.asarray(spec.profile(y), dtype=float) * np.exp(expo)
    value = math.fsum(terms.tolist())
    return MomentResult(value, discrete_tail_bound(spec, h, a, M), float(M))


def alpha_bound(spec: KernelSpec, a: float, per_octave: int = 4, octaves: int = 12,
                tol: float = 1e-10) -> float:
    """Numerical upper bound for ``sup_{0 < h <= 1} sum_l h G(l h) exp(a h |l|)``.

    The supremum is sampled on the geometric grid ``h = 2**(-j/per_octave)``,
    combined with the ``h -> 0`` limit (the continuous moment), and inflated
    by the largest jump between consecutive samples plus the tail bounds.
    """
    _check_rate(a)
    return _alpha_bound_cached(spec, float(a), int(per_octave), int(octaves), float(tol))


@functools.lru_cache(maxsize=256)
def _alpha_bound_cached(spec, a, per_octave, octaves, tol):
    hs = 2.0 ** (-np.arange(per_octave * octaves + 1) / per_octave)
    sums = []
    tails = []
    for h in hs:
        res = discrete_exp_sum(spec, float(h), a, tol=tol)
        sums.append(res.value)
        tails.append(res.tail_bound)
    sums = np.array(sums)
    limit = abs_exp_moment(spec, a, tol=tol)
    variation = float(np.max(np.abs(np.diff(sums)))) if len(sums) > 1 else 0.0
    peak = max(float(np.max(sums + np.array(tails))), limit.value + limit.tail_bound)
    return peak + variation
