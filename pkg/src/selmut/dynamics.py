"""Rescaled lattice selection-mutation model.

Two equivalent forms are integrated. In density space, with rescaled time,

    dn_i/dt = log K * [ R(x_i) n_i + sum_l p(x_{i+l}) h G(l h) n_{i+l} ],

and on the logarithmic scale ``u_i = log(n_i) / log K``,

    du_i/dt = R(x_i) + sum_l p(x_{i+l}) h G(l h) exp(log K (u_{i+l} - u_i)).

The log form is the primary path because ``K**u`` overflows double precision
long before the exponents above do. The infinite lattice is truncated to a
window padded with ghost nodes; the ghosts follow a boundary rule and the
mutation sum is cut at ``|l h| <= M`` with a certified tail bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, signal

from . import kernel as kern
from .errors import (DensityOverflowError, DomainError, NegativeDensityError,
                     OutOfRangeError, SlopeBlowupError, StiffnessError)
from .kernel import KernelSpec
from .rates import RateSpec
from .scaling import LatticeField, ScalingParams, TraitWindow

# exp() of anything above this is treated as a slope blow-up
EXPONENT_GUARD = 700.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Time stepping and lattice truncation settings.

    ``truncation_M`` is the mutation-sum half-width in units of the rescaled
    mutation step (``|l h| <= M``); when ``None`` it is derived from
    ``tail_tol``. ``boundary_slope`` is the decay slope used by the
    ``decay_extrapolation`` ghost rule. ``mutation_sum`` picks the u-space
    summation path (``recursive`` needs a constant kernel profile) and
    ``convolution`` the n-space one. ``mutation_scale`` multiplies every
    kernel weight; it exists so tests can switch mutations off.
    """

    method: str = "rk45_adaptive"
    dt_init: float = 1e-3
    dt_max: float = 0.05
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    truncation_M: float | None = None
    tail_tol: float = 1e-10
    boundary: str = "decay_extrapolation"
    boundary_slope: float = 0.9
    mutation_sum: str = "auto"
    convolution: str = "direct"
    mutation_scale: float = 1.0

    def __post_init__(self):
        if self.method not in ("rk45_adaptive", "rk4"):
            raise ValueError(f"unknown integrator {self.method!r}")
        if self.boundary not in ("decay_extrapolation", "frozen"):
            raise ValueError(f"unknown boundary rule {self.boundary!r}")
        if self.mutation_sum not in ("auto", "direct", "recursive"):
            raise ValueError(f"unknown mutation_sum {self.mutation_sum!r}")
        if self.convolution not in ("direct", "fft"):
            raise ValueError(f"unknown convolution {self.convolution!r}")
        for name in ("dt_init", "dt_max", "rel_tol", "abs_tol", "tail_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.truncation_M is not None and not self.truncation_M > 0:
            raise ValueError("truncation_M must be positive")
        if not 0 <= self.boundary_slope < 1:
            raise ValueError("boundary_slope must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Lattice values at increasing output times, all on one window.

    ``space`` is ``"u"``, ``"n"`` or ``"hj"``. ``values[k]`` holds the field
    at ``times[k]``; ``meta`` stores per-time diagnostics such as
    ``max_slope`` and ``tail_bound``.
    """

    times: np.ndarray
    values: np.ndarray
    window: TraitWindow
    space: str
    scaling: ScalingParams | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape != (times.size, self.window.n_nodes):
            raise OutOfRangeError("trajectory values must have shape (n_times, n_nodes)")
        if times.size == 0 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise OutOfRangeError("output times must start at 0 and increase strictly")
        times.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", vals)

    @property
    def fields(self) -> list[LatticeField]:
        return [LatticeField(self.window, v, self.space) for v in self.values]

    @property
    def K(self):
        return None if self.scaling is None else self.scaling.K

    def at(self, t: float) -> LatticeField:
        """Field at time ``t``, linearly interpolated between output times."""
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise OutOfRangeError(f"time {t} outside [{times[0]}, {times[-1]}]")
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) <= 1e-12 * max(1.0, abs(t)):
            return LatticeField(self.window, self.values[k], self.space)
        j = int(np.searchsorted(times, t)) - 1
        w = (t - times[j]) / (times[j + 1] - times[j])
        return LatticeField(self.window, (1 - w) * self.values[j] + w * self.values[j + 1], self.space)


class LatticeOperator:
    """Right-hand sides of the lattice model on one window.

    Precomputes rates on the window, mutation rates on the ghost-padded
    lattice and the kernel row ``h G(l h)``. ``initial`` supplies the ghost
    values for the ``frozen`` boundary rule.
    """

    def __init__(self, window: TraitWindow, scaling: ScalingParams, rates: RateSpec,
                 kernel: KernelSpec, cfg: IntegratorConfig, initial: LatticeField | None = None):
        if not math.isclose(window.delta, scaling.delta_K, rel_tol=1e-12):
            raise OutOfRangeError("window step does not match delta_K")
        self.window, self.scaling, self.rates, self.kernel, self.cfg = window, scaling, rates, kernel, cfg
        h, delta = scaling.h_K, scaling.delta_K
        self.log_K, self.h, self.delta = scaling.log_K, h, delta

        slope0 = cfg.boundary_slope
        if initial is not None:
            s = _field_slope(initial, scaling)
            if s < 1:
                slope0 = max(slope0, s)
        self.design_slope = slope0
        if cfg.truncation_M is not None:
            M = float(cfg.truncation_M)
        else:
            # per unit mutation rate, then scaled so the bound covers p_upper
            M = kern.discrete_truncation_for(kernel, h, slope0, cfg.tail_tol / max(rates.p_upper, 1e-300))
        self.M = M
        self.n_off = int(math.floor(M / h * (1 + 1e-14)))
        self.pad = self.n_off + 1
        N = window.n_nodes
        self.N = N
        idx = np.arange(window.i_min - self.pad, window.i_max + self.pad + 1)
        self.x_ext = idx * delta
        self.x = window.x
        self.R = np.asarray(rates.R(self.x), dtype=float)
        self.p_ext = np.asarray(rates.p(self.x_ext), dtype=float)
        self.log_p_ext = np.log(self.p_ext)
        offs = np.arange(-self.n_off, self.n_off + 1)
        self.offsets = offs
        self.weights = cfg.mutation_scale * h * kernel.density(offs * h)
        self.use_recursive = kernel.constant is not None and cfg.mutation_sum in ("auto", "recursive")
        if cfg.mutation_sum == "recursive" and kernel.constant is None:
            raise ValueError("recursive mutation sum needs a constant kernel profile")
        self._ghost_k = np.arange(1, self.pad + 1)
        self._frozen = None
        if cfg.boundary == "frozen" and initial is not None:
            u0 = initial.values if initial.space != "n" else None
            if u0 is not None:
                self._frozen = self._decay_ghosts_u(u0)
            else:
                self._frozen = self._decay_ghosts_n(initial.values)

    # -- ghost rules -------------------------------------------------------

    def _decay_ghosts_u(self, u):
        step = self.cfg.boundary_slope * self.delta * self._ghost_k
        return (u[0] - step)[::-1], u[-1] - step

    def _decay_ghosts_n(self, n):
        fac = np.exp(-self.cfg.boundary_slope * self.h * self._ghost_k)
        return (n[0] * fac)[::-1], n[-1] * fac

    def extend_u(self, u):
        left, right = self._frozen if self._frozen is not None else self._decay_ghosts_u(u)
        return np.concatenate([left, u, right])

    def extend_n(self, n):
        left, right = self._frozen if self._frozen is not None else self._decay_ghosts_n(n)
        return np.concatenate([left, n, right])

    # -- right-hand sides --------------------------------------------------

    def mutation_u(self, u):
        """``sum_l p_{i+l} h G(l h) exp(log K (u_{i+l} - u_i))`` on the window."""
        u_ext = self.extend_u(np.asarray(u, dtype=float))
        if self.use_recursive:
            return self._mutation_recursive(u_ext)
        return self._mutation_direct(u_ext)

    def _mutation_direct(self, u_ext):
        N, pad, lk = self.N, self.pad, self.log_K
        u = u_ext[pad:pad + N]
        total = np.zeros(N)
        # center-outward order keeps the accumulation independent of layout
        for l in kern.center_out_offsets(self.n_off):
            w = self.weights[l + self.n_off]
            lo = pad + l
            e = lk * (u_ext[lo:lo + N] - u)
            if e.max() > EXPONENT_GUARD:
                raise SlopeBlowupError(_blowup_msg(e, self.x))
            total += w * self.p_ext[lo:lo + N] * np.exp(e)
        return total

    def _mutation_recursive(self, u_ext):
        # G = c exp(-|y|): split at l = 0 and run prefix log-sum-exp sweeps, so
        # every node sums the whole padded lattice in O(N).
        N, pad, h = self.N, self.pad, self.h
        c = self.kernel.constant * self.cfg.mutation_scale
        if c == 0.0:
            return np.zeros(N)
        phi = self.log_K * u_ext
        j = np.arange(u_ext.size) * h
        a = self.log_p_ext + phi - j
        b = self.log_p_ext + phi + j
        right_acc = np.logaddexp.accumulate(a[::-1])[::-1]
        left_acc = np.logaddexp.accumulate(b)
        sl = slice(pad, pad + N)
        er = right_acc[sl] - (phi[sl] - j[sl])
        el = left_acc[sl] - (phi[sl] + j[sl])
        worst = max(er.max(), el.max())
        if worst > EXPONENT_GUARD:
            raise SlopeBlowupError(_blowup_msg(np.maximum(er, el), self.x))
        return c * h * (np.exp(er) + np.exp(el) - self.p_ext[sl])

    def rhs_u(self, u):
        return self.R + self.mutation_u(u)

    def mutation_n(self, n):
        n_ext = self.extend_n(np.asarray(n, dtype=float))
        lo = self.pad - self.n_off
        v = (self.p_ext * n_ext)[lo:lo + self.N + 2 * self.n_off]
        if self.cfg.convolution == "fft":
            return signal.fftconvolve(v, self.weights[::-1], mode="valid")
        return np.correlate(v, self.weights, mode="valid")

    def rhs_n(self, n):
        n = np.asarray(n, dtype=float)
        return self.log_K * (self.R * n + self.mutation_n(n))

    def tail_bound(self, u=None) -> float:
        """Certified bound on the dropped mutation terms for state ``u``."""
        s = self.cfg.boundary_slope
        if u is not None and len(u) > 1:
            s = max(s, float(np.max(np.abs(np.diff(u)))) / self.delta)
        if s >= 1:
            return math.inf
        return self.rates.p_upper * abs(self.cfg.mutation_scale) * kern.discrete_tail_bound(
            self.kernel, self.h, s, self.M)

    def positivity_dt(self) -> float:
        """Largest RK4 step keeping the density update entrywise nonnegative."""
        w0 = self.weights[self.n_off]
        p = self.p_ext[self.pad:self.pad + self.N]
        diag = self.log_K * (self.R + w0 * p)
        c = max(0.0, -float(diag.min()))
        return math.inf if c == 0 else 1.0 / c


def _blowup_msg(e, x):
    j = int(np.argmax(e))
    return (f"exponent log K (u_j - u_i) = {e[j]:.1f} at trait {x[j]:.4g} exceeds "
            f"{EXPONENT_GUARD}; discrete slope has blown up")


def _field_slope(f: LatticeField, scaling: ScalingParams) -> float:
    v = f.values
    if v.size < 2:
        return 0.0
    if f.space == "n":
        if np.any(v <= 0):
            return math.inf
        v = np.log(v) / scaling.log_K
    return float(np.max(np.abs(np.diff(v)))) / scaling.delta_K


def _as_field(values, window, space, **info):
    return LatticeField(window, values, space, info)


def rhs_u(field: LatticeField, scaling: ScalingParams, rates: RateSpec, kernel: KernelSpec,
          cfg: IntegratorConfig = IntegratorConfig()) -> LatticeField:
    """Time derivative of the log-density field; ``info['tail_bound']`` holds the truncation bound."""
    if field.space != "u":
        raise OutOfRangeError("rhs_u needs a u-space field")
    op = LatticeOperator(field.window, scaling, rates, kernel, cfg, field)
    return _as_field(op.rhs_u(field.values), field.window, "u",
                     tail_bound=op.tail_bound(field.values), truncation_M=op.M)


def rhs_n(field: LatticeField, scaling: ScalingParams, rates: RateSpec, kernel: KernelSpec,
          cfg: IntegratorConfig = IntegratorConfig()) -> LatticeField:
    """Time derivative of the density field (rescaled time)."""
    if np.any(np.asarray(field.values) < 0):
        raise NegativeDensityError("density must be nonnegative")
    op = LatticeOperator(field.window, scaling, rates, kernel, cfg, field)
    return LatticeField(field.window, op.rhs_n(field.values), "rate", {"truncation_M": op.M})


def _output_grid(T, output_times):
    if T < 0:
        raise ValueError("final time must be nonnegative")
    if output_times is None:
        ts = [0.0, float(T)] if T > 0 else [0.0]
    else:
        ts = sorted({float(t) for t in output_times} | {0.0})
        if ts[-1] > T * (1 + 1e-12) + 1e-15:
            raise ValueError("output time beyond the final time")
    return np.array(ts)


def _rk4(f, y0, times, dt_max):
    out = [y0.copy()]
    y = y0.copy()
    for t0, t1 in zip(times[:-1], times[1:]):
        n = max(1, int(math.ceil((t1 - t0) / dt_max - 1e-12)))
        dt = (t1 - t0) / n
        for _ in range(n):
            k1 = f(y)
            k2 = f(y + 0.5 * dt * k1)
            k3 = f(y + 0.5 * dt * k2)
            k4 = f(y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise StiffnessError(f"fixed-step integration produced non-finite values by t={t1:.6g}")
        out.append(y.copy())
    return np.array(out), None


def _rk45(f, y0, times, cfg):
    last = [times[0]]

    def rhs(t, y):
        last[0] = t
        dy = f(y)
        if not np.all(np.isfinite(dy)):
            raise StiffnessError(f"non-finite right side at t={t:.6g}")
        return dy

    sol = integrate.solve_ivp(rhs, (times[0], times[-1]), y0, method="RK45",
                              t_eval=times, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                              first_step=min(cfg.dt_init, times[-1] - times[0]),
                              max_step=cfg.dt_max)
    if sol.status != 0:
        raise StiffnessError(f"adaptive integrator stopped near t={last[0]:.6g}: {sol.message}")
    return sol.y.T.copy(), sol.nfev


def simulate(initial: LatticeField, T: float, scaling: ScalingParams, rates: RateSpec,
             kernel: KernelSpec, cfg: IntegratorConfig = IntegratorConfig(),
             output_times=None) -> Trajectory:
    """Integrate the lattice model from ``initial`` to time ``T``.

    The space of ``initial`` (``"u"`` or ``"n"``) selects the form that is
    integrated. ``meta`` of the result records the discrete max slope and the
    mutation tail bound at each output time, the truncation ``M`` and the
    integrator tolerance budget. In density space the fixed-step RK4 path
    caps its step so each update stays entrywise nonnegative.
    """
    if initial.space not in ("u", "n"):
        raise OutOfRangeError("initial field must be in u or n space")
    if initial.space == "n" and np.any(initial.values < 0):
        raise NegativeDensityError("initial density must be nonnegative")
    times = _output_grid(T, output_times)
    op = LatticeOperator(initial.window, scaling, rates, kernel, cfg, initial)
    y0 = np.array(initial.values, dtype=float)
    nfev = 0
    if times.size == 1:
        values = y0[None, :]
    else:
        f = op.rhs_u if initial.space == "u" else op.rhs_n
        if cfg.method == "rk4":
            dt = cfg.dt_max
            if initial.space == "n":
                dt = min(dt, op.positivity_dt())
            values, _ = _rk4(f, y0, times, dt)
        else:
            values, nfev = _rk45(f, y0, times, cfg)
    if initial.space == "u":
        u_vals = values
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            u_vals = np.where(values > 0, np.log(np.maximum(values, 1e-300)) / scaling.log_K, -np.inf)
    slopes = []
    tails = []
    for row in u_vals:
        # zero densities give -inf on the log scale; their slopes are skipped
        with np.errstate(invalid="ignore"):
            d = np.abs(np.diff(row)) / scaling.delta_K if row.size > 1 else np.zeros(1)
        d = d[np.isfinite(d)]
        slopes.append(float(d.max()) if d.size else math.inf)
        tails.append(op.tail_bound(row) if np.all(np.isfinite(row)) else math.inf)
    meta = {
        "max_slope": slopes,
        "tail_bound": tails,
        "truncation_M": op.M,
        "method": cfg.method,
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
        "nfev": nfev,
    }
    return Trajectory(times, values, initial.window, initial.space, scaling, meta)


def hopf_cole(field: LatticeField, scaling: ScalingParams, direction: str) -> LatticeField:
    """``u = log(n) / log K`` (``to_u``) or ``n = exp(u log K)`` (``to_n``)."""
    v = np.asarray(field.values, dtype=float)
    if direction == "to_u":
        if np.any(v <= 0):
            raise DomainError("log scale needs strictly positive densities")
        return LatticeField(field.window, np.log(v) / scaling.log_K, "u")
    if direction == "to_n":
        e = v * scaling.log_K
        if np.any(e > EXPONENT_GUARD + 9.0):
            raise DensityOverflowError(
                "density K**u overflows double precision; integrate on the log scale instead")
        return LatticeField(field.window, np.exp(e), "n")
    raise ValueError(f"unknown direction {direction!r}")


def mass_norm(field: LatticeField) -> float:
    """Unweighted l1 norm ``sum_i |n_i|``."""
    return math.fsum(np.abs(np.asarray(field.values, dtype=float)).tolist())


def with_cfg(cfg: IntegratorConfig, **changes) -> IntegratorConfig:
    return replace(cfg, **changes)
