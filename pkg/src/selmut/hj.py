"""Obstacle Hamilton-Jacobi equation for the limiting log-density.

Solves ``min(u_t - B(x, u_x), 1 - |u_x|) = 0`` with the source

    B(x, q) = R(x) + p(x) * m(q),    m(q) = int G(y) exp(q y) dy,

which is finite only for ``|q| < 1``. Each explicit monotone step is followed
by a projection onto the 1-Lipschitz cone, which enforces the gradient
obstacle exactly on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .errors import CFLError
from .kernel import KernelSpec
from .rates import RateSpec
from .scaling import LatticeField, TraitWindow

SCHEMES = ("lf_projected", "upwind_projected")


@dataclass(frozen=True)
class HJGridConfig:
    """Grid for the obstacle HJ solver.

    ``dt`` caps the time step; the solver shrinks it further so that
    ``dt * theta <= cfl * dx`` holds at every step. With ``viscosity_theta``
    left as ``None`` the dissipation is the local bound
    ``p(x) * max |m'(q)|`` over each cell's gradient range. A user-supplied
    global ``viscosity_theta`` must satisfy the monotonicity bound and the
    CFL condition at construction.
    """

    dx: float
    window: TraitWindow
    dt: float = 0.01
    epsilon_clamp: float = 1e-3
    viscosity_theta: float | None = None
    scheme_id: str = "lf_projected"
    cfl: float = 0.9

    def __post_init__(self):
        if not self.dx > 0 or not self.dt > 0:
            raise ValueError("dx and dt must be positive")
        if not math.isclose(self.window.delta, self.dx, rel_tol=1e-12):
            raise ValueError("window step must equal dx")
        if not 0 < self.epsilon_clamp < 1:
            raise ValueError("epsilon_clamp must lie in (0, 1)")
        if self.scheme_id not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme_id!r}")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.viscosity_theta is not None:
            if not self.viscosity_theta > 0:
                raise CFLError("viscosity_theta must be positive")
            if self.dt * self.viscosity_theta > self.dx * (1 + 1e-12):
                raise CFLError(
                    f"CFL violated: dt * theta = {self.dt * self.viscosity_theta:.4g} > dx = {self.dx:.4g}")

    @classmethod
    def on_interval(cls, x_min: float, x_max: float, dx: float, **kw) -> "HJGridConfig":
        return cls(dx=dx, window=TraitWindow.from_bounds(x_min, x_max, dx), **kw)


@dataclass(frozen=True)
class HamiltonianEval:
    x: float
    q: float
    source_value: float
    finite: bool


def hamiltonian_source(x: float, q: float, rates: RateSpec, kernel: KernelSpec) -> HamiltonianEval:
    """``B(x, q) = R(x) + p(x) int G(y) e^{q y} dy``; infinite for ``|q| >= 1``."""
    if not abs(q) < 1:
        return HamiltonianEval(float(x), float(q), math.inf, False)
    m, _ = kernel.mgf(np.array([q]))
    xs = np.array([x], dtype=float)
    val = float(rates.R(xs)[0] + rates.p(xs)[0] * m[0])
    return HamiltonianEval(float(x), float(q), val, True)


def minimizing_gradient(kernel: KernelSpec) -> float:
    """Argmin of the convex moment curve ``m`` on ``(-1, 1)``."""
    if kernel.symmetric:
        return 0.0
    lo, hi = -0.999, 0.999
    # m' is increasing, so bisect on its sign
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if kernel.mgf(np.array([mid]))[1][0] > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def lipschitz_envelope(field: LatticeField, slope: float) -> LatticeField:
    """Largest ``slope``-Lipschitz grid function below ``field``.

    ``v_i = min_j (u_j + slope |x_i - x_j|)``, computed with one forward and
    one backward running minimum.
    """
    if not slope > 0:
        raise ValueError("slope must be positive")
    v = _envelope(np.asarray(field.values, dtype=float), field.window.x, slope)
    return LatticeField(field.window, v, field.space)


def _envelope(u, x, slope):
    sx = slope * x
    v = sx + np.minimum.accumulate(u - sx)
    v = np.minimum(v, -sx + np.minimum.accumulate((u + sx)[::-1])[::-1])
    # the shifted sums round, so clamp to keep the envelope below the data
    return np.minimum(v, u)


class _Stepper:
    def __init__(self, rates, kernel, cfg: HJGridConfig):
        x = cfg.window.x
        self.cfg = cfg
        self.R = np.asarray(rates.R(x), dtype=float)
        self.p = np.asarray(rates.p(x), dtype=float)
        self.kernel = kernel
        self.qmax = 1.0 - cfg.epsilon_clamp
        self.q_star = minimizing_gradient(kernel)
        if cfg.viscosity_theta is not None:
            qs = np.array([-self.qmax, self.qmax])
            need = float(np.max(self.p)) * float(np.max(np.abs(kernel.mgf(qs)[1])))
            if cfg.viscosity_theta < need * (1 - 1e-12):
                raise CFLError(
                    f"viscosity_theta = {cfg.viscosity_theta:.6g} below the monotonicity bound {need:.6g}")

    def gradients(self, u):
        dx = self.cfg.dx
        d = np.diff(u) / dx
        if d.size == 0:
            z = np.zeros(1)
            return z, z
        # linear extrapolation at the edges: ghost slope = neighbor slope
        a = np.concatenate([[d[0]], d])
        b = np.concatenate([d, [d[-1]]])
        q = self.qmax
        return np.clip(a, -q, q), np.clip(b, -q, q)

    def flux(self, a, b):
        """Numerical source ``B_num(x, a, b)`` and its local wave speed."""
        m_a, dm_a = self.kernel.mgf(a)
        m_b, dm_b = self.kernel.mgf(b)
        speed = self.p * np.maximum(np.abs(dm_a), np.abs(dm_b))
        if self.cfg.scheme_id == "lf_projected":
            m_c, _ = self.kernel.mgf(0.5 * (a + b))
            theta = speed if self.cfg.viscosity_theta is None else np.full_like(a, self.cfg.viscosity_theta)
            return self.R + self.p * m_c + 0.5 * theta * (b - a), theta
        # Godunov for the convex m: sup over [a, b] when a <= b, inf over [b, a] otherwise
        qc = np.clip(self.q_star, np.minimum(a, b), np.maximum(a, b))
        m_c, _ = self.kernel.mgf(qc)
        m = np.where(a <= b, np.maximum(m_a, m_b), m_c)
        return self.R + self.p * m, speed


def solve_hj(u0, T: float, rates: RateSpec, kernel: KernelSpec, cfg: HJGridConfig,
             output_times=None) -> Trajectory:
    """March the obstacle HJ equation from ``u0`` to ``T``.

    ``u0`` is a :class:`LatticeField` on ``cfg.window`` or a callable of the
    trait. It is projected onto the 1-Lipschitz cone first, so every output
    field has discrete slope at most 1. ``meta`` records the step count and
    the smallest step used.
    """
    if callable(u0) and not isinstance(u0, LatticeField):
        u = np.asarray(u0(cfg.window.x), dtype=float)
    else:
        if u0.window != cfg.window:
            raise ValueError("initial field must live on the solver window")
        u = np.array(u0.values, dtype=float)
    if T < 0:
        raise ValueError("final time must be nonnegative")
    ts = sorted({0.0, float(T)} | ({float(t) for t in output_times} if output_times is not None else set()))
    if ts[-1] > T:
        raise ValueError("output time beyond the final time")
    x = cfg.window.x
    stepper = _Stepper(rates, kernel, cfg)
    u = _envelope(u, x, 1.0)
    out = [u.copy()]
    t = 0.0
    n_steps = 0
    dt_min = math.inf
    for t_next in ts[1:]:
        while t < t_next - 1e-14 * max(1.0, t_next):
            a, b = stepper.gradients(u)
            src, speed = stepper.flux(a, b)
            smax = float(np.max(speed)) if speed.size else 0.0
            dt = cfg.dt
            if smax > 0:
                dt = min(dt, cfg.cfl * cfg.dx / smax)
            dt = min(dt, t_next - t)
            u = _envelope(u + dt * src, x, 1.0)
            t = t_next if t_next - (t + dt) <= 1e-14 * max(1.0, t_next) else t + dt
            n_steps += 1
            dt_min = min(dt_min, dt)
        out.append(u.copy())
    meta = {"scheme_id": cfg.scheme_id, "dx": cfg.dx, "n_steps": n_steps, "dt_min": dt_min,
            "max_slope": [float(np.max(np.abs(np.diff(v)))) / cfg.dx if v.size > 1 else 0.0 for v in out]}
    return Trajectory(np.array(ts), np.array(out), cfg.window, "hj", None, meta)


def inf_convolution_time(traj: Trajectory, gamma: float) -> Trajectory:
    """``u_gamma(t, x) = min_s u(s, x) + (t - s)**2 / gamma**2`` on the trajectory's times.

    The minimum over the sampled ``s`` is refined by a parabola through the
    three samples around the discrete minimizer, then capped by the sampled
    minimum, so the output never exceeds the input.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    s = traj.times
    U = traj.values
    nt = s.size
    g2 = gamma * gamma
    out = np.empty_like(U)
    cols = np.arange(U.shape[1])
    for k, t in enumerate(s):
        G = U + ((t - s) ** 2 / g2)[:, None]
        j = np.argmin(G, axis=0)
        best = G[j, cols]
        if nt >= 3:
            j0 = np.clip(j - 1, 0, nt - 3)
            s0, s1, s2 = s[j0], s[j0 + 1], s[j0 + 2]
            g0, g1, g2_ = G[j0, cols], G[j0 + 1, cols], G[j0 + 2, cols]
            # Newton divided differences of the parabola through the three samples
            d01 = (g1 - g0) / (s1 - s0)
            d12 = (g2_ - g1) / (s2 - s1)
            c2 = (d12 - d01) / (s2 - s0)
            c1 = d01 - c2 * (s0 + s1)
            c0 = g0 - s0 * (d01 - c2 * s1)
            with np.errstate(divide="ignore", invalid="ignore"):
                sv = -c1 / (2 * c2)
                vertex = c0 + c1 * sv + c2 * sv * sv
            ok = (c2 > 0) & (sv >= s0) & (sv <= s2) & np.isfinite(vertex)
            best = np.where(ok, np.minimum(best, vertex), best)
        out[k] = best
    meta = dict(traj.meta)
    meta["inf_convolution_gamma"] = gamma
    return Trajectory(s, out, traj.window, traj.space, traj.scaling, meta)
