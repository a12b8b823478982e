"""Verification checks and the large-K convergence experiment.

Every check returns a :class:`CheckReport` whose margin is positive when the
inequality holds; checks never raise on failure. The tolerance attached to
each report is its error budget (integrator tolerance plus mutation tail
bound, plus scheme error where an HJ solution is involved).
"""

from __future__ import annotations

import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernel as kern
from .dynamics import IntegratorConfig, Trajectory, hopf_cole, mass_norm, simulate
from .errors import OutOfRangeError, SweepError, UnknownCheckError
from .hj import HJGridConfig, solve_hj
from .kernel import KernelSpec, exponential_kernel
from .rates import InitialDataSpec, RateSpec, make_initial, make_rates, validate_initial
from .report import CheckReport
from .scaling import (LatticeField, PowerLaw, ScalingParams, TraitWindow, interpolate,
                      make_scaling, sample_field)

CHECK_IDS = ("positivity", "mass_bound", "comparison", "sandwich", "discrete_lipschitz",
             "u_n_consistency", "obstacle")


@dataclass(frozen=True)
class ConvergenceRecord:
    K: float
    log_K: float
    delta_K: float
    h_K: float
    sup_error: float
    max_slope: float
    runtime: float
    interior_slope: float = math.nan

    def __post_init__(self):
        if not self.sup_error >= 0:
            raise ValueError("sup_error must be nonnegative")


# --- distances --------------------------------------------------------------

def _bounds(window):
    if window is None:
        return -math.inf, math.inf
    if isinstance(window, TraitWindow):
        return window.i_min * window.delta, window.i_max * window.delta
    return float(window[0]), float(window[1])


def _sup_error_loc(fa: LatticeField, fb: LatticeField, window=None):
    wa, wb = fa.window, fb.window
    lo_w, hi_w = _bounds(window)
    lo = max(wa.i_min * wa.delta, wb.i_min * wb.delta, lo_w)
    hi = min(wa.i_max * wa.delta, wb.i_max * wb.delta, hi_w)
    if lo > hi:
        raise OutOfRangeError("windows do not overlap")
    xs = np.concatenate([wa.x, wb.x, [lo, hi]])
    xs = np.unique(xs[(xs >= lo) & (xs <= hi)])
    # both interpolants are piecewise linear, so the union of nodes carries the sup
    d = np.abs(interpolate(fa, xs) - interpolate(fb, xs))
    j = int(np.argmax(d))
    return float(d[j]), float(xs[j])


def sup_error(a, b, window=None, time: float | None = None) -> float:
    """``sup |interp(a) - interp(b)|`` over the overlap of the windows.

    ``a`` and ``b`` are trajectories (read at ``time``, default the last
    common time) or lattice fields. ``window`` is a ``(lo, hi)`` pair or a
    :class:`TraitWindow` restricting the comparison.
    """
    fa, fb = _field_at(a, time), _field_at(b, time)
    return _sup_error_loc(fa, fb, window)[0]


def _field_at(obj, t):
    if isinstance(obj, LatticeField):
        return obj
    if t is None:
        t = float(obj.times[-1])
    return obj.at(t)


# --- per-trajectory checks ---------------------------------------------------

def integrator_budget(traj: Trajectory) -> float:
    meta = traj.meta
    scale = 1.0 + float(np.max(np.abs(traj.values[np.isfinite(traj.values)]), initial=0.0))
    return meta.get("rel_tol", 0.0) * scale + meta.get("abs_tol", 0.0)


def _tail_budget(traj: Trajectory) -> float:
    tails = [t for t in traj.meta.get("tail_bound", [0.0]) if math.isfinite(t)]
    return float(traj.times[-1]) * (max(tails) if tails else 0.0)


def _argmin2(arr):
    k, i = np.unravel_index(int(np.argmin(arr)), arr.shape)
    return int(k), int(i)


def check_positivity(traj: Trajectory) -> CheckReport:
    k, i = _argmin2(traj.values)
    return CheckReport.from_margin("positivity", traj.values[k, i],
                                   (float(traj.times[k]), float(traj.window.x[i])), 0.0)


def mass_growth_factor(rates: RateSpec, kernel: KernelSpec, scaling: ScalingParams, t: float) -> float:
    """``1 + exp((R_upper + p_upper alpha(0)) t log K)``."""
    expo = (rates.R_upper + rates.p_upper * kern.alpha_bound(kernel, 0.0)) * t * scaling.log_K
    return 1.0 + (math.exp(expo) if expo < 709 else math.inf)


def check_mass_bound(traj, rates, kernel, scaling) -> CheckReport:
    m0 = mass_norm(traj.fields[0])
    margins = []
    for t, f in zip(traj.times, traj.fields):
        bound = mass_growth_factor(rates, kernel, scaling, float(t)) * m0
        m = mass_norm(f)
        # relative slack; an infinite bound is trivially satisfied
        margins.append(1.0 if not math.isfinite(bound) else (bound - m) / max(bound, 1e-300))
    k = int(np.argmin(margins))
    return CheckReport.from_margin("mass_bound", margins[k], (float(traj.times[k]), math.nan),
                                   1e-12 + traj.meta.get("rel_tol", 0.0),
                                   margins=margins)


def check_comparison(lower: Trajectory, upper: Trajectory, slack: float = 1e-12) -> CheckReport:
    """Nodewise order ``lower <= upper``, measured relative to the larger value."""
    if lower.values.shape != upper.values.shape or not np.array_equal(lower.times, upper.times):
        raise OutOfRangeError("comparison needs trajectories on the same grid")
    a, b = lower.values, upper.values
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    rel = (b - a) / scale
    k, i = _argmin2(rel)
    return CheckReport.from_margin("comparison", rel[k, i],
                                   (float(lower.times[k]), float(lower.window.x[i])), slack)


def sandwich_constants(rates: RateSpec, kernel: KernelSpec, L: float):
    """Lower and upper growth slopes ``(R_lower, R_upper + p_upper alpha(L))``."""
    return rates.R_lower, rates.R_upper + rates.p_upper * kern.alpha_bound(kernel, L)


def check_sandwich(traj, rates, kernel, L: float) -> CheckReport:
    """``u0 + R_lower t <= u(t) <= u0 + C1 t`` at every node and output time."""
    lo_c, up_c = sandwich_constants(rates, kernel, L)
    u0 = traj.values[0]
    t = traj.times[:, None]
    lower = traj.values - (u0 + lo_c * t)
    upper = (u0 + up_c * t) - traj.values
    tol = integrator_budget(traj) + _tail_budget(traj)
    k1, i1 = _argmin2(lower)
    k2, i2 = _argmin2(upper)
    if lower[k1, i1] <= upper[k2, i2]:
        m, k, i = lower[k1, i1], k1, i1
    else:
        m, k, i = upper[k2, i2], k2, i2
    return CheckReport.from_margin("sandwich", m, (float(traj.times[k]), float(traj.window.x[i])), tol,
                                   C1=up_c, C2=lo_c, lower_margin=float(lower[k1, i1]),
                                   upper_margin=float(upper[k2, i2]))


def interior_slopes(traj: Trajectory, interior=(-2.0, 2.0), t_max: float | None = None):
    """Max discrete slope over ``interior`` at each output time up to ``t_max``."""
    x = traj.window.x
    sel = (x >= interior[0] - 1e-12) & (x <= interior[1] + 1e-12)
    idx = np.flatnonzero(sel)
    if idx.size < 2:
        raise OutOfRangeError("interior window holds fewer than two nodes")
    v = traj.values[:, idx]
    if traj.space == "n":
        v = np.log(v) / traj.scaling.log_K
    d = np.abs(np.diff(v, axis=1)) / traj.window.delta
    keep = traj.times <= (t_max if t_max is not None else traj.times[-1]) + 1e-12
    return traj.times[keep], d[keep].max(axis=1), x[idx[:-1]][np.argmax(d[keep], axis=1)]


def check_discrete_lipschitz(traj, cap: float = 1.5, interior=(-2.0, 2.0)) -> CheckReport:
    ts, s, where = interior_slopes(traj, interior)
    k = int(np.argmax(s))
    return CheckReport.from_margin("discrete_lipschitz", cap - s[k], (float(ts[k]), float(where[k])),
                                   0.0, cap=cap, max_slope=float(s[k]))


def check_u_n_consistency(u_traj, n_traj, tol: float = 1e-6) -> CheckReport:
    if not np.array_equal(u_traj.times, n_traj.times):
        raise OutOfRangeError("consistency check needs matching output times")
    worst, loc = -1.0, (0.0, 0.0)
    for t, fu, fn in zip(u_traj.times, u_traj.fields, n_traj.fields):
        d, x = _sup_error_loc(fu, hopf_cole(fn, n_traj.scaling, "to_u"))
        if d > worst:
            worst, loc = d, (float(t), x)
    return CheckReport.from_margin("u_n_consistency", tol - worst, loc, 0.0, sup_difference=worst)


def check_obstacle(traj: Trajectory, tol: float = 1e-12) -> CheckReport:
    d = np.abs(np.diff(traj.values, axis=1)) / traj.window.delta
    k, i = np.unravel_index(int(np.argmax(d)), d.shape)
    return CheckReport.from_margin("obstacle", 1.0 - d[k, i],
                                   (float(traj.times[k]), float(traj.window.x[i])), tol)


def run_checks(traj: Trajectory, rates: RateSpec, kernel: KernelSpec, scaling: ScalingParams,
               suite, *, upper: Trajectory | None = None, n_traj: Trajectory | None = None,
               L: float | None = None, cap: float = 1.5, interior=(-2.0, 2.0)) -> list[CheckReport]:
    """Evaluate the requested checks on one trajectory.

    ``comparison`` needs ``upper`` (the solution from larger data),
    ``u_n_consistency`` needs the density-space twin ``n_traj``, and
    ``sandwich`` uses the declared Lipschitz bound ``L`` (default: the larger
    of 0.9 and the initial slope). A check whose input is missing or in the
    wrong space is reported as failed.
    """
    suite = list(suite)
    for cid in suite:
        if cid not in CHECK_IDS:
            raise UnknownCheckError(f"unknown check id {cid!r}; known: {', '.join(CHECK_IDS)}")
    out = []
    for cid in suite:
        try:
            out.append(_run_one(cid, traj, rates, kernel, scaling, upper, n_traj, L, cap, interior))
        except (OutOfRangeError, ValueError) as exc:
            out.append(CheckReport(cid, False, -math.inf, (math.nan, math.nan), 0.0, {"error": str(exc)}))
    return out


def _need(traj, space, cid):
    if traj.space != space:
        raise OutOfRangeError(f"check {cid} needs a {space}-space trajectory, got {traj.space}")


def _run_one(cid, traj, rates, kernel, scaling, upper, n_traj, L, cap, interior):
    if cid == "positivity":
        _need(traj, "n", cid)
        return check_positivity(traj)
    if cid == "mass_bound":
        _need(traj, "n", cid)
        return check_mass_bound(traj, rates, kernel, scaling)
    if cid == "comparison":
        if upper is None:
            raise OutOfRangeError("comparison needs the upper trajectory")
        return check_comparison(traj, upper)
    if cid == "sandwich":
        _need(traj, "u", cid)
        if L is None:
            L = max(0.9, float(traj.meta.get("max_slope", [0.0])[0]))
        return check_sandwich(traj, rates, kernel, L)
    if cid == "discrete_lipschitz":
        return check_discrete_lipschitz(traj, cap, interior)
    if cid == "u_n_consistency":
        _need(traj, "u", cid)
        if n_traj is None:
            raise OutOfRangeError("u_n_consistency needs the density-space trajectory")
        return check_u_n_consistency(traj, n_traj)
    _need(traj, "hj", cid)
    return check_obstacle(traj)


# --- randomized suites ---------------------------------------------------------

@dataclass(frozen=True)
class RandomSuiteConfig:
    n_samples: int = 20
    K: float = 1e3
    seed: int = 20240601
    T: float = 1.0
    window: tuple = (-4.0, 4.0)
    n_times: int = 11
    dt: float = 0.01


def random_initial(rng: np.random.Generator) -> InitialDataSpec:
    """A valid initial datum: rippled cone with slope bound at most 0.8."""
    return make_initial("wavy_cone", slope=float(rng.uniform(0.2, 0.6)),
                        height=float(rng.uniform(-0.3, 0.3)), center=float(rng.uniform(-1, 1)),
                        amp=float(rng.uniform(0.0, 0.1)), omega=float(rng.uniform(0.5, 2.0)),
                        phase=float(rng.uniform(0, 2 * math.pi)))


def _density_run(spec_u0, scale, rc: RandomSuiteConfig, scaling, window, rates, kernel):
    n0 = np.exp(scaling.log_K * np.asarray(spec_u0(window.x), dtype=float)) * scale
    cfg = IntegratorConfig(method="rk4", dt_max=rc.dt, convolution="fft")
    times = np.linspace(0.0, rc.T, rc.n_times)
    return simulate(LatticeField(window, n0, "n"), rc.T, scaling, rates, kernel, cfg, times)


def _suite_setup(rc: RandomSuiteConfig):
    scaling = make_scaling(rc.K)
    window = TraitWindow.from_bounds(rc.window[0], rc.window[1], scaling.delta_K)
    return scaling, window


def mass_bound_random(rates: RateSpec, kernel: KernelSpec, rc: RandomSuiteConfig = RandomSuiteConfig()):
    """Mass bound and positivity on ``rc.n_samples`` random density-space runs."""
    rng = np.random.default_rng(rc.seed)
    scaling, window = _suite_setup(rc)
    reports = []
    for j in range(rc.n_samples):
        spec = random_initial(rng)
        traj = _density_run(spec.u0, 1.0, rc, scaling, window, rates, kernel)
        reports.append((j, check_mass_bound(traj, rates, kernel, scaling), check_positivity(traj)))
    return (_merge("mass_bound_random", [r[1] for r in reports]),
            _merge("positivity_random", [r[2] for r in reports]))


def comparison_random(rates: RateSpec, kernel: KernelSpec, rc: RandomSuiteConfig = RandomSuiteConfig(),
                      swap: bool = False) -> CheckReport:
    """Order preservation on random pairs ``n0 <= m0 = n0 (1 + U[0, 1])``.

    ``swap=True`` feeds each pair in the wrong order, which must fail.
    """
    rng = np.random.default_rng(rc.seed + 1)
    scaling, window = _suite_setup(rc)
    reports = []
    for _ in range(rc.n_samples):
        spec = random_initial(rng)
        bump = 1.0 + rng.uniform(0.0, 1.0, window.n_nodes)
        lo = _density_run(spec.u0, 1.0, rc, scaling, window, rates, kernel)
        hi = _density_run(spec.u0, bump, rc, scaling, window, rates, kernel)
        reports.append(check_comparison(hi, lo) if swap else check_comparison(lo, hi))
    return _merge("comparison_random", reports)


def _merge(check_id, reports):
    j = int(np.argmin([r.worst_margin + r.tolerance for r in reports]))
    worst = reports[j]
    return CheckReport(check_id, all(r.passed for r in reports), worst.worst_margin,
                       worst.worst_location, worst.tolerance,
                       {"worst_sample": j, "n_samples": len(reports),
                        "margins": [r.worst_margin for r in reports]})


# --- convergence sweep -------------------------------------------------------------

def _default_rates():
    return make_rates("rational_bump", amplitude=1.0, width=1.0, center=0.0, p=1.0)


def _default_initial():
    return make_initial("cone", slope=0.5, L=0.9)


def _flat_rates():
    return make_rates("constant", R=1.0, p=1.0)


@dataclass(frozen=True)
class SweepConfig:
    """The large-K experiment; defaults reproduce the reference scenario."""

    K_list: tuple = (1e2, 1e4, 1e6, 1e8)
    delta_exponent: float = 2.0
    kernel: KernelSpec = field(default_factory=exponential_kernel)
    rates: RateSpec = field(default_factory=_default_rates)
    initial: InitialDataSpec = field(default_factory=_default_initial)
    T: float = 1.0
    window: tuple = (-6.0, 6.0)
    observation: tuple = (-2.0, 2.0)
    n_times: int = 11
    integrator: IntegratorConfig = IntegratorConfig()
    hj_dx: float = 0.0025
    hj_check_dx: float = 0.01
    hj_dt: float = 0.01
    lipschitz_cap: float = 1.5
    lipschitz_spread: float = 2.0
    slope_limit: float = 1.1
    final_error_target: float = 0.1
    uniqueness_tol: float = 5e-2
    flat_rates: RateSpec = field(default_factory=_flat_rates)

    def __post_init__(self):
        ks = list(self.K_list)
        if not ks or any(k <= 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("K_list must be strictly increasing with every K > 1")
        lo, hi = self.observation
        if not (self.window[0] <= lo < hi <= self.window[1]):
            raise ValueError("observation window must lie inside the simulation window")


@dataclass
class SweepResult:
    records: list
    reports: list
    reference: Trajectory
    finals: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _MemberTask:
    K: float
    sweep: SweepConfig
    reference_final: LatticeField
    flat_reference: LatticeField


def _scaling_for(sweep, K):
    return make_scaling(K, PowerLaw(sweep.delta_exponent))


def _run_member(task: _MemberTask):
    sweep, K = task.sweep, task.K
    t0 = _time.perf_counter()
    scaling = _scaling_for(sweep, K)
    window = TraitWindow.from_bounds(sweep.window[0], sweep.window[1], scaling.delta_K)
    init_report = validate_initial(sweep.initial, scaling, window)
    times = np.linspace(0.0, sweep.T, sweep.n_times)
    u0 = sample_field(sweep.initial.u0, window)
    traj = simulate(u0, sweep.T, scaling, sweep.rates, sweep.kernel, sweep.integrator, times)
    final = traj.fields[-1]
    err, _ = _sup_error_loc(final, task.reference_final, sweep.observation)
    _, obs_slopes, _ = interior_slopes(traj, sweep.observation)
    runtime = _time.perf_counter() - t0
    rec = ConvergenceRecord(K, scaling.log_K, scaling.delta_K, scaling.h_K, err,
                            float(obs_slopes[-1]), runtime, float(obs_slopes.max()))

    # flat data with constant rates: both sides are linear in time
    flat_cfg = replace(sweep.integrator, boundary_slope=0.0)
    flat = simulate(sample_field(lambda x: np.zeros_like(x), window), sweep.T, scaling,
                    sweep.flat_rates, sweep.kernel, flat_cfg)
    flat_err, _ = _sup_error_loc(flat.fields[-1], task.flat_reference, sweep.observation)
    S = kern.discrete_exp_sum(sweep.kernel, scaling.h_K, 0.0, M=flat.meta["truncation_M"])
    fr = sweep.flat_rates
    flat_tol = (fr.p_upper * sweep.T * (abs(S.value - 1.0) + S.tail_bound)
                + 10 * integrator_budget(flat) + _tail_budget(flat))
    return rec, final.values, init_report, (flat_err, flat_tol)


def _hj_grid(sweep, dx, scheme):
    return HJGridConfig.on_interval(sweep.window[0], sweep.window[1], dx, dt=min(sweep.hj_dt, dx),
                                    scheme_id=scheme)


def _trend_report(records):
    errs = [r.sup_error for r in records]
    if len(errs) < 2:
        return CheckReport("convergence_trend", True, math.inf, (records[0].K, records[0].h_K) if records else (),
                           0.0, {"sup_errors": errs})
    drops = [a - b for a, b in zip(errs, errs[1:])]
    j = int(np.argmin(drops))
    return CheckReport("convergence_trend", bool(min(drops) > 0), float(min(drops)),
                       (records[j + 1].K, records[j + 1].h_K), 0.0, {"sup_errors": errs})


def convergence_sweep(sweep: SweepConfig = SweepConfig(), threads: int = 1) -> SweepResult:
    """Compare the lattice model against one shared HJ reference for each K.

    Emits one :class:`ConvergenceRecord` per K and the sweep checks:
    the strictly decreasing error trend, the final error target, K-uniform
    interior Lipschitz bounds, the slope limit, two-scheme HJ agreement,
    HJ reference resolution, flat-profile exactness and initial-data
    validity. Members may run in ``threads`` worker processes; results are
    identical for any worker count.
    """
    ref = solve_hj(sweep.initial.u0, sweep.T, sweep.rates, sweep.kernel,
                   _hj_grid(sweep, sweep.hj_dx, "lf_projected"))
    ref_up = solve_hj(sweep.initial.u0, sweep.T, sweep.rates, sweep.kernel,
                      _hj_grid(sweep, sweep.hj_dx, "upwind_projected"))
    chk = {s: solve_hj(sweep.initial.u0, sweep.T, sweep.rates, sweep.kernel, _hj_grid(sweep, sweep.hj_check_dx, s))
           for s in ("lf_projected", "upwind_projected")}
    flat_grid = _hj_grid(sweep, sweep.hj_check_dx, "lf_projected")
    flat_ref = solve_hj(lambda x: np.zeros_like(x), sweep.T, sweep.flat_rates, sweep.kernel, flat_grid)

    tasks = [_MemberTask(float(K), sweep, ref.fields[-1], flat_ref.fields[-1]) for K in sweep.K_list]
    results = []
    try:
        if threads > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
                futures = [pool.submit(_run_member, t) for t in tasks]
                for fut in futures:
                    results.append(fut.result())
        else:
            for t in tasks:
                results.append(_run_member(t))
    except Exception as exc:
        raise SweepError(f"sweep member K={tasks[len(results)].K:g} failed: {exc}",
                         [r[0] for r in results]) from exc

    records = [r[0] for r in results]
    finals = {rec.K: vals for rec, vals in zip(records, (r[1] for r in results))}
    reports = [_trend_report(records)]

    last = records[-1]
    reports.append(CheckReport.from_margin("final_error", sweep.final_error_target - last.sup_error,
                                           (last.K, last.h_K), 0.0, target=sweep.final_error_target))

    slopes = [r.interior_slope for r in records]
    jmax = int(np.argmax(slopes))
    spread = max(slopes) / min(slopes) if min(slopes) > 0 else math.inf
    margin = min(sweep.lipschitz_cap - max(slopes), sweep.lipschitz_spread * min(slopes) - max(slopes))
    reports.append(CheckReport("lipschitz_uniform", bool(margin > 0), float(margin),
                               (records[jmax].K, records[jmax].h_K), 0.0,
                               {"slopes": slopes, "spread": spread}))

    reports.append(CheckReport.from_margin("slope_limit", sweep.slope_limit - last.max_slope,
                                           (last.K, last.h_K), 0.0))

    dis = sup_error(chk["lf_projected"], chk["upwind_projected"], sweep.observation)
    reports.append(CheckReport.from_margin("hj_uniqueness", sweep.uniqueness_tol - dis,
                                           (sweep.T, sweep.hj_check_dx), 0.0, disagreement=dis))

    ref_dis = sup_error(ref, ref_up, sweep.observation)
    target = 0.2 * min(r.sup_error for r in records)
    reports.append(CheckReport.from_margin("hj_reference_resolution", target - ref_dis,
                                           (sweep.T, sweep.hj_dx), 0.0, disagreement=ref_dis))

    flat = [(rec, r[3]) for rec, r in zip(records, results)]
    j = int(np.argmin([tol - e for _, (e, tol) in flat]))
    rec_j, (e_j, tol_j) = flat[j]
    reports.append(CheckReport("flat_exactness", all(e <= tol for _, (e, tol) in flat), float(tol_j - e_j),
                               (rec_j.K, rec_j.h_K), float(tol_j),
                               {"errors": [e for _, (e, _) in flat], "tolerances": [t for _, (_, t) in flat]}))

    inits = [r[2] for r in results]
    j = int(np.argmin([r.worst_margin for r in inits]))
    reports.append(CheckReport("initial_data", all(r.passed for r in inits), inits[j].worst_margin,
                               (records[j].K, inits[j].worst_location[1]), inits[j].tolerance))
    return SweepResult(records, reports, ref, finals)
