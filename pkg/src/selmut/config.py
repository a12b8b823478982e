"""Experiment configuration: strict YAML parsing with full error collection.

Validation problems that break one of the model's standing assumptions are
tagged with its number:

1. rates: R bounded, p bounded with a positive lower bound, both Lipschitz
2. kernel: ``G = f e^{-|x|}`` with ``0 < f_min <= f <= f_max``, unit mass
3. initial data: decay envelope ``u0(x) <= -A |x| + B1`` with ``A > 0``
4. initial data: discrete Lipschitz bound ``L`` with ``0 < L < 1``
5. initial data: a fixed continuous profile sampled on every lattice
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .analysis import RandomSuiteConfig, SweepConfig, CHECK_IDS
from .dynamics import IntegratorConfig
from .errors import ConfigError, KernelError, InvalidRateError, ScalingError
from .hj import SCHEMES, HJGridConfig
from .kernel import KERNEL_FAMILIES, KernelSpec, make_kernel
from .rates import INITIAL_FAMILIES, InitialDataSpec, RateSpec, make_initial, make_rates
from .scaling import Explicit, PowerLaw, TraitWindow, make_scaling

ASSUMPTIONS = {
    1: "bounded Lipschitz rates with p bounded below by a positive constant",
    2: "kernel f(x) exp(-|x|) with positive bounded profile and unit mass",
    3: "initial decay envelope u0(x) <= -A|x| + B1 with A > 0",
    4: "initial discrete Lipschitz bound 0 < L < 1",
    5: "initial data sampled from one continuous profile",
}

TOP_KEYS = {"kernel", "rates", "initial", "scaling", "window", "observation", "T", "output_times",
            "n_times", "integrator", "hj", "checks", "output_dir", "seed", "space", "sweep",
            "random_suite", "trajectory"}
SCALING_KEYS = {"K", "K_list", "delta_exponent", "delta"}
HJ_KEYS = {"dx", "dt", "epsilon_clamp", "viscosity_theta", "scheme_id", "cfl"}
SWEEP_KEYS = {"hj_dx", "hj_check_dx", "hj_dt", "lipschitz_cap", "lipschitz_spread", "slope_limit",
              "final_error_target", "uniqueness_tol"}
SUITE_KEYS = {"n_samples", "K", "T", "window", "n_times", "dt"}
SWEEP_CHECKS = ("mass_bound_random", "comparison_random", "initial_data")


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: KernelSpec
    rates: RateSpec
    initial: InitialDataSpec
    K_list: tuple
    delta_rule: object
    window: tuple
    observation: tuple
    T: float
    output_times: tuple
    integrator: IntegratorConfig
    hj: dict
    checks: tuple
    output_dir: str
    seed: int
    space: str = "u"
    sweep: dict = field(default_factory=dict)
    random_suite: dict = field(default_factory=dict)
    trajectory: str | None = None
    source: dict = field(default_factory=dict)

    @property
    def K(self) -> float:
        return self.K_list[-1]

    def scaling(self, K=None):
        return make_scaling(self.K if K is None else K, self.delta_rule)

    def trait_window(self, scaling):
        return TraitWindow.from_bounds(self.window[0], self.window[1], scaling.delta_K)

    def hj_grid(self, scheme_id=None):
        kw = dict(self.hj)
        dx = kw.pop("dx")
        if scheme_id is not None:
            kw["scheme_id"] = scheme_id
        return HJGridConfig.on_interval(self.window[0], self.window[1], dx, **kw)

    def sweep_config(self) -> SweepConfig:
        if not isinstance(self.delta_rule, PowerLaw):
            raise ConfigError(["the convergence sweep needs a power_law delta rule"])
        return SweepConfig(K_list=tuple(self.K_list), delta_exponent=self.delta_rule.exponent,
                           kernel=self.kernel, rates=self.rates, initial=self.initial, T=self.T,
                           window=tuple(self.window), observation=tuple(self.observation),
                           n_times=len(self.output_times), integrator=self.integrator,
                           **self.sweep)

    def random_suite_config(self) -> RandomSuiteConfig:
        return RandomSuiteConfig(seed=self.seed, **self.random_suite)


def _num(v, name, errors, positive=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool):
        errors.append(f"{name}: expected a number, got {v!r}")
        return None
    try:
        # YAML reads 1e4 as a string; accept it as a number
        x = float(v)
    except (TypeError, ValueError):
        errors.append(f"{name}: expected a number, got {v!r}")
        return None
    if not math.isfinite(x):
        errors.append(f"{name}: must be finite")
        return None
    if positive and not x > 0:
        errors.append(f"{name}: must be positive, got {x}")
        return None
    return x


def _family_block(raw, name, errors, extra=()):
    """``name: family`` or ``name: {family: ..., <params>}`` -> (family, params, extras)."""
    if isinstance(raw, str):
        return raw, {}, {}
    if not isinstance(raw, dict) or "family" not in raw:
        errors.append(f"{name}: expected a family name or a mapping with a 'family' key")
        return None, {}, {}
    params = {k: v for k, v in raw.items() if k != "family" and k not in extra}
    extras = {k: raw[k] for k in extra if k in raw}
    nested = params.pop("params", None)
    if isinstance(nested, dict):
        params.update(nested)
    clean = {}
    for k, v in params.items():
        if isinstance(v, str):
            try:
                v = float(v)
            except ValueError:
                pass
        clean[k] = v
    return raw["family"], clean, extras


def _interval(raw, name, errors):
    if raw is None:
        return None
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        errors.append(f"{name}: expected [lo, hi]")
        return None
    lo, hi = _num(raw[0], f"{name}[0]", errors), _num(raw[1], f"{name}[1]", errors)
    if lo is None or hi is None:
        return None
    if not lo < hi:
        errors.append(f"{name}: lower bound must be below upper bound")
        return None
    return (lo, hi)


def _tag(n):
    return f" [assumption {n}: {ASSUMPTIONS[n]}]"


def _unknown(raw, allowed, where, errors, strict):
    extra = sorted(set(raw) - set(allowed))
    if extra and strict:
        errors.append(f"unknown key(s) in {where}: {', '.join(map(str, extra))}")


def parse_config(source, strict: bool = True) -> ExperimentConfig:
    """Load and validate a YAML experiment file (path or mapping).

    Every problem is collected and raised together as one
    :class:`ConfigError`. Unknown keys are fatal in strict mode.
    """
    if isinstance(source, dict):
        raw = source
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config {source}: {exc}"]) from exc
        except yaml.YAMLError as exc:
            raise ConfigError([f"malformed YAML in {source}: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a mapping at top level"])
    errors: list[str] = []
    _unknown(raw, TOP_KEYS, "config", errors, strict)

    # kernel
    kernel = None
    fam, params, _ = _family_block(raw.get("kernel", "exponential"), "kernel", errors)
    if fam is not None:
        if fam not in KERNEL_FAMILIES:
            errors.append(f"kernel: unknown family {fam!r}; known: {', '.join(KERNEL_FAMILIES)}")
        else:
            try:
                kernel = make_kernel(fam, **params)
            except KernelError as exc:
                errors.append(f"kernel: {exc}{_tag(2)}")
            except TypeError as exc:
                errors.append(f"kernel: bad parameters: {exc}")

    # rates
    rates = None
    fam, params, _ = _family_block(raw.get("rates", {"family": "constant", "R": 1.0, "p": 1.0}), "rates", errors)
    if fam is not None:
        if fam == "user":
            errors.append("rates: the user family takes callables and is only available from Python")
        else:
            try:
                rates = make_rates(fam, **params)
            except InvalidRateError as exc:
                errors.append(f"rates: {exc}{_tag(1)}")
            except (TypeError, ValueError) as exc:
                errors.append(f"rates: bad parameters: {exc}")

    # initial data
    initial = None
    fam, params, extras = _family_block(raw.get("initial", {"family": "cone", "slope": 0.5}), "initial",
                                        errors, extra=("L", "A", "B1"))
    if fam is not None:
        L = _num(extras.get("L"), "initial.L", errors, allow_none=True)
        A = _num(extras.get("A"), "initial.A", errors, allow_none=True)
        B1 = _num(extras.get("B1"), "initial.B1", errors, allow_none=True)
        if fam not in INITIAL_FAMILIES:
            errors.append(f"initial: unknown family {fam!r}; known: {', '.join(INITIAL_FAMILIES)}")
        else:
            try:
                initial = make_initial(fam, L=L, A=A, B1=B1, **params)
            except TypeError as exc:
                errors.append(f"initial: bad parameters: {exc}")
            if initial is not None:
                if not 0 < initial.L < 1:
                    errors.append(f"initial: L = {initial.L} must satisfy 0 < L < 1{_tag(4)}")
                if not initial.A > 0:
                    errors.append(f"initial: decay rate A = {initial.A} must be positive{_tag(3)}")

    # scaling
    sc = raw.get("scaling", {"K": 1e4})
    K_list = ()
    delta_rule = PowerLaw(2.0)
    if not isinstance(sc, dict):
        errors.append("scaling: expected a mapping")
    else:
        _unknown(sc, SCALING_KEYS, "scaling", errors, strict)
        if "K_list" in sc:
            ks = [_num(k, "scaling.K_list", errors) for k in (sc["K_list"] or [])]
            K_list = tuple(k for k in ks if k is not None)
            if not K_list:
                errors.append("scaling.K_list: must not be empty")
            elif any(b <= a for a, b in zip(K_list, K_list[1:])):
                errors.append("scaling.K_list: must be strictly increasing")
        elif "K" in sc:
            k = _num(sc["K"], "scaling.K", errors)
            K_list = (k,) if k is not None else ()
        else:
            errors.append("scaling: needs K or K_list")
        if "delta" in sc:
            d = _num(sc["delta"], "scaling.delta", errors, positive=True)
            delta_rule = Explicit(d) if d is not None else delta_rule
        elif "delta_exponent" in sc:
            e = _num(sc["delta_exponent"], "scaling.delta_exponent", errors, positive=True)
            delta_rule = PowerLaw(e) if e is not None else delta_rule
        for K in K_list:
            try:
                make_scaling(K, delta_rule)
            except ScalingError as exc:
                errors.append(f"scaling: K={K:g}: {exc}")

    # windows and times
    observation = _interval(raw.get("observation", [-2.0, 2.0]), "observation", errors)
    window = _interval(raw.get("window"), "window", errors)
    if window is None and "window" not in raw and observation is not None:
        # default: three times the observation half-width around its center
        c, hw = 0.5 * (observation[0] + observation[1]), 0.5 * (observation[1] - observation[0])
        window = (c - 3 * hw, c + 3 * hw)
    if window and observation and not (window[0] <= observation[0] and observation[1] <= window[1]):
        errors.append("observation window must lie inside the simulation window")
    T = _num(raw.get("T", 1.0), "T", errors, positive=True)
    output_times = ()
    if T is not None:
        if "output_times" in raw:
            ts = [_num(t, "output_times", errors) for t in (raw["output_times"] or [])]
            ts = sorted({t for t in ts if t is not None} | {0.0, T})
            if ts[0] < 0 or ts[-1] > T:
                errors.append("output_times must lie in [0, T]")
            output_times = tuple(ts)
        else:
            n = raw.get("n_times", 11)
            if not isinstance(n, int) or n < 2:
                errors.append("n_times: expected an integer >= 2")
                n = 2
            output_times = tuple(float(t) for t in np.linspace(0.0, T, n))

    # integrator
    integ = IntegratorConfig()
    iraw = raw.get("integrator", {}) or {}
    if not isinstance(iraw, dict):
        errors.append("integrator: expected a mapping")
    else:
        names = {f.name for f in fields(IntegratorConfig)}
        _unknown(iraw, names, "integrator", errors, strict)
        kw = {}
        for k, v in iraw.items():
            if k not in names:
                continue
            if k in ("method", "boundary", "mutation_sum", "convolution"):
                kw[k] = v
            else:
                x = _num(v, f"integrator.{k}", errors, allow_none=(k == "truncation_M"))
                if x is not None or k == "truncation_M":
                    kw[k] = x
        try:
            integ = IntegratorConfig(**kw)
        except ValueError as exc:
            errors.append(f"integrator: {exc}")

    # HJ grid
    hj = {"dx": 0.01, "dt": 0.01, "scheme_id": "lf_projected"}
    hraw = raw.get("hj", {}) or {}
    if not isinstance(hraw, dict):
        errors.append("hj: expected a mapping")
    else:
        _unknown(hraw, HJ_KEYS, "hj", errors, strict)
        for k in HJ_KEYS & set(hraw):
            if k == "scheme_id":
                if hraw[k] not in SCHEMES:
                    errors.append(f"hj.scheme_id: unknown scheme {hraw[k]!r}; known: {', '.join(SCHEMES)}")
                else:
                    hj[k] = hraw[k]
            else:
                x = _num(hraw[k], f"hj.{k}", errors, positive=True, allow_none=(k == "viscosity_theta"))
                if x is not None or k == "viscosity_theta":
                    hj[k] = x
        if window is not None:
            try:
                kw = dict(hj)
                dx = kw.pop("dx")
                HJGridConfig.on_interval(window[0], window[1], dx, **kw)
            except ValueError as exc:
                errors.append(f"hj: {exc}")

    # checks
    checks = raw.get("checks", [])
    if not isinstance(checks, list):
        errors.append("checks: expected a list")
        checks = []
    for c in checks:
        if c not in CHECK_IDS and c not in SWEEP_CHECKS:
            errors.append(f"checks: unknown check id {c!r}")

    sweep = _sub_numbers(raw.get("sweep", {}), SWEEP_KEYS, "sweep", errors, strict)
    suite = _sub_numbers(raw.get("random_suite", {}), SUITE_KEYS, "random_suite", errors, strict)
    if "n_samples" in suite:
        suite["n_samples"] = int(suite["n_samples"])
    if "n_times" in suite:
        suite["n_times"] = int(suite["n_times"])

    space = raw.get("space", "u")
    if space not in ("u", "n"):
        errors.append(f"space: expected u or n, got {space!r}")
    seed = raw.get("seed", 20240601)
    if not isinstance(seed, int) or isinstance(seed, bool):
        errors.append("seed: expected an integer")
        seed = 0
    out_dir = raw.get("output_dir", "out")
    if not isinstance(out_dir, str):
        errors.append("output_dir: expected a path string")
    traj_path = raw.get("trajectory")
    if traj_path is not None and not isinstance(traj_path, str):
        errors.append("trajectory: expected a path string")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kernel, rates, initial, K_list, delta_rule, window, observation, T,
                            output_times, integ, hj, tuple(checks), out_dir, seed, space, sweep, suite,
                            traj_path, dict(raw))


def _sub_numbers(raw, allowed, where, errors, strict):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        errors.append(f"{where}: expected a mapping")
        return {}
    _unknown(raw, allowed, where, errors, strict)
    out = {}
    for k in allowed & set(raw):
        if k == "window":
            iv = _interval(raw[k], f"{where}.window", errors)
            if iv is not None:
                out[k] = iv
            continue
        x = _num(raw[k], f"{where}.{k}", errors, positive=True)
        if x is not None:
            out[k] = x
    return out
