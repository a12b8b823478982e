import numpy as np
import pytest

from selmut.dynamics import (IntegratorConfig, LatticeOperator, Trajectory, hopf_cole, mass_norm,
                             rhs_n, rhs_u, simulate)
from selmut.errors import (DensityOverflowError, DomainError, NegativeDensityError,
                           OutOfRangeError, SlopeBlowupError, StiffnessError)
from selmut.kernel import cosine_modulated_kernel, discrete_exp_sum, exponential_kernel, skewed_kernel
from selmut.rates import Constant, RateSpec, make_rates
from selmut.scaling import LatticeField, TraitWindow, make_scaling, sample_field

EXP = exponential_kernel()
FLAT_EDGES = IntegratorConfig(boundary_slope=0.0)


def _setup(K=1e4, bounds=(-3.0, 3.0)):
    s = make_scaling(K)
    return s, TraitWindow.from_bounds(*bounds, s.delta_K)


def test_flat_field_rhs_is_uniform():
    s, w = _setup()
    r, p0 = 0.7, 1.3
    rates = make_rates("constant", R=r, p=p0)
    out = rhs_u(sample_field(lambda x: np.full_like(x, 2.5), w), s, rates, EXP, FLAT_EDGES)
    S = discrete_exp_sum(EXP, s.h_K, 0.0, M=out.info["truncation_M"], signed=True).value
    assert S == pytest.approx(1.0, abs=1e-3)
    # the O(N) path also sums nodes past M, within the certified tail
    assert out.info["tail_bound"] <= 1e-10 * (1 + 1e-12)
    assert np.max(np.abs(out.values - (r + p0 * S))) <= out.info["tail_bound"] + 1e-13
    assert np.ptp(out.values) <= out.info["tail_bound"]


@pytest.mark.parametrize("q", [-0.6, 0.3, 0.8])
def test_linear_field_rhs_matches_signed_moment(q):
    s, w = _setup(1e4, (-6.0, 6.0))
    M = 25.0
    rates = make_rates("constant", R=0.2, p=1.0)
    cfg = IntegratorConfig(truncation_M=M, mutation_sum="direct")
    out = rhs_u(sample_field(lambda x: q * x, w), s, rates, EXP, cfg)
    ref = 0.2 + discrete_exp_sum(EXP, s.h_K, q, M=M, signed=True).value
    interior = np.abs(w.x) <= 2.0
    np.testing.assert_allclose(out.values[interior], ref, rtol=1e-12)


def test_zeroed_kernel_leaves_growth_only():
    s, w = _setup()
    rates = make_rates("constant", R=0.4, p=1.0)
    f = sample_field(lambda x: -0.5 * np.abs(x), w)
    for mode in ("direct", "recursive"):
        out = rhs_u(f, s, rates, EXP, IntegratorConfig(mutation_scale=0.0, mutation_sum=mode))
        np.testing.assert_array_equal(out.values, 0.4)


@pytest.mark.parametrize("boundary", ["decay_extrapolation", "frozen"])
def test_recursive_and_direct_sums_agree(boundary):
    s, w = _setup(1e3, (-3.0, 3.0))
    rng = np.random.default_rng(3)
    steps = rng.uniform(-0.8, 0.8, w.n_nodes - 1) * s.delta_K
    f = LatticeField(w, np.concatenate([[0.0], np.cumsum(steps)]))
    rates = make_rates("sinusoidal", R=0.3, p_mean=1.0, p_amplitude=0.5, omega=2.0)
    a = rhs_u(f, s, rates, EXP, IntegratorConfig(mutation_sum="direct", boundary=boundary))
    b = rhs_u(f, s, rates, EXP, IntegratorConfig(mutation_sum="recursive", boundary=boundary))
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12)


def test_recursive_path_needs_constant_profile():
    s, w = _setup()
    with pytest.raises(ValueError):
        rhs_u(sample_field(np.zeros_like, w), s, make_rates("constant"), cosine_modulated_kernel(0.5),
              IntegratorConfig(mutation_sum="recursive"))


def test_slope_blowup_guard():
    s, w = _setup()
    vals = np.zeros(w.n_nodes)
    vals[w.n_nodes // 2:] = 100.0
    f = LatticeField(w, vals)
    for mode in ("direct", "recursive"):
        with pytest.raises(SlopeBlowupError, match="slope"):
            rhs_u(f, s, make_rates("constant"), EXP, IntegratorConfig(mutation_sum=mode))


def test_rhs_n_zero_and_spike():
    s, w = _setup(1e3, (-2.0, 2.0))
    rates = make_rates("constant", R=0.0, p=1.0)
    z = rhs_n(LatticeField(w, np.zeros(w.n_nodes), "n"), s, rates, EXP)
    np.testing.assert_array_equal(z.values, 0.0)
    j = w.n_nodes // 2
    spike = np.zeros(w.n_nodes)
    spike[j] = 1.0
    out = rhs_n(LatticeField(w, spike, "n"), s, rates, EXP).values / s.log_K
    offs = np.arange(w.n_nodes) - j
    np.testing.assert_allclose(out, s.h_K * EXP.density(offs * s.h_K), rtol=1e-14, atol=1e-300)


@pytest.mark.parametrize("kernel", [EXP, cosine_modulated_kernel(0.4), skewed_kernel(0.5)], ids=lambda k: k.name)
def test_direct_and_fft_convolution_agree(kernel):
    s, w = _setup(1e3, (-2.0, 2.0))
    rng = np.random.default_rng(11)
    n = LatticeField(w, rng.uniform(0, 1, w.n_nodes), "n")
    rates = make_rates("sinusoidal", R=0.5, p_mean=1.0, p_amplitude=0.3)
    a = rhs_n(n, s, rates, kernel, IntegratorConfig(convolution="direct")).values
    b = rhs_n(n, s, rates, kernel, IntegratorConfig(convolution="fft")).values
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))


def test_negative_density_rejected():
    s, w = _setup(1e3, (-1.0, 1.0))
    bad = LatticeField(w, -np.ones(w.n_nodes), "u")
    with pytest.raises(NegativeDensityError):
        rhs_n(bad, s, make_rates("constant"), EXP)


def test_zero_horizon_returns_initial():
    s, w = _setup()
    f = sample_field(lambda x: -0.5 * np.abs(x), w)
    tr = simulate(f, 0.0, s, make_rates("constant"), EXP)
    assert tr.times.tolist() == [0.0]
    np.testing.assert_array_equal(tr.values[0], f.values)


@pytest.mark.parametrize("method", ["rk45_adaptive", "rk4"])
def test_flat_data_grows_linearly(method):
    s, w = _setup(1e4)
    r, p0 = 0.5, 2.0
    cfg = IntegratorConfig(method=method, boundary_slope=0.0, dt_max=0.05)
    ts = np.linspace(0, 1, 6)
    tr = simulate(sample_field(np.zeros_like, w), 1.0, s, make_rates("constant", R=r, p=p0), EXP, cfg, ts)
    S = discrete_exp_sum(EXP, s.h_K, 0.0, M=tr.meta["truncation_M"], signed=True).value
    np.testing.assert_allclose(tr.values, np.outer(ts, np.full(w.n_nodes, r + p0 * S)), atol=1e-8)


def test_u_and_n_forms_agree():
    s, w = _setup(1e3, (-2.0, 2.0))
    rates = make_rates("rational_bump", p=1.0)
    k = cosine_modulated_kernel(0.5)
    u0 = sample_field(lambda x: -0.5 * np.abs(x), w)
    ts = np.linspace(0, 0.5, 3)
    a = simulate(u0, 0.5, s, rates, k, IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12), ts)
    b = simulate(hopf_cole(u0, s, "to_n"), 0.5, s, rates, k,
                 IntegratorConfig(rel_tol=1e-10, abs_tol=1e-300), ts)
    for fa, fb in zip(a.fields, b.fields):
        assert np.max(np.abs(fa.values - hopf_cole(fb, s, "to_u").values)) <= 1e-6


def test_ordered_data_stay_ordered():
    s, w = _setup(1e3, (-2.0, 2.0))
    rates = make_rates("rational_bump", p=1.0)
    rng = np.random.default_rng(5)
    n = np.exp(s.log_K * (-0.5 * np.abs(w.x)))
    m = n * (1 + rng.uniform(0, 1, w.n_nodes))
    cfg = IntegratorConfig(method="rk4", dt_max=0.01)
    ts = np.linspace(0, 1, 5)
    lo = simulate(LatticeField(w, n, "n"), 1.0, s, rates, EXP, cfg, ts)
    hi = simulate(LatticeField(w, m, "n"), 1.0, s, rates, EXP, cfg, ts)
    assert np.all(hi.values >= lo.values)


def test_density_positivity_with_negative_growth():
    s, w = _setup(1e3, (-2.0, 2.0))
    rates = make_rates("constant", R=-3.0, p=1.0)
    rng = np.random.default_rng(9)
    n0 = rng.uniform(0, 1, w.n_nodes) * (rng.uniform(0, 1, w.n_nodes) > 0.5)
    op = LatticeOperator(w, s, rates, EXP, IntegratorConfig())
    assert op.positivity_dt() < 0.05
    tr = simulate(LatticeField(w, n0, "n"), 0.5, s, rates, EXP,
                  IntegratorConfig(method="rk4", dt_max=0.05), np.linspace(0, 0.5, 6))
    assert np.all(tr.values >= 0)


def test_rk4_and_rk45_agree():
    s, w = _setup(1e4, (-3.0, 3.0))
    rates = make_rates("rational_bump", p=1.0)
    u0 = sample_field(lambda x: -0.5 * np.abs(x), w)
    a = simulate(u0, 1.0, s, rates, EXP, IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12))
    b = simulate(u0, 1.0, s, rates, EXP, IntegratorConfig(method="rk4", dt_max=0.002))
    assert np.max(np.abs(a.values - b.values)) < 1e-7


def test_integration_breakdown_is_reported():
    class Broken:
        def __call__(self, x):
            return np.where(np.asarray(x) > 0, np.nan, 1.0)
    rates = RateSpec(Broken(), Constant(1.0), 0.0, 1.0, 0.0, 1.0, 1.0, 0.0)
    s, w = _setup(1e3, (-1.0, 1.0))
    u0 = sample_field(lambda x: -0.5 * np.abs(x), w)
    with np.errstate(invalid="ignore"):
        with pytest.raises(StiffnessError):
            simulate(u0, 1.0, s, rates, EXP)
        with pytest.raises(StiffnessError):
            simulate(u0, 1.0, s, rates, EXP, IntegratorConfig(method="rk4"))


def test_simulation_is_bitwise_reproducible():
    s, w = _setup(1e6, (-3.0, 3.0))
    rates = make_rates("rational_bump", p=1.0)
    u0 = sample_field(lambda x: -0.5 * np.abs(x), w)
    a = simulate(u0, 1.0, s, rates, EXP, output_times=np.linspace(0, 1, 5))
    b = simulate(u0, 1.0, s, rates, EXP, output_times=np.linspace(0, 1, 5))
    assert a.values.tobytes() == b.values.tobytes()
    assert len(a.meta["max_slope"]) == 5


def test_hopf_cole_examples():
    s = make_scaling(1e4)
    w = TraitWindow.from_bounds(0, 1, s.delta_K)
    ones = LatticeField(w, np.ones(w.n_nodes), "n")
    np.testing.assert_array_equal(hopf_cole(ones, s, "to_u").values, 0.0)
    kk = LatticeField(w, np.full(w.n_nodes, 1e4), "n")
    np.testing.assert_allclose(hopf_cole(kk, s, "to_u").values, 1.0, rtol=1e-15)
    rng = np.random.default_rng(0)
    n = LatticeField(w, np.exp(rng.uniform(-30, 30, w.n_nodes)), "n")
    back = hopf_cole(hopf_cole(n, s, "to_u"), s, "to_n").values
    np.testing.assert_allclose(back, n.values, rtol=1e-12)
    u = LatticeField(w, rng.uniform(-3, 3, w.n_nodes))
    np.testing.assert_allclose(hopf_cole(hopf_cole(u, s, "to_n"), s, "to_u").values, u.values,
                               rtol=1e-12, atol=1e-12)


def test_hopf_cole_errors():
    s = make_scaling(1e4)
    w = TraitWindow.from_bounds(0, 1, 0.5)
    with pytest.raises(DomainError):
        hopf_cole(LatticeField(w, [1.0, 0.0, 2.0], "n"), s, "to_u")
    with pytest.raises(DensityOverflowError, match="log scale"):
        hopf_cole(LatticeField(w, [0.0, 100.0, 0.0]), s, "to_n")


def test_mass_norm_examples():
    w = TraitWindow.from_bounds(0, 3, 1.0)
    assert mass_norm(LatticeField(w, np.zeros(4), "n")) == 0.0
    assert mass_norm(LatticeField(w, [0, 1.0, 0, 0], "n")) == 1.0
    assert mass_norm(LatticeField(w, [0.25, 0, 0, 1.5], "n")) == 1.75


def test_trajectory_invariants():
    w = TraitWindow.from_bounds(0, 1, 0.5)
    with pytest.raises(OutOfRangeError):
        Trajectory([0.1, 0.2], np.zeros((2, 3)), w, "u")
    with pytest.raises(OutOfRangeError):
        Trajectory([0.0, 0.0], np.zeros((2, 3)), w, "u")
    with pytest.raises(OutOfRangeError):
        Trajectory([0.0, 1.0], np.zeros((2, 2)), w, "u")
    tr = Trajectory([0.0, 1.0], [[0.0, 0.0, 0.0], [2.0, 4.0, 6.0]], w, "u")
    np.testing.assert_allclose(tr.at(0.25).values, [0.5, 1.0, 1.5])
    with pytest.raises(OutOfRangeError):
        tr.at(1.5)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(truncation_M=-1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(boundary_slope=1.0)
