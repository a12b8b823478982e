import math
import time

import numpy as np
import pytest

from oracles import exp_kernel_riemann_sum
from selmut.errors import DivergentMomentError, KernelError
from selmut.kernel import (KernelSpec, abs_exp_moment, alpha_bound, cosine_modulated_kernel,
                           discrete_exp_sum, eval_density, exp_moment, exponential_kernel,
                           make_kernel, skewed_kernel)

EXP = exponential_kernel()
ALL = [EXP, cosine_modulated_kernel(0.5), cosine_modulated_kernel(-0.7), skewed_kernel(0.6)]


def test_density_values():
    assert eval_density(EXP, 0.0) == 0.5
    assert eval_density(EXP, 1.0) == pytest.approx(0.183940, abs=1e-6)
    xs = np.linspace(-5, 5, 41)
    np.testing.assert_array_equal(eval_density(EXP, xs), eval_density(EXP, -xs))


@pytest.mark.parametrize("spec", ALL, ids=lambda k: k.name)
def test_every_kernel_has_unit_mass_by_quadrature(spec):
    assert exp_moment(spec, 0.0, closed_form=False).value == pytest.approx(1.0, abs=1e-10)


def test_exp_moment_closed_form():
    assert exp_moment(EXP, 0.5).value == pytest.approx(4.0 / 3.0, abs=1e-15)
    assert abs_exp_moment(EXP, 0.5).value == pytest.approx(2.0, abs=1e-15)
    assert abs_exp_moment(EXP, 0.0).value == 1.0


@pytest.mark.parametrize("a", [1.0, -1.0, 1.5])
def test_divergent_moments(a):
    with pytest.raises(DivergentMomentError):
        exp_moment(EXP, a)
    with pytest.raises(DivergentMomentError):
        abs_exp_moment(EXP, a)
    with pytest.raises(DivergentMomentError):
        discrete_exp_sum(EXP, 0.1, a)
    with pytest.raises(DivergentMomentError):
        alpha_bound(EXP, a)


@pytest.mark.parametrize("a", [-0.9, -0.5, 0.0, 0.5, 0.9])
def test_quadrature_matches_closed_form(a):
    q = exp_moment(EXP, a, closed_form=False)
    assert q.value == pytest.approx(1.0 / (1.0 - a * a), abs=1e-10)
    assert 0 <= q.tail_bound <= 1e-12


def test_cosine_kernel_moment_against_series():
    # int (1 + b cos y) e^{-|y|} e^{a y} / (2 + b) with the cosine transform r / (r^2 + 1)
    b, a = 0.5, 0.3
    r, s = 1 - a, 1 + a
    ref = ((1 / r + 1 / s) + b * (r / (r * r + 1) + s / (s * s + 1))) / (2 + b)
    k = cosine_modulated_kernel(b)
    assert exp_moment(k, a).value == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("spec", ALL, ids=lambda k: k.name)
def test_mgf_matches_quadrature(spec):
    qs = np.array([-0.9, -0.4, 0.0, 0.3, 0.95])
    m, dm = spec.mgf(qs)
    for q, mv, dv in zip(qs, m, dm):
        assert mv == pytest.approx(exp_moment(spec, q, closed_form=False).value, abs=1e-9)
        step = 1e-5
        fd = (exp_moment(spec, q + step, closed_form=False).value
              - exp_moment(spec, q - step, closed_form=False).value) / (2 * step)
        assert dv == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_abs_moment_monotone():
    vals = [abs_exp_moment(EXP, a, closed_form=False).value for a in (0.0, 0.2, 0.5, 0.8)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_discrete_sum_examples():
    r = discrete_exp_sum(EXP, 0.01, 0.0, M=40.0)
    assert r.value == pytest.approx(1.0, abs=1e-4)
    errs = [abs(discrete_exp_sum(EXP, h, 0.5).value - 2.0) for h in (0.1, 0.05, 0.01)]
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("h", [0.7, 0.3, 0.1, 0.013])
def test_discrete_sum_geometric_closed_form(h):
    r = discrete_exp_sum(EXP, h, 0.0, tol=1e-15)
    assert r.value == pytest.approx(exp_kernel_riemann_sum(h), abs=1e-13)


@pytest.mark.parametrize("spec", ALL, ids=lambda k: k.name)
@pytest.mark.parametrize("a", [0.0, 0.5, 0.9])
def test_tail_bound_is_certified(spec, a):
    h = 0.05
    r = discrete_exp_sum(spec, h, a, M=10.0)
    wide = discrete_exp_sum(spec, h, a, M=20.0)
    assert abs(wide.value - r.value) < r.tail_bound
    q = exp_moment(spec, a, tol=1e-6, closed_form=False)
    assert abs(q.value - exp_moment(spec, a, tol=1e-13, closed_form=False).value) < 1e-6


@pytest.mark.parametrize("a", [0.0, 0.25, 0.5, 0.9])
def test_riemann_sums_converge_to_moment(a):
    exact = abs_exp_moment(EXP, a).value
    errs = [abs(discrete_exp_sum(EXP, 2.0 ** -k, a).value - exact) for k in range(2, 11)]
    assert all(b < a_ for a_, b in zip(errs[2:], errs[3:]))
    assert errs[-1] < 1e-6


def test_signed_sum_matches_linear_profile_moment():
    h, q = 0.02, 0.4
    s = discrete_exp_sum(EXP, h, q, signed=True).value
    assert s == pytest.approx(1 / (1 - q * q), rel=1e-3)


def test_alpha_bound_properties():
    a0 = alpha_bound(EXP, 0.0)
    assert 1.0 <= a0 <= 1.2
    assert a0 == pytest.approx(1.1057108046305284, rel=1e-12)
    a5, a9 = alpha_bound(EXP, 0.5), alpha_bound(EXP, 0.9)
    assert a0 <= a5 <= a9
    assert a5 >= abs_exp_moment(EXP, 0.5).value
    assert a9 >= abs_exp_moment(EXP, 0.9).value
    brute = max(discrete_exp_sum(EXP, 2.0 ** -k, 0.0).value for k in range(13))
    assert a0 >= brute


def test_invalid_kernels_rejected():
    class Half:
        def __call__(self, x):
            return np.full(np.shape(x), 0.25)
    with pytest.raises(KernelError, match="integrates"):
        KernelSpec(Half(), 0.25, 0.25)
    with pytest.raises(KernelError):
        KernelSpec(Half(), 0.0, 0.25)
    with pytest.raises(KernelError):
        KernelSpec(Half(), 0.25, math.inf)
    with pytest.raises(KernelError):
        KernelSpec(Half(), 0.3, 0.4)
    with pytest.raises(KernelError):
        make_kernel("gaussian")
    with pytest.raises(KernelError):
        cosine_modulated_kernel(1.0)


def test_moments_are_fast():
    t0 = time.perf_counter()
    for a in (-0.9, -0.5, 0.0, 0.5, 0.9):
        exp_moment(EXP, a, closed_form=False)
    assert time.perf_counter() - t0 < 1.0
