import math

import numpy as np
import pytest

from selmut.errors import InvalidRateError
from selmut.rates import make_initial, make_rates, validate_initial
from selmut.scaling import TraitWindow, make_scaling


def test_constant_rates():
    r = make_rates("constant", R=1.0, p=1.0)
    assert (r.R_lower, r.R_upper, r.R_lip) == (1.0, 1.0, 0.0)
    assert (r.p_lower, r.p_upper, r.p_lip) == (1.0, 1.0, 0.0)


def test_rational_bump_constants():
    r = make_rates("rational_bump")
    assert (r.R_lower, r.R_upper) == (0.0, 1.0)
    assert r.R_lip == pytest.approx(3 * math.sqrt(3) / 8, abs=1e-15)
    assert r.R_lip == pytest.approx(0.64952, abs=1e-5)
    # 1-D search oracle for max |R'|
    x = np.linspace(0, 3, 300001)
    assert np.max(2 * x / (1 + x * x) ** 2) == pytest.approx(r.R_lip, abs=1e-9)


def test_sinusoidal_constants():
    r = make_rates("sinusoidal", R=0.0, p_mean=1.0, p_amplitude=0.5, omega=1.0)
    assert (r.p_lower, r.p_upper, r.p_lip) == (0.5, 1.5, 0.5)


@pytest.mark.parametrize("family,params", [
    ("constant", {"R": 1.0, "p": 0.0}),
    ("constant", {"R": 1.0, "p": -1.0}),
    ("sinusoidal", {"p_mean": 1.0, "p_amplitude": 1.0}),
    ("rational_bump", {"p": 0.0}),
])
def test_nonpositive_mutation_rate_rejected(family, params):
    with pytest.raises(InvalidRateError, match="p_lower"):
        make_rates(family, **params)


def test_unknown_family_and_parameters_rejected():
    with pytest.raises(InvalidRateError):
        make_rates("logistic")
    with pytest.raises(InvalidRateError):
        make_rates("constant", R=1.0, p=1.0, q=2.0)
    with pytest.raises(InvalidRateError):
        make_rates("constant", R=math.inf, p=1.0)


@pytest.mark.parametrize("family,params", [
    ("constant", {"R": -0.3, "p": 2.0}),
    ("rational_bump", {"amplitude": 2.0, "width": 0.5, "center": 1.0, "p": 1.0}),
    ("rational_bump", {"amplitude": -1.0, "width": 2.0, "p": 1.0}),
    ("sinusoidal", {"R": 0.5, "p_mean": 1.0, "p_amplitude": 0.4, "omega": 3.0}),
])
def test_random_sampling_respects_certified_constants(family, params):
    r = make_rates(family, **params)
    rng = np.random.default_rng(7)
    x = rng.uniform(-50, 50, 100_000)
    y = x + rng.uniform(-1, 1, x.size)
    for f, lo, hi, lip in ((r.R, r.R_lower, r.R_upper, r.R_lip), (r.p, r.p_lower, r.p_upper, r.p_lip)):
        fx, fy = f(x), f(y)
        assert np.all(fx >= lo - 1e-12) and np.all(fx <= hi + 1e-12)
        assert np.all(np.abs(fx - fy) <= lip * np.abs(x - y) + 1e-12)


def test_user_rates_certified_by_sampling():
    r = make_rates("user", R=lambda x: np.sin(x), p=lambda x: 2 + np.cos(2 * x),
                   sample_range=(-10, 10), n_samples=20001)
    assert r.R_lower == pytest.approx(-1, abs=1e-6)
    assert r.p_lower == pytest.approx(1, abs=1e-6)
    assert 1.0 <= r.R_lip <= 1.05 + 1e-9
    assert 2.0 <= r.p_lip <= 2.1 + 1e-9
    with pytest.raises(InvalidRateError):
        make_rates("user", R=lambda x: np.zeros_like(x), p=lambda x: np.sin(x))


def _setup(K=1e4, bounds=(-3.0, 3.0)):
    s = make_scaling(K)
    return s, TraitWindow.from_bounds(*bounds, s.delta_K)


def test_cone_passes_with_exact_envelope():
    s, w = _setup()
    spec = make_initial("cone", slope=0.5, A=0.5, B1=0.0, L=0.5)
    rep = validate_initial(spec, s, w)
    assert rep.passed
    assert rep.worst_margin == pytest.approx(0.0, abs=1e-12)


def test_steep_data_fails_lipschitz():
    s, w = _setup()
    spec = make_initial("cone", slope=1.2, A=1.2, B1=0.0, L=1.2)
    rep = validate_initial(spec, s, w)
    assert not rep.passed
    assert rep.details["violated"] == "constants"
    spec = make_initial("cone", slope=1.2, A=1.2, B1=0.0, L=0.9)
    rep = validate_initial(spec, s, w)
    assert not rep.passed
    assert rep.details["violated"] == "discrete_lipschitz"
    assert rep.worst_margin == pytest.approx(0.9 - 1.2, abs=1e-9)


def test_flat_data_fails_envelope():
    s, w = _setup()
    spec = make_initial("flat", level=0.0, A=0.5, B1=0.0, L=0.5)
    rep = validate_initial(spec, s, w)
    assert not rep.passed
    assert rep.details["violated"] == "decay_envelope"
    assert rep.worst_location[1] == pytest.approx(w.x[0])


@pytest.mark.parametrize("family,params", [
    ("cone", {"slope": 0.6, "height": 0.2, "center": 0.7}),
    ("smoothed_cone", {"slope": 0.5, "height": -0.1, "center": -0.4, "eps": 0.3}),
    ("two_cone", {"slope": 0.4, "height1": 0.1, "center1": -1.0, "height2": -0.2, "center2": 1.5}),
    ("wavy_cone", {"slope": 0.5, "height": 0.0, "center": 0.3, "amp": 0.1, "omega": 2.0, "phase": 1.0}),
])
def test_builtin_families_pass_with_analytic_constants(family, params):
    s, w = _setup(1e6)
    assert validate_initial(make_initial(family, **params), s, w).passed


def test_validation_is_monotone_in_constants():
    s, w = _setup()
    base = dict(slope=0.5, height=0.0)
    results = []
    for L in (0.8, 0.6, 0.5, 0.4, 0.2):
        results.append(validate_initial(make_initial("cone", L=L, **base), s, w).passed)
    assert results == sorted(results, reverse=True)
    results = []
    for A in (0.3, 0.5, 0.6, 0.9):
        results.append(validate_initial(make_initial("cone", A=A, B1=0.0, L=0.9, **base), s, w).passed)
    assert results == sorted(results, reverse=True)
