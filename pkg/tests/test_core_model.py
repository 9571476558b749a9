import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbcool.constants import ATOMIC_MASS_UNIT, HBAR
from sbcool.core_model import (
    BRANCHES,
    SR88,
    CavityParams,
    IonSpecies,
    ModelDomainError,
    NoSteadyStateError,
    PhysicalParams,
    bare_cooperativity,
    cavity_scatter_rate,
    cooling_rate_constant,
    cooling_rate_constant_printed,
    effective_cooperativity,
    lamb_dicke_sq,
    lamb_dicke_valid,
    mean_n_trajectory,
    steady_state_n,
    transition_rates,
)

from conftest import TWO_PI, physical_params


# --- Lamb-Dicke parameter ---------------------------------------------------


def test_lamb_dicke_sr88_value():
    # hbar k^2 / (2 m omega) evaluated by hand
    k = TWO_PI / 422e-9
    expected = HBAR * k**2 / (2 * 88 * ATOMIC_MASS_UNIT * TWO_PI * 0.87e6)
    got = lamb_dicke_sq(SR88, TWO_PI * 0.87e6)
    assert got == pytest.approx(expected, rel=1e-14)
    assert got == pytest.approx(1.46e-2, rel=5e-3)


def test_lamb_dicke_scaling():
    w = TWO_PI * 0.87e6
    base = lamb_dicke_sq(SR88, w)
    assert lamb_dicke_sq(SR88, 2 * w) == pytest.approx(base / 2, rel=1e-15)
    heavy = IonSpecies(mass=2 * SR88.mass, wavelength=SR88.wavelength)
    assert lamb_dicke_sq(heavy, w) == pytest.approx(base / 2, rel=1e-15)


@pytest.mark.parametrize("omega", [0.0, -1.0])
def test_lamb_dicke_rejects_bad_frequency(omega):
    with pytest.raises(ModelDomainError):
        lamb_dicke_sq(SR88, omega)


def test_species_rejects_bad_mass():
    with pytest.raises(ModelDomainError):
        IonSpecies(mass=0.0, wavelength=422e-9)


# --- cooperativity ----------------------------------------------------------


def _cavity(finesse=2.56e4, waist=57.9e-6):
    return CavityParams(finesse=finesse, waist=waist, linewidth=TWO_PI * 117e3)


def test_bare_cooperativity_published_cavity():
    assert abs(bare_cooperativity(_cavity(), 422e-9) - 0.26) <= 0.01


def test_bare_cooperativity_waist_scaling():
    a = bare_cooperativity(_cavity(waist=40e-6), 422e-9)
    b = bare_cooperativity(_cavity(waist=80e-6), 422e-9)
    assert a / b == pytest.approx(4.0, rel=1e-14)


@given(st.floats(1e-6, 1e-3), st.floats(300e-9, 1.5e-6))
def test_bare_cooperativity_unit_identity(waist, lam):
    k = TWO_PI / lam
    f = math.pi * k**2 * waist**2 / 24
    assert bare_cooperativity(_cavity(f, waist), lam) == pytest.approx(1.0, rel=1e-13)


def test_zero_waist_rejected():
    with pytest.raises(ModelDomainError):
        _cavity(waist=0.0)


def test_effective_cooperativity_chain():
    assert abs(effective_cooperativity(0.26, [0.31, 0.89, 0.82, 0.32]) - 0.019) <= 0.001
    assert effective_cooperativity(0.26, []) == 0.26
    assert effective_cooperativity(0.26, [1.0, 1.0]) == 0.26


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.2])
def test_effective_cooperativity_factor_domain(bad):
    with pytest.raises(ModelDomainError):
        effective_cooperativity(0.26, [0.5, bad])


# --- saturation model -------------------------------------------------------


def test_cavity_scatter_rate_published_point():
    assert cavity_scatter_rate(0.018, 1.2e7, 8e6) == pytest.approx(8.64e4, rel=1e-12)


def test_cavity_scatter_rate_limits():
    eta, gsat = 0.018, 8e6
    assert cavity_scatter_rate(eta, gsat, gsat) == pytest.approx(eta * gsat / 2, rel=1e-15)
    h = 1e-3
    assert cavity_scatter_rate(eta, h, gsat) / h == pytest.approx(eta, rel=1e-9)
    assert cavity_scatter_rate(eta, 1e20, gsat) == pytest.approx(eta * gsat, rel=1e-12)


@given(st.floats(0, 0.5), st.floats(1e3, 1e9))
def test_cavity_scatter_rate_monotone(eta, gsat):
    g = np.linspace(0, 10 * gsat, 50)
    assert np.all(np.diff(cavity_scatter_rate(eta, g, gsat)) >= 0)


def test_cavity_scatter_rate_domain():
    with pytest.raises(ModelDomainError):
        cavity_scatter_rate(0.018, 1e6, 0.0)


# --- transition rates and cooling constant ---------------------------------


def test_rates_on_resonance(published):
    r = transition_rates(published.for_branch("red"))
    p = published
    assert r.R_minus == p.gamma_sc * p.eta * p.eta_ld_sq


def test_rates_carrier_symmetric(published):
    r = transition_rates(published.for_branch("carrier"))
    assert r.R_minus == r.R_plus


def test_carrier_heating_rate_published(published):
    # gamma_sc * C * eta_ld^2 + n_dot_ext by hand
    p = published.replace(eta_ld_sq=0.0146)
    n_plus = transition_rates(p).N_plus
    assert n_plus == pytest.approx(2.87e6 / 3 * 0.0146 + 17, rel=1e-14)
    assert n_plus == pytest.approx(1.40e4, rel=5e-3)


def test_cooling_rate_constant_published(published):
    p = published
    by_hand = p.gamma_sc * p.eta * p.eta_ld_sq / (1 + (p.kappa / (4 * p.omega)) ** 2)
    w = cooling_rate_constant(p)
    assert w == pytest.approx(by_hand, rel=1e-14)
    assert w == pytest.approx(6.2e2, rel=0.01)


def test_printed_denominator_differs(published):
    w = cooling_rate_constant(published)
    alt = cooling_rate_constant_printed(published)
    assert alt < w
    rel = abs(alt - w) / w
    assert 1e-3 < rel < 1e-2


def test_cooling_rate_constant_limits(published):
    p = published.replace(kappa=published.omega * 1e-6)
    assert cooling_rate_constant(p) == pytest.approx(p.gamma_sc * p.eta * p.eta_ld_sq, rel=1e-12)
    assert cooling_rate_constant(published.replace(eta=0.0)) == 0.0


# --- steady state -----------------------------------------------------------


def test_steady_state_published(published):
    n_inf = steady_state_n(published)
    assert abs(n_inf - 22.5) <= 0.3


def test_steady_state_small_linewidth_limit(published):
    p = published.replace(kappa=1e-9, n_dot_ext=0.0)
    assert steady_state_n(p) == pytest.approx(p.c_factor / p.eta, rel=1e-12)


def test_steady_state_scales_with_cooperativity(published):
    p = published.replace(kappa=1e-9, n_dot_ext=0.0)
    ratio = steady_state_n(p.replace(eta=10 * p.eta)) / steady_state_n(p)
    assert ratio == pytest.approx(0.1, rel=1e-12)


def test_steady_state_requires_cooperativity(published):
    with pytest.raises(NoSteadyStateError):
        steady_state_n(published.replace(eta=0.0))


@settings(max_examples=300)
@given(physical_params())
def test_balance_identity(p):
    r = transition_rates(p.for_branch("red"))
    lhs = steady_state_n(p) * cooling_rate_constant(p)
    assert lhs == pytest.approx(r.R_plus + r.N_plus, rel=1e-12)


@settings(max_examples=300)
@given(physical_params())
def test_steady_state_without_heating_matches_c_over_eta_form(p):
    q = p.replace(n_dot_ext=0.0)
    a = (q.kappa / (4 * q.omega)) ** 2
    assert steady_state_n(q) == pytest.approx(a + q.c_factor / q.eta * (1 + a), rel=1e-12)


@settings(max_examples=200)
@given(physical_params(), st.floats(-3, 3))
def test_reflection_symmetry(p, d):
    r1 = transition_rates(p.replace(delta_lc=d * p.omega))
    r2 = transition_rates(p.replace(delta_lc=-d * p.omega))
    assert r1.R_minus == pytest.approx(r2.R_plus, rel=1e-14)


@given(physical_params(), st.floats(-3, 3))
def test_outputs_finite_nonnegative(p, d):
    r = transition_rates(p.replace(delta_lc=d * p.omega))
    vals = [r.R_minus, r.R_plus, r.N_plus, cooling_rate_constant(p), steady_state_n(p)]
    assert all(math.isfinite(v) and v >= 0 for v in vals)


# --- trajectories -----------------------------------------------------------


@given(physical_params(), st.floats(0, 100))
def test_trajectories_start_at_n0(p, n0):
    for b in BRANCHES:
        assert mean_n_trajectory(p, b, n0, [0.0]).mean_n[0] == pytest.approx(n0, abs=1e-12)


@given(physical_params(), st.floats(0, 100))
def test_red_branch_monotone_toward_steady_state(p, n0):
    w = cooling_rate_constant(p)
    n_inf = steady_state_n(p)
    t = np.linspace(0, 10 / w, 60)
    m = mean_n_trajectory(p, "red", n0, t).mean_n
    diffs = np.diff(m)
    tol = 1e-12 * max(n0, n_inf)
    if n0 > n_inf:
        assert np.all(diffs <= tol)
    else:
        assert np.all(diffs >= -tol)
    assert np.all(m >= 0)


def test_red_branch_long_time_limit(published):
    w = cooling_rate_constant(published)
    m = mean_n_trajectory(published, "red", 0.3, [60 / w]).mean_n[0]
    assert m == pytest.approx(steady_state_n(published), rel=1e-12)


@given(physical_params(), st.floats(0, 100))
def test_blue_branch_strictly_increasing(p, n0):
    w = cooling_rate_constant(p)
    t = np.linspace(0, 2 / w, 40)
    assert np.all(np.diff(mean_n_trajectory(p, "blue", n0, t).mean_n) > 0)


@given(physical_params(), st.floats(0, 100), st.floats(0, 100))
def test_carrier_slope_independent_of_n0(p, n0a, n0b):
    r = transition_rates(p.for_branch("carrier"))
    t = np.array([0.0, 1e-3])
    for n0 in (n0a, n0b):
        m = mean_n_trajectory(p, "carrier", n0, t).mean_n
        assert (m[1] - m[0]) / t[1] == pytest.approx(r.R_plus + r.N_plus, rel=1e-9)


def test_blue_initial_slope(published):
    w = cooling_rate_constant(published)
    n_inf = steady_state_n(published)
    n0 = 0.3
    h = 1e-7 / w
    m = mean_n_trajectory(published, "blue", n0, [0.0, h]).mean_n
    assert (m[1] - m[0]) / h == pytest.approx(w * (n0 + n_inf + 1), rel=1e-6)


def test_unknown_branch_rejected(published):
    with pytest.raises(ValueError):
        mean_n_trajectory(published, "green", 0.0, [0.0])


def test_negative_inputs_rejected(published):
    with pytest.raises(ModelDomainError):
        mean_n_trajectory(published, "red", -1.0, [0.0])
    with pytest.raises(ModelDomainError):
        mean_n_trajectory(published, "red", 0.0, [-1.0])
    with pytest.raises(ModelDomainError):
        PhysicalParams(kappa=1.0, omega=1.0, gamma_sc=1.0, eta=-0.1, eta_ld_sq=0.01)


def test_lamb_dicke_validity_flag(published):
    assert lamb_dicke_valid(published, 22.5)
    assert not lamb_dicke_valid(published, 70.0)
