import math

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from morawetz_lab.model import GridSpec, Mode, ModelParams, initial_data_gaussian, potential_v
from morawetz_lab.solver import evolve_mode
from morawetz_lab.multipliers import (
    WindowSet,
    alpha_balance,
    bulk_coefficients,
    classical_bulk_closed_form,
    classical_multiplier,
    combined_weight,
    divergence_identity_residual,
    epsilon_uniformity,
    flux_densities,
    identity_residual_field,
    identity_residual_fourier,
    lemma_min_scan,
    positivity_check,
    ramp_domination_constant,
    refined_multiplier,
    resolve_refined_q_sign,
    smooth_characteristic,
    smooth_characteristic_union,
    smoothstep,
    trapping_weight,
)
from morawetz_lab import fd

XS = np.linspace(-6, 6, 61)


# -- smoothstep and cutoffs ---------------------------------------------------


def test_quintic_smoothstep_formula():
    r = np.linspace(0, 1, 101)
    assert np.allclose(smoothstep(r), r**3 * (10 - 15 * r + 6 * r * r), atol=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_smoothstep_family_properties(k):
    r = sp.symbols("r")
    # odd-degree Hermite ramp: s' proportional to r^k (1-r)^k
    ds = r**k * (1 - r) ** k
    exact = sp.integrate(ds, (r, 0, r)) / sp.integrate(ds, (r, 0, 1))
    pts = np.linspace(0, 1, 23)
    oracle = np.array([float(exact.subs(r, p)) for p in pts])
    assert np.allclose(smoothstep(pts, smoothness=k), oracle, atol=1e-13)
    for j in range(1, k + 1):
        assert smoothstep(1e-12, j, k) == pytest.approx(0.0, abs=1e-6)
        assert smoothstep(1 - 1e-12, j, k) == pytest.approx(0.0, abs=1e-6)
    assert np.all(np.diff(smoothstep(np.linspace(0, 1, 1001), smoothness=k)) >= -1e-13)


def test_smoothstep_rejects_bad_order():
    with pytest.raises(ValueError):
        smoothstep(0.5, 3, 2)
    with pytest.raises(ValueError):
        smoothstep(0.5, 0, 0)


def test_smoothstep_derivatives_match_differences():
    r = np.linspace(0.05, 0.95, 19)
    h = 1e-5
    for order in (1, 2):
        fd_ = (smoothstep(r + h, order - 1) - smoothstep(r - h, order - 1)) / (2 * h)
        assert np.allclose(smoothstep(r, order), fd_, atol=1e-7)


@pytest.mark.parametrize("t, expected", [(25.0, 1.0), (-1.0, 0.0), (51.0, 0.0), (-0.5, 0.5), (50.5, 0.5)])
def test_smooth_characteristic_values(t, expected):
    chi = smooth_characteristic(0.0, 50.0)
    assert chi(t) == pytest.approx(expected, abs=1e-15)


def test_smoothstep_midpoint_exact():
    assert smoothstep(0.5) == 0.5


@given(st.floats(-5, 60))
def test_cutoff_range_and_support(t):
    chi = smooth_characteristic(0.0, 50.0)
    v = float(chi(t))
    assert 0.0 <= v <= 1.0
    if t < -1 or t > 51:
        assert v == 0.0
    if 0 <= t <= 50:
        assert v == 1.0


def test_cutoff_monotone_on_ramps():
    chi = smooth_characteristic(0.0, 10.0)
    assert np.all(np.diff(chi(np.linspace(-1, 0, 1001))) >= 0)
    assert np.all(np.diff(chi(np.linspace(10, 11, 1001))) <= 0)


def test_cutoff_union_and_validation():
    chi2 = smooth_characteristic_union([(-1.0, 0.0), (10.0, 11.0)])
    assert chi2(-0.5) == 1 and chi2(10.5) == 1 and chi2(5.0) == 0
    assert chi2.support == (-2.0, 12.0)
    with pytest.raises(ValueError):
        smooth_characteristic_union([(0.0, 1.0), (2.0, 3.0)])
    with pytest.raises(ValueError):
        smooth_characteristic(1.0, 0.0)


def test_window_set_definitions():
    ws = WindowSet.for_horizon(20.0)
    t = np.linspace(-3, 23, 2601)
    assert np.all(ws.chi1(t)[(t >= 0) & (t <= 20)] == 1)
    assert np.all(ws.chi1(t)[(t <= -1) | (t >= 21)] == 0)
    x = np.linspace(-3, 3, 601)
    assert np.all(ws.chix(x)[np.abs(x) <= 1] == 1)
    assert np.all(ws.chix(x)[np.abs(x) >= 2] == 0)
    with pytest.raises(ValueError):
        WindowSet.for_horizon(2.0)


@pytest.mark.parametrize("T", [5.0, 25.0, 200.0])
def test_cutoff_domination(T):
    ok, C = WindowSet.for_horizon(T).domination(10_000)
    assert ok
    # the grid constant approaches the ramp supremum from below
    exact = ramp_domination_constant()
    assert exact * (1 - 1e-3) <= C <= exact + 1e-12


def test_domination_constant_against_calculus():
    r = sp.symbols("r")
    s = r**3 * (10 - 15 * r + 6 * r**2)
    d1, d2, d3 = (sp.diff(s, r, k) for k in (1, 2, 3))
    # s'' >= 0 on [0, 1/2] and <= 0 on [1/2, 1]; maximize s' +- s'' piecewise
    best = 0.0
    for sign, lo, hi in ((1, 0.0, 0.5), (-1, 0.5, 1.0)):
        g = d1 + sign * d2
        roots = sp.Poly(d2 + sign * d3, r).nroots(n=30)
        pts = [lo, hi] + [float(sp.re(c)) for c in roots if abs(sp.im(c)) < 1e-20 and lo < sp.re(c) < hi]
        best = max(best, max(float(g.subs(r, p)) for p in pts))
    assert ramp_domination_constant() == pytest.approx(best, rel=1e-9)
    assert best == pytest.approx(6.68897, abs=1e-5)


# -- multipliers ----------------------------------------------------------------


def test_classical_multiplier_values():
    ms = classical_multiplier(0.3)
    assert ms.f(0.0) == 0.0
    assert ms.q(0.0) == pytest.approx(-0.5)
    assert ms.f2(1.0) == pytest.approx(0.5)


def test_classical_q_at_one_high_precision():
    mpmath.mp.dps = 30
    a = mpmath.atan(1)
    oracle = float((-mpmath.mpf(1) / 2 + mpmath.mpf("0.1") * a * a) / 2)
    assert classical_multiplier(0.1).q(1.0) == pytest.approx(oracle, abs=1e-15)
    assert oracle == pytest.approx(-0.2191575, abs=1e-6)


def test_classical_derivatives_symbolic():
    x, d = sp.symbols("x delta", real=True)
    f = -sp.atan(x)
    q = sp.diff(f, x) / 2 + d * sp.atan(x) ** 2 / (1 + x**2)
    exprs = {"f1": sp.diff(f, x), "f2": sp.diff(f, x, 2), "f3": sp.diff(f, x, 3),
             "q": q, "q1": sp.diff(q, x), "q2": sp.diff(q, x, 2)}
    for delta in (0.0, 0.05, 0.7):
        ms = classical_multiplier(delta)
        for name, e in exprs.items():
            fn = sp.lambdify(x, e.subs(d, delta), "numpy")
            assert np.allclose(getattr(ms, name)(XS), fn(XS), rtol=1e-12, atol=1e-14), name


@pytest.mark.parametrize("maker", [lambda: classical_multiplier(0.05),
                                   lambda: refined_multiplier(4.0, 0.4),
                                   lambda: refined_multiplier(32.0, 0.4, "displayed")])
def test_derivative_fields_match_central_differences(maker):
    ms = maker()
    h = 1e-4
    x = np.linspace(-5, 5, 41) + 0.0123
    for parent, child in (("f", "f1"), ("f1", "f2"), ("f2", "f3"), ("q", "q1"), ("q1", "q2")):
        p = getattr(ms, parent)
        num = (p(x + h) - p(x - h)) / (2 * h)
        ana = getattr(ms, child)(x)
        scale = np.maximum(np.abs(ana), 1e-3 * np.max(np.abs(ana)))
        assert np.max(np.abs(num - ana) / scale) <= 1e-6, child


@given(st.floats(-1e4, 1e4), st.floats(0, 100), st.floats(0, 0.5))
def test_f_odd_bounded(x, tau, alpha):
    for ms in (classical_multiplier(0.05), refined_multiplier(tau, alpha)):
        assert ms.f(-x) == -ms.f(x)
        assert abs(ms.f(x)) <= math.pi / 2


def test_q_decays():
    for ms in (classical_multiplier(0.05), refined_multiplier(4.0, 0.4)):
        assert abs(ms.q(1e6)) < 1e-10


def test_refined_examples():
    z = refined_multiplier(0.0, 0.4)
    assert np.all(z.f(XS) == 0) and np.all(z.q(XS) == 0)
    ms = refined_multiplier(32.0, 0.4)
    assert 32 ** sp.Rational(2, 5) == 4
    assert abs(ms.q(0.0)) == pytest.approx(2.0, rel=1e-14)
    assert abs(0.5 * ms.q2(0.0)) == pytest.approx(0.5 * 32.0 ** 1.2, rel=1e-14)


@given(st.floats(0.01, 100), st.floats(0, 0.5), st.floats(-20, 20))
def test_refined_q_magnitude(tau, alpha, x):
    s = tau**alpha
    ms = refined_multiplier(tau, alpha)
    assert abs(ms.q(x)) == pytest.approx(0.5 * s / (1 + s * s * x * x), rel=1e-12)
    assert refined_multiplier(tau, alpha, "displayed").q(x) == -ms.q(x)


def test_trapping_weight_is_twice_half_q2_magnitude():
    for tau in (1.0, 4.0, 32.0):
        ms = refined_multiplier(tau, 0.4)
        assert np.allclose(np.abs(trapping_weight(tau, 0.4, XS)), np.abs(ms.q2(XS)), rtol=1e-12)


def test_refined_q_sign_resolves_to_derivative():
    assert resolve_refined_q_sign(ModelParams()) == -1


# -- bulk coefficients --------------------------------------------------------


def test_bulk_at_origin():
    for d in (0.0, 0.05, 0.3):
        b = bulk_coefficients(classical_multiplier(d), ModelParams(delta=d), 0.0)
        assert (float(b.c_t), float(b.c_x), float(b.c_omega)) == pytest.approx((0.0, 1.0, 0.0), abs=1e-15)


def test_c_omega_at_one_delta_zero():
    b = bulk_coefficients(classical_multiplier(0.0), ModelParams(delta=0.0), 1.0)
    assert float(b.c_omega) == pytest.approx(math.pi / 16, rel=1e-14)
    assert math.pi / 16 == pytest.approx(0.19635, abs=1e-5)


@pytest.mark.parametrize("delta", [0.0, 0.05, 0.2])
def test_bulk_matches_closed_form(delta):
    p = ModelParams(delta=delta)
    b = bulk_coefficients(classical_multiplier(delta), p, XS)
    c = classical_bulk_closed_form(delta, p.big_n, XS)
    for name in ("c_t", "c_x", "c_omega", "c_0"):
        assert np.allclose(getattr(b, name), getattr(c, name), rtol=1e-12, atol=1e-15)


@given(st.floats(0, 4 / math.pi**2 - 1e-9))
def test_c_x_nonnegative_for_small_delta(delta):
    b = bulk_coefficients(classical_multiplier(delta), ModelParams(delta=delta), np.linspace(-1e3, 1e3, 2001))
    assert b.c_x.min() >= 0


def test_identity_symbolic_generic_multiplier():
    """The divergence identity holds for arbitrary f, q, V, W (a, b real and imaginary parts)."""
    t, x = sp.symbols("t x", real=True)
    lam, N, eps = sp.symbols("lam N eps", real=True)
    a, b = sp.Function("a")(t, x), sp.Function("b")(t, x)
    f, q, V, W = (sp.Function(n)(x) for n in ("f", "q", "V", "W"))
    D = sp.diff
    # action = A + iB; Re((f (a_x - i b_x) + q (a - i b)) (A + iB))
    A = -D(a, t, 2) + D(a, x, 2) - (lam + N) * V * a - eps * W * b
    B = -D(b, t, 2) + D(b, x, 2) - (lam + N) * V * b + eps * W * a
    lhs = (f * D(a, x) + q * a) * A + (f * D(b, x) + q * b) * B
    kin = D(a, t) ** 2 + D(b, t) ** 2
    grad = D(a, x) ** 2 + D(b, x) ** 2
    mass = a**2 + b**2
    re_cj_ux = a * D(a, x) + b * D(b, x)
    im_cjx_u = D(a, x) * b - D(b, x) * a
    p_t = -((f * D(a, x) + q * a) * D(a, t) + (f * D(b, x) + q * b) * D(b, t))
    p_x = (f * kin / 2 + f * grad / 2 - f * V * lam * mass / 2 + q * re_cj_ux
           - (N * f * V + D(q, x)) * mass / 2)
    c_t = q - D(f, x) / 2
    c_x = -(q + D(f, x) / 2)
    c_om = (D(f, x) / 2 - q) * V + f * D(V, x) / 2
    c_0 = N * c_om + D(q, x, 2) / 2
    bulk = c_t * kin + c_x * grad + (lam * c_om + c_0) * mass - eps * f * W * im_cjx_u
    assert sp.simplify(sp.expand(lhs - D(p_t, t) - D(p_x, x) - bulk)) == 0


def test_flux_formulas_numerically_match_generic_form(rng):
    ms = classical_multiplier(0.05)
    p = ModelParams()
    u, ut, ux = (rng.normal(size=61) + 1j * rng.normal(size=61) for _ in range(3))
    fl = flux_densities(ms, p, 6.0, XS, u, ut, ux)
    assert np.allclose(fl.p_t, -np.real((ms.f(XS) * np.conj(ux) + ms.q(XS) * np.conj(u)) * ut))
    ff = flux_densities(ms, p, 6.0, XS, u, None, ux, tau=3.0)
    assert ff.p_t is None


def _manufactured(h, lam=2.0):
    dt = h / 2
    t = np.arange(-3, 3 + dt / 2, dt)
    x = np.arange(-4, 4 + h / 2, h)
    T, X = np.meshgrid(t, x, indexing="ij")
    psi = np.exp(-T**2 - X**2) * (1 + 0.3j * X)
    return psi, dt, x


@pytest.mark.parametrize("ms", [classical_multiplier(0.05), classical_multiplier(0.0)])
def test_manufactured_field_residual_converges(ms):
    p = ModelParams()
    errs = []
    hs = [0.2, 0.1, 0.05]
    for h in hs:
        psi, dt, x = _manufactured(h)
        r = identity_residual_field(psi, dt, h, x, ms, p, 2.0)
        errs.append(np.sum(np.abs(r[6:-6, 6:-6])) * dt * h)
    assert min(fd.observed_orders(hs, errs)) >= 4 - 1


def test_fourier_identity_on_manufactured_profile():
    p = ModelParams()
    ms = refined_multiplier(4.0, 0.4)
    errs = []
    hs = [0.2, 0.1, 0.05]
    for h in hs:
        x = np.arange(-5, 5 + h / 2, h)
        uhat = np.exp(-x**2) * np.exp(1j * x)
        r = identity_residual_fourier(uhat, 4.0, h, x, ms, p, 6.0)
        errs.append(np.sum(np.abs(r[4:-4])) * h)
    assert min(fd.observed_orders(hs, errs)) >= 3


def test_residual_zero_and_phase_invariant(small_run):
    ms = classical_multiplier(0.05)
    base = divergence_identity_residual(small_run, ms, t_range=(0.0, 6.0), x_max=4.0)
    rot = small_run.__class__(small_run.grid, small_run.mode, small_run.params, small_run.profile,
                              small_run.times, small_run.x, np.exp(0.7j) * small_run.u,
                              np.exp(0.7j) * small_run.v, small_run.record_stride)
    assert divergence_identity_residual(rot, ms, t_range=(0.0, 6.0), x_max=4.0) == pytest.approx(base, rel=1e-10)
    zero = small_run.__class__(small_run.grid, small_run.mode, small_run.params, small_run.profile,
                               small_run.times, small_run.x, 0 * small_run.u, 0 * small_run.v,
                               small_run.record_stride)
    assert divergence_identity_residual(zero, ms) == 0.0
    assert divergence_identity_residual(zero, ms, relative=True) == 0.0
    with pytest.raises(ValueError):
        divergence_identity_residual(small_run, refined_multiplier(1.0, 0.4))


def test_residual_relative_shrinks_on_refinement():
    ms = classical_multiplier(0.05)
    params = ModelParams(epsilon=0.01, t_horizon=6.0)
    rel = []
    for h in (0.1, 0.05):
        g = GridSpec.for_run(h, 3.0, 6.0, half_length=20.0)
        tr = evolve_mode(params, Mode(1), g, initial_data_gaussian(g), 0.0, 3.0, x_window=4.0)
        rel.append(divergence_identity_residual(tr, ms, relative=True))
    assert 0 < rel[1] < rel[0] / 8


# -- positivity ---------------------------------------------------------------


def test_default_positivity_on_dense_grid():
    x = np.linspace(-50, 50, 100_001)
    rep = positivity_check(ModelParams(), x)
    assert rep.passed
    assert rep.min_c_x >= 0 and rep.min_c_omega >= 0
    assert rep.margin == pytest.approx(0.4854, abs=1e-3)


def test_positivity_weight_not_v():
    # c_omega > 0 away from the origin for delta small: x arctan x dominates
    b = bulk_coefficients(classical_multiplier(0.05), ModelParams(), np.array([0.5, 5.0, 50.0]))
    assert np.all(b.c_omega > 0)
    assert np.allclose(potential_v(0.0), 1.0)


def test_epsilon_uniformity():
    x = np.linspace(-50, 50, 100_001)
    ok, margins = epsilon_uniformity(ModelParams(), [1e-3, 1e-2, 10**-1.5], x)
    assert ok
    assert margins == sorted(margins, reverse=True)


def test_large_epsilon_negative_control():
    x = np.linspace(-5, 5, 2001)
    rep = positivity_check(ModelParams(), x, epsilon=50.0)
    assert rep.margin < 0 and not rep.passed


# -- exact numbers ---------------------------------------------------------------


def test_alpha_balance():
    assert alpha_balance(2 / 5)
    assert not alpha_balance(0.0)
    assert not alpha_balance(0.5)


def test_lemma_scan_m700():
    value, s = lemma_min_scan(700.0, 10.0, 1_000_000)
    assert value == pytest.approx(1.0, abs=1e-6) and s == pytest.approx(0.0, abs=1e-6)
    # monotone: g'(s) = 2 s (700 - 6 (1 - s^2)... ) > 0 for s > 0
    sv = np.linspace(1e-6, 10, 100_001)
    y = sv * sv
    dg_dy = (-3 * (1 + y) - 3 * (1 - 3 * y)) / (1 + y) ** 4 + 700
    assert np.all(dg_dy > 0)


def test_lemma_scan_m0_calculus_oracle():
    y = sp.symbols("y", nonnegative=True)
    g = (1 - 3 * y) / (1 + y) ** 3
    crit = sp.solve(sp.diff(g, y), y)
    assert crit == [1] and g.subs(y, 1) == sp.Rational(-1, 4)
    value, s = lemma_min_scan(0.0, 10.0, 1_000_000)
    assert value == pytest.approx(-0.25, abs=1e-4) and s == pytest.approx(1.0, abs=1e-4)


def test_lemma_scan_preconditions():
    with pytest.raises(ValueError):
        lemma_min_scan(700.0, 1.0)
    with pytest.raises(ValueError):
        lemma_min_scan(700.0, 10.0, 1000)


@given(st.floats(0.01, 100), st.floats(-2, 2))
def test_combined_weight_dominates(tau, x):
    w = combined_weight(tau, 0.4, 700.0, x)
    assert w >= tau**1.2 * (1 - 1e-9)


def test_combined_weight_exact_at_zero():
    tau = np.array([0.5, 1.0, 32.0])
    assert np.allclose(combined_weight(tau, 0.4, 700.0, 0.0), np.abs(tau) ** 1.2, rtol=1e-14, atol=0)
