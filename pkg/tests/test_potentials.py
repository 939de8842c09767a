from __future__ import annotations

import numpy as np
import pytest

from onephase.potentials import (
    F_eps,
    f_eps,
    make_reference,
    make_tabulated,
    term_from_json,
    term_to_json,
    validate,
)


def test_reference_closed_form_values_at_unit_support():
    term = make_reference(1.0)
    assert term.f(0.5) == pytest.approx(0.75, abs=1e-15)
    assert term.F(0.5) == pytest.approx(0.6875, abs=1e-15)
    assert term.F(1.0) == pytest.approx(1.0, abs=1e-15)
    assert term.f(0.0) == 0.0
    assert term.f(1.0) == 0.0


def test_reference_antiderivative_matches_quadrature_of_2f():
    # Independent oracle: integrate 2f numerically and compare with F.
    term = make_reference(1.0)
    for v in (0.2, 0.5, 0.8, 1.0):
        s = np.linspace(0.0, v, 20_001)
        quad = np.trapezoid(2.0 * term.f(s), s)
        assert term.F(v) == pytest.approx(quad, abs=1e-8)


def test_reference_window_constants():
    term = make_reference(1.0)
    assert term.tau == pytest.approx(0.5)
    assert term.c0 == pytest.approx(1.0 / 6.0)
    # General T: the window constant follows f(s)/s = (6/T^4)(T-s)^2.
    for T in (0.5, 2.0):
        t = make_reference(T)
        assert t.c0 == pytest.approx(min(3.0 / (2.0 * T**2), T**2 / 6.0))
        assert 0.0 < t.c0 <= 1.0


def test_make_reference_rejects_nonpositive_support():
    with pytest.raises(ValueError):
        make_reference(0.0)
    with pytest.raises(ValueError):
        make_reference(-1.0)


def test_f_eps_values_and_support():
    term = make_reference(1.0)
    assert f_eps(term, 0.1, 0.05) == pytest.approx(7.5, abs=1e-12)
    assert f_eps(term, 0.1, 0.2) == 0.0
    assert f_eps(term, 0.3, -1.0) == 0.0
    with pytest.raises(ValueError):
        f_eps(term, 0.0, 0.1)
    with pytest.raises(ValueError):
        f_eps(term, -0.5, 0.1)


def test_F_eps_values_indicator_and_saturation():
    term = make_reference(1.0)
    assert F_eps(term, 0.1, 0.05) == pytest.approx(0.6875, abs=1e-15)
    assert F_eps(term, 0.0, 0.3) == 1.0
    assert F_eps(term, 0.0, 0.0) == 0.0
    assert F_eps(term, 0.0, -0.2) == 0.0
    assert F_eps(term, 0.1, 0.1) == 1.0
    assert F_eps(term, 0.1, -0.3) == 0.0


def test_F_eps_scaling_identity_is_exact():
    term = make_reference(1.0)
    t = np.linspace(-0.5, 1.5, 401)
    for eps in (0.05, 0.2, 1.7):
        lhs = np.asarray(F_eps(term, eps, t))
        rhs = np.asarray(F_eps(term, 1.0, t / eps))
        assert np.array_equal(lhs, rhs)


def test_F_eps_derivative_matches_2_f_eps():
    term = make_reference(1.0)
    eps = 0.3
    h = 1e-6
    t = np.linspace(0.02, 0.28, 53)  # interior of (0, T*eps)
    diff = (np.asarray(F_eps(term, eps, t + h)) - np.asarray(F_eps(term, eps, t - h))) / (2 * h)
    target = 2.0 * np.asarray(f_eps(term, eps, t))
    assert np.max(np.abs(diff - target) / np.abs(target)) < 1e-6


def test_Finv_round_trip_and_small_values():
    term = make_reference(1.0)
    for v in (0.05, 0.3, 0.5, 0.77, 0.999):
        assert term.Finv(term.F(v)) == pytest.approx(v, abs=1e-10)
    v_small = term.Finv(0.0199)  # 1 - s^2 at s = 0.99
    assert 0.0 < v_small < 0.1


def test_validate_reference_passes_for_all_supports():
    for T in (0.5, 1.0, 2.0):
        report = validate(make_reference(T), n_samples=10_000)
        assert report["passed"], report
        assert report["conditions"]["normalization"]["worst"] < 1e-8


def test_validate_rejects_small_sample_count():
    with pytest.raises(ValueError):
        validate(make_reference(1.0), n_samples=50)


def test_validate_flags_broken_normalization():
    base = make_reference(1.0)
    s = np.linspace(0.0, 1.0, 2001)
    scaled = make_tabulated(np.column_stack([s, 1.1 * np.asarray(base.f(s))]))
    report = validate(scaled, n_samples=2001)
    assert not report["conditions"]["normalization"]["passed"]
    assert report["conditions"]["normalization"]["integral"] == pytest.approx(1.1, rel=1e-6)


def test_validate_flags_window_up_to_support_endpoint():
    base = make_reference(1.0)
    s = np.linspace(0.0, 1.0, 2001)
    bad = make_tabulated(
        np.column_stack([s, np.asarray(base.f(s))]), tau=1.0, c0=base.c0
    )
    report = validate(bad, n_samples=2001)
    assert not report["conditions"]["window"]["passed"]


def test_json_round_trip_reference_and_tabulated():
    term = make_reference(2.0)
    data = term_to_json(term)
    assert data == {"family": "reference", "T": 2.0, "tau": 1.0, "c0": term.c0}
    back = term_from_json(data)
    probe = np.linspace(-0.5, 2.5, 101)
    assert np.allclose(np.asarray(back.f(probe)), np.asarray(term.f(probe)))

    s = np.linspace(0.0, 1.0, 501)
    tab = make_tabulated(np.column_stack([s, np.asarray(term.f(2.0 * s) * 2.0)]))
    back_tab = term_from_json(term_to_json(tab))
    assert back_tab.T == tab.T
    assert np.allclose(np.asarray(back_tab.f(s)), np.asarray(tab.f(s)))
    with pytest.raises(ValueError):
        term_from_json({"family": "mystery"})


def test_tabulated_tracks_reference_family():
    ref = make_reference(1.0)
    s = np.linspace(0.0, 1.0, 4001)
    tab = make_tabulated(np.column_stack([s, np.asarray(ref.f(s))]))
    probe = np.linspace(0.0, 1.0, 357)
    assert np.allclose(np.asarray(tab.f(probe)), np.asarray(ref.f(probe)), atol=2e-7)
    assert np.allclose(np.asarray(tab.F(probe)), np.asarray(ref.F(probe)), atol=2e-7)
    report = validate(tab, n_samples=4001)
    assert report["conditions"]["nonnegativity"]["passed"]
    assert report["conditions"]["support"]["passed"]
