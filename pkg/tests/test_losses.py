"""Loss values/gradients against oracles, smoothness reports, dual solve, duality gap."""

import numpy as np
import pytest

from fdglm import (
    ABSOLUTE,
    LOGISTIC,
    SQUARED,
    ConvexQuadratic,
    DomainError,
    ParameterError,
    dual_coordinate_update,
    dual_coordinate_update_array,
    huber,
    conjugate_duality_gap,
    lipschitz_report,
    loss_grad,
    loss_value,
    parse_loss,
)
from reference import bisection_dual_oracle

ALL_LOSSES = [SQUARED, ABSOLUTE, LOGISTIC, huber(1.0), huber(0.4), huber(2.5)]


# ---------------------------------------------------------------------------
# values
# ---------------------------------------------------------------------------


def test_squared_zero_at_match():
    for u in (-3.0, 0.0, 7.5):
        assert loss_value(SQUARED, u, u) == 0.0


def test_logistic_at_origin_is_ln2():
    assert loss_value(LOGISTIC, 0.0, 1.0) == pytest.approx(np.log(2.0), abs=1e-15)


def test_logistic_sign_coercion_matches_explicit_labels():
    # responses enter through their sign only; y=0 counts as +1
    u = np.linspace(-4, 4, 9)
    assert np.allclose(loss_value(LOGISTIC, u, 0.0), np.log1p(np.exp(-u)))
    assert np.allclose(loss_value(LOGISTIC, u, -3.7), loss_value(LOGISTIC, u, -1.0))


def _envelope_min(r, kappa, lo=-20.0, hi=20.0):
    # golden-section minimization of (w - r)^2/2 + kappa |w| over w
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    f = lambda w: 0.5 * (w - r) ** 2 + kappa * abs(w)
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(200):
        if f(c) < f(d):
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
    w = 0.5 * (a + b)
    return f(w)


def test_huber_is_the_moreau_envelope_of_scaled_absolute():
    # frozen spot value first: kappa=1, u=3, y=0 -> 2.5
    assert loss_value(huber(1.0), 3.0, 0.0) == pytest.approx(2.5, abs=1e-12)
    rng = np.random.default_rng(11)
    for _ in range(40):
        kappa = float(rng.uniform(0.2, 3.0))
        u, y = rng.uniform(-6, 6, size=2)
        want = _envelope_min(u - y, kappa)
        assert loss_value(huber(kappa), u, y) == pytest.approx(want, abs=1e-9)


def test_values_nonnegative_and_convex_on_samples():
    rng = np.random.default_rng(3)
    for kind in ALL_LOSSES:
        u = rng.uniform(-10, 10, size=200)
        y = rng.uniform(-10, 10, size=200)
        vals = loss_value(kind, u, y)
        assert np.all(vals >= 0.0)
        # midpoint convexity along u
        u2 = rng.uniform(-10, 10, size=200)
        mid = loss_value(kind, 0.5 * (u + u2), y)
        assert np.all(mid <= 0.5 * loss_value(kind, u, y) + 0.5 * loss_value(kind, u2, y) + 1e-12)


def test_non_finite_input_rejected():
    with pytest.raises(DomainError):
        loss_value(SQUARED, np.inf, 0.0)
    with pytest.raises(DomainError):
        loss_grad(LOGISTIC, np.nan, 1.0)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def test_squared_grad_spot():
    assert loss_grad(SQUARED, 2.0, 0.0) == 2.0


def test_absolute_subgradient_zero_at_kink():
    assert loss_grad(ABSOLUTE, 1.5, 1.5) == 0.0
    assert loss_grad(ABSOLUTE, 2.0, 1.0) == 1.0
    assert loss_grad(ABSOLUTE, 0.0, 1.0) == -1.0


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(29)
    h = 1e-6
    for kind in ALL_LOSSES:
        for _ in range(100):
            u = float(rng.uniform(-8, 8))
            y = float(rng.uniform(-8, 8))
            if kind.name in ("absolute", "huber") and abs(abs(u - y) - getattr(kind, "kappa", 0)) < 1e-3:
                continue  # avoid straddling a kink with the centred stencil
            if kind.name == "absolute" and abs(u - y) < 1e-3:
                continue
            num = (loss_value(kind, u + h, y) - loss_value(kind, u - h, y)) / (2 * h)
            got = loss_grad(kind, u, y)
            assert got == pytest.approx(num, rel=1e-6, abs=1e-6)


# ---------------------------------------------------------------------------
# smoothness reports
# ---------------------------------------------------------------------------


def test_report_classes_and_constants():
    rep = lipschitz_report(ABSOLUTE)
    assert (rep.cls, rep.rho, rep.rho_lip, rep.rho_sqrt) == ("Lip", 1.0, 1.0, None)
    rep = lipschitz_report(LOGISTIC)
    assert (rep.cls, rep.rho, rep.rho_lip, rep.rho_sqrt) == ("Lip", 1.0, 1.0, None)
    rep = lipschitz_report(SQUARED)
    assert rep.cls == "SqrtLip" and rep.rho == pytest.approx(np.sqrt(2.0)) and rep.rho_lip is None
    rep = lipschitz_report(huber(0.7))
    assert rep.cls == "Both" and rep.rho == 0.7 and rep.rho_lip == 0.7
    assert rep.rho_sqrt == pytest.approx(np.sqrt(2.0))


def test_reports_hold_on_sampled_box():
    # the defining inequalities, sampled over (u, y) in [-50, 50]^2
    rng = np.random.default_rng(41)
    u = rng.uniform(-50, 50, size=4000)
    y = rng.uniform(-50, 50, size=4000)
    for kind in ALL_LOSSES:
        rep = lipschitz_report(kind)
        g = np.abs(loss_grad(kind, u, y))
        if rep.rho_lip is not None:
            assert np.all(g <= rep.rho_lip + 1e-12)
        if rep.rho_sqrt is not None:
            assert np.all(g <= rep.rho_sqrt * np.sqrt(loss_value(kind, u, y)) + 1e-12)


# ---------------------------------------------------------------------------
# dual coordinate solve
# ---------------------------------------------------------------------------


def test_dual_squared_zero_case():
    assert dual_coordinate_update(SQUARED, 0.0, 0.0, 1.0, 1) == 0.0


def test_dual_squared_closed_form_1000_draws():
    rng = np.random.default_rng(17)
    a = rng.normal(0, 5, size=1000)
    y = rng.normal(0, 5, size=1000)
    for _ in range(5):
        sigma = float(rng.uniform(0.05, 20.0))
        n = int(rng.integers(1, 1000))
        got = dual_coordinate_update_array(SQUARED, a, y, sigma, n)
        want = (n * a - sigma * y) / (n + sigma)
        assert np.max(np.abs(got - want)) <= 1e-10


def test_dual_logistic_unit_case_matches_bisection():
    got = dual_coordinate_update(LOGISTIC, 1.0, 1.0, 1.0, 1)
    want = bisection_dual_oracle(LOGISTIC, 1.0, 1.0, 1.0, 1)
    assert got == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("kind", [LOGISTIC, ABSOLUTE, huber(1.0), huber(0.3)])
def test_dual_matches_bisection_oracle(kind):
    rng = np.random.default_rng(59)
    for _ in range(200):
        a = float(rng.normal(0, 3))
        y = float(rng.normal(0, 3))
        sigma = float(rng.uniform(0.1, 10.0))
        n = int(rng.integers(1, 200))
        got = dual_coordinate_update(kind, a, y, sigma, n)
        want = bisection_dual_oracle(kind, a, y, sigma, n)
        assert abs(got - want) <= 1e-9


def test_dual_newton_survives_sharp_sigmoid_transition():
    # regression: this draw once made undamped Newton two-cycle between the
    # sigmoid's flat regions without shrinking the bracket
    a, y, sigma, n = -0.4075861650789083, 1.0, 3.0974277627384823, 37
    got = dual_coordinate_update(LOGISTIC, a, y, sigma, n)
    want = bisection_dual_oracle(LOGISTIC, a, y, sigma, n)
    assert abs(got - want) <= 1e-11


def test_dual_solution_bounded_by_gradient_range():
    rng = np.random.default_rng(2)
    for kind in (ABSOLUTE, LOGISTIC, huber(0.5)):
        rho = lipschitz_report(kind).rho_lip
        a = rng.normal(0, 50, size=500)
        y = rng.normal(0, 50, size=500)
        lam = dual_coordinate_update_array(kind, a, y, 3.0, 7)
        assert np.all(np.abs(lam) <= rho + 1e-12)


def test_dual_array_agrees_with_scalar_loop():
    rng = np.random.default_rng(8)
    a = rng.normal(0, 2, size=50)
    y = rng.normal(0, 2, size=50)
    arr = dual_coordinate_update_array(LOGISTIC, a, y, 2.5, 13)
    one = [dual_coordinate_update(LOGISTIC, float(ai), float(yi), 2.5, 13) for ai, yi in zip(a, y)]
    assert np.allclose(arr, one, atol=0, rtol=0)


def test_dual_parameter_validation():
    with pytest.raises(ParameterError):
        dual_coordinate_update(SQUARED, 1.0, 0.0, -1.0, 4)
    with pytest.raises(ParameterError):
        dual_coordinate_update(SQUARED, 1.0, 0.0, 1.0, 0)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def test_parse_loss_round_trips():
    for spec in ("squared", "absolute", "logistic", "huber:0.5"):
        assert str(parse_loss(spec)) == spec
    assert parse_loss("huber") == huber(1.0)
    with pytest.raises(ParameterError):
        parse_loss("hinge")
    with pytest.raises(ParameterError):
        parse_loss("squared:2")
    with pytest.raises(ParameterError):
        parse_loss("huber:-1")


# ---------------------------------------------------------------------------
# scalar duality inequality on the quadratic family
# ---------------------------------------------------------------------------


def _gap_grid(f1, f2, u, step=1e-4):
    v_star = abs(f1.a * u + f1.b)
    half = v_star + abs(f2.b) + f2.c + 1.0
    return np.arange(-half, half + step, step)


def test_duality_inequality_frozen_cases():
    f = ConvexQuadratic(1.0, 0.0)
    lhs, rhs = conjugate_duality_gap(f, f, 1.0, _gap_grid(f, f, 1.0))
    assert lhs == pytest.approx(0.25, abs=1e-7)
    assert rhs == pytest.approx(0.0, abs=1e-15)
    lhs, rhs = conjugate_duality_gap(f, f, 0.0, _gap_grid(f, f, 0.0))
    assert lhs == pytest.approx(0.0, abs=1e-7)
    assert rhs == pytest.approx(0.0, abs=1e-15)


def test_duality_inequality_holds_on_random_pairs():
    rng = np.random.default_rng(101)
    for _ in range(100):
        f1 = ConvexQuadratic(float(rng.uniform(0.1, 3.0)), float(rng.uniform(-2, 2)))
        f2 = ConvexQuadratic(
            float(rng.uniform(0.1, 3.0)), float(rng.uniform(-2, 2)), float(rng.uniform(0, 1.5))
        )
        u = float(rng.uniform(-3, 3))
        lhs, rhs = conjugate_duality_gap(f1, f2, u, _gap_grid(f1, f2, u))
        assert lhs >= rhs - 1e-6


def test_duality_inequality_rejects_nonsmooth_f1():
    f1 = ConvexQuadratic(1.0, 0.0, 0.5)
    f2 = ConvexQuadratic(1.0, 0.0)
    with pytest.raises(ParameterError):
        conjugate_duality_gap(f1, f2, 1.0, np.linspace(-2, 2, 10))
