from __future__ import annotations

import math

import numpy as np
import pytest

from rlab.phases import (
    FreqRegion,
    PhaseModel,
    PhaseSingularityError,
    Rescale,
    assumption_report,
    cone_transversality_margin,
    curvature_margin_on_sigma,
    derivative_sup,
    eval_phase_suite,
    natural_shifts,
    sigma_solve,
    transversality_margin,
)
from rlab.util import make_rng


def _fd_gradient(model, xi, h=1e-6):
    xi = np.asarray(xi, dtype=float)
    g = np.zeros_like(xi)
    for i in range(xi.size):
        e = np.zeros_like(xi)
        e[i] = h
        g[i] = (model.value(xi + e) - model.value(xi - e)) / (2 * h)
    return g


def _fd_hessian(model, xi, h=1e-5):
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    out = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        out[i] = (model.gradient(xi + e) - model.gradient(xi - e)) / (2 * h)
    return 0.5 * (out + out.T)


MODELS = [
    PhaseModel("schroedinger"),
    PhaseModel("schroedinger", sign=-1),
    PhaseModel("klein_gordon", mass=1.0),
    PhaseModel("klein_gordon", mass=0.0),
    PhaseModel("klein_gordon", mass=2.0, sign=-1),
    PhaseModel("klein_gordon", mass=1.0, rescale=Rescale.thin_slab(0.25, 8.0, 2)),
    PhaseModel("klein_gordon", mass=1.0, sign=-1, rescale=Rescale.thin_slab(0.25, 8.0, 2)),
    PhaseModel(
        "klein_gordon",
        mass=1.0,
        sign=-1,
        rescale=Rescale.long_tube(1 / 64, 4.0, 4.0, 2, drift=(0.1, -0.05)),
    ),
]


def test_known_values():
    kg0 = PhaseModel("klein_gordon", mass=0.0)
    v, g, h = eval_phase_suite(kg0, np.array([3.0, 4.0]))
    assert v == pytest.approx(5.0)
    assert np.allclose(g, [0.6, 0.8])
    sch = PhaseModel("schroedinger")
    v, g, h = eval_phase_suite(sch, np.array([1.0, 0.0]))
    assert v == pytest.approx(0.5)
    assert np.allclose(g, [1.0, 0.0])
    assert np.allclose(h, np.eye(2))
    kg1 = PhaseModel("klein_gordon", mass=1.0)
    v, g, h = eval_phase_suite(kg1, np.zeros(2))
    assert v == pytest.approx(1.0)
    assert np.allclose(g, 0.0)
    assert np.allclose(h, np.eye(2))  # 1/<0> = 1 on the diagonal


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}/m{m.mass}/s{m.sign}"
                         + ("/resc" if m.rescale else ""))
def test_gradient_and_hessian_match_finite_differences(model):
    rng = make_rng(11)
    for _ in range(6):
        xi = rng.uniform(-1.5, 1.5, size=2)
        if model.mass == 0.0 and np.linalg.norm(xi) < 0.3:
            xi = xi + 2.0
        g = model.gradient(xi)
        h = model.hessian(xi)
        assert np.allclose(g, _fd_gradient(model, xi), rtol=1e-5, atol=1e-7)
        assert np.allclose(h, _fd_hessian(model, xi), rtol=1e-4, atol=1e-5)
        assert np.allclose(h, h.T, atol=1e-12)


def test_vectorized_matches_pointwise():
    model = PhaseModel("klein_gordon", mass=1.0, rescale=Rescale.thin_slab(0.5, 4.0, 2))
    rng = make_rng(3)
    pts = rng.uniform(-1.0, 1.0, size=(17, 2))
    vals = model.value(pts)
    grads = model.gradient(pts)
    hess = model.hessian(pts)
    for k in range(17):
        assert vals[k] == pytest.approx(model.value(pts[k]))
        assert np.allclose(grads[k], model.gradient(pts[k]))
        assert np.allclose(hess[k], model.hessian(pts[k]))


def test_massless_singularity_raises():
    kg0 = PhaseModel("klein_gordon", mass=0.0)
    with pytest.raises(PhaseSingularityError):
        kg0.gradient(np.zeros(2))
    with pytest.raises(PhaseSingularityError):
        kg0.hessian(np.zeros(3))


def test_schroedinger_rejects_rescale():
    with pytest.raises(ValueError, match="klein_gordon"):
        PhaseModel("schroedinger", rescale=Rescale.thin_slab(0.5, 4.0, 2))


def test_bad_kind_rejected():
    with pytest.raises(ValueError, match="unknown phase kind"):
        PhaseModel("airy")


def test_rescaled_symbol_stays_order_one():
    # the whole point of the change of variables: O(1) values and unit-size
    # derivatives on the unit ball of the new variables
    for alpha, lam in [(1 / 4, 8.0), (1 / 8, 32.0), (1 / 16, 128.0)]:
        model = PhaseModel(
            "klein_gordon", mass=1.0, sign=-1, rescale=Rescale.thin_slab(alpha, lam, 2)
        )
        rng = make_rng(5)
        pts = rng.uniform(-1 / 16, 1 / 16, size=(200, 2))
        rel = model.value(pts) - model.value(np.zeros(2))
        assert np.max(np.abs(rel)) < 4.0
        eigs = np.linalg.eigvalsh(model.hessian(pts))
        assert np.max(np.abs(eigs)) < 4.0
        assert np.max(np.abs(eigs)) > 0.05


def test_derivative_sup_klein_gordon_unit_mass():
    region = FreqRegion.ball(np.zeros(2), 2.0)
    model = PhaseModel("klein_gordon", mass=1.0)
    sup = derivative_sup(model, region, order=2, n_samples=500, seed=1)
    # |grad| <= 2/sqrt(5) < 1 and Hessian entries <= 1
    assert 0.5 < sup <= 1.5
    sup4 = derivative_sup(model, region, order=4, n_samples=500, seed=1)
    assert sup4 >= sup
    assert sup4 < 20.0


def test_derivative_sup_schroedinger():
    region = FreqRegion.ball(np.zeros(2), 3.0)
    sup = derivative_sup(PhaseModel("schroedinger"), region, order=3, n_samples=400, seed=0)
    assert sup == pytest.approx(3.0, abs=0.05)  # |grad| = |xi| dominates


# -- regions ------------------------------------------------------------------


@pytest.mark.parametrize(
    "region",
    [
        FreqRegion.ball([0.5, -0.25], 0.75),
        FreqRegion.annulus([0.0, 0.0], 1.0, 2.0),
        FreqRegion.cap_sector([1.0, 1.0], 0.4, 0.5, 1.5),
        FreqRegion.cap_sector([0.0, 0.0, 1.0], 0.3, 1.0, 2.0),
        FreqRegion.box([1.0, 2.0], [0.5, 0.25]),
        FreqRegion.ball([0.0, 0.0, 0.0], 1.0),
    ],
    ids=["ball", "annulus", "cap2", "cap3", "box", "ball3"],
)
def test_samples_lie_inside_and_diameter_dominates(region):
    rng = make_rng(9)
    pts = region.sample(400, rng)
    assert pts.shape == (400, region.dim)
    assert np.all(region.contains(pts))
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    assert np.max(d) <= region.diameter() + 1e-9
    # diameter should not wildly overshoot what samples realize
    assert np.max(d) >= 0.5 * region.diameter()


def test_wide_cap_diameter_is_two_router():
    region = FreqRegion.cap_sector([1.0, 0.0], 2.0, 0.5, 1.5)
    assert region.diameter() == pytest.approx(3.0)


def test_region_validation():
    with pytest.raises(ValueError):
        FreqRegion.annulus([0.0, 0.0], 2.0, 1.0)
    with pytest.raises(ValueError):
        FreqRegion.cap_sector([0.0, 0.0], 0.3, 0.5, 1.5)
    with pytest.raises(ValueError):
        FreqRegion.box([0.0, 0.0], [1.0, -1.0])


# -- transversality -----------------------------------------------------------


def test_transversality_separated_schroedinger_balls():
    m = PhaseModel("schroedinger")
    r1 = FreqRegion.ball([0.75, 0.0], 0.125)
    r2 = FreqRegion.ball([-0.75, 0.0], 0.125)
    margin = transversality_margin(m, m, r1, r2, n_samples=400, seed=0)
    # gradients are the points themselves: separation is at least 1.25
    assert margin >= 1.25
    assert margin <= 1.5


def test_transversality_identical_setup_is_exactly_zero():
    m = PhaseModel("klein_gordon", mass=1.0)
    r = FreqRegion.ball([1.0, 0.0], 0.5)
    assert transversality_margin(m, m, r, r, n_samples=100, seed=4) == 0.0


def test_transversality_massless_vs_massive_matches_grid_oracle():
    m0 = PhaseModel("klein_gordon", mass=0.0)
    m1 = PhaseModel("klein_gordon", mass=1.0)
    shell = FreqRegion.annulus([0.0, 0.0], 0.95, 1.05)
    margin = transversality_margin(m0, m1, shell, shell, n_samples=900, seed=2)

    # oracle: dense polar grid minimization of |xi/|xi| - eta/<eta>|
    th = np.linspace(0, 2 * math.pi, 181)
    rr = np.linspace(0.95, 1.05, 9)
    t, r = np.meshgrid(th, rr, indexing="ij")
    pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=-1).reshape(-1, 2)
    g0 = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    g1 = pts / np.sqrt(1.0 + np.sum(pts**2, axis=-1))[:, None]
    d = g0[:, None, :] - g1[None, :, :]
    oracle = float(np.min(np.linalg.norm(d, axis=-1)))

    assert margin == pytest.approx(oracle, abs=0.02)
    # analytic: aligned directions, massive frequency at the outer radius,
    # 1 - 1.05/sqrt(1 + 1.05^2) = 1 - 1.05/1.45 = 8/29
    assert oracle == pytest.approx(8.0 / 29.0, abs=1e-6)


def test_transversality_empty_samples_rejected():
    m = PhaseModel("schroedinger")
    r = FreqRegion.ball([0.0, 0.0], 1.0)
    with pytest.raises(ValueError, match="positive"):
        transversality_margin(m, m, r, r, n_samples=0)


# -- resonance surface and curvature ------------------------------------------


def test_sigma_solve_fixed_point_on_surface():
    m1 = PhaseModel("klein_gordon", mass=1.0)
    m2 = PhaseModel("klein_gordon", mass=1.0)
    xi = np.array([0.7, -0.3])
    eta = np.array([-0.2, 0.4])
    h = (float(m1.value(xi) - m2.value(eta)), tuple(xi - eta))
    out = sigma_solve(m1, m2, h, xi, tol=1e-12)
    assert np.allclose(out, xi, atol=1e-12)


def test_sigma_solve_travel_is_proportional_to_residual():
    m1 = PhaseModel("klein_gordon", mass=1.0)
    m2 = PhaseModel("klein_gordon", mass=0.5)
    h = (0.3, (0.8, 0.1))
    rng = make_rng(6)
    for _ in range(10):
        xi0 = rng.uniform(-1.0, 1.0, size=2)
        f0 = float(m1.value(xi0) - m2.value(xi0 - np.asarray(h[1])) - h[0])
        out = sigma_solve(m1, m2, h, xi0, tol=1e-10)
        # oracle: dense small-step gradient flow from the same start
        xi = xi0.copy()
        travel = 0.0
        for _ in range(200_000):
            f = float(m1.value(xi) - m2.value(xi - np.asarray(h[1])) - h[0])
            if abs(f) <= 1e-10:
                break
            g = m1.gradient(xi) - m2.gradient(xi - np.asarray(h[1]))
            gn = np.linalg.norm(g)
            step = min(abs(f) / gn, 1e-3)
            xi = xi - math.copysign(step, f) * g / gn
            travel += step
        assert abs(f) <= 1e-10, "oracle flow failed to land"
        net = float(np.linalg.norm(out - xi0))
        assert net <= 2.0 * max(travel, abs(f0)) + 1e-9
        # landing residual is tiny and the step bound |F0| / min|grad| holds
        assert abs(m1.value(out) - m2.value(out - np.asarray(h[1])) - h[0]) <= 1e-10


def test_sigma_solve_reports_nonconvergence_when_no_zero_exists():
    m1 = PhaseModel("klein_gordon", mass=1.0)
    m2 = PhaseModel("klein_gordon", mass=1.0)
    # |Phi1 - Phi2| <= |h| < a, so the residual can never vanish
    h = (10.0, (0.5, 0.0))
    with pytest.raises(ValueError, match="did not converge"):
        sigma_solve(m1, m2, h, np.array([0.3, 0.2]))


def test_curvature_margin_schroedinger_is_exactly_one():
    m = PhaseModel("schroedinger")
    r1 = FreqRegion.ball([0.75, 0.0], 0.25)
    r2 = FreqRegion.ball([-0.75, 0.0], 0.25)
    for a, hv in natural_shifts(m, m, r1, r2, count=3, seed=8):
        margin = curvature_margin_on_sigma(m, m, r1, r2, (a, hv), n_samples=200, seed=1)
        if math.isinf(margin):
            continue
        # chord quotient of |xi|^2/2 is identically 1
        assert margin == pytest.approx(1.0, abs=1e-8)


def test_curvature_margin_klein_gordon_annulus_lower_bound():
    m = PhaseModel("klein_gordon", mass=1.0)
    r1 = FreqRegion.annulus([0.0, 0.0], 1.0, 2.0)
    r2 = FreqRegion.annulus([0.0, 0.0], 1.0, 2.0)
    shifts = natural_shifts(m, m, r1, r2, count=4, seed=3)
    found = False
    for a, hv in shifts:
        margin = curvature_margin_on_sigma(m, m, r1, r2, (a, hv), n_samples=300, seed=2)
        if math.isinf(margin):
            continue
        found = True
        # chord quotient >= min eigenvalue of the Hessian on the convex hull
        # (disk of radius 2): 1/<2>^3 = 5^{-3/2}
        assert margin >= 5.0**-1.5 - 1e-6
        assert margin <= 1.0
    assert found


def test_curvature_margin_empty_surface_is_inf():
    m = PhaseModel("klein_gordon", mass=1.0)
    r1 = FreqRegion.ball([2.0, 0.0], 0.1)
    r2 = FreqRegion.ball([-2.0, 0.0], 0.1)
    # a = 10 is unreachable: |Phi1 - Phi2| is far smaller on these regions
    margin = curvature_margin_on_sigma(m, m, r1, r2, (10.0, (4.0, 0.0)), n_samples=50, seed=0)
    assert math.isinf(margin)


def test_natural_shifts_always_land_on_surface():
    m1 = PhaseModel("klein_gordon", mass=1.0)
    m2 = PhaseModel("schroedinger")
    r1 = FreqRegion.ball([1.5, 0.0], 0.3)
    r2 = FreqRegion.ball([-0.5, 0.5], 0.3)
    for a, hv in natural_shifts(m1, m2, r1, r2, count=6, seed=0):
        margin = curvature_margin_on_sigma(m1, m2, r1, r2, (a, hv), n_samples=200, seed=5)
        assert not math.isinf(margin)


# -- assumption report ---------------------------------------------------------


def test_assumption_report_separated_schroedinger():
    m = PhaseModel("schroedinger")
    r1 = FreqRegion.ball([0.75, 0.0], 0.125)
    r2 = FreqRegion.ball([-0.75, 0.0], 0.125)
    rep = assumption_report(m, m, r1, r2, n_der=3, n_samples=200, seed=0)
    assert rep.assumption_ok
    assert rep.a1_margin >= 1.25
    assert rep.a2_margin == pytest.approx(1.0, abs=1e-7)
    assert rep.d1_estimate == 0.5 * rep.a1_margin * rep.a2_margin  # exact identity
    # diameters sum to 0.5 > a1*a2/8 ~ 0.17: the sufficient smallness test fails
    # even though the margins themselves are healthy
    assert not rep.diam_condition_ok
    assert rep.d2_bound <= 1.1
    assert "OK" in rep.summary()


def test_assumption_report_diameter_condition_for_tiny_balls():
    m = PhaseModel("schroedinger")
    r1 = FreqRegion.ball([0.75, 0.0], 1 / 64)
    r2 = FreqRegion.ball([-0.75, 0.0], 1 / 64)
    rep = assumption_report(m, m, r1, r2, n_der=3, n_samples=150, seed=0)
    # diameters sum to 1/16, threshold a1*a2/8 ~ 0.18
    assert rep.diam_condition_ok
    assert rep.assumption_ok


def test_assumption_report_flags_identical_setup():
    m = PhaseModel("klein_gordon", mass=1.0)
    r = FreqRegion.ball([0.5, 0.0], 0.25)
    rep = assumption_report(m, m, r, r, n_samples=150, seed=1)
    assert not rep.assumption_ok
    assert rep.a1_margin == 0.0
    assert "transversality" in rep.failures


def test_assumption_report_well_separated_masses():
    m1 = PhaseModel("klein_gordon", mass=0.01)
    m2 = PhaseModel("klein_gordon", mass=1.0)
    shell = FreqRegion.annulus([0.0, 0.0], 0.95, 1.05)
    rep = assumption_report(m1, m2, shell, shell, n_samples=250, seed=2)
    assert rep.a1_margin > 0.2
    assert rep.a2_margin > 0.0
    assert rep.assumption_ok


# -- cone transversality --------------------------------------------------------


def test_cone_transversality_positive_for_separated_phases():
    # level set of Phi(xi) - Phi(xi - h) is the plane xi_1 = 0.483; its cone
    # chords have first-coordinate ratio 0.483 while the characteristic
    # directions over the ball keep eta_1 >= 0.8, so no chord aligns
    m = PhaseModel("schroedinger")
    eta_region = FreqRegion.ball([1.0, 0.0], 0.2)
    h = (0.1, (0.3, 0.0))
    margin = cone_transversality_margin(m, m, h, eta_region, n_samples=100, seed=0)
    assert margin > 0.0


def test_cone_transversality_needs_two_points():
    mj = PhaseModel("klein_gordon", mass=1.0)
    mk = PhaseModel("klein_gordon", mass=1.0)
    eta_region = FreqRegion.ball([2.0, 0.0], 0.05)
    # unreachable level set: no cone points at all
    with pytest.raises(ValueError, match="fewer than 2"):
        cone_transversality_margin(mk, mj, (10.0, (0.1, 0.0)), eta_region, n_samples=40, seed=1)
