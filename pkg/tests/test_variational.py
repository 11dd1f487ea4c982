from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from interlace_lab.green_gauge.gauge import gauge_solve
from interlace_lab.green_gauge.potential import equilibrium
from interlace_lab.lattice import Box, LatticeField, SiteSet, build_window, inner_product_N
from interlace_lab.variational.regions import Ball, BoxRegion, Dilation, region_from_spec
from interlace_lab.variational.solvers import (
    DensityOnWindow,
    capacity_scaled,
    duality_matched_potential,
    gamma_N,
    rate_I_N,
    rate_I_v,
    refine,
)

N = 2
W = build_window(Box.cube(0, 1), N)           # 3^3 sites
potentials = arrays(np.float64, 27, elements=st.floats(-4, 4, allow_nan=False))
densities = arrays(np.float64, 27, elements=st.floats(0.05, 4, allow_nan=False))


def test_gamma_of_zero_and_first_order():
    assert gamma_N(LatticeField.constant(W, 0.0), N).value == pytest.approx(0.0, abs=1e-14)
    V = LatticeField.constant(W, 1e-6)
    assert gamma_N(V, N, method="trace").value == pytest.approx(inner_product_N(V, LatticeField.constant(W, 1.0), N), rel=1e-4)


def test_gamma_equals_rescaled_gauge_value():
    d = 3
    V = LatticeField(W, np.linspace(-1.0, 2.0, 27))
    gauge = d * N ** (2 - d) * gauge_solve(V.scaled(1.0 / (d * N**2))).lambda_value
    assert gamma_N(V, N, method="trace").value == pytest.approx(gauge, rel=1e-10)


def test_truncated_and_trace_routes_agree():
    V = LatticeField(W, np.linspace(0.0, 1.5, 27))
    exact = gamma_N(V, N, method="trace")
    trunc = gamma_N(V, N)
    assert trunc.finite and trunc.truncation_radius >= 8
    assert abs(trunc.value - exact.value) <= max(trunc.error_estimate, 1e-6)
    assert abs(trunc.value - exact.value) < abs(trunc.value_R - exact.value)


def test_gamma_supercritical_verdict():
    V = LatticeField.constant(W, 200.0)
    for method in ("trace", "truncated"):
        rep = gamma_N(V, N, method=method)
        assert math.isinf(rep.value) and not rep.finite
        assert rep.min_eigenvalue < 0


def test_truncation_radius_must_cover_the_window():
    with pytest.raises(ValueError):
        gamma_N(LatticeField.constant(W, 0.1), N, R=2)
    with pytest.raises(ValueError):
        gamma_N(LatticeField.constant(W, 0.1), N, method="bogus")


@given(potentials, potentials)
@settings(max_examples=25, deadline=None)
def test_gamma_is_convex(v1, v2):
    a = gamma_N(LatticeField(W, v1), N, method="trace").value
    b = gamma_N(LatticeField(W, v2), N, method="trace").value
    mid = gamma_N(LatticeField(W, 0.5 * (v1 + v2)), N, method="trace").value
    assert mid <= 0.5 * (a + b) + 1e-9 * (1 + abs(a) + abs(b))


def test_rate_function_vanishes_at_the_mean_density():
    one = DensityOnWindow(W, np.ones(27))
    assert rate_I_N(one, N).value == 0.0
    assert rate_I_N(one, N, method="trace").value == pytest.approx(0.0, abs=1e-14)


@given(arrays(np.float64, 27, elements=st.floats(-0.45, 2.0, allow_nan=False)))
@settings(max_examples=25, deadline=None)
def test_rate_function_is_quadratic_in_root_density(psi):
    h = (1 + psi) ** 2
    base = rate_I_N(DensityOnWindow(W, h), N, method="trace").value
    doubled = rate_I_N(DensityOnWindow(W, (1 + 2 * psi) ** 2), N, method="trace").value
    assert base >= 0
    assert doubled == pytest.approx(4 * base, rel=1e-9, abs=1e-12)


@given(potentials, densities)
@settings(max_examples=25, deadline=None)
def test_legendre_inequality(v, h):
    V, dens = LatticeField(W, v), DensityOnWindow(W, h)
    lhs = rate_I_N(dens, N, method="trace").value + gamma_N(V, N, method="trace").value
    assert lhs >= inner_product_N(V, LatticeField(W, h), N) - 1e-8


def test_duality_matched_pair_attains_equality():
    dens = DensityOnWindow(W, np.linspace(0.3, 2.5, 27))
    V = duality_matched_potential(dens, N)
    gap = rate_I_N(dens, N, method="trace").value + gamma_N(V, N, method="trace").value - inner_product_N(V, LatticeField(W, dens.h), N)
    assert abs(gap) < 1e-9
    with pytest.raises(ValueError):
        duality_matched_potential(DensityOnWindow(W, np.zeros(27)), N)


def test_rate_routes_agree_and_exploit_symmetry():
    h = (1 + 0.7 * equilibrium(SiteSet([(1, 1, 1)])).potential(W.coords)) ** 2
    dens = DensityOnWindow(W, h)
    exact = rate_I_N(dens, N, method="trace").value
    trunc = rate_I_N(dens, N)
    # zero exterior values cost extra energy, so truncation overestimates
    assert exact < trunc.refined_value < trunc.value_R
    assert abs(trunc.value - exact) <= trunc.error_estimate
    assert abs(rate_I_N(dens, N, R=24).value - exact) < abs(trunc.value - exact)
    # reflecting the profile through the window center leaves the rate unchanged
    flipped = DensityOnWindow(W, h[W.indices(2 - W.coords)])
    assert rate_I_N(flipped, N, method="trace").value == pytest.approx(exact, rel=1e-12)


@given(densities, st.floats(0.2, 5.0), st.floats(0.2, 5.0))
@settings(max_examples=20, deadline=None)
def test_rate_I_v_homogeneity(h, v, c):
    dens = DensityOnWindow(W, h)
    lhs = rate_I_v(dens.scaled(c), c * v, N, method="trace")
    assert lhs == pytest.approx(c * rate_I_v(dens, v, N, method="trace"), rel=1e-9, abs=1e-12)


def test_capacity_scaled_for_a_point_and_dilations():
    point = BoxRegion(Box.cube(-0.1, 0.1))
    assert capacity_scaled(point, 1) == pytest.approx(3 / 1.516386059151978, rel=1e-12)
    ball = Ball((0.0, 0.0, 0.0), 0.5)
    caps = [capacity_scaled(Dilation(ball, delta), 6) for delta in (0.0, 0.2, 0.4)]
    assert np.all(np.diff(caps) > 0)
    # continuum value 2 pi r for a ball of radius r
    assert capacity_scaled(Ball((0.0, 0.0, 0.0), 1.0), 12) == pytest.approx(2 * math.pi, rel=0.05)
    with pytest.raises(ValueError):
        capacity_scaled(Ball((0.3, 0.3, 0.3), 0.1), 1)


def test_regions():
    ball = Ball((0.0, 0.0, 0.0), 1.0)
    assert ball.contains(np.array([[0.5, 0.5, 0.5], [1.0, 1.0, 0.0]])).tolist() == [True, False]
    assert len(ball.raster(1)) == 7
    dil = ball.dilate(0.5)
    np.testing.assert_allclose(dil.bounds()[1], [1.5, 1.5, 1.5])
    box = region_from_spec({"box": {"lo": [0, 0, 0], "hi": [1, 1, 1]}, "dilate": 0.25})
    assert box.contains(np.array([[1.2, 0.5, 0.5]]))[0]
    with pytest.raises((ValueError, KeyError)):
        region_from_spec({"ball": {"center": [0, 0, 0]}})


def test_refine_extrapolates_first_order_error():
    rep = refine(lambda n: 3.0 + 2.0 / n, 4)
    assert rep.extrapolated == pytest.approx(3.0)
    assert rep.value_2N == pytest.approx(3.25)
