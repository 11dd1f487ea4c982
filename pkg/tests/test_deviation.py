from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from interlace_lab.deviation.disconnect import UnresolvedGeometryError, disconnects, disconnects_refined
from interlace_lab.deviation.experiments import (
    ProfileEvent,
    disconnection_frequency,
    subadditivity_scan,
    wilson_interval,
)
from interlace_lab.deviation.mollify import Grid, GridField, Mollifier, MollificationOperator, mollify
from interlace_lab.deviation.rates import (
    DisconnectionSetup,
    entropy_gap,
    insulation_bounds,
    relative_entropy_tilted,
)
from interlace_lab.interlacement.rng import RngStream
from interlace_lab.interlacement.sampler import AtomicMeasure
from interlace_lab.lattice import Box, build_window
from interlace_lab.variational.regions import Ball

B0 = Box.cube(-1, 1)
GRID = Grid(B0, 0.1)                       # 21^3 nodes
K = Ball((0.0, 0.0, 0.0), 0.25)


def radial_field(fn) -> GridField:
    r = np.linalg.norm(GRID.nodes(), axis=1)
    return GRID.field(fn(r))


# -- mollifier ------------------------------------------------------------------------


@pytest.mark.parametrize("delta,d", [(0.3, 3), (1.0, 3), (0.05, 3), (0.5, 4)])
def test_mollifier_is_a_probability_density(delta, d):
    assert Mollifier(delta, d).total_mass() == pytest.approx(1.0, abs=1e-8)


def test_mollifier_cube_quadrature_mass():
    m = Mollifier(0.4)
    h = 0.4 / 60
    ax = np.arange(-0.4, 0.4 + h / 2, h)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    assert m(pts).sum() * h**3 == pytest.approx(1.0, rel=1e-3)


def test_single_atom_gives_the_kernel():
    mu = AtomicMeasure(1, np.zeros((1, 3)), np.array([2.0]))
    m = Mollifier(0.3)
    f = mollify(mu, m, GRID)
    nodes = f.nodes()
    np.testing.assert_allclose(f.values.reshape(-1), 2.0 * m(nodes), atol=1e-12)
    assert f.values.max() == pytest.approx(2.0 * m.constant)


def _uniform_measure(N, box, level):
    W = build_window(box, N)
    return AtomicMeasure(N, W.coords / N, np.full(len(W), level / N**3))


def test_mollification_is_linear():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (50, 3))
    m1, m2 = rng.random(50), rng.random(50)
    op = MollificationOperator(pts, GRID, Mollifier(0.3))
    np.testing.assert_allclose(op.apply(2 * m1 + 3 * m2), 2 * op.apply(m1) + 3 * op.apply(m2), atol=1e-12)
    both = AtomicMeasure(1, pts[:25], m1[:25]) + AtomicMeasure(1, pts[25:], m1[25:])
    np.testing.assert_allclose(mollify(both, Mollifier(0.3), GRID).values.reshape(-1), op.apply(m1), atol=1e-12)


def test_uniform_profile_mollifies_to_its_level():
    mu = _uniform_measure(16, Box.cube(-2, 2), 3.0)
    f = mollify(mu, Mollifier(0.5), GRID)
    np.testing.assert_allclose(f.values, 3.0, rtol=0.02)


# -- disconnection --------------------------------------------------------------------


def test_constant_fields():
    assert disconnects(radial_field(lambda r: np.full_like(r, 5.0)), 1.0, K)
    assert not disconnects(radial_field(lambda r: np.zeros_like(r)), 1.0, K)


def test_shell_disconnects_and_a_hole_reconnects():
    shell = lambda r: np.where((r > 0.45) & (r < 0.65), 10.0, 0.0)
    f = radial_field(shell)
    assert disconnects(f, 5.0, K)
    holed = f.values.copy().reshape(-1)
    nodes = GRID.nodes()
    tunnel = (np.abs(nodes[:, 1]) < 0.05) & (np.abs(nodes[:, 2]) < 0.05) & (nodes[:, 0] > 0)
    holed[tunnel] = 0.0
    assert not disconnects(GRID.field(holed), 5.0, K)
    # a shell of low values seen with the sublevel convention
    assert disconnects(radial_field(lambda r: 10.0 - shell(r)), 5.0, K, sublevel=True)


def test_shell_of_atoms_is_resolved_at_two_spacings():
    rng = np.random.default_rng(1)
    v = rng.normal(size=(4000, 3))
    pts = 0.55 * v / np.linalg.norm(v, axis=1, keepdims=True)
    mu = AtomicMeasure(1, pts, np.full(4000, 0.02))
    rv = disconnects_refined(mu, Mollifier(0.2), Grid(B0, 0.08), 5.0, K)
    assert rv.verdict and rv.agree


fields = arrays(np.float64, (9, 9, 9), elements=st.floats(0, 10, allow_nan=False))
SMALL = Grid(Box.cube(-1, 1), 0.25)
K_SMALL = Ball((0.0, 0.0, 0.0), 0.3)


@given(fields, st.floats(0, 10), st.floats(0, 10))
@settings(max_examples=60, deadline=None)
def test_verdict_is_monotone_in_level(values, a1, a2):
    lo, hi = sorted((a1, a2))
    f = SMALL.field(values)
    if disconnects(f, hi, K_SMALL):
        assert disconnects(f, lo, K_SMALL)


@given(fields, arrays(np.float64, (9, 9, 9), elements=st.floats(0, 3, allow_nan=False)))
@settings(max_examples=60, deadline=None)
def test_verdict_is_monotone_in_the_field(values, bump):
    if disconnects(SMALL.field(values), 5.0, K_SMALL):
        assert disconnects(SMALL.field(values + bump), 5.0, K_SMALL)


def test_unresolved_geometry():
    with pytest.raises(UnresolvedGeometryError):
        disconnects(Grid(B0, 0.5).field(np.zeros(125)), 1.0, Ball((0.25, 0.25, 0.25), 0.1))
    with pytest.raises(UnresolvedGeometryError):
        disconnects(GRID.field(np.zeros(21**3)), 1.0, Ball((0.9, 0.0, 0.0), 0.05))


# -- rates ----------------------------------------------------------------------------


def test_setup_validation():
    DisconnectionSetup(K, B0, Box.cube(-1.5, 1.5), 0.3, 2.0, 1.0)
    with pytest.raises(ValueError, match="exceed delta"):
        DisconnectionSetup(K, B0, Box.cube(-1.2, 1.2), 0.3, 2.0, 1.0)
    with pytest.raises(ValueError, match="interior"):
        DisconnectionSetup(Ball((0.0, 0.0, 0.0), 1.0), B0, Box.cube(-2, 2), 0.3, 2.0, 1.0)


def test_insulation_bounds_for_the_unit_ball():
    setup = DisconnectionSetup(Ball((0.0, 0.0, 0.0), 1.0), Box.cube(-2, 2), Box.cube(-3, 3), 0.2, 4.0, 1.0)
    lower, upper = insulation_bounds(setup, 12)
    # (sqrt a - sqrt u)^2 cap(K) / d with Brownian capacity 2 pi of the unit ball
    assert upper == pytest.approx(2 * math.pi / 3, rel=0.05)
    assert lower > upper
    assert lower == pytest.approx(2 * math.pi * 1.2 / 3, rel=0.05)
    with pytest.raises(ValueError):
        insulation_bounds(DisconnectionSetup(K, B0, Box.cube(-2, 2), 0.2, 1.0, 1.0), 4)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
@settings(max_examples=100, deadline=None)
def test_entropy_exceeds_large_deviation_cost(v, u):
    ent, ld = entropy_gap(v, u)
    assert ent >= ld - 1e-12 * (1 + ent)
    if abs(v / u - 1) > 1e-3:
        assert ent > ld


def test_entropy_gap_equality_and_errors():
    ent, ld = entropy_gap(2.5, 2.5)
    assert ent == ld == 0.0
    with pytest.raises(ValueError):
        entropy_gap(0.0, 1.0)


def test_relative_entropy_tilted():
    assert relative_entropy_tilted(2.0, 0.5, 1.0, 2.0) == pytest.approx((2.5 * math.log(2.5) - 1.5) * 2.0)
    assert relative_entropy_tilted(1.0, 0.0, 1.0, 3.0) == 0.0
    with pytest.raises(ValueError):
        relative_entropy_tilted(0.5, 0.1, 1.0, 1.0)


# -- experiments ----------------------------------------------------------------------


def test_wilson_interval():
    p = wilson_interval(50, 100)
    assert (p.lo, p.hi) == pytest.approx((0.4038, 0.5962), abs=1e-4)
    z = wilson_interval(0, 200)
    assert z.one_sided and z.lo == 0.0 and z.hi == pytest.approx(1 - 0.05 ** (1 / 200))
    assert wilson_interval(10, 10).hi == pytest.approx(1.0)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_profile_event_targets():
    box = Box.cube(0, 1)
    F, target = ProfileEvent(box, 0.3, ("one", "coord:0"), "lebesgue").matrix(3)
    assert F.shape == (2, 64)
    np.testing.assert_allclose(target, [1.0, 0.5])
    _, mean_target = ProfileEvent(box, 0.3, ("one",), "mean").matrix(3)
    assert mean_target[0] == pytest.approx(64 / 27)
    with pytest.raises(ValueError):
        ProfileEvent(box, 0.3, ("coord:0",))


def test_subadditivity_scan_small():
    event = ProfileEvent(Box.cube(0, 1), 0.5)
    scan = subadditivity_scan(event, 2, [1.0, 2.0], 3000, RngStream(1), threads=2)
    assert [r.t for r in scan.rows] == [1.0, 2.0]
    assert set(scan.flags) == {(1.0, 1.0)}
    for r in scan.rows:
        assert r.f_lo <= r.f_hat <= r.f_hi


def test_disconnection_frequency_plain_and_tilted():
    setup = DisconnectionSetup(K, Box.cube(-0.75, 0.75), Box.cube(-1.1, 1.1), 0.3, 20.0, 10.0)
    plain = disconnection_frequency(setup, 3, None, 40, RngStream(2))
    assert not plain.tilted and plain.frequency == 0.0 and plain.proportion.one_sided
    t1 = disconnection_frequency(setup, 3, 10.0, 40, RngStream(3), threads=1, refine=True)
    t2 = disconnection_frequency(setup, 3, 10.0, 40, RngStream(3), threads=3, refine=True)
    assert t1 == t2
    assert t1.tilted and t1.frequency > 0.0
    assert 0.0 <= t1.refinement_agreement <= 1.0
