from __future__ import annotations

import math

import numpy as np
import pytest

from interlace_lab.green_gauge.gauge import gauge_solve
from interlace_lab.green_gauge.potential import equilibrium
from interlace_lab.interlacement.laplace import mc_laplace, summarize_exponents
from interlace_lab.interlacement.rng import RngStream
from interlace_lab.interlacement.sampler import WindowSampler
from interlace_lab.interlacement.tilted import TiltedSampler, TiltParameters, sample_tilted
from interlace_lab.lattice import Box, LatticeField, SiteSet, build_window

CUBE2 = build_window(Box.cube(0, 1), 1)
CUBE3 = build_window(Box.cube(-1, 1), 1)
CENTER = SiteSet([(0, 0, 0)])


@pytest.fixture(scope="module")
def sampler3():
    return WindowSampler(CUBE3)


def test_zero_potential_is_exactly_zero():
    est = mc_laplace(LatticeField.constant(CUBE2, 0.0), 2, 1.0, 10, RngStream(0))
    assert est.estimate == 0.0 and est.stderr == 0.0


def test_monte_carlo_matches_gauge_on_a_small_window():
    N, d, u = 2, 3, 1.5
    V = LatticeField(CUBE2, np.linspace(0.0, 0.6, 8))
    est = mc_laplace(V, N, u, 200_000, RngStream(1), threads=4)
    exact = d * N ** (2 - d) * gauge_solve(V.scaled(1.0 / (d * N**2))).lambda_value
    assert abs(est.estimate - exact) < 4 * est.stderr
    assert not est.heavy_tail


def test_first_order_term_is_the_mean_potential():
    N = 2
    V = LatticeField.constant(CUBE2, 1e-4)
    est = mc_laplace(V, N, 1.0, 50_000, RngStream(2))
    assert est.estimate == pytest.approx(8e-4 / N**3, rel=1e-2)


def test_summary_of_exponents():
    flat = summarize_exponents(np.full(100, 0.3), 2.0)
    assert flat.estimate == pytest.approx(0.6) and flat.stderr == pytest.approx(0.0, abs=1e-15)
    X = np.zeros(1000)
    X[0] = 50.0
    assert summarize_exponents(X, 1.0).heavy_tail
    with pytest.raises(OverflowError):
        summarize_exponents(np.array([0.0, np.inf]), 1.0)


def test_mc_laplace_input_checks(sampler3):
    V = LatticeField.constant(CUBE2, 0.1)
    with pytest.raises(ValueError):
        mc_laplace(V, 1, 0.0, 10, RngStream(0))
    with pytest.raises(ValueError):
        mc_laplace(V, 1, 1.0, 10, RngStream(0), sampler=sampler3)


def test_untilted_level_gives_zero_ratio(sampler3):
    ts = TiltedSampler(sampler3, CENTER, u=2.0, a=1.5, eps=0.5)
    assert ts.params.lam == 0.0
    _, _, ratio = ts.sample_many(200, RngStream(3))
    np.testing.assert_array_equal(ratio, 0.0)


def test_log_ratio_formula():
    p = TiltParameters(u=1.0, a=2.0, eps=1.0, cap_obstacle=0.5)
    assert p.level == 3.0
    assert p.log_ratio(np.array([4]))[0] == pytest.approx(4 * math.log(3) - 0.5 * 2.0)


def test_tilted_intensities_and_weights(sampler3):
    u, a, eps = 1.0, 2.0, 1.0
    K = CENTER
    ts = TiltedSampler(sampler3, K, u, a, eps)
    cap_K = equilibrium(K).capacity
    n = 40_000
    L, eta, ratio = ts.sample_many(n, RngStream(4), threads=4)
    # trajectory count: base level plus the extra obstacle-visiting ones
    mean_eta = u * sampler3.capacity + (a + eps - u) * cap_K
    assert abs(eta.mean() - mean_eta) < 4 * math.sqrt(mean_eta / n)
    # obstacle-visiting trajectories are Poisson((a + eps) cap K) under the tilt
    p = ts.params
    eta_K = (ratio + u * cap_K * (math.exp(p.lam) - 1)) / p.lam
    np.testing.assert_allclose(eta_K, np.round(eta_K), atol=1e-9)
    assert abs(eta_K.mean() - (a + eps) * cap_K) < 4 * math.sqrt((a + eps) * cap_K / n)
    # likelihood ratio dP/dP~ integrates to one under the tilt
    w = np.exp(-ratio)
    assert abs(w.mean() - 1.0) < 4 * w.std() / math.sqrt(n)
    # obstacle sites are occupied at the tilted level a + eps
    Lc = L[:, CUBE3.index((0, 0, 0))]
    assert abs(Lc.mean() - (a + eps)) < 4 * Lc.std() / math.sqrt(n)


def test_sample_tilted_single_draw(sampler3):
    occ, r = sample_tilted(sampler3, CENTER, 1.0, 2.0, 0.0, RngStream(5))
    assert occ.window == CUBE3 and isinstance(r, float)


def test_tilted_input_checks(sampler3):
    with pytest.raises(ValueError):
        TiltedSampler(sampler3, CENTER, 1.0, 0.2, 0.1)
    with pytest.raises(ValueError):
        TiltedSampler(sampler3, SiteSet([(9, 9, 9)]), 1.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        TiltedSampler(sampler3, CENTER, 0.0, 2.0, 0.0)
