import math

import numpy as np
import pytest

from pspin_complexity.constants import c1
from pspin_complexity.freeconv import BIANE_DENSITY_CAP
from pspin_complexity.functional import (
    FunctionalError,
    complexity_I,
    constraint_value,
    functional_value,
    phi,
    psi,
    variational_upper_bound,
    w_envelope,
)
from pspin_complexity.measure import (
    GridMeasure,
    dilate,
    gaussian_grid_measure,
    moment,
    symmetric_grid,
)


def smooth_random_measure(rng, grid_max=3.0, n=201, width=9):
    nodes, delta = symmetric_grid(grid_max, n)
    w = rng.dirichlet(np.ones(n))
    w = np.convolve(w, np.ones(width) / width, mode="same")
    w *= np.exp(-0.5 * nodes**2)
    w /= w.sum()
    return GridMeasure(nodes, w, delta)


def test_phi_t_zero_convention(paper_potential):
    mu = gaussian_grid_measure(1.0)
    assert phi(0.0, mu, paper_potential) == (0.0, 0.0, -0.5)
    with pytest.raises(FunctionalError):
        phi(-0.5, mu, paper_potential)


def test_phi_gaussian_moment_oracle(quartic_p2):
    # E[X V'(X)] = 4 E[X^4] = 12, E[V'(X)^2] = 16 E[X^6] = 240 for V = x^4
    mu = gaussian_grid_measure(1.0, grid_max=8.0, n_nodes=4001)
    # phi1/phi2 are K-free; a small K keeps the phi3 solve out of the way
    p1, p2, _ = phi(1.0, mu, quartic_p2, K=10.0, n_core=601, eta_final=1e-3)
    assert abs(p1 - 18.0) <= 0.18
    assert abs(p2 - 60.0) <= 0.6


def test_phi3_truncation_gap_shrinks(paper_potential):
    mu = gaussian_grid_measure(1.0, grid_max=6.0, n_nodes=801)
    _, _, p3_inf = phi(1.0, mu, paper_potential)
    gaps = []
    for K in (10.0, 50.0, 250.0):
        _, _, p3k = phi(1.0, mu, paper_potential, K=K)
        gaps.append(abs(p3k - p3_inf))
    assert gaps[0] > gaps[1] > gaps[2]


def test_complexity_small_t_limit(quartic_sextic_p3):
    mu = gaussian_grid_measure(0.05, n_nodes=1201)
    fv = complexity_I(mu, quartic_sextic_p3, n_core=2001)
    assert abs(fv.total - 0.5 * math.log(2.0)) <= 0.05


def test_kl_radial_cancellation(quartic_sextic_p3):
    for t in (0.3, 1.1):
        mu = gaussian_grid_measure(t, grid_max=6.0 * t, n_nodes=801)
        fv = complexity_I(mu, quartic_sextic_p3, n_core=801, eta_final=1e-3)
        assert abs(fv.kl + fv.radial_term) <= 1e-4
        assert fv.phi1 >= 0 and fv.phi2 >= 0
        want_total = (
            0.5 * math.log(2.0)
            + 0.5
            + fv.phi1
            - fv.phi2
            + fv.phi3
            - fv.kl
            - fv.radial_term
        )
        assert abs(fv.total - want_total) <= 1e-12


def test_reduction_bridge_random_measures(paper_potential, rng):
    # complexity_I asserts the dilation-bridge identity internally at 1e-6
    for _ in range(8):
        mu = smooth_random_measure(rng)
        fv = complexity_I(mu, paper_potential, n_core=801, eta_final=1e-3)
        assert math.isfinite(fv.total)


def test_bridge_matches_two_argument_form(paper_potential, rng):
    mu = smooth_random_measure(rng)
    t = math.sqrt(moment(mu, 2.0))
    direct = complexity_I(mu, paper_potential, n_core=1201)
    scaled = functional_value(t, dilate(mu, 1.0 / t), paper_potential, n_core=1201)
    assert scaled.radial_term == 0.0
    assert abs((direct.total) - scaled.total) <= 1e-6


def test_zero_variance_rejected(paper_potential):
    nodes, delta = symmetric_grid(1.0, 11)
    w = np.zeros(11)
    w[5] = 1.0
    mu = GridMeasure(nodes, w, delta)
    with pytest.raises(FunctionalError):
        complexity_I(mu, paper_potential)


def test_w_cap_bounds_total(paper_potential, rng):
    cap = variational_upper_bound(paper_potential)
    for _ in range(3):
        mu = smooth_random_measure(rng)
        fv = complexity_I(mu, paper_potential, n_core=801, eta_final=1e-3)
        assert fv.total <= cap + 1e-6
    x = np.linspace(0, 50, 501)
    assert np.max(w_envelope(paper_potential, x)) <= cap + 1e-12


def test_phi3_K_bounds(paper_potential, rng):
    K = 25.0
    cap = BIANE_DENSITY_CAP * 1.05
    for _ in range(3):
        mu = smooth_random_measure(rng)
        t = math.sqrt(moment(mu, 2.0))
        _, _, p3 = phi(t, mu, paper_potential, K=K, n_core=1201, eta_final=1e-3)
        assert -4.0 * cap <= p3 <= 4.0 * cap + 2.0 * c1(paper_potential.p) * K + 4.0


def test_psi_monotonicity(paper_potential):
    xs = np.linspace(0.0, 4.0, 200)
    for t in (0.3, 1.0, 2.0):
        vals = psi(t, xs, paper_potential)
        assert np.all(np.diff(vals) >= -1e-12)
        neg = psi(t, -xs, paper_potential)
        assert np.array_equal(vals, neg)
    ts = np.linspace(0.05, 3.0, 100)
    for x in (0.5, 1.0, 2.5):
        vals = np.array([psi(t, x, paper_potential) for t in ts])
        assert np.all(np.diff(vals) >= -1e-12)
    assert psi(0.0, 1.0, paper_potential) == 0.0


def test_cauchy_schwarz_structure(paper_potential, rng):
    from pspin_complexity.potential import eval_potential

    for _ in range(10):
        mu = smooth_random_measure(rng)
        t = rng.uniform(0.3, 1.5)
        _, v1, _ = eval_potential(paper_potential, t * mu.nodes)
        lhs = float(np.sum(mu.weights * mu.nodes * v1)) ** 2
        rhs = moment(mu, 2.0) * float(np.sum(mu.weights * v1 * v1))
        assert lhs <= rhs + 1e-9


def test_constraint_values(quartic_p2):
    nodes, delta = symmetric_grid(2.0, 401)
    w = np.zeros(nodes.size)
    w[nodes.size // 2] = 1.0
    mu = GridMeasure(nodes, w, delta)
    assert constraint_value(mu, quartic_p2) == 0.0
    gauss = gaussian_grid_measure(1.0, grid_max=8.0, n_nodes=4001)
    # integrand for V = x^4, p = 2 is x^4 itself
    assert abs(constraint_value(gauss, quartic_p2) - 3.0) <= 0.03


def test_constraint_monotone_in_dilation(paper_potential):
    mu = gaussian_grid_measure(0.6, grid_max=6.0, n_nodes=1001)
    vals = [constraint_value(dilate(mu, a), paper_potential) for a in (1.0, 1.2, 1.5, 2.0)]
    assert all(vals[i] < vals[i + 1] for i in range(len(vals) - 1))
