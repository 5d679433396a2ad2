import math

import numpy as np
import pytest
from scipy.integrate import quad

from pspin_complexity.constants import c1, c2
from pspin_complexity.kacrice import (
    KacRiceError,
    _count_roots_1d,
    _newton_roots_n2,
    build_hessian_model,
    count_critical_points,
    covariance_test,
    determinant_reduction_check,
    expected_abs_det,
    expected_crt,
    folded_abs_mean,
    kac_rice_integrand,
    v_vector,
)
from pspin_complexity.potential import eval_potential


def random_sigma(rng, n, lo=0.3, hi=2.0):
    mags = rng.uniform(lo, hi, n)
    return mags * rng.choice([-1.0, 1.0], n)


def test_worked_example_vector_and_mean(quartic_p2):
    sig = np.array([math.sqrt(2.0), math.sqrt(2.0)])
    ig = kac_rice_integrand(sig, quartic_p2)
    assert np.allclose(ig.v, [16.0, 16.0], atol=1e-12)
    assert ig.inner > 0
    model = build_hessian_model(sig, quartic_p2)
    assert model.mean_part.shape == (1, 1)
    assert abs(model.mean_part[0, 0] - 24.0 / math.sqrt(2.0)) <= 1e-10
    assert np.allclose(model.basis.T @ model.basis, np.eye(1), atol=1e-12)
    assert abs(float((model.basis.T @ sig)[0])) <= 1e-12


def test_basis_choice_leaves_spectrum_invariant(paper_potential, rng):
    sig = random_sigma(rng, 5)
    model = build_hessian_model(sig, paper_potential)
    # alternative completion via QR with a shuffled seed matrix
    u = sig / np.linalg.norm(sig)
    raw = np.concatenate([u[:, None], rng.standard_normal((5, 4))], axis=1)
    q, _ = np.linalg.qr(raw)
    basis2 = q[:, 1:]
    p = paper_potential.p
    avg = np.linalg.norm(sig) / math.sqrt(5)
    _, _, v2 = eval_potential(paper_potential, sig)
    v = v_vector(sig, paper_potential)
    core = c1(p) * np.diag(v2 / avg ** (p - 2)) - np.outer(v, v) / (
        float(sig @ v) * avg ** (p - 2)
    )
    alt = basis2.T @ core @ basis2
    e1 = np.linalg.eigvalsh(model.mean_part)
    e2 = np.linalg.eigvalsh(0.5 * (alt + alt.T))
    assert np.max(np.abs(e1 - e2)) <= 1e-10


def test_mean_part_eigenvalue_lower_bound(paper_potential, rng):
    p = paper_potential.p
    for _ in range(50):
        n = int(rng.integers(2, 7))
        sig = random_sigma(rng, n)
        model = build_hessian_model(sig, paper_potential)
        avg = np.linalg.norm(sig) / math.sqrt(n)
        _, v1, _ = eval_potential(paper_potential, sig)
        ratio = np.where(np.abs(sig) > 0, v1 / sig, 0.0)
        bound = c2(p) * avg ** (2 - p) * float(np.min(ratio))
        lam_min = float(np.linalg.eigvalsh(model.mean_part)[0])
        assert lam_min >= bound - 1e-9


def test_f_n_sandwich_exact(paper_potential, rng):
    p = paper_potential.p
    for _ in range(50):
        n = int(rng.integers(2, 8))
        sig = random_sigma(rng, n)
        ig = kac_rice_integrand(sig, paper_potential)
        avg = np.linalg.norm(sig) / math.sqrt(n)
        _, v1, _ = eval_potential(paper_potential, sig)
        base = (float(np.sum(np.asarray(v1) ** 2)) / n) / avg ** (2 * p - 2)
        assert base - 1e-9 * abs(base) <= ig.f_N <= p * base + 1e-9 * abs(base)


def test_inner_product_positive_with_growth_bound(paper_potential, rng):
    # <sigma, v> >= cb^{-1} c1 (q - p) N |||sigma|||_{q1}^{q1}
    p = paper_potential.p
    q = paper_potential.q_curv
    cb = paper_potential.c_bound
    for _ in range(30):
        n = int(rng.integers(2, 7))
        sig = random_sigma(rng, n)
        ig = kac_rice_integrand(sig, paper_potential)
        q1_norm = float(np.mean(np.abs(sig) ** paper_potential.q1))
        bound = c1(p) * (q - p) / cb * n * q1_norm
        assert ig.inner >= bound - 1e-12


def test_omega_inclusion_pointwise(paper_potential, rng):
    # constraint(sigma) >= c4 |||sigma|||_2^{q1}, c4 = cb^{-1}(q/p - 1),
    # which gives Omega(u) containing {|||sigma|||_2 >= (u/c4)^{1/q1}}
    p = paper_potential.p
    q = paper_potential.q_grad
    c4 = (q / p - 1.0) / paper_potential.c_bound
    for _ in range(50):
        n = int(rng.integers(2, 8))
        sig = random_sigma(rng, n, lo=0.05, hi=3.0)
        ig = kac_rice_integrand(sig, paper_potential)
        avg = np.linalg.norm(sig) / math.sqrt(n)
        assert ig.omega_membership >= c4 * avg**paper_potential.q1 - 1e-12


def test_folded_normal_values():
    assert abs(folded_abs_mean(0.0, 1.0) - math.sqrt(2.0 / math.pi)) <= 1e-12
    # frozen from the closed form m(1 - 2 Phi(-m/s)) + 2 s phi(m/s)
    assert abs(folded_abs_mean(3.0, 1.0) - 3.000764308634096) <= 1e-12
    assert folded_abs_mean(-3.0, 1.0) == folded_abs_mean(3.0, 1.0)


def test_expected_abs_det_scalar_case(quartic_p2, seed):
    sig = np.array([math.sqrt(2.0), math.sqrt(2.0)])
    model = build_hessian_model(sig, quartic_p2)
    mean, stderr = expected_abs_det(model, samples=3000, seed=seed)
    closed = folded_abs_mean(float(model.mean_part[0, 0]), 1.0)
    assert abs(mean - closed) <= 3 * stderr


def test_expected_abs_det_zero_mean(seed):
    # E|xi| with s^2 = 2/N at N = 2 is sqrt(2/pi)
    class Dummy:
        N = 2
        mean_part = np.zeros((1, 1))

    mean, stderr = expected_abs_det(Dummy(), samples=4000, seed=seed)
    assert abs(mean - math.sqrt(2.0 / math.pi)) <= 3 * stderr


def test_expected_abs_det_large_mean_lower_bound(paper_potential, seed):
    sig = np.array([2.4, -2.6, 2.5])
    model = build_hessian_model(sig, paper_potential)
    lams = np.linalg.eigvalsh(model.mean_part)
    assert np.all(lams >= 10.0)
    mean, _ = expected_abs_det(model, samples=2000, seed=seed)
    assert mean >= float(np.prod(lams - 9.0)) * 0.99


def test_determinant_reduction_identity(paper_potential, seed):
    rng = np.random.default_rng(seed + 5)
    for _ in range(3):
        sig = random_sigma(rng, 3)
        rep = determinant_reduction_check(sig, paper_potential, samples=30000, seed=seed)
        gap = abs(rep["lhs"] - rep["rhs"])
        combined = math.hypot(rep["lhs_stderr"], rep["rhs_stderr"])
        assert gap <= 3.0 * combined


def test_n1_closed_form_identity(quartic_p2):
    # For N = 1, p = 2, V = x^4 the reduced integral evaluates to exactly 1
    # while E[Crt] = 2: the origin atom is the difference.
    p = 2

    def integrand(s):
        ig = kac_rice_integrand(np.array([s]), quartic_p2)
        return ig.prefactor

    const = (1.0 / math.sqrt(p)) * ((p - 1) / (2.0 * math.pi)) ** 0.5
    val, _ = quad(lambda s: const * integrand(s), 1e-9, 10.0, limit=200)
    total = 2 * val  # symmetric in s -> -s
    assert abs(total - 1.0) <= 1e-6
    counts = count_critical_points(1, quartic_p2, coupling_seed=7, trials=2000)
    assert abs(counts.mean - 2.0) <= 3 * counts.stderr + 1e-9


def test_count_roots_1d_explicit(quartic_p2):
    # critical points of g s^2 - s^4: 3 when g > 0 else 1
    assert _count_roots_1d(0.8, quartic_p2, s_max=5.0) == 3
    assert _count_roots_1d(-0.3, quartic_p2, s_max=5.0) == 1


def test_zero_coupling_single_root(quartic_p2):
    roots, flags = _newton_roots_n2(np.zeros((2, 2)), quartic_p2, 60, 1e-6, 1e-9)
    assert len(roots) == 1
    assert np.allclose(roots[0], 0.0, atol=1e-9)


def test_counting_requires_p2(paper_potential, quartic_sextic_p3):
    with pytest.raises(KacRiceError):
        count_critical_points(1, quartic_sextic_p3)
    with pytest.raises(KacRiceError):
        count_critical_points(3, paper_potential)


def test_expected_crt_monotone_in_u(quartic_p2):
    vals = [expected_crt(2, quartic_p2, u=u).value for u in (0.0, 0.5, 2.0)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] >= 0.0


def test_expected_crt_small_radius_rate(quartic_p2):
    # the surviving radial factor <sigma, v> / (N t^{p+1}) of the reduced
    # integrand vanishes like t^{q1 - p - 1} along every ray
    q1, p = 4.0, 2
    theta = 0.7

    def slice_value(r):
        sig = r * np.array([math.cos(theta), math.sin(theta)])
        ig = kac_rice_integrand(sig, quartic_p2)
        t = r / math.sqrt(2.0)
        return ig.inner / (2.0 * t ** (p + 1))

    lo, hi = slice_value(1e-3), slice_value(2e-3)
    rate = math.log(hi / lo) / math.log(2.0)
    assert abs(rate - (q1 - p - 1)) <= 0.2


def test_expected_crt_n3_runs(quartic_p2, seed):
    est = expected_crt(3, quartic_p2, u=0.0, mc_samples=300, seed=seed)
    assert est.value > est.integral >= 0.0
    assert est.origin_atom == 1
    est_hi = expected_crt(3, quartic_p2, u=3.0, mc_samples=300, seed=seed)
    assert est_hi.value <= est.value


def test_covariance_suite_small(quartic_sextic_p3, seed):
    sigma = np.array([0.7, -1.1, 0.4])
    rep = covariance_test(sigma, quartic_sextic_p3, samples=20_000, seed=seed)
    assert rep["max_dev"] <= 5.0
    assert rep["conditional_H_residual_ratio"] <= 1e-2
    assert rep["conditional_hess_cov"] <= 5.0


def test_covariance_p2_hessian_is_coupling(quartic_p2, seed):
    sigma = np.array([1.2, -0.5])
    rep = covariance_test(sigma, quartic_p2, samples=20_000, seed=seed)
    assert rep["max_dev"] <= 5.0
    assert rep["conditional_H_residual_ratio"] <= 1e-2
