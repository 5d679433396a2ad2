"""Finite-N Kac-Rice machinery and its validation experiments.

Central objects, for a configuration sigma in R^N with avg = ||sigma||_2 /
sqrt(N):

    v(sigma)   = c1 sigma V''(sigma) - c2 V'(sigma)
    f_N(sigma) = (1-p) <sigma, V'(sigma)>^2 / (N^2 avg^{2p})
                 + p ||V'(sigma)||_2^2 / (N avg^{2p-2})
    M_{N-1}    = B^T (c1 diag(V''(sigma)/avg^{p-2})
                 - v v^T / (<sigma,v> avg^{p-2})) B + G_{N-1}

and the expected number of critical points with energy in [N u, inf):

    (1/sqrt(p)) ((p-1)/(2 pi))^{N/2}
        int_{Omega} |<sigma,v>| / (N avg^{N+p}) e^{-c3 N f_N}
                    E|det M_{N-1}(sigma)| dsigma.

The integral is the absolutely continuous part only: the origin is a
critical point for every realization (the gradient there is deterministic)
but carries zero Lebesgue weight, so the expected count adds 1 whenever
the zero energy level belongs to the window (u <= 0).  The N = 1 case can
be evaluated in closed form and shows the discrepancy exactly: the
integral equals 1 while the expected number of critical points is 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .constants import c1, c2, c3
from .potential import Potential, eval_potential
from .rmt import _rng, sample_goe_stack

__all__ = [
    "KacRiceIntegrand",
    "HessianModel",
    "KacRiceEstimate",
    "CountReport",
    "kac_rice_integrand",
    "build_hessian_model",
    "expected_abs_det",
    "folded_abs_mean",
    "expected_crt",
    "count_critical_points",
    "covariance_test",
    "conditional_hessian_matrices",
    "determinant_reduction_check",
]


class KacRiceError(RuntimeError):
    pass


def _avg_norm(sigma: np.ndarray) -> float:
    return float(np.linalg.norm(sigma) / math.sqrt(sigma.size))


def v_vector(sigma: np.ndarray, potential: Potential) -> np.ndarray:
    p = potential.p
    _, v1, v2 = eval_potential(potential, sigma)
    return c1(p) * sigma * np.asarray(v2) - c2(p) * np.asarray(v1)


@dataclass(frozen=True)
class KacRiceIntegrand:
    sigma: np.ndarray
    f_N: float
    v: np.ndarray
    inner: float
    prefactor: float
    omega_membership: float


def kac_rice_integrand(sigma: np.ndarray, potential: Potential) -> KacRiceIntegrand:
    """Per-configuration scalar factors of the expected-count integral.

    prefactor excludes the global (1/sqrt(p)) ((p-1)/(2 pi))^{N/2} and the
    determinant expectation.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.size
    p = potential.p
    avg = _avg_norm(sigma)
    if avg == 0.0:
        raise KacRiceError("integrand undefined at the origin")
    v_pot, v1, _ = eval_potential(potential, sigma)
    sv1 = float(sigma @ np.asarray(v1))
    f_n = (1 - p) * sv1**2 / (n**2 * avg ** (2 * p)) + p * (
        float(np.sum(np.asarray(v1) ** 2)) / n
    ) / avg ** (2 * p - 2)
    v = v_vector(sigma, potential)
    inner = float(sigma @ v)
    pref = abs(inner) / (n * avg ** (n + p)) * math.exp(-c3(p) * n * f_n)
    omega = (sv1 / p - float(np.sum(v_pot))) / n
    return KacRiceIntegrand(
        sigma=sigma, f_N=f_n, v=v, inner=inner, prefactor=pref, omega_membership=omega
    )


@dataclass(frozen=True)
class HessianModel:
    N: int
    sigma: np.ndarray
    mean_part: np.ndarray
    basis: np.ndarray


def _householder_basis(sigma: np.ndarray) -> np.ndarray:
    """N x (N-1) orthonormal completion of sigma/||sigma||."""
    n = sigma.size
    u = sigma / np.linalg.norm(sigma)
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = u - e1
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        h = np.eye(n)
    else:
        v = v / nv
        h = np.eye(n) - 2.0 * np.outer(v, v)
    return h[:, 1:]


def build_hessian_model(
    sigma: np.ndarray, potential: Potential, K: float = math.inf
) -> HessianModel:
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.size
    p = potential.p
    avg = _avg_norm(sigma)
    if avg == 0.0:
        raise KacRiceError("Hessian model undefined at the origin")
    _, _, v2 = eval_potential(potential, sigma)
    diag_vals = np.asarray(v2) / avg ** (p - 2)
    if math.isfinite(K):
        diag_vals = np.minimum(diag_vals, K)
    v = v_vector(sigma, potential)
    inner = float(sigma @ v)
    if abs(inner) < 1e-14 * max(1.0, float(np.linalg.norm(v)) * float(np.linalg.norm(sigma))):
        raise KacRiceError("<sigma, v(sigma)> vanishes; reduction formula undefined")
    basis = _householder_basis(sigma)
    core = c1(p) * np.diag(diag_vals) - np.outer(v, v) / (inner * avg ** (p - 2))
    mean = basis.T @ core @ basis
    mean = 0.5 * (mean + mean.T)
    return HessianModel(N=n, sigma=sigma, mean_part=mean, basis=basis)


def folded_abs_mean(m: float, s: float) -> float:
    """E|m + xi| for xi ~ N(0, s^2)."""
    if s <= 0:
        return abs(m)
    r = m / s
    return s * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * r * r) + m * (
        1.0 - 2.0 * ndtr(-r)
    )


def expected_abs_det(
    model: HessianModel, samples: int = 2000, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo E|det(mean_part + G_{N-1})|, G ambient-N scaled.

    Returns (mean, stderr by batch means).  For N = 2 the scalar closed
    form (folded normal) must agree within 3 stderr, which is asserted.
    """
    if samples < 100:
        raise KacRiceError("need at least 100 samples")
    n = model.N
    k = n - 1
    if k == 0:
        return 1.0, 0.0
    gs = sample_goe_stack(samples, k, ambient_n=n, seed=seed)
    dets = np.abs(np.linalg.det(model.mean_part[None, :, :] + gs))
    n_batches = 20
    batch = dets[: (samples // n_batches) * n_batches].reshape(n_batches, -1).mean(axis=1)
    stderr = float(np.std(batch, ddof=1) / math.sqrt(n_batches))
    mean = float(dets.mean())
    if n == 2:
        closed = folded_abs_mean(float(model.mean_part[0, 0]), math.sqrt(2.0 / n))
        if abs(mean - closed) > 3.0 * max(stderr, 1e-12):
            raise KacRiceError(
                f"scalar closed form {closed:.6g} vs MC {mean:.6g} beyond 3 stderr"
            )
    return mean, stderr


@dataclass
class KacRiceEstimate:
    n: int
    u: float
    value: float
    integral: float
    origin_atom: int
    stderr: float
    quadrature_gap: float
    nodes: int
    oracle_mean: float | None = None
    oracle_stderr: float | None = None

    def as_dict(self) -> dict:
        out = {
            "n": self.n,
            "u": self.u,
            "value": self.value,
            "integral": self.integral,
            "origin_atom": self.origin_atom,
            "stderr": self.stderr,
            "quadrature_gap": self.quadrature_gap,
            "nodes": self.nodes,
        }
        if self.oracle_mean is not None:
            out["oracle_mean"] = self.oracle_mean
            out["oracle_stderr"] = self.oracle_stderr
        return out


def _mean_part_scalar_n2(
    x: np.ndarray, y: np.ndarray, potential: Potential, K: float
) -> np.ndarray:
    """1 x 1 reduced-mean entries for a batch of N = 2 configurations."""
    p = potential.p
    sig = np.stack([x, y], axis=-1)
    norm = np.linalg.norm(sig, axis=-1)
    avg = norm / math.sqrt(2.0)
    _, v1, v2 = eval_potential(potential, sig)
    diag_vals = v2 / avg[..., None] ** (p - 2)
    if math.isfinite(K):
        diag_vals = np.minimum(diag_vals, K)
    v = c1(p) * sig * v2 - c2(p) * v1
    inner = np.sum(sig * v, axis=-1)
    b = np.stack([-sig[..., 1], sig[..., 0]], axis=-1) / norm[..., None]
    quad_diag = c1(p) * np.sum(diag_vals * b * b, axis=-1)
    vb = np.sum(v * b, axis=-1)
    return quad_diag - vb * vb / (inner * avg ** (p - 2))


def _integrand_n2(
    r: np.ndarray, theta: np.ndarray, potential: Potential, K: float
) -> np.ndarray:
    """Polar integrand r * F(sigma(r, theta)) for N = 2 (closed-form det)."""
    p = potential.p
    x = r * np.cos(theta)
    y = r * np.sin(theta)
    sig = np.stack([x, y], axis=-1)
    avg = r / math.sqrt(2.0)
    _, v1, v2 = eval_potential(potential, sig)
    sv1 = np.sum(sig * v1, axis=-1)
    f_n = (1 - p) * sv1**2 / (4.0 * avg ** (2 * p)) + p * (
        np.sum(v1**2, axis=-1) / 2.0
    ) / avg ** (2 * p - 2)
    v = c1(p) * sig * v2 - c2(p) * v1
    inner = np.abs(np.sum(sig * v, axis=-1))
    mean_scalar = _mean_part_scalar_n2(x, y, potential, K)
    s = 1.0  # G_1 ambient-2 variance 2/N = 1
    rm = mean_scalar / s
    edet = s * math.sqrt(2.0 / math.pi) * np.exp(-0.5 * rm * rm) + mean_scalar * (
        1.0 - 2.0 * ndtr(-rm)
    )
    dens = inner / (2.0 * avg ** (2 + p)) * np.exp(-c3(p) * 2.0 * f_n)
    return r * dens * edet


def _omega_r_min(theta: float, u: float, potential: Potential, r_hi: float) -> float:
    """Radial entry point of Omega([N u, inf)) along a ray (N = 2)."""
    if u <= 0.0:
        return 0.0
    p = potential.p
    ct, st = math.cos(theta), math.sin(theta)

    def member(r: float) -> bool:
        sig = np.array([r * ct, r * st])
        vv, v1, _ = eval_potential(potential, sig)
        val = (float(sig @ v1) / p - float(np.sum(vv))) / 2.0
        return val >= u

    if member(1e-9):
        return 0.0
    if not member(r_hi):
        return r_hi
    lo, hi = 1e-9, r_hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if member(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _gl_panels(a: float, b: float, n_panels: int, order: int = 16):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _crt_integral_n2(
    potential: Potential, u: float, n_theta: int, n_r: int, r_cap: float, K: float
) -> float:
    p = potential.p
    const = (1.0 / math.sqrt(p)) * ((p - 1) / (2.0 * math.pi)) ** 1.0
    th_nodes, th_weights = _gl_panels(0.0, 2.0 * math.pi, n_theta)
    total = 0.0
    for th, tw in zip(th_nodes, th_weights):
        r0 = _omega_r_min(float(th), u, potential, r_cap)
        if r0 >= r_cap:
            continue
        r_nodes, r_weights = _gl_panels(r0, r_cap, n_r)
        vals = _integrand_n2(r_nodes, np.full_like(r_nodes, th), potential, K)
        total += tw * float(r_weights @ vals)
    return const * total


def _radial_cap(potential: Potential, u: float, n: int) -> float:
    """Radius beyond which the exponential weight kills the integrand."""
    p = potential.p
    for r in np.geomspace(0.5, 200.0, 200):
        sig = np.full(n, r / math.sqrt(n))
        _, v1, _ = eval_potential(potential, sig)
        f_low = (np.sum(np.asarray(v1) ** 2) / n) / (r / math.sqrt(n)) ** (2 * p - 2)
        if c3(p) * n * f_low > 80.0:
            return float(r)
    return 200.0


def expected_crt(
    n: int,
    potential: Potential,
    u: float = 0.0,
    mc_samples: int = 600,
    seed: int = 0,
    rel_tol: float = 0.01,
) -> KacRiceEstimate:
    """Expected critical-point count with energy >= N u, by quadrature of
    the reduced Kac-Rice integral (N = 2 or 3) plus the origin atom."""
    if n not in (2, 3):
        raise KacRiceError("quadrature implemented for N in {2, 3}")
    rep = validate_or_raise(potential)
    del rep
    r_cap = _radial_cap(potential, u, n)
    if n == 2:
        coarse = _crt_integral_n2(potential, u, n_theta=12, n_r=24, r_cap=r_cap, K=math.inf)
        fine = _crt_integral_n2(potential, u, n_theta=24, n_r=48, r_cap=r_cap, K=math.inf)
        finest = _crt_integral_n2(potential, u, n_theta=48, n_r=96, r_cap=r_cap, K=math.inf)
        gap = abs(finest - fine)
        prev_gap = abs(fine - coarse)
        if finest > 1e-12 and gap > rel_tol * abs(finest) and gap > 0.25 * prev_gap:
            raise KacRiceError(
                f"quadrature did not converge: gap {gap:.3g} at value {finest:.6g}"
            )
        integral, stderr, nodes = finest, gap, 48 * 96 * 16 * 16
    else:
        integral, stderr, nodes, gap = _crt_integral_n3(
            potential, u, mc_samples=mc_samples, seed=seed, rel_tol=rel_tol
        )
    origin = 1 if u <= 0.0 else 0
    return KacRiceEstimate(
        n=n,
        u=u,
        value=integral + origin,
        integral=integral,
        origin_atom=origin,
        stderr=stderr,
        quadrature_gap=gap,
        nodes=nodes,
    )


def validate_or_raise(potential: Potential):
    from .potential import validate_assumption1

    rep = validate_assumption1(potential, grid_max=100.0, grid_points=2000)
    if not rep.all_passed:
        raise KacRiceError(f"potential fails structural validation: {rep.passed}")
    return rep


def _ray_mean_parts(
    w_dir: np.ndarray, r_nodes: np.ndarray, potential: Potential
) -> tuple[np.ndarray, np.ndarray]:
    """(prefactors, 2x2 reduced means) along one ray for N = 3.

    The orthonormal completion of a ray direction is shared by all its
    radii, so everything vectorizes over the radial nodes.
    """
    p = potential.p
    basis = _householder_basis(w_dir)  # 3 x 2
    sig = r_nodes[:, None] * w_dir[None, :]
    avg = r_nodes / math.sqrt(3.0)
    v_pot, v1, v2 = eval_potential(potential, sig)
    sv1 = np.sum(sig * v1, axis=1)
    f_n = (1 - p) * sv1**2 / (9.0 * avg ** (2 * p)) + p * (
        np.sum(v1**2, axis=1) / 3.0
    ) / avg ** (2 * p - 2)
    v = c1(p) * sig * v2 - c2(p) * v1
    inner = np.sum(sig * v, axis=1)
    pref = np.abs(inner) / (3.0 * avg ** (3 + p)) * np.exp(-c3(p) * 3.0 * f_n)
    diag_scaled = v2 / avg[:, None] ** (p - 2)
    core = c1(p) * np.einsum("rk,ki,kj->rij", diag_scaled, basis, basis)
    vb = v @ basis  # (r, 2)
    core -= np.einsum("ri,rj->rij", vb, vb) / (inner * avg ** (p - 2))[:, None, None]
    return pref, core


def _crt_integral_n3(
    potential: Potential, u: float, mc_samples: int, seed: int, rel_tol: float
):
    """Spherical quadrature with a shared Monte-Carlo determinant stream.

    One GOE_2 draw per Monte-Carlo index is reused across all quadrature
    nodes, so each index yields an unbiased sample of the whole integral
    and the spread of those samples is the exact Monte-Carlo error of the
    estimate.
    """
    p = potential.p
    const = (1.0 / math.sqrt(p)) * ((p - 1) / (2.0 * math.pi)) ** 1.5
    r_cap = _radial_cap(potential, u, 3)
    gs = sample_goe_stack(mc_samples, 2, ambient_n=3, seed=seed)
    g00, g01, g11 = gs[:, 0, 0], gs[:, 0, 1], gs[:, 1, 1]

    def run(n_th: int, n_ph: int, n_r: int) -> np.ndarray:
        th_nodes, th_w = _gl_panels(0.0, 2.0 * math.pi, n_th, order=6)
        ph_nodes, ph_w = _gl_panels(0.0, math.pi, n_ph, order=6)
        per_draw = np.zeros(mc_samples)
        for ph, pw in zip(ph_nodes, ph_w):
            sph = math.sin(ph)
            for th, tw in zip(th_nodes, th_w):
                w_dir = np.array([sph * math.cos(th), sph * math.sin(th), math.cos(ph)])
                r0 = _omega_r_min_dir(w_dir, u, potential, r_cap, n=3)
                if r0 >= r_cap:
                    continue
                r_nodes, r_w = _gl_panels(r0, r_cap, n_r, order=6)
                pref, cores = _ray_mean_parts(w_dir, r_nodes, potential)
                coef = tw * pw * sph * r_w * r_nodes**2 * pref  # (r,)
                m00 = cores[:, 0, 0][:, None] + g00[None, :]
                m01 = cores[:, 0, 1][:, None] + g01[None, :]
                m11 = cores[:, 1, 1][:, None] + g11[None, :]
                dets = np.abs(m00 * m11 - m01 * m01)
                per_draw += coef @ dets
        return per_draw

    coarse_draw = run(4, 3, 6)
    fine_draw = run(8, 6, 12)
    integral = const * float(fine_draw.mean())
    mc_stderr = const * float(np.std(fine_draw, ddof=1) / math.sqrt(mc_samples))
    gap = const * abs(float(fine_draw.mean() - coarse_draw.mean()))
    stderr = math.hypot(mc_stderr, gap)
    if integral > 1e-6 and gap > 4 * rel_tol * integral and gap > 3 * mc_stderr:
        raise KacRiceError(f"N=3 quadrature not converged: gap {gap:.3g} vs {integral:.6g}")
    return integral, stderr, 8 * 6 * 12 * 6**3, gap


def _omega_r_min_dir(
    w_dir: np.ndarray, u: float, potential: Potential, r_hi: float, n: int
) -> float:
    if u <= 0.0:
        return 0.0
    p = potential.p

    def member(r: float) -> bool:
        sig = r * w_dir
        vv, v1, _ = eval_potential(potential, sig)
        return (float(sig @ v1) / p - float(np.sum(vv))) / n >= u

    if member(1e-9):
        return 0.0
    if not member(r_hi):
        return r_hi
    lo, hi = 1e-9, r_hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if member(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class CountReport:
    counts: np.ndarray
    unreliable: int

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    @property
    def stderr(self) -> float:
        if self.counts.size < 2:
            return 0.0
        return float(np.std(self.counts, ddof=1) / math.sqrt(self.counts.size))


def _count_roots_1d(g: float, potential: Potential, s_max: float, n_grid: int = 4000) -> int:
    """Critical points of g s^2 - V(s) on the line: solve V'(s)/s = 2g."""
    s = np.linspace(1e-9, s_max, n_grid)
    _, v1, _ = eval_potential(potential, s)
    rho = np.asarray(v1) / s
    h = rho - 2.0 * g
    sign_change = np.nonzero(np.diff(np.signbit(h)))[0]
    return 1 + 2 * len(sign_change)


def count_critical_points(
    n: int,
    potential: Potential,
    coupling_seed: int = 0,
    trials: int = 1,
    newton_iters: int = 60,
    dedup_tol: float = 1e-6,
    residual_gate: float = 1e-9,
) -> CountReport:
    """Direct critical-point counts for the p = 2 Hamiltonian.

    N = 1 counts roots of the scalar gradient exactly (grid-bisection on
    the monotone branch ratio); N = 2 runs multi-start damped Newton on
    grad H(sigma) = B sigma - V'(sigma), B = (g + g^T)/sqrt(2).
    """
    if potential.p != 2:
        raise KacRiceError("direct counting requires p = 2 (polynomial gradient)")
    if n not in (1, 2):
        raise KacRiceError("direct counting implemented for N in {1, 2}")
    counts = np.zeros(trials, dtype=int)
    unreliable = 0
    for k in range(trials):
        rng = _rng(coupling_seed, k)
        if n == 1:
            g = float(rng.standard_normal())
            counts[k] = _count_roots_1d(g, potential, s_max=_box_bound(potential, 6.0))
            continue
        a = rng.standard_normal((2, 2))
        b = (a + a.T) / math.sqrt(2.0)
        roots, flags = _newton_roots_n2(
            b, potential, newton_iters, dedup_tol, residual_gate
        )
        counts[k] = len(roots)
        unreliable += flags
    return CountReport(counts=counts, unreliable=unreliable)


def _box_bound(potential: Potential, coupling_scale: float) -> float:
    """Crude a-priori radius: V'(s)/s grows, so roots satisfy rho(s) <= scale."""
    s = np.geomspace(1e-3, 1e3, 2000)
    _, v1, _ = eval_potential(potential, s)
    rho = np.asarray(v1) / s
    idx = np.searchsorted(rho, 2.0 * coupling_scale)
    return float(s[min(idx + 1, s.size - 1)]) * 1.5


def _newton_roots_n2(
    b: np.ndarray,
    potential: Potential,
    iters: int,
    dedup_tol: float,
    residual_gate: float,
) -> tuple[list[np.ndarray], int]:
    box = _box_bound(potential, max(3.0, float(np.abs(np.linalg.eigvalsh(b)).max())))
    lin = np.linspace(-box, box, 40)
    xx, yy = np.meshgrid(lin, lin)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    pts = np.concatenate([pts, np.zeros((1, 2))], axis=0)

    sig = pts.copy()
    for _ in range(iters):
        _, v1, v2 = eval_potential(potential, sig)
        f = sig @ b.T - v1
        j11 = b[0, 0] - v2[:, 0]
        j22 = b[1, 1] - v2[:, 1]
        j12 = np.full(sig.shape[0], b[0, 1])
        det = j11 * j22 - j12 * j12
        det = np.where(np.abs(det) < 1e-14, np.nan, det)
        dx = (j22 * f[:, 0] - j12 * f[:, 1]) / det
        dy = (-j12 * f[:, 0] + j11 * f[:, 1]) / det
        step = np.stack([dx, dy], axis=-1)
        # damped update: halve where the residual would grow
        new = sig - step
        _, v1n, _ = eval_potential(potential, new)
        fn = new @ b.T - v1n
        worse = np.linalg.norm(fn, axis=1) > np.linalg.norm(f, axis=1)
        new[worse] = sig[worse] - 0.5 * step[worse]
        sig = new
        bad = ~np.isfinite(sig).all(axis=1) | (np.abs(sig) > 50 * box).any(axis=1)
        sig[bad] = 0.0
    _, v1, v2 = eval_potential(potential, sig)
    res = np.linalg.norm(sig @ b.T - v1, axis=1)
    ok = res <= residual_gate
    roots: list[np.ndarray] = []
    flags = 0
    for pt in sig[ok]:
        if any(np.linalg.norm(pt - r) <= dedup_tol for r in roots):
            continue
        roots.append(pt)
        _, _, v2r = eval_potential(potential, pt)
        jac = b - np.diag(np.asarray(v2r))
        if abs(np.linalg.det(jac)) < 1e-8:
            flags += 1
    return roots, flags


def conditional_hessian_matrices(
    sigma: np.ndarray, potential: Potential
) -> tuple[np.ndarray, np.ndarray]:
    """(A_N(sigma), P(sigma)) of the conditional Hessian representation."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.size
    p = potential.p
    norm2 = float(sigma @ sigma)
    if norm2 == 0.0:
        return np.zeros((n, n)), np.eye(n)
    avg = _avg_norm(sigma)
    _, v1, v2 = eval_potential(potential, sigma)
    sv1 = float(sigma @ np.asarray(v1))
    a = avg ** (2 - p) * (
        c1(p) * np.diag(np.asarray(v2))
        + c2(p)
        * (
            sv1 * np.outer(sigma, sigma) / norm2**2
            - (np.outer(sigma, v1) + np.outer(v1, sigma)) / norm2
        )
    )
    pmat = np.eye(n) - np.outer(sigma, sigma) / norm2
    return a, pmat


def determinant_reduction_check(
    sigma: np.ndarray,
    potential: Potential,
    samples: int = 20000,
    seed: int = 0,
) -> dict:
    """Monte-Carlo check of the dimension-reduction identity
    E|det(-A_N + P G P)| = |<sigma,v>| / (N avg^p) E|det M_{N-1}|."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.size
    p = potential.p
    a, pmat = conditional_hessian_matrices(sigma, potential)
    gs = sample_goe_stack(samples, n, ambient_n=n, seed=seed)
    lhs_draws = np.abs(np.linalg.det(-a[None, :, :] + pmat @ gs @ pmat))
    model = build_hessian_model(sigma, potential)
    gs2 = sample_goe_stack(samples, n - 1, ambient_n=n, seed=seed + 77)
    rdet = np.abs(np.linalg.det(model.mean_part[None, :, :] + gs2))
    ig = kac_rice_integrand(sigma, potential)
    factor = abs(ig.inner) / (n * _avg_norm(sigma) ** p)
    lhs = float(lhs_draws.mean())
    rhs = factor * float(rdet.mean())
    return {
        "lhs": lhs,
        "lhs_stderr": float(np.std(lhs_draws, ddof=1) / math.sqrt(samples)),
        "rhs": rhs,
        "rhs_stderr": factor * float(np.std(rdet, ddof=1) / math.sqrt(samples)),
    }


def _tensor_fields(
    sigma: np.ndarray, p: int, samples: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sampled Gaussian parts of (H, grad H, hess H) at sigma."""
    n = sigma.size
    shape = (samples,) + (n,) * p
    g = rng.standard_normal(shape)
    scale = n ** (-(p - 1) / 2.0)
    letters = "ijklmn"[:p]
    h = scale * np.einsum("s" + letters + "," + ",".join(letters), g, *([sigma] * p))
    grad = np.zeros((samples, n))
    for a in range(p):
        keep = letters[a]
        rest = [letters[b] for b in range(p) if b != a]
        spec = "s" + letters + "," + ",".join(rest) + "->s" + keep
        grad += scale * np.einsum(spec, g, *([sigma] * (p - 1)))
    hess = np.zeros((samples, n, n))
    for a in range(p):
        for b_ in range(p):
            if a == b_:
                continue
            keep_a, keep_b = letters[a], letters[b_]
            rest = [letters[c] for c in range(p) if c not in (a, b_)]
            spec = (
                "s" + letters + ("," if rest else "") + ",".join(rest)
                + "->s" + keep_a + keep_b
            )
            args = [g] + [sigma] * (p - 2)
            hess += scale * np.einsum(spec, *args)
    return h, grad, hess


def covariance_test(
    sigma: np.ndarray,
    potential: Potential,
    samples: int = 100_000,
    seed: int = 0,
) -> dict:
    """Empirical check of the joint Gaussian structure of (H, grad H,
    hess H) and of the conditional law given grad H = 0.

    Returns a report whose `max_dev` entries are in units of standard
    errors; the conditional block carries the determinism residual ratio
    and the worst conditional-covariance deviation.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.size
    if n > 6:
        raise KacRiceError("covariance test sized for N <= 6")
    if samples < 10_000:
        raise KacRiceError("need at least 1e4 samples")
    p = potential.p
    rng = _rng(seed)
    h_g, grad_g, hess_g = _tensor_fields(sigma, p, samples, rng)
    v_pot, v1, v2 = eval_potential(potential, sigma)
    h = h_g - float(np.sum(v_pot))
    grad = grad_g - np.asarray(v1)[None, :]
    hess = hess_g - np.diag(np.asarray(v2))[None, :, :]

    norm2 = float(sigma @ sigma)
    norm = math.sqrt(norm2)
    pref = float(n) ** (1 - p)

    def dev(est: np.ndarray, se: np.ndarray, want: np.ndarray) -> float:
        return float(np.max(np.abs(est - want) / np.maximum(se, 1e-300)))

    def mean_block(x: np.ndarray, want: np.ndarray) -> float:
        est = x.mean(axis=0)
        se = x.std(axis=0, ddof=1) / math.sqrt(samples)
        return dev(est, se, want)

    report: dict = {}
    report["mean_H"] = mean_block(h[:, None], np.array([-float(np.sum(v_pot))]))
    report["mean_grad"] = mean_block(grad, -np.asarray(v1))
    report["mean_hess"] = mean_block(
        hess.reshape(samples, -1), -np.diag(np.asarray(v2)).ravel()
    )

    def _prod_moments(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xc = x - x.mean(axis=0)
        yc = y - y.mean(axis=0)
        s1 = np.zeros((x.shape[1], y.shape[1]))
        s2 = np.zeros_like(s1)
        for lo in range(0, samples, 20000):
            block = xc[lo : lo + 20000, :, None] * yc[lo : lo + 20000, None, :]
            s1 += block.sum(axis=0)
            s2 += (block * block).sum(axis=0)
        est = s1 / samples
        var = np.maximum(s2 / samples - est * est, 0.0)
        return est, np.sqrt(var / samples)

    def cov_block(x: np.ndarray, y: np.ndarray, want: np.ndarray) -> float:
        est, se = _prod_moments(x, y)
        return dev(est, se, want)

    want_var_h = pref * norm ** (2 * p)
    report["var_H"] = cov_block(h[:, None], h[:, None], np.array([[want_var_h]]))

    want_cov_grad = pref * p * norm ** (2 * (p - 2)) * (
        (p - 1) * np.outer(sigma, sigma) + norm2 * np.eye(n)
    )
    report["cov_grad"] = cov_block(grad, grad, want_cov_grad)

    want_cov_h_grad = pref * p * norm ** (2 * (p - 1)) * sigma
    report["cov_H_grad"] = cov_block(h[:, None], grad, want_cov_h_grad[None, :])

    want_cov_h_hess = pref * p * (p - 1) * norm ** (2 * (p - 2)) * np.outer(sigma, sigma)
    report["cov_H_hess"] = cov_block(
        h[:, None], hess.reshape(samples, -1), want_cov_h_hess.reshape(1, -1)
    )

    eye = np.eye(n)
    want_grad_hess = pref * p * (p - 1) * norm ** (2 * (p - 3)) * (
        (p - 2) * np.einsum("i,j,k->ijk", sigma, sigma, sigma)
        + norm2
        * (np.einsum("ik,j->ijk", eye, sigma) + np.einsum("ij,k->ijk", eye, sigma))
    )
    report["cov_grad_hess"] = cov_block(
        grad, hess.reshape(samples, -1), want_grad_hess.reshape(n, -1)
    )

    want_hess_hess = pref * p * (p - 1) * norm ** (2 * (p - 4)) * (
        (p - 2) * (p - 3) * np.einsum("i,j,k,l->ijkl", sigma, sigma, sigma, sigma)
        + norm2
        * (p - 2)
        * (
            np.einsum("ik,j,l->ijkl", eye, sigma, sigma)
            + np.einsum("il,j,k->ijkl", eye, sigma, sigma)
            + np.einsum("jk,i,l->ijkl", eye, sigma, sigma)
            + np.einsum("jl,i,k->ijkl", eye, sigma, sigma)
        )
        + norm2**2
        * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))
    )
    report["cov_hess_hess"] = cov_block(
        hess.reshape(samples, -1),
        hess.reshape(samples, -1),
        want_hess_hess.reshape(n * n, n * n),
    )

    # conditional law given grad H: determinism of H and the projected
    # covariance of the Hessian
    gc = grad - grad.mean(axis=0)
    coef, *_ = np.linalg.lstsq(
        np.concatenate([np.ones((samples, 1)), gc], axis=1), h, rcond=None
    )
    resid = h - np.concatenate([np.ones((samples, 1)), gc], axis=1) @ coef
    report["conditional_H_residual_ratio"] = float(resid.var() / h.var())

    hess_flat = hess.reshape(samples, -1)
    coefs, *_ = np.linalg.lstsq(
        np.concatenate([np.ones((samples, 1)), gc], axis=1), hess_flat, rcond=None
    )
    res_h = hess_flat - np.concatenate([np.ones((samples, 1)), gc], axis=1) @ coefs
    est, se = _prod_moments(res_h, res_h)
    pmat = np.eye(n) - np.outer(sigma, sigma) / norm2
    avg = _avg_norm(sigma)
    want_cond = (
        p
        * (p - 1)
        * avg ** (2 * (p - 2))
        * (np.einsum("ik,jl->ijkl", pmat, pmat) + np.einsum("il,jk->ijkl", pmat, pmat))
        / n
    ).reshape(n * n, n * n)
    report["conditional_hess_cov"] = dev(est, se, want_cond)
    report["max_dev"] = max(
        v for k, v in report.items() if k.startswith(("mean", "cov", "var"))
    )
    return report
