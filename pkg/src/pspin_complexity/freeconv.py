"""Free additive convolution with the semicircle law.

The convolution nu [+] sc is characterized by the subordination fixed
point for the Cauchy transform m(z) = int dnu(x)/(z - x) (Im m < 0 on the
upper half-plane):

    m(z) = m_nu(z - m(z)),   z = lambda + i eta.

The solver continues the solution from eta = 1 down to a small final
offset, recovers the density from -Im m / pi, and integrates log|lambda|
against it with the singularity at 0 handled in closed form (the density
is bounded, so the integral converges; each grid cell integrates a linear
density interpolant times log|lambda| exactly).

Exposed values follow the Herglotz convention G = -m (Im G > 0, density =
Im G / pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measure import DiscreteMeasure

__all__ = [
    "StieltjesGrid",
    "FreeConvResult",
    "FreeConvError",
    "convolve_semicircle",
    "log_potential",
    "moment_bound_check",
    "semicircle_density",
    "semicircle_moment",
    "BIANE_DENSITY_CAP",
]

# sup-norm cap for densities of nu [+] sc (semicircle of variance 1):
# attained by nu = a point mass, where the density is the semicircle's,
# peaking at 1/pi.
BIANE_DENSITY_CAP = 1.0 / math.pi

_ETA_LADDER = (1.0, 0.1, 0.01, 1e-3, 1e-4)
_DAMPING = 0.5
# far atoms whose total mass-weighted log contribution is below this are
# dropped before building the lambda grid
_DROP_BUDGET = 1e-10


class FreeConvError(RuntimeError):
    """Subordination solve failed; carries the worst (lambda, eta, residual)."""

    def __init__(self, message: str, lam: float, eta: float, residual: float):
        super().__init__(f"{message} (lambda={lam:.6g}, eta={eta:.3g}, residual={residual:.3g})")
        self.lam = lam
        self.eta = eta
        self.residual = residual


@dataclass(frozen=True)
class StieltjesGrid:
    """Herglotz transform values G(lambda + i eta) on the lambda grid."""

    lambda_nodes: np.ndarray
    eta: float
    values: np.ndarray  # complex, Im > 0

    def __post_init__(self) -> None:
        if np.any(np.imag(self.values) <= 0):
            raise FreeConvError(
                "Herglotz property violated",
                float(self.lambda_nodes[int(np.argmin(np.imag(self.values)))]),
                self.eta,
                float(np.min(np.imag(self.values))),
            )


@dataclass
class FreeConvResult:
    """Density of nu [+] sc sampled on lambda_nodes, plus summaries."""

    lambda_nodes: np.ndarray
    density: np.ndarray
    support_bound: float
    mass_raw: float
    stieltjes: StieltjesGrid
    nu: DiscreteMeasure
    subordination: np.ndarray  # omega(lambda) = z - m(z) at the final eta
    dropped_mass: float = 0.0

    @property
    def log_potential(self) -> float:
        return log_potential(self)

    def cdf(self) -> np.ndarray:
        """CDF at the grid nodes (exact for the piecewise-linear density)."""
        x = self.lambda_nodes
        f = self.density
        cells = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
        return np.concatenate([[0.0], np.cumsum(cells)])

    def moment(self, s: float) -> float:
        """m_s of the piecewise-linear density (cell-midpoint refinement)."""
        x = self.lambda_nodes
        f = self.density
        total = 0.0
        # split every cell in four for the |x|^s factor
        for k in range(4):
            lo = x[:-1] + np.diff(x) * (k / 4.0)
            hi = x[:-1] + np.diff(x) * ((k + 1) / 4.0)
            mid = 0.5 * (lo + hi)
            flo = f[:-1] + (f[1:] - f[:-1]) * (k / 4.0)
            fhi = f[:-1] + (f[1:] - f[:-1]) * ((k + 1) / 4.0)
            total += float(np.sum(0.5 * (flo + fhi) * (hi - lo) * np.abs(mid) ** s))
        return total

    def density_at(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.lambda_nodes, self.density, left=0.0, right=0.0)

    def summary(self) -> dict:
        return {
            "log_potential": self.log_potential,
            "mass": self.mass_raw,
            "support": self.support_bound,
        }

    def to_csv(self) -> str:
        lines = ["lambda,density"]
        lines += [f"{x!r},{d!r}" for x, d in zip(self.lambda_nodes, self.density)]
        return "\n".join(lines) + "\n"


def semicircle_density(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 2.0, np.sqrt(np.maximum(4.0 - x * x, 0.0)) / (2.0 * math.pi), 0.0)


def semicircle_moment(s: float) -> float:
    """m_s of the semicircle on [-2, 2] by adaptive quadrature."""
    from scipy.integrate import quad

    val, _ = quad(lambda x: 2.0 * x**s * math.sqrt(4.0 - x * x) / (2.0 * math.pi), 0.0, 2.0)
    return float(val)


def _trim_far_atoms(nu: DiscreteMeasure) -> tuple[DiscreteMeasure, float]:
    """Drop far-out atoms whose weighted log contribution is negligible.

    The dropped tail satisfies sum m_i (1 + |log(2+|a_i|)|) <= _DROP_BUDGET,
    so the induced error on mass and log-potential is below 1e-10.
    """
    order = np.argsort(np.abs(nu.atoms))
    a = nu.atoms[order]
    m = nu.masses[order]
    cost = m * (1.0 + np.abs(np.log(2.0 + np.abs(a))))
    tail = np.cumsum(cost[::-1])[::-1]
    keep = tail > _DROP_BUDGET
    if keep.all():
        return nu, 0.0
    if not keep.any():
        keep[0] = True
    a_k, m_k = a[keep], m[keep]
    dropped = float(1.0 - m_k.sum())
    m_k = m_k / m_k.sum()
    order2 = np.argsort(a_k)
    return DiscreteMeasure(a_k[order2], m_k[order2]), dropped


def _build_lambda_grid(nu: DiscreteMeasure, n_core: int) -> np.ndarray:
    """Initial graded grid: dense core over the mass bulk plus atom anchors.

    The fixed point is solved per node, so nonuniform grids cost nothing.
    An isolated atom of mass m spawns a density bump of width ~ 4 sqrt(m)
    around its location; anchor nodes at every relevant atom (and at the
    sqrt(m) scale around it) make those bumps visible to the adaptive
    refinement pass that follows the first solve.
    """
    atoms, masses = nu.atoms, nu.masses
    order = np.argsort(atoms)
    a, m = atoms[order], masses[order]
    cdf = np.cumsum(m)

    def quantile(u: float) -> float:
        return float(a[min(np.searchsorted(cdf, u), a.size - 1)])

    # dense core: atom interval holding all but 1e-3 of the mass per side
    qlo, qhi = quantile(1e-3), quantile(1.0 - 1e-3)
    width = max(qhi - qlo, 1e-3)
    lo = qlo - 2.0 - 0.05 * (width + 4.0)
    hi = qhi + 2.0 + 0.05 * (width + 4.0)
    pieces = [np.linspace(lo, hi, n_core)]
    # doubled resolution near the log singularity
    step = (hi - lo) / (n_core - 1)
    if lo < -0.1 and hi > 0.1:
        pieces.append(np.arange(-0.1, 0.1 + 0.25 * step, 0.5 * step))
    # coarse backbone over the whole kept range
    pieces.append(np.linspace(float(a[0]) - 2.2, float(a[-1]) + 2.2, 801))
    # anchors at atoms (heaviest first, until the remainder is irrelevant)
    weightlog = m * (1.0 + np.abs(np.log(2.0 + np.abs(a))))
    order_w = np.argsort(weightlog)[::-1]
    residual = np.cumsum(weightlog[order_w])
    cutoff = np.searchsorted(residual, residual[-1] - 1e-8)
    keep = order_w[: min(max(cutoff + 1, 1), 4000)]
    aa, mm = a[keep], m[keep]
    s = np.clip(2.0 * np.sqrt(mm), 0.005, 2.0)
    for mult in (0.0, 1.0, 2.0, 3.0):
        pieces.append(aa + mult * s)
        if mult:
            pieces.append(aa - mult * s)
    grid = np.unique(np.concatenate(pieces + [np.array([0.0])]))
    # symmetric inputs get a mirror-symmetric grid so the density inherits
    # the symmetry to solver precision
    if a.size == m.size and np.allclose(a, -a[::-1], atol=1e-12) and np.allclose(
        m, m[::-1], atol=1e-12
    ):
        grid = np.unique(np.concatenate([grid, -grid]))
    bound = nu.max_abs_location() + 2.0
    return grid[(grid >= -bound - 0.5) & (grid <= bound + 0.5)]


def _m_nu_and_deriv(w: np.ndarray, atoms: np.ndarray, masses: np.ndarray, chunk: int = 512):
    """Cauchy transform of nu and its derivative at complex points w."""
    out = np.empty_like(w)
    dout = np.empty_like(w)
    for start in range(0, w.size, chunk):
        ww = w[start : start + chunk, None]
        inv = masses[None, :] / (ww - atoms[None, :])
        out[start : start + chunk] = inv.sum(axis=1)
        dout[start : start + chunk] = -(inv / (ww - atoms[None, :])).sum(axis=1)
    return out, dout


def _solve_stage(
    z: np.ndarray,
    m0: np.ndarray,
    atoms: np.ndarray,
    masses: np.ndarray,
    tol: float,
    max_iter: int,
    newton_from: int = 4,
) -> np.ndarray:
    """Solve m = m_nu(z - m) by damped iteration with Newton acceleration."""
    m = m0.copy()
    eta = float(np.min(z.imag))
    for it in range(max_iter):
        fm, dfm = _m_nu_and_deriv(z - m, atoms, masses)
        h = m - fm
        res = np.abs(h)
        if res.max() <= tol:
            return m
        # Newton on h(m) = m - m_nu(z - m); h'(m) = 1 + m_nu'(z - m)
        dh = 1.0 + dfm
        newton = m - h / np.where(np.abs(dh) > 1e-12, dh, 1.0)
        damped = m + _DAMPING * (fm - m)
        use_newton = (it >= newton_from) & (np.imag(newton) < 0.0) & (np.abs(dh) > 1e-8)
        m_next = np.where(use_newton, newton, damped)
        # keep iterates in the correct half plane
        bad = np.imag(m_next) >= 0.0
        if bad.any():
            m_next[bad] = damped[bad]
            still = np.imag(m_next) >= 0.0
            if still.any():
                raise FreeConvError(
                    "iterate left the lower half plane",
                    float(z.real[np.argmax(still)]),
                    eta,
                    float(res.max()),
                )
        m = m_next
    fm, _ = _m_nu_and_deriv(z - m, atoms, masses)
    res = np.abs(m - fm)
    k = int(np.argmax(res))
    raise FreeConvError("subordination fixed point did not converge", float(z.real[k]), eta, float(res[k]))


def _solve_ladder(
    lam: np.ndarray,
    atoms: np.ndarray,
    masses: np.ndarray,
    eta_final: float,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    ladder = [e for e in _ETA_LADDER if e > eta_final] + [eta_final]
    # semicircle solution as the global initializer at the first stage
    z = lam + 1j * ladder[0]
    s = np.sqrt(z * z - 4.0)
    m = 0.5 * (z - s)
    flip = m.imag >= 0
    m[flip] = 0.5 * (z[flip] + s[flip])
    for eta in ladder:
        z = lam + 1j * eta
        m = _solve_stage(z, m, atoms, masses, tol=tol, max_iter=max_iter)
    return m


def _refine(
    lam: np.ndarray,
    m: np.ndarray,
    atoms: np.ndarray,
    masses: np.ndarray,
    eta_final: float,
    tol: float,
    max_iter: int,
    rounds: int,
    cell_tol: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive cell refinement of the density grid at the final eta.

    Two indicators drive the subdivision: the linear-interpolation error
    of the density (curvature times cell width cubed) and atom mass hiding
    inside a cell without matching density mass (narrow bumps of width
    ~ 4 sqrt(mass) that the initial grid straddled).  New nodes warm-start
    from interpolated neighbors, so a refinement solve takes a handful of
    Newton steps.
    """
    order0 = np.argsort(atoms)
    atom_pos = atoms[order0]
    atom_cdf = np.cumsum(masses[order0])
    for _ in range(rounds):
        f = np.maximum(-m.imag / math.pi, 0.0)
        width = np.diff(lam)
        mid = 0.5 * (lam[1:] + lam[:-1])
        logw = 1.0 + np.abs(np.log(np.maximum(np.abs(mid), 1e-3)))
        # curvature at interior nodes via second divided differences
        slope = np.diff(f) / width
        curv = np.zeros_like(f)
        curv[1:-1] = np.abs(np.diff(slope)) / (0.5 * (width[1:] + width[:-1]))
        cell_curv = np.maximum(curv[:-1], curv[1:])
        err_interp = cell_curv * width**3 / 12.0
        # atom mass strictly inside each cell vs mass the linear density sees
        idx_hi = np.searchsorted(atom_pos, lam[1:], side="left")
        idx_lo = np.searchsorted(atom_pos, lam[:-1], side="right")
        cdf_hi = np.where(idx_hi > 0, atom_cdf[np.maximum(idx_hi - 1, 0)], 0.0)
        cdf_lo = np.where(idx_lo > 0, atom_cdf[np.maximum(idx_lo - 1, 0)], 0.0)
        inside = np.maximum(cdf_hi - cdf_lo, 0.0)
        lin_mass = 0.5 * (f[1:] + f[:-1]) * width
        hidden = np.maximum(inside - 4.0 * lin_mass, 0.0)
        flag = ((err_interp + hidden) * logw > cell_tol) & (
            width > 1e-6 * (1.0 + np.abs(mid))
        )
        if not flag.any():
            break
        new_lam = mid[flag]
        init = np.interp(new_lam, lam, m.real) + 1j * np.minimum(
            np.interp(new_lam, lam, m.imag), -1e-14
        )
        z_new = new_lam + 1j * eta_final
        try:
            m_new = _solve_stage(
                z_new, init, atoms, masses, tol=tol, max_iter=max_iter, newton_from=0
            )
        except FreeConvError:
            m_new = _solve_ladder(new_lam, atoms, masses, eta_final, tol, max_iter)
        lam = np.concatenate([lam, new_lam])
        m = np.concatenate([m, m_new])
        order = np.argsort(lam)
        lam, m = lam[order], m[order]
    return lam, m


def convolve_semicircle(
    nu: DiscreteMeasure,
    n_core: int = 4001,
    eta_final: float = 1e-4,
    tol: float = 1e-11,
    max_iter: int = 400,
    refine_rounds: int = 10,
    refine_cell_tol: float = 2e-7,
    lambda_grid: np.ndarray | None = None,
) -> FreeConvResult:
    """Density, transform and support summary of nu [+] semicircle.

    Passing an explicit lambda_grid pins the evaluation nodes and disables
    adaptive refinement (the result is then a smooth function of nu, which
    derivative checks rely on).
    """
    nu_full = nu.aggregated()
    nu_used, dropped = _trim_far_atoms(nu_full)
    atoms, masses = nu_used.atoms, nu_used.masses
    if lambda_grid is not None:
        lam = np.unique(np.asarray(lambda_grid, dtype=float))
        refine_rounds = 0
    else:
        lam = _build_lambda_grid(nu_used, n_core)
    m = _solve_ladder(lam, atoms, masses, eta_final, tol, max_iter)
    if refine_rounds > 0:
        lam, m = _refine(
            lam, m, atoms, masses, eta_final, tol, max_iter, refine_rounds, refine_cell_tol
        )
    z = lam + 1j * eta_final

    density = np.maximum(-m.imag / math.pi, 0.0)
    support_bound = nu_used.max_abs_location() + 2.0
    # outside the certified support the positive remainder is Poisson
    # smoothing leakage of order eta; the true density vanishes there
    density[np.abs(lam) > support_bound] = 0.0
    mass_raw = float(np.trapezoid(density, lam))
    if mass_raw <= 0:
        raise FreeConvError("computed density carries no mass", float(lam[0]), eta_final, 1.0)
    density = density / mass_raw
    grid = StieltjesGrid(lambda_nodes=lam, eta=eta_final, values=-m)
    return FreeConvResult(
        lambda_nodes=lam,
        density=density,
        support_bound=support_bound,
        mass_raw=mass_raw,
        stieltjes=grid,
        nu=nu_full,
        subordination=z - m,
        dropped_mass=dropped,
    )


def _log_kernel_integral(a: np.ndarray, b: np.ndarray, fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """Exact integral of the linear interpolant times log|x| over [a, b].

    Uses antiderivatives L1 = x log|x| - x and L2 = x^2/2 log|x| - x^2/4,
    both extended by 0 at x = 0, so cells touching the origin need no
    special treatment (cells straddling 0 must be split by the caller).
    """

    def L1(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = x * np.log(np.abs(x)) - x
        return np.where(x == 0.0, 0.0, out)

    def L2(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 0.5 * x * x * np.log(np.abs(x)) - 0.25 * x * x
        return np.where(x == 0.0, 0.0, out)

    width = b - a
    slope = np.where(width > 0, (fb - fa) / np.where(width > 0, width, 1.0), 0.0)
    const = fa - slope * a
    return const * (L1(b) - L1(a)) + slope * (L2(b) - L2(a))


def _hat_log_weights(lam: np.ndarray) -> np.ndarray:
    """Quadrature weights Q_j = int hat_j(x) log|x| dx for the node basis.

    With these, int log|x| g(x) dx = sum_j Q_j g(lam_j) holds exactly for
    any g that is piecewise linear on the grid; used to integrate
    derivative fields of the density without rebuilding interpolants.
    """
    weights = np.zeros(lam.size)
    a = lam[:-1]
    b = lam[1:]
    idx = np.arange(lam.size - 1)
    strad = (a < 0) & (b > 0)
    plain = ~strad
    # left hat: 1 -> 0; right hat: 0 -> 1
    wl = _log_kernel_integral(a[plain], b[plain], np.ones(plain.sum()), np.zeros(plain.sum()))
    wr = _log_kernel_integral(a[plain], b[plain], np.zeros(plain.sum()), np.ones(plain.sum()))
    np.add.at(weights, idx[plain], wl)
    np.add.at(weights, idx[plain] + 1, wr)
    for i in idx[strad]:
        aa, bb = lam[i], lam[i + 1]
        frac = -aa / (bb - aa)  # hat value at 0 for the left node: 1 - frac
        for lo, hi, f_lo, f_hi in ((aa, 0.0, 1.0, 1.0 - frac), (0.0, bb, 1.0 - frac, 0.0)):
            weights[i] += float(_log_kernel_integral(np.array([lo]), np.array([hi]), np.array([f_lo]), np.array([f_hi]))[0])
        for lo, hi, f_lo, f_hi in ((aa, 0.0, 0.0, frac), (0.0, bb, frac, 1.0)):
            weights[i + 1] += float(_log_kernel_integral(np.array([lo]), np.array([hi]), np.array([f_lo]), np.array([f_hi]))[0])
    return weights


def log_potential(result: FreeConvResult) -> float:
    """integral of log|lambda| against the computed density."""
    x = result.lambda_nodes
    f = result.density
    a, b = x[:-1].copy(), x[1:].copy()
    fa, fb = f[:-1].copy(), f[1:].copy()
    strad = (a < 0) & (b > 0)
    if strad.any():
        idx = np.where(strad)[0]
        mids = fa[idx] + (fb[idx] - fa[idx]) * (-a[idx]) / (b[idx] - a[idx])
        a = np.concatenate([a, np.zeros(idx.size)])
        b = np.concatenate([b, b[idx]])
        fa = np.concatenate([fa, mids])
        fb = np.concatenate([fb, fb[idx]])
        b[idx] = 0.0
        fb[idx] = mids
    return float(np.sum(_log_kernel_integral(a, b, fa, fb)))


def moment_bound_check(nu: DiscreteMeasure, s: float) -> tuple[float, float]:
    """(m_s of nu [+] sc, the bound 2^s (m_s(nu) + m_s(sc)))."""
    if s <= 0:
        raise ValueError("s must be positive")
    from .measure import moment as measure_moment

    result = convolve_semicircle(nu)
    lhs = result.moment(s)
    rhs = 2.0**s * (measure_moment(nu, s) + semicircle_moment(s))
    return lhs, rhs


def wasserstein1_to_samples(result: FreeConvResult, samples: np.ndarray) -> float:
    """W1 distance between the computed density and an empirical sample."""
    samples = np.sort(np.asarray(samples, dtype=float).ravel())
    n = samples.size
    breaks = np.unique(np.concatenate([result.lambda_nodes, samples]))
    # refine so the piecewise-linear CDF difference is well resolved
    mids = 0.5 * (breaks[1:] + breaks[:-1])
    grid = np.sort(np.concatenate([breaks, mids]))
    cdf_nodes = result.cdf()
    f_pred = np.interp(grid, result.lambda_nodes, cdf_nodes, left=0.0, right=cdf_nodes[-1])
    f_emp = np.searchsorted(samples, grid, side="right") / n
    return float(np.trapezoid(np.abs(f_pred - f_emp), grid))
