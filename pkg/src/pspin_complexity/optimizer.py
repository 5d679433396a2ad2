"""Maximize the complexity functional over grid measures under the
energy constraint, produce the complexity curve, and locate the critical
level by bracketing and bisection.

Parameterization: weights on a fixed symmetric grid.  Both the simplex
and the constraint {E_mu[p^{-1}XV'(X) - V(X)] >= u} are linear in the
weights, so the feasible set is their intersection and projection onto it
is exact (simplex projection with a scalar dual search for the
half-space multiplier).

Ascent runs projected gradient with backtracking.  The gradients of the
quadratic terms, the entropy term and the radial term are analytic; the
log-potential term is differentiated through the first-order expansion of
the subordination equation (the perturbed Cauchy transform is linear in
the measure, so one converged solve yields every weight derivative), with
a finite-difference pass in the radial scale.  Iterations run at a finite
spectral truncation for bounded grids; the best candidates are polished
and certified at the untruncated functional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import c1, c3, master_seed
from .freeconv import FreeConvResult, convolve_semicircle, log_potential, _hat_log_weights, _m_nu_and_deriv
from .functional import complexity_I
from .measure import DiscreteMeasure, GridMeasure, gaussian_grid_measure, symmetric_grid
from .potential import Potential, eval_potential

__all__ = [
    "SolverConfig",
    "ComplexityReport",
    "CriticalLevelReport",
    "InfeasibleError",
    "maximize_sigma",
    "sigma_curve",
    "find_uc",
    "project_feasible",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_W_FLOOR = 1e-16


class InfeasibleError(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    grid_max: float = 5.0
    grid_points: int = 401
    restarts: int = 8
    seed: int | None = None
    tol: float = 1e-6
    K: float = math.inf           # polish / certification truncation
    K_iterate: float = 250.0      # working truncation during ascent
    max_iter: int = 40
    polish_iter: int = 10
    polish_top: int = 2
    n_core_fast: int = 601
    eta_final_fast: float = 1e-3
    cell_tol_fast: float = 3e-5
    n_core_cert: int = 2001
    eta_final_cert: float = 1e-4
    uc_tol: float = 1e-2
    uc_u_cap: float = 64.0
    uc_u_floor: float = 1e-4
    tol_fn: float = 5e-3
    refine_restarts: int = 2
    t_scan: tuple = (0.04, 2.0, 14)  # geometric scan of Gaussian starts

    def master(self) -> int:
        return master_seed() if self.seed is None else self.seed


@dataclass
class ComplexityReport:
    u: float
    sigma: float
    best_measure: GridMeasure
    feasibility_slack: float
    iterations: int
    restarts: int
    certificate: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "u": self.u,
            "sigma": self.sigma,
            "feasibility_slack": self.feasibility_slack,
            "iterations": self.iterations,
            "restarts": self.restarts,
            "certificate": [(str(k), float(v)) for k, v in self.certificate],
        }


@dataclass
class CriticalLevelReport:
    u_c: float
    bracket: tuple[float, float]
    sigma_low: float
    sigma_high: float
    tolerance: float
    reports: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "u_c": self.u_c,
            "bracket": list(self.bracket),
            "sigma_low": self.sigma_low,
            "sigma_high": self.sigma_high,
            "tolerance": self.tolerance,
        }


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, v.size + 1) > 0)[0][-1]
    lam = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


def project_feasible(v: np.ndarray, cvec: np.ndarray, u: float) -> np.ndarray:
    """Euclidean projection onto {w in simplex, c . w >= u}.

    KKT: the solution is proj_simplex(v + lam * c) for the smallest
    lam >= 0 making the constraint active; c . proj_simplex(v + lam c)
    is nondecreasing in lam, so a scalar bisection finds it.
    """
    w = _project_simplex(v)
    if cvec @ w >= u:
        return w
    cmax = float(cvec.max())
    if cmax < u - 1e-12:
        raise InfeasibleError(
            f"constraint level u={u} exceeds the grid maximum {cmax:.6g}; "
            "increase grid_max"
        )
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if cvec @ _project_simplex(v + hi * cvec) >= u:
            break
        hi *= 2.0
    else:
        raise InfeasibleError("could not activate the energy constraint")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if cvec @ _project_simplex(v + mid * cvec) >= u:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    w = _project_simplex(v + hi * cvec)
    return w


class _Workspace:
    """Grid-bound arrays and fast functional/gradient evaluation."""

    def __init__(self, potential: Potential, config: SolverConfig):
        self.potential = potential
        self.config = config
        self.p = potential.p
        nodes, delta = symmetric_grid(config.grid_max, config.grid_points)
        self.nodes = nodes
        self.delta = delta
        v, v1, v2 = eval_potential(potential, nodes)
        self.xsq = nodes * nodes
        self.avec = nodes * v1
        self.bvec = np.asarray(v1) ** 2
        self.v2 = np.asarray(v2)
        self.cvec = self.avec / self.p - np.asarray(v)
        self.log_gauss = -0.5 * self.xsq - _LOG_SQRT_2PI
        self.const = 0.5 * math.log(self.p - 1) + 0.5
        self.c3 = c3(self.p)
        self.c1 = c1(self.p)

    def measure(self, w: np.ndarray) -> GridMeasure:
        w = np.maximum(w, 0.0)
        return GridMeasure(self.nodes, w / w.sum(), self.delta)

    def atoms(self, w: np.ndarray, t: float, K: float) -> DiscreteMeasure:
        y = t ** (2.0 - self.p) * self.v2
        if math.isfinite(K):
            y = np.minimum(y, K)
        return DiscreteMeasure(self.c1 * y, w)

    def _phi3_result(self, w: np.ndarray, t: float, K: float) -> FreeConvResult:
        cfg = self.config
        return convolve_semicircle(
            self.atoms(w, t, K),
            n_core=cfg.n_core_fast,
            eta_final=cfg.eta_final_fast,
            tol=1e-10,
            refine_cell_tol=cfg.cell_tol_fast,
        )

    def objective(self, w: np.ndarray, u: float, K: float, want_result: bool = False):
        m2 = float(self.xsq @ w)
        if m2 <= 0:
            return -math.inf if not want_result else (-math.inf, None)
        t = math.sqrt(m2)
        a_mean = float(self.avec @ w)
        b_mean = float(self.bvec @ w)
        quad = self.c3 * ((self.p - 1) * a_mean**2 * m2**-self.p - self.p * b_mean * m2 ** (1 - self.p))
        live = w > 0
        kl = float(
            np.sum(w[live] * (np.log(w[live] / self.delta) - self.log_gauss[live]))
        )
        radial = 0.5 * (1.0 - m2 + math.log(m2))
        result = self._phi3_result(w, t, K)
        phi3 = log_potential(result)
        total = self.const + quad + phi3 - kl - radial
        if want_result:
            return total, result
        return total

    def gradient(self, w: np.ndarray, t: float, K: float, result: FreeConvResult) -> np.ndarray:
        p, c3_, xsq = self.p, self.c3, self.xsq
        m2 = t * t
        a_mean = float(self.avec @ w)
        b_mean = float(self.bvec @ w)
        dquad = c3_ * (
            (p - 1) * (2.0 * a_mean * self.avec * m2**-p - p * a_mean**2 * m2 ** (-p - 1) * xsq)
            - p * (self.bvec * m2 ** (1 - p) + (1 - p) * b_mean * m2**-p * xsq)
        )
        dkl = np.log(np.maximum(w, _W_FLOOR) / self.delta) - self.log_gauss + 1.0
        dradial = 0.5 * xsq * (-1.0 + 1.0 / m2)
        dphi3 = self._phi3_weight_gradient(w, t, K, result)
        dphi3 += self._phi3_dt(w, t, K) * xsq / (2.0 * t)
        return dquad + dphi3 - dkl - dradial

    def _phi3_weight_gradient(
        self, w: np.ndarray, t: float, K: float, result: FreeConvResult
    ) -> np.ndarray:
        """d phi3 / d w_i at fixed atom locations, via the linearized
        subordination equation around the converged transform.

        The reported phi3 integrates the mass-normalized, support-clipped
        density, so the raw derivative is corrected by the mass derivative:
        d(I_log/mass) = (dI_log - phi3 * dmass) / mass.
        """
        lam = result.lambda_nodes
        inside = np.abs(lam) <= result.support_bound
        q_log = _hat_log_weights(lam)
        q_one = np.zeros(lam.size)
        dl = np.diff(lam)
        q_one[:-1] += 0.5 * dl
        q_one[1:] += 0.5 * dl
        q_log[~inside] = 0.0
        q_one[~inside] = 0.0
        phi3 = log_potential(result)
        m_f = -result.stieltjes.values  # Cauchy-transform convention
        omega = result.subordination
        a_all = self.atoms(w, t, K).atoms
        nu = result.nu
        _, dm = _m_nu_and_deriv(omega, nu.atoms, nu.masses)
        pref = (q_log - phi3 * q_one) / (1.0 + dm) / result.mass_raw
        grad = np.empty(w.size)
        base = float(np.sum((pref * m_f).imag))
        chunk = max(1, int(4e6 // max(lam.size, 1)))
        for s in range(0, w.size, chunk):
            block = 1.0 / (omega[:, None] - a_all[None, s : s + chunk])
            grad[s : s + chunk] = np.sum((pref[:, None] * block).imag, axis=0)
        return -(grad - base) / math.pi

    def _phi3_dt(self, w: np.ndarray, t: float, K: float) -> float:
        if self.p == 2:
            return 0.0  # t^{2-p} = 1: atom locations carry no t dependence
        h = 1e-4 * t
        hi = log_potential(self._phi3_result(w, t + h, K))
        lo = log_potential(self._phi3_result(w, t - h, K))
        return (hi - lo) / (2.0 * h)


def _gaussian_start(ws: _Workspace, t: float) -> np.ndarray:
    g = gaussian_grid_measure(t, grid_max=ws.config.grid_max, n_nodes=ws.config.grid_points)
    return g.weights.copy()


def _random_start(ws: _Workspace, rng: np.random.Generator) -> np.ndarray:
    scale = float(rng.uniform(0.4, 1.6))
    shift = float(rng.uniform(-0.5, 0.5))
    bumps = np.exp(-0.5 * ((ws.nodes - shift) / scale) ** 2)
    noise = rng.dirichlet(np.ones(ws.nodes.size))
    kernel = np.ones(9) / 9.0
    smooth = np.convolve(noise, kernel, mode="same")
    w = bumps * (0.2 + smooth)
    return w / w.sum()


def _feasible_gaussian_t(ws: _Workspace, u: float, t_hi: float) -> float | None:
    """Smallest Gaussian scale whose constraint value reaches u.

    The constraint integrand increases in |x|, so t -> constraint(S_t N)
    is increasing and a bisection over the scale applies.
    """
    if u <= 0.0 or float(ws.cvec @ _gaussian_start(ws, 1e-3)) >= u:
        return None
    lo, hi = 1e-3, t_hi
    if float(ws.cvec @ _gaussian_start(ws, hi)) < u:
        return None
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if float(ws.cvec @ _gaussian_start(ws, mid)) >= u:
            hi = mid
        else:
            lo = mid
    return hi


def _seed_pool(
    ws: _Workspace, u: float, rng: np.random.Generator
) -> list[tuple[float, str, np.ndarray]]:
    """Feasible starting measures ranked by the fast objective.

    Gaussian scales below the feasibility threshold are completed into
    two-scale mixtures: the constraint is carried by a thin symmetric
    component placed at the node with the best constraint-to-damage ratio,
    while the core keeps the radial scale the functional prefers.
    """
    config = ws.config
    lo, hi, n_scan = config.t_scan
    t_feas = _feasible_gaussian_t(ws, u, t_hi=2.0 * hi)
    pool: list[tuple[float, str, np.ndarray]] = []

    def consider(name: str, w: np.ndarray) -> None:
        cval = float(ws.cvec @ w)
        if cval < u - 1e-12:
            return
        pool.append((ws.objective(w, u, config.K_iterate), name, w))

    for t in np.geomspace(lo, hi, int(n_scan)):
        t = float(t)
        w = _gaussian_start(ws, t)
        if t_feas is None or t >= t_feas:
            consider(f"gauss_t{t:.3g}", w)
            continue
        # two-scale completions of an infeasible core
        c_core = float(ws.cvec @ w)
        for x_star in np.quantile(
            ws.nodes[ws.nodes > max(t_feas or 0.0, 2.0 * t)], [0.15, 0.4, 0.7]
        ):
            k = int(np.argmin(np.abs(ws.nodes - x_star)))
            spike = np.zeros_like(w)
            spike[k] = 0.5
            spike[ws.nodes.size - 1 - k] = 0.5
            c_spike = float(ws.cvec @ spike)
            if c_spike <= u:
                continue
            eps = (u * 1.02 - c_core) / (c_spike - c_core)
            if not (0.0 < eps < 1.0):
                continue
            consider(f"mix_t{t:.3g}_x{ws.nodes[k]:.3g}", (1.0 - eps) * w + eps * spike)
    if t_feas is not None:
        consider(f"gauss_t{t_feas:.3g}", _gaussian_start(ws, t_feas * 1.01))
    # local refinement of the radial scale around the current leader
    for _ in range(2):
        gauss = [s for s in pool if s[1].startswith("gauss_t")]
        if not gauss:
            break
        best_t = float(max(gauss, key=lambda s: s[0])[1][7:])
        for fac in (0.85, 0.93, 1.08, 1.18):
            t = best_t * fac
            if t_feas is not None and t < t_feas:
                continue
            if not any(abs(t - float(s[1][7:])) < 0.02 * t for s in gauss):
                consider(f"gauss_t{t:.3g}", _gaussian_start(ws, t))
    for j in range(2):
        w = _random_start(ws, rng)
        try:
            consider(f"rand{j}", project_feasible(w, ws.cvec, u))
        except InfeasibleError:
            raise
    pool.sort(key=lambda s: -s[0])
    return pool


def _ascend(
    ws: _Workspace,
    w0: np.ndarray,
    u: float,
    K: float,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, float, int]:
    w = project_feasible(w0, ws.cvec, u)
    val, result = ws.objective(w, u, K, want_result=True)
    step = 0.05
    stall = 0
    it = 0
    for it in range(max_iter):
        t = math.sqrt(float(ws.xsq @ w))
        g = ws.gradient(w, t, K, result)
        gmax = float(np.abs(g).max())
        if gmax == 0.0 or not np.isfinite(gmax):
            break
        accepted = False
        for _ in range(14):
            w_try = project_feasible(w + (step / gmax) * g, ws.cvec, u)
            val_try, result_try = ws.objective(w_try, u, K, want_result=True)
            if val_try > val + 1e-12:
                gain = val_try - val
                w, val, result = w_try, val_try, result_try
                step = min(step * 1.4, 5.0)
                accepted = True
                break
            step *= 0.35
            if step < 1e-9:
                break
        if not accepted:
            break
        stall = stall + 1 if gain < tol else 0
        if stall >= 3:
            break
    return w, val, it + 1


def maximize_sigma(
    u: float,
    potential: Potential,
    config: SolverConfig | None = None,
    warm_starts: list[np.ndarray] | None = None,
) -> ComplexityReport:
    """Best lower bound for Sigma(u) over the configured grid."""
    config = config or SolverConfig()
    ws = _Workspace(potential, config)
    rng = np.random.default_rng(np.random.SeedSequence([config.master(), int(1e6 * u) & 0x7FFFFFFF]))

    # ascent only reshapes locally; scanning the radial scale (with
    # two-scale completions under an active constraint) finds the right
    # mass structure first
    scan = _seed_pool(ws, u, rng)
    if not scan:
        raise InfeasibleError(
            f"no feasible seed at u={u}; constraint max on the grid is "
            f"{float(ws.cvec.max()):.6g} (increase grid_max)"
        )
    starts: list[tuple[str, np.ndarray]] = []
    if warm_starts:
        for j, w in enumerate(warm_starts[:2]):
            starts.append((f"warm{j}", project_feasible(np.asarray(w, dtype=float), ws.cvec, u)))
        n_fresh = max(1, config.refine_restarts - len(starts) + 1)
        starts += [(name, w) for _, name, w in scan[:n_fresh]]
    else:
        starts += [(name, w) for _, name, w in scan[: config.restarts]]

    candidates: list[tuple[float, int, str, np.ndarray, int]] = []
    total_iters = 0
    for idx, (name, w0) in enumerate(starts):
        try:
            w, val, its = _ascend(ws, w0, u, config.K_iterate, config.max_iter, config.tol)
        except InfeasibleError:
            raise
        total_iters += its
        candidates.append((val, idx, name, w, its))
    if not candidates:
        raise SolverFailure("no ascent candidate produced a value")
    # max by value, lowest start index breaks ties
    candidates.sort(key=lambda c: (-c[0], c[1]))

    # polish the leaders at the certification truncation
    polished: list[tuple[float, int, str, np.ndarray]] = []
    for val, idx, name, w, _ in candidates[: max(1, config.polish_top)]:
        if config.polish_iter > 0:
            w, val, its = _ascend(ws, w, u, config.K, config.polish_iter, config.tol)
            total_iters += its
        polished.append((val, idx, name, w))
    for val, idx, name, w, _ in candidates[max(1, config.polish_top) :]:
        polished.append((val, idx, name, w))
    polished.sort(key=lambda c: (-c[0], c[1]))

    certificate = [(name, val) for val, _, name, _ in polished]
    best_val, _, best_name, best_w = polished[0]
    mu_best = ws.measure(best_w)
    fv = complexity_I(
        mu_best,
        potential,
        K=config.K,
        n_core=config.n_core_cert,
        eta_final=config.eta_final_cert,
    )
    slack = float(ws.cvec @ mu_best.weights - u)
    return ComplexityReport(
        u=u,
        sigma=fv.total,
        best_measure=mu_best,
        feasibility_slack=slack,
        iterations=total_iters,
        restarts=len(starts),
        certificate=certificate,
    )


def sigma_curve(
    u_values: list[float],
    potential: Potential,
    config: SolverConfig | None = None,
) -> list[ComplexityReport]:
    """Sigma(u) along an ascending grid with warm starts.

    Any maximizer found at a larger u is feasible at every smaller u, so a
    backward pass propagates better (measure, value) pairs down the curve;
    the reported values are certified lower bounds and nonincreasing.
    """
    config = config or SolverConfig()
    order = np.argsort(u_values)
    reports: dict[int, ComplexityReport] = {}
    pool: list[np.ndarray] = []
    for rank, i in enumerate(order):
        cfg = config if rank == 0 else replace(config, restarts=config.refine_restarts)
        rep = maximize_sigma(
            float(u_values[i]), potential, cfg, warm_starts=pool if rank > 0 else None
        )
        reports[i] = rep
        pool = [rep.best_measure.weights.copy()] + pool[:2]
    out = [reports[i] for i in range(len(u_values))]
    # enforce monotonicity by propagating stronger certificates downward
    by_u = sorted(range(len(out)), key=lambda i: out[i].u)
    for a, b in zip(reversed(by_u[:-1]), reversed(by_u[1:])):
        hi, lo = out[b], out[a]
        if hi.sigma > lo.sigma:
            lo.sigma = hi.sigma
            lo.best_measure = hi.best_measure
            lo.feasibility_slack = hi.feasibility_slack + (hi.u - lo.u)
            lo.certificate = list(hi.certificate)
    return out


def find_uc(potential: Potential, config: SolverConfig | None = None) -> CriticalLevelReport:
    """Bracket and bisect the first level where the complexity goes negative."""
    config = config or SolverConfig()
    reports: list[ComplexityReport] = []
    pool: list[np.ndarray] = []

    def sigma_at(u: float, fresh: bool) -> ComplexityReport:
        cfg = config if fresh else replace(config, restarts=config.refine_restarts)
        rep = maximize_sigma(u, potential, cfg, warm_starts=None if fresh else pool)
        reports.append(rep)
        pool.insert(0, rep.best_measure.weights.copy())
        del pool[3:]
        return rep

    u = 0.25
    rep = sigma_at(u, fresh=True)
    while rep.sigma < 0.0 and u > config.uc_u_floor:
        u *= 0.5
        rep = sigma_at(u, fresh=False)
    if rep.sigma < -config.tol_fn:
        raise SolverFailure(
            f"Sigma({u}) = {rep.sigma:.4f} < 0 at the floor level; no positive bracket"
        )
    u_low, sigma_low = u, rep.sigma
    u_high = None
    sigma_high = math.nan
    while u <= config.uc_u_cap:
        u *= 2.0
        rep = sigma_at(u, fresh=False)
        if rep.sigma < 0.0:
            u_high, sigma_high = u, rep.sigma
            break
        u_low, sigma_low = u, rep.sigma
    if u_high is None:
        raise SolverFailure(
            f"Sigma(u) >= 0 for all u up to {config.uc_u_cap}; grid too small or solver failure"
        )
    while u_high - u_low > config.uc_tol:
        mid = 0.5 * (u_low + u_high)
        rep = sigma_at(mid, fresh=False)
        # values inside the noise floor count as the nonnegative side
        if rep.sigma >= -config.tol_fn:
            u_low, sigma_low = mid, rep.sigma
        else:
            u_high, sigma_high = mid, rep.sigma
    return CriticalLevelReport(
        u_c=0.5 * (u_low + u_high),
        bracket=(u_low, u_high),
        sigma_low=sigma_low,
        sigma_high=sigma_high,
        tolerance=config.uc_tol,
        reports=reports,
    )
