"""The complexity functional and its constraint.

Canonical form (measures with arbitrary second moment, argument scaled):

    phi1(t, mu) = c3 (p-1) t^{2-2p} E_mu[X V'(tX)]^2
    phi2(t, mu) = c3 p t^{2-2p} E_mu[V'(tX)^2]      (= E_mu[psi(t, X)])
    phi3(t, mu) = int log|lam| ((g_{t,K})_* mu [+] sc)(dlam)

    I_K(t, mu)  = log(p-1)/2 + 1/2 + phi1 - phi2 + phi3 - KL(mu || Norm)

The single-argument functional I(mu) evaluates at t = sqrt(m_2(mu)) and is
computed both directly (unscaled arguments plus the radial correction
(1 - t^2 + 2 log t)/2) and through the dilation bridge
I(mu) = I_inf(t, S_{1/t} mu); the two routes must agree to 1e-6, which the
evaluation asserts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import c1, c3
from .freeconv import convolve_semicircle, log_potential
from .measure import (
    DiscreteMeasure,
    GridMeasure,
    dilate,
    kl_divergence,
    moment,
    pushforward_gt,
)
from .potential import Potential, eval_potential

__all__ = [
    "FunctionalValue",
    "phi",
    "functional_value",
    "complexity_I",
    "constraint_value",
    "psi",
    "w_envelope",
    "w_cap",
]


class FunctionalError(ValueError):
    pass


@dataclass(frozen=True)
class FunctionalValue:
    """Decomposition of one functional evaluation.

    total = log(p-1)/2 + 1/2 + (phi1 - phi2 + phi3) - kl - radial_term,
    where radial_term = (1 - t^2 + 2 log t)/2 in the I(mu) form and 0 in
    the two-argument I_K(t, mu) form.
    """

    phi1: float
    phi2: float
    phi3: float
    kl: float
    radial_term: float
    total: float
    t: float
    K: float

    def as_dict(self) -> dict:
        return {
            "phi1": self.phi1,
            "phi2": self.phi2,
            "phi3": self.phi3,
            "kl": self.kl,
            "radial_term": self.radial_term,
            "total": self.total,
            "t": self.t,
            "K": self.K if math.isfinite(self.K) else "inf",
        }


def _expect(mu: GridMeasure, values: np.ndarray) -> float:
    return float(np.sum(mu.weights * values))


def psi(t: float, x, potential: Potential):
    """psi(t, x) = c3 p t^{2-2p} V'(t x)^2, identically 0 at t = 0."""
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        out = np.zeros_like(x)
        return float(out) if out.ndim == 0 else out
    p = potential.p
    _, v1, _ = eval_potential(potential, t * x)
    return c3(p) * p * t ** (2.0 - 2.0 * p) * np.asarray(v1) ** 2


def phi(
    t: float,
    mu: GridMeasure,
    potential: Potential,
    K: float = math.inf,
    n_core: int = 4001,
    eta_final: float = 1e-4,
) -> tuple[float, float, float]:
    """(phi1, phi2, phi3) at (t, mu); the t = 0 convention gives (0, 0, -1/2)."""
    if t < 0:
        raise FunctionalError("t must be nonnegative")
    p = potential.p
    if t == 0.0:
        return 0.0, 0.0, -0.5
    _, v1, _ = eval_potential(potential, t * mu.nodes)
    scale = c3(p) * t ** (2.0 - 2.0 * p)
    phi1 = scale * (p - 1) * _expect(mu, mu.nodes * v1) ** 2
    phi2 = scale * p * _expect(mu, np.asarray(v1) ** 2)
    nu = pushforward_gt(mu, potential, t, K)
    phi3 = log_potential(convolve_semicircle(nu, n_core=n_core, eta_final=eta_final))
    return phi1, phi2, phi3


def functional_value(
    t: float,
    mu: GridMeasure,
    potential: Potential,
    K: float = math.inf,
    n_core: int = 4001,
    eta_final: float = 1e-4,
) -> FunctionalValue:
    """I_K(t, mu): the two-argument form, no radial correction."""
    p = potential.p
    p1, p2, p3 = phi(t, mu, potential, K, n_core=n_core, eta_final=eta_final)
    kl = kl_divergence(mu)
    total = 0.5 * math.log(p - 1) + 0.5 + (p1 - p2 + p3) - kl
    return FunctionalValue(p1, p2, p3, kl, 0.0, total, t, K)


def complexity_I(
    mu: GridMeasure,
    potential: Potential,
    K: float = math.inf,
    bridge_tol: float = 1e-6,
    n_core: int = 4001,
    eta_final: float = 1e-4,
) -> FunctionalValue:
    """I(mu) at t = sqrt(m_2(mu)), with the dilation-bridge consistency check."""
    p = potential.p
    m2 = moment(mu, 2.0)
    if m2 <= 0.0:
        raise FunctionalError("m_2(mu) = 0: radial term is singular at t = 0")
    t = math.sqrt(m2)

    # direct route: unscaled arguments plus the radial correction
    _, v1, v2 = eval_potential(potential, mu.nodes)
    a_mean = _expect(mu, mu.nodes * v1)
    b_mean = _expect(mu, np.asarray(v1) ** 2)
    phi1 = c3(p) * (p - 1) * t ** (-2.0 * p) * a_mean**2
    phi2 = c3(p) * p * t ** (2.0 - 2.0 * p) * b_mean
    g_vals = c1(p) * t ** (2.0 - p) * np.asarray(v2)
    if math.isfinite(K):
        g_vals = np.minimum(g_vals, c1(p) * K)
    nu_direct = DiscreteMeasure(g_vals, mu.weights.copy()).aggregated()
    phi3 = log_potential(convolve_semicircle(nu_direct, n_core=n_core, eta_final=eta_final))
    kl = kl_divergence(mu)
    radial = 0.5 * (1.0 - t * t + 2.0 * math.log(t))
    total = 0.5 * math.log(p - 1) + 0.5 + (phi1 - phi2 + phi3) - kl - radial

    # bridge route: I(mu) = I_K(t, S_{1/t} mu)
    bridge = functional_value(
        t, dilate(mu, 1.0 / t), potential, K, n_core=n_core, eta_final=eta_final
    )
    # absolute at order-one values, relative for the violently negative ones
    # (the two routes run independent adaptive solves)
    if abs(bridge.total - total) > bridge_tol * max(1.0, abs(total), abs(bridge.total)):
        raise FunctionalError(
            f"dilation bridge mismatch: direct {total:.9f} vs scaled {bridge.total:.9f}"
        )
    return FunctionalValue(phi1, phi2, phi3, kl, radial, total, t, K)


def constraint_value(mu: GridMeasure, potential: Potential) -> float:
    """E_mu[p^{-1} X V'(X) - V(X)], linear in the weights."""
    v, v1, _ = eval_potential(potential, mu.nodes)
    return _expect(mu, mu.nodes * np.asarray(v1) / potential.p - np.asarray(v))


def w_envelope(potential: Potential, x) -> np.ndarray:
    """w(x) = -x/(2 cb^2 p^2) + log(8 cb^2 x / (p(p-1)) + 4)/2, x >= 0.

    phi(t, mu) <= sup w, which caps the variational value; cb is the
    sandwich constant of the potential.
    """
    x = np.asarray(x, dtype=float)
    p = potential.p
    cb = potential.c_bound
    return -x / (2.0 * cb * cb * p * p) + 0.5 * np.log(
        8.0 * cb * cb * x / (p * (p - 1.0)) + 4.0
    )


def w_cap(potential: Potential) -> float:
    """sup_{x >= 0} w(x), in closed form (w is concave)."""
    p = potential.p
    cb = potential.c_bound
    a = 1.0 / (2.0 * cb * cb * p * p)
    b = 8.0 * cb * cb / (p * (p - 1.0))
    x_star = 1.0 / (2.0 * a) - 4.0 / b
    if x_star <= 0.0:
        return 0.5 * math.log(4.0)
    return float(w_envelope(potential, x_star))


def variational_upper_bound(potential: Potential) -> float:
    """log(p-1)/2 + 1/2 + sup w: an analytic cap on Sigma(u) for all u."""
    p = potential.p
    return 0.5 * math.log(p - 1) + 0.5 + w_cap(potential)
