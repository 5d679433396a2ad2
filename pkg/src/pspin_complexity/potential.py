"""Polynomial-type confinement potentials V(x) = sum_i c_i |x|^{r_i}.

Derivatives are exact (analytic term-by-term), and the structural growth /
monotonicity conditions the rest of the pipeline relies on are verified
numerically on a dense log-spaced grid:

  (C1)  cb^{-1}(|x|^{q1}+|x|^{q2}) <= V(x), xV'(x), x^2 V''(x)
                                   <= cb(|x|^{q1}+|x|^{q2})
  (C2)  xV'(x)  >= q V(x)        for x > 0
  (C3)  xV''(x) >= (q-1) V'(x)   for x > 0

The conditions hold for all x > 0 analytically; a grid check is a heuristic
certificate, documented as such in the validation report.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Potential",
    "ValidationReport",
    "eval_potential",
    "validate_assumption1",
    "example_paper_potential",
    "pure_power_potential",
]


class PotentialError(ValueError):
    """Invalid potential definition or failed structural validation."""


@dataclass(frozen=True)
class Potential:
    """Even confinement potential as a signed sum of |x|^r terms.

    terms     : ((coefficient, exponent), ...) with every exponent >= 2
    p         : interaction order of the random part (integer >= 2)
    q         : growth exponent used in condition (C2), must exceed p
    q_hess    : growth exponent for (C3); defaults to q (the two conditions
                may carry different exponents, one shared value is the default)
    q1, q2    : extremal exponents, p < q1 <= q2
    c_bound   : sandwich constant of (C1), > 0
    """

    terms: tuple[tuple[float, float], ...]
    p: int
    q: float
    q1: float
    q2: float
    c_bound: float
    q_hess: float | None = None

    def __post_init__(self) -> None:
        if self.p < 2 or int(self.p) != self.p:
            raise PotentialError(f"p must be an integer >= 2, got {self.p}")
        if not self.terms:
            raise PotentialError("potential needs at least one term")
        terms = tuple((float(c), float(r)) for c, r in self.terms)
        object.__setattr__(self, "terms", terms)
        exps = [r for _, r in terms]
        if min(exps) < 2.0:
            raise PotentialError("every exponent must be >= 2")
        if not (self.p < self.q1 <= self.q2):
            raise PotentialError(
                f"need p < q1 <= q2, got p={self.p}, q1={self.q1}, q2={self.q2}"
            )
        if not math.isclose(min(exps), self.q1, rel_tol=0, abs_tol=1e-12):
            raise PotentialError("smallest exponent must equal q1")
        if not math.isclose(max(exps), self.q2, rel_tol=0, abs_tol=1e-12):
            raise PotentialError("largest exponent must equal q2")
        if self.c_bound <= 0:
            raise PotentialError("c_bound must be positive")
        if self.q <= self.p:
            raise PotentialError("growth exponent q must exceed p")
        if self.q_hess is not None and self.q_hess <= self.p:
            raise PotentialError("hessian growth exponent must exceed p")

    @property
    def q_grad(self) -> float:
        """Exponent used in the (C2) check."""
        return self.q

    @property
    def q_curv(self) -> float:
        """Exponent used in the (C3) check."""
        return self.q if self.q_hess is None else self.q_hess

    def to_json(self) -> str:
        obj = {
            "terms": [[c, r] for c, r in self.terms],
            "p": self.p,
            "q": self.q,
            "q1": self.q1,
            "q2": self.q2,
            "c_bound": self.c_bound,
        }
        if self.q_hess is not None:
            obj["q_hess"] = self.q_hess
        return json.dumps(obj)

    @staticmethod
    def from_json(text: str) -> "Potential":
        obj = json.loads(text)
        return Potential(
            terms=tuple((float(c), float(r)) for c, r in obj["terms"]),
            p=int(obj["p"]),
            q=float(obj["q"]),
            q1=float(obj["q1"]),
            q2=float(obj["q2"]),
            c_bound=float(obj["c_bound"]),
            q_hess=float(obj["q_hess"]) if "q_hess" in obj else None,
        )


def eval_potential(potential: Potential, x):
    """Evaluate (V(x), V'(x), V''(x)) exactly, elementwise on arrays.

    |x|^r with r > 2 has vanishing first and second derivative at 0;
    r = 2 contributes 2c to V'' there.  Odd symmetry of V' and even
    symmetry of V, V'' are exact by construction.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    sx = np.sign(x)
    v = np.zeros_like(ax)
    v1 = np.zeros_like(ax)
    v2 = np.zeros_like(ax)
    with np.errstate(divide="ignore", invalid="ignore"):
        for c, r in potential.terms:
            powr = ax**r
            v += c * powr
            v1 += np.where(ax > 0, c * r * ax ** (r - 1.0), 0.0) * sx
            if r == 2.0:
                v2 += 2.0 * c
            else:
                v2 += np.where(ax > 0, c * r * (r - 1.0) * ax ** (r - 2.0), 0.0)
    if v.ndim == 0:
        return float(v), float(v1), float(v2)
    return v, v1, v2


@dataclass
class ValidationReport:
    """Worst grid margins per condition; pass iff margin >= -tol."""

    potential: Potential
    grid_max: float
    grid_points: int
    margins: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    tol: float = 1e-12

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def summary(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "margins": dict(self.margins),
            "passed": dict(self.passed),
            "grid_max": self.grid_max,
            "grid_points": self.grid_points,
        }


def validate_assumption1(
    potential: Potential, grid_max: float = 1e3, grid_points: int = 10_000
) -> ValidationReport:
    """Check (C1)-(C3) on a log-spaced grid in (0, grid_max].

    Margins are reported relative to the local scale of each inequality, so
    the -1e-12 pass threshold is meaningful uniformly over the grid (raw
    margins at x ~ 1e3 with q2 = 6 exceed 1e18 and would drown the
    tolerance in rounding noise).
    """
    if grid_points < 100:
        raise PotentialError("grid_points must be >= 100")
    if grid_max <= 0:
        raise PotentialError("grid_max must be positive")
    min_exp = min(r for _, r in potential.terms)
    if min_exp <= potential.p:
        raise PotentialError(
            f"exponent {min_exp} <= p={potential.p}: q1 > p violated"
        )

    x = np.logspace(-6, math.log10(grid_max), grid_points)
    v, v1, v2 = eval_potential(potential, x)
    xv1 = x * v1
    x2v2 = x * x * v2
    s = x**potential.q1 + x**potential.q2
    cb = potential.c_bound

    def _worst(margin: np.ndarray, scale: np.ndarray) -> float:
        return float(np.min(margin / np.maximum(scale, 1e-300)))

    qg = potential.q_grad
    qc = potential.q_curv
    margins = {
        "C1_lower_V": _worst(v - s / cb, s),
        "C1_lower_xV1": _worst(xv1 - s / cb, s),
        "C1_lower_x2V2": _worst(x2v2 - s / cb, s),
        "C1_upper_V": _worst(cb * s - v, cb * s),
        "C1_upper_xV1": _worst(cb * s - xv1, cb * s),
        "C1_upper_x2V2": _worst(cb * s - x2v2, cb * s),
        "C2": _worst(xv1 - qg * v, np.maximum(np.abs(qg * v), s)),
        "C3": _worst(x * v2 - (qc - 1.0) * v1, np.maximum(np.abs((qc - 1.0) * v1), 1.0)),
    }
    tol = 1e-12
    passed = {
        "C1": min(margins[k] for k in margins if k.startswith("C1")) >= -tol,
        "C2": margins["C2"] >= -tol,
        "C3": margins["C3"] >= -tol,
    }
    # (C1) also asserts positivity of V, xV', x^2 V'' on the grid; with
    # negative middle coefficients this is not automatic.
    positivity = float(min(v.min(), xv1.min(), x2v2.min()))
    margins["positivity"] = positivity
    passed["positivity"] = positivity >= -tol
    return ValidationReport(
        potential=potential,
        grid_max=grid_max,
        grid_points=grid_points,
        margins=margins,
        passed=passed,
        tol=tol,
    )


def pure_power_potential(r: float, p: int, coefficient: float = 1.0) -> Potential:
    """V(x) = coefficient * |x|^r, with the tight sandwich constant.

    For a single power, (C1) reads cb^{-1} * 2|x|^r <= c*{1, r, r(r-1)}|x|^r,
    so the minimal constant is max(2/c, 2c, c*r(r-1)/2, ...) resolved below.
    (C2)/(C3) hold with q = r exactly.
    """
    c = coefficient
    if c <= 0:
        raise PotentialError("pure power needs a positive coefficient")
    # scale bounds: lower needs cb >= 2/smallest of {c, cr, cr(r-1)};
    # upper needs cb >= largest of {c, cr, cr(r-1)}/2... both sides vs 2|x|^r.
    vals = [c, c * r, c * r * (r - 1.0)]
    cb = max(2.0 / min(vals), max(vals) / 2.0)
    return Potential(
        terms=((c, r),), p=p, q=r, q1=r, q2=r, c_bound=cb * 1.0000001
    )


def example_paper_potential(p: int = 2) -> Potential:
    """V(x) = |x|^4 - |x|^5 + |x|^6 with q = 3, q1 = 4, q2 = 6.

    The minimal sandwich constant is 30 = sup x^2 V''(x) / (x^4 + x^6)
    (approached as x -> infinity); the value 2 is only tight for the lower
    bound on V itself and fails the upper bounds, e.g. x^2 V''(1) = 22 > 4.
    """
    return Potential(
        terms=((1.0, 4.0), (-1.0, 5.0), (1.0, 6.0)),
        p=p,
        q=3.0,
        q1=4.0,
        q2=6.0,
        c_bound=30.0,
    )


def positive_sum_potential(
    coeffs: Sequence[float], exps: Sequence[float], p: int
) -> Potential:
    """All-positive sum with exponents inside [q1, q2]; q picked as q1."""
    if any(c <= 0 for c in coeffs):
        raise PotentialError("positive_sum_potential needs positive coefficients")
    q1, q2 = min(exps), max(exps)
    # sandwich constant: compare the term sum against |x|^{q1}+|x|^{q2} at the
    # extremes x -> 0 and x -> inf; a crude but safe constant.
    total = sum(abs(c) for c in coeffs)
    hi = max(total * q2 * (q2 - 1.0), 1.0)
    lo = min(min(coeffs), 1.0)
    cb = max(hi, 2.0 / lo) * 1.05
    return Potential(
        terms=tuple((float(c), float(r)) for c, r in zip(coeffs, exps)),
        p=p,
        q=q1,
        q1=q1,
        q2=q2,
        c_bound=cb,
    )
