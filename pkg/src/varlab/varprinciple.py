"""Sublevel infima, the threshold curve phi(rho), its tail/head liminf estimates and lambda*."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .optim import projected_descent
from .pairs import EnergyPair, restore
from .parallel import ordered_map, rng_for


class InfeasibleStartError(ValueError):
    """rho does not exceed inf Psi, so the sublevel set is empty or degenerate."""


class SublevelInf(NamedTuple):
    value: float
    point: np.ndarray
    converged: bool


@dataclass
class PhiCurvePoint:
    rho: float
    phi_hat: float
    m_hat: float
    certificate_x: np.ndarray
    certificate_infx: np.ndarray
    restarts: int
    flag: str = "ok"

    def recompute(self, pair: EnergyPair):
        """(quotient at certificate_x, Phi at certificate_infx)."""
        x = self.certificate_x
        q = (pair.phi(x) - self.m_hat) / (self.rho - pair.psi(x))
        return q, pair.phi(self.certificate_infx)


@dataclass
class ThresholdReport:
    grid: np.ndarray
    points: list
    window: int
    gamma_hat: float
    delta_hat: float
    lambda_star_hat: float
    inf_psi: float
    sup_I: float
    envelope_right: np.ndarray = field(repr=False, default=None)
    envelope_left: np.ndarray = field(repr=False, default=None)

    @property
    def phi_hat(self):
        return np.array([pt.phi_hat for pt in self.points])

    def as_json(self):
        return {
            "gamma_hat": self.gamma_hat,
            "delta_hat": self.delta_hat,
            "lambda_star_hat": self.lambda_star_hat,
            "grid": [float(r) for r in self.grid],
            "window": self.window,
            "inf_psi": self.inf_psi,
            "sup_I": "inf" if np.isinf(self.sup_I) else self.sup_I,
        }


def _check_rho(pair, rho, margin=0.0):
    base = pair.psi(pair.x0)
    if not rho > base + margin:
        raise InfeasibleStartError(f"rho={rho!r} must exceed inf Psi={base!r} (+{margin})")
    return base


def _starts(pair, rho, budget, seed, tag):
    """x0 first, then seeded samples; restart i is the same for every budget."""
    pts = [pair.x0.copy()]
    for i in range(1, budget):
        pts.append(pair.sample(rng_for(seed, tag, i), rho))
    return pts


def _best(results):
    # lowest value wins, ties to the lowest restart index
    best = 0
    for i, r in enumerate(results):
        if r.value < results[best].value:
            best = i
    return results[best]


def inf_phi_on_sublevel(pair: EnergyPair, rho: float, budget: int = 8, seed: int = 0,
                        maxiter: int = 2000) -> SublevelInf:
    """Best Phi over {Psi <= rho} from ``budget`` projected-descent restarts."""
    _check_rho(pair, rho)
    starts = _starts(pair, rho, max(1, budget), seed, 0)

    def run(x):
        return projected_descent(pair.phi, pair.phi_grad, x, pair.psi, rho, pair.x0,
                                 precondition=pair.precondition, gtol=1e-12, maxiter=maxiter)

    best = _best(ordered_map(run, starts))
    return SublevelInf(best.value, best.x, best.converged)


def _quotient_fns(pair, m_hat, rho):
    def q(x):
        return (pair.phi(x) - m_hat) / (rho - pair.psi(x))

    def dq(x):
        gap = rho - pair.psi(x)
        return (pair.phi_grad(x) * gap + (pair.phi(x) - m_hat) * pair.psi_grad(x)) / gap**2

    return q, dq


def phi_of_rho(pair: EnergyPair, rho: float, budget: int = 8, seed: int = 0,
               margin: float = 1e-9, maxiter: int = 2000) -> PhiCurvePoint:
    """Estimate the infimal quotient at level rho with auditable certificates."""
    base = _check_rho(pair, rho, margin)
    inf = inf_phi_on_sublevel(pair, rho, budget, seed, maxiter)
    m_hat, infx = inf.value, inf.point
    flag = "ok" if inf.converged else "nonconverged"
    eps = min(1e-6 * abs(rho), 0.5 * (rho - base))
    inner = rho - eps
    starts = _starts(pair, inner, max(1, budget), seed, 1)
    starts.append(restore(pair.psi, pair.x0, infx, inner))

    for _ in range(4):
        q, dq = _quotient_fns(pair, m_hat, rho)

        def run(x, q=q, dq=dq):
            return projected_descent(q, dq, x, pair.psi, inner, pair.x0,
                                     precondition=pair.precondition, gtol=1e-12, maxiter=maxiter)

        results = ordered_map(run, starts)
        best = _best(results)
        # a quotient search point below m_hat improves the sublevel infimum; redo
        lowest = min(results, key=lambda r: pair.phi(r.x))
        if pair.phi(lowest.x) < m_hat:
            m_hat, infx = pair.phi(lowest.x), lowest.x
            continue
        break
    if not best.converged:
        flag = "nonconverged"
    return PhiCurvePoint(float(rho), float(best.value), float(m_hat), best.x, infx,
                         len(starts), flag)


def _grid(spec):
    if isinstance(spec, dict):
        return np.geomspace(spec["start"], spec["stop"], int(spec["num"]))
    return np.asarray(spec, dtype=float)


def thresholds(pair: EnergyPair, grid, window: int = 3, budget: int = 8,
               seed: int = 0) -> ThresholdReport:
    """Sample phi on an increasing grid; gamma/delta as tail/head minima."""
    grid = np.sort(_grid(grid))
    if grid.size == 0:
        raise ValueError("empty rho grid")
    inf_psi = pair.psi(pair.x0)
    points = [phi_of_rho(pair, float(r), budget, seed) for r in grid]
    vals = np.array([pt.phi_hat for pt in points])
    w = max(1, min(int(window), vals.size))
    return ThresholdReport(
        grid=grid,
        points=points,
        window=w,
        gamma_hat=float(vals[-w:].min()),
        delta_hat=float(vals[:w].min()),
        lambda_star_hat=float(vals.min()),
        inf_psi=float(inf_psi),
        sup_I=float("inf") if pair.coercive else float(grid[-1]),
        envelope_right=np.minimum.accumulate(vals[::-1])[::-1],
        envelope_left=np.minimum.accumulate(vals),
    )


def lambda_star(pair: EnergyPair, grid, budget: int = 8, seed: int = 0) -> float:
    """Infimum over the grid of the closed-sublevel quotient (convex pairs only)."""
    if not pair.convex:
        raise ValueError("lambda* is defined for convex, coercive pairs")
    grid = _grid(grid)
    return float(min(phi_of_rho(pair, float(r), budget, seed).phi_hat for r in grid))
