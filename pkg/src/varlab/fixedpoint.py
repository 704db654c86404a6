"""Fixed points of potential operators A = P' on R^m via the ball quotient."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .minhunt import minimize_sublevel
from .pairs import EnergyPair
from .parallel import rng_for
from .varprinciple import inf_phi_on_sublevel, phi_of_rho

FP_TOL = 1e-6
HALF_MARGIN = 1e-8  # phi_hat must clear 1/2 by this much before a claim is made
STRADDLE_MARGIN = 0.02


@dataclass(eq=False)
class PotentialSpec:
    dim: int
    P: Callable
    A: Callable
    name: str = "potential"

    def pair(self) -> EnergyPair:
        """Phi = -P and Psi = |x|^2, so the sublevel sets are balls."""
        return EnergyPair(
            self.dim,
            phi=lambda x: -float(self.P(x)),
            phi_grad=lambda x: -np.asarray(self.A(x), dtype=float),
            psi=lambda x: float(x @ x),
            psi_grad=lambda x: 2.0 * x,
            radius=np.sqrt,
            name=self.name,
        )

    def gradient_error(self, samples=20, seed=0, h=1e-6):
        """Worst relative mismatch between A and central differences of P."""
        rng = rng_for(seed, 5)
        worst = 0.0
        for _ in range(samples):
            x = rng.uniform(-3.0, 3.0, self.dim)
            fd = np.empty(self.dim)
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = h
                fd[i] = (self.P(x + e) - self.P(x - e)) / (2 * h)
            a = np.asarray(self.A(x), dtype=float)
            worst = max(worst, float(np.max(np.abs(a - fd)) / max(1.0, np.max(np.abs(a)))))
        return worst


@dataclass
class FpReport:
    rho: float
    phi_hat: float
    below_half: bool
    point: Optional[np.ndarray] = None
    defect: Optional[float] = None
    norm: Optional[float] = None
    flag: str = "ok"
    scan: list = field(default_factory=list)

    @property
    def found(self):
        return self.point is not None

    def as_json(self):
        out = {
            "rho": self.rho,
            "phi_hat": self.phi_hat,
            "below_half": self.below_half,
            "flag": self.flag,
            "fixed_point": None,
        }
        if self.point is not None:
            out["fixed_point"] = [float(v) for v in self.point]
            out["defect"] = self.defect
            out["norm"] = self.norm
        return out


@dataclass
class ScanReport:
    radii: np.ndarray
    sup_estimate: np.ndarray
    ratio: np.ndarray
    straddles: bool
    tail_min: float
    tail_max: float

    def as_json(self):
        return {
            "straddles": self.straddles,
            "tail_min": self.tail_min,
            "tail_max": self.tail_max,
            "margin": STRADDLE_MARGIN,
        }


def fp_phi(spec: PotentialSpec, rho: float, budget: int = 8, seed: int = 0) -> float:
    if not rho > 0:
        raise ValueError("rho must be positive")
    return phi_of_rho(spec.pair(), rho, budget, seed).phi_hat


def certify(spec: PotentialSpec, x, rho) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.linalg.norm(spec.A(x) - x) <= FP_TOL and x @ x < rho)


def find_fixed_point(spec: PotentialSpec, rho: float, budget: int = 8, seed: int = 0) -> FpReport:
    """Minimize |x|^2/2 - P over the open ball when the quotient test passes."""
    pair = spec.pair()
    phi_hat = phi_of_rho(pair, rho, budget, seed).phi_hat
    below = phi_hat < 0.5 - HALF_MARGIN
    rep = FpReport(float(rho), float(phi_hat), bool(below))
    if not below:
        rep.flag = "verdict-only"
        return rep
    starts = [pair.x0] + [pair.sample(rng_for(seed, 3, i), rho) for i in range(1, budget)]
    for s in starts:
        if not pair.psi(s) < rho:
            continue
        m = minimize_sublevel(pair, 0.5, rho, s, gtol=1e-12, seed=seed)
        if certify(spec, m.point, rho):
            rep.point = m.point
            rep.defect = float(np.linalg.norm(spec.A(m.point) - m.point))
            rep.norm = float(np.linalg.norm(m.point))
            return rep
    rep.flag = "descent-failed"
    return rep


def thm5_scan(spec: PotentialSpec, radii, samples: int = 8, seed: int = 0) -> ScanReport:
    """Tabulate sup_{|x|<=r} P / r^2 and test whether the tail straddles 1/2."""
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ValueError("radii must be positive and strictly increasing")
    pair = spec.pair()
    sup = np.array([-inf_phi_on_sublevel(pair, float(r * r), samples, seed).value for r in radii])
    # a sampled point can only under-estimate the sup; the centre is always a candidate
    sup = np.maximum(sup, float(spec.P(np.zeros(spec.dim))))
    ratio = sup / radii**2
    tail = ratio[radii.size // 2:]
    lo, hi = float(tail.min()), float(tail.max())
    return ScanReport(radii, sup, ratio, bool(lo < 0.5 - STRADDLE_MARGIN and hi > 0.5 + STRADDLE_MARGIN),
                      lo, hi)


# -- test potentials ------------------------------------------------------------


def linear(c=1.0, dim=1):
    """P(x) = c * sum(x); A is the constant vector c."""
    return PotentialSpec(dim, lambda x: c * float(np.sum(x)), lambda x: np.full(dim, float(c)),
                         name=f"linear({c})")


def constant(c=0.0, dim=1):
    return PotentialSpec(dim, lambda x: float(c), lambda x: np.zeros(dim), name=f"constant({c})")


def quadratic(k=0.5, shift=0.0, dim=1):
    """P(x) = k |x|^2 + shift."""
    return PotentialSpec(dim, lambda x: k * float(x @ x) + shift, lambda x: 2.0 * k * x,
                         name=f"quadratic({k},{shift})")


class PlateauProfile:
    """Radial profile: r^2 on [0,2], flat on [2,4], r^2 on [4,8], flat on [8,16], ...

    Corners entering a plateau are rounded by a quadratic over the preceding
    width ``w``; the climb back to r^2 at a plateau's end is a C^1 smoothstep
    over the following width ``w``.
    """

    def __init__(self, w=0.01, octaves=12):
        self.w = w
        self.corners = [2.0 * 4.0**j for j in range(octaves)]  # plateau starts

    def _locate(self, r):
        for rc in self.corners:
            if r < rc - self.w:
                return "rise", rc
            if r < rc:
                return "round", rc
            if r < 2 * rc:
                return "flat", rc
            if r < 2 * rc + self.w:
                return "step", rc
        return "rise", None

    def __call__(self, r):
        return self.value_slope(r)[0]

    def value_slope(self, r):
        w = self.w
        kind, rc = self._locate(r)
        if kind == "rise":
            return r * r, 2.0 * r
        r0 = rc - w
        top = r0 * rc
        if kind == "round":
            d = r - r0
            return r0 * r0 + 2 * r0 * d - r0 * d * d / w, 2 * r0 - 2 * r0 * d / w
        if kind == "flat":
            return top, 0.0
        rj = 2 * rc
        t = (r - rj) / w
        s, ds = t * t * (3 - 2 * t), 6 * t * (1 - t) / w
        return top + (r * r - top) * s, 2 * r * s + (r * r - top) * ds


def plateau(dim=2, w=0.01):
    prof = PlateauProfile(w)

    def P(x):
        return prof(float(np.linalg.norm(x)))

    def A(x):
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return np.zeros(dim)
        return prof.value_slope(r)[1] * x / r

    return PotentialSpec(dim, P, A, name="plateau")


POTENTIALS = {
    "linear": linear,
    "constant": constant,
    "quadratic": quadratic,
    "plateau": plateau,
}
