"""Continuation of the small positive branch of -u'' = f(x,u) + lam g(x,u), u = 0 on the boundary."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fem, hypotheses
from .optim import projected_descent
from .pairs import fem_pair

RES_TOL = 1e-8
SIGN_TOL = 1e-10
ZERO_TOL = 1e-12
ENERGY_RTOL = 1e-12
RATIO_SPREAD = 10.0
MU = 0.5  # E = Phi + Psi/2 with Psi = int |u'|^2


@dataclass(frozen=True)
class BranchModel:
    """f = alpha xi^s and g = beta xi^q unless explicit expressions are given."""

    alpha: str = "1"
    s: float = 3.0
    beta: str = "1"
    q: float = 0.5
    f: Optional[str] = None
    g: Optional[str] = None
    n_elements: int = 64

    def __post_init__(self):
        if not self.s > 1:
            raise ValueError("s must exceed 1")
        if not 0 < self.q < 1:
            raise ValueError("q must lie strictly between 0 and 1")

    @property
    def f_expr(self):
        return self.f if self.f is not None else f"({self.alpha})*xi^({self.s!r})"

    @property
    def g_expr(self):
        return self.g if self.g is not None else f"({self.beta})*xi^({self.q!r})"

    @property
    def exponent(self):
        return self.q / (1.0 - self.q)

    def energy_model(self, lam):
        space = fem.FeSpace(fem.Mesh1D.uniform(self.n_elements), fem.DIRICHLET)
        return fem.EnergyModel(space, 2, ((1.0, self.f_expr), (float(lam), self.g_expr)),
                               positive_part=True)

    def warm_start(self, lam):
        """Sublinear-regime guess (lam beta / 8)^(1/(1-q)) * 4x(1-x)."""
        space = fem.FeSpace(fem.Mesh1D.uniform(self.n_elements), fem.DIRICHLET)
        x = space.mesh.nodes
        try:
            beta = float(self.beta)
        except ValueError:
            beta = 1.0
        amp = (lam * abs(beta) / 8.0) ** (1.0 / (1.0 - self.q))
        return space.restrict(amp * 4.0 * x * (1.0 - x))


@dataclass
class BranchPoint:
    lam: float
    u: fem.DiscreteFn
    c1proxy: float
    ratio: float
    energy: float
    residual: float
    iters: int
    min_value: float
    flag: str = "ok"

    @property
    def converged(self):
        return self.flag == "ok"


def _certify(model: BranchModel, lam, u: fem.DiscreteFn):
    m = model.energy_model(lam)
    c1 = fem.norms(u, 2)["c1proxy"]
    energy = fem.assemble_phi(m, u) + MU * fem.assemble_psi(m, u)
    res = fem.residual(m, u, 1.0 / m.mu_scale(MU))
    vals = u.values
    interior = vals[1:-1] if vals.size > 2 else vals
    return c1, c1 / lam**model.exponent, float(energy), float(res), float(np.min(interior))


def recertify(model: BranchModel, pt: BranchPoint) -> dict:
    """Recompute norm, ratio, energy, residual and sign from the stored coefficients."""
    c1, ratio, energy, res, lo = _certify(model, pt.lam, pt.u)
    return {"c1proxy": c1, "ratio": ratio, "energy": energy, "residual": res, "min_value": lo}


def solve_plambda(model: BranchModel, lam: float, warm_start=None, maxiter: int = 5000) -> BranchPoint:
    """Energy descent from the warm start, then Newton on the weak-form system."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    m = model.energy_model(lam)
    pair = fem_pair(m)
    x = model.warm_start(lam) if warm_start is None else np.asarray(warm_start, dtype=float)
    res = projected_descent(lambda y: pair.energy(y, MU), lambda y: pair.energy_grad(y, MU),
                            x, pair.psi, np.inf, pair.x0, precondition=pair.precondition,
                            gtol=1e-12, maxiter=maxiter)
    # tiny branch amplitudes need a tolerance relative to the solution size
    size = float(np.max(np.abs(res.x))) if res.x.size else 0.0
    tol = 1e-12 * min(1.0, max(size, 1e-4))
    scale = 1.0 / m.mu_scale(MU)
    u, ok, its = fem.newton_solve(m, pair.fn(res.x), MU, tol=tol)
    flag = "ok"
    if not ok and fem.residual(m, pair.fn(res.x), scale) < fem.residual(m, u, scale):
        u = pair.fn(res.x)
    c1, ratio, energy, r, lo = _certify(model, lam, u)
    if np.max(np.abs(u.coeffs)) <= ZERO_TOL:
        flag = "converged-to-zero"
    elif r > RES_TOL:
        flag = "residual" if ok else "newton-failed"
    elif lo < -SIGN_TOL:
        flag = "negative"
    return BranchPoint(float(lam), u, c1, ratio, energy, r, res.iterations + its, lo, flag)


@dataclass
class Branch:
    model: BranchModel
    lambdas: np.ndarray
    points: list
    flag: str
    verdicts: dict = field(default_factory=dict)
    hypotheses: dict = field(default_factory=dict)

    @property
    def converged(self):
        return [p for p in self.points if p.converged]

    def as_json(self):
        return {
            "flag": self.flag,
            "verdicts": self.verdicts,
            "hypotheses": self.hypotheses,
            "lambda_grid": [float(v) for v in self.lambdas],
            "converged_points": len(self.converged),
        }


def geometric(start, stop, num):
    return np.geomspace(start, stop, int(num))


def _verdicts(model, pts):
    out = {}
    if not pts:
        return {k: "inconclusive" for k in
                ("energy_negative", "energy_decreasing", "ratio_bounded", "norms_to_zero")}
    E = np.array([p.energy for p in pts])
    out["energy_negative"] = "pass" if np.all(E < 0) else "fail"
    # traversal runs toward smaller lambda, so energies must rise
    inc = all(b > a + ENERGY_RTOL * max(abs(a), abs(b)) for a, b in zip(E, E[1:]))
    out["energy_decreasing"] = "pass" if inc else "fail"
    r = np.array([p.ratio for p in pts])
    tail = r[len(r) // 2:]
    spread = float(tail.max() / tail.min()) if tail.min() > 0 else float("inf")
    out["ratio_bounded"] = "pass" if spread <= RATIO_SPREAD else "fail"
    out["ratio_tail_spread"] = spread
    c = np.array([p.c1proxy for p in pts])
    out["norms_to_zero"] = "pass" if len(c) > 1 and np.all(np.diff(c) < 0) else "fail"
    out["lambda_star_lower_bound"] = float(max(p.lam for p in pts))
    out["lambda_star_note"] = "largest grid lambda reached by the branch (empirical lower bound)"
    out["min_interior_value"] = float(min(p.min_value for p in pts))
    return out


def continue_branch(model: BranchModel, lambdas, budget: int = 5000) -> Branch:
    """Warm-started continuation along a decreasing lambda grid (at least 8 points)."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size < 8:
        raise ValueError("continuation needs at least 8 lambda values")
    if np.any(np.diff(lambdas) >= 0) or lambdas[-1] <= 0:
        raise ValueError("lambda grid must be positive and strictly decreasing")
    checks = hypotheses.check_thm7(model.f_expr, model.g_expr, model.s, model.q)
    hyp = {k: v.label for k, v in checks.items()}
    applicable = all(v.status != hypotheses.FAILS for k, v in checks.items() if k != "thm7.pos")
    points = []
    flag = "ok"
    warm = None
    prev = None
    for lam in lambdas:
        if warm is not None:
            # small-solution scaling u ~ lam^(1/(1-q)) carries the shape forward
            warm = warm * (lam / prev) ** (1.0 / (1.0 - model.q))
        pt = solve_plambda(model, lam, warm, budget)
        points.append(pt)
        if pt.flag == "converged-to-zero":
            flag = "branch-lost"
            break
        if pt.converged:
            warm, prev = pt.u.coeffs, lam
    good = [p for p in points if p.converged]
    verdicts = _verdicts(model, good)
    if not applicable:
        verdicts["applicability"] = "not-applicable (hypotheses fail)"
    else:
        verdicts["applicability"] = "applicable"
    return Branch(model, lambdas, points, flag, verdicts, hyp)


def bifurcation_evidence(branch_or_points) -> dict:
    """Does (c1proxy, lam) head monotonically to (0, 0) along the branch tail?"""
    pts = branch_or_points.converged if isinstance(branch_or_points, Branch) else list(branch_or_points)
    if not pts:
        return {"evidence": "inconclusive", "table": []}
    table = [{"lambda": p.lam, "c1proxy": p.c1proxy} for p in pts]
    tail = pts[len(pts) // 2:]
    if len(tail) < 2:
        return {"evidence": "inconclusive", "table": table}
    lam = np.array([p.lam for p in tail])
    c = np.array([p.c1proxy for p in tail])
    toward = bool(np.all(np.diff(lam) < 0) and np.all(np.diff(c) < 0) and c[-1] < 0.5 * c[0])
    return {"evidence": "yes" if toward else "no", "table": table}
