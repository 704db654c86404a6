"""Sublevel-constrained minimization, ladders of local minima, mountain-pass search."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .optim import projected_descent
from .pairs import EnergyPair
from .parallel import ordered_map, rng_for
from .varprinciple import InfeasibleStartError

INCREASING = "increasing"
DECREASING = "decreasing"
DISTINCT_TOL = 1e-6
ZERO_TOL = 1e-9


@dataclass
class LocalMin:
    point: np.ndarray
    psi: float
    phi: float
    mu: float
    rho: float
    grad_norm: float
    interior: bool
    converged: bool
    curvature_ok: bool
    residual: Optional[float] = None
    iterations: int = 0

    @property
    def energy(self):
        return self.phi + self.mu * self.psi


@dataclass
class HuntReport:
    mode: str
    mu: float
    levels: list
    accepted: list
    rows: list  # one dict per examined candidate
    stopped: str  # "ladder-end" | "stagnation"

    @property
    def evidence(self):
        n = len(self.accepted)
        if n >= 2:
            return "sequence-of-local-minima"
        return "global-minimum" if n == 1 else "none"

    def as_json(self):
        return {
            "mode": self.mode,
            "mu": self.mu,
            "levels": [float(r) for r in self.levels],
            "accepted": len(self.accepted),
            "accepted_psi": [float(m.psi) for m in self.accepted],
            "accepted_energy": [float(m.energy) for m in self.accepted],
            "stopped": self.stopped,
            "evidence": self.evidence,
        }


@dataclass
class MountainPassResult:
    end_a: np.ndarray
    end_b: np.ndarray
    path: np.ndarray
    point: Optional[np.ndarray]
    energy: float
    grad_norm: float
    residual: Optional[float]
    profile: np.ndarray
    status: str  # "success" | "collapse" | "nonconverged"
    iterations: int = 0

    @property
    def success(self):
        return self.status == "success"


def _sup(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def _interior_tol(rho):
    return 1e-8 * max(1.0, abs(rho))


def newton_polish(pair: EnergyPair, mu, x, tol=1e-13, maxiter=40):
    """Damped Newton on grad(Phi + mu Psi) = 0, backtracking on the gradient sup-norm."""
    x = np.array(x, dtype=float)
    g = pair.energy_grad(x, mu)
    r = _sup(g)
    for _ in range(maxiter):
        if r <= tol:
            break
        try:
            step = np.linalg.solve(pair.hessian(x, mu), -g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-6:
            y = x + t * step
            gy = pair.energy_grad(y, mu)
            ry = _sup(gy)
            if np.isfinite(ry) and ry < r:
                break
            t *= 0.5
        else:
            break
        x, g, r = y, gy, ry
    return x, r


def _curvature_ok(pair, mu, x, seed):
    # second differences along 2m random unit directions, step 1e-4
    rng = rng_for(seed, 99)
    h = 1e-4
    e0 = pair.energy(x, mu)
    slack = 1e-12 * (1.0 + abs(e0))
    for _ in range(2 * pair.dim):
        d = rng.standard_normal(pair.dim)
        d /= np.linalg.norm(d)
        if pair.energy(x + h * d, mu) + pair.energy(x - h * d, mu) - 2.0 * e0 < -slack:
            return False
    return True


def minimize_sublevel(pair: EnergyPair, mu: float, rho: float, start=None, gtol=None,
                      maxiter: int = 5000, polish: bool = True, seed: int = 0,
                      max_step: float = 0.02) -> LocalMin:
    """Minimize Phi + mu Psi over {Psi < rho} from ``start``; certify the result."""
    gtol = pair.gtol if gtol is None else gtol
    x = pair.x0 if start is None else np.asarray(start, dtype=float)
    if not pair.psi(x) < rho:
        raise InfeasibleStartError(f"start has Psi={pair.psi(x)!r} >= rho={rho!r}")

    res = projected_descent(lambda y: pair.energy(y, mu), lambda y: pair.energy_grad(y, mu),
                            x, pair.psi, rho, pair.x0, precondition=pair.precondition,
                            gtol=min(gtol, 1e-10), maxiter=maxiter, max_step=max_step,
                            norm=pair.norm)
    x = res.x
    tol = _interior_tol(rho)
    if polish and pair.psi(x) < rho - tol:
        y, _ = newton_polish(pair, mu, x)
        # keep the polish only if it stays in the well it started from
        if (pair.psi(y) < rho - tol and pair.energy(y, mu) <= res.value + 1e-9 * (1 + abs(res.value))
                and _sup(pair.energy_grad(y, mu)) <= _sup(pair.energy_grad(x, mu))):
            x = y
    gnorm = _sup(pair.energy_grad(x, mu))
    psi = pair.psi(x)
    return LocalMin(
        point=x,
        psi=psi,
        phi=pair.phi(x),
        mu=float(mu),
        rho=float(rho),
        grad_norm=gnorm,
        interior=bool(psi < rho - tol),
        converged=gnorm <= gtol,
        curvature_ok=_curvature_ok(pair, mu, x, seed),
        residual=pair.residual(x, mu),
        iterations=res.iterations,
    )


def recertify(pair: EnergyPair, m: LocalMin, gtol=None, res_tol=1e-6) -> bool:
    """Recompute gradient, level and residual from the stored coordinates."""
    gtol = pair.gtol if gtol is None else gtol
    x = np.asarray(m.point, dtype=float)
    ok = _sup(pair.energy_grad(x, m.mu)) <= gtol and pair.psi(x) < m.rho
    if pair.model is not None:
        ok = ok and pair.residual(x, m.mu) <= res_tol
    return bool(ok)


# -- ladders -------------------------------------------------------------------


def ladder_levels(start: float, levels: int, mode: str = INCREASING, factor: float = 4.0):
    f = factor if mode == INCREASING else 1.0 / factor
    return [float(start * f**i) for i in range(int(levels))]


def _distinct(x, others):
    for y in others:
        scale = 1.0 + max(_sup(x), _sup(y))
        if _sup(x - y) / scale <= DISTINCT_TOL:
            return False
    return True


def _hunt(pair, mu, levels, mode, budget, seed, stagnation, gtol, res_tol):
    gtol = pair.gtol if gtol is None else gtol
    zero_is_min = not np.any(pair.x0)
    accepted, rows = [], []
    idle = 0
    stopped = "ladder-end"
    for li, rho in enumerate(levels):
        starts = []
        if accepted and pair.psi(accepted[-1].point) < rho:
            starts.append(accepted[-1].point)
        if pair.psi(pair.x0) < rho:
            starts.append(pair.x0.copy())
        starts += [pair.sample(rng_for(seed, 2, li, i), rho) for i in range(budget)]
        starts = [s for s in starts if pair.psi(s) < rho]

        def run(item, rho=rho, li=li):
            i, s = item
            return minimize_sublevel(pair, mu, rho, s, gtol=gtol, seed=seed * 7919 + li * 131 + i)

        found = ordered_map(run, list(enumerate(starts)))
        sign = 1.0 if mode == INCREASING else -1.0
        order = sorted(range(len(found)), key=lambda i: (sign * found[i].psi, i))
        new = 0
        for i in order:
            m = found[i]
            reason = ""
            if not m.converged:
                reason = "not-converged"
            elif not m.interior:
                reason = "boundary"
            elif not m.curvature_ok:
                reason = "curvature"
            elif m.residual is not None and m.residual > res_tol:
                reason = "residual"
            elif mode == DECREASING and zero_is_min and _sup(m.point) <= ZERO_TOL:
                reason = "zero"
            elif not _distinct(m.point, [a.point for a in accepted]):
                reason = "duplicate"
            elif accepted and not (m.psi > accepted[-1].psi if mode == INCREASING
                                   else m.psi < accepted[-1].psi):
                reason = "not-monotone"
            if not reason:
                accepted.append(m)
                new += 1
            rows.append({
                "level_index": li,
                "rho": rho,
                "psi": m.psi,
                "phi": m.phi,
                "energy": m.energy,
                "grad_norm": m.grad_norm,
                "residual": m.residual,
                "accepted": int(not reason),
                "reject_reason": reason,
            })
        # stagnation counts only once something has been accepted
        idle = 0 if new else idle + bool(accepted)
        if stagnation and idle >= stagnation:
            stopped = "stagnation"
            levels = levels[: li + 1]
            break
    return HuntReport(mode, float(mu), list(levels), accepted, rows, stopped)


def hunt_increasing(pair: EnergyPair, mu: float, levels, budget: int = 8, seed: int = 0,
                    stagnation: int = 3, gtol=None, res_tol: float = 1e-6) -> HuntReport:
    """Climb an increasing rho ladder collecting distinct interior local minima."""
    levels = [float(r) for r in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("increasing hunt needs a strictly increasing ladder")
    return _hunt(pair, mu, levels, INCREASING, budget, seed, stagnation, gtol, res_tol)


def hunt_decreasing(pair: EnergyPair, mu: float, levels, budget: int = 8, seed: int = 0,
                    stagnation: int = 3, gtol=None, res_tol: float = 1e-6) -> HuntReport:
    """Descend a rho ladder toward inf Psi; nonzero minima only when 0 minimizes Psi."""
    levels = [float(r) for r in levels]
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise ValueError("decreasing hunt needs a strictly decreasing ladder")
    return _hunt(pair, mu, levels, DECREASING, budget, seed, stagnation, gtol, res_tol)


# -- mountain pass ---------------------------------------------------------------


def _inner(pair, u, v):
    return float(u @ pair.metric @ v) if pair.metric is not None else float(u @ v)


def _reparametrize(pair, path):
    seg = np.array([pair.norm(path[i + 1] - path[i]) for i in range(len(path) - 1)])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0.0:
        return path
    s /= s[-1]
    target = np.linspace(0.0, 1.0, len(path))
    out = np.empty_like(path)
    for j in range(path.shape[1]):
        out[:, j] = np.interp(target, s, path[:, j])
    out[0], out[-1] = path[0], path[-1]
    return out


def _finish(pair, mu, a, b, path, profile, x, ends, tol, it):
    x, _ = newton_polish(pair, mu, x)
    gnorm = _sup(pair.energy_grad(x, mu))
    res = pair.residual(x, mu)
    e = pair.energy(x, mu)
    certificate = res if res is not None else gnorm
    if e < ends - 1e-12 or _sup(x - a) <= 1e-9 * (1 + _sup(a)) or _sup(x - b) <= 1e-9 * (1 + _sup(b)):
        status = "collapse"
    elif certificate <= tol:
        status = "success"
    else:
        status = "nonconverged"
    return MountainPassResult(a, b, path, x, e, gnorm, res, profile, status, it)


def mountain_pass(pair: EnergyPair, mu: float, end_a, end_b, K: int = 33,
                  iterations: int = 2000, step: float = 0.05, climb: int = 500,
                  tol=None, method: str = "auto") -> MountainPassResult:
    """Mountain-pass critical point between ``end_a`` and ``end_b``.

    ``method="string"`` evolves a discrete path (arc-length reparametrized) and
    finishes with a climbing image; ``"ray"`` maximizes the energy along rays out
    of ``end_a`` and descends the ray maxima.  ``"auto"`` picks the ray scheme for
    finite element pairs, whose energies fall off without bound past the pass.
    """
    tol = (1e-4 if pair.model is not None else 1e-6) if tol is None else tol
    a = np.asarray(end_a, dtype=float)
    b = np.asarray(end_b, dtype=float)
    if method == "auto":
        method = "ray" if pair.model is not None else "string"
    if method not in ("ray", "string"):
        raise ValueError(f"unknown mountain-pass method {method!r}")
    if _sup(a - b) == 0.0:
        t = np.linspace(0.0, 1.0, K)[:, None]
        path = (1 - t) * a + t * b
        e = pair.energy(a, mu)
        return MountainPassResult(a, b, path, None, e, float("inf"), None,
                                  np.full(K, e), "collapse")
    if method == "ray":
        return _ray_pass(pair, mu, a, b, K, iterations, tol)
    return _string_pass(pair, mu, a, b, K, iterations, step, climb, tol)


def _string_pass(pair, mu, a, b, K, iterations, step, climb, tol):
    t = np.linspace(0.0, 1.0, K)[:, None]
    path = (1 - t) * a + t * b

    def E(x):
        return pair.energy(x, mu)

    def G(x):
        return pair.precondition(pair.energy_grad(x, mu))

    ends = max(E(a), E(b))
    it = 0
    for it in range(1, iterations + 1):
        moved = path.copy()
        cap = 0.25 * pair.norm(path[1] - path[0])
        for i in range(1, K - 1):
            d = step * G(path[i])
            n = pair.norm(d)
            # keep explicit steps stable where the energy falls off steeply
            moved[i] = path[i] - (d * (cap / n) if n > cap else d)
        moved = _reparametrize(pair, moved)
        shift = max(pair.norm(moved[i] - path[i]) for i in range(K))
        path = moved
        if shift <= 1e-6 * (1.0 + max(pair.norm(x) for x in path)):
            break

    profile = np.array([E(x) for x in path])
    imax = int(np.argmax(profile[1:-1])) + 1
    if profile[imax] <= ends:
        return MountainPassResult(a, b, path, None, float(profile[imax]), float("inf"), None,
                                  profile, "collapse", it)

    # climbing image: ascend along the path tangent, descend across it
    x = path[imax].copy()
    for _ in range(climb):
        tau = path[imax + 1] - path[imax - 1]
        nt = pair.norm(tau)
        if nt == 0.0:
            break
        tau = tau / nt
        d = G(x)
        along = _inner(pair, tau, d)
        x = x - step * (d - 2.0 * along * tau)
    return _finish(pair, mu, a, b, path, profile, x, ends, tol, it)


def _ray_max(pair, mu, a, d, t_hint):
    """(t, E) maximizing E(a + t d) for t > 0, or None when the ray never falls below E(a)."""
    e0 = pair.energy(a, mu)

    def h(t):
        return pair.energy(a + t * d, mu)

    ts = t_hint * np.linspace(0.0, 2.0, 41)[1:]
    for _ in range(60):
        hs = np.array([h(t) for t in ts])
        if hs[-1] < e0:
            break
        ts = ts * 2.0
    else:
        return None
    k = int(np.argmax(hs))
    lo = ts[k - 1] if k > 0 else 0.0
    hi = ts[min(k + 1, ts.size - 1)]
    r = minimize_scalar(lambda t: -h(t), bounds=(lo, hi), method="bounded",
                        options={"xatol": 1e-12 * hi})
    t = float(r.x) if -r.fun >= hs[k] else float(ts[k])
    return t, h(t)


def _ray_pass(pair, mu, a, b, K, iterations, tol):
    ends = max(pair.energy(a, mu), pair.energy(b, mu))
    d = (b - a) / pair.norm(b - a)
    found = _ray_max(pair, mu, a, d, pair.norm(b - a))
    it = 0
    if found is not None:
        t, e = found
        w = a + t * d
        s = 1.0

        def trial(step, g):
            v = w - step * g
            nv = pair.norm(v - a)
            if nv == 0.0:
                return None
            r = _ray_max(pair, mu, a, (v - a) / nv, nv)
            return None if r is None else (r[1], r[0], (v - a) / nv)

        for it in range(1, iterations + 1):
            g = pair.precondition(pair.energy_grad(w, mu))
            if pair.norm(g) <= 1e-10 * (1.0 + pair.norm(w - a)):
                break
            # backtrack to the first step that lowers the ray maximum, then keep
            # halving while that still helps
            best = None
            while s > 1e-14:
                best = trial(s, g)
                if best is not None and best[0] < e:
                    break
                s *= 0.5
            else:
                break
            while s > 1e-14:
                nxt = trial(0.5 * s, g)
                if nxt is None or nxt[0] >= best[0]:
                    break
                best, s = nxt, 0.5 * s
            stalled = e - best[0] <= 1e-15 * (1.0 + abs(e))
            e, t, d = best
            w = a + t * d
            s *= 2.0
            if stalled:
                break
    if found is None or e <= ends:
        path = a + np.linspace(0.0, 1.0, K)[:, None] * (b - a)
        profile = np.array([pair.energy(x, mu) for x in path])
        return MountainPassResult(a, b, path, None, float(profile.max()), float("inf"), None,
                                  profile, "collapse", it)
    path = a + np.linspace(0.0, 2.0 * t, K)[:, None] * d
    profile = np.array([pair.energy(x, mu) for x in path])
    return _finish(pair, mu, a, b, path, profile, w, ends, tol, it)
