"""Projected descent confined to a sublevel set {psi <= rho}."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pairs import restore


@dataclass
class DescentResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    grad_norm: float


def projected_descent(fun, grad, x, psi, rho, x0, precondition=None, gtol=1e-10,
                      maxiter=1000, armijo=1e-4, max_step=None, norm=None):
    """Metric-gradient descent with backtracking.

    Trial points leaving {psi <= rho} are pulled back toward ``x0``.  Stops on a
    small gradient or when no step of length above round-off decreases ``fun``
    (a projected-stationary point); only the iteration cap counts as failure.
    With ``max_step`` a step never exceeds ``max_step * (1 + |x|)`` in ``norm``,
    which keeps the iterates in the basin they started in.
    """
    norm = norm or np.linalg.norm
    x = restore(psi, x0, np.asarray(x, dtype=float), rho)
    f = fun(x)
    g = grad(x)
    t = 1.0
    for it in range(1, maxiter + 1):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= gtol:
            return DescentResult(x, f, it - 1, True, gnorm)
        d = -(precondition(g) if precondition is not None else g)
        if max_step is not None:
            cap = max_step * (1.0 + norm(x))
            dn = norm(d)
            if t * dn > cap:
                t = cap / dn
        accepted = False
        for _ in range(80):
            y = x + t * d
            if psi(y) > rho:
                y = restore(psi, x0, y, rho)
            step = y - x
            if not np.any(step):
                t *= 0.5
                continue
            fy = fun(y)
            if np.isfinite(fy) and fy <= f + armijo * float(g @ step) and fy < f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return DescentResult(x, f, it, True, gnorm)
        shrunk = t
        x, f = y, fy
        g = grad(x)
        t = min(shrunk * 2.0, 1e6)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return DescentResult(x, f, maxiter, gnorm <= gtol, gnorm)
