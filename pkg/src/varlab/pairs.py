"""Finite-dimensional pairs (Phi, Psi) with gradients, plus the toy catalogue."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import fem


@dataclass(eq=False)
class EnergyPair:
    dim: int
    phi: Callable
    phi_grad: Callable
    psi: Callable
    psi_grad: Callable
    x0: np.ndarray = None
    coercive: bool = True
    convex: bool = False
    radius: Optional[Callable] = None  # half-width of a box covering {psi <= rho}
    metric: Optional[np.ndarray] = None  # SPD preconditioner for descent
    hess: Optional[Callable] = None  # (x, mu) -> Hessian of phi + mu*psi
    model: Optional[fem.EnergyModel] = None
    name: str = "pair"
    gtol: float = 1e-8
    _metric_factor: object = field(default=None, repr=False)

    def __post_init__(self):
        self.x0 = np.zeros(self.dim) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if self.metric is not None:
            self._metric_factor = np.linalg.cholesky(self.metric)

    @property
    def kind(self):
        return "fem" if self.model is not None else "toy"

    def energy(self, x, mu):
        return self.phi(x) + mu * self.psi(x)

    def energy_grad(self, x, mu):
        return self.phi_grad(x) + mu * self.psi_grad(x)

    def precondition(self, g):
        """Metric gradient: solve metric * d = g."""
        if self._metric_factor is None:
            return g
        L = self._metric_factor
        return np.linalg.solve(L.T, np.linalg.solve(L, g))

    def norm(self, v):
        if self.metric is None:
            return float(np.linalg.norm(v))
        return float(np.sqrt(max(v @ self.metric @ v, 0.0)))

    def hessian(self, x, mu):
        if self.hess is not None:
            return self.hess(x, mu)
        return fd_hessian(lambda y: self.energy_grad(y, mu), x)

    def residual(self, x, mu):
        """Weak-form defect for FEM-backed pairs, None otherwise."""
        if self.model is None:
            return None
        u = fem.DiscreteFn(self.model.space, x)
        return fem.residual(self.model, u, 1.0 / self.model.mu_scale(mu))

    def fn(self, x):
        return fem.DiscreteFn(self.model.space, x)

    # -- start points -----------------------------------------------------

    def sample(self, rng, rho):
        """A start point with psi <= rho."""
        if self.model is not None or self.radius is None:
            return self._ray_sample(rng, rho)
        R = self.radius(rho)
        y = rng.uniform(-R, R, size=self.dim)
        if self.psi(y) > rho:
            y = restore(self.psi, self.x0, y, rho)
        return y

    def _direction(self, rng):
        if self.model is None:
            d = rng.standard_normal(self.dim)
            return d / np.linalg.norm(d)
        space = self.model.space
        mesh = space.mesh
        t = (mesh.nodes - mesh.a) / (mesh.b - mesh.a)
        modes = min(8, space.dim)
        full = np.zeros(mesh.nodes.size)
        if space.bc == fem.DIRICHLET:
            for j in range(1, modes + 1):
                full += rng.standard_normal() / j * np.sin(j * np.pi * t)
        elif rng.uniform() < 0.5:
            # pure constant mode: under the stiffness+mass metric every mode decays at
            # the same rate, so mixed starts rarely settle in narrow constant wells
            full += np.sign(rng.standard_normal())
        else:
            for j in range(0, modes):
                full += rng.standard_normal() / (1 + j) ** 2 * np.cos(j * np.pi * t)
        return space.restrict(full)

    def _ray_sample(self, rng, rho):
        d = self._direction(rng)
        base = self.psi(self.x0)
        target = base + rng.uniform() * (rho - base)
        hi = 1.0
        for _ in range(200):
            if self.psi(self.x0 + hi * d) >= target:
                break
            hi *= 2.0
        lo = 0.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if self.psi(self.x0 + mid * d) <= target:
                lo = mid
            else:
                hi = mid
        return self.x0 + lo * d


def restore(psi, x0, y, rho, iters=200):
    """Pull y toward x0 along the segment until psi <= rho (largest such t)."""
    if psi(y) <= rho:
        return np.array(y, dtype=float)
    lo, hi = 0.0, 1.0
    d = np.asarray(y, dtype=float) - x0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if psi(x0 + mid * d) <= rho:
            lo = mid
        else:
            hi = mid
    return x0 + lo * d


def fd_hessian(grad, x, rel=1e-6):
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        h = rel * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (grad(x + e) - grad(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


# -- toys ------------------------------------------------------------------


def _sq(x):
    return float(x @ x)


def linear_quadratic():
    """Phi = -x, Psi = x^2 on R; phi(rho) = 1/(2 sqrt(rho))."""
    return EnergyPair(
        1,
        phi=lambda x: -float(x[0]),
        phi_grad=lambda x: np.array([-1.0]),
        psi=_sq,
        psi_grad=lambda x: 2.0 * x,
        convex=True,
        radius=lambda rho: np.sqrt(rho),
        name="linear-quadratic",
    )


def constant(c=0.0, dim=1):
    return EnergyPair(
        dim,
        phi=lambda x: float(c),
        phi_grad=lambda x: np.zeros(dim),
        psi=_sq,
        psi_grad=lambda x: 2.0 * x,
        convex=True,
        radius=lambda rho: np.sqrt(rho),
        name="constant",
    )


def shared_quadratic():
    return EnergyPair(
        1,
        phi=_sq,
        phi_grad=lambda x: 2.0 * x,
        psi=_sq,
        psi_grad=lambda x: 2.0 * x,
        convex=True,
        radius=lambda rho: np.sqrt(rho),
        name="shared-quadratic",
    )


def norm_pair():
    """Phi = x^2, Psi = |x|: lambda* = 0 yet minima exist for every lambda > 0."""
    return EnergyPair(
        1,
        phi=_sq,
        phi_grad=lambda x: 2.0 * x,
        psi=lambda x: float(np.abs(x).sum()),
        psi_grad=lambda x: np.sign(x),
        convex=True,
        radius=lambda rho: rho,
        name="norm",
    )


def double_well():
    """Phi = (x^2-1)^2 + y^2 with Psi = |.|^2; used at mu = 0."""

    def phi(z):
        return float((z[0] ** 2 - 1.0) ** 2 + z[1] ** 2)

    def phi_grad(z):
        return np.array([4.0 * z[0] * (z[0] ** 2 - 1.0), 2.0 * z[1]])

    return EnergyPair(
        2, phi=phi, phi_grad=phi_grad, psi=_sq, psi_grad=lambda z: 2.0 * z,
        radius=lambda rho: np.sqrt(rho), name="double-well",
        hess=lambda z, mu: np.array([[12.0 * z[0] ** 2 - 4.0 + 2 * mu, 0.0],
                                     [0.0, 2.0 + 2 * mu]]),
    )


def oscillating():
    """Phi = x^4 sin^2(1/x), extended by 0 at the origin; Psi = x^2."""

    def phi(x):
        t = float(x[0])
        return 0.0 if t == 0.0 else t**4 * np.sin(1.0 / t) ** 2

    def phi_grad(x):
        t = float(x[0])
        if t == 0.0:
            return np.zeros(1)
        s, c = np.sin(1.0 / t), np.cos(1.0 / t)
        return np.array([4.0 * t**3 * s * s - 2.0 * t**2 * s * c])

    return EnergyPair(1, phi=phi, phi_grad=phi_grad, psi=_sq, psi_grad=lambda x: 2.0 * x,
                      radius=lambda rho: np.sqrt(rho), name="oscillating")


TOYS = {
    "linear-quadratic": linear_quadratic,
    "constant": constant,
    "shared-quadratic": shared_quadratic,
    "norm": norm_pair,
    "double-well": double_well,
    "oscillating": oscillating,
}


def fem_pair(model: fem.EnergyModel, name="fem") -> EnergyPair:
    """Wrap an EnergyModel as a pair over its free nodal coefficients."""
    space = model.space
    metric = fem.stiffness(space)
    if space.bc == fem.NEUMANN:
        metric = metric + fem.mass(space)

    def wrap(fun):
        return lambda x: fun(model, fem.DiscreteFn(space, x))

    return EnergyPair(
        space.dim,
        phi=wrap(fem.assemble_phi),
        phi_grad=wrap(fem.grad_phi),
        psi=wrap(fem.assemble_psi),
        psi_grad=wrap(fem.grad_psi),
        convex=False,
        metric=metric,
        hess=lambda x, mu: fem.hessian(model, fem.DiscreteFn(space, x), mu),
        model=model,
        name=name,
        gtol=1e-6,
    )
