"""P1 finite elements on an interval for p-Laplacian energies.

Two boundary settings are supported.  For the Dirichlet problem the free
coefficients are the interior nodal values; for the Neumann problem every
node is free.  Energies are split as

* Dirichlet: ``Psi(u) = int |u'|^p`` and ``Phi(u) = -int sum_i w_i(x) F_i(x, u)``,
  so critical points of ``Phi + mu*Psi`` solve ``-(|u'|^{p-2}u')' = f/(mu p)``;
* Neumann: ``Psi(u) = (int |u'|^p + int lam |u|^p)/p`` and
  ``Phi(u) = -int (alpha F_f + beta F_g)``, used with ``mu = 1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .dsl import Expr, Const, as_expr, distosc_bands, distosc_exponents, evaluate, primitive

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class SpaceMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("mesh needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, n_elements, a=0.0, b=1.0):
        return cls(np.linspace(a, b, int(n_elements) + 1))

    @property
    def n_elements(self):
        return self.nodes.size - 1

    @property
    def a(self):
        return float(self.nodes[0])

    @property
    def b(self):
        return float(self.nodes[-1])

    @cached_property
    def h(self):
        return np.diff(self.nodes)


@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Mesh1D
    bc: str = DIRICHLET
    n_quad: int = 4

    def __post_init__(self):
        if self.bc not in (DIRICHLET, NEUMANN):
            raise ValueError(f"unknown boundary condition {self.bc!r}")

    @property
    def dim(self):
        n = self.mesh.n_elements
        return n - 1 if self.bc == DIRICHLET else n + 1

    @cached_property
    def gauss(self):
        t, w = np.polynomial.legendre.leggauss(self.n_quad)
        return 0.5 * (t + 1.0), 0.5 * w

    @cached_property
    def _standard_plan(self):
        s, w = self.gauss
        n = self.mesh.n_elements
        e = np.repeat(np.arange(n), s.size)
        return e, np.tile(s, n), self.mesh.h[e] * np.tile(w, n)

    def full(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.dim,):
            raise SpaceMismatchError(f"expected {self.dim} coefficients, got {coeffs.shape}")
        if self.bc == DIRICHLET:
            return np.concatenate([[0.0], coeffs, [0.0]])
        return coeffs

    def restrict(self, full_vec):
        full_vec = np.asarray(full_vec)
        return full_vec[1:-1] if self.bc == DIRICHLET else full_vec

    def interpolate(self, fun):
        values = np.asarray(fun(self.mesh.nodes), dtype=float) * np.ones_like(self.mesh.nodes)
        return DiscreteFn(self, self.restrict(values))

    def zero(self):
        return DiscreteFn(self, np.zeros(self.dim))

    def hat(self, node):
        """Nodal basis function attached to global node index ``node``."""
        values = np.zeros(self.mesh.nodes.size)
        values[node] = 1.0
        return DiscreteFn(self, self.restrict(values))


@dataclass(frozen=True, eq=False)
class DiscreteFn:
    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.space.dim,):
            raise SpaceMismatchError(f"expected {self.space.dim} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def values(self):
        return self.space.full(self.coeffs)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["node_coordinate", "value"])
            for xn, v in zip(self.space.mesh.nodes, self.values):
                w.writerow([fmt(xn), fmt(v)])

    @classmethod
    def from_csv(cls, path, bc=DIRICHLET, n_quad=4):
        xs, vs = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                xs.append(float(row["node_coordinate"]))
                vs.append(float(row["value"]))
        space = FeSpace(Mesh1D(np.array(xs)), bc, n_quad)
        return cls(space, space.restrict(np.array(vs)))


def fmt(v):
    """17 significant digits, the CSV number format used throughout."""
    return format(float(v) + 0.0, ".17g")  # + 0.0 folds -0 into 0


@dataclass(frozen=True, eq=False)
class EnergyModel:
    """Energy data for one boundary value problem.

    ``sources`` lists (weight, f) pairs; the right-hand side is
    ``sum weight(x) * f(x, u)``.  With ``positive_part`` the nonlinearities
    are read as zero for negative states.
    """

    space: FeSpace
    p: float
    sources: tuple
    lam: Expr = field(default_factory=lambda: Const(1.0))
    positive_part: bool = False

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("energy assembly needs p >= 2")
        srcs = tuple((as_expr(w), as_expr(f)) for w, f in self.sources)
        object.__setattr__(self, "sources", srcs)
        object.__setattr__(self, "lam", as_expr(self.lam))
        if self.space.bc == NEUMANN:
            xq = self.quad_x
            lam = np.asarray(evaluate(self.lam, xq, np.zeros_like(xq)))
            if not np.min(lam) > 0:
                raise ValueError("Neumann problems need ess inf of the lambda coefficient > 0")

    @classmethod
    def dirichlet(cls, f, p=2, n_elements=32, a=0.0, b=1.0, **kw):
        space = FeSpace(Mesh1D.uniform(n_elements, a, b), DIRICHLET)
        return cls(space, p, ((Const(1.0), f),), **kw)

    @classmethod
    def neumann(cls, f, g="0", alpha="1", beta="1", lam="1", p=2, n_elements=32, a=0.0, b=1.0):
        space = FeSpace(Mesh1D.uniform(n_elements, a, b), NEUMANN)
        return cls(space, p, ((alpha, f), (beta, g)), lam=lam)

    @property
    def bc(self):
        return self.space.bc

    @cached_property
    def quad_x(self):
        e, s, _ = self.space._standard_plan
        mesh = self.space.mesh
        return mesh.nodes[e] + s * mesh.h[e]

    @cached_property
    def primitives(self):
        return tuple(primitive(f) for _, f in self.sources)

    @cached_property
    def _breaks(self):
        ps = [p for _, f in self.sources for p in distosc_exponents(f)]
        if not ps:
            return None
        lo, hi = distosc_bands()
        return np.unique(np.concatenate([lo, hi, 0.5 * (lo + hi)]))

    def mu_scale(self, mu):
        """Factor ``c`` with grad(Phi + mu Psi) = c * weak-form defect."""
        return mu * self.p if self.bc == DIRICHLET else mu

    # -- quadrature -------------------------------------------------------

    def plan(self, U):
        """Quadrature points (element, local coord, weight) for nodal vector U."""
        e, s, w = self.space._standard_plan
        breaks = self._breaks
        if breaks is None:
            return e, s, w
        lo = np.minimum(U[:-1], U[1:])
        hi = np.maximum(U[:-1], U[1:])
        i0 = np.searchsorted(breaks, lo, side="right")
        i1 = np.searchsorted(breaks, hi, side="left")
        split = np.nonzero(i1 > i0)[0]
        if split.size == 0:
            return e, s, w
        gs, gw = self.space.gauss
        h = self.space.mesh.h
        keep = ~np.isin(e, split)
        es, ss, ws = [e[keep]], [s[keep]], [w[keep]]
        for k in split:
            cuts = (breaks[i0[k]:i1[k]] - U[k]) / (U[k + 1] - U[k])
            pts = np.unique(np.concatenate([[0.0, 1.0], np.clip(cuts, 0.0, 1.0)]))
            for left, right in zip(pts[:-1], pts[1:]):
                if right <= left:
                    continue
                es.append(np.full(gs.size, k))
                ss.append(left + (right - left) * gs)
                ws.append(h[k] * (right - left) * gw)
        return np.concatenate(es), np.concatenate(ss), np.concatenate(ws)

    def _at_quad(self, U):
        e, s, w = self.plan(U)
        mesh = self.space.mesh
        xq = mesh.nodes[e] + s * mesh.h[e]
        uq = U[e] * (1.0 - s) + U[e + 1] * s
        return e, s, w, xq, uq

    def rhs(self, xq, uq):
        """sum weight*f at quadrature points (truncated for negative states if asked)."""
        arg = np.maximum(uq, 0.0) if self.positive_part else uq
        total = np.zeros_like(uq)
        for wexpr, f in self.sources:
            total = total + evaluate(wexpr, xq, uq) * evaluate(f, xq, arg)
        if self.positive_part:
            total = np.where(uq < 0.0, 0.0, total)
        return total

    def potential(self, xq, uq):
        arg = np.maximum(uq, 0.0) if self.positive_part else uq
        total = np.zeros_like(uq)
        for (wexpr, _), F in zip(self.sources, self.primitives):
            total = total + evaluate(wexpr, xq, uq) * F(xq, arg)
        return total

    def rhs_dxi(self, xq, uq):
        """Central-difference derivative of rhs in the state variable."""
        step = 1e-6 * np.abs(uq) + 1e-12
        return (self.rhs(xq, uq + step) - self.rhs(xq, uq - step)) / (2.0 * step)


def _check(m, u):
    if u.space is not m.space and (
        u.space.bc != m.space.bc or not np.array_equal(u.space.mesh.nodes, m.space.mesh.nodes)
    ):
        raise SpaceMismatchError("function and model live on different spaces")


def _slopes(m, U):
    return np.diff(U) / m.space.mesh.h


def assemble_psi(m: EnergyModel, u: DiscreteFn) -> float:
    _check(m, u)
    U = u.values
    p = m.p
    grad_part = float(np.sum(m.space.mesh.h * np.abs(_slopes(m, U)) ** p))
    if m.bc == DIRICHLET:
        return grad_part
    e, s, w = m.space._standard_plan
    mesh = m.space.mesh
    xq = mesh.nodes[e] + s * mesh.h[e]
    uq = U[e] * (1.0 - s) + U[e + 1] * s
    lam = evaluate(m.lam, xq, uq)
    return (grad_part + float(np.sum(w * lam * np.abs(uq) ** p))) / p


def assemble_phi(m: EnergyModel, u: DiscreteFn) -> float:
    _check(m, u)
    _, _, w, xq, uq = m._at_quad(u.values)
    return -float(np.sum(w * m.potential(xq, uq)))


def _scatter(m, e, s, vals_left, vals_right):
    out = np.zeros(m.space.mesh.nodes.size)
    np.add.at(out, e, vals_left)
    np.add.at(out, e + 1, vals_right)
    return out


def _principal_action(m, U):
    """Nodal vector of int |u'|^{p-2}u' v' (+ int lam |u|^{p-2} u v for Neumann)."""
    p = m.p
    du = _slopes(m, U)
    flux = np.abs(du) ** (p - 2) * du
    out = np.zeros(U.size)
    out[:-1] -= flux
    out[1:] += flux
    if m.bc == NEUMANN:
        e, s, w = m.space._standard_plan
        mesh = m.space.mesh
        xq = mesh.nodes[e] + s * mesh.h[e]
        uq = U[e] * (1.0 - s) + U[e + 1] * s
        val = w * evaluate(m.lam, xq, uq) * np.abs(uq) ** (p - 2) * uq
        out += _scatter(m, e, s, val * (1.0 - s), val * s)
    return out


def _load(m, U):
    e, s, w, xq, uq = m._at_quad(U)
    val = w * m.rhs(xq, uq)
    return _scatter(m, e, s, val * (1.0 - s), val * s)


def grad_phi(m: EnergyModel, u: DiscreteFn) -> np.ndarray:
    _check(m, u)
    return -m.space.restrict(_load(m, u.values))


def grad_psi(m: EnergyModel, u: DiscreteFn) -> np.ndarray:
    _check(m, u)
    return m.space.restrict(m.mu_scale(1.0) * _principal_action(m, u.values))


def grad_energy(m: EnergyModel, u: DiscreteFn, mu: float) -> np.ndarray:
    """Gradient of Phi + mu*Psi with respect to the free nodal coefficients."""
    _check(m, u)
    U = u.values
    g = m.mu_scale(mu) * _principal_action(m, U) - _load(m, U)
    return m.space.restrict(g)


def weak_defect(m: EnergyModel, u: DiscreteFn, scale: float) -> np.ndarray:
    U = u.values
    return m.space.restrict(_principal_action(m, U) - scale * _load(m, U))


def residual(m: EnergyModel, u: DiscreteFn, scale: float = 1.0) -> float:
    """Largest weak-form defect over the nodal test functions."""
    _check(m, u)
    r = weak_defect(m, u, scale)
    return float(np.max(np.abs(r))) if r.size else 0.0


def hessian(m: EnergyModel, u: DiscreteFn, mu: float) -> np.ndarray:
    """Second derivative of Phi + mu*Psi in the free coefficients (dense)."""
    _check(m, u)
    U = u.values
    p = m.p
    n = U.size
    H = np.zeros((n, n))
    h = m.space.mesh.h
    du = _slopes(m, U)
    k = (p - 1) * np.abs(du) ** (p - 2) / h * m.mu_scale(mu)
    idx = np.arange(n - 1)
    np.add.at(H, (idx, idx), k)
    np.add.at(H, (idx + 1, idx + 1), k)
    np.add.at(H, (idx, idx + 1), -k)
    np.add.at(H, (idx + 1, idx), -k)

    def mass_like(e, s, vals):
        a, b = 1.0 - s, s
        np.add.at(H, (e, e), vals * a * a)
        np.add.at(H, (e + 1, e + 1), vals * b * b)
        np.add.at(H, (e, e + 1), vals * a * b)
        np.add.at(H, (e + 1, e), vals * a * b)

    if m.bc == NEUMANN:
        e, s, w = m.space._standard_plan
        mesh = m.space.mesh
        xq = mesh.nodes[e] + s * mesh.h[e]
        uq = U[e] * (1.0 - s) + U[e + 1] * s
        mass_like(e, s, mu * w * (p - 1) * evaluate(m.lam, xq, uq) * np.abs(uq) ** (p - 2))
    e, s, w, xq, uq = m._at_quad(U)
    mass_like(e, s, -w * m.rhs_dxi(xq, uq))
    if m.bc == DIRICHLET:
        H = H[1:-1, 1:-1]
    return H


def stiffness(space: FeSpace) -> np.ndarray:
    """P1 stiffness matrix on the free coefficients."""
    n = space.mesh.nodes.size
    K = np.zeros((n, n))
    k = 1.0 / space.mesh.h
    idx = np.arange(n - 1)
    np.add.at(K, (idx, idx), k)
    np.add.at(K, (idx + 1, idx + 1), k)
    np.add.at(K, (idx, idx + 1), -k)
    np.add.at(K, (idx + 1, idx), -k)
    return K[1:-1, 1:-1] if space.bc == DIRICHLET else K


def mass(space: FeSpace) -> np.ndarray:
    n = space.mesh.nodes.size
    M = np.zeros((n, n))
    h = space.mesh.h
    idx = np.arange(n - 1)
    np.add.at(M, (idx, idx), h / 3.0)
    np.add.at(M, (idx + 1, idx + 1), h / 3.0)
    np.add.at(M, (idx, idx + 1), h / 6.0)
    np.add.at(M, (idx + 1, idx), h / 6.0)
    return M[1:-1, 1:-1] if space.bc == DIRICHLET else M


def norms(u: DiscreteFn, p: float = 2.0) -> dict:
    """L^p, W^{1,p} and the C^1 proxy (max nodal |u| + max element slope)."""
    space = u.space
    U = u.values
    e, s, w = space._standard_plan
    uq = U[e] * (1.0 - s) + U[e + 1] * s
    du = np.diff(U) / space.mesh.h
    lp_p = float(np.sum(w * np.abs(uq) ** p))
    grad_p = float(np.sum(space.mesh.h * np.abs(du) ** p))
    w1p_p = grad_p if space.bc == DIRICHLET else grad_p + lp_p
    return {
        "lp": lp_p ** (1.0 / p),
        "w1p": w1p_p ** (1.0 / p),
        "c1proxy": float(np.max(np.abs(U)) + np.max(np.abs(du))),
    }


def newton_solve(m: EnergyModel, u0: DiscreteFn, mu: float, tol=1e-12, maxiter=50):
    """Damped Newton on grad(Phi + mu*Psi) = 0.

    Returns ``(u, converged, iterations)``; the defect is measured as the
    largest weak residual at scale ``1/mu_scale``.
    """
    scale = 1.0 / m.mu_scale(mu)
    c = np.array(u0.coeffs, dtype=float)
    space = m.space
    r = residual(m, DiscreteFn(space, c), scale)
    for it in range(1, maxiter + 1):
        if r <= tol:
            return DiscreteFn(space, c), True, it - 1
        u = DiscreteFn(space, c)
        g = grad_energy(m, u, mu)
        H = hessian(m, u, mu)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return u, False, it
        t = 1.0
        while t > 1e-8:
            trial = c + t * step
            r_trial = residual(m, DiscreteFn(space, trial), scale)
            if np.isfinite(r_trial) and r_trial < r:
                break
            t *= 0.5
        else:
            return u, r <= tol, it
        c, r = trial, r_trial
    return DiscreteFn(space, c), r <= tol, maxiter
