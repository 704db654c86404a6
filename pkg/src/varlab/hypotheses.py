"""Sampled and symbolic checks of the growth, superlinearity, oscillation and
small-amplitude conditions placed on nonlinearities f(x, xi) and g(x, xi).

Every asymptotic statement is decided on a finite grid.  A ``holds`` obtained
by sampling is labelled ``holds (numerically)``; a ``fails`` always carries a
witness that can be replayed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dsl

HOLDS, FAILS, INCONCLUSIVE, DROPPED = "holds", "fails", "inconclusive", "dropped"
SYMBOLIC, SAMPLED = "symbolic", "sampled"

PER_DECADE = 512
X_MESH = 64
BIG = 1e6


@dataclass
class Witness:
    """A sample point; ``violation`` is the relation that makes it a counterexample."""

    xi: float
    value: float
    bound: float
    violation: str  # one of ">", ">=", "<", "<="
    x: Optional[float] = None
    k: Optional[int] = None

    def violates(self, value=None):
        v = self.value if value is None else value
        if self.violation == ">":
            return bool(v > self.bound)
        if self.violation == "<":
            return bool(v < self.bound)
        if self.violation == ">=":
            return bool(v >= self.bound)
        return bool(v <= self.bound)

    def as_json(self):
        out = {"xi": self.xi, "value": self.value, "bound": self.bound, "violation": self.violation}
        if self.x is not None:
            out["x"] = self.x
        if self.k is not None:
            out["k"] = self.k
        return out


@dataclass
class Verdict:
    status: str
    method: str = SAMPLED
    witnesses: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    note: str = ""
    parts: dict = field(default_factory=dict)
    recompute: Optional[Callable] = field(default=None, repr=False)

    @property
    def label(self):
        if self.status == HOLDS and self.method == SAMPLED:
            return "holds (numerically)"
        return self.status

    def replay(self) -> bool:
        """Recompute every witness independently; True when all still violate."""
        ok = True
        for w in self.witnesses:
            if self.recompute is not None:
                ok = ok and w.violates(self.recompute(w))
            else:
                ok = ok and w.violates()
        for part in self.parts.values():
            if part.status == FAILS:
                ok = ok and part.replay()
        return ok

    def as_json(self):
        out = {"status": self.label, "method": self.method}
        if self.witnesses:
            out["witnesses"] = [w.as_json() for w in self.witnesses]
        if self.grid:
            out["grid"] = self.grid
        if self.note:
            out["note"] = self.note
        if self.parts:
            out["parts"] = {k: v.as_json() for k, v in self.parts.items()}
        return out


def _combine(parts: dict, method=SAMPLED, note="") -> Verdict:
    statuses = [p.status for p in parts.values() if p.status != DROPPED]
    if FAILS in statuses:
        status = FAILS
    elif INCONCLUSIVE in statuses:
        status = INCONCLUSIVE
    else:
        status = HOLDS
    if all(p.method == SYMBOLIC for p in parts.values() if p.status != DROPPED):
        method = SYMBOLIC
    return Verdict(status, method, parts=parts, note=note)


# -- grids ------------------------------------------------------------------------


def log_grid(lo, hi, per_decade=PER_DECADE):
    """Log-spaced points from lo to hi (either order), per_decade points per factor 10."""
    n = max(2, int(round(abs(math.log10(hi) - math.log10(lo)) * per_decade)) + 1)
    return np.geomspace(lo, hi, n)


def x_mesh(intervals=((0.0, 1.0),), n=X_MESH):
    return np.concatenate([np.linspace(a, b, n) for a, b in intervals])


def _eval(e, X, XI):
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(dsl.evaluate(e, X, XI), dtype=float)


def _grid_info(xi, xs):
    return {"xi_min": float(np.min(np.abs(xi))), "xi_max": float(np.max(np.abs(xi))),
            "xi_points": int(xi.size), "x_points": int(xs.size)}


def _domain_inconclusive(err, grid=None):
    return Verdict(INCONCLUSIVE, SAMPLED, grid=grid or {}, note=f"evaluation domain error: {err}")


# -- growth, superlinearity, small amplitude -------------------------------------------


def _first_violation(mask, xs, xi, value, bound, violation):
    cols = np.nonzero(mask.any(axis=0))[0]
    if cols.size == 0:
        return None
    j = int(cols[0])
    i = int(np.nonzero(mask[:, j])[0][0])
    return Witness(float(xi[j]), float(value[i, j]), float(bound[i, j] if np.ndim(bound) else bound),
                   violation, x=float(xs[i]))


def check_growth(f, a: float, q: float, n: int = 1, xmax: float = 1e6,
                 per_decade: int = PER_DECADE, x_points: int = X_MESH) -> Verdict:
    """|f(x, xi)| <= a (1 + |xi|^q), plus subcriticality of q when n >= 3."""
    f = dsl.as_expr(f)
    if a <= 0 or q <= 0:
        raise ValueError("a and q must be positive")
    if n >= 3 and not q < (n + 2) / (n - 2):
        return Verdict(FAILS, SYMBOLIC, note=f"q={q} is not below (n+2)/(n-2) for n={n}",
                       witnesses=[Witness(float("nan"), q, (n + 2) / (n - 2), ">")])
    xs = x_mesh(n=x_points)
    coefs = dsl.polynomial_coefficients(f)

    def recompute(w):
        return abs(dsl.evaluate(f, w.x, w.xi)) - a * (1 + abs(w.xi) ** q)

    if coefs is not None:
        sups = {d: float(np.max(np.abs(dsl.evaluate(c, xs, np.zeros_like(xs)))))
                for d, c in coefs.items()}
        live = [d for d, s in sups.items() if s > 0]
        if not live:
            return Verdict(HOLDS, SYMBOLIC, note="f vanishes identically")
        top = max(live)
        if top > q:
            # walk outward until the leading term wins, for a concrete witness
            for j in range(1, 400):
                xi = 2.0**j
                vals = np.abs(_eval(f, xs, np.full_like(xs, xi))) - a * (1 + xi**q)
                i = int(np.argmax(vals))
                if vals[i] > 0:
                    w = Witness(xi, float(vals[i]), 0.0, ">", x=float(xs[i]))
                    return Verdict(FAILS, SYMBOLIC, [w], note=f"degree {top} exceeds q={q}",
                                   recompute=recompute)
        elif sum(sups.values()) <= a:
            return Verdict(HOLDS, SYMBOLIC, note="sum of coefficient sups is at most a")
    mags = log_grid(1e-3, xmax, per_decade)
    xi = np.concatenate([-mags[::-1], [0.0], mags])
    X, XI = np.meshgrid(xs, xi, indexing="ij")
    try:
        val = np.abs(_eval(f, X, XI))
    except dsl.EvalDomainError as err:
        return _domain_inconclusive(err, _grid_info(xi, xs))
    bound = a * (1 + np.abs(XI) ** q)
    excess = np.where(np.isnan(val), np.inf, val - bound)
    order = np.argsort(np.abs(xi), kind="stable")
    mask = excess[:, order] > 1e-12 * bound[:, order]
    w = _first_violation(mask, xs, xi[order], excess[:, order], 0.0, ">")
    if w is not None:
        return Verdict(FAILS, SAMPLED, [w], _grid_info(xi, xs), recompute=recompute)
    return Verdict(HOLDS, SAMPLED, grid=_grid_info(xi, xs))


def check_ar(f, c: float, r: float, xmax: float = 1e6, per_decade: int = PER_DECADE,
             x_points: int = X_MESH) -> Verdict:
    """0 < c F(x, xi) <= xi f(x, xi) for |xi| >= r."""
    if not c > 2:
        raise ValueError("the superlinearity constant c must exceed 2")
    if r < 0:
        raise ValueError("r must be nonnegative")
    f = dsl.as_expr(f)
    F = dsl.primitive(f)
    xs = x_mesh(n=x_points)
    mags = log_grid(max(r, 1e-3), xmax, per_decade)
    xi = np.concatenate([mags, -mags])
    X, XI = np.meshgrid(xs, xi, indexing="ij")
    try:
        cF = c * np.asarray(F(X, XI))
        rhs = XI * _eval(f, X, XI)
    except dsl.EvalDomainError as err:
        return _domain_inconclusive(err, _grid_info(xi, xs))
    info = _grid_info(xi, xs)
    info["relative_tolerance"] = 1e-10

    # positivity: c F > 0 (violation when c F <= 0)
    w = _first_violation(~(cF > 0), xs, xi, cF, 0.0, "<=")
    if w is not None:
        return Verdict(FAILS, SAMPLED, [w], info, note="c F(x, xi) is not positive",
                       recompute=lambda w: c * F(w.x, w.xi))
    gap = cF - rhs
    tol = 1e-10 * np.maximum(np.abs(cF), np.abs(rhs))
    w = _first_violation(gap > tol, xs, xi, gap, 0.0, ">")
    if w is not None:
        w.bound = float(1e-10 * max(abs(c * F(w.x, w.xi)), abs(w.xi * dsl.evaluate(f, w.x, w.xi))))
        return Verdict(FAILS, SAMPLED, [w], info, note="c F(x, xi) exceeds xi f(x, xi)",
                       recompute=lambda w: c * F(w.x, w.xi) - w.xi * dsl.evaluate(f, w.x, w.xi))
    return Verdict(HOLDS, SAMPLED, grid=info)


def check_limit_zero(f, decades: Sequence[float] = (1e-1, 1e-8), per_decade: int = 64,
                     x_points: int = X_MESH, threshold: float = 1e-4) -> Verdict:
    """f(x, xi)/xi -> 0 uniformly in x as xi -> 0."""
    f = dsl.as_expr(f)
    xs = x_mesh(n=x_points)
    mags = log_grid(decades[0], decades[1], per_decade)
    X, XI = np.meshgrid(xs, np.concatenate([mags, -mags]), indexing="ij")
    try:
        ratio = np.abs(_eval(f, X, XI) / XI)
    except dsl.EvalDomainError as err:
        return _domain_inconclusive(err)
    m = mags.size
    sup = np.maximum(ratio[:, :m].max(axis=0), ratio[:, m:].max(axis=0))
    info = {"xi_min": float(mags[-1]), "xi_max": float(mags[0]), "xi_points": int(2 * m),
            "x_points": int(xs.size), "threshold": threshold}
    final = float(sup[-1])
    monotone = bool(np.all(np.diff(sup) <= 1e-12 * (1 + sup[:-1])))

    def recompute(w):
        return abs(dsl.evaluate(f, w.x, w.xi) / w.xi)

    if final <= threshold:
        return Verdict(HOLDS if monotone else INCONCLUSIVE, SAMPLED, grid=info,
                       note="" if monotone else "ratio trend is not monotone")
    if final >= 0.5 * float(sup[0]):
        col = int(np.argmax(np.where(ratio[:, m - 1] >= ratio[:, -1], ratio[:, m - 1], ratio[:, -1])))
        xi_w = float(mags[-1]) if ratio[col, m - 1] >= ratio[col, -1] else -float(mags[-1])
        w = Witness(xi_w, float(recompute(Witness(xi_w, 0, 0, ">", x=float(xs[col])))),
                    threshold, ">", x=float(xs[col]))
        return Verdict(FAILS, SAMPLED, [w], info, note="ratio does not decay toward 0",
                       recompute=recompute)
    return Verdict(INCONCLUSIVE, SAMPLED, grid=info, note="ratio decays but stays above threshold")


# -- concave-convex conditions ---------------------------------------------------------


def _running_scan(values, xi, kind, big=BIG, bound_for=None):
    """Classify a limsup/liminf sequence ordered toward the limit point.

    kind: "bounded" (limsup < +inf), "to-inf" (limsup = +inf) or "above" (liminf > -inf).
    """
    n = values.size
    head = values[: max(1, n // 2)]
    tail = values[n // 2:]
    if kind == "bounded":
        hit = np.nonzero(values > big)[0]
        if hit.size:
            j = int(hit[0])
            return FAILS, Witness(float(xi[j]), float(values[j]), big, ">")
        if np.max(tail) > 10.0 * max(np.max(np.abs(head)), 1e-300):
            return INCONCLUSIVE, None
        return HOLDS, None
    if kind == "to-inf":
        if np.nanmax(values) > big:
            return HOLDS, None
        hmax = float(np.nanmax(head))
        if np.nanmax(tail) <= hmax + 1e-12 * (1 + abs(hmax)):
            j = n // 2 + int(np.nanargmax(tail))
            return FAILS, Witness(float(xi[j]), float(values[j]), hmax, "<=")
        return INCONCLUSIVE, None
    # "above"
    hit = np.nonzero(values < -big)[0]
    if hit.size:
        j = int(hit[0])
        return FAILS, Witness(float(xi[j]), float(values[j]), -big, "<")
    hmin = float(np.nanmin(head))
    if np.nanmin(tail) < 10.0 * min(hmin, -1e-300) and np.nanmin(tail) < hmin - 1.0:
        return INCONCLUSIVE, None
    return HOLDS, None


def _t7_part(values, xi, kind, recompute, note=""):
    status, w = _running_scan(values, xi, kind)
    info = {"xi_min": float(xi[-1]), "xi_max": float(xi[0]), "xi_points": int(xi.size),
            "threshold": BIG}
    return Verdict(status, SAMPLED, [w] if w else [], info, note, recompute=recompute)


def check_thm7(f, g, s: float, q: float, D=((0.0, 1.0),), B=None, decades=(1e-2, 1e-14),
               per_decade: int = PER_DECADE, x_points: int = X_MESH) -> dict:
    """Verdicts for conditions (i), (ii), (iii) and the positivity extra, keyed thm7.*."""
    if not s > 1:
        raise ValueError("s must exceed 1")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    f, g = dsl.as_expr(f), dsl.as_expr(g)
    G = dsl.primitive(g)
    B = D if B is None else B
    xi = log_grid(decades[0], decades[1], per_decade)
    xo = x_mesh(n=x_points)
    xd = x_mesh(D, x_points)
    xb = x_mesh(B, x_points)
    out = {}

    def sup_abs(e, xs, pw):
        X, XI = np.meshgrid(xs, xi, indexing="ij")
        return np.max(np.abs(_eval(e, X, XI)), axis=0) / xi**pw

    def inf_prim(xs, denom):
        X, XI = np.meshgrid(xs, xi, indexing="ij")
        return np.min(np.asarray(G(X, XI)), axis=0) / denom

    def rec_sup(e, xs, pw):
        return lambda w: float(np.max(np.abs(_eval(e, xs, np.full_like(xs, w.xi))))) / w.xi**pw

    def rec_inf(fun, xs, denom):
        return lambda w: float(np.min(np.asarray(fun(xs, np.full_like(xs, w.xi))))) / denom(w.xi)

    try:
        out["thm7.i"] = _t7_part(sup_abs(f, xo, s), xi, "bounded", rec_sup(f, xo, s))
    except dsl.EvalDomainError as err:
        out["thm7.i"] = _domain_inconclusive(err)
    try:
        out["thm7.ii"] = _t7_part(sup_abs(g, xo, q), xi, "bounded", rec_sup(g, xo, q))
    except dsl.EvalDomainError as err:
        out["thm7.ii"] = _domain_inconclusive(err)
    try:
        sq = lambda t: t * t  # noqa: E731
        up = _t7_part(inf_prim(xb, xi**2), xi, "to-inf", rec_inf(G, xb, sq),
                      "limsup over B of inf G / xi^2")
        low = _t7_part(inf_prim(xd, xi**2), xi, "above", rec_inf(G, xd, sq),
                       "liminf over D of inf G / xi^2")
        out["thm7.iii"] = _combine({"limsup": up, "liminf": low})
    except dsl.EvalDomainError as err:
        out["thm7.iii"] = _domain_inconclusive(err)
    try:
        X, XI = np.meshgrid(xo, xi, indexing="ij")
        denom = xi * np.log(xi) ** 2
        vals = np.min(_eval(g, X, XI), axis=0) / denom
        gfun = lambda xs, t: _eval(g, xs, t)  # noqa: E731
        out["thm7.pos"] = _t7_part(vals, xi, "above",
                                   rec_inf(gfun, xo, lambda t: t * math.log(t) ** 2))
    except dsl.EvalDomainError as err:
        out["thm7.pos"] = _domain_inconclusive(err)
    return out


# -- oscillation conditions --------------------------------------------------------------

TO_INF, TO_ZERO = "to-infinity", "to-zero"


def _generator(spec):
    if isinstance(spec, str):
        e = dsl.parse(spec, variables=("k",))
        return lambda ks: np.asarray(dsl.evaluate(e, 0.0, 0.0, k=np.asarray(ks, dtype=float)),
                                     dtype=float) * np.ones(len(ks))
    vals = [float(v) for v in spec]
    return lambda ks: np.array([vals[int(k) - 1] for k in ks])


@dataclass
class SequencePair:
    """Sequences a_k < b_k for k = 1, 2, ...; generators are expressions in k or lists."""

    a: object
    b: object
    mode: str = TO_INF
    note: str = ""

    def __post_init__(self):
        if self.mode not in (TO_INF, TO_ZERO):
            raise ValueError(f"unknown mode {self.mode!r}")
        self._ga = _generator(self.a)
        self._gb = _generator(self.b)

    def limit(self, K):
        for spec in (self.a, self.b):
            if not isinstance(spec, str):
                K = min(K, len(spec))
        return K

    def values(self, K):
        ks = np.arange(1, self.limit(K) + 1)
        return ks, self._ga(ks), self._gb(ks)

    def __len__(self):
        return self.limit(10**9) if not isinstance(self.a, str) or not isinstance(self.b, str) else 0

    def as_json(self):
        return {"a": self.a if isinstance(self.a, str) else list(self.a),
                "b": self.b if isinstance(self.b, str) else list(self.b),
                "mode": self.mode, "note": self.note}


def _scalar_prim(F):
    return lambda t: float(np.asarray(F(0.0, t)))


def _limsup_grid(f, mode):
    if mode == TO_ZERO:
        mags = log_grid(1e-1, 1e-14, 64)
        return mags
    mags = log_grid(1.0, 1e16, 64)
    if dsl.contains_call(f, "distosc"):
        lo, hi = dsl.distosc_bands()
        mids = 0.5 * (lo + hi)
        mags = np.union1d(mags, mids[mids <= 1e16])
    return mags


def check_osc(f, seqs: SequencePair, p: float, K: int = 5, drop_ratio: bool = False,
              samples: int = 2049) -> Verdict:
    """The dead-zone conditions on [a_k, b_k], the ratio a_k/b_k -> 0 and the
    limsup of F/|xi|^p (at infinity or at 0 according to the sequence mode)."""
    f = dsl.as_expr(f)
    F = dsl.primitive(f)
    Fs = _scalar_prim(F)
    ks, a, b = seqs.values(K)
    parts = {}
    key = "thm8" if seqs.mode == TO_INF else "thm9"
    if ks.size == 0:
        return Verdict(INCONCLUSIVE, note="no sequence terms")

    # a_k < b_k, positive
    bad = np.nonzero(~((a > 0) & (a < b)))[0]
    if bad.size:
        j = int(bad[0])
        if a[j] >= b[j]:
            w = Witness(float(a[j]), float(a[j] - b[j]), 0.0, ">=", k=int(ks[j]))
        else:
            w = Witness(float(a[j]), float(a[j]), 0.0, "<=", k=int(ks[j]))
        parts["order"] = Verdict(FAILS, SYMBOLIC, [w])
    else:
        parts["order"] = Verdict(HOLDS, SAMPLED, grid={"K": int(ks.size)})

    # b_k -> inf or 0
    d = np.diff(b)
    if seqs.mode == TO_INF:
        trend = ks.size > 1 and bool(np.all(d > 0))
    else:
        trend = ks.size > 1 and bool(np.all(d < 0))
    parts["limit"] = Verdict(HOLDS if trend else INCONCLUSIVE, SAMPLED, grid={"K": int(ks.size)})

    # a_k / b_k -> 0
    if drop_ratio:
        parts["ratio"] = Verdict(DROPPED, SAMPLED, note="ratio condition not imposed")
    else:
        r = a / b
        tail = r[len(r) // 2:]
        if ks.size > 1 and np.all(np.diff(tail) < 0) and tail[-1] < r[0]:
            parts["ratio"] = Verdict(HOLDS, SAMPLED, grid={"K": int(ks.size)},
                                     note=f"last ratio {float(r[-1]):.6g}")
        else:
            parts["ratio"] = Verdict(INCONCLUSIVE, SAMPLED, grid={"K": int(ks.size)},
                                     note=f"ratio tail does not decrease (last {float(r[-1]):.6g})")

    # sup of the integral over [a_k, xi] and [-b_k, -a_k]
    wit = []
    for k, ak, bk in zip(ks, a, b):
        if not (0 < ak < bk):
            continue
        for sign in (1.0, -1.0):
            lo, hi = (ak, bk) if sign > 0 else (-bk, -ak)
            pts = np.linspace(lo, hi, samples)
            base = Fs(sign * ak)
            vals = np.asarray(F(0.0, pts)) - base
            tol = 1e-9 * (1.0 + abs(base))
            j = int(np.argmax(vals))
            if vals[j] > tol:
                wit.append(Witness(float(pts[j]), float(vals[j]), tol, ">", k=int(k)))
                break
        if wit:
            break
    sup_rec = None
    if wit:
        w0 = wit[0]
        anchor = float(a[int(w0.k) - 1]) * (1.0 if w0.xi > 0 else -1.0)
        sup_rec = lambda w, anchor=anchor: Fs(w.xi) - Fs(anchor)  # noqa: E731
    parts["sup"] = Verdict(FAILS if wit else HOLDS, SAMPLED, wit,
                           {"K": int(ks.size), "samples_per_interval": samples}, recompute=sup_rec)

    # limsup F / |xi|^p
    mags = _limsup_grid(f, seqs.mode)
    with np.errstate(over="ignore", invalid="ignore"):
        both = np.maximum(np.asarray(F(0.0, mags)), np.asarray(F(0.0, -mags))) / mags**p
    best_sign = lambda t: max(Fs(t), Fs(-t)) / t**p  # noqa: E731
    status, w = _running_scan(both, mags, "to-inf")
    parts["limsup"] = Verdict(status, SAMPLED, [w] if w else [],
                              {"xi_min": float(mags.min()), "xi_max": float(mags.max()),
                               "xi_points": int(mags.size), "threshold": BIG},
                              recompute=lambda w: best_sign(w.xi))
    v = _combine(parts)
    v.note = f"{key}.osc over k <= {int(ks.size)}"
    return v


def check_g_side(g, p: float, mode: str = TO_INF, per_decade: int = 64) -> Verdict:
    """sup_xi G(xi) <= 0 and liminf G/|xi|^p > -inf at the relevant end."""
    g = dsl.as_expr(g)
    G = dsl.primitive(g)
    Gs = _scalar_prim(G)
    mags = log_grid(1e-8, 1e6, per_decade)
    xi = np.concatenate([-mags[::-1], [0.0], mags])
    try:
        vals = np.asarray(G(0.0, xi))
    except dsl.EvalDomainError as err:
        return _domain_inconclusive(err)
    tol = 1e-12 * (1.0 + np.abs(vals))
    j = int(np.argmax(vals - tol))
    parts = {}
    if vals[j] > tol[j]:
        parts["sup"] = Verdict(FAILS, SAMPLED, [Witness(float(xi[j]), float(vals[j]), float(tol[j]), ">")],
                               recompute=lambda w: Gs(w.xi))
    else:
        parts["sup"] = Verdict(HOLDS, SAMPLED, grid={"xi_points": int(xi.size)})
    ends = log_grid(1.0, 1e12, per_decade) if mode == TO_INF else log_grid(1e-1, 1e-12, per_decade)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.minimum(np.asarray(G(0.0, ends)), np.asarray(G(0.0, -ends))) / ends**p
    status, w = _running_scan(ratio, ends, "above")
    parts["liminf"] = Verdict(status, SAMPLED, [w] if w else [],
                              {"xi_min": float(ends.min()), "xi_max": float(ends.max())},
                              recompute=lambda w: min(Gs(w.xi), Gs(-w.xi)) / abs(w.xi) ** p)
    return _combine(parts)


def _dead_zones(F, grid, tol_rel=1e-12):
    """Maximal [a, b] on the grid with F(xi) <= F(a) on the whole interval."""
    vals = np.asarray(F(0.0, grid))
    zones = []
    i, n = 0, grid.size
    while i < n - 1:
        tol = tol_rel * (1.0 + abs(vals[i]))
        if vals[i + 1] > vals[i] + tol:
            i += 1
            continue
        # zone opens at i: extend while F stays at or below F(a)
        j = i + 1
        while j < n and vals[j] <= vals[i] + tol:
            j += 1
        if j >= n:
            break  # runs off the grid: not maximal within the scan
        zones.append((i, j - 1))
        i = j
    return vals, zones


def _bisect(pred, lo, hi):
    """Shrink [lo, hi] with pred(lo) False and pred(hi) True."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def suggest_sequences(f, p: float = 2.0, mode: str = TO_INF, horizon: int = 5,
                      min_ratio: float = 1.5) -> SequencePair:
    """Locate maximal dead zones of F and return them as a candidate sequence pair.

    Zones with b/a below ``min_ratio`` are skipped.  When f vanishes identically
    every interval qualifies and decade defaults are returned.
    """
    f = dsl.as_expr(f)
    coefs = dsl.polynomial_coefficients(f)
    xs = x_mesh(n=8)
    if coefs is not None and all(
            not np.any(dsl.evaluate(c, xs, np.zeros_like(xs))) for c in coefs.values()):
        if mode == TO_INF:
            return SequencePair("10^k", "(k+1)*10^k", mode, note="f vanishes; decade defaults")
        return SequencePair("10^(-k)/(k+1)", "10^(-k)", mode, note="f vanishes; decade defaults")
    F = dsl.primitive(f)
    Fs = _scalar_prim(F)
    if mode == TO_INF:
        grid = log_grid(1e-3, 1e15, 128)
        if dsl.contains_call(f, "distosc"):
            lo, hi = dsl.distosc_bands()
            edges = np.concatenate([lo, hi])
            grid = np.union1d(grid, edges[edges <= 1e15])
    else:
        grid = log_grid(1e-14, 1e-1, 512)
    vals, zones = _dead_zones(F, grid)
    fs = lambda t: float(dsl.evaluate(f, 0.0, t))  # noqa: E731
    found = []
    for i, j in zones:
        if i == 0:
            continue  # touches the scan edge, so not maximal
        # the zone opens where f turns nonpositive: bracket the top of F, then bisect on f
        lo, hi = grid[i - 1], grid[min(i + 1, grid.size - 1)]
        dense = np.linspace(lo, hi, 257)
        m = int(np.argmax(np.asarray(F(0.0, dense))))
        left, right = dense[max(m - 1, 0)], dense[min(m + 1, dense.size - 1)]
        a = right if fs(left) <= 0 else _bisect(lambda t: fs(t) <= 0, left, right)[1]
        level = Fs(a)
        tol = 1e-12 * (1.0 + abs(level))
        after = np.nonzero((grid > a) & (vals > level + tol))[0]
        if after.size == 0:
            continue
        k = int(after[0])
        b = _bisect(lambda t: Fs(t) > level + tol, max(grid[k - 1], a), grid[k])[0]
        if b / a < min_ratio:
            continue
        # the mirrored condition on [-b, -a] must hold too
        neg = np.linspace(-b, -a, 257)
        if np.max(np.asarray(F(0.0, neg)) - Fs(-a)) > 1e-9 * (1.0 + abs(Fs(-a))):
            continue
        found.append((float(a), float(b)))
    if mode == TO_ZERO:
        found.sort(key=lambda ab: -ab[1])
    found = found[:horizon]
    if not found:
        return SequencePair([], [], mode, note="none-found")
    return SequencePair([a for a, _ in found], [b for _, b in found], mode,
                        note=f"{len(found)} dead zone(s) with b/a >= {min_ratio}")
