"""Expression language for scalar nonlinearities f(x, xi) and coefficients a(x).

Grammar (see docs/grammar.md for the EBNF)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so ``-xi^2``
is ``-(xi^2)``.  Trees are immutable and compare structurally.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ParseError",
    "UnknownIdentifierError",
    "EvalDomainError",
    "parse",
    "evaluate",
    "primitive",
    "Primitive",
    "distosc_bands",
    "distosc_scan",
    "polynomial_coefficients",
    "contains_call",
]


class ParseError(ValueError):
    """Syntax error at a byte offset of the source text."""

    def __init__(self, message, offset, expected=None, source=None):
        self.offset = offset
        self.expected = expected
        self.source = source
        text = f"{message} at offset {offset}"
        if expected:
            text += f" (expected {expected})"
        super().__init__(text)


class UnknownIdentifierError(ParseError):
    pass


class EvalDomainError(ArithmeticError):
    """Evaluation left the domain of a partial function (log, division, power)."""

    def __init__(self, node, x, xi, reason):
        self.node = node
        self.x = x
        self.xi = xi
        self.reason = reason
        super().__init__(f"{reason} in {node} at x={x!r}, xi={xi!r}")


# -- tree ------------------------------------------------------------------


class Expr:
    """Base class of expression nodes.  Calling a node evaluates it."""

    def __call__(self, x, xi):
        return evaluate(self, x, xi)

    def free_vars(self) -> frozenset:
        raise NotImplementedError

    def depends_on_xi(self) -> bool:
        return "xi" in self.free_vars()


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __str__(self):
        if self.value < 0 or (self.value == 0 and math.copysign(1.0, self.value) < 0):
            return f"(-{-self.value!r})"
        return repr(float(self.value))

    def free_vars(self):
        return frozenset()


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def __str__(self):
        return self.name

    def free_vars(self):
        return frozenset([self.name])


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def __str__(self):
        return f"(-{self.arg})"

    def free_vars(self):
        return self.arg.free_vars()


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple

    def __str__(self):
        return f"{self.name}({', '.join(str(a) for a in self.args)})"

    def free_vars(self):
        # distosc reads xi implicitly
        out = frozenset(["xi"]) if self.name == "distosc" else frozenset()
        for a in self.args:
            out |= a.free_vars()
        return out


# name -> arity
FUNCTIONS = {
    "abs": 1,
    "exp": 1,
    "log": 1,
    "sin": 1,
    "cos": 1,
    "min": 2,
    "max": 2,
    "spow": 2,
    "distosc": 1,
    "fact": 1,
}
CONSTANTS = {"pi": math.pi}
DEFAULT_VARIABLES = ("x", "xi")


# -- parser ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", pos, source=src)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, src, variables):
        self.src = src
        self.variables = frozenset(variables)
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def take(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, value):
        kind, text, off = self.tok
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"found {found}", off, expected=repr(value), source=self.src)
        return self.take()

    def parse(self):
        e = self.expr()
        kind, text, off = self.tok
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", off, expected="operator or end of input",
                             source=self.src)
        return e

    def expr(self):
        left = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        kind, text, _ = self.tok
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if self.tok[0] == "op" and self.tok[1] == "(":
                return self.call(text, off)
            if text in self.variables:
                return Var(text)
            if text in CONSTANTS:
                return Const(CONSTANTS[text])
            if text in FUNCTIONS:
                raise ParseError(f"function {text!r} needs arguments", off + len(text),
                                 expected="'('", source=self.src)
            raise UnknownIdentifierError(f"unknown identifier {text!r}", off,
                                         expected="one of " + ", ".join(sorted(self.variables)),
                                         source=self.src)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"found {found}", off, expected="number, identifier or '('",
                         source=self.src)

    def call(self, name, off):
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name!r}", off,
                                         expected="one of " + ", ".join(sorted(FUNCTIONS)),
                                         source=self.src)
        self.expect("(")
        args = [self.expr()]
        while self.tok[0] == "op" and self.tok[1] == ",":
            self.take()
            args.append(self.expr())
        close_off = self.tok[2]
        self.expect(")")
        arity = FUNCTIONS[name]
        if len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument(s), got {len(args)}", close_off,
                             source=self.src)
        if name == "distosc" and args[0].free_vars():
            raise ParseError("distosc exponent must be constant", off, source=self.src)
        return Call(name, tuple(args))


def parse(src: str, variables=DEFAULT_VARIABLES) -> Expr:
    """Parse ``src`` into an expression tree."""
    if not isinstance(src, str) or not src.strip():
        raise ParseError("empty expression", 0, expected="expression", source=src)
    return _Parser(src, variables).parse()


def as_expr(e) -> Expr:
    if isinstance(e, Expr):
        return e
    if isinstance(e, (int, float)):
        return Const(float(e))
    return parse(e)


# -- distosc bands ---------------------------------------------------------

_INT_LIMIT = 2**62


@dataclass(frozen=True)
class _Bands:
    lo: np.ndarray
    hi: np.ndarray
    exact: int  # number of leading bands whose endpoints came from exact integers


def _build_bands():
    lo, hi = [], []
    exact = 0
    k = 1
    fact_k = 1  # k!
    while True:
        fact_k1 = fact_k * (k + 1)
        try:
            left = float(k * fact_k)
            right = float(fact_k1)
        except OverflowError:
            break
        if not math.isfinite(right):
            break
        lo.append(left)
        hi.append(right)
        if fact_k1 <= _INT_LIMIT:
            exact += 1
        k += 1
        fact_k = fact_k1
    return _Bands(np.array(lo), np.array(hi), exact)


_BANDS = _build_bands()


def distosc_bands():
    """Band endpoints [k!k, (k+1)!] for k = 1, 2, ... as float arrays."""
    return _BANDS.lo, _BANDS.hi


def distosc_scan(xi: float):
    """Scalar band lookup that walks the bands lazily.

    Returns ``(k, inspected)``: the 1-based band containing ``xi`` (0 if none)
    and how many bands were looked at before deciding.
    """
    lo, hi = _BANDS.lo, _BANDS.hi
    inspected = 0
    for j in range(len(lo)):
        inspected += 1
        if lo[j] > xi:
            return 0, inspected
        if xi <= hi[j]:
            return j + 1, inspected
    return 0, inspected


def _band_index(xi):
    """Vectorized: index of the only band that can contain xi, or -1."""
    j = np.searchsorted(_BANDS.lo, xi, side="right") - 1
    jj = np.clip(j, 0, len(_BANDS.lo) - 1)
    inside = (j >= 0) & (xi <= _BANDS.hi[jj])
    return np.where(inside, jj, -1)


def _distosc(xi, p):
    xi = np.asarray(xi, dtype=float)
    j = _band_index(xi)
    jj = np.clip(j, 0, None)
    d = np.minimum(xi - _BANDS.lo[jj], _BANDS.hi[jj] - xi)
    d = np.where(j >= 0, np.maximum(d, 0.0), 0.0)
    with np.errstate(over="ignore"):
        return d**p


class _BandIntegrals:
    """Cumulative integrals of dist^p over whole bands, per exponent p."""

    def __init__(self, p):
        self.p = p
        half = 0.5 * (_BANDS.hi - _BANDS.lo)
        with np.errstate(over="ignore", invalid="ignore"):
            full = 2.0 * half ** (p + 1) / (p + 1)
        self.half = half
        self.cum = np.concatenate([[0.0], np.cumsum(full)])

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        p = self.p
        # bands entirely below xi
        nfull = np.searchsorted(_BANDS.hi, xi, side="left")
        out = self.cum[np.clip(nfull, 0, len(self.cum) - 1)]
        j = _band_index(xi)
        jj = np.clip(j, 0, None)
        lo = _BANDS.lo[jj]
        hi = _BANDS.hi[jj]
        h = self.half[jj]
        mid = lo + h
        with np.errstate(over="ignore", invalid="ignore"):
            rising = (np.maximum(xi - lo, 0.0)) ** (p + 1) / (p + 1)
            falling = (h ** (p + 1) + h ** (p + 1) - np.maximum(hi - xi, 0.0) ** (p + 1)) / (p + 1)
        part = np.where(xi <= mid, rising, falling)
        return np.where(j >= 0, out + part, out)


_BAND_CACHE: dict = {}


def _band_integrals(p):
    key = float(p)
    if key not in _BAND_CACHE:
        _BAND_CACHE[key] = _BandIntegrals(key)
    return _BAND_CACHE[key]


# -- evaluation ------------------------------------------------------------


def _first_bad(mask, env):
    idx = np.argwhere(np.atleast_1d(mask))[0]

    def pick(v):
        a = np.atleast_1d(np.asarray(v, dtype=float))
        if a.size == 1:
            return float(a.reshape(-1)[0])
        return float(np.broadcast_to(a, np.atleast_1d(mask).shape)[tuple(idx)])

    return pick(env.get("x", np.nan)), pick(env.get("xi", np.nan))


def _check(mask, node, env, reason):
    if np.any(mask):
        x, xi = _first_bad(mask, env)
        raise EvalDomainError(node, x, xi, reason)


def _ev(node, env):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_ev(node.arg, env)
    if isinstance(node, BinOp):
        a = _ev(node.left, env)
        b = _ev(node.right, env)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            _check(np.asarray(b) == 0, node, env, "division by zero")
            return a / b
        # power
        a_arr = np.asarray(a, dtype=float)
        b_arr = np.asarray(b, dtype=float)
        bad = (a_arr < 0) & (b_arr != np.round(b_arr))
        _check(bad, node, env, "negative base with non-integer exponent")
        _check((a_arr == 0) & (b_arr < 0), node, env, "zero to a negative power")
        with np.errstate(over="ignore"):
            return np.power(a_arr, b_arr) if (a_arr.ndim or b_arr.ndim) else float(a_arr**b_arr)
    if isinstance(node, Call):
        name = node.name
        if name == "distosc":
            p = float(_ev(node.args[0], env))
            xi = env["xi"]
            return _distosc(xi, p)
        args = [_ev(a, env) for a in node.args]
        if name == "abs":
            return np.abs(args[0])
        if name == "exp":
            with np.errstate(over="ignore"):
                return np.exp(args[0])
        if name == "log":
            _check(np.asarray(args[0]) <= 0, node, env, "log of non-positive value")
            return np.log(args[0])
        if name == "sin":
            return np.sin(args[0])
        if name == "cos":
            return np.cos(args[0])
        if name == "min":
            return np.minimum(args[0], args[1])
        if name == "max":
            return np.maximum(args[0], args[1])
        if name == "spow":
            e = np.asarray(args[0], dtype=float)
            p = np.asarray(args[1], dtype=float)
            mag = np.abs(e)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                val = np.where(mag > 0, np.power(np.where(mag > 0, mag, 1.0), p - 2.0) * e, 0.0)
            return val
        if name == "fact":
            n = np.asarray(args[0], dtype=float)
            _check(n < 0, node, env, "factorial of negative value")
            return np.vectorize(lambda v: math.gamma(v + 1.0), otypes=[float])(n)
    raise TypeError(f"not an expression node: {node!r}")


def _scalarize(v, like_scalar):
    if like_scalar:
        return float(np.asarray(v).reshape(-1)[0]) if np.ndim(v) else float(v)
    return v


def evaluate(e: Expr, x, xi, **extra):
    """Evaluate ``e`` at (x, xi).  Scalars in, float out; arrays broadcast."""
    scalar = np.ndim(x) == 0 and np.ndim(xi) == 0 and all(np.ndim(v) == 0 for v in extra.values())
    env = {"x": x if scalar else np.asarray(x, dtype=float),
           "xi": xi if scalar else np.asarray(xi, dtype=float)}
    for k, v in extra.items():
        env[k] = v if scalar else np.asarray(v, dtype=float)
    if scalar:
        env = {k: float(v) for k, v in env.items()}
    out = _ev(e, env)
    if scalar:
        return _scalarize(out, True)
    shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


def contains_call(e: Expr, name: str) -> bool:
    if isinstance(e, Call):
        return e.name == name or any(contains_call(a, name) for a in e.args)
    if isinstance(e, BinOp):
        return contains_call(e.left, name) or contains_call(e.right, name)
    if isinstance(e, Neg):
        return contains_call(e.arg, name)
    return False


def distosc_exponents(e: Expr) -> list:
    """Exponents of every distosc call inside ``e``."""
    out = []
    if isinstance(e, Call):
        if e.name == "distosc":
            out.append(float(_ev(e.args[0], {})))
        for a in e.args:
            out.extend(distosc_exponents(a))
    elif isinstance(e, BinOp):
        out.extend(distosc_exponents(e.left))
        out.extend(distosc_exponents(e.right))
    elif isinstance(e, Neg):
        out.extend(distosc_exponents(e.arg))
    return out


# -- primitives ------------------------------------------------------------

# Symbolic terms are keyed (kind, param): ("pow", n) is xi^n,
# ("spow", p) is |xi|^(p-2) xi and ("distosc", p) the band sum.
_ONE = Const(1.0)
_MAX_EXPAND = 16


def _const_value(e):
    if e.free_vars():
        return None
    v = _ev(e, {})
    return float(v)


def _add_terms(a, b, sign=1.0):
    out = dict(a)
    for key, c in b.items():
        c = c if sign > 0 else Neg(c)
        out[key] = BinOp("+", out[key], c) if key in out else c
    return out


def _scale_terms(terms, coef, op="*"):
    return {k: BinOp(op, c, coef) for k, c in terms.items()}


def _mul_terms(a, b):
    if not all(k[0] == "pow" for k in a) or not all(k[0] == "pow" for k in b):
        return None
    out = {}
    for (_, ea), ca in a.items():
        for (_, eb), cb in b.items():
            key = ("pow", ea + eb)
            prod = BinOp("*", ca, cb)
            out[key] = BinOp("+", out[key], prod) if key in out else prod
    return out


def _decompose(e):
    """Split e into {term key: x-only coefficient} or return None."""
    if "xi" not in e.free_vars():
        return {("pow", 0.0): e}
    if isinstance(e, Var):
        return {("pow", 1.0): _ONE}
    if isinstance(e, Neg):
        inner = _decompose(e.arg)
        return None if inner is None else {k: Neg(c) for k, c in inner.items()}
    if isinstance(e, BinOp):
        if e.op in "+-":
            a, b = _decompose(e.left), _decompose(e.right)
            if a is None or b is None:
                return None
            return _add_terms(a, b, 1.0 if e.op == "+" else -1.0)
        if e.op == "*":
            if "xi" not in e.left.free_vars():
                inner = _decompose(e.right)
                return None if inner is None else _scale_terms(inner, e.left)
            if "xi" not in e.right.free_vars():
                inner = _decompose(e.left)
                return None if inner is None else _scale_terms(inner, e.right)
            a, b = _decompose(e.left), _decompose(e.right)
            if a is None or b is None:
                return None
            return _mul_terms(a, b)
        if e.op == "/":
            if "xi" in e.right.free_vars():
                return None
            inner = _decompose(e.left)
            return None if inner is None else _scale_terms(inner, e.right, "/")
        if e.op == "^":
            n = _const_value(e.right)
            if n is None:
                return None
            if isinstance(e.left, Var) and e.left.name == "xi":
                return {("pow", n): _ONE}
            if n == int(n) and 0 <= n <= _MAX_EXPAND:
                base = _decompose(e.left)
                if base is None:
                    return None
                out = {("pow", 0.0): _ONE}
                for _ in range(int(n)):
                    out = _mul_terms(out, base)
                    if out is None:
                        return None
                return out
            return None
    if isinstance(e, Call):
        if e.name == "spow" and isinstance(e.args[0], Var) and e.args[0].name == "xi":
            p = _const_value(e.args[1])
            if p is None or p <= 0:
                return None
            return {("spow", p): _ONE}
        if e.name == "distosc":
            return {("distosc", float(_ev(e.args[0], {}))): _ONE}
    return None


def polynomial_coefficients(e: Expr):
    """{degree: coefficient Expr in x} if e is a polynomial in xi, else None."""
    terms = _decompose(as_expr(e))
    if terms is None:
        return None
    out = {}
    for (kind, n), c in terms.items():
        if kind != "pow" or n != int(n) or n < 0:
            return None
        out[int(n)] = c
    return out


def _simpson(fun, a, b, tol, depth):
    """Adaptive Simpson quadrature on [a, b]."""
    fa, fm, fb = fun(a), fun(0.5 * (a + b)), fun(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(fun, a, b, fa, fm, fb, whole, tol, depth)


def _simpson_rec(fun, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = fun(lm), fun(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson_rec(fun, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson_rec(fun, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


class Primitive:
    """F(x, xi) = integral of f(x, t) for t from 0 to xi.

    Closed form when f is a sum of x-dependent multiples of xi^n, spow(xi, p)
    and distosc(p); adaptive Simpson otherwise.
    """

    QUAD_TOL = 1e-10
    QUAD_DEPTH = 40

    def __init__(self, source: Expr):
        self.source = source
        terms = _decompose(source)
        if terms is not None and any(k[0] == "pow" and k[1] <= -1 for k in terms):
            terms = None
        self.terms = terms
        self.mode = "symbolic" if terms is not None else "quadrature"
        # band integrals computed on first use and shared across instances
        self._bands = {k[1]: _band_integrals(k[1]) for k in (terms or {}) if k[0] == "distosc"}

    def __repr__(self):
        return f"Primitive({self.source}, mode={self.mode!r})"

    def __call__(self, x, xi):
        if self.mode == "symbolic":
            return self._symbolic(x, xi)
        return self._quadrature(x, xi)

    def _symbolic(self, x, xi):
        scalar = np.ndim(x) == 0 and np.ndim(xi) == 0
        xa = np.asarray(x, dtype=float)
        xia = np.asarray(xi, dtype=float)
        total = np.zeros(np.broadcast_shapes(xa.shape, xia.shape))
        for (kind, n), coef in self.terms.items():
            c = evaluate(coef, xa, np.zeros_like(xa)) if coef.free_vars() else _ev(coef, {})
            if kind == "pow":
                m = n + 1.0
                if m != round(m):
                    _check(xia < 0, self.source, {"x": xa, "xi": xia},
                           "negative base with non-integer exponent")
                with np.errstate(over="ignore"):
                    base = np.power(xia, m) / m
            elif kind == "spow":
                with np.errstate(over="ignore"):
                    base = np.abs(xia) ** n / n
            else:
                base = self._bands[n](xia)
            total = total + c * base
        return float(total.reshape(-1)[0]) if scalar else total

    def _quadrature(self, x, xi):
        src = self.source
        scalar = np.ndim(x) == 0 and np.ndim(xi) == 0
        xa, xia = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        out = np.empty(xa.shape)
        for idx in np.ndindex(xa.shape):
            xv, top = float(xa[idx]), float(xia[idx])
            if top == 0.0:
                out[idx] = 0.0
                continue
            out[idx] = _simpson(lambda t: evaluate(src, xv, t), 0.0, top,
                                self.QUAD_TOL, self.QUAD_DEPTH)
        return float(out.reshape(-1)[0]) if scalar else out


def primitive(e) -> Primitive:
    return Primitive(as_expr(e))
