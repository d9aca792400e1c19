"""Index bookkeeping for jets of metrics, truncated Taylor arithmetic and total derivatives.

Fiber coordinates of the jet bundle are stored once per ordered index tuple:

    g    (10,)      g_{ab},        a <= b
    dg   (10, 4)    g_{ab,m}
    d2g  (10, 10)   g_{ab,mn},     m <= n
    d3g  (10, 20)   g_{ab,mnl},    m <= n <= l
    d4g  (10, 35)   g_{ab,mnlk},   optional, only used for nested total derivatives

Derivatives taken with respect to these packed coordinates automatically carry
the multiplicity factors n(mn).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np

DIM = 4
ETA = np.diag([-1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class SymPair:
    first: int
    second: int
    mult: int

    def __iter__(self):
        yield self.first
        yield self.second

    @property
    def index(self) -> int:
        return int(PAIR_INDEX[self.first, self.second])

    @property
    def label(self) -> str:
        return f"{self.first}{self.second}"


def normalize_pair(a: int, b: int) -> SymPair:
    for i in (a, b):
        if not isinstance(i, (int, np.integer)) or not 0 <= i < DIM:
            raise ValueError(f"index {i!r} out of range 0..3")
    a, b = (int(a), int(b)) if a <= b else (int(b), int(a))
    return SymPair(a, b, 1 if a == b else 2)


def _sorted_tuples(k: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations_with_replacement(range(DIM), k))


def _index_table(tuples: list[tuple[int, ...]], k: int) -> np.ndarray:
    table = np.zeros((DIM,) * k, dtype=np.int64)
    lookup = {t: i for i, t in enumerate(tuples)}
    for idx in itertools.product(range(DIM), repeat=k):
        table[idx] = lookup[tuple(sorted(idx))]
    return table


PAIRS: list[tuple[int, int]] = _sorted_tuples(2)
TRIPLES: list[tuple[int, int, int]] = _sorted_tuples(3)
QUADS: list[tuple[int, int, int, int]] = _sorted_tuples(4)
PAIR_INDEX = _index_table(PAIRS, 2)
TRIPLE_INDEX = _index_table(TRIPLES, 3)
QUAD_INDEX = _index_table(QUADS, 4)
# n(ab) for each packed pair
MULT = np.array([1.0 if a == b else 2.0 for a, b in PAIRS])
SYM_PAIRS = [SymPair(a, b, 1 if a == b else 2) for a, b in PAIRS]

# tables used to shift one derivative order up: (packed k-tuple, tau) -> packed (k+1)-tuple
_SHIFT1 = PAIR_INDEX.copy()
_SHIFT2 = np.array([[TRIPLE_INDEX[m, n, t] for t in range(DIM)] for m, n in PAIRS])
_SHIFT3 = np.array([[QUAD_INDEX[m, n, l, t] for t in range(DIM)] for m, n, l in TRIPLES])


def pair_label(i: int) -> str:
    a, b = PAIRS[i]
    return f"{a}{b}"


# ---------------------------------------------------------------------------
# symmetric packing helpers (work on numpy and jax arrays, with leading batch axes)

def sym_matrix(packed):
    """10 packed entries -> symmetric 4x4."""
    return packed[..., PAIR_INDEX]


def pack_sym(mat):
    """Symmetric 4x4 -> 10 packed entries (upper triangle)."""
    rows = np.array([a for a, _ in PAIRS])
    cols = np.array([b for _, b in PAIRS])
    return mat[..., rows, cols]


def full_dg(dg):
    """(10, 4) -> (4, 4, 4) with [a, b, m] = g_{ab,m}."""
    return dg[..., PAIR_INDEX, :]


def full_d2g(d2g):
    """(10, 10) -> (4, 4, 4, 4) with [a, b, m, n] = g_{ab,mn}."""
    return d2g[..., PAIR_INDEX, :][..., PAIR_INDEX]


def full_d3g(d3g):
    return d3g[..., PAIR_INDEX, :][..., TRIPLE_INDEX]


def unpack_accel(F_packed):
    """(10, 4, 4) acceleration block -> (4, 4, 4, 4) over all metric indices."""
    return F_packed[..., PAIR_INDEX, :, :]


# ---------------------------------------------------------------------------
# truncated Taylor polynomials in four variables

@lru_cache(maxsize=None)
def monomials(order: int) -> tuple[tuple[int, int, int, int], ...]:
    out = []
    for deg in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(DIM), deg):
            alpha = [0] * DIM
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    return tuple(out)


@lru_cache(maxsize=None)
def _monomial_lookup(order: int) -> dict:
    return {m: i for i, m in enumerate(monomials(order))}


@lru_cache(maxsize=None)
def _product_table(order: int):
    mons = monomials(order)
    lookup = _monomial_lookup(order)
    ii, jj, kk = [], [], []
    for i, a in enumerate(mons):
        da = sum(a)
        for j, b in enumerate(mons):
            if da + sum(b) > order:
                continue
            ii.append(i)
            jj.append(j)
            kk.append(lookup[tuple(x + y for x, y in zip(a, b))])
    return np.array(ii), np.array(jj), np.array(kk)


class TaylorJet:
    """Truncated Taylor expansion sum_a c_a (x - x0)^a with |a| <= order."""

    __slots__ = ("order", "coeffs")
    __array_priority__ = 100

    def __init__(self, order: int, coeffs):
        if order < 0:
            raise ValueError("truncation order must be >= 0")
        coeffs = np.asarray(coeffs, dtype=float)
        n = len(monomials(order))
        if coeffs.shape != (n,):
            raise ValueError(f"expected {n} coefficients for order {order}, got {coeffs.shape}")
        self.order = order
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value: float, order: int) -> "TaylorJet":
        c = np.zeros(len(monomials(order)))
        c[0] = value
        return cls(order, c)

    @classmethod
    def variable(cls, i: int, value: float, order: int) -> "TaylorJet":
        t = cls.constant(value, order)
        if order >= 1:
            alpha = [0] * DIM
            alpha[i] = 1
            t.coeffs[_monomial_lookup(order)[tuple(alpha)]] = 1.0
        return t

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def coeff(self, alpha: Sequence[int]) -> float:
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise ValueError("multi-index exceeds truncation order")
        return float(self.coeffs[_monomial_lookup(self.order)[alpha]])

    def derivative(self, alpha: Sequence[int]) -> float:
        """Partial derivative d^alpha f at the expansion point."""
        fact = math.prod(math.factorial(a) for a in alpha)
        return fact * self.coeff(alpha)

    def partial(self, *idx: int) -> float:
        alpha = [0] * DIM
        for i in idx:
            alpha[i] += 1
        return self.derivative(alpha)

    def _lift(self, other) -> "TaylorJet":
        if isinstance(other, TaylorJet):
            if other.order != self.order:
                raise ValueError("mixed truncation orders")
            return other
        return TaylorJet.constant(float(other), self.order)

    def __add__(self, other):
        other = self._lift(other)
        return TaylorJet(self.order, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return TaylorJet(self.order, -self.coeffs)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, TaylorJet):
            return TaylorJet(self.order, self.coeffs * float(other))
        other = self._lift(other)
        ii, jj, kk = _product_table(self.order)
        c = np.bincount(kk, weights=self.coeffs[ii] * other.coeffs[jj], minlength=len(self.coeffs))
        return TaylorJet(self.order, c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, TaylorJet):
            return exp(p * log(self))
        return power(self, float(p))

    def _series(self, derivs: Sequence[float]) -> "TaylorJet":
        """sum_k derivs[k]/k! * h^k where h is self minus its constant term."""
        h = TaylorJet(self.order, self.coeffs.copy())
        h.coeffs[0] = 0.0
        out = TaylorJet.constant(derivs[0], self.order)
        hk = TaylorJet.constant(1.0, self.order)
        for k in range(1, self.order + 1):
            hk = hk * h
            out = out + hk * (derivs[k] / math.factorial(k))
        return out

    def reciprocal(self) -> "TaylorJet":
        a0 = self.value
        if a0 == 0.0:
            raise ZeroDivisionError("division by a jet with zero constant term")
        return self._series([(-1) ** k * math.factorial(k) / a0 ** (k + 1) for k in range(self.order + 1)])

    def __repr__(self):
        return f"TaylorJet(order={self.order}, value={self.value:.6g})"


class DomainError(ValueError):
    """An elementary function was evaluated outside its domain."""


def _falling(p: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= p - i
    return out


def power(a: TaylorJet, p: float) -> TaylorJet:
    a0 = a.value
    if float(p).is_integer():
        n = int(p)
        if n >= 0:
            out = TaylorJet.constant(1.0, a.order)
            for _ in range(n):
                out = out * a
            return out
        return power(a.reciprocal(), -n)
    if a0 <= 0.0:
        raise DomainError(f"non-integer power {p} of non-positive value {a0}")
    return a._series([_falling(p, k) * a0 ** (p - k) for k in range(a.order + 1)])


def exp(a: TaylorJet) -> TaylorJet:
    e = math.exp(a.value)
    return a._series([e] * (a.order + 1))


def log(a: TaylorJet) -> TaylorJet:
    a0 = a.value
    if a0 <= 0.0:
        raise DomainError(f"log of non-positive value {a0}")
    d = [math.log(a0)] + [(-1) ** (k - 1) * math.factorial(k - 1) / a0 ** k for k in range(1, a.order + 1)]
    return a._series(d)


def sqrt(a: TaylorJet) -> TaylorJet:
    if a.value <= 0.0:
        raise DomainError(f"sqrt of non-positive value {a.value}")
    return power(a, 0.5)


def sin(a: TaylorJet) -> TaylorJet:
    s, c = math.sin(a.value), math.cos(a.value)
    cyc = [s, c, -s, -c]
    return a._series([cyc[k % 4] for k in range(a.order + 1)])


def cos(a: TaylorJet) -> TaylorJet:
    s, c = math.sin(a.value), math.cos(a.value)
    cyc = [c, -s, -c, s]
    return a._series([cyc[k % 4] for k in range(a.order + 1)])


def jet_compose(expr_graph: Callable[..., TaylorJet], point: Sequence[float], order: int) -> TaylorJet:
    """Evaluate ``expr_graph(x0, x1, x2, x3)`` on Taylor variables expanded about ``point``."""
    if order < 0:
        raise ValueError("truncation order must be >= 0")
    xs = [TaylorJet.variable(i, float(point[i]), order) for i in range(DIM)]
    out = expr_graph(*xs)
    if not isinstance(out, TaylorJet):
        out = TaylorJet.constant(float(out), order)
    return out


# ---------------------------------------------------------------------------
# jets of metrics

class MetricJet(NamedTuple):
    """A point of the third (optionally fourth) jet bundle of metrics.

    Registered with JAX as a pytree, so jet-coordinate functions ``f(jet)`` can be
    differentiated, vectorized and compiled directly.
    """

    x: jnp.ndarray
    g: jnp.ndarray
    dg: jnp.ndarray
    d2g: jnp.ndarray
    d3g: jnp.ndarray
    d4g: Optional[jnp.ndarray] = None

    @property
    def order(self) -> int:
        return 3 if self.d4g is None else 4

    def metric(self):
        return sym_matrix(self.g)

    def derivative(self, a: int, b: int, *mu: int) -> float:
        """g_{ab, mu...} for any index order."""
        p = PAIR_INDEX[a, b]
        k = len(mu)
        if k == 0:
            return self.g[..., p]
        if k == 1:
            return self.dg[..., p, mu[0]]
        if k == 2:
            return self.d2g[..., p, PAIR_INDEX[mu]]
        if k == 3:
            return self.d3g[..., p, TRIPLE_INDEX[mu]]
        if k == 4 and self.d4g is not None:
            return self.d4g[..., p, QUAD_INDEX[mu]]
        raise ValueError(f"jet does not carry order-{k} derivatives")

    def with_(self, **kw) -> "MetricJet":
        return self._replace(**kw)


def make_jet(g, dg=None, d2g=None, d3g=None, d4g=None, x=None) -> MetricJet:
    """Build a jet from packed arrays (or a symmetric 4x4 for ``g``); missing orders are zero."""
    g = np.asarray(g, dtype=float)
    if g.shape == (4, 4):
        g = pack_sym(g)
    zeros = np.zeros
    return MetricJet(
        x=np.zeros(4) if x is None else np.asarray(x, dtype=float),
        g=g,
        dg=zeros((10, 4)) if dg is None else np.asarray(dg, dtype=float),
        d2g=zeros((10, 10)) if d2g is None else np.asarray(d2g, dtype=float),
        d3g=zeros((10, 20)) if d3g is None else np.asarray(d3g, dtype=float),
        d4g=None if d4g is None else np.asarray(d4g, dtype=float),
    )


def random_metric(rng: np.random.Generator, scale: float = 0.2) -> np.ndarray:
    """g = A eta A^T with A = I + scale*N(0,1): Lorentzian by construction."""
    A = np.eye(4) + scale * rng.standard_normal((4, 4))
    return A @ ETA @ A.T


def random_jet(rng: np.random.Generator, order: int = 3) -> MetricJet:
    """Random jet: Lorentzian metric and uniform(-1, 1) derivatives."""
    g = pack_sym(random_metric(rng))
    u = lambda *shape: rng.uniform(-1.0, 1.0, shape)
    return MetricJet(
        x=u(4), g=g, dg=u(10, 4), d2g=u(10, 10), d3g=u(10, 20),
        d4g=u(10, 35) if order >= 4 else None,
    )


def stack_jets(jets: Sequence[MetricJet]) -> MetricJet:
    """Stack jets along a new leading axis (for ``jax.vmap``)."""
    return jax.tree_util.tree_map(lambda *a: np.stack(a), *jets)


def random_jets(rng: np.random.Generator, n: int, order: int = 3) -> MetricJet:
    return stack_jets([random_jet(rng, order) for _ in range(n)])


def unstack(jets: MetricJet, i: int) -> MetricJet:
    return jax.tree_util.tree_map(lambda a: a[i], jets)


# ---------------------------------------------------------------------------
# total derivative

def shift_tangent(jet: MetricJet, tau: int) -> MetricJet:
    """Jet data one order up along x^tau: the tangent direction realizing D_tau."""
    zeros_top = lambda a: jnp.zeros_like(a)
    d4g = jet.d4g
    return MetricJet(
        x=jnp.zeros_like(jet.x).at[..., tau].set(1.0),
        g=jet.dg[..., tau],
        dg=jet.d2g[..., _SHIFT1[:, tau]],
        d2g=jet.d3g[..., _SHIFT2[:, tau]],
        d3g=zeros_top(jet.d3g) if d4g is None else d4g[..., _SHIFT3[:, tau]],
        d4g=None if d4g is None else zeros_top(d4g),
    )


class JetOrderError(ValueError):
    pass


def total_derivative(f: Callable[[MetricJet], jnp.ndarray], tau: int, jet: MetricJet,
                     reads: int = 2):
    """D_tau f at ``jet`` for a function ``f`` of jet coordinates up to order ``reads``.

    Forward-mode differentiation of ``f`` along the shifted jet data.  The jet must
    carry derivatives of order ``reads + 1``.
    """
    if not 0 <= tau < DIM:
        raise ValueError(f"index {tau} out of range 0..3")
    if reads + 1 > jet.order:
        raise JetOrderError(f"D_tau of an order-{reads} function needs an order-{reads + 1} jet")
    _, out = jax.jvp(f, (jet,), (shift_tangent(jet, tau),))
    return out


def total_gradient(f: Callable[[MetricJet], jnp.ndarray], jet: MetricJet, reads: int = 2):
    """Stack D_0 f .. D_3 f along a new leading axis."""
    return jnp.stack([total_derivative(f, t, jet, reads) for t in range(DIM)])
