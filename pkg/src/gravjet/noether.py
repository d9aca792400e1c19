"""Canonical lifts of spacetime vector fields, their prolongations and the Noether current.

A vector field Z = f^m d/dx^m is represented as a JAX-traceable callable x -> f (4,).
``taylor_field`` turns a parsed vector family into such a callable through its local
Taylor polynomial, so every derivative needed below is exact to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import jax
import jax.numpy as jnp
import numpy as np

from .eh_lagrangian import euler_lagrange, hamiltonian, l_coeff_1, l_coeff_2_full, lagrangian_vacuum
from .jet_algebra import PAIRS, MetricJet, full_d2g, monomials, sym_matrix, total_derivative
from .metric_dsl import MetricFamily, VectorFamily, prolong_family

_ROWS = np.array([a for a, _ in PAIRS])
_COLS = np.array([b for _, b in PAIRS])

Field = Callable[[jnp.ndarray], jnp.ndarray]

# order of the Taylor polynomial standing in for a parsed vector field; the current
# needs third derivatives of f at the point, so 4 leaves one order of margin
FIELD_ORDER = 4


@jax.tree_util.register_pytree_node_class
class TaylorField:
    """Polynomial field sum_alpha c^k_alpha (x - x0)^alpha; a pytree, so jitted kernels are reused."""

    def __init__(self, coeffs, x0, order: int):
        self.coeffs, self.x0, self.order = coeffs, x0, order

    def __call__(self, x):
        d = x - self.x0
        powers = [jnp.ones_like(d)]
        for _ in range(self.order):  # repeated products keep derivatives finite at d = 0
            powers.append(powers[-1] * d)
        table = jnp.stack(powers, axis=1)  # [i, p] = d_i^p
        alphas = np.asarray(monomials(self.order))  # (n_monomials, 4)
        return self.coeffs @ jnp.prod(table[np.arange(4), alphas], axis=1)

    def tree_flatten(self):
        return (self.coeffs, self.x0), self.order

    @classmethod
    def tree_unflatten(cls, order, leaves):
        return cls(*leaves, order)


def taylor_field(Z: VectorFamily, point: Sequence[float], order: int = FIELD_ORDER) -> TaylorField:
    """The Taylor polynomial of Z around ``point`` as a callable of x."""
    comps = Z.component_jets(point, order)
    coeffs = jnp.asarray(np.stack([c.coeffs for c in comps]))  # (4, n_monomials)
    return TaylorField(coeffs, jnp.asarray(point, dtype=float), order)


def polynomial_field(coeffs: dict) -> Field:
    """Field from {component: {(i0, i1, i2, i3): c}} meaning f^k = sum c x^i."""
    terms = [(k, tuple(int(a) for a in alpha), float(c))
             for k, poly in coeffs.items() for alpha, c in poly.items()]

    def f(x):
        out = jnp.zeros(4, dtype=x.dtype)
        for k, alpha, c in terms:
            term = c
            for i, p in enumerate(alpha):
                if p:
                    term = term * x[i] ** p
            out = out.at[k].add(term)
        return out

    return f


@jax.tree_util.register_pytree_node_class
class QuadraticField:
    """f^k = c^k + A^k_i x^i + 1/2 B^k_{ij} x^i x^j; coefficients may be traced arrays."""

    def __init__(self, c, A, B):
        self.c, self.A, self.B = c, A, B

    def __call__(self, x):
        return self.c + self.A @ x + 0.5 * jnp.einsum("kij,i,j->k", self.B, x, x)

    def tree_flatten(self):
        return (self.c, self.A, self.B), None

    @classmethod
    def tree_unflatten(cls, _, leaves):
        return cls(*leaves)


def quadratic_field(c, A, B) -> QuadraticField:
    return QuadraticField(jnp.asarray(c, dtype=float), jnp.asarray(A, dtype=float), jnp.asarray(B, dtype=float))


def _as_field(Z, point) -> Field:
    if isinstance(Z, VectorFamily):
        return taylor_field(Z, point)
    if callable(Z):
        return Z
    raise TypeError("vector field must be a VectorFamily or a callable of x")


def scaled(Z: Field, s: float) -> Field:
    return lambda x: s * Z(x)


# ---------------------------------------------------------------------------
# lift and prolongations, as functions on jets

def _y0(Z: Field):
    def y(jet: MetricJet):
        J = jax.jacfwd(Z)(jet.x)  # [m, a] = d f^m / dx^a
        G = sym_matrix(jet.g)
        t = jnp.einsum("ma,mb->ab", J, G)
        return -(t + t.T)[_ROWS, _COLS]
    return y


def _y1(Z: Field):
    y0 = _y0(Z)

    def y(jet: MetricJet):
        J = jax.jacfwd(Z)(jet.x)
        D = jnp.stack([total_derivative(y0, m, jet, reads=0) for m in range(4)], axis=1)  # [A, m]
        return D - jnp.einsum("An,nm->Am", jet.dg, J)
    return y


def _y2(Z: Field):
    y1 = _y1(Z)

    def y(jet: MetricJet):
        J = jax.jacfwd(Z)(jet.x)
        D = jnp.stack([total_derivative(y1, n, jet, reads=1) for n in range(4)], axis=2)  # [A, m, n]
        d2 = full_d2g(jet.d2g)[_ROWS, _COLS]  # [A, m, s]
        return D - jnp.einsum("Ams,sn->Amn", d2, J)
    return y


@dataclass(frozen=True)
class LiftedField:
    f: np.ndarray  # (4,)
    Y_ab: np.ndarray  # (10,)
    Y_abm: np.ndarray  # (10, 4)
    Y_abmn: np.ndarray  # (10, 10), packed m <= n


def canonical_lift(Z, jet: MetricJet) -> LiftedField:
    """Components of the canonical lift of Z and of its first two jet prolongations.

    Y_{ab} = -(d_a f^m g_{mb} + d_b f^m g_{ma}), Y_{ab,m} = D_m Y_{ab} - g_{ab,n} d_m f^n,
    Y_{ab,mn} = D_n Y_{ab,m} - g_{ab,ms} d_n f^s.
    """
    Z = _as_field(Z, jet.x)
    return LiftedField(*(np.asarray(a) for a in _dispatch(_lift_jit, Z, jet)))


def _lift_arrays(Z: Field, jet: MetricJet):
    return Z(jet.x), _y0(Z)(jet), _y1(Z)(jet), _y2(Z)(jet)[:, _ROWS, _COLS]


def lagrangian_symmetry_residual(Z, jet: MetricJet):
    """j2Y(L_V) + L_V d_m f^m: the Lie derivative of the density L_V d^4x along the lift.

    L_V has no explicit x dependence, so the base part of j2Y acts trivially.
    The jet must carry third derivatives (the second prolongation reads them through D_n).
    """
    Z = _as_field(Z, jet.x)
    tangent = jet._replace(
        x=jnp.zeros(4),
        g=_y0(Z)(jet),
        dg=_y1(Z)(jet),
        d2g=_y2(Z)(jet)[:, _ROWS, _COLS],
        d3g=jnp.zeros_like(jet.d3g),
        d4g=None if jet.d4g is None else jnp.zeros_like(jet.d4g),
    )
    _, dL = jax.jvp(lagrangian_vacuum, (jet,), (tangent,))
    div_f = jnp.trace(jax.jacfwd(Z)(jet.x))
    return dL + lagrangian_vacuum(jet) * div_f


# ---------------------------------------------------------------------------
# Noether current

def current_density(Z: Field):
    """S^k as a function on 2-jets.

    S^k = L^{A,k} xi_A + L^{A,mk} D_m xi_A + f^k L_V with xi_A = Y_A - f^n g_{A,n} and
    D_m xi_A = Y_{A,m} - f^n g_{A,mn}; A packed, m and n over all values.
    """
    y0, y1 = _y0(Z), _y1(Z)

    def S(jet: MetricJet):
        f = Z(jet.x)
        xi = y0(jet) - jet.dg @ f
        d2 = full_d2g(jet.d2g)[_ROWS, _COLS]
        dxi = y1(jet) - jnp.einsum("Amn,n->Am", d2, f)
        return (jnp.einsum("Ak,A->k", l_coeff_1(jet), xi)
                + jnp.einsum("Amk,Am->k", l_coeff_2_full(jet.g), dxi)
                + f * lagrangian_vacuum(jet))

    return S


def cartan_current_density(Z: Field):
    """S^k read off i(j1Y)Theta pulled back along the jet section.

    The d^3x_k coefficient Y_A L^{A,k} + Y_{A,n} L^{A,nk} - f^k H plus the pullback of the
    dg_A ^ d^2x_{nm} and dg_{A,l} ^ d^2x_{nm} terms, counted once per pair n < m.
    Agrees with ``current_density`` identically; kept as an independent route.
    """
    y0, y1 = _y0(Z), _y1(Z)

    def S(jet: MetricJet):
        f = Z(jet.x)
        L1 = l_coeff_1(jet)
        L2 = l_coeff_2_full(jet.g)
        d2 = full_d2g(jet.d2g)[_ROWS, _COLS]
        out = L1.T @ y0(jet) + jnp.einsum("An,Ank->k", y1(jet), L2) - f * hamiltonian(jet)
        # dx^s ^ d^2x_{nm} = delta^s_m d^3x_n - delta^s_n d^3x_m with d^2x_{nm} = i(d_m) i(d_n) d^4x
        # sum_n (f^k L^{A,n} - f^n L^{A,k}) g_{A,n}
        out = out + f * jnp.sum(L1 * jet.dg) - jnp.einsum("n,Ak,An->k", f, L1, jet.dg)
        # sum_n (f^k L^{A,ln} - f^n L^{A,lk}) g_{A,ln}
        out = out + f * jnp.einsum("Aln,Aln->", L2, d2) - jnp.einsum("n,Alk,Aln->k", f, L2, d2)
        return out

    return S


@dataclass(frozen=True)
class NoetherCurrent:
    S: np.ndarray
    point: np.ndarray


def current_divergence(Z: Field, jet: MetricJet):
    """D_k S^k on a 3-jet."""
    S = current_density(Z)
    return sum(total_derivative(lambda J, k=k: S(J)[k], k, jet, reads=2) for k in range(4))


def noether_identity_residual(Z, jet: MetricJet):
    """D_k S^k + xi_A L^A: vanishes on every jet, so the divergence is proportional to the field equations."""
    Z = _as_field(Z, jet.x)
    xi = _y0(Z)(jet) - jet.dg @ Z(jet.x)
    return current_divergence(Z, jet) + jnp.dot(xi, euler_lagrange(jet))


# Pytree fields go through these compiled kernels; one compilation serves every field of
# the same kind. Plain callables are evaluated eagerly.
_PYTREE_FIELDS = (TaylorField, QuadraticField)
_current_jit = jax.jit(lambda Z, jet: current_density(Z)(jet))
_divergence_jit = jax.jit(current_divergence)
_lift_jit = jax.jit(_lift_arrays)


def _dispatch(kernel, Z, jet):
    if isinstance(Z, _PYTREE_FIELDS):
        return kernel(Z, jet)
    return kernel.__wrapped__(Z, jet)


def noether_current(Z, fam: Union[MetricFamily, MetricJet], point: Sequence[float] = None) -> NoetherCurrent:
    """S^m at a point of a metric family (or directly on a jet)."""
    jet = fam if isinstance(fam, MetricJet) else prolong_family(fam, point, order=3)
    Z = _as_field(Z, jet.x)
    return NoetherCurrent(np.asarray(_dispatch(_current_jit, Z, jet)), np.asarray(jet.x))


def divergence_residual(Z, fam: Union[MetricFamily, MetricJet], point: Sequence[float] = None) -> float:
    """|d_m S^m| at a point; exact to rounding since the family is prolonged analytically."""
    jet = fam if isinstance(fam, MetricJet) else prolong_family(fam, point, order=3)
    Z = _as_field(Z, jet.x)
    return float(jnp.abs(_dispatch(_divergence_jit, Z, jet)))
