"""Einstein-Hilbert Lagrangian density, its second-order decomposition, Euler-Lagrange
tensors and the covariant Hamiltonian.

Index conventions: packed metric pairs A = (ab), a <= b, and full (unrestricted)
spacetime indices m, n unless a packed second-derivative pair is stated.  Lmn is
returned packed (10 x 10) by ``l_coeff_2`` and as a symmetric (10, 4, 4) block by
``l_coeff_2_full``; L = sum_{A, m, n} Lmn_full[A, m, n] g_{A,mn} + L0.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .curvature import christoffel, density, invert_metric, ricci, scalar_and_einstein
from .jet_algebra import MULT, PAIR_INDEX, PAIRS, MetricJet, full_d2g, full_dg, pack_sym, total_gradient

_ROWS = np.array([a for a, _ in PAIRS])
_COLS = np.array([b for _, b in PAIRS])


def lagrangian_vacuum(jet: MetricJet):
    """L_V = rho g^{ab} R_{ab}."""
    gi = invert_metric(jet.g)
    return density(jet.g) * jnp.einsum("ab,ab->", gi, ricci(jet))


def l_coeff_2_full(g):
    """L^{ab,mn} for packed (ab) and all (m, n): shape (10, 4, 4)."""
    gi = invert_metric(g)
    rho = density(g)
    t = jnp.einsum("am,bn->abmn", gi, gi)
    t = t + jnp.einsum("an,bm->abmn", gi, gi) - 2.0 * jnp.einsum("ab,mn->abmn", gi, gi)
    return 0.5 * rho * MULT[:, None, None] * t[_ROWS, _COLS]


def l_coeff_2(g):
    """L^{ab,mn} with both pairs packed: shape (10, 10)."""
    return l_coeff_2_full(g)[:, _ROWS, _COLS]


def l_zero(jet: MetricJet):
    """The first-order part L0 = L - sum L^{ab,mn} g_{ab,mn}."""
    gi = invert_metric(jet.g)
    gam = christoffel(jet)
    d = full_dg(jet.dg)
    # g^{cd}(g_{dm,b} Gamma^m_{ac} - g_{dm,c} Gamma^m_{ab})
    inner = jnp.einsum("cd,dmb,mac->ab", gi, d, gam) - jnp.einsum("cd,dmc,mab->ab", gi, d, gam)
    inner = inner + jnp.einsum("dab,ccd->ab", gam, gam) - jnp.einsum("dac,cbd->ab", gam, gam)
    return density(jet.g) * jnp.einsum("ab,ab->", gi, inner)


def _lmn_of_jet(jet: MetricJet):
    return l_coeff_2_full(jet.g)


def l_coeff_1(jet: MetricJet):
    """L^{ab,m} = dL0/dg_{ab,m} - sum_n D_n L^{ab,mn}: shape (10, 4), a function on J^1."""
    dl0 = jax.grad(lambda dg: l_zero(jet._replace(dg=dg)))(jet.dg)
    dlmn = total_gradient(_lmn_of_jet, jet, reads=0)  # [n, A, m, n']
    return dl0 - jnp.einsum("nAmn->Am", dlmn)


def euler_lagrange(jet: MetricJet):
    """L^{ab} = -rho n(ab) (R^{ab} - 1/2 g^{ab} R), packed."""
    _, G = scalar_and_einstein(jet)
    return -density(jet.g) * MULT * G[_ROWS, _COLS]


def euler_lagrange_defining(jet: MetricJet):
    """L^{ab} = dL/dg_{ab} - D_m L^{ab,m}, straight from the variational definition."""
    dl = jax.grad(lambda g: lagrangian_vacuum(jet._replace(g=g)))(jet.g)
    dlm = total_gradient(l_coeff_1, jet, reads=1)  # [m, A, m']
    return dl - jnp.einsum("mAm->A", dlm)


def d_euler_lagrange(jet: MetricJet):
    """D_t L^{ab} as a (10, 4) array; needs third derivatives."""
    return total_gradient(euler_lagrange, jet, reads=2).T


def hamiltonian(jet: MetricJet):
    """H = rho g_{ab,m} g_{kl,n} H^{abklmn}, all indices summed over their full range."""
    gi = invert_metric(jet.g)
    d = full_dg(jet.dg)
    es = lambda sub: jnp.einsum(sub, gi, gi, gi, d, d, optimize="optimal")
    h = 0.25 * es("ab,kl,mn,abm,kln->") - 0.25 * es("ak,bl,mn,abm,kln->")
    h = h + 0.5 * es("ak,lm,bn,abm,kln->") - 0.5 * es("ab,ln,km,abm,kln->")
    return density(jet.g) * h


def hamiltonian_legendre(jet: MetricJet):
    """H = sum L^{ab,mn} g_{ab,mn} + sum L^{ab,m} g_{ab,m} - L (Legendre-transform form)."""
    lmn = l_coeff_2_full(jet.g)
    return (jnp.einsum("Amn,Amn->", lmn, full_d2g(jet.d2g)[_ROWS, _COLS])
            + jnp.sum(l_coeff_1(jet) * jet.dg) - lagrangian_vacuum(jet))


@dataclass(frozen=True)
class EHFields:
    L: float
    L0: float
    Lmn: np.ndarray
    Lm1: np.ndarray
    EL: np.ndarray
    DEL: np.ndarray
    H: float


def eh_fields(jet: MetricJet) -> EHFields:
    return EHFields(
        L=float(lagrangian_vacuum(jet)),
        L0=float(l_zero(jet)),
        Lmn=np.asarray(l_coeff_2(jet.g)),
        Lm1=np.asarray(l_coeff_1(jet)),
        EL=np.asarray(euler_lagrange(jet)),
        DEL=np.asarray(d_euler_lagrange(jet)),
        H=float(hamiltonian(jet)),
    )


def decomposition_residual(jet: MetricJet):
    """|L - sum Lmn g_{,mn} - L0| / (1 + largest term)."""
    lmn = l_coeff_2_full(jet.g)
    acc = jnp.einsum("Amn,Amn->", lmn, full_d2g(jet.d2g)[_ROWS, _COLS])
    L, L0 = lagrangian_vacuum(jet), l_zero(jet)
    scale = 1.0 + jnp.max(jnp.abs(jnp.array([L, L0, acc])))
    return jnp.abs(L - acc - L0) / scale


def euler_homogeneity_residual(jet: MetricJet):
    """|sum dL0/dg_{,m} g_{,m} - 2 L0| / (1 + |2 L0|)."""
    dl0 = jax.grad(lambda dg: l_zero(jet._replace(dg=dg)))(jet.dg)
    lhs = jnp.sum(dl0 * jet.dg)
    l0 = l_zero(jet)
    return jnp.abs(lhs - 2.0 * l0) / (1.0 + jnp.maximum(jnp.abs(lhs), jnp.abs(2.0 * l0)))
