"""Legendre maps, their rank, momentum inversion and unified-formalism residuals."""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from jax.flatten_util import ravel_pytree

from .curvature import density, invert_metric
from .eh_lagrangian import euler_lagrange, l_coeff_1, l_coeff_2, lagrangian_vacuum
from .jet_algebra import MULT, PAIR_INDEX, MetricJet, sym_matrix

RANK_RTOL = 1e-10
# 10 x 4 first-order plus 10 x 10 second-order multimomenta
MOMENTUM_COORDINATES = 10 * 4 + 10 * 10


class Momenta(dict):
    """p1 (10, 4), p2 (10, 10) with p2 = dL/dg_{ab,mn} for packed m <= n, p_ext scalar."""

    @property
    def p1(self):
        return self["p1"]

    @property
    def p2(self):
        return self["p2"]

    @property
    def p_ext(self):
        return self["p_ext"]


jax.tree_util.register_pytree_node(
    Momenta,
    lambda m: ((m["p1"], m["p2"], m["p_ext"]), None),
    lambda _, c: Momenta(p1=c[0], p2=c[1], p_ext=c[2]),
)


def legendre(jet: MetricJet) -> Momenta:
    """Extended Legendre map.  p2 carries the n(mn) factor relative to Lmn."""
    p1 = l_coeff_1(jet)
    p2 = l_coeff_2(jet.g) * MULT[None, :]
    p_ext = lagrangian_vacuum(jet) - jnp.sum(p1 * jet.dg) - jnp.sum(p2 * jet.d2g)
    return Momenta(p1=p1, p2=p2, p_ext=p_ext)


def _restricted_image(jet: MetricJet):
    m = legendre(jet)
    return jnp.concatenate([jet.x, jet.g, jet.dg.ravel(), m.p1.ravel(), m.p2.ravel()])


def legendre_jacobian(jet: MetricJet) -> np.ndarray:
    """Jacobian of (x, g, dg, p1, p2) with respect to all 354 third-jet coordinates."""
    jet = jet._replace(d4g=None)
    flat, unravel = ravel_pytree(jet)
    return np.asarray(jax.jacfwd(lambda v: _restricted_image(unravel(v)))(flat))


def numerical_rank(m: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(m), compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0


def legendre_rank(jet: MetricJet, rtol: float = RANK_RTOL) -> int:
    return numerical_rank(legendre_jacobian(jet), rtol)


def invert_momenta(g, p1):
    """Velocities g_{ab,m} from p^{ab,m} on the Legendre image.

    V_{ab,m} = 1/(3 rho) sum_{l,s,n} (p^{ls,n}/n(ls)) (-2 g_al g_bm g_sn - 2 g_am g_bl g_sn
    + 6 g_al g_bs g_mn + g_an g_bm g_ls + g_am g_bn g_ls), all indices unrestricted.
    """
    G = sym_matrix(g)
    rho = density(g)
    P = p1[PAIR_INDEX]  # [l, s, n]
    # unpack with 1/n(ls) so that a full (l, s) sum equals the packed sum
    P = P / sym_matrix(jnp.asarray(MULT))[:, :, None]
    es = lambda sub, *ops: jnp.einsum(sub, *ops, optimize="optimal")
    t = (-2.0 * es("lsn,al,bm,sn->abm", P, G, G, G)
         - 2.0 * es("lsn,am,bl,sn->abm", P, G, G, G)
         + 6.0 * es("lsn,al,bs,mn->abm", P, G, G, G)
         + es("lsn,an,bm,ls->abm", P, G, G, G)
         + es("lsn,am,bn,ls->abm", P, G, G, G))
    rows = np.array([0, 0, 0, 0, 1, 1, 1, 2, 2, 3])
    cols = np.array([0, 1, 2, 3, 1, 2, 3, 2, 3, 3])
    return t[rows, cols] / (3.0 * rho)


@dataclass(frozen=True)
class UnifiedResiduals:
    einstein: np.ndarray
    momentum_1: np.ndarray
    momentum_2: np.ndarray
    holonomy_1: np.ndarray
    holonomy_2: np.ndarray

    def blocks(self):
        return [self.einstein, self.momentum_1, self.momentum_2, self.holonomy_1, self.holonomy_2]

    def max_abs(self):
        return [float(np.max(np.abs(b))) if np.size(b) else 0.0 for b in self.blocks()]


def unified_residuals(jet: MetricJet, mom: Momenta) -> UnifiedResiduals:
    """Residuals of the section equations at a point of the unified bundle.

    The holonomy blocks compare jet data with itself and vanish identically for
    jet-derived sections; they are kept so the block structure is explicit.
    """
    return UnifiedResiduals(
        einstein=np.asarray(euler_lagrange(jet)),
        momentum_1=np.asarray(mom.p1 - l_coeff_1(jet)),
        momentum_2=np.asarray(mom.p2 - l_coeff_2(jet.g) * MULT[None, :]),
        holonomy_1=np.zeros((10, 4)),
        holonomy_2=np.zeros((10, 10)),
    )
