"""The first-order Lagrangian Lbar equivalent to Einstein-Hilbert and its Legendre map."""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .eh_lagrangian import l_coeff_1, l_coeff_2_full, l_zero
from .jet_algebra import MetricJet
from .legendre_hamiltonian import invert_momenta, numerical_rank


def _dlmn_dg(g):
    """d L^{A,mn} / d g_B as [A, m, n, B] (packed metric coordinates)."""
    return jax.jacfwd(l_coeff_2_full)(g)


def lbar(jet: MetricJet):
    """Lbar = L0 - sum g_{A,m} g_{B,n} dL^{A,mn}/dg_B; a function of (x, g, dg) only."""
    corr = jnp.einsum("Am,Bn,AmnB->", jet.dg, jet.dg, _dlmn_dg(jet.g))
    return l_zero(jet) - corr


def first_order_momenta(jet: MetricJet):
    """pbar^{A,m} = L^{A,m} - sum g_{B,n} dL^{B,nm}/dg_A (closed form)."""
    return l_coeff_1(jet) - jnp.einsum("Bn,BnmA->Am", jet.dg, _dlmn_dg(jet.g))


def first_order_momenta_ad(jet: MetricJet):
    """pbar by differentiating lbar with respect to the velocities."""
    return jax.grad(lambda dg: lbar(jet._replace(dg=dg)))(jet.dg)


def pbar_jacobian(jet: MetricJet) -> np.ndarray:
    """d pbar / d(dg) as a 40 x 40 matrix."""
    jac = jax.jacfwd(lambda dg: first_order_momenta(jet._replace(dg=dg)))(jet.dg)
    return np.asarray(jac).reshape(40, 40)


def regularity_rank(jet: MetricJet) -> int:
    return numerical_rank(pbar_jacobian(jet))


@dataclass(frozen=True)
class FirstOrderFields:
    Lbar: float
    pbar: np.ndarray


def first_order_fields(jet: MetricJet) -> FirstOrderFields:
    return FirstOrderFields(float(lbar(jet)), np.asarray(first_order_momenta(jet)))


@dataclass(frozen=True)
class InverseResult:
    velocities: np.ndarray
    hbar: float
    iterations: int
    residual: float


class ConvergenceError(RuntimeError):
    pass


def first_order_hamiltonian(g, pbar_target, x=None, tol: float = 1e-11, max_iter: int = 50) -> InverseResult:
    """Hbar = Lbar o (FLbar)^{-1}: solve pbar(g, v) = pbar_target by Newton, then evaluate Lbar.

    The seed is the Einstein-Hilbert momentum inversion, which is exact only when the
    target is itself a vacuum multimomentum.
    """
    g = np.asarray(g, dtype=float)
    target = np.asarray(pbar_target, dtype=float)
    base = MetricJet(np.zeros(4) if x is None else np.asarray(x, float), g,
                     np.zeros((10, 4)), np.zeros((10, 10)), np.zeros((10, 20)))
    v = np.asarray(invert_momenta(g, target))
    scale = 1.0 + np.max(np.abs(target))
    res = np.inf
    for it in range(1, max_iter + 1):
        jet = base._replace(dg=v)
        r = np.asarray(first_order_momenta(jet)) - target
        res = np.max(np.abs(r)) / scale
        if res < tol:
            return InverseResult(v, float(lbar(jet)), it - 1, float(res))
        step = np.linalg.solve(pbar_jacobian(jet), r.ravel())
        v = v - step.reshape(10, 4)
    raise ConvergenceError(f"Newton inversion did not converge (residual {res:.3e})")
