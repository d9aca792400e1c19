"""Inverse metric, density, Christoffel symbols, Ricci and Einstein tensors on metric jets."""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .jet_algebra import MetricJet, full_dg, sym_matrix, total_gradient


class SingularMetricError(ValueError):
    pass


class SignatureError(ValueError):
    pass


def _concrete(a) -> bool:
    return not isinstance(a, jax.core.Tracer)


def check_metric(g, require_lorentzian: bool = False) -> None:
    """Raise if the packed metric is singular (or, optionally, not of signature -+++)."""
    if not _concrete(g):
        return
    m = np.asarray(sym_matrix(np.asarray(g)))
    scale = max(np.abs(m).max(), 1e-300)
    if not np.all(np.isfinite(m)) or abs(np.linalg.det(m)) < 1e-13 * scale ** 4:
        raise SingularMetricError("metric is singular")
    if require_lorentzian:
        ev = np.linalg.eigvalsh(m)
        if not (ev[0] < 0 < ev[1]):
            raise SignatureError(f"metric signature is not (-+++): eigenvalues {ev}")


def invert_metric(g):
    """g^{ab} as a 4x4 array from the 10 packed components."""
    check_metric(g)
    return jnp.linalg.inv(sym_matrix(g))


def density(g):
    """rho = sqrt|det g|."""
    return jnp.sqrt(jnp.abs(jnp.linalg.det(sym_matrix(g))))


def christoffel(jet: MetricJet):
    """Gamma[l, m, n] = Gamma^l_{mn} = 1/2 g^{lr}(g_{nr,m} + g_{rm,n} - g_{mn,r})."""
    gi = invert_metric(jet.g)
    d = full_dg(jet.dg)  # [a, b, m] = g_{ab,m}
    low = jnp.einsum("nrm->mnr", d) + jnp.einsum("rmn->mnr", d) - d  # [m, n, r]
    return 0.5 * jnp.einsum("lr,mnr->lmn", gi, low)


def ricci(jet: MetricJet):
    """R_{ab} = D_c Gamma^c_{ab} - D_a Gamma^c_{cb} + Gamma^c_{ab}Gamma^d_{dc} - Gamma^c_{db}Gamma^d_{ac}."""
    gam = christoffel(jet)
    dgam = total_gradient(christoffel, jet, reads=1)  # [t, l, m, n]
    r = jnp.einsum("ccab->ab", dgam) - jnp.einsum("accb->ab", dgam)
    r = r + jnp.einsum("cab,ddc->ab", gam, gam) - jnp.einsum("cdb,dac->ab", gam, gam)
    return r


def scalar_and_einstein(jet: MetricJet):
    """(R, G^{ab}) with G^{ab} = R^{ab} - 1/2 g^{ab} R."""
    gi = invert_metric(jet.g)
    r = ricci(jet)
    R = jnp.einsum("ab,ab->", gi, r)
    up = gi @ r @ gi
    return R, up - 0.5 * gi * R


@dataclass(frozen=True)
class CurvaturePack:
    ginv: np.ndarray
    rho: float
    gamma: np.ndarray
    ricci: np.ndarray
    scalar: float
    einstein_upper: np.ndarray


def curvature_pack(jet: MetricJet) -> CurvaturePack:
    R, G = scalar_and_einstein(jet)
    return CurvaturePack(
        ginv=np.asarray(invert_metric(jet.g)),
        rho=float(density(jet.g)),
        gamma=np.asarray(christoffel(jet)),
        ricci=np.asarray(ricci(jet)),
        scalar=float(R),
        einstein_upper=np.asarray(G),
    )
