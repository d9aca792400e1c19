"""Energy-matter sources: degree probe, electromagnetic Lagrangian and stress-energy tensor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .curvature import density, invert_metric, scalar_and_einstein
from .eh_lagrangian import euler_lagrange
from .jet_algebra import MULT, PAIR_INDEX, MetricJet, random_jet, sym_matrix, total_gradient

_NN = MULT[PAIR_INDEX]


@dataclass(frozen=True)
class EMField:
    Fmn: np.ndarray
    c: float = 1.0
    G: float = 1.0

    def __post_init__(self):
        F = np.asarray(self.Fmn, dtype=float)
        if F.shape != (4, 4):
            raise ValueError("electromagnetic tensor must be 4x4")
        if not np.array_equal(F, -F.T):
            raise ValueError("electromagnetic tensor must be antisymmetric")
        object.__setattr__(self, "Fmn", F)

    @classmethod
    def from_components(cls, comps: dict, c: float = 1.0, G: float = 1.0) -> "EMField":
        """Build from {(m, n): value}; missing entries are zero, antisymmetry is completed."""
        F = np.zeros((4, 4))
        for (m, n), v in comps.items():
            F[m, n], F[n, m] = v, -v
        return cls(F, c, G)


def _fmn(em):
    return em.Fmn if isinstance(em, EMField) else jnp.asarray(em)


def em_lagrangian(g, em):
    """L_m = rho F_{mn} F^{mn}."""
    gi = invert_metric(g)
    F = _fmn(em)
    return density(g) * jnp.einsum("ma,nb,ab,mn->", gi, gi, F, F)


def em_source(g, em):
    """L_m^{ab} = dL_m/dg_{ab} in packed metric coordinates."""
    return jax.grad(lambda gg: em_lagrangian(gg, em))(g)


def stress_energy(g, em, c: float = None, G: float = None):
    """T_{mn} = c^4/(8 pi G rho) sum_{a,b} g_{am} g_{bn} L_m^{ab}/n(ab)."""
    c = (em.c if isinstance(em, EMField) else 1.0) if c is None else c
    G = (em.G if isinstance(em, EMField) else 1.0) if G is None else G
    gm = sym_matrix(g)
    L = em_source(g, em)[PAIR_INDEX] / _NN
    return c ** 4 / (8.0 * jnp.pi * G * density(g)) * jnp.einsum("am,bn,ab->mn", gm, gm, L)


def stress_energy_closed(g, em, c: float = None, G: float = None):
    """T_{mn} = c^4/(4 pi G) (1/4 g_{mn} F^{ab}F_{ab} - g^{ab} F_{ma} F_{nb})."""
    c = (em.c if isinstance(em, EMField) else 1.0) if c is None else c
    G = (em.G if isinstance(em, EMField) else 1.0) if G is None else G
    gm = sym_matrix(g)
    gi = invert_metric(g)
    F = _fmn(em)
    F2 = jnp.einsum("ma,nb,ab,mn->", gi, gi, F, F)
    return c ** 4 / (4.0 * jnp.pi * G) * (0.25 * gm * F2 - jnp.einsum("ab,ma,nb->mn", gi, F, F))


def sourced_euler_lagrange(jet: MetricJet, em):
    """L_V^{ab} + L_m^{ab} (packed)."""
    return euler_lagrange(jet) + em_source(jet.g, em)


def einstein_from_euler_lagrange(jet: MetricJet, el_packed):
    """-1/rho g_{am} g_{bn} L^{ab}/n(ab): maps the sourced Euler-Lagrange tensor to G_{mn} - k T_{mn}."""
    gm = sym_matrix(jet.g)
    L = el_packed[PAIR_INDEX] / _NN
    return -jnp.einsum("am,bn,ab->mn", gm, gm, L) / density(jet.g)


def sourced_einstein_residual(jet: MetricJet, em: EMField):
    """G_{mn} - 8 pi G / c^4 T_{mn}, from curvature directly."""
    _, Gup = scalar_and_einstein(jet)
    gm = sym_matrix(jet.g)
    G_low = gm @ Gup @ gm
    return G_low - 8.0 * jnp.pi * em.G / em.c ** 4 * stress_energy(jet.g, em)


# ---------------------------------------------------------------------------
# degree of a Lagrangian

def momentum_coefficients(f: Callable[[MetricJet], jnp.ndarray], jet: MetricJet):
    """(f^{A,m}, f^{A,mn}) for a Lagrangian f on second-order jets."""
    f2 = lambda J: jax.grad(lambda d2g: f(J._replace(d2g=d2g)))(J.d2g) / MULT[None, :]
    f2_full = lambda J: f2(J)[:, PAIR_INDEX]  # [A, m, n]
    f1 = jax.grad(lambda dg: f(jet._replace(dg=dg)))(jet.dg)
    dn = total_gradient(f2_full, jet, reads=2)  # [n, A, m, n']
    return f1 - jnp.einsum("nAmn->Am", dn), f2(jet)


@dataclass(frozen=True)
class DegreeEstimate:
    degree: int
    samples: int
    max_by_order: tuple  # largest derivative of the momentum coefficients per jet order 0..3
    vanishing: bool


def degree_probe(f: Callable[[MetricJet], jnp.ndarray], samples: int = 4, seed: int = 0,
                 tol: float = 1e-10) -> DegreeEstimate:
    """Smallest s such that the momentum coefficients of f do not depend on jet coordinates of
    order >= s, estimated on random jets; 0 when the coefficients vanish identically."""
    rng = np.random.default_rng(seed)
    worst = np.zeros(4)
    size = 0.0
    for _ in range(samples):
        jet = random_jet(rng)
        vec = lambda J: jnp.concatenate([c.ravel() for c in momentum_coefficients(f, J)])
        size = max(size, float(jnp.max(jnp.abs(vec(jet)))))
        jac = jax.jacfwd(vec)(jet)
        for k, block in enumerate((jac.g, jac.dg, jac.d2g, jac.d3g)):
            worst[k] = max(worst[k], float(jnp.max(jnp.abs(block))))
    if size < tol:
        return DegreeEstimate(0, samples, tuple(worst), True)
    degree = 4
    for s in range(1, 4):
        if np.all(worst[s:] < tol):
            degree = s
            break
    return DegreeEstimate(degree, samples, tuple(worst), False)


def em_lagrangian_on_jets(em) -> Callable[[MetricJet], jnp.ndarray]:
    """The electromagnetic Lagrangian as a function of jet coordinates (field held fixed)."""
    return lambda jet: em_lagrangian(jet.g, em)
