"""The cross-module identity suite: per-jet residual functions evaluated in vmapped batches."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import jax
import jax.numpy as jnp
import numpy as np
from jax.flatten_util import ravel_pytree

from . import eh_lagrangian as eh
from . import first_order_equiv as fo
from . import legendre_hamiltonian as lh
from . import matter_em as em
from . import multivector_solver as mv
from . import noether as nt
from .curvature import invert_metric, scalar_and_einstein
from .jet_algebra import MetricJet, random_jets, sym_matrix, unstack
from .legendre_hamiltonian import RANK_RTOL


class Aux(NamedTuple):
    """Random side data drawn alongside each jet."""

    X: np.ndarray  # (10, 4) test tensor for the UV identity
    Lm: np.ndarray  # (10,) matter source
    Fem: np.ndarray  # (4, 4) antisymmetric field strength
    F: np.ndarray  # (10, 4, 4) symmetric acceleration field


def random_aux(rng: np.random.Generator, n: int) -> Aux:
    A = rng.uniform(-1, 1, (n, 4, 4))
    F = rng.uniform(-1, 1, (n, 10, 4, 4))
    return Aux(
        X=rng.uniform(-1, 1, (n, 10, 4)),
        Lm=rng.uniform(-1, 1, (n, 10)),
        Fem=A - np.swapaxes(A, 1, 2),
        F=0.5 * (F + np.swapaxes(F, 2, 3)),
    )


def _rel(a, b):
    return jnp.max(jnp.abs(a - b)) / (1.0 + jnp.maximum(jnp.max(jnp.abs(a)), jnp.max(jnp.abs(b))))


def _rank(m):
    s = jnp.linalg.svd(m, compute_uv=False)
    return jnp.sum(s > RANK_RTOL * s[0])


# fixed polynomial vector field for the symmetry and current identities
PROBE_FIELD = nt.polynomial_field({
    0: {(0, 1, 0, 0): 0.7, (0, 0, 0, 0): 0.3},
    1: {(1, 0, 1, 0): -0.4, (0, 2, 0, 0): 0.1},
    2: {(0, 0, 2, 0): 0.5, (0, 0, 0, 1): -0.2},
    3: {(1, 1, 0, 0): 0.2, (0, 0, 1, 1): 0.3},
})


def _integrability(jet: MetricJet, aux: Aux):
    worst = 0.0
    for c in range(4):
        for r in range(c + 1, 4):
            b1, b2 = mv.integrability_bracket(mv.f_particular, jet, c, r)
            worst = jnp.maximum(worst, jnp.maximum(jnp.max(jnp.abs(b1)), jnp.max(jnp.abs(b2))))
    return worst


def _homogeneous_forward(jet: MetricJet, aux: Aux):
    fh = mv.project_homogeneous(aux.F, jet.g)
    return jnp.max(jnp.abs(mv.hdw_residual(jet, mv.f_particular(jet) + fh)))


def _homogeneous_kernels(jet: MetricJet, aux: Aux):
    """Contraction with U and the trace conditions have the same kernel on symmetric fields."""
    T = mv.trace_operator(jet.g)
    A = jax.jacfwd(lambda s: mv.accel_contraction(mv._sym_accel(s), jet.g))(jnp.zeros(100))
    both = jnp.concatenate([T, A])
    return jnp.abs(_rank(T) - 10) + jnp.abs(_rank(A) - 10) + jnp.abs(_rank(both) - 10)


def _em_trace(jet: MetricJet, aux: Aux):
    T = em.stress_energy(jet.g, aux.Fem)
    return jnp.abs(jnp.sum(invert_metric(jet.g) * T)) / (1.0 + jnp.max(jnp.abs(T)))


def _em_sourced(jet: MetricJet, aux: Aux):
    lhs = em.einstein_from_euler_lagrange(jet, em.sourced_euler_lagrange(jet, aux.Fem))
    gm = sym_matrix(jet.g)
    _, Gup = scalar_and_einstein(jet)
    rhs = gm @ Gup @ gm - 8.0 * jnp.pi * em.stress_energy(jet.g, aux.Fem)  # c = G = 1
    return _rel(lhs, rhs)


def _lagrangian_symmetry(jet: MetricJet, aux: Aux):
    r = nt.lagrangian_symmetry_residual(PROBE_FIELD, jet)
    return jnp.abs(r) / (1.0 + jnp.abs(eh.lagrangian_vacuum(jet)))


def _noether_identity(jet: MetricJet, aux: Aux):
    r = nt.noether_identity_residual(PROBE_FIELD, jet)
    return jnp.abs(r) / (1.0 + jnp.abs(nt.current_divergence(PROBE_FIELD, jet)))


@dataclass(frozen=True)
class Check:
    name: str
    reference: str
    tolerance: float
    fn: Callable[[MetricJet, Aux], jnp.ndarray]
    max_samples: Optional[int] = None


CHECKS: tuple[Check, ...] = (
    Check("decomposition", "L splits into a second-derivative part plus a first-order L0", 1e-9,
          lambda j, a: eh.decomposition_residual(j)),
    Check("euler_homogeneity", "L0 is homogeneous of degree 2 in the first derivatives", 1e-10,
          lambda j, a: eh.euler_homogeneity_residual(j)),
    Check("euler_lagrange_forms", "closed-form Euler-Lagrange tensor equals the variational definition", 1e-8,
          lambda j, a: _rel(eh.euler_lagrange(j), eh.euler_lagrange_defining(j))),
    Check("hamiltonian_forms", "quadratic Hamiltonian equals the Legendre-transform expression", 1e-9,
          lambda j, a: _rel(eh.hamiltonian(j), eh.hamiltonian_legendre(j))),
    Check("first_order_equivalence", "the first-order Lagrangian coincides with the Hamiltonian", 1e-9,
          lambda j, a: _rel(fo.lbar(j), eh.hamiltonian(j))),
    Check("first_order_momenta", "closed-form first-order momenta equal their derivative definition", 1e-9,
          lambda j, a: _rel(fo.first_order_momenta(j), fo.first_order_momenta_ad(j))),
    Check("regularity_rank", "first-order Lagrangian is regular: momentum Jacobian has rank 40", 0.5,
          lambda j, a: jnp.abs(_rank(jax.jacfwd(lambda dg: fo.first_order_momenta(j._replace(dg=dg)))(j.dg)
                                     .reshape(40, 40)) - 40), 100),
    Check("legendre_rank", "restricted Legendre map has rank 4 + 10 + 40 = 54", 0.5,
          lambda j, a: jnp.abs(_rank(_legendre_jac(j)) - 54), 100),
    Check("momentum_inversion", "velocities are recovered from the first-order momenta", 1e-9,
          lambda j, a: _rel(lh.invert_momenta(j.g, eh.l_coeff_1(j)), j.dg)),
    Check("u_definition", "closed-form U equals its defining derivatives", 1e-10,
          lambda j, a: _rel(mv.u_tensor(j.g), mv.u_tensor_ad(j))),
    Check("u_pair_swap", "U is symmetric under exchange of its two metric pairs", 1e-12,
          lambda j, a: _pair_swap(j.g)),
    Check("uv_identity", "contraction of U with the pseudo-inverse V returns 3X", 1e-10,
          lambda j, a: mv.uv_identity_residual(j.g, a.X)),
    Check("particular_solution", "F^P solves the field equation for the acceleration field", 1e-8,
          lambda j, a: jnp.max(jnp.abs(mv.hdw_residual(j, mv.f_particular(j))))),
    Check("homogeneous_forward", "fields meeting the trace conditions drop out of the field equation", 1e-8,
          _homogeneous_forward),
    Check("homogeneous_kernels", "U-contraction and trace conditions share one kernel (rank 10 each)", 0.5,
          _homogeneous_kernels, 100),
    Check("integrability", "brackets of the particular solution's vector fields vanish", 1e-8,
          _integrability, 200),
    Check("matter_solution", "F^P + F^m solves the sourced field equation", 1e-9,
          lambda j, a: jnp.max(jnp.abs(mv.hdw_residual(j, mv.f_particular(j) + mv.f_matter(j.g, a.Lm),
                                                      source=a.Lm)))),
    Check("em_trace", "electromagnetic stress-energy tensor is trace-free", 1e-10, _em_trace),
    Check("em_stress_forms", "stress-energy from the source tensor equals the closed form", 1e-9,
          lambda j, a: _rel(em.stress_energy(j.g, a.Fem), em.stress_energy_closed(j.g, a.Fem))),
    Check("em_sourced_einstein", "sourced Euler-Lagrange tensor maps to G - 8 pi T", 1e-8, _em_sourced),
    Check("lagrangian_symmetry", "L_V d4x is invariant under lifted vector fields", 1e-8,
          _lagrangian_symmetry, 200),
    Check("noether_identity", "current divergence equals minus the field equations along the lift", 1e-8,
          _noether_identity, 200),
    Check("noether_cartan_form", "current from the Cartan form equals the derived current", 1e-10,
          lambda j, a: _rel(nt.current_density(PROBE_FIELD)(j), nt.cartan_current_density(PROBE_FIELD)(j)),
          200),
)


def _legendre_jac(jet: MetricJet):
    jet = jet._replace(d4g=None)
    flat, unravel = ravel_pytree(jet)
    return jax.jacfwd(lambda v: lh._restricted_image(unravel(v)))(flat)


def _pair_swap(g):
    u = mv.u_symmetrized(g)
    return jnp.max(jnp.abs(u - jnp.transpose(u, (4, 5, 2, 3, 0, 1)))) / (1.0 + jnp.max(jnp.abs(u)))


def antisymmetry_residual(jet: MetricJet, aux: Aux = None):
    """U^{ab,mn,ls} + U^{am,bn,ls}; reported but not part of the suite (the relation does not hold)."""
    u = mv.u_symmetrized(jet.g)
    return jnp.max(jnp.abs(u + jnp.transpose(u, (0, 2, 1, 3, 4, 5)))) / (1.0 + jnp.max(jnp.abs(u)))


CHECK_NAMES = tuple(c.name for c in CHECKS)


def get_check(name: str) -> Check:
    for c in CHECKS:
        if c.name == name:
            return c
    raise KeyError(name)


@dataclass(frozen=True)
class CheckResult:
    name: str
    reference: str
    max_residual: float
    tolerance: float
    samples: int

    @property
    def passed(self) -> bool:
        return bool(self.max_residual < self.tolerance)


def draw_samples(seed: int, samples: int, order: int = 3):
    rng = np.random.default_rng(seed)
    return random_jets(rng, samples, order), random_aux(rng, samples)


def batched(fn: Callable, jets: MetricJet, aux: Aux, chunk: int = 250) -> np.ndarray:
    """Evaluate a per-jet residual over a stacked batch with vmap, in fixed-size chunks."""
    f = jax.jit(jax.vmap(fn))
    n = len(jets.g)
    out = []
    for s in range(0, n, chunk):
        sl = lambda a: a[s:s + chunk]
        out.append(np.asarray(f(jax.tree_util.tree_map(sl, jets), jax.tree_util.tree_map(sl, aux))))
    return np.concatenate(out) if out else np.zeros(0)


def run_check(check: Check, jets: MetricJet, aux: Aux, tolerance: Optional[float] = None) -> CheckResult:
    n = len(jets.g)
    if check.max_samples is not None and n > check.max_samples:
        cut = lambda a: a[: check.max_samples]
        jets, aux = jax.tree_util.tree_map(cut, jets), jax.tree_util.tree_map(cut, aux)
        n = check.max_samples
    vals = batched(check.fn, jets, aux)
    worst = float(np.max(vals)) if vals.size else 0.0
    if not np.isfinite(worst):
        worst = float("inf")
    return CheckResult(check.name, check.reference, worst,
                       check.tolerance if tolerance is None else tolerance, n)


def calibrated_c0(jets: MetricJet, count: int = 20) -> float:
    n = min(count, len(jets.g))
    return mv.calibrate_c0([unstack(jets, i) for i in range(n)])
