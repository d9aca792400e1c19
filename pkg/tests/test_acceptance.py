"""Acceptance criteria 1-12. Each test prints one PASS/FAIL line; conftest summarizes per criterion."""

import jax
import jax.numpy as jnp
import numpy as np
import pytest

from gravjet import evolution_1d as ev
from gravjet import legendre_hamiltonian as lh
from gravjet import multivector_solver as mv
from gravjet import noether as nt
from gravjet.cli import derivative_scale, einstein_scale
from gravjet.eh_lagrangian import d_euler_lagrange, euler_lagrange, lagrangian_vacuum
from gravjet.jet_algebra import PAIRS, full_d2g, pack_sym, sym_matrix
from gravjet.metric_dsl import load_family, prolong_family
from gravjet.suite import (_rel, antisymmetry_residual, batched, calibrated_c0, draw_samples, get_check)

SEED = 20240
_ROWS = np.array([a for a, _ in PAIRS])
_COLS = np.array([b for _, b in PAIRS])
KASNER = (2 / 3, 2 / 3, -1 / 3)


def report(criterion, part, value, tol, op="<"):
    ok = value < tol if op == "<" else value > tol
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion} {part}: {value:.3e} ({op} {tol:.1e})")
    return ok


@pytest.fixture(scope="module")
def samples():
    return draw_samples(SEED, 1000)


def _head(samples, n):
    cut = lambda a: a[:n]
    jets, aux = samples
    return jax.tree_util.tree_map(cut, jets), jax.tree_util.tree_map(cut, aux)


def _worst(name_or_fn, samples, n):
    fn = get_check(name_or_fn).fn if isinstance(name_or_fn, str) else name_or_fn
    return float(np.max(batched(fn, *_head(samples, n))))


# 1 -------------------------------------------------------------------------

def test_criterion_1_decomposition(samples):
    assert report(1, "decomposition", _worst("decomposition", samples, 1000), 1e-9)


# 2 -------------------------------------------------------------------------

def test_criterion_2_homogeneity(samples):
    assert report(2, "euler_homogeneity", _worst("euler_homogeneity", samples, 1000), 1e-10)


# 3 -------------------------------------------------------------------------

def test_criterion_3_equivalence(samples):
    assert report(3, "first_order_equivalence", _worst("first_order_equivalence", samples, 1000), 1e-9)


def test_criterion_3_regularity(samples):
    # the check returns |rank - 40| per jet
    assert report(3, "regularity_rank_deviation", _worst("regularity_rank", samples, 100), 0.5)


# 4 -------------------------------------------------------------------------

def test_criterion_4_u_pair_swap(samples):
    assert report(4, "u_pair_swap", _worst("u_pair_swap", samples, 100), 1e-12)


def test_criterion_4_u_antisymmetry(samples):
    """Expected to fail: the relation does not hold for U (see the decisions ledger)."""
    assert report(4, "u_antisymmetry", _worst(antisymmetry_residual, samples, 100), 1e-12)


def test_criterion_4_uv_identity(samples):
    assert report(4, "uv_identity", _worst("uv_identity", samples, 100), 1e-10)


# 5 -------------------------------------------------------------------------

def test_criterion_5_particular_solution(samples):
    c0 = calibrated_c0(samples[0])
    print(f"calibrated c0 = {c0!r} (used: {mv.C0!r})")
    assert abs(c0 - mv.C0) < 1e-8
    assert report(5, "particular_solution", _worst("particular_solution", samples, 500), 1e-8)


# 6 -------------------------------------------------------------------------

def _converse_margin(jet, aux):
    """Smallest ratio of residual to 1e-3 * scale over the two converse controls; > 1 passes."""
    violating = aux.F - mv.project_homogeneous(aux.F, jet.g)
    size = jnp.max(jnp.abs(violating))
    trace = jnp.max(jnp.abs(mv.homogeneous_residual(violating, jet.g))) / (1e-3 * size)
    scale = size * jnp.max(jnp.abs(mv.u_tensor(jet.g)))
    contraction = jnp.max(jnp.abs(mv.accel_contraction(violating, jet.g))) / (1e-3 * scale)
    return -jnp.minimum(trace, contraction)  # negated so that _worst picks the smallest margin


def test_criterion_6_forward(samples):
    assert report(6, "homogeneous_forward", _worst("homogeneous_forward", samples, 100), 1e-8)


def test_criterion_6_converse(samples):
    margin = -_worst(_converse_margin, samples, 100)
    assert report(6, "converse_margin_over_1e-3_scale", margin, 1.0, op=">")


# 7 -------------------------------------------------------------------------

def test_criterion_7_integrability(samples):
    assert report(7, "integrability", _worst("integrability", samples, 200), 1e-8)


# 8 -------------------------------------------------------------------------

def _vacuum_jets(corpus):
    schw = load_family(corpus / "schwarzschild.json")
    kas = load_family(corpus / "kasner.json")
    return ([prolong_family(schw, p) for p in ([0, 3.0, 1.0, 0.0], [1.5, 7.5, 0.4, 2.0], [0, 20.0, 2.5, 1.0])]
            + [prolong_family(kas, p) for p in ([1.0, 0, 0, 0], [0.3, 1.0, -2.0, 0.5], [4.0, 0, 0, 0])])


def test_criterion_8_field_equations(corpus):
    jets = _vacuum_jets(corpus)
    el = max(np.abs(np.asarray(euler_lagrange(j))).max() / einstein_scale(j) for j in jets)
    de = max(np.abs(np.asarray(d_euler_lagrange(j))).max() / derivative_scale(j) for j in jets)
    ok = report(8, "euler_lagrange_scaled", el, 1e-8)
    ok &= report(8, "d_euler_lagrange_scaled", de, 1e-6)
    assert ok


def test_criterion_8_section_trace_condition(corpus):
    worst = 0.0
    for j in _vacuum_jets(corpus):
        Fh = full_d2g(j.d2g)[_ROWS, _COLS] - mv.f_particular(j)
        worst = max(worst, float(np.abs(np.asarray(mv.homogeneous_residual(Fh, j.g))).max()))
    assert report(8, "section_trace_condition", worst, 1e-8)


# 9 -------------------------------------------------------------------------

def test_criterion_9_coordinate_count():
    assert report(9, "momentum_count_deviation", abs(lh.MOMENTUM_COORDINATES - 140), 0.5)


def test_criterion_9_legendre_rank(samples):
    assert report(9, "legendre_rank_deviation", _worst("legendre_rank", samples, 100), 0.5)


def test_criterion_9_inversion(samples):
    assert report(9, "momentum_inversion", _worst("momentum_inversion", samples, 1000), 1e-9)


# 10 ------------------------------------------------------------------------

def test_criterion_10_matter_contraction(samples):
    fn = lambda j, a: _rel(mv.accel_contraction(mv.f_matter(j.g, a.Lm), j.g), a.Lm)
    assert report(10, "f_matter_contraction", _worst(fn, samples, 200), 1e-9)


def test_criterion_10_em_trace(samples):
    assert report(10, "em_trace", _worst("em_trace", samples, 200), 1e-10)


def test_criterion_10_stress_forms(samples):
    assert report(10, "em_stress_forms", _worst("em_stress_forms", samples, 200), 1e-9)


# 11 ------------------------------------------------------------------------

def _noether_fields():
    rng = np.random.default_rng(SEED)
    out = []
    for _ in range(5):
        B = rng.uniform(-0.5, 0.5, (4, 4, 4))
        out.append((rng.uniform(-1, 1, 4), rng.uniform(-0.5, 0.5, (4, 4)), 0.5 * (B + np.swapaxes(B, 1, 2))))
    return out


def _exterior_points():
    rng = np.random.default_rng(SEED + 1)
    return np.column_stack([rng.uniform(-2, 2, 10), rng.uniform(2.5, 30, 10),
                            rng.uniform(0.2, np.pi - 0.2, 10), rng.uniform(0, 2 * np.pi, 10)])


@jax.jit
def _scaled_divergence(jet, c, A, B):
    Z = nt.quadratic_field(c, A, B)
    S = nt.current_density(Z)(jet)
    return jnp.abs(nt.current_divergence(Z, jet)) / (1.0 + jnp.max(jnp.abs(S)))


def test_criterion_11_conservation(corpus):
    fam = load_family(corpus / "schwarzschild.json")
    jets = [prolong_family(fam, p) for p in _exterior_points()]
    stacked = jax.tree_util.tree_map(lambda *a: jnp.stack(a), *jets)
    per_jet = jax.vmap(_scaled_divergence, in_axes=(0, None, None, None))
    worst = max(float(jnp.max(per_jet(stacked, *f))) for f in _noether_fields())
    assert report(11, "current_divergence_5x10", worst, 1e-6)


def test_criterion_11_symmetry(samples):
    fields = _noether_fields()

    def fn(jet, aux):
        r = jnp.stack([jnp.abs(nt.lagrangian_symmetry_residual(nt.quadratic_field(*f), jet)) for f in fields])
        return jnp.max(r) / (1.0 + jnp.abs(lagrangian_vacuum(jet)))

    assert report(11, "lagrangian_symmetry_scaled", _worst(fn, samples, 100), 1e-8)


# 12 ------------------------------------------------------------------------

def _rotated_kasner(t):
    """Kasner with its spatial axes rotated by a fixed orthogonal matrix: non-diagonal, still vacuum."""
    R = np.linalg.qr(np.random.default_rng(SEED).normal(size=(3, 3)))[0]
    s = ev.kasner(KASNER, t)
    rot = np.eye(4)
    rot[1:, 1:] = R
    g = rot @ np.asarray(sym_matrix(s.g)) @ rot.T
    v = rot @ np.asarray(sym_matrix(s.v)) @ rot.T
    return ev.EvolState(t, np.asarray(pack_sym(g)), np.asarray(pack_sym(v)))


def test_criterion_12_kasner_reproduction():
    traj = ev.integrate(ev.kasner(KASNER, 1.0), 2.0, 1e-3)
    exact = np.stack([ev.kasner(KASNER, t).g for t in traj.t])
    assert len(traj.t) == 1001
    assert report(12, "kasner_reproduction_h1e-3", float(np.abs(traj.g - exact).max()), 1e-5)


def test_criterion_12_ricci_tracking():
    worst = 0.0
    for start, h in ((ev.kasner(KASNER, 1.0), 0.01), (_rotated_kasner(1.0), 0.01),
                     (ev.kasner((1.0, 0.0, 0.0), 1.0), 0.02)):
        worst = max(worst, ev.integrate(start, 2.0, h).max_ricci)
    assert report(12, "ricci_norm", worst, 1e-6)


def test_criterion_12_convergence():
    exact = ev.kasner(KASNER, 2.0).g
    err = {h: np.abs(ev.integrate(ev.kasner(KASNER, 1.0), 2.0, h).final.g - exact).max() for h in (0.02, 0.01)}
    ratio = err[0.02] / err[0.01]
    print(f"endpoint errors {err[0.02]:.3e} (h=0.02), {err[0.01]:.3e} (h=0.01)")
    assert report(12, "rk4_ratio_lower", ratio, 12.0, op=">") and report(12, "rk4_ratio_upper", ratio, 20.0)
