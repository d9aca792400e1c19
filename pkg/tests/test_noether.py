import jax
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from gravjet import noether as nt
from gravjet.eh_lagrangian import lagrangian_vacuum
from gravjet.jet_algebra import ETA, PAIR_INDEX, PAIRS, full_dg, make_jet, random_jet
from gravjet.metric_dsl import load_family, load_vector_field, prolong_family, vector_from_dict

from oracles import bumpy_metric, jet_of, schwarzschild_metric

seeds = st.integers(0, 2 ** 32 - 1)
P = lambda a, b: int(PAIR_INDEX[a, b])
_ROWS = np.array([a for a, _ in PAIRS])
_COLS = np.array([b for _, b in PAIRS])


def _coeffs(rng, scale=0.5):
    B = rng.uniform(-scale, scale, (4, 4, 4))
    return rng.uniform(-scale, scale, 4), rng.uniform(-scale, scale, (4, 4)), 0.5 * (B + np.swapaxes(B, 1, 2))


def _vec(f0="0", f1="0", f2="0", f3="0"):
    return vector_from_dict({"components": {"f0": f0, "f1": f1, "f2": f2, "f3": f3}})


# ---------------------------------------------------------------------------
# canonical lift

def test_constant_field_lift_vanishes():
    jet = random_jet(np.random.default_rng(0))
    lift = nt.canonical_lift(lambda x: jnp.array([1.0, 0.5, 0.0, -2.0]), jet)
    assert not np.any(lift.Y_ab) and not np.any(lift.Y_abm) and not np.any(lift.Y_abmn)
    np.testing.assert_array_equal(lift.f, [1.0, 0.5, 0.0, -2.0])


def test_lift_hand_example():
    # Z = x^1 d/dx^0: d_1 f^0 = 1 is the only derivative
    jet = random_jet(np.random.default_rng(1))
    lift = nt.canonical_lift(_vec(f0="x1"), jet)
    g = jet.metric()
    assert lift.Y_ab[P(0, 0)] == 0.0
    assert lift.Y_ab[P(0, 1)] == pytest.approx(-g[0, 0])
    assert lift.Y_ab[P(1, 1)] == pytest.approx(-2 * g[0, 1])
    assert lift.Y_ab[P(1, 2)] == pytest.approx(-g[0, 2])
    assert lift.Y_ab[P(2, 3)] == 0.0


def _j1_formula(c, A, B, jet):
    """Y_{ab,m} = -(d_m d_a f^n g_{nb} + d_a f^n g_{nb,m} + d_m d_b f^n g_{na} + d_b f^n g_{na,m})
    - g_{ab,n} d_m f^n, written out with explicit loops."""
    x = np.asarray(jet.x)
    J = np.asarray(A) + np.einsum("kij,j->ki", B, x)  # d_i f^k
    H = np.asarray(B)  # d_i d_j f^k
    g = np.asarray(jet.metric())
    dg = np.asarray(full_dg(jet.dg))
    out = np.zeros((10, 4))
    for i, (a, b) in enumerate(PAIRS):
        for m in range(4):
            s = 0.0
            for n in range(4):
                s -= H[n, m, a] * g[n, b] + J[n, a] * dg[n, b, m]
                s -= H[n, m, b] * g[n, a] + J[n, b] * dg[n, a, m]
                s -= dg[a, b, n] * J[n, m]
            out[i, m] = s
    return out


@given(seeds)
def test_first_prolongation_matches_coordinate_formula(seed):
    rng = np.random.default_rng(seed)
    jet = random_jet(rng)
    c, A, B = _coeffs(rng)
    lift = nt.canonical_lift(nt.quadratic_field(c, A, B), jet)
    np.testing.assert_allclose(lift.Y_abm, _j1_formula(c, A, B, jet), atol=1e-12)


def test_linear_field_on_minkowski():
    A = np.random.default_rng(2).uniform(-1, 1, (4, 4))
    lift = nt.canonical_lift(nt.quadratic_field(np.zeros(4), A, np.zeros((4, 4, 4))), make_jet(ETA))
    assert not np.any(lift.Y_abm)
    np.testing.assert_allclose(lift.Y_abm, _j1_formula(np.zeros(4), A, np.zeros((4, 4, 4)), make_jet(ETA)))


def _flow(field, x, t, steps=64):
    h = t / steps

    def step(y, _):
        k1 = field(y)
        k2 = field(y + 0.5 * h * k1)
        k3 = field(y + 0.5 * h * k2)
        k4 = field(y + h * k3)
        return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), None

    return jax.lax.scan(step, x, None, length=steps)[0]


def _pullback(metric, field, x, t):
    J = jax.jacfwd(lambda y: _flow(field, y, t))(x)
    return J.T @ metric(_flow(field, x, t)) @ J


@pytest.mark.parametrize("metric, point", [(bumpy_metric, [0.3, 0.8, 1.1, 0.4]),
                                           (schwarzschild_metric, [0.0, 4.0, 1.2, 0.3])])
def test_lift_against_finite_flow(metric, point):
    """d/dt (phi_t^* g) at t = 0 equals -(Y_ab - f^m g_{ab,m})."""
    field = nt.quadratic_field(*_coeffs(np.random.default_rng(3), 0.3))
    x = jnp.asarray(point)
    eps = 1e-4
    lie = (_pullback(metric, field, x, eps) - _pullback(metric, field, x, -eps)) / (2 * eps)
    jet = jet_of(metric, x)
    lift = nt.canonical_lift(field, jet)
    xi = lift.Y_ab - np.asarray(jet.dg) @ lift.f
    np.testing.assert_allclose(-xi, np.asarray(lie)[_ROWS, _COLS], atol=1e-7)


# ---------------------------------------------------------------------------
# symmetry of the Lagrangian density

_sym_residual = jax.jit(lambda j, c, A, B: nt.lagrangian_symmetry_residual(nt.quadratic_field(c, A, B), j))


def test_symmetry_residual_minkowski():
    c, A, B = _coeffs(np.random.default_rng(4))
    assert float(_sym_residual(make_jet(ETA), c, A, B)) == 0.0


@given(seeds)
def test_symmetry_residual_random(seed):
    rng = np.random.default_rng(seed)
    jet = random_jet(rng)
    r = float(_sym_residual(jet, *_coeffs(rng)))
    assert abs(r) < 1e-8 * (1 + abs(float(lagrangian_vacuum(jet))))


def test_symmetry_residual_schwarzschild(corpus):
    jet = prolong_family(load_family(corpus / "schwarzschild.json"), [0.0, 3.5, 1.0, 0.2])
    c, A, B = _coeffs(np.random.default_rng(5))
    assert abs(float(_sym_residual(jet, c, A, B))) < 1e-8


def test_function_alone_is_not_invariant():
    """Without the L div f term the residual is -L div f, not zero."""
    rng = np.random.default_rng(6)
    jet = random_jet(rng)
    c, A, B = _coeffs(rng)
    Z = nt.quadratic_field(c, A, B)
    div = float(jnp.trace(jax.jacfwd(Z)(jet.x)))
    full = float(nt.lagrangian_symmetry_residual(Z, jet))
    assert abs(full - div * float(lagrangian_vacuum(jet))) > 1e-3


# ---------------------------------------------------------------------------
# current

_current = jax.jit(lambda j, c, A, B: (nt.current_density(nt.quadratic_field(c, A, B))(j),
                                       nt.cartan_current_density(nt.quadratic_field(c, A, B))(j)))
_identity = jax.jit(lambda j, c, A, B: (nt.noether_identity_residual(nt.quadratic_field(c, A, B), j),
                                        nt.current_divergence(nt.quadratic_field(c, A, B), j)))


@given(seeds)
def test_cartan_form_route_agrees(seed):
    rng = np.random.default_rng(seed)
    jet = random_jet(rng)
    S, S_cartan = map(np.asarray, _current(jet, *_coeffs(rng)))
    assert np.max(np.abs(S - S_cartan)) < 1e-10 * (1 + np.abs(S).max())


@given(seeds)
def test_off_shell_noether_identity(seed):
    rng = np.random.default_rng(seed)
    jet = random_jet(rng)
    r, div = map(float, _identity(jet, *_coeffs(rng)))
    assert abs(r) < 1e-8 * (1 + abs(div))


def test_minkowski_current(corpus):
    fam = load_family(corpus / "minkowski.json")
    p = [0.2, -0.4, 1.0, 0.3]
    rng = np.random.default_rng(7)
    c, A, B = _coeffs(rng)
    affine = nt.quadratic_field(c, A, np.zeros((4, 4, 4)))
    assert not np.any(nt.noether_current(affine, fam, p).S)
    curved = nt.quadratic_field(c, A, B)
    assert np.abs(nt.noether_current(curved, fam, p).S).max() > 1e-3
    assert nt.divergence_residual(curved, fam, p) == 0.0


def test_current_is_linear():
    rng = np.random.default_rng(8)
    jet = random_jet(rng)
    c1, A1, B1 = _coeffs(rng)
    c2, A2, B2 = _coeffs(rng)
    S = lambda c, A, B: np.asarray(_current(jet, c, A, B)[0])
    s1, s2 = S(c1, A1, B1), S(c2, A2, B2)
    np.testing.assert_allclose(S(2 * c1, 2 * A1, 2 * B1), 2 * s1, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(S(c1 + c2, A1 + A2, B1 + B2), s1 + s2, atol=1e-12)
    Z = nt.quadratic_field(c1, A1, B1)
    np.testing.assert_allclose(nt.noether_current(nt.scaled(Z, -3.0), jet).S, -3 * s1, atol=1e-12)


def test_schwarzschild_time_translation(corpus):
    fam = load_family(corpus / "schwarzschild.json")
    Z = load_vector_field(corpus / "vectors" / "time_translation.json", fam.coord_names)
    for p in ([0.0, 3.0, 1.5707963, 0.0], [1.0, 5.0, 0.7, 2.0]):
        # a Killing field has xi = 0 and L_V = 0 on shell, so the current itself vanishes
        cur = nt.noether_current(Z, fam, p)
        assert np.abs(cur.S).max() < 1e-12
        assert nt.divergence_residual(Z, fam, p) < 1e-6


def test_schwarzschild_polynomial_field(corpus):
    fam = load_family(corpus / "schwarzschild.json")
    Z = vector_from_dict({"components": {"f0": "1 + t*r", "f1": "r^2/10", "f2": "sin(theta)*phi",
                                         "f3": "t - phi^2"}}, fam.coord_names)
    for p in ([0.5, 3.0, 1.0, 0.2], [0.0, 8.0, 2.0, 1.0]):
        S = nt.noether_current(Z, fam, p).S
        assert nt.divergence_residual(Z, fam, p) < 1e-6 * (1 + np.abs(S).max())


def test_non_solution_divergence(corpus):
    fam = load_family(corpus / "non_solution.json")
    Z = vector_from_dict({"components": {"f0": "0", "f1": "0", "f2": "y + x*y", "f3": "0"}},
                         fam.coord_names)
    worst = 0.0
    for p in ([0, 0.3, 0.2, 0], [0, 0.9, -0.5, 0.1], [0.4, 1.5, 1.0, 0]):
        S = nt.noether_current(Z, fam, p).S
        worst = max(worst, nt.divergence_residual(Z, fam, p) / (1 + np.abs(S).max()))
    assert worst > 1e-3
