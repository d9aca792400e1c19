import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gravjet.curvature import SignatureError, SingularMetricError
from gravjet.jet_algebra import PAIR_INDEX, PAIRS, TRIPLE_INDEX
from gravjet.metric_dsl import (Add, Call, Div, FamilyError, Mul, Neg, Num, ParseError, Pow, Sub, Var,
                                family_from_dict, load_family, load_vector_field, parse_expression,
                                print_expression, prolong_family, vector_from_dict)

SCHW_POINT = [0.0, 3.0, np.pi / 2, 0.0]


def test_parse_trees():
    assert repr(parse_expression("-(1-2*M/r)")) == "Neg(Sub(1, Div(Mul(2, M), r)))"
    assert repr(parse_expression("r^2*sin(theta)^2")) == "Mul(Pow(r, 2), Pow(Call(sin, theta), 2))"
    assert parse_expression("a-b-c") == Sub(Sub(Var("a"), Var("b")), Var("c"))
    assert parse_expression("-x^2") == Neg(Pow(Var("x"), 2.0))
    assert parse_expression("pow(t, 2*p)") == Call("pow", (Var("t"), Mul(Num(2.0), Var("p"))))
    assert parse_expression("x^-0.5") == Pow(Var("x"), -0.5)


@pytest.mark.parametrize("src, offset", [("2*+3", 2), ("(x", 2), ("x y", 2), ("", 0), ("1 $", 2),
                                         ("x^y", 2)])
def test_parse_errors_carry_offsets(src, offset):
    with pytest.raises(ParseError) as exc:
        parse_expression(src)
    assert exc.value.offset == offset
    assert exc.value.expected or "$" in src


def test_parse_error_offsets_are_bytes():
    with pytest.raises(ParseError) as exc:
        parse_expression("θ + 1")
    assert exc.value.offset == 0
    with pytest.raises(ParseError) as exc:
        parse_expression("x + θ")
    assert exc.value.offset == 4


def test_unknown_function_and_arity():
    with pytest.raises(ParseError, match="unknown function"):
        parse_expression("tan(x)")
    with pytest.raises(ParseError, match="argument"):
        parse_expression("pow(x)")


names = st.sampled_from(["x", "r", "theta", "M"])
leaves = st.one_of(names.map(Var), st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(Num))


def _trees(children):
    binop = st.sampled_from([Add, Sub, Mul, Div])
    return st.one_of(
        st.builds(lambda op, a, b: op(a, b), binop, children, children),
        children.map(Neg),
        st.builds(Pow, children, st.sampled_from([2.0, -1.0, 0.5, 3.0])),
        st.builds(lambda f, a: Call(f, (a,)), st.sampled_from(["sin", "cos", "exp", "log", "sqrt"]), children),
        st.builds(lambda a, b: Call("pow", (a, b)), children, children),
    )


@given(st.recursive(leaves, _trees, max_leaves=12))
def test_print_parse_roundtrip(tree):
    text = print_expression(tree)
    assert parse_expression(text) == tree
    assert print_expression(parse_expression(text)) == text


def test_corpus_roundtrip(corpus):
    for path in sorted(corpus.glob("*.json")):
        fam = load_family(path)
        for t in fam.components:
            once = parse_expression(print_expression(t))
            assert parse_expression(print_expression(once)) == once == t


# ---------------------------------------------------------------------------
# families

def test_minkowski_prolongation(corpus):
    jet = prolong_family(load_family(corpus / "minkowski.json"), [1.0, -2.0, 3.0, 0.5])
    assert np.array_equal(jet.g, [-1, 0, 0, 0, 1, 0, 0, 1, 0, 1])
    for a in (jet.dg, jet.d2g, jet.d3g):
        assert not np.any(a)


def test_schwarzschild_prolongation(corpus):
    fam = load_family(corpus / "schwarzschild.json")
    jet = prolong_family(fam, SCHW_POINT)
    g = jet.metric()
    np.testing.assert_allclose(np.diag(g), [-1 / 3, 3, 9, 9], rtol=1e-14)
    assert jet.dg[PAIR_INDEX[2, 2], 1] == pytest.approx(6.0)
    # d/dr of -(1 - 2/r) = -2/r^2, d2/dr2 = 4/r^3
    assert jet.dg[0, 1] == pytest.approx(-2 / 9)
    assert jet.d2g[0, PAIR_INDEX[1, 1]] == pytest.approx(4 / 27)
    assert jet.d3g[0, TRIPLE_INDEX[1, 1, 1]] == pytest.approx(-12 / 81)


def test_schwarzschild_horizon_is_singular(corpus):
    fam = load_family(corpus / "schwarzschild.json")
    with pytest.raises(SingularMetricError):
        prolong_family(fam, [0.0, 2.0, 1.0, 0.0])


def test_signature_check(corpus):
    fam = load_family(corpus / "schwarzschild.json")
    # inside the horizon t and r swap roles but the signature stays (-+++)
    prolong_family(fam, [0.0, 1.0, 1.0, 0.0])
    with pytest.raises(SignatureError):
        prolong_family(family_from_dict({"components": _comps(g11="-1")}), [0, 0, 0, 0])
    with pytest.raises(ValueError):
        prolong_family(fam, SCHW_POINT, order=2)


@pytest.mark.parametrize("name, point", [("schwarzschild", [0.3, 4.0, 1.1, 0.2]),
                                         ("kasner", [1.3, 0.1, 0.2, 0.3]),
                                         ("flat_flrw", [1.5, 0.0, 0.4, -0.2]),
                                         ("de_sitter_like", [0.2, 0.1, 0.0, 0.3]),
                                         ("non_solution", [0.0, 0.7, 0.0, 0.0])])
def test_prolongation_matches_finite_differences(corpus, name, point):
    fam = load_family(corpus / f"{name}.json")
    p = np.asarray(point)
    jet = prolong_family(fam, p)
    h = 1e-4
    value = lambda q: prolong_family(fam, q).g
    first = lambda q: prolong_family(fam, q).dg
    for m in range(4):
        e = np.eye(4)[m] * h
        fd = (value(p + e) - value(p - e)) / (2 * h)
        np.testing.assert_allclose(jet.dg[:, m], fd, atol=1e-6)
        fd2 = (first(p + e) - first(p - e)) / (2 * h)
        for n in range(4):
            np.testing.assert_allclose(jet.d2g[:, PAIR_INDEX[n, m]], fd2[:, n], atol=1e-6)


def test_coordinate_renaming_is_invisible(corpus):
    data = json.loads((corpus / "schwarzschild.json").read_text())
    renamed = json.loads(json.dumps(data).replace("theta", "th").replace('"r"', '"rr"')
                         .replace("/r)", "/rr)").replace("r^2", "rr^2"))
    assert renamed["coordinates"] == ["t", "rr", "th", "phi"]
    a = prolong_family(family_from_dict(data), SCHW_POINT)
    b = prolong_family(family_from_dict(renamed), SCHW_POINT)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def _comps(**over):
    comps = {f"g{a}{b}": "0" for a, b in PAIRS}
    comps.update(g00="-1", g11="1", g22="1", g33="1")
    comps.update(over)
    return comps


def test_family_validation():
    with pytest.raises(FamilyError, match="missing"):
        c = _comps()
        del c["g23"]
        family_from_dict({"components": c})
    with pytest.raises(FamilyError, match="invalid component key"):
        family_from_dict({"components": {**_comps(), "g10": "0"}})
    with pytest.raises(FamilyError, match="unresolved"):
        family_from_dict({"components": _comps(g11="1 + q")})
    with pytest.raises(FamilyError, match="offset 2"):
        family_from_dict({"components": _comps(g11="2*+3")})
    with pytest.raises(FamilyError, match="both"):
        family_from_dict({"components": _comps(), "parameters": {"x0": 1.0}})


def test_em_block_completes_antisymmetry():
    fam = family_from_dict({"components": _comps(), "em_field": {"F10": "2", "F23": "x1"}})
    F = fam.em_tensor([0, 3.0, 0, 0])
    assert F[0, 1] == -2 and F[1, 0] == 2
    assert F[2, 3] == 3 and F[3, 2] == -3
    assert np.array_equal(F, -F.T)
    with pytest.raises(FamilyError):
        family_from_dict({"components": _comps(), "em_field": {"F11": "1"}})


def test_vector_fields(corpus, tmp_path):
    Z = load_vector_field(corpus / "vectors" / "time_translation.json")
    vals = [c.value for c in Z.component_jets([0, 1, 2, 3], 0)]
    assert vals == [1.0, 0.0, 0.0, 0.0]
    with pytest.raises(FamilyError):
        vector_from_dict({"components": {"f0": "1", "f1": "0", "f2": "0"}})
    with pytest.raises(FamilyError):
        vector_from_dict({"components": {"f0": "y", "f1": "0", "f2": "0", "f3": "0"}})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(FamilyError, match="invalid JSON"):
        load_vector_field(bad)
