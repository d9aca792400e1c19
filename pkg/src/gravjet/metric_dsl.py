"""A small expression language for metric and vector-field components.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' exponent)?
    exponent:= '-'? NUMBER | '(' exponent ')'
    atom    := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation always goes through :class:`TaylorJet`, so one evaluation yields a value
and all partial derivatives up to the truncation order.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from . import jet_algebra as ja
from .curvature import SingularMetricError, check_metric
from .jet_algebra import PAIRS, MetricJet, TaylorJet, jet_compose


class ParseError(ValueError):
    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class FamilyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# trees

@dataclass(frozen=True)
class Num:
    value: float

    def __repr__(self):
        return _fmt_num(self.value)


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: "Expr"

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True)
class BinOp:
    left: "Expr"
    right: "Expr"
    symbol = "?"

    def __repr__(self):
        return f"{type(self).__name__}({self.left!r}, {self.right!r})"


class Add(BinOp):
    symbol = "+"


class Sub(BinOp):
    symbol = "-"


class Mul(BinOp):
    symbol = "*"


class Div(BinOp):
    symbol = "/"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float

    def __repr__(self):
        return f"Pow({self.base!r}, {_fmt_num(self.exponent)})"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    def __repr__(self):
        return f"Call({self.name}, {', '.join(repr(a) for a in self.args)})"


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "pow": 2}
_BINOPS = {"+": Add, "-": Sub, "*": Mul, "/": Div}


def _fmt_num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),])"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    """Tokens as (kind, text, byte offset)."""
    toks = []
    pos = 0
    byte = lambda i: len(src[:i].encode("utf-8"))
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos == len(src):
            break
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", byte(pos))
        toks.append((m.lastgroup, m.group(), byte(pos)))
        pos = m.end()
    toks.append(("end", "", byte(len(src))))
    return toks


class _Parser:
    _ATOM_START = ("number", "identifier", "'('", "'-'")

    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op: str):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"unexpected {text or 'end of input'!r}", off, (f"'{op}'",))
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", off, ("operator", "end of input"))
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            left = _BINOPS[op](left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            left = _BINOPS[op](left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> float:
        kind, text, off = self.peek()
        if (kind, text) == ("op", "("):
            self.take()
            v = self.exponent()
            self.expect_op(")")
            return v
        sign = 1.0
        if (kind, text) == ("op", "-"):
            self.take()
            sign = -1.0
            kind, text, off = self.peek()
        if kind != "num":
            raise ParseError("exponent must be a numeric literal", off, ("number",))
        self.take()
        return sign * float(text)

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", off, tuple(sorted(FUNCTIONS)))
                self.take()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                kind2, text2, off2 = self.peek()
                if (kind2, text2) != ("op", ")"):
                    raise ParseError(f"unexpected {text2 or 'end of input'!r}", off2, ("','", "')'"))
                self.take()
                if len(args) != FUNCTIONS[text]:
                    raise ParseError(f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", off)
                return Call(text, tuple(args))
            return Var(text)
        if (kind, text) == ("op", "("):
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError(f"unexpected {text or 'end of input'!r}", off, self._ATOM_START)


def parse_expression(src: str) -> Expr:
    if not src or not src.strip():
        raise ParseError("empty expression", 0, _Parser._ATOM_START)
    return _Parser(src).parse()


_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expr) -> int:
    return _PREC.get(type(e), 5)


def print_expression(e: Expr) -> str:
    """Render a tree with the minimal parentheses needed to parse back to the same tree."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.name}({', '.join(print_expression(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = print_expression(e.arg)
        return "-" + (f"({inner})" if _prec(e.arg) < 3 else inner)
    if isinstance(e, Pow):
        base = print_expression(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        return f"{base}^{_fmt_num(e.exponent)}"
    p = _prec(e)
    left = print_expression(e.left)
    right = print_expression(e.right)
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.symbol} {right}"


def identifiers(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return identifiers(e.arg)
    if isinstance(e, Pow):
        return identifiers(e.base)
    if isinstance(e, Call):
        return set().union(*(identifiers(a) for a in e.args))
    return identifiers(e.left) | identifiers(e.right)


def evaluate(e: Expr, env: Mapping[str, Union[TaylorJet, float]], order: int) -> TaylorJet:
    """Evaluate a tree on Taylor jets; ``env`` maps names to jets or plain numbers."""
    if isinstance(e, Num):
        return TaylorJet.constant(e.value, order)
    if isinstance(e, Var):
        v = env[e.name]
        return v if isinstance(v, TaylorJet) else TaylorJet.constant(float(v), order)
    if isinstance(e, Neg):
        return -evaluate(e.arg, env, order)
    if isinstance(e, Pow):
        return ja.power(evaluate(e.base, env, order), e.exponent)
    if isinstance(e, Call):
        args = [evaluate(a, env, order) for a in e.args]
        if e.name == "pow":
            base, ex = args
            if not np.any(ex.coeffs[1:]):
                return ja.power(base, ex.value)
            return ja.exp(ex * ja.log(base))
        return getattr(ja, e.name)(args[0])
    a, b = evaluate(e.left, env, order), evaluate(e.right, env, order)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    return a / b


# ---------------------------------------------------------------------------
# families

@dataclass(frozen=True)
class MetricFamily:
    name: str
    coord_names: tuple
    components: tuple  # 10 trees, packed pair order
    parameters: Mapping[str, float] = field(default_factory=dict)
    em_field: Mapping[tuple, Expr] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.coord_names) != 4 or len(set(self.coord_names)) != 4:
            raise FamilyError("exactly four distinct coordinate names are required")
        clash = set(self.coord_names) & set(self.parameters)
        if clash:
            raise FamilyError(f"names used both as coordinate and parameter: {sorted(clash)}")
        known = set(self.coord_names) | set(self.parameters)
        trees = list(self.components) + list(self.em_field.values())
        for t in trees:
            missing = identifiers(t) - known
            if missing:
                raise FamilyError(f"unresolved identifiers {sorted(missing)} in {print_expression(t)}")

    def _env(self, point: Sequence[float], order: int) -> dict:
        env = {n: TaylorJet.variable(i, float(point[i]), order) for i, n in enumerate(self.coord_names)}
        env.update(self.parameters)
        return env

    def component_jets(self, point: Sequence[float], order: int) -> list[TaylorJet]:
        env = self._env(point, order)
        return [evaluate(t, env, order) for t in self.components]

    def em_tensor(self, point: Sequence[float]) -> np.ndarray:
        env = self._env(point, 0)
        F = np.zeros((4, 4))
        for (m, n), t in self.em_field.items():
            v = evaluate(t, env, 0).value
            F[m, n], F[n, m] = v, -v
        return F

    @property
    def has_em_field(self) -> bool:
        return bool(self.em_field)


def _derivative_tables(order: int):
    tables = [[(i,) for i in range(4)], ja.PAIRS, ja.TRIPLES, ja.QUADS]
    return tables[: order]


def jets_to_metric_jet(comps: Sequence[TaylorJet], point: Sequence[float], order: int) -> MetricJet:
    g = np.array([c.value for c in comps])
    arrays = []
    for k, table in enumerate(_derivative_tables(max(order, 3)), start=1):
        if k > order:
            arrays.append(np.zeros((10, len(table))))
            continue
        arrays.append(np.array([[c.partial(*idx) for idx in table] for c in comps]))
    d4g = arrays[3] if order >= 4 else None
    return MetricJet(np.asarray(point, dtype=float), g, arrays[0], arrays[1], arrays[2], d4g)


def prolong_family(fam: MetricFamily, point: Sequence[float], order: int = 3) -> MetricJet:
    """The jet of the family's metric at ``point``, derivatives exact to rounding."""
    if order not in (3, 4):
        raise ValueError("prolongation order must be 3 or 4")
    if len(point) != 4:
        raise ValueError("a point needs four coordinates")
    try:
        comps = fam.component_jets(point, order)
    except ZeroDivisionError as exc:
        raise SingularMetricError(f"metric component singular at {list(point)}: {exc}") from exc
    jet = jets_to_metric_jet(comps, point, order)
    if not np.all(np.isfinite(jet.g)):
        raise ja.DomainError("non-finite metric value")
    check_metric(jet.g, require_lorentzian=True)
    return jet


def _parse_component(key: str, src) -> Expr:
    if isinstance(src, (int, float)):
        src = repr(float(src))
    if not isinstance(src, str):
        raise FamilyError(f"component {key}: expected string or number")
    try:
        return parse_expression(src)
    except ParseError as exc:
        raise FamilyError(f"component {key}: {exc}") from exc


def family_from_dict(d: Mapping) -> MetricFamily:
    comps = d.get("components")
    if not isinstance(comps, Mapping):
        raise FamilyError("missing 'components' object")
    valid = {f"g{a}{b}" for a, b in PAIRS}
    for k in comps:
        if k not in valid:
            raise FamilyError(f"invalid component key {k!r}; use g<a><b> with a <= b")
    missing = [f"g{a}{b}" for a, b in PAIRS if f"g{a}{b}" not in comps]
    if missing:
        raise FamilyError(f"missing components: {', '.join(missing)}")
    trees = tuple(_parse_component(f"g{a}{b}", comps[f"g{a}{b}"]) for a, b in PAIRS)
    em = {}
    for k, src in (d.get("em_field") or {}).items():
        m = re.fullmatch(r"F([0-3])([0-3])", k)
        if not m or m.group(1) == m.group(2):
            raise FamilyError(f"invalid em_field key {k!r}")
        a, b = int(m.group(1)), int(m.group(2))
        tree = _parse_component(k, src)
        if a > b:
            a, b, tree = b, a, Neg(tree)
        if (a, b) in em:
            raise FamilyError(f"em_field entry F{a}{b} given twice")
        em[(a, b)] = tree
    params = {str(k): float(v) for k, v in (d.get("parameters") or {}).items()}
    coords = tuple(d.get("coordinates") or ("x0", "x1", "x2", "x3"))
    return MetricFamily(str(d.get("name", "unnamed")), coords, trees, params, em)


def load_family(path: Union[str, Path]) -> MetricFamily:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FamilyError(f"{path}: invalid JSON at offset {exc.pos}: {exc.msg}") from exc
    return family_from_dict(data)


@dataclass(frozen=True)
class VectorFamily:
    coord_names: tuple
    components: tuple  # 4 trees f^0..f^3
    parameters: Mapping[str, float] = field(default_factory=dict)

    def component_jets(self, point: Sequence[float], order: int) -> list[TaylorJet]:
        env = {n: TaylorJet.variable(i, float(point[i]), order) for i, n in enumerate(self.coord_names)}
        env.update(self.parameters)
        return [evaluate(t, env, order) for t in self.components]


def vector_from_dict(d: Mapping, coord_names: Sequence[str] = ("x0", "x1", "x2", "x3")) -> VectorFamily:
    comps = d.get("components")
    if not isinstance(comps, Mapping):
        raise FamilyError("missing 'components' object")
    bad = set(comps) - {f"f{i}" for i in range(4)}
    if bad:
        raise FamilyError(f"invalid vector component keys {sorted(bad)}")
    missing = [f"f{i}" for i in range(4) if f"f{i}" not in comps]
    if missing:
        raise FamilyError(f"missing components: {', '.join(missing)}")
    coords = tuple(d.get("coordinates") or coord_names)
    params = {str(k): float(v) for k, v in (d.get("parameters") or {}).items()}
    trees = tuple(_parse_component(f"f{i}", comps[f"f{i}"]) for i in range(4))
    known = set(coords) | set(params)
    for t in trees:
        if identifiers(t) - known:
            raise FamilyError(f"unresolved identifiers {sorted(identifiers(t) - known)}")
    return VectorFamily(coords, trees, params)


def load_vector_field(path: Union[str, Path], coord_names: Sequence[str] = ("x0", "x1", "x2", "x3")) -> VectorFamily:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FamilyError(f"{path}: invalid JSON at offset {exc.pos}: {exc.msg}") from exc
    return vector_from_dict(data, coord_names)


def compose(e: Expr, env_names: Sequence[str]):
    """Turn a tree into a callable of four Taylor variables (for ``jet_compose``)."""
    def fn(*xs):
        return evaluate(e, dict(zip(env_names, xs)), xs[0].order)
    return fn


def evaluate_at(e: Expr, coord_names: Sequence[str], point: Sequence[float], order: int = 0,
                parameters: Mapping[str, float] = None) -> TaylorJet:
    env = {n: TaylorJet.variable(i, float(point[i]), order) for i, n in enumerate(coord_names)}
    env.update(parameters or {})
    return evaluate(e, env, order)
