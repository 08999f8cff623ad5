"""R-style model formula parsing and design-matrix construction.

The accepted grammar is deliberately small::

    formula : [IDENT "~"] expr
    expr    : atom ("+" atom)*
    atom    : IDENT
            | IDENT ":" IDENT
            | "(" IDENT ("+" IDENT)* ")" "^2"

``(v1 + ... + vk)^2`` expands to all k main effects plus every unordered
pairwise interaction. Duplicate terms arising from expansion are merged
(set semantics). There is no ``*`` operator, no nesting, no transformations
and no factor handling: covariates are assumed pre-encoded as numeric
columns.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np


class FormulaError(ValueError):
    """Syntax or semantic error in a formula string."""

    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


@dataclass(frozen=True, order=True)
class Term:
    """A main effect (one variable) or a two-way interaction (two variables).

    Interaction operands are stored sorted, so ``X2:X1`` and ``X1:X2``
    compare equal.
    """

    variables: tuple[str, ...]

    def __post_init__(self):
        k = len(self.variables)
        if k not in (1, 2):
            raise FormulaError("a term holds one or two variables")
        if k == 2:
            a, b = self.variables
            if a == b:
                raise FormulaError(f"self-interaction {a}:{b} is not allowed")
            if a > b:
                object.__setattr__(self, "variables", (b, a))

    @property
    def is_interaction(self) -> bool:
        return len(self.variables) == 2

    @property
    def label(self) -> str:
        return ":".join(self.variables)

    def involves(self, name: str) -> bool:
        return name in self.variables


def main_effect(var: str) -> Term:
    return Term((var,))


def interaction(a: str, b: str) -> Term:
    return Term((a, b))


def _canonical_order(terms) -> tuple[Term, ...]:
    mains = sorted({t for t in terms if not t.is_interaction}, key=lambda t: t.variables)
    inters = sorted({t for t in terms if t.is_interaction}, key=lambda t: t.variables)
    return tuple(mains) + tuple(inters)


@dataclass(frozen=True)
class FormulaSpec:
    """Canonicalized term list of a parsed formula.

    ``terms`` is deduplicated and deterministically ordered: main effects
    first, then interactions, each class sorted lexicographically by
    variable name. ``treatment`` flags which variable plays the exposure
    role; it is metadata set by the caller, not parsed from the string.
    The intercept is always present.
    """

    terms: tuple[Term, ...]
    response: Optional[str] = None
    treatment: Optional[str] = None
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "terms", _canonical_order(self.terms))
        if not self.intercept:
            raise FormulaError("models without an intercept are not supported")
        if self.treatment is not None and self.treatment not in self.variables:
            raise FormulaError(f"treatment {self.treatment!r} does not appear in the formula")

    @property
    def main_effects(self) -> tuple[Term, ...]:
        return tuple(t for t in self.terms if not t.is_interaction)

    @property
    def interactions(self) -> tuple[Term, ...]:
        return tuple(t for t in self.terms if t.is_interaction)

    @property
    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in self.terms:
            for v in t.variables:
                seen.setdefault(v)
        return tuple(seen)

    def with_treatment(self, name: str) -> "FormulaSpec":
        return FormulaSpec(self.terms, response=self.response, treatment=name)

    def with_response(self, name: Optional[str]) -> "FormulaSpec":
        return FormulaSpec(self.terms, response=name, treatment=self.treatment)

    def drop_variable(self, name: str) -> "FormulaSpec":
        """Remove every term involving ``name`` (used to strip a treatment)."""
        kept = tuple(t for t in self.terms if not t.involves(name))
        treatment = None if self.treatment == name else self.treatment
        return FormulaSpec(kept, response=self.response, treatment=treatment)


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<ident>[A-Za-z_.][A-Za-z0-9_.]*)|(?P<num>[0-9]+)|(?P<op>[~+:()^]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_pos = len(text) - len(stripped)
            bad = stripped[0]
            if bad in "*-/":
                raise FormulaError(f"unknown operator {bad!r}", bad_pos)
            raise FormulaError(f"unexpected character {bad!r}", bad_pos)
        if m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        elif m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, value: Optional[str] = None):
        tok = self.advance()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            raise FormulaError(f"expected {want!r}, found {tok[1]!r}" if tok[1] else f"expected {want!r}, found end of input", tok[2])
        return tok

    def parse(self) -> FormulaSpec:
        response = None
        # lookahead for "LHS ~"
        if self.peek()[0] == "ident" and self.tokens[self.i + 1][:2] == ("op", "~"):
            response = self.advance()[1]
            self.advance()
        terms = self.parse_expr()
        tok = self.peek()
        if tok[0] != "end":
            raise FormulaError(f"unexpected {tok[1]!r}", tok[2])
        return FormulaSpec(tuple(terms), response=response)

    def parse_expr(self) -> list[Term]:
        terms = self.parse_atom()
        while self.peek()[:2] == ("op", "+"):
            self.advance()
            terms.extend(self.parse_atom())
        return terms

    def parse_atom(self) -> list[Term]:
        tok = self.peek()
        if tok[:2] == ("op", "("):
            return self.parse_expansion()
        if tok[0] != "ident":
            msg = f"expected a variable, found {tok[1]!r}" if tok[1] else "expected a variable, found end of input"
            raise FormulaError(msg, tok[2])
        left = self.advance()[1]
        if self.peek()[:2] == ("op", ":"):
            op_tok = self.advance()
            right_tok = self.expect("ident")
            if right_tok[1] == left:
                raise FormulaError(f"self-interaction {left}:{left}", op_tok[2])
            return [interaction(left, right_tok[1])]
        return [main_effect(left)]

    def parse_expansion(self) -> list[Term]:
        self.expect("op", "(")
        names = [self.expect("ident")[1]]
        while self.peek()[:2] == ("op", "+"):
            self.advance()
            names.append(self.expect("ident")[1])
        self.expect("op", ")")
        self.expect("op", "^")
        two = self.advance()
        if two[:2] != ("num", "2"):
            raise FormulaError(f"only squared expansion '^2' is supported, found {two[1]!r}", two[2])
        unique = list(dict.fromkeys(names))
        terms: list[Term] = [main_effect(v) for v in unique]
        terms.extend(interaction(a, b) for a, b in combinations(unique, 2))
        return terms


def parse_formula(text: str) -> FormulaSpec:
    """Parse a formula string into a canonical :class:`FormulaSpec`."""
    spec = _Parser(text).parse()
    if not spec.terms:
        raise FormulaError("formula has no terms")
    return spec


def render_formula(spec: FormulaSpec) -> str:
    """Canonical string form; ``parse_formula`` round-trips it."""
    rhs = " + ".join(t.label for t in spec.terms)
    if spec.response is not None:
        return f"{spec.response} ~ {rhs}"
    return rhs


@dataclass(frozen=True)
class DesignMatrix:
    """Dense numeric design: intercept, main effects, then interactions."""

    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != len(self.columns):
            raise ValueError("values shape does not match column labels")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.columns.index(label)]


INTERCEPT = "(Intercept)"


def build_design(spec: FormulaSpec, data, treatment_override: Optional[int] = None) -> DesignMatrix:
    """Materialize the design matrix for ``spec`` over ``data``.

    ``treatment_override`` (0 or 1) replaces the treatment column — and
    propagates into every interaction involving it — so outcome models can
    be evaluated at counterfactual treatment levels. Interaction columns
    are exact elementwise products of their operand columns.
    """
    if treatment_override is not None:
        if spec.treatment is None:
            raise FormulaError("treatment_override requires a formula with a flagged treatment")
        if treatment_override not in (0, 1):
            raise ValueError("treatment_override must be 0 or 1")

    n = data.n
    base: dict[str, np.ndarray] = {}
    for var in spec.variables:
        if not data.has_column(var):
            raise FormulaError(f"variable {var!r} not present in the data")
        col = np.asarray(data.column(var), dtype=float)
        if not np.isfinite(col).all():
            raise ValueError(f"non-finite value in column {var!r}")
        base[var] = col
    if treatment_override is not None:
        base[spec.treatment] = np.full(n, float(treatment_override))

    cols = [np.ones(n)]
    labels = [INTERCEPT]
    for term in spec.terms:
        if term.is_interaction:
            a, b = term.variables
            cols.append(base[a] * base[b])
        else:
            cols.append(base[term.variables[0]])
        labels.append(term.label)
    return DesignMatrix(columns=tuple(labels), values=np.column_stack(cols))
