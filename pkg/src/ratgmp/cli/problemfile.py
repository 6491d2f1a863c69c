"""Reader for ``.rp`` problem files.

Example::

    # sum of two rational terms on the real line
    variables: x
    minimize
    (1 + x + x^2) / (1 + x^2)
    (1 + x^2) / (1 + 2*x^2)
    4 - x^2 >= 0
    option: order = 1:6

Line kinds, decided in this order:

* ``#`` starts a comment; blank lines are ignored.
* ``variables: a b c`` declares the variables (must come first).
* ``minimize`` / ``maximize`` sets the sense (default minimize).
* ``clique: a b`` adds one clique; cliques are matched to terms in order.
* ``option: key = value`` stores an option string.
* a line containing ``>=``, ``<=`` or ``==`` is a constraint.
* any other line is a term ``num / den`` or ``num``.

Expressions follow::

    expression := term (('+' | '-') term)*
    term       := factor ('*' factor)*
    factor     := ('+' | '-') factor | base ('^' integer)?
    base       := number | identifier | '(' expression ')'
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import ModelingError, ParseError
from ..gmp import EQ, GEQ, ConstraintPoly, RationalProgram, RationalTerm, SparsityPattern
from ..polyalg import Polynomial

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*^()/])
""", re.VERBOSE)

_RELATION = re.compile(r">=|<=|==")
_DIRECTIVE = re.compile(r"^\s*(variables|clique|option)\s*:(.*)$", re.IGNORECASE)
_SENSE = re.compile(r"^\s*(minimize|maximize)\s*:?\s*$", re.IGNORECASE)


@dataclass
class ProblemFile:
    variables: list
    sense: str = "minimize"
    terms: list = field(default_factory=list)          # (numerator, denominator) polynomials
    constraints: list = field(default_factory=list)    # (polynomial, relation)
    cliques: list = field(default_factory=list)        # lists of variable names
    options: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.variables)

    def pattern(self):
        """Sparsity pattern from the declared cliques (None when there are none)."""
        if not self.cliques:
            return None
        idx = [[self.variables.index(v) for v in c] for c in self.cliques]
        return pattern_from_cliques(idx, [ConstraintPoly(g, rel) for g, rel in self.constraints])

    def to_program(self) -> RationalProgram:
        terms = [RationalTerm(p, q) for p, q in self.terms]
        cons = [ConstraintPoly(g, rel) for g, rel in self.constraints]
        prog = RationalProgram(self.n, terms, cons, self.sense, names=tuple(self.variables))
        pat = self.pattern()
        return prog.replace(pattern=pat) if pat is not None else prog

    def to_text(self) -> str:
        """Canonical text that :func:`parse_problem` maps back to the same polynomials."""
        names = self.variables
        out = ["variables: " + " ".join(names), self.sense]
        for p, q in self.terms:
            num = p.to_string(names)
            out.append(f"({num})" if q == Polynomial.constant(self.n, 1.0)
                       else f"({num}) / ({q.to_string(names)})")
        for g, rel in self.constraints:
            out.append(f"{g.to_string(names)} {'==' if rel == EQ else '>='} 0")
        for c in self.cliques:
            out.append("clique: " + " ".join(c))
        for k, v in self.options.items():
            out.append(f"option: {k} = {v}")
        return "\n".join(out) + "\n"


def pattern_from_cliques(cliques, constraints) -> SparsityPattern:
    """Assign every constraint to the first clique holding its support."""
    cliques = [tuple(sorted(c)) for c in cliques]
    groups = [[] for _ in cliques]
    for ci, con in enumerate(constraints):
        home = next((i for i, c in enumerate(cliques) if con.g.support <= set(c)), None)
        if home is None:
            raise ModelingError(f"constraint {ci + 1} fits no declared clique")
        groups[home].append(ci)
    return SparsityPattern(tuple(cliques), tuple(tuple(g) for g in groups))


class _Parser:
    def __init__(self, text, line, col0, names):
        self.line = line
        self.names = names
        self.toks = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise ParseError(f"unexpected character {text[pos]!r}", "syntax", line, col0 + pos)
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, m.group(), col0 + pos))
            pos = m.end()
        self.end_col = col0 + len(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, self.end_col)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def error(self, msg, kind="syntax", tok=None):
        tok = tok or self.peek()
        return ParseError(msg, kind, self.line, tok[2])

    def parse(self) -> Polynomial:
        if not self.toks:
            raise self.error("empty expression")
        p = self.expression()
        kind, val, _ = self.peek()
        if kind is not None:
            if val == "/":
                raise self.error("division is only allowed once, between numerator and denominator",
                                 "division")
            raise self.error(f"unexpected {val!r}")
        return p

    def expression(self):
        p = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.factor()
        while self.peek()[1] == "*":
            self.take()
            p = p * self.factor()
        return p

    def factor(self):
        kind, val, _ = self.peek()
        if val in ("+", "-"):
            self.take()
            p = self.factor()
            return -p if val == "-" else p
        base = self.base()
        if self.peek()[1] == "^":
            caret = self.take()
            tok = self.peek()
            if tok[1] in ("-", "+") or tok[0] != "num" or not tok[1].isdigit():
                shown = tok[1] if tok[1] is not None else "end of line"
                # point at the '^' so the whole bad exponent '^-1' is underlined from its start
                raise self.error(f"exponent must be a non-negative integer, got '^{shown}'",
                                 "exponent", caret)
            self.take()
            base = base ** int(tok[1])
        return base

    def base(self):
        kind, val, col = self.take()
        n = len(self.names)
        if kind == "num":
            return Polynomial.constant(n, float(val))
        if kind == "id":
            if val not in self.names:
                raise ParseError(f"undeclared identifier {val!r}", "undeclared", self.line, col)
            return Polynomial.variable(n, self.names.index(val))
        if val == "(":
            p = self.expression()
            if self.peek()[1] != ")":
                if self.peek()[1] == "/":
                    raise self.error("division inside an expression is not allowed", "division")
                raise self.error("expected ')'")
            self.take()
            return p
        if val == "/":
            raise ParseError("division inside an expression is not allowed", "division",
                             self.line, col)
        shown = val if val is not None else "end of line"
        raise ParseError(f"unexpected {shown!r}", "syntax", self.line, col)


def parse_expression(text: str, names, line: int = 1, col: int = 1) -> Polynomial:
    return _Parser(text, line, col, list(names)).parse()


def _split_division(text: str, line: int):
    depth = 0
    cuts = []
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "/":
            if depth:
                raise ParseError("division inside parentheses is not allowed", "division",
                                 line, i + 1)
            cuts.append(i)
    if len(cuts) > 1:
        raise ParseError("a term may contain only one '/'", "division", line, cuts[1] + 1)
    return cuts[0] if cuts else None


def parse_problem(text: str) -> ProblemFile:
    names = None
    pf = None
    clique_lines: list = []
    last = max(1, len(text.splitlines()))
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _DIRECTIVE.match(line)
        if m:
            key, rest = m.group(1).lower(), m.group(2)
            if key == "variables":
                if names is not None:
                    raise ParseError("variables declared twice", "syntax", lineno, 1)
                names = rest.split()
                bad = [v for v in names if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", v)]
                if not names or bad:
                    raise ParseError(f"invalid variable list {rest.strip()!r}", "syntax", lineno, 1)
                if len(set(names)) != len(names):
                    raise ParseError("duplicate variable name", "syntax", lineno, 1)
                pf = ProblemFile(list(names))
                continue
            if pf is None:
                raise ParseError("'variables:' must come first", "syntax", lineno, 1)
            if key == "clique":
                members = rest.split()
                for v in members:
                    if v not in names:
                        raise ParseError(f"undeclared identifier {v!r}", "undeclared", lineno,
                                         line.index(v) + 1)
                if not members:
                    raise ParseError("empty clique", "syntax", lineno, 1)
                pf.cliques.append(members)
                clique_lines.append(lineno)
            else:
                if "=" not in rest:
                    raise ParseError("expected 'option: key = value'", "syntax", lineno, 1)
                k, v = rest.split("=", 1)
                pf.options[k.strip().lower()] = v.strip()
            continue
        if pf is None:
            raise ParseError("'variables:' must come first", "syntax", lineno, 1)
        m = _SENSE.match(line)
        if m:
            pf.sense = m.group(1).lower()
            continue
        rels = list(_RELATION.finditer(line))
        if rels:
            if len(rels) > 1:
                raise ParseError("only one relation per constraint", "syntax", lineno,
                                 rels[1].start() + 1)
            r = rels[0]
            if "/" in line:
                raise ParseError("division is not allowed in constraints", "division", lineno,
                                 line.index("/") + 1)
            lhs = parse_expression(line[:r.start()], names, lineno, 1)
            rhs = parse_expression(line[r.end():], names, lineno, r.end() + 1)
            op = r.group()
            g = rhs - lhs if op == "<=" else lhs - rhs
            pf.constraints.append((g, EQ if op == "==" else GEQ))
            continue
        cut = _split_division(line, lineno)
        if cut is None:
            num = parse_expression(line, names, lineno, 1)
            den = Polynomial.constant(len(names), 1.0)
        else:
            num = parse_expression(line[:cut], names, lineno, 1)
            den = parse_expression(line[cut + 1:], names, lineno, cut + 2)
            if den.is_zero():
                raise ParseError("denominator is identically zero", "division", lineno, cut + 2)
        pf.terms.append((num, den))
    if pf is None:
        raise ParseError("no 'variables:' declaration", "syntax", 1)
    if not pf.terms:
        raise ParseError("objective has no terms", "empty-objective", last)
    if pf.cliques and len(pf.cliques) != len(pf.terms):
        raise ParseError(f"{len(pf.cliques)} cliques declared for {len(pf.terms)} terms",
                         "clique", clique_lines[-1])
    for i, (p, q) in enumerate(pf.terms):
        if pf.cliques:
            allowed = {names.index(v) for v in pf.cliques[i]}
            if not (p.support | q.support) <= allowed:
                raise ParseError(f"term {i + 1} uses variables outside clique {i + 1}", "clique",
                                 clique_lines[i])
    return pf
