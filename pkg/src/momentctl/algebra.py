"""Sparse polynomials in countably many variables.

Variables are identified by non-negative integer ids. A monomial is a
:class:`MultiIndex` holding only its non-zero exponents, so a polynomial
only ever mentions finitely many variables even though the ambient algebra
has infinitely many.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .errors import MissingCoordinateError, ParseError

Point = Mapping[int, float]


@dataclass(frozen=True, order=False)
class MultiIndex:
    """Exponent vector stored as sorted ``(variable, exponent)`` pairs."""

    entries: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        for var, exp in self.entries:
            if exp <= 0:
                raise ValueError(f"exponent for x{var} must be positive, got {exp}")
            if var < 0:
                raise ValueError(f"variable id must be non-negative, got {var}")

    @classmethod
    def from_dict(cls, exponents: Mapping[int, int]) -> "MultiIndex":
        return cls(tuple(sorted((int(v), int(e)) for v, e in exponents.items() if e != 0)))

    @classmethod
    def var(cls, i: int, power: int = 1) -> "MultiIndex":
        return cls(((i, power),)) if power else cls()

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.entries)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.entries)

    def as_dict(self) -> dict[int, int]:
        return dict(self.entries)

    def exponent(self, i: int) -> int:
        for v, e in self.entries:
            if v == i:
                return e
        return 0

    def is_supported_in(self, variables: Iterable[int]) -> bool:
        allowed = set(variables)
        return all(v in allowed for v, _ in self.entries)

    def restrict(self, variables: Iterable[int]) -> "MultiIndex":
        allowed = set(variables)
        return MultiIndex(tuple((v, e) for v, e in self.entries if v in allowed))

    def __mul__(self, other: "MultiIndex") -> "MultiIndex":
        if not self.entries:
            return other
        if not other.entries:
            return self
        merged = dict(self.entries)
        for v, e in other.entries:
            merged[v] = merged.get(v, 0) + e
        return MultiIndex(tuple(sorted(merged.items())))

    def __bool__(self) -> bool:
        return bool(self.entries)

    def evaluate(self, x: Point) -> float:
        out = 1.0
        for v, e in self.entries:
            try:
                out *= float(x[v]) ** e
            except KeyError:
                raise MissingCoordinateError(v) from None
        return out

    def __str__(self) -> str:
        if not self.entries:
            return "1"
        return "*".join(f"x{v}" if e == 1 else f"x{v}^{e}" for v, e in self.entries)

    __repr__ = __str__


ONE = MultiIndex()


@dataclass(frozen=True)
class VariableSet:
    """Finite sorted set of variable ids, i.e. a coordinate subalgebra."""

    ids: tuple[int, ...] = ()

    def __init__(self, ids: Iterable[int] = ()):
        object.__setattr__(self, "ids", tuple(sorted({int(i) for i in ids})))

    def __iter__(self) -> Iterator[int]:
        return iter(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, i) -> bool:
        return i in self.ids

    def __le__(self, other: "VariableSet") -> bool:
        return set(self.ids) <= set(other.ids)

    def __lt__(self, other: "VariableSet") -> bool:
        return set(self.ids) < set(other.ids)

    def __or__(self, other: "VariableSet") -> "VariableSet":
        return VariableSet(self.ids + other.ids)

    def key(self) -> tuple[int, tuple[int, ...]]:
        """Sort key: by size, then lexicographically."""
        return (len(self.ids), self.ids)

    def label(self) -> str:
        return "_".join(str(i) for i in self.ids) or "empty"

    def __str__(self) -> str:
        return "{" + ",".join(str(i) for i in self.ids) + "}"

    __repr__ = __str__


class Polynomial:
    """Real polynomial as a finite map MultiIndex -> coefficient.

    Zero coefficients are dropped on construction, so ``terms`` is always in
    canonical form and two equal polynomials compare equal.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[MultiIndex, float] | None = None):
        clean = {}
        for m, c in (terms or {}).items():
            c = float(c)
            if c != 0.0:
                clean[m] = clean.get(m, 0.0) + c
        self._terms = {m: c for m, c in clean.items() if c != 0.0}

    @classmethod
    def constant(cls, c: float) -> "Polynomial":
        return cls({ONE: c})

    @classmethod
    def monomial(cls, m: MultiIndex, c: float = 1.0) -> "Polynomial":
        return cls({m: c})

    @classmethod
    def var(cls, i: int) -> "Polynomial":
        return cls({MultiIndex.var(i): 1.0})

    @property
    def terms(self) -> dict[MultiIndex, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    @property
    def degree(self) -> int:
        return max((m.degree for m in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def __add__(self, other) -> "Polynomial":
        other = _as_poly(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "Polynomial":
        return _as_poly(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = _as_poly(other)
        out: dict[MultiIndex, float] = {}
        for (m1, c1), (m2, c2) in itertools.product(self._terms.items(), other._terms.items()):
            m = m1 * m2
            out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        out = Polynomial.constant(1.0)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for m in sorted(self._terms, key=grlex_key):
            c = self._terms[m]
            if not m:
                body = f"{abs(c):g}"
            elif abs(c) == 1.0:
                body = str(m)
            else:
                body = f"{abs(c):g}*{m}"
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self) -> str:
        return f"Polynomial({self})"


def _as_poly(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    if isinstance(p, (int, float)):
        return Polynomial.constant(float(p))
    raise TypeError(f"cannot interpret {type(p).__name__} as a polynomial")


def grlex_key(m: MultiIndex) -> tuple:
    """Graded lexicographic key with x_i > x_j for i < j.

    Within one degree, ``x1^2 < x1*x2 < x2^2`` in the resulting order,
    i.e. larger exponents on lower ids come first.
    """
    return (m.degree, tuple((v, -e) for v, e in m.entries) + ((math.inf, 0),))


def support(p: Polynomial) -> VariableSet:
    return VariableSet(v for m, _ in p.items() for v in m.variables)


def monomials_up_to(F: VariableSet, n: int) -> list[MultiIndex]:
    """All monomials in the variables of ``F`` of total degree <= n, in grlex order."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    ids = tuple(F)
    out = []
    for d in range(n + 1):
        out.extend(_exponents_of_degree(ids, d))
    return out


def _exponents_of_degree(ids: tuple[int, ...], d: int) -> list[MultiIndex]:
    if not ids:
        return [ONE] if d == 0 else []
    out = []
    head, rest = ids[0], ids[1:]
    for e in range(d, -1, -1):
        for tail in _exponents_of_degree(rest, d - e):
            out.append(MultiIndex.var(head, e) * tail)
    return out


def evaluate(p: Polynomial, x: Point) -> float:
    return math.fsum(c * m.evaluate(x) for m, c in p.items())


@dataclass(frozen=True)
class QuadraticModule:
    """Quadratic module given by a finite generator list (1 is implicit)."""

    generators: tuple[Polynomial, ...] = ()

    def __init__(self, generators: Iterable[Polynomial] = ()):
        object.__setattr__(self, "generators", tuple(generators))

    def __len__(self) -> int:
        return len(self.generators)

    def contains_point(self, x: Point, tol: float = 0.0) -> bool:
        return all(evaluate(g, x) >= -tol for g in self.generators)


def restrict_module(Q: QuadraticModule, F: VariableSet) -> QuadraticModule:
    """Generators of ``Q`` whose support lies in ``F``.

    Syntactic stand-in for Q intersected with the coordinate subalgebra on F;
    the resulting semialgebraic set can only be larger than the true one.
    """
    return QuadraticModule(g for g in Q.generators if support(g) <= F)


_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|x(\d+)|(\*\*|[-+*^()]))")


def parse_polynomial(text: str) -> Polynomial:
    """Parse text such as ``3*x1^2*x7 - 0.5`` into a Polynomial.

    Supports ``+ - *``, integer powers via ``^`` or ``**``, parentheses and
    variables written ``x<id>``. Whitespace is ignored.
    """
    tokens = _tokenize(text)
    parser = _Parser(tokens, text)
    p = parser.expr()
    if parser.pos != len(tokens):
        raise ParseError(f"unexpected token {tokens[parser.pos][1]!r} in {text!r}")
    return p


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    stripped = text.rstrip()
    while pos < len(stripped):
        m = _TOKEN.match(stripped, pos)
        if not m:
            raise ParseError(f"cannot parse {text!r} at position {pos}")
        num, var, op = m.groups()
        if num is not None:
            tokens.append(("num", num))
        elif var is not None:
            tokens.append(("var", var))
        else:
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens, text):
        self.tokens = tokens
        self.text = text
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        if tok[0] is None:
            raise ParseError(f"unexpected end of input in {self.text!r}")
        self.pos += 1
        return tok

    def expr(self) -> Polynomial:
        kind, val = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            p = self.term()
            p = -p if val == "-" else p
        else:
            p = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            _, op = self.take()
            rhs = self.term()
            p = p + rhs if op == "+" else p - rhs
        return p

    def term(self) -> Polynomial:
        p = self.power()
        while self.peek() == ("op", "*"):
            self.take()
            p = p * self.power()
        return p

    def power(self) -> Polynomial:
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            kind, val = self.take()
            if kind != "num" or not val.isdigit():
                raise ParseError(f"exponent must be a non-negative integer in {self.text!r}")
            base = base ** int(val)
        return base

    def atom(self) -> Polynomial:
        kind, val = self.take()
        if kind == "num":
            return Polynomial.constant(float(val))
        if kind == "var":
            if int(val) < 1:
                raise ParseError(f"variable ids must be positive, got x{val} in {self.text!r}")
            return Polynomial.var(int(val))
        if (kind, val) == ("op", "("):
            p = self.expr()
            if self.take() != ("op", ")"):
                raise ParseError(f"unbalanced parentheses in {self.text!r}")
            return p
        if (kind, val) == ("op", "-"):
            return -self.atom()
        raise ParseError(f"unexpected token {val!r} in {self.text!r}")
