"""Sparse multivariate polynomials over the reals.

Monomials are dense exponent tuples of length ``n``. A polynomial is an
immutable map ``exponent tuple -> float`` with zero coefficients pruned.
Monomial enumeration uses graded lexicographic order: by total degree, then
lexicographically with ``x1 > x2 > ... > xn``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ModelingError

Monomial = tuple


def degree(mono: Monomial) -> int:
    return sum(mono)


def _compositions(n: int, d: int):
    # exponent tuples of exact degree d, descending lex order
    if n == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _compositions(n - 1, d - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def monomials_up_to(n: int, d: int) -> tuple:
    """All exponent tuples of degree <= d in graded lex order.

    >>> monomials_up_to(2, 1)
    ((0, 0), (1, 0), (0, 1))
    """
    if n < 1 or d < 0:
        raise ValueError(f"need n >= 1 and d >= 0, got n={n}, d={d}")
    out = []
    for k in range(d + 1):
        out.extend(_compositions(n, k))
    return tuple(out)


@lru_cache(maxsize=None)
def monomial_index(n: int, d: int) -> dict:
    """Position of each monomial of degree <= d in :func:`monomials_up_to`."""
    return {m: i for i, m in enumerate(monomials_up_to(n, d))}


def add_monomials(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


class Polynomial:
    """Real polynomial in ``dimension`` variables.

    Supports ``+``, ``-``, ``*`` (by polynomial or scalar) and ``**`` with a
    non-negative integer exponent. Instances are treated as immutable.
    """

    __slots__ = ("_n", "_terms")

    def __init__(self, dimension: int, terms: Mapping[Monomial, float] | None = None):
        if dimension < 1:
            raise ModelingError(f"polynomial dimension must be >= 1, got {dimension}")
        clean = {}
        for mono, coef in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != dimension:
                raise ModelingError(
                    f"exponent {mono} has length {len(mono)}, expected {dimension}")
            if any(e < 0 for e in mono):
                raise ModelingError(f"negative exponent in {mono}")
            coef = float(coef)
            if coef != 0.0:
                clean[mono] = clean.get(mono, 0.0) + coef
                if clean[mono] == 0.0:
                    del clean[mono]
        self._n = dimension
        self._terms = clean

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(n)

    @classmethod
    def constant(cls, n: int, value: float) -> "Polynomial":
        return cls(n, {(0,) * n: value})

    @classmethod
    def variable(cls, n: int, j: int) -> "Polynomial":
        e = [0] * n
        e[j] = 1
        return cls(n, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, mono: Sequence[int], coef: float = 1.0) -> "Polynomial":
        return cls(len(mono), {tuple(mono): coef})

    # -- basic properties -------------------------------------------------
    @property
    def dimension(self) -> int:
        return self._n

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def coefficient(self, mono: Monomial) -> float:
        return self._terms.get(tuple(mono), 0.0)

    @property
    def degree(self) -> int:
        # zero polynomial has degree 0 by convention
        return max((sum(m) for m in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self._terms)

    @property
    def support(self) -> frozenset:
        """Indices of variables that occur with a nonzero exponent."""
        return frozenset(j for m in self._terms for j, e in enumerate(m) if e)

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "Polynomial"):
        if other._n != self._n:
            raise ModelingError(
                f"dimension mismatch: {self._n} vs {other._n}")

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self._n, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(self._n, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._n, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self._n, {m: c * float(other) for m, c in self._terms.items()})
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = add_monomials(m1, m2)
                out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial(self._n, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ModelingError(f"exponent must be a non-negative integer, got {k!r}")
        result = Polynomial.constant(self._n, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._n == other._n and self._terms == other._terms

    def __hash__(self):
        return hash((self._n, frozenset(self._terms.items())))

    def almost_equal(self, other: "Polynomial", rtol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        scale = max([abs(c) for c in self._terms.values()] + [1.0])
        return all(abs(self.coefficient(m) - other.coefficient(m)) <= rtol * scale
                   for m in keys)

    # -- evaluation and calculus -----------------------------------------
    def __call__(self, x) -> float:
        return poly_eval(self, x)

    def diff(self, j: int) -> "Polynomial":
        out = {}
        for m, c in self._terms.items():
            if m[j]:
                e = list(m)
                e[j] -= 1
                out[tuple(e)] = c * m[j]
        return Polynomial(self._n, out)

    def restrict(self, keep: Sequence[int]) -> "Polynomial":
        """Same polynomial written in the variables ``keep`` only.

        Every variable outside ``keep`` must be absent from the support.
        """
        keep = list(keep)
        dropped = self.support - set(keep)
        if dropped:
            raise ModelingError(
                f"polynomial depends on variables {sorted(dropped)} outside {keep}")
        return Polynomial(len(keep), {tuple(m[j] for j in keep): c
                                      for m, c in self._terms.items()})

    def embed(self, n: int, positions: Sequence[int]) -> "Polynomial":
        """Inverse of :meth:`restrict`: place local variables at ``positions`` of R^n."""
        out = {}
        for m, c in self._terms.items():
            e = [0] * n
            for j, p in enumerate(positions):
                e[p] = m[j]
            out[tuple(e)] = c
        return Polynomial(n, out)

    def __repr__(self):
        return f"Polynomial({self._n}, {self.to_string()!r})"

    def to_string(self, names: Sequence[str] | None = None) -> str:
        """Render as an expression the problem-file parser accepts."""
        names = names or [f"x{j + 1}" for j in range(self._n)]
        if not self._terms:
            return "0"
        parts = []
        order = monomial_sort_key
        for m in sorted(self._terms, key=order):
            c = self._terms[m]
            factors = []
            for j, e in enumerate(m):
                if e == 1:
                    factors.append(names[j])
                elif e > 1:
                    factors.append(f"{names[j]}^{e}")
            mag = repr(abs(c))
            if factors:
                body = "*".join(factors) if abs(c) == 1.0 else mag + "*" + "*".join(factors)
            else:
                body = mag
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text


def monomial_sort_key(mono: Monomial):
    """Sort key realizing graded lex order."""
    return (sum(mono), tuple(-e for e in mono))


def poly_combine(op: str, a: Polynomial, b) -> Polynomial:
    """Functional form of the arithmetic operators: ``add``, ``multiply``, ``scale``."""
    if op == "add":
        if not isinstance(b, Polynomial):
            raise ModelingError("add expects two polynomials")
        return a + b
    if op == "multiply":
        if not isinstance(b, Polynomial):
            raise ModelingError("multiply expects two polynomials")
        return a * b
    if op in ("scale", "scalar-multiply"):
        return a * float(b)
    raise ValueError(f"unknown operation {op!r}")


def poly_eval(p: Polynomial, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != p.dimension:
        raise ModelingError(f"point has length {x.shape[0]}, expected {p.dimension}")
    total = 0.0
    for m, c in p.items():
        v = c
        for xi, e in zip(x, m):
            if e:
                v *= xi ** e
        total += v
    return float(total)


def poly_gradient(p: Polynomial) -> list:
    return [p.diff(j) for j in range(p.dimension)]


def poly_hessian(p: Polynomial) -> list:
    grad = poly_gradient(p)
    return [[g.diff(j) for j in range(p.dimension)] for g in grad]


def compose_linear(p: Polynomial, images: Sequence[Polynomial]) -> Polynomial:
    """Substitute ``x_j -> images[j]`` and expand."""
    if len(images) != p.dimension:
        raise ModelingError("need one image polynomial per variable")
    n_out = images[0].dimension
    result = Polynomial.zero(n_out)
    cache: dict = {}
    for m, c in p.items():
        term = Polynomial.constant(n_out, c)
        for j, e in enumerate(m):
            if e:
                key = (j, e)
                if key not in cache:
                    cache[key] = images[j] ** e
                term = term * cache[key]
        result = result + term
    return result


@dataclass(frozen=True)
class VariableScaling:
    """Affine change of variables ``x_j = a_j * z_j + b_j``."""

    multipliers: tuple
    offsets: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.multipliers)
        b = tuple(float(v) for v in self.offsets)
        if len(a) != len(b):
            raise ModelingError("multipliers and offsets differ in length")
        if any(v == 0.0 for v in a):
            raise ModelingError("scaling multipliers must be nonzero")
        object.__setattr__(self, "multipliers", a)
        object.__setattr__(self, "offsets", b)

    @classmethod
    def identity(cls, n: int) -> "VariableScaling":
        return cls((1.0,) * n, (0.0,) * n)

    @property
    def dimension(self) -> int:
        return len(self.multipliers)

    def inverse(self) -> "VariableScaling":
        # z = (x - b)/a = (1/a) x - b/a
        return VariableScaling(tuple(1.0 / a for a in self.multipliers),
                               tuple(-b / a for a, b in zip(self.multipliers, self.offsets)))

    def to_original(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.asarray(self.multipliers) * z + np.asarray(self.offsets)

    def to_scaled(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.offsets)) / np.asarray(self.multipliers)


def apply_scaling(p: Polynomial, s: VariableScaling) -> Polynomial:
    """Return ``q(z) = p(a*z + b)`` expanded in the monomial basis."""
    if s.dimension != p.dimension:
        raise ModelingError(
            f"scaling has dimension {s.dimension}, polynomial {p.dimension}")
    n = p.dimension
    images = [Polynomial(n, {tuple(1 if i == j else 0 for i in range(n)): a,
                             (0,) * n: b})
              for j, (a, b) in enumerate(zip(s.multipliers, s.offsets))]
    return compose_linear(p, images)


def n_monomials(n: int, d: int) -> int:
    return math.comb(n + d, n)


def coefficient_vector(p: Polynomial, d: int) -> np.ndarray:
    """Dense coefficients of ``p`` in the graded basis of degree <= d."""
    idx = monomial_index(p.dimension, d)
    v = np.zeros(len(idx))
    for m, c in p.items():
        if m not in idx:
            raise ModelingError(f"polynomial degree {p.degree} exceeds {d}")
        v[idx[m]] = c
    return v


def monomial_values(x, monos: Iterable[Monomial]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([np.prod(x ** np.asarray(m)) for m in monos])
