"""Noncommutative *-algebra of polynomials in a commuting time variable,
generic operator variables and Pauli site variables.

Monomials are stored in normal form: the time power is factored out (time
commutes with everything), Pauli letters within a word are sorted by site
with at most one letter per site, and reordering phases are folded into the
coefficients.  Generic letters keep their order; optional rewrite rules
(projector idempotence, unitarity) reduce them further.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Union

import numpy as np

from .errors import (
    InvalidAxis,
    InvalidDifferentiation,
    MissingAssignment,
    NotTranslatable,
    ParseError,
    RewriteDivergence,
    ShapeError,
    UniverseMismatch,
)

# Variable tags: dynamical interval variables versus their two boundary
# snapshots, plus time-independent constants.
CONST = "c"
INTERVAL = "i"
BOUND0 = "0"
BOUND1 = "1"

_TAGS = (CONST, INTERVAL, BOUND0, BOUND1)
_TAG_ORDER = {CONST: 0, INTERVAL: 1, BOUND0: 2, BOUND1: 3}

CHOP = 1e-14


class Variable(NamedTuple):
    kind: str        # "p" Pauli site, "g" generic
    idx: int         # site number or generic id
    axis: int        # Pauli axis 1..3; 0 for generic
    tag: str
    dag: bool = False
    herm: bool = True

    def adjoint(self):
        if self.kind == "p" or self.herm:
            return self
        return self._replace(dag=not self.dag)

    def __repr__(self):
        if self.kind == "p":
            txt = f"s{self.idx}_{self.axis}"
        else:
            txt = f"{'x' if self.tag != CONST else 'y'}{self.idx}"
            if self.dag:
                txt += "'"
        if self.tag == BOUND0:
            txt += "@0"
        elif self.tag == BOUND1:
            txt += "@1"
        return txt


def pauli(site: int, axis: int, tag: str = INTERVAL) -> Variable:
    if axis not in (1, 2, 3):
        raise InvalidAxis(f"axis {axis} not in 1..3")
    if tag not in (INTERVAL, BOUND0, BOUND1):
        raise ParseError(f"bad tag for Pauli variable: {tag}")
    return Variable("p", site, axis, tag)


def generic(gid: int, tag: str = CONST, hermitian: bool = True, dag: bool = False) -> Variable:
    if tag not in _TAGS:
        raise ParseError(f"bad tag: {tag}")
    return Variable("g", gid, 0, tag, dag, hermitian)


def _var_key(v: Variable):
    return (0 if v.kind == "p" else 1, _TAG_ORDER[v.tag], v.idx, v.axis, v.dag)


class Monomial(NamedTuple):
    tpow: int
    word: tuple  # tuple[Variable, ...]

    @property
    def degree(self) -> int:
        return self.tpow + len(self.word)

    def sort_key(self):
        return (self.degree, self.tpow, tuple(_var_key(v) for v in self.word))

    def __repr__(self):
        parts = []
        if self.tpow == 1:
            parts.append("t")
        elif self.tpow > 1:
            parts.append(f"t^{self.tpow}")
        parts.extend(repr(v) for v in self.word)
        return " ".join(parts) if parts else "1"


ONE = Monomial(0, ())


def adjoint_monomial(m: Monomial) -> Monomial:
    return Monomial(m.tpow, tuple(v.adjoint() for v in reversed(m.word)))


@dataclass(frozen=True)
class RewriteSystem:
    """Pauli relations are built in; extra rules reduce generic words.

    Each rule maps a contiguous pattern of generic letters to a polynomial of
    degree at most the pattern length, which keeps rewriting terminating.
    """

    rules: tuple = ()
    pauli_builtin: bool = True
    budget_factor: int = 10

    def budget(self, degree: int) -> int:
        return max(64, self.budget_factor * max(degree, 1) * max(len(self.rules), 1))


EMPTY_RULES = RewriteSystem()


@dataclass(frozen=True)
class ODESystem:
    """Right-hand sides g_i of the interval variables, with a common scale
    factor (for example the evolution time folded in front of every g_i)."""

    rhs: Mapping[Variable, "Polynomial"]
    scale: float = 1.0


# Pauli single-site products: _PAULI_MUL[a][b] = (axis, phase) with axis 0
# meaning the identity.  sigma_a sigma_b = delta_ab + i eps_abc sigma_c.
_PAULI_MUL = {
    (1, 1): (0, 1.0), (2, 2): (0, 1.0), (3, 3): (0, 1.0),
    (1, 2): (3, 1j), (2, 1): (3, -1j),
    (2, 3): (1, 1j), (3, 2): (1, -1j),
    (3, 1): (2, 1j), (1, 3): (2, -1j),
}


def _pauli_site_mul(a: Variable, b: Variable):
    axis, phase = _PAULI_MUL[(a.axis, b.axis)]
    if axis == 0:
        return None, phase
    return a._replace(axis=axis), phase


def _commutes(a: Variable, b: Variable) -> bool:
    # Distinct sites of the same Pauli family commute; nothing else does.
    return (
        a.kind == "p"
        and b.kind == "p"
        and a.tag == b.tag
        and a.idx != b.idx
    )


def _normalize_word(word) -> tuple:
    """Sort/fuse Pauli letters; returns (phase, word tuple)."""
    w = list(word)
    phase = 1.0 + 0j
    changed = True
    while changed:
        changed = False
        i = 0
        while i + 1 < len(w):
            a, b = w[i], w[i + 1]
            if a.kind == "p" and b.kind == "p" and a.tag == b.tag and a.idx == b.idx:
                fused, ph = _pauli_site_mul(a, b)
                phase *= ph
                if fused is None:
                    del w[i : i + 2]
                else:
                    w[i : i + 2] = [fused]
                changed = True
                if i > 0:
                    i -= 1
                continue
            if _commutes(a, b) and _var_key(b) < _var_key(a):
                w[i], w[i + 1] = b, a
                changed = True
                continue
            i += 1
    return phase, tuple(w)


Coeff = Union[int, float, complex]


class Polynomial:
    """Sparse complex combination of normal-form monomials."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {} if terms is None else terms

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero() -> "Polynomial":
        return Polynomial()

    @staticmethod
    def scalar(c: Coeff) -> "Polynomial":
        c = complex(c)
        return Polynomial({ONE: c} if c != 0 else {})

    @staticmethod
    def one() -> "Polynomial":
        return Polynomial.scalar(1)

    @staticmethod
    def of(v: Variable, coeff: Coeff = 1) -> "Polynomial":
        return Polynomial._from_raw(complex(coeff), 0, (v,))

    @staticmethod
    def t(power: int = 1, coeff: Coeff = 1) -> "Polynomial":
        return Polynomial({Monomial(power, ()): complex(coeff)})

    @staticmethod
    def term(coeff: Coeff, tpow: int, word: Iterable[Variable]) -> "Polynomial":
        return Polynomial._from_raw(complex(coeff), tpow, tuple(word))

    @staticmethod
    def _from_raw(coeff: complex, tpow: int, word: tuple) -> "Polynomial":
        phase, nf = _normalize_word(word)
        c = coeff * phase
        if c == 0:
            return Polynomial()
        return Polynomial({Monomial(tpow, nf): c})

    # -- linear structure ----------------------------------------------

    def copy(self) -> "Polynomial":
        return Polynomial(dict(self.terms))

    def _iadd_term(self, m: Monomial, c: complex):
        cur = self.terms.get(m)
        if cur is None:
            if c != 0:
                self.terms[m] = c
        else:
            cur += c
            if cur == 0:
                del self.terms[m]
            else:
                self.terms[m] = cur

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.scalar(other)
        out = self.copy()
        for m, c in other.terms.items():
            out._iadd_term(m, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.scalar(other)
        return self + (-other)

    def __rsub__(self, other):
        return Polynomial.scalar(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return mul(self, other)
        c = complex(other)
        if c == 0:
            return Polynomial()
        return Polynomial({m: c * v for m, v in self.terms.items()})

    def __rmul__(self, other):
        return self * other

    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.terms == other.terms
        if other == 0:
            return not self.terms
        return self.terms == Polynomial.scalar(other).terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for m in sorted(self.terms, key=Monomial.sort_key):
            bits.append(f"({self.terms[m]:.6g})*{m!r}")
        return " + ".join(bits)

    @property
    def degree(self) -> int:
        return max((m.degree for m in self.terms), default=0)

    def variables(self) -> set:
        out = set()
        for m in self.terms:
            out.update(m.word)
        return out

    def chop(self, tol: float = CHOP) -> "Polynomial":
        scale = max((abs(c) for c in self.terms.values()), default=0.0)
        cut = tol * max(scale, 1.0)
        out = {}
        for m, c in self.terms.items():
            re = c.real if abs(c.real) > cut else 0.0
            im = c.imag if abs(c.imag) > cut else 0.0
            if re != 0.0 or im != 0.0:
                out[m] = complex(re, im)
        return Polynomial(out)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self - adjoint(self)
        scale = max((abs(c) for c in self.terms.values()), default=1.0)
        return all(abs(c) <= tol * max(scale, 1.0) for c in diff.terms.values())


def _universe_of(p: Polynomial) -> dict:
    decl = {}
    for m in p.terms:
        for v in m.word:
            if v.kind == "g":
                key = (v.idx, v.tag)
                h = decl.get(key)
                if h is None:
                    decl[key] = v.herm
                elif h != v.herm:
                    raise UniverseMismatch(f"generic id {v.idx} declared both ways")
    return decl


def mul(p: Polynomial, q: Polynomial, rw: RewriteSystem | None = None) -> Polynomial:
    """Free product followed by normal form."""
    up, uq = _universe_of(p), _universe_of(q)
    for key, h in uq.items():
        if key in up and up[key] != h:
            raise UniverseMismatch(f"generic id {key[0]} declared both ways")
    out = Polynomial()
    for (r1, w1), c1 in p.terms.items():
        for (r2, w2), c2 in q.terms.items():
            phase, w = _normalize_word(w1 + w2)
            out._iadd_term(Monomial(r1 + r2, w), c1 * c2 * phase)
    if rw is not None and rw.rules:
        out = _apply_rules(out, rw)
    return out


def adjoint(p: Polynomial) -> Polynomial:
    out = Polynomial()
    for m, c in p.terms.items():
        phase, w = _normalize_word(tuple(v.adjoint() for v in reversed(m.word)))
        out._iadd_term(Monomial(m.tpow, w), c.conjugate() * phase)
    return out


def _apply_rules(p: Polynomial, rw: RewriteSystem) -> Polynomial:
    budget = rw.budget(p.degree)
    pending = list(p.terms.items())
    done = Polynomial()
    steps = 0
    while pending:
        (m, c) = pending.pop()
        hit = None
        for pattern, repl in rw.rules:
            L = len(pattern)
            for i in range(len(m.word) - L + 1):
                if m.word[i : i + L] == pattern:
                    hit = (i, L, repl)
                    break
            if hit:
                break
        if hit is None:
            done._iadd_term(m, c)
            continue
        steps += 1
        if steps > budget:
            raise RewriteDivergence(f"rule budget {budget} exceeded")
        i, L, repl = hit
        pre, post = m.word[:i], m.word[i + L :]
        for (rr, rword), rc in repl.terms.items():
            phase, w = _normalize_word(pre + rword + post)
            pending.append((Monomial(m.tpow + rr, w), c * rc * phase))
    return done


def normal_form(p: Polynomial, rw: RewriteSystem | None = None) -> Polynomial:
    out = Polynomial()
    for m, c in p.terms.items():
        phase, w = _normalize_word(m.word)
        out._iadd_term(Monomial(m.tpow, w), c * phase)
    if rw is not None and rw.rules:
        out = _apply_rules(out, rw)
    return out


def differentiate(p: Polynomial, ode: ODESystem) -> Polynomial:
    """Leibniz-rule derivative: t -> 1, interval variables -> scale * g_i,
    boundary and constant variables -> 0."""
    out = Polynomial()
    for m, c in p.terms.items():
        if m.tpow > 0:
            out._iadd_term(Monomial(m.tpow - 1, m.word), c * m.tpow)
        for i, v in enumerate(m.word):
            if v.tag != INTERVAL:
                continue
            g = ode.rhs.get(v)
            if g is None:
                raise InvalidDifferentiation(f"no right-hand side for {v!r}")
            if ode.scale == 0 or not g:
                continue
            pre = Polynomial({Monomial(m.tpow, m.word[:i]): c * ode.scale})
            post = Polynomial({Monomial(0, m.word[i + 1 :]): 1.0 + 0j})
            out = out + mul(mul(pre, g), post)
    return out


def boundary_substitute(p: Polynomial, endpoint: int) -> Polynomial:
    """Evaluate t at the endpoint and retag interval variables to it."""
    if endpoint not in (0, 1):
        raise ParseError(f"endpoint must be 0 or 1, got {endpoint}")
    tag = BOUND0 if endpoint == 0 else BOUND1
    out = Polynomial()
    for m, c in p.terms.items():
        if endpoint == 0 and m.tpow > 0:
            continue
        word = tuple(v._replace(tag=tag) if v.tag == INTERVAL else v for v in m.word)
        phase, w = _normalize_word(word)
        out._iadd_term(Monomial(0, w), c * phase)
    return out


def substitute(p: Polynomial, mapping: Mapping[Variable, Union[Polynomial, Coeff]]) -> Polynomial:
    """Replace whole letters by polynomials (for example x(0) -> 1)."""
    images = {v: (img if isinstance(img, Polynomial) else Polynomial.scalar(img))
              for v, img in mapping.items()}
    out = Polynomial()
    for m, c in p.terms.items():
        acc = Polynomial({Monomial(m.tpow, ()): c})
        for v in m.word:
            factor = images.get(v, Polynomial.of(v))
            acc = mul(acc, factor)
        out = out + acc
    return out


def translate(p: Polynomial, shift: int) -> Polynomial:
    if shift == 0:
        return p.copy()
    out = {}
    for m, c in p.terms.items():
        word = []
        for v in m.word:
            if v.kind != "p":
                raise NotTranslatable(f"cannot translate generic variable {v!r}")
            word.append(v._replace(idx=v.idx + shift))
        out[Monomial(m.tpow, tuple(word))] = c
    return Polynomial(out)


def evaluate(p: Polynomial, assignment: Mapping[Variable, np.ndarray], t_value: float = 0.0) -> np.ndarray:
    """Evaluate on a concrete matrix representation; time maps to t * identity."""
    dim = None
    for mat in assignment.values():
        mat = np.asarray(mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ShapeError("assignments must be square matrices")
        if dim is None:
            dim = mat.shape[0]
        elif mat.shape[0] != dim:
            raise ShapeError("assignments have mixed dimensions")
    if dim is None:
        dim = 1
    total = np.zeros((dim, dim), dtype=complex)
    for m, c in p.terms.items():
        acc = np.eye(dim, dtype=complex) * (c * (t_value ** m.tpow))
        for v in m.word:
            mat = assignment.get(v)
            if mat is None:
                raise MissingAssignment(f"no assignment for {v!r}")
            acc = acc @ np.asarray(mat, dtype=complex)
        total += acc
    return total


# -- polynomial literal syntax ----------------------------------------
#
# term  = [coefficient] token...   tokens: "t", "x<i>", "y<i>", "s<site>_<axis>"
# with an optional "@0"/"@1" suffix for boundary tags; terms joined by +/-.

def _parse_token(tok: str) -> Variable | str:
    tag = INTERVAL
    if tok.endswith("@0"):
        tag, tok = BOUND0, tok[:-2]
    elif tok.endswith("@1"):
        tag, tok = BOUND1, tok[:-2]
    if tok == "t":
        if tag != INTERVAL:
            raise ParseError("time carries no boundary tag")
        return "t"
    if tok.startswith("s"):
        body = tok[1:]
        if "_" not in body:
            raise ParseError(f"bad Pauli token {tok!r}")
        site, axis = body.split("_", 1)
        try:
            return pauli(int(site), int(axis), tag)
        except ValueError as exc:
            raise ParseError(f"bad Pauli token {tok!r}") from exc
    if tok.startswith("x") or tok.startswith("y"):
        try:
            gid = int(tok[1:])
        except ValueError as exc:
            raise ParseError(f"bad generic token {tok!r}") from exc
        if tok.startswith("y"):
            if tag != INTERVAL:
                raise ParseError("constant y tokens carry no boundary tag")
            return generic(gid, CONST)
        return generic(gid, tag)
    raise ParseError(f"unknown token {tok!r}")


def parse_polynomial(text: str) -> Polynomial:
    out = Polynomial()
    if not text.strip():
        return out
    chunks = text.replace("-", "+-").split("+")
    for chunk in chunks:
        chunk = chunk.strip()
        if not chunk:
            continue
        sign = 1.0
        if chunk.startswith("-"):
            sign, chunk = -1.0, chunk[1:].strip()
        toks = chunk.replace("*", " ").split()
        if not toks:
            raise ParseError("empty term")
        coeff = sign
        start = 0
        try:
            coeff = sign * float(toks[0])
            start = 1
        except ValueError:
            pass
        tpow = 0
        word = []
        for tok in toks[start:]:
            parsed = _parse_token(tok)
            if parsed == "t":
                tpow += 1
            else:
                word.append(parsed)
        out = out + Polynomial.term(coeff, tpow, word)
    return out
