"""Monomial bases, moment/localizing matrices and linear moment constraints,
assembled into a block-PSD conic program.

A single moment index spans all functionals: monomials over interval,
boundary and constant variables are distinct keys, so the three linear
functionals of a Markovian problem share one variable table and the common
constant-variable marginals are identified for free.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import algebra as alg
from .algebra import (
    BOUND0,
    BOUND1,
    CONST,
    INTERVAL,
    Monomial,
    ODESystem,
    ONE,
    Polynomial,
    RewriteSystem,
    Variable,
)
from .errors import DnpoError, EmptyBasis, NotHermitian, SpanOverflow
from .sdp.program import ConicProgram, realify_block


@dataclass(frozen=True)
class InteractionGraph:
    n_sites: int
    edges: frozenset

    @staticmethod
    def chain(n: int) -> "InteractionGraph":
        return InteractionGraph(n, frozenset((j, j + 1) for j in range(1, n)))

    @staticmethod
    def from_edges(n: int, edges: Iterable) -> "InteractionGraph":
        norm = frozenset(tuple(sorted(e)) for e in edges)
        for a, b in norm:
            if not (1 <= a <= n and 1 <= b <= n):
                raise DnpoError(f"edge ({a},{b}) outside 1..{n}")
        return InteractionGraph(n, norm)

    def neighbors(self, j: int):
        for a, b in self.edges:
            if a == j:
                yield b
            elif b == j:
                yield a

    def dist(self, i: int, j: int) -> float:
        if i == j:
            return 0
        seen = {i: 0}
        frontier = [i]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.neighbors(u):
                    if v not in seen:
                        seen[v] = seen[u] + 1
                        if v == j:
                            return seen[v]
                        nxt.append(v)
            frontier = nxt
        return math.inf


@dataclass(frozen=True)
class MonomialBasis:
    family: str                  # INTERVAL / BOUND0 / BOUND1 tag of the functional
    elements: tuple              # ordered Monomials, element 0 is 1
    k_sigma: int = 0
    k_t: int = 0
    window: tuple = ()
    mode: str = "orders"         # "orders" (Pauli site bases) or "degree"
    max_degree: int = 0

    def __len__(self):
        return len(self.elements)

    def filtered(self, keep) -> "MonomialBasis":
        return replace(self, elements=tuple(m for m in self.elements if keep(m)))


def build_basis(graph: InteractionGraph, family: str, k_sigma: int, k_t: int = 0,
                window: Optional[Sequence[int]] = None) -> MonomialBasis:
    """All Pauli monomials with pairwise graph distance below k_sigma, word
    length at most k_sigma, and (interval family only) time power at most k_t."""
    if k_sigma < 1:
        raise DnpoError("k_sigma must be at least 1")
    sites = tuple(sorted(window)) if window is not None else tuple(range(1, graph.n_sites + 1))
    if not sites:
        raise EmptyBasis("empty site window")
    tmax = k_t if family == INTERVAL else 0
    elems = []
    for size in range(0, k_sigma + 1):
        for subset in itertools.combinations(sites, size):
            if any(graph.dist(a, b) >= k_sigma for a, b in itertools.combinations(subset, 2)):
                continue
            for axes in itertools.product((1, 2, 3), repeat=size):
                word = tuple(alg.pauli(s, a, family) for s, a in zip(subset, axes))
                for r in range(tmax + 1):
                    elems.append(Monomial(r, word))
    elems.sort(key=Monomial.sort_key)
    return MonomialBasis(family, tuple(elems), k_sigma, k_t if family == INTERVAL else 0,
                         sites, "orders", 0)


def build_word_basis(variables: Sequence[Variable], max_degree: int,
                     rw: RewriteSystem | None = None, include_time: bool = True,
                     family: str = INTERVAL) -> MonomialBasis:
    """All normal-form words of bounded degree over the given letters,
    graded by time power when requested."""
    rw = rw or alg.EMPTY_RULES
    words = [()]
    frontier = [()]
    for _ in range(max_degree):
        nxt = []
        for w in frontier:
            for v in variables:
                cand = w + (v,)
                nf = alg.normal_form(Polynomial({Monomial(0, cand): 1.0 + 0j}), rw)
                if len(nf.terms) == 1:
                    ((m, c),) = nf.terms.items()
                    if m.word == cand and m.tpow == 0 and abs(c - 1) < 1e-12:
                        nxt.append(cand)
        words.extend(nxt)
        frontier = nxt
    elems = []
    for w in words:
        rmax = max_degree - len(w) if include_time else 0
        for r in range(rmax + 1):
            elems.append(Monomial(r, w))
    elems.sort(key=Monomial.sort_key)
    return MonomialBasis(family, tuple(elems), 0, 0, (), "degree", max_degree)


# -- moment index ------------------------------------------------------


class MomentIndex:
    """Canonical monomial -> real moment variable table.

    Hermitian monomials get one real variable; a non-Hermitian monomial and
    its adjoint share a (real, imaginary) pair with conjugate readings.
    Translation identifications are union-find merges over variable ids.
    """

    def __init__(self, rw: RewriteSystem | None = None):
        self.rw = rw or alg.EMPTY_RULES
        self._refs: dict = {}
        self._names: dict = {}
        self._parent: list = []
        self.ref(ONE)

    # union-find ------------------------------------------------------

    def _new_var(self, name: str) -> int:
        vid = len(self._parent)
        self._parent.append(vid)
        self._names[vid] = name
        return vid

    def find(self, v: int) -> int:
        p = self._parent
        while p[v] != v:
            p[v] = p[p[v]]
            v = p[v]
        return v

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self._parent[rb] = ra
        return True

    @property
    def n_raw_vars(self) -> int:
        return len(self._parent)

    @property
    def n_real_vars(self) -> int:
        return len({self.find(v) for v in range(len(self._parent))})

    # registration ----------------------------------------------------

    def _adjoint_key(self, m: Monomial):
        nf = alg.normal_form(alg.adjoint(Polynomial({m: 1.0 + 0j})), self.rw)
        if len(nf.terms) != 1:
            return None
        ((ma, c),) = nf.terms.items()
        if abs(c - 1) > 1e-12:
            return None
        return ma

    def contains(self, m: Monomial) -> bool:
        return m in self._refs

    def ref(self, m: Monomial, create: bool = True):
        got = self._refs.get(m)
        if got is not None:
            return got
        if not create:
            raise SpanOverflow(m)
        ma = self._adjoint_key(m)
        if ma == m:
            r = (self._new_var(repr(m)), -1, 1)
            self._refs[m] = r
            return r
        re = self._new_var(repr(m))
        im = self._new_var(repr(m) + ".im")
        self._refs[m] = (re, im, 1)
        if ma is not None and ma not in self._refs:
            self._refs[ma] = (re, im, -1)
        return self._refs[m]

    def expr(self, p: Polynomial, create: bool = False) -> dict:
        """Linear combination of raw real variable ids representing the
        moment of p; imaginary units from conjugate pairs stay complex."""
        combo: dict = {}
        for m, c in p.terms.items():
            re, im, sign = self.ref(m, create)
            combo[re] = combo.get(re, 0.0 + 0j) + c
            if im >= 0:
                combo[im] = combo.get(im, 0.0 + 0j) + 1j * sign * c
        return {v: c for v, c in combo.items() if c != 0}

    def monomials(self):
        return self._refs.items()

    def name(self, raw_id: int) -> str:
        return self._names[self.find(raw_id)]


def _translation_class_key(m: Monomial):
    if not m.word:
        return m
    if any(v.kind != "p" for v in m.word):
        return None
    tags = {v.tag for v in m.word}
    if len(tags) != 1:
        return None
    shift = 1 - min(v.idx for v in m.word)
    return Monomial(m.tpow, tuple(v._replace(idx=v.idx + shift) for v in m.word))


def build_ti_constraints(basis: MonomialBasis, index: MomentIndex) -> int:
    """Merge registered monomials of the basis family related by translation.
    Returns the number of identifications performed; idempotent."""
    classes: dict = {}
    merges = 0
    for m, (re, im, _sign) in list(index.monomials()):
        if im >= 0 or not m.word:
            continue
        if any(v.tag != basis.family for v in m.word):
            continue
        key = _translation_class_key(m)
        if key is None:
            continue
        root = classes.get(key)
        if root is None:
            classes[key] = re
        elif index.union(root, re):
            merges += 1
    return merges


# -- symbolic matrices and linear constraints --------------------------


@dataclass
class SymbolicMatrix:
    dim: int
    entries: dict      # (r, c) with r <= c -> {raw var id: complex coeff}
    label: str = ""

    def entry(self, r: int, c: int) -> dict:
        if r <= c:
            return self.entries.get((r, c), {})
        low = self.entries.get((c, r), {})
        return {v: coef.conjugate() for v, coef in low.items()}


@dataclass
class LinearMomentConstraint:
    kind: str          # "eq" or "ge"
    combo: dict        # raw var id -> complex coeff
    rhs: float = 0.0


# shifted Legendre polynomials, orthonormal for the uniform measure on [0,1];
# regrading the time powers of a basis by these is a congruence transform, so
# the feasible set is unchanged while the time blocks stay well conditioned
_LEGENDRE01 = (
    ((0, 1.0),),
    ((1, 2.0), (0, -1.0)),
    ((2, 6.0), (1, -6.0), (0, 1.0)),
    ((3, 20.0), (2, -30.0), (1, 12.0), (0, -1.0)),
    ((4, 70.0), (3, -140.0), (2, 90.0), (1, -20.0), (0, 1.0)),
    ((5, 252.0), (4, -630.0), (3, 560.0), (2, -210.0), (1, 30.0), (0, -1.0)),
)


def _legendre01(r: int) -> Polynomial:
    if r >= len(_LEGENDRE01):
        raise DnpoError(f"time power {r} beyond the tabulated Legendre regrade")
    norm = math.sqrt(2 * r + 1)
    out = Polynomial()
    for p, coef in _LEGENDRE01[r]:
        out = out + Polynomial.t(p, coef * norm) if p else out + Polynomial.scalar(coef * norm)
    return out


def basis_rows(basis: MonomialBasis, time_regrade: bool = True):
    """Row polynomials of the basis; with the regrade, t^r becomes the r-th
    orthonormal Legendre polynomial while the word part is untouched."""
    rows = []
    for m in basis.elements:
        if time_regrade and m.tpow > 0 and m.tpow < len(_LEGENDRE01):
            word = Polynomial({Monomial(0, m.word): 1.0 + 0j})
            rows.append(alg.mul(_legendre01(m.tpow), word))
        else:
            rows.append(Polynomial({m: 1.0 + 0j}))
    return rows


def build_moment_matrix(basis: MonomialBasis, localizer: Polynomial,
                        index: MomentIndex, rw: RewriteSystem | None = None,
                        label: str = "", time_regrade: bool = True) -> SymbolicMatrix:
    """M[r, c] = moment of (o_r * localizer * adjoint(o_c)); new monomials are
    registered in the index rather than dropped."""
    rw = rw or index.rw
    if not localizer.is_hermitian():
        raise NotHermitian("localizer must be Hermitian")
    n = len(basis.elements)
    rows = basis_rows(basis, time_regrade)
    adjoints = [alg.adjoint(p) for p in rows]
    loc_is_one = localizer == Polynomial.one()
    entries = {}
    for r in range(n):
        row_poly = rows[r]
        if not loc_is_one:
            row_poly = alg.mul(row_poly, localizer, rw)
        for c in range(r, n):
            p = alg.mul(row_poly, adjoints[c], rw).chop()
            if not p:
                continue
            combo = index.expr(p, create=True)
            if combo:
                entries[(r, c)] = combo
    return SymbolicMatrix(n, entries, label)


def build_diff_constraints(ode: ODESystem, sample_monomials: Sequence[Monomial],
                           t_max_pow: int, index: MomentIndex,
                           rw: RewriteSystem | None = None,
                           boundary_images: Mapping | None = None,
                           max_h_degree: Optional[int] = None):
    """Moment equalities from the fundamental-theorem identity for every
    h = t^j * o: the moment of D(h) equals the final-boundary reading of h
    minus (for j = 0) its initial-boundary reading.

    Constraints whose pieces leave the indexed span are skipped and counted.
    Returns (constraints, skipped).
    """
    rw = rw or index.rw
    rows = []
    skipped = 0
    for o in sample_monomials:
        for j in range(t_max_pow + 1):
            h = Monomial(o.tpow + j, o.word)
            if max_h_degree is not None and h.degree > max_h_degree:
                continue
            hp = Polynomial({h: 1.0 + 0j})
            dh = alg.normal_form(alg.differentiate(hp, ode), rw).chop()
            pieces = [dh]
            for endpoint in (1, 0):
                bp = alg.boundary_substitute(hp, endpoint)
                if boundary_images:
                    bp = alg.substitute(bp, boundary_images)
                pieces.append(alg.normal_form(bp, rw).chop())
            try:
                lhs = index.expr(pieces[0], create=False)
                fin = index.expr(pieces[1], create=False)
                ini = index.expr(pieces[2], create=False)
            except SpanOverflow:
                skipped += 1
                continue
            combo = dict(lhs)
            for v, c in fin.items():
                combo[v] = combo.get(v, 0.0 + 0j) - c
            for v, c in ini.items():
                combo[v] = combo.get(v, 0.0 + 0j) + c
            combo = {v: c for v, c in combo.items() if abs(c) > 1e-14}
            if combo:
                rows.append(LinearMomentConstraint("eq", combo, 0.0))
    return rows, skipped


def build_weighted_state_constraints(q: Polynomial, t_degree: int,
                                     index: MomentIndex,
                                     rw: RewriteSystem | None = None):
    """Three Hankel-type blocks certifying that the time-averaged state weight
    of q is pointwise nonnegative on the unit interval: entries are moments of
    t^(k+l) q, t^(k+l+1) q and t^(k+l) (1-t) q."""
    rw = rw or index.rw
    if not q.is_hermitian():
        raise NotHermitian("state-constraint polynomial must be Hermitian")
    n = t_degree + 1
    weights = {
        "state": lambda k, l: Polynomial.t(k + l) if k + l else Polynomial.one(),
        "state+": lambda k, l: Polynomial.t(k + l + 1),
        "state-": lambda k, l: (Polynomial.t(k + l) if k + l else Polynomial.one()) - Polynomial.t(k + l + 1),
    }
    out = []
    for label, wfun in weights.items():
        entries = {}
        for k in range(n):
            for l in range(k, n):
                p = alg.mul(wfun(k, l), q, rw).chop()
                combo = index.expr(p, create=True)
                if combo:
                    entries[(k, l)] = combo
        out.append(SymbolicMatrix(n, entries, label))
    return out


# -- relaxation specification and assembly -----------------------------


_TSQ = Polynomial.t(1) - Polynomial.t(2)


@dataclass
class StateConstraintSpec:
    poly: Polynomial
    rhs: float = 0.0
    kind: str = "eq"


@dataclass
class RelaxationSpec:
    rw: RewriteSystem
    ode: ODESystem
    bases: list
    objective: Polynomial
    localizers: list = field(default_factory=list)        # (family, Polynomial)
    state_constraints: list = field(default_factory=list)  # StateConstraintSpec
    weighted_state: list = field(default_factory=list)      # (Polynomial, t_degree)
    diff_monomials: Optional[list] = None                    # default: all indexed words
    t_max_pow: int = 0
    max_h_degree: Optional[int] = None
    boundary_images: dict = field(default_factory=dict)
    ti_mode: bool = False
    tsq_localizer: bool = True
    remark1: bool = False
    witness: object = None
    letter_bounds: dict = field(default_factory=dict)   # Variable -> norm bound
    diff_skipped: int = 0


def _localizer_basis(basis: MonomialBasis, p: Polynomial) -> Optional[MonomialBasis]:
    deg = p.degree
    if basis.mode == "degree":
        cut = basis.max_degree - (deg + 1) // 2
        if cut < 0:
            return None
        return basis.filtered(lambda m: m.degree <= cut)
    if all(len(m.word) == 0 for m in p.terms):
        if basis.k_t < 1:
            return None
        return basis.filtered(lambda m: m.tpow <= basis.k_t - 1)
    cut = basis.k_sigma - (deg + 1) // 2
    if cut < 0:
        return None
    return basis.filtered(lambda m: len(m.word) <= cut)


def _basis_for(spec: RelaxationSpec, family: str) -> MonomialBasis:
    for b in spec.bases:
        if b.family == family:
            return b
    raise DnpoError(f"no basis for family {family!r}")


def _default_diff_words(index: MomentIndex) -> list:
    words = {}
    for m, _ref in index.monomials():
        if any(v.tag == BOUND0 or v.tag == BOUND1 for v in m.word):
            continue
        words.setdefault(m.word, Monomial(0, m.word))
    return sorted(words.values(), key=Monomial.sort_key)


@dataclass
class AssembledRelaxation:
    program: ConicProgram
    index: MomentIndex
    colmap: dict              # union-find root id -> program column

    def column_of(self, raw_id: int):
        return self.colmap.get(self.index.find(raw_id))


def assemble(spec: RelaxationSpec) -> ConicProgram:
    """Build the real standard-form conic program of the relaxation."""
    return assemble_detailed(spec).program


def assemble_detailed(spec: RelaxationSpec) -> AssembledRelaxation:
    index = MomentIndex(spec.rw)
    blocks_sym = []

    for basis in spec.bases:
        blocks_sym.append(build_moment_matrix(
            basis, Polynomial.one(), index, spec.rw, label=f"moment[{basis.family}]"))

    if spec.tsq_localizer:
        for basis in spec.bases:
            if basis.family != INTERVAL:
                continue
            sub = _localizer_basis(basis, _TSQ)
            if sub is not None and len(sub):
                blocks_sym.append(build_moment_matrix(
                    sub, _TSQ, index, spec.rw, label="hankel[t-t^2]"))

    for family, p in spec.localizers:
        basis = _basis_for(spec, family)
        sub = _localizer_basis(basis, p)
        if sub is not None and len(sub):
            blocks_sym.append(build_moment_matrix(
                sub, p, index, spec.rw, label=f"loc[{family}]"))
        if spec.remark1 and family == INTERVAL:
            q = alg.mul(_TSQ, p, spec.rw)
            sub2 = _localizer_basis(basis, q)
            if sub2 is not None and len(sub2):
                blocks_sym.append(build_moment_matrix(
                    sub2, q, index, spec.rw, label=f"loc[(t-t^2)*{family}]"))

    for q, t_degree in spec.weighted_state:
        blocks_sym.extend(build_weighted_state_constraints(q, t_degree, index, spec.rw))

    if spec.ti_mode:
        for basis in spec.bases:
            build_ti_constraints(basis, index)

    words = spec.diff_monomials if spec.diff_monomials is not None else _default_diff_words(index)
    rows, skipped = build_diff_constraints(
        spec.ode, words, spec.t_max_pow, index, spec.rw,
        boundary_images=spec.boundary_images, max_h_degree=spec.max_h_degree)
    spec.diff_skipped = skipped

    rows.insert(0, LinearMomentConstraint("eq", index.expr(Polynomial.one()), 1.0))

    ineq_rows = []
    for sc in spec.state_constraints:
        combo = index.expr(alg.normal_form(sc.poly, spec.rw).chop(), create=False)
        row = LinearMomentConstraint(sc.kind, combo, sc.rhs)
        (rows if sc.kind == "eq" else ineq_rows).append(row)

    obj = index.expr(alg.normal_form(spec.objective, spec.rw).chop(), create=False)

    return _realize(index, blocks_sym, rows, ineq_rows, obj, spec.letter_bounds)


def _variable_bounds(index: MomentIndex, letter_bounds: Mapping) -> dict:
    """Per-variable magnitude bounds: the moment of a monomial is bounded by
    the product of its letters' operator norms (time and Pauli letters by 1)."""
    out: dict = {}
    for m, (re, im, _sign) in index.monomials():
        val = 1.0
        for v in m.word:
            val *= float(letter_bounds.get(v._replace(dag=False), 1.0))
        root = index.find(re)
        out[root] = max(out.get(root, 0.0), val)
        if im >= 0:
            rooti = index.find(im)
            out[rooti] = max(out.get(rooti, 0.0), val)
    return out


def _realize(index: MomentIndex, blocks_sym, eq_rows, ineq_rows, obj,
             letter_bounds=None) -> AssembledRelaxation:
    """Resolve merges, compact live variables, realify blocks, split complex
    equality rows into real pairs and deduplicate them."""
    live = set()

    def resolved(combo):
        out = {}
        for v, c in combo.items():
            r = index.find(v)
            out[r] = out.get(r, 0.0 + 0j) + c
        return {v: c for v, c in out.items() if c != 0}

    res_blocks = []
    for sym in blocks_sym:
        ent = {rc: resolved(combo) for rc, combo in sym.entries.items()}
        ent = {rc: combo for rc, combo in ent.items() if combo}
        for combo in ent.values():
            live.update(combo)
        res_blocks.append((sym.dim, ent, sym.label))

    res_eq = []
    for row in eq_rows:
        combo = resolved(row.combo)
        if not combo:
            if abs(row.rhs) > 1e-9:
                raise DnpoError("inconsistent constant equality in assembly")
            continue
        live.update(combo)
        res_eq.append((combo, row.rhs))

    res_ineq = []
    for row in ineq_rows:
        combo = resolved(row.combo)
        if combo:
            live.update(combo)
            res_ineq.append((combo, row.rhs))

    obj_res = resolved(obj)
    live.update(obj_res)

    order = sorted(live)
    colmap = {raw: i for i, raw in enumerate(order)}
    names = [index.name(raw) for raw in order]
    nv = len(order)

    blocks = []
    for dim, ent, label in res_blocks:
        mapped = {rc: {colmap[v]: c for v, c in combo.items()} for rc, combo in ent.items()}
        blocks.append(realify_block(dim, mapped, label=label))

    def split_real(combo, rhs):
        re = {colmap[v]: c.real for v, c in combo.items() if abs(c.real) > 1e-14}
        im = {colmap[v]: c.imag for v, c in combo.items() if abs(c.imag) > 1e-14}
        out = []
        if re:
            out.append((re, float(rhs)))
        if im:
            out.append((im, 0.0))
        elif not re and abs(rhs) > 1e-9:
            raise DnpoError("inconsistent constant equality in assembly")
        return out

    real_rows = []
    seen = set()
    for combo, rhs in res_eq:
        for row, r in split_real(combo, rhs):
            lead = min(row)
            scale = row[lead]
            key = tuple(sorted((v, round(c / scale, 12)) for v, c in row.items()))
            key = (key, round(r / scale, 12))
            if key in seen:
                continue
            seen.add(key)
            real_rows.append(({v: c / scale for v, c in row.items()}, r / scale))

    for combo, rhs in res_ineq:
        entry = {}
        for v, c in combo.items():
            if abs(c.imag) > 1e-9 * max(1.0, abs(c)):
                raise NotHermitian("inequality constraint has complex coefficients")
            entry[colmap[v]] = c.real
        blocks.append(realify_block(1, {(0, 0): entry},
                                    const={(0, 0): -float(rhs)}, label="ineq"))

    import scipy.sparse as sp

    m = len(real_rows)
    data, rows_i, cols_i = [], [], []
    b = np.zeros(m)
    for i, (row, rhs) in enumerate(real_rows):
        b[i] = rhs
        for v, c in row.items():
            rows_i.append(i)
            cols_i.append(v)
            data.append(c)
    A = sp.csr_matrix((data, (rows_i, cols_i)), shape=(m, nv))

    c = np.zeros(nv)
    for v, coef in obj_res.items():
        if abs(coef.imag) > 1e-9 * max(1.0, abs(coef)):
            raise NotHermitian("objective has complex coefficients")
        c[colmap[v]] = coef.real

    bound_map = _variable_bounds(index, letter_bounds or {})
    vb = np.array([bound_map.get(raw, 1.0) for raw in order])

    program = ConicProgram(n_vars=nv, c=c, A=A, b=b, blocks=blocks,
                           var_names=names, var_bounds=vb)
    return AssembledRelaxation(program, index, colmap)
