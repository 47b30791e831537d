"""Front-ends that compile concrete problems into relaxation specs:
two-projector exponentials, unitary interpolation of a measured time series,
and spin-chain quenches on finite chains or translation-invariant windows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import algebra as alg
from .algebra import (
    BOUND0,
    BOUND1,
    CONST,
    INTERVAL,
    Monomial,
    ODESystem,
    Polynomial,
    RewriteSystem,
    generic,
    parse_polynomial,
    pauli,
)
from .errors import DnpoError, DuplicateTime, NotHermitian, Unsupported, WindowTooSmall
from .hierarchy import (
    InteractionGraph,
    RelaxationSpec,
    StateConstraintSpec,
    build_basis,
    build_word_basis,
)


@dataclass(frozen=True)
class SpinHamiltonian:
    """Two-body spin Hamiltonian; site-resolved or translation invariant.

    Finite mode: couplings keyed (j, k, a, b) with j < k and fields keyed
    (j, a).  TI mode: couplings keyed (a, b) acting on every bond (j, j+1)
    and fields keyed (a,) acting on every site.
    """

    ti: bool
    n_sites: Optional[int]
    couplings: tuple     # sorted ((key, coeff), ...)
    fields: tuple

    @staticmethod
    def finite(n: int, bonds=(), fields=()) -> "SpinHamiltonian":
        co = {}
        for j, k, a, b, coeff in bonds:
            if j == k:
                raise DnpoError("bond endpoints must differ")
            if j > k:
                j, k, a, b = k, j, b, a
            key = (j, k, a, b)
            co[key] = co.get(key, 0.0) + float(coeff)
        fl = {}
        for j, a, coeff in fields:
            fl[(j, a)] = fl.get((j, a), 0.0) + float(coeff)
        return SpinHamiltonian(False, n, tuple(sorted(co.items())), tuple(sorted(fl.items())))

    @staticmethod
    def translation_invariant(bonds=(), fields=()) -> "SpinHamiltonian":
        co = {}
        for a, b, coeff in bonds:
            co[(a, b)] = co.get((a, b), 0.0) + float(coeff)
        fl = {}
        for a, coeff in fields:
            fl[(a,)] = fl.get((a,), 0.0) + float(coeff)
        return SpinHamiltonian(True, None, tuple(sorted(co.items())), tuple(sorted(fl.items())))

    @staticmethod
    def heisenberg(n: int, strength: float = 0.25) -> "SpinHamiltonian":
        bonds = [(j, j + 1, a, a, strength) for j in range(1, n) for a in (1, 2, 3)]
        return SpinHamiltonian.finite(n, bonds)

    def graph(self) -> InteractionGraph:
        if self.ti:
            raise Unsupported("TI Hamiltonian has no finite graph; use a window")
        edges = {(j, k) for (j, k, _a, _b), _c in self.couplings}
        return InteractionGraph.from_edges(self.n_sites, edges)

    def terms_touching(self, site: int):
        """Coupling/field terms whose support contains the site; TI bonds are
        instantiated around it on the infinite chain."""
        if self.ti:
            for (a, b), coeff in self.couplings:
                yield coeff, ((site, a), (site + 1, b))
                yield coeff, ((site - 1, a), (site, b))
            for (a,), coeff in self.fields:
                yield coeff, ((site, a),)
            return
        for (j, k, a, b), coeff in self.couplings:
            if site in (j, k):
                yield coeff, ((j, a), (k, b))
        for (j, a), coeff in self.fields:
            if j == site:
                yield coeff, ((j, a),)

    def dense_terms(self, n: int):
        """(coeff, [(site, axis), ...]) pairs for the dense oracle."""
        if self.ti:
            for (a, b), coeff in self.couplings:
                for j in range(1, n):
                    yield coeff, ((j, a), (j + 1, b))
            for (a,), coeff in self.fields:
                for j in range(1, n + 1):
                    yield coeff, ((j, a),)
            return
        for (j, k, a, b), coeff in self.couplings:
            yield coeff, ((j, a), (k, b))
        for (j, a), coeff in self.fields:
            yield coeff, ((j, a),)

    def as_polynomial(self, tag: str = INTERVAL, n: Optional[int] = None) -> Polynomial:
        out = Polynomial()
        nn = n if n is not None else self.n_sites
        if nn is None:
            raise Unsupported("TI Hamiltonian needs an explicit window size")
        for coeff, sites in self.dense_terms(nn):
            out = out + Polynomial.term(coeff, 0, tuple(pauli(s, a, tag) for s, a in sites))
        return out


def heisenberg_rhs(h: SpinHamiltonian, site: int, axis: int, tau: float) -> Polynomial:
    """Right-hand side i*tau*[H, sigma_axis(site)] of the Heisenberg-picture
    equation of motion, reduced to normal form."""
    sig = Polynomial.of(pauli(site, axis, INTERVAL))
    if tau == 0.0:
        return Polynomial.zero()
    acc = Polynomial()
    for coeff, sites in h.terms_touching(site):
        term = Polynomial.scalar(coeff)
        for s, a in sites:
            term = term * Polynomial.of(pauli(s, a, INTERVAL))
        acc = acc + (term * sig - sig * term)
    return (acc * (1j * tau)).chop()


def _heisenberg_ode(h: SpinHamiltonian, sites: Sequence[int], tau: float) -> ODESystem:
    rhs = {}
    for site in sites:
        for axis in (1, 2, 3):
            rhs[pauli(site, axis, INTERVAL)] = heisenberg_rhs(h, site, axis, 1.0)
    return ODESystem(rhs, scale=tau)


@dataclass
class QuenchWitness:
    hamiltonian: SpinHamiltonian
    tau: float
    bits: Optional[str]
    n_sites: int


def _product_state_pins(bits, sites, basis, minimal_only: bool) -> list:
    """Initial-moment equalities of a computational product state.

    The minimal set pins only the single-site sigma_3 averages; the moment
    matrix then forces every other initial moment.  The full set spells those
    implied values out (sigma_3 words are signed products, anything touching
    axes 1 or 2 averages to zero), which removes a fully degenerate block
    before the solver sees it.  Both describe the same feasible set.
    """

    def bit_at(j):
        return bits[0] if len(bits) == 1 else bits[j - 1]

    pins = [StateConstraintSpec(Polynomial.of(pauli(j, 3, BOUND0)),
                                1.0 if bit_at(j) == "0" else -1.0, "eq")
            for j in sites]
    if minimal_only:
        return pins
    seen = set()
    elems = [Polynomial({m: 1.0 + 0j}) for m in basis.elements]
    for r, pr in enumerate(elems):
        for pc in elems[r:]:
            prod = alg.mul(pr, pc)
            ((m, _c),) = prod.terms.items()
            if len(m.word) < 2 or m in seen:
                continue
            seen.add(m)
            if all(v.axis == 3 for v in m.word):
                val = 1.0
                for v in m.word:
                    val *= 1.0 if bit_at(v.idx) == "0" else -1.0
            else:
                val = 0.0
            pins.append(StateConstraintSpec(Polynomial({m: 1.0 + 0j}), val, "eq"))
    for j in sites:
        pins.append(StateConstraintSpec(Polynomial.of(pauli(j, 1, BOUND0)), 0.0, "eq"))
        pins.append(StateConstraintSpec(Polynomial.of(pauli(j, 2, BOUND0)), 0.0, "eq"))
    return pins


@dataclass
class QuenchProblem:
    hamiltonian: SpinHamiltonian
    initial_bits: Optional[str]
    observable: Polynomial
    tau: float
    kappa: tuple                    # (k_sigma, k_t) or (k_sigma, k_t, n)
    ti: bool = False
    extra_state_constraints: list = field(default_factory=list)
    facial_pins: bool = True        # pin all initial moments implied by the
                                    # product state (exact facial reduction)

    def __post_init__(self):
        if not self.observable.is_hermitian():
            raise NotHermitian("observable must be Hermitian")
        if self.tau < 0:
            raise DnpoError("tau must be nonnegative")
        want = 3 if self.ti else 2
        if len(self.kappa) != want:
            raise DnpoError(f"kappa needs {want} entries")


def build_quench_relaxation(qp: QuenchProblem) -> RelaxationSpec:
    """Finite-chain quench relaxation: three Pauli bases, moment matrices,
    the Hankel time localizer, product-state pins and the differential
    constraint family t^j * o over the squared initial basis."""
    if qp.ti:
        raise DnpoError("use build_ti_quench_relaxation for TI problems")
    h = qp.hamiltonian
    n = h.n_sites
    if qp.initial_bits is not None and len(qp.initial_bits) != n:
        raise DnpoError("initial bit string length must match the chain")
    k_sigma, k_t = qp.kappa
    graph = h.graph()
    bases = [
        build_basis(graph, INTERVAL, k_sigma, k_t),
        build_basis(graph, BOUND0, k_sigma),
        build_basis(graph, BOUND1, k_sigma),
    ]
    ode = _heisenberg_ode(h, range(1, n + 1), qp.tau)
    pins = []
    if qp.initial_bits is not None:
        pins = _product_state_pins(qp.initial_bits, range(1, n + 1), bases[1],
                                   minimal_only=not qp.facial_pins)
    pins.extend(qp.extra_state_constraints)
    return RelaxationSpec(
        rw=alg.EMPTY_RULES,
        ode=ode,
        bases=bases,
        objective=qp.observable,
        state_constraints=pins,
        t_max_pow=k_t,
        ti_mode=False,
        witness=QuenchWitness(h, qp.tau, qp.initial_bits, n),
    )


def build_ti_quench_relaxation(qp: QuenchProblem) -> RelaxationSpec:
    """Translation-invariant quench relaxation on a finite site window, with
    translation identifications on all three functionals and differential
    constraints kept only where the commutator stays inside the window."""
    if not qp.ti or not qp.hamiltonian.ti:
        raise DnpoError("TI builder needs ti problem and ti Hamiltonian")
    k_sigma, k_t, n = qp.kappa
    if n < k_sigma + 2:
        raise WindowTooSmall(f"window {n} below k_sigma + 2 = {k_sigma + 2}")
    bits = qp.initial_bits
    if bits is not None and (len(bits) != 1 or bits not in ("0", "1")):
        raise DnpoError("TI initial state is one repeated bit: '0' or '1'")
    graph = InteractionGraph.chain(n)
    bases = [
        build_basis(graph, INTERVAL, k_sigma, k_t),
        build_basis(graph, BOUND0, k_sigma),
        build_basis(graph, BOUND1, k_sigma),
    ]
    ode = _heisenberg_ode(qp.hamiltonian, range(1, n + 1), qp.tau)
    pins = []
    if bits is not None:
        pins = _product_state_pins(bits, range(1, n + 1), bases[1],
                                   minimal_only=not qp.facial_pins)
    pins.extend(qp.extra_state_constraints)
    return RelaxationSpec(
        rw=alg.EMPTY_RULES,
        ode=ode,
        bases=bases,
        objective=qp.observable,
        state_constraints=pins,
        t_max_pow=k_t,
        ti_mode=True,
        witness=None,
    )


# -- two idempotents under an exponential flow --------------------------

E2 = math.e ** 2


def p2_variables():
    y0 = generic(0, CONST)
    y1 = generic(1, CONST)
    x = generic(2, INTERVAL)
    x1 = generic(2, BOUND1)
    return y0, y1, x, x1


def build_p2_relaxation(k: int) -> RelaxationSpec:
    """Relaxation of the two-projector exponential problem at level k: one
    joint functional over (t, x, y0, y1, x(1)) with idempotent rewrite rules,
    operator-interval localizers and x(0) substituted by the identity."""
    if k < 2:
        raise DnpoError("level must be at least 2")
    y0, y1, x, x1 = p2_variables()
    rules = (
        ((y0, y0), Polynomial.of(y0)),
        ((y1, y1), Polynomial.of(y1)),
    )
    rw = RewriteSystem(rules)
    growth = Polynomial.of(y0) * Polynomial.of(y1) + Polynomial.of(y1) * Polynomial.of(y0)
    ode = ODESystem({x: alg.mul(growth, Polynomial.of(x), rw)}, scale=1.0)
    basis = build_word_basis([x, y0, y1, x1], k, rw, include_time=True, family=INTERVAL)
    localizers = [
        (INTERVAL, Polynomial.of(x)),
        (INTERVAL, Polynomial.scalar(E2) - Polynomial.of(x)),
        (INTERVAL, Polynomial.of(x1)),
        (INTERVAL, Polynomial.scalar(E2) - Polynomial.of(x1)),
    ]
    return RelaxationSpec(
        rw=rw,
        ode=ode,
        bases=[basis],
        objective=Polynomial.of(x1),
        localizers=localizers,
        t_max_pow=2 * k,
        max_h_degree=2 * k,
        boundary_images={generic(2, BOUND0): Polynomial.one()},
        ti_mode=False,
    )


# -- interpolation / extrapolation under bounded Hamiltonian flow -------


@dataclass
class InterpolationProblem:
    e_max: float
    data: list            # [(tau_k, a_k), ...]
    query: float

    def __post_init__(self):
        if self.e_max <= 0:
            raise DnpoError("e_max must be positive")
        times = [t for t, _a in self.data]
        if len(set(times)) != len(times):
            raise DuplicateTime("interpolation sample times must be distinct")
        for _t, a in self.data:
            if abs(a) > 1.0 + 1e-12:
                raise DnpoError("dichotomic averages lie in [-1, 1]")


def build_interpolation_relaxation(ip: InterpolationProblem, k: int = 2,
                                   direction: str = "min") -> RelaxationSpec:
    """Relaxation bounding the flow value at the query time given dichotomic
    averages at the sample times; one propagator pair per time point."""
    if direction not in ("min", "max"):
        raise DnpoError("direction must be 'min' or 'max'")
    a_op = generic(0, CONST)
    h_op = generic(1, CONST)
    taus = [t for t, _ in ip.data] + [ip.query]
    n_units = len(taus)
    us = [generic(10 + i, INTERVAL, hermitian=False) for i in range(n_units)]

    rules = [((a_op, a_op), Polynomial.one())]
    for u in us:
        for tag in (INTERVAL, BOUND1):
            ut = u._replace(tag=tag)
            rules.append(((ut, ut.adjoint()), Polynomial.one()))
            rules.append(((ut.adjoint(), ut), Polynomial.one()))
    rw = RewriteSystem(tuple(rules))

    hp = Polynomial.of(h_op)
    rhs = {}
    for u, tk in zip(us, taus):
        rhs[u] = (hp * Polynomial.of(u)) * (-1j * tk)
        rhs[u.adjoint()] = (Polynomial.of(u.adjoint()) * hp) * (1j * tk)
    ode = ODESystem(rhs, scale=1.0)

    interval_letters = [a_op, h_op]
    for u in us:
        interval_letters.extend([u, u.adjoint()])
    bound1_letters = [a_op, h_op]
    for u in us:
        u1 = u._replace(tag=BOUND1)
        bound1_letters.extend([u1, u1.adjoint()])

    bases = [
        build_word_basis(interval_letters, k, rw, include_time=True, family=INTERVAL),
        build_word_basis(bound1_letters, k, rw, include_time=False, family=BOUND1),
    ]
    emax = Polynomial.scalar(ip.e_max)
    localizers = [
        (INTERVAL, hp),
        (INTERVAL, emax - hp),
        (BOUND1, hp),
        (BOUND1, emax - hp),
    ]

    images = {}
    for u in us:
        images[u._replace(tag=BOUND0)] = Polynomial.one()
        images[u.adjoint()._replace(tag=BOUND0)] = Polynomial.one()

    def reading(u: generic) -> Polynomial:
        u1 = Polynomial.of(u._replace(tag=BOUND1))
        return alg.mul(alg.mul(alg.adjoint(u1), Polynomial.of(a_op), rw), u1, rw)

    constraints = [StateConstraintSpec(reading(u), a_val, "eq")
                   for u, (_t, a_val) in zip(us, ip.data)]
    objective = reading(us[-1])
    if direction == "max":
        objective = -objective

    return RelaxationSpec(
        rw=rw,
        ode=ode,
        bases=bases,
        objective=objective,
        localizers=localizers,
        state_constraints=constraints,
        t_max_pow=2 * k,
        max_h_degree=2 * k,
        boundary_images=images,
        ti_mode=False,
    )


# -- scenario description files -----------------------------------------


def hamiltonian_from_dict(d: dict) -> SpinHamiltonian:
    ti = bool(d.get("ti", False))
    bonds = d.get("bonds", [])
    fields = d.get("fields", [])
    if ti:
        tb = [(b[0], b[1], b[2]) for b in bonds]
        tf = [(f[0], f[1]) for f in fields]
        return SpinHamiltonian.translation_invariant(tb, tf)
    n = d.get("n")
    if n is None:
        sites = [b[0] for b in bonds] + [b[1] for b in bonds] + [f[0] for f in fields]
        n = max(sites) if sites else 1
    return SpinHamiltonian.finite(n, bonds, fields)


def load_scenario(doc: dict) -> dict:
    """Normalize a scenario description (parsed JSON) into builder inputs."""
    kind = doc.get("scenario")
    if kind not in ("quench", "ti-quench", "p2", "interp"):
        raise DnpoError(f"unknown scenario {kind!r}")
    out = {"scenario": kind}
    if kind in ("quench", "ti-quench"):
        ham = hamiltonian_from_dict(doc.get("hamiltonian", {}))
        taus = doc.get("tau", 0.0)
        if not isinstance(taus, (list, tuple)):
            taus = [taus]
        out.update(
            hamiltonian=ham,
            bits=doc.get("bits"),
            observable=parse_polynomial(doc["observable"]),
            taus=[float(t) for t in taus],
            kappa=tuple(int(v) for v in doc["kappa"]),
        )
    elif kind == "p2":
        out["level"] = int(doc.get("level", 2))
    else:
        out.update(
            e_max=float(doc.get("e_max", 5.0)),
            data=[(float(t), float(a)) for t, a in doc.get("data", [])],
            taus=[float(t) for t in (doc.get("tau") if isinstance(doc.get("tau"), (list, tuple))
                                     else [doc.get("tau", 0.0)])],
            level=int(doc.get("level", 2)),
        )
    return out
