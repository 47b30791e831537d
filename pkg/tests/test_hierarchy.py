import itertools

import numpy as np
import pytest

from dnpo import algebra as alg
from dnpo.algebra import (
    BOUND0,
    BOUND1,
    INTERVAL,
    Monomial,
    ODESystem,
    Polynomial as P,
    RewriteSystem,
    generic,
    pauli,
)
from dnpo.errors import NotHermitian, SpanOverflow
from dnpo.hierarchy import (
    InteractionGraph,
    MomentIndex,
    build_basis,
    build_diff_constraints,
    build_moment_matrix,
    build_ti_constraints,
    build_weighted_state_constraints,
)


def brute_force_basis_count(n, k_sigma, k_t, timed):
    """Independent enumeration: subsets of a chain with pairwise distance
    below k_sigma, all axis choices, optional time grading."""
    count = 0
    for size in range(0, k_sigma + 1):
        for sub in itertools.combinations(range(1, n + 1), size):
            if all(abs(a - b) < k_sigma for a in sub for b in sub):
                count += 3 ** size * ((k_t + 1) if timed else 1)
    return count


class TestBasis:
    @pytest.mark.parametrize("n,ks", [(3, 2), (4, 2), (5, 3), (1, 1)])
    def test_counts_match_enumeration(self, n, ks):
        g = InteractionGraph.chain(n)
        b = build_basis(g, BOUND0, ks)
        assert len(b) == brute_force_basis_count(n, ks, 0, False)

    def test_chain3_bound0_is_28(self):
        b = build_basis(InteractionGraph.chain(3), BOUND0, 2)
        assert len(b) == 28

    def test_chain3_interval_kt1_is_56(self):
        b = build_basis(InteractionGraph.chain(3), INTERVAL, 2, 1)
        assert len(b) == 56

    def test_first_element_is_one(self):
        b = build_basis(InteractionGraph.chain(2), INTERVAL, 2, 2)
        assert b.elements[0] == Monomial(0, ())

    def test_elements_unique_and_tagged(self):
        b = build_basis(InteractionGraph.chain(4), BOUND1, 2)
        assert len(set(b.elements)) == len(b)
        assert all(v.tag == BOUND1 for m in b.elements for v in m.word)

    def test_empty_window(self):
        from dnpo.errors import EmptyBasis
        with pytest.raises(EmptyBasis):
            build_basis(InteractionGraph.chain(3), BOUND0, 2, window=[])

    def test_graph_distance(self):
        g = InteractionGraph.from_edges(4, [(1, 2), (3, 4)])
        assert g.dist(1, 2) == 1
        assert g.dist(1, 3) == np.inf


class TestMomentIndex:
    def test_hermitian_single_variable(self):
        idx = MomentIndex()
        m = Monomial(0, (pauli(1, 3, BOUND0),))
        re, im, sign = idx.ref(m)
        assert im == -1 and sign == 1

    def test_adjoint_pair_shares_slots(self):
        idx = MomentIndex()
        y0, y1 = generic(0), generic(1)
        m = Monomial(0, (y0, y1))
        ma = Monomial(0, (y1, y0))
        r1 = idx.ref(m)
        r2 = idx.ref(ma)
        assert r1[0] == r2[0] and r1[1] == r2[1] and r1[2] == -r2[2]

    def test_expr_of_hermitian_combo_is_real(self):
        idx = MomentIndex()
        y0, y1 = generic(0), generic(1)
        p = P.term(1j, 0, [y0, y1]) - P.term(1j, 0, [y1, y0])
        combo = idx.expr(p, create=True)
        assert all(abs(c.imag) < 1e-14 for c in combo.values())

    def test_strict_lookup_raises(self):
        idx = MomentIndex()
        with pytest.raises(SpanOverflow):
            idx.expr(P.of(pauli(1, 1)), create=False)


class TestMomentMatrix:
    def test_sigma3_moment_matrix_entries(self):
        idx = MomentIndex()
        g = InteractionGraph.chain(1)
        basis = build_basis(g, BOUND0, 1, window=[1])
        sub = basis.filtered(lambda m: len(m.word) == 0 or m.word[0].axis == 3)
        mat = build_moment_matrix(sub, P.one(), idx)
        # basis {1, s3}: diagonal entries are both the unit moment
        one_ref = idx.ref(Monomial(0, ()))[0]
        assert mat.entries[(0, 0)] == {one_ref: 1.0 + 0j}
        assert mat.entries[(1, 1)] == {one_ref: 1.0 + 0j}
        s3_ref = idx.ref(Monomial(0, (pauli(1, 3, BOUND0),)))[0]
        assert set(mat.entries[(0, 1)]) == {s3_ref}

    def test_projector_rule_moment_matrix(self):
        y0 = generic(0)
        rw = RewriteSystem((((y0, y0), P.of(y0)),))
        idx = MomentIndex(rw)
        from dnpo.hierarchy import MonomialBasis
        basis = MonomialBasis(INTERVAL, (Monomial(0, ()), Monomial(0, (y0,))),
                              0, 0, (), "degree", 1)
        mat = build_moment_matrix(basis, P.one(), idx, rw, time_regrade=False)
        y_ref = idx.ref(Monomial(0, (y0,)))[0]
        assert set(mat.entries[(1, 1)]) == {y_ref}

    def test_localizer_must_be_hermitian(self):
        idx = MomentIndex()
        basis = build_basis(InteractionGraph.chain(1), INTERVAL, 1)
        with pytest.raises(NotHermitian):
            build_moment_matrix(basis, P.of(pauli(1, 1)) * 1j, idx)

    def test_hermiticity_of_entries(self):
        idx = MomentIndex()
        basis = build_basis(InteractionGraph.chain(2), INTERVAL, 2, 1)
        mat = build_moment_matrix(basis, P.one(), idx)
        for (r, c), combo in mat.entries.items():
            back = mat.entry(c, r)
            assert back == {v: co.conjugate() for v, co in combo.items()}


class TestDiffConstraints:
    def test_time_only_monomial_pins_uniform_moments(self):
        # h = t^2 forces 2 * moment(t) = 1
        idx = MomentIndex()
        idx.ref(Monomial(1, ()))
        idx.ref(Monomial(0, ()))
        ode = ODESystem({})
        rows, skipped = build_diff_constraints(ode, [Monomial(0, ())], 2, idx)
        assert skipped == 0
        t_ref = idx.ref(Monomial(1, ()))[0]
        one_ref = idx.ref(Monomial(0, ()))[0]
        match = [r for r in rows if set(r.combo) == {t_ref, one_ref}]
        assert match, "expected a row linking moment(t) and moment(1)"
        row = match[0]
        assert row.combo[t_ref] / row.combo[one_ref] == pytest.approx(-2.0)

    def test_heisenberg_site_commutator_row(self):
        # moment rows reproduce i*tau*[H, o] computed densely
        from dnpo.scenarios import SpinHamiltonian, heisenberg_rhs
        from dnpo.oracle import hamiltonian_matrix, site_operator
        h = SpinHamiltonian.heisenberg(3)
        rhs = heisenberg_rhs(h, 2, 3, 0.7)
        Hm = hamiltonian_matrix(h, 3).toarray()
        s = site_operator(3, 2, 3).toarray()
        want = 1j * 0.7 * (Hm @ s - s @ Hm)
        asn = {}
        for site in range(1, 4):
            for axis in (1, 2, 3):
                asn[pauli(site, axis, INTERVAL)] = site_operator(3, site, axis).toarray()
        got = alg.evaluate(rhs, asn)
        assert np.max(np.abs(got - want)) < 1e-10

    def test_p2_style_substitution_row(self):
        # h = x with dx/dt = (y0 y1 + y1 y0) x and x(0) -> 1
        y0, y1 = generic(0), generic(1)
        x = generic(2, INTERVAL)
        rw = RewriteSystem((((y0, y0), P.of(y0)), ((y1, y1), P.of(y1))))
        idx = MomentIndex(rw)
        growth = P.of(y0) * P.of(y1) + P.of(y1) * P.of(y0)
        ode = ODESystem({x: alg.mul(growth, P.of(x), rw)})
        for mono in [Monomial(0, (y0, y1, x)), Monomial(0, (y1, y0, x)),
                     Monomial(0, (generic(2, BOUND1),)), Monomial(0, ())]:
            idx.ref(mono)
        rows, skipped = build_diff_constraints(
            ode, [Monomial(0, (x,))], 0, idx,
            boundary_images={generic(2, BOUND0): P.one()})
        assert len(rows) == 1 and skipped == 0
        row = rows[0]
        refs = set()
        for mono in [Monomial(0, (y0, y1, x)), Monomial(0, (y1, y0, x)),
                     Monomial(0, (generic(2, BOUND1),)), Monomial(0, ())]:
            re, im, _s = idx.ref(mono)
            refs.add(re)
            if im >= 0:
                refs.add(im)
        assert set(row.combo) <= refs
        # the boundary reading enters with opposite sign to the unit moment
        x1_ref = idx.ref(Monomial(0, (generic(2, BOUND1),)))[0]
        one_ref = idx.ref(Monomial(0, ()))[0]
        assert row.combo[x1_ref] == pytest.approx(-1.0)
        assert row.combo[one_ref] == pytest.approx(1.0)

    def test_span_overflow_counted(self):
        idx = MomentIndex()
        ode = ODESystem({pauli(1, 3, INTERVAL): P.of(pauli(2, 1, INTERVAL))})
        rows, skipped = build_diff_constraints(
            ode, [Monomial(0, (pauli(1, 3, INTERVAL),))], 0, idx)
        assert skipped == 1 and not rows


class TestTIConstraints:
    def _index_with(self, monos):
        idx = MomentIndex()
        for m in monos:
            idx.ref(m)
        return idx

    def test_single_site_translates_merge(self):
        m1 = Monomial(0, (pauli(1, 3, BOUND0),))
        m2 = Monomial(0, (pauli(2, 3, BOUND0),))
        idx = self._index_with([m1, m2])
        basis = build_basis(InteractionGraph.chain(2), BOUND0, 1)
        merged = build_ti_constraints(basis, idx)
        assert merged == 1
        assert idx.find(idx.ref(m1)[0]) == idx.find(idx.ref(m2)[0])

    def test_pair_translates_merge(self):
        m1 = Monomial(0, (pauli(1, 1, BOUND0), pauli(2, 2, BOUND0)))
        m2 = Monomial(0, (pauli(3, 1, BOUND0), pauli(4, 2, BOUND0)))
        idx = self._index_with([m1, m2])
        basis = build_basis(InteractionGraph.chain(4), BOUND0, 2)
        build_ti_constraints(basis, idx)
        assert idx.find(idx.ref(m1)[0]) == idx.find(idx.ref(m2)[0])

    def test_axis_swap_not_merged(self):
        m1 = Monomial(0, (pauli(1, 1, BOUND0), pauli(2, 2, BOUND0)))
        m2 = Monomial(0, (pauli(1, 2, BOUND0), pauli(2, 1, BOUND0)))
        idx = self._index_with([m1, m2])
        basis = build_basis(InteractionGraph.chain(2), BOUND0, 2)
        build_ti_constraints(basis, idx)
        assert idx.find(idx.ref(m1)[0]) != idx.find(idx.ref(m2)[0])

    def test_idempotent(self):
        m1 = Monomial(0, (pauli(1, 3, BOUND0),))
        m2 = Monomial(0, (pauli(2, 3, BOUND0),))
        idx = self._index_with([m1, m2])
        basis = build_basis(InteractionGraph.chain(2), BOUND0, 1)
        assert build_ti_constraints(basis, idx) == 1
        assert build_ti_constraints(basis, idx) == 0

    def test_different_tags_not_merged(self):
        m1 = Monomial(0, (pauli(1, 3, BOUND0),))
        m2 = Monomial(0, (pauli(2, 3, BOUND1),))
        idx = self._index_with([m1, m2])
        b0 = build_basis(InteractionGraph.chain(2), BOUND0, 1)
        b1 = build_basis(InteractionGraph.chain(2), BOUND1, 1)
        build_ti_constraints(b0, idx)
        build_ti_constraints(b1, idx)
        assert idx.find(idx.ref(m1)[0]) != idx.find(idx.ref(m2)[0])


class TestWeightedState:
    def test_unit_weight_hankel_pattern(self):
        idx = MomentIndex()
        mats = build_weighted_state_constraints(P.one(), 1, idx)
        assert [m.dim for m in mats] == [2, 2, 2]
        names = [m.label for m in mats]
        assert names == ["state", "state+", "state-"]

    def test_uniform_moments_are_psd(self):
        idx = MomentIndex()
        mats = build_weighted_state_constraints(P.one(), 1, idx)
        # substitute the uniform-measure values moment(t^r) = 1/(r+1)
        values = {}
        for m, (re, im, _s) in idx.monomials():
            assert not m.word
            values[re] = 1.0 / (m.tpow + 1)
        for sym in mats:
            dense = np.zeros((sym.dim, sym.dim))
            for (r, c), combo in sym.entries.items():
                val = sum(values[v] * co.real for v, co in combo.items())
                dense[r, c] = val
                dense[c, r] = val
            assert np.linalg.eigvalsh(dense)[0] > -1e-12

    def test_degree_zero_single_cells(self):
        idx = MomentIndex()
        mats = build_weighted_state_constraints(P.one(), 0, idx)
        assert all(m.dim == 1 for m in mats)

    def test_non_hermitian_rejected(self):
        idx = MomentIndex()
        q = P.of(generic(0)) * 1j
        with pytest.raises(NotHermitian):
            build_weighted_state_constraints(q, 1, idx)
