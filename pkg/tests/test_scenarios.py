import numpy as np
import pytest

from dnpo import algebra as alg
from dnpo.algebra import BOUND0, BOUND1, INTERVAL, Polynomial as P, pauli
from dnpo.errors import DnpoError, DuplicateTime, NotHermitian, WindowTooSmall
from dnpo.hierarchy import assemble, assemble_detailed
from dnpo.oracle import exact_quench, hamiltonian_matrix, random_feasible_moments, site_operator
from dnpo.scenarios import (
    InterpolationProblem,
    QuenchProblem,
    SpinHamiltonian,
    build_interpolation_relaxation,
    build_quench_relaxation,
    build_ti_quench_relaxation,
    heisenberg_rhs,
    hamiltonian_from_dict,
    load_scenario,
)
from dnpo.sdp import SolverSettings, bounds


def sz1(site):
    return P.of(pauli(site, 3, BOUND1))


FAST = SolverSettings(eps=2e-5, max_iter=1500)


class TestHeisenbergRhs:
    def test_matches_dense_commutator(self):
        h = SpinHamiltonian.heisenberg(3)
        tau = 0.7
        for site in (1, 2, 3):
            for axis in (1, 2, 3):
                rhs = heisenberg_rhs(h, site, axis, tau)
                asn = {pauli(j, a, INTERVAL): site_operator(3, j, a).toarray()
                       for j in range(1, 4) for a in (1, 2, 3)}
                got = alg.evaluate(rhs, asn)
                Hm = hamiltonian_matrix(h, 3).toarray()
                s = site_operator(3, site, axis).toarray()
                want = 1j * tau * (Hm @ s - s @ Hm)
                assert np.max(np.abs(got - want)) < 1e-10

    def test_field_only_axis3_commutes(self):
        h = SpinHamiltonian.finite(2, fields=[(1, 3, 0.8), (2, 3, -0.3)])
        assert heisenberg_rhs(h, 1, 3, 0.5) == P.zero()

    def test_tau_zero(self):
        h = SpinHamiltonian.heisenberg(2)
        assert heisenberg_rhs(h, 1, 1, 0.0) == P.zero()

    def test_hermitian(self):
        h = SpinHamiltonian.heisenberg(4)
        for site in (1, 2, 4):
            for axis in (1, 2, 3):
                rhs = heisenberg_rhs(h, site, axis, 0.9)
                assert rhs.is_hermitian()

    def test_ti_hamiltonian_sites_unbounded(self):
        h = SpinHamiltonian.translation_invariant(bonds=[(1, 2, 1.0)])
        rhs = heisenberg_rhs(h, 5, 3, 0.4)
        sites = {v.idx for m in rhs.terms for v in m.word}
        assert sites <= {4, 5, 6} and rhs


class TestQuenchBuilder:
    def test_tau_zero_bounds_pin_to_initial(self):
        h = SpinHamiltonian.heisenberg(2)
        qp = QuenchProblem(h, "10", sz1(2), 0.0, (2, 2))
        lo, hi, sl, sh = bounds(build_quench_relaxation(qp), FAST)
        assert lo == pytest.approx(1.0, abs=1e-6)
        assert hi == pytest.approx(1.0, abs=1e-6)

    def test_sandwich_small_chain(self):
        h = SpinHamiltonian.heisenberg(3)
        qp = QuenchProblem(h, "100", sz1(3), 0.3, (2, 2))
        lo, hi, sl, sh = bounds(build_quench_relaxation(qp), FAST)
        ex = exact_quench("100", h, 0.3, sz1(3))
        assert lo - 1e-6 <= ex <= hi + 1e-6

    def test_witness_feasible_random_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            n = int(rng.integers(2, 4))
            bits = "".join(rng.choice(["0", "1"]) for _ in range(n))
            h = SpinHamiltonian.heisenberg(n)
            qp = QuenchProblem(h, bits, sz1(n), float(rng.uniform(0, 1)), (2, 2))
            spec = build_quench_relaxation(qp)
            det = assemble_detailed(spec)
            x = random_feasible_moments(spec, 0, assembled=det)
            assert np.max(np.abs(det.program.A @ x - det.program.b)) < 1e-7
            for blk in det.program.blocks:
                assert np.linalg.eigvalsh(blk.dense_at(x))[0] > -1e-7

    def test_energy_conservation_encoded(self):
        # the differential rows force equal initial and final energy readings
        # on any vector satisfying the assembled equalities
        h = SpinHamiltonian.heisenberg(3)
        qp = QuenchProblem(h, "010", sz1(3), 0.45, (2, 2))
        spec = build_quench_relaxation(qp)
        det = assemble_detailed(spec)
        x = random_feasible_moments(spec, 0, assembled=det)
        h0 = det.index.expr(alg.boundary_substitute(h.as_polynomial(INTERVAL), 0))
        h1 = det.index.expr(alg.boundary_substitute(h.as_polynomial(INTERVAL), 1))

        def value(combo):
            return sum((co * x[det.column_of(v)]).real for v, co in combo.items())

        assert value(h0) == pytest.approx(value(h1), abs=1e-7)

    def test_spin_flip_covariance(self):
        # flipping all bits maps the bound interval of sigma3 to its negative
        h = SpinHamiltonian.heisenberg(3)
        tau = 0.35
        lo1, hi1, *_ = bounds(build_quench_relaxation(
            QuenchProblem(h, "100", sz1(3), tau, (2, 2))), FAST)
        lo2, hi2, *_ = bounds(build_quench_relaxation(
            QuenchProblem(h, "011", -sz1(3), tau, (2, 2))), FAST)
        assert lo2 == pytest.approx(-hi1, abs=5e-5)
        assert hi2 == pytest.approx(-lo1, abs=5e-5)

    def test_bits_length_checked(self):
        h = SpinHamiltonian.heisenberg(3)
        with pytest.raises(DnpoError):
            build_quench_relaxation(QuenchProblem(h, "01", sz1(1), 0.1, (2, 2)))

    def test_observable_hermitian_checked(self):
        h = SpinHamiltonian.heisenberg(2)
        with pytest.raises(NotHermitian):
            QuenchProblem(h, "00", P.of(pauli(1, 1, BOUND1)) * 1j, 0.1, (2, 2))


class TestTIQuenchBuilder:
    def test_tau_zero_all_up(self):
        h = SpinHamiltonian.translation_invariant(bonds=[(1, 2, 1.0)])
        qp = QuenchProblem(h, "0", sz1(3), 0.0, (2, 2, 5), ti=True)
        lo, hi, *_ = bounds(build_ti_quench_relaxation(qp), FAST)
        assert lo == pytest.approx(1.0, abs=1e-6)
        assert hi == pytest.approx(1.0, abs=1e-6)

    def test_window_too_small(self):
        h = SpinHamiltonian.translation_invariant(bonds=[(1, 2, 1.0)])
        qp = QuenchProblem(h, "0", sz1(1), 0.1, (2, 2, 3), ti=True)
        with pytest.raises(WindowTooSmall):
            build_ti_quench_relaxation(qp)

    def test_translation_merges_applied(self):
        h = SpinHamiltonian.translation_invariant(bonds=[(1, 2, 1.0)])
        qp = QuenchProblem(h, "0", sz1(3), 0.1, (2, 2, 5), ti=True)
        spec = build_ti_quench_relaxation(qp)
        det = assemble_detailed(spec)
        from dnpo.algebra import Monomial
        r1 = det.index.ref(Monomial(0, (pauli(1, 3, BOUND1),)))[0]
        r2 = det.index.ref(Monomial(0, (pauli(4, 3, BOUND1),)))[0]
        assert det.index.find(r1) == det.index.find(r2)


class TestInterpolationBuilder:
    def test_duplicate_times_rejected(self):
        with pytest.raises(DuplicateTime):
            InterpolationProblem(5.0, [(0.0, 0.5), (0.0, 0.7)], 1.0)

    def test_dichotomic_range_checked(self):
        with pytest.raises(DnpoError):
            InterpolationProblem(5.0, [(0.0, 1.5)], 1.0)

    def test_single_point_query_at_sample(self):
        # constraining the queried time collapses the bounds onto the datum
        ip = InterpolationProblem(5.0, [(0.6, 0.31)], 0.6)
        spec = build_interpolation_relaxation(ip, 2)
        lo, hi, sl, sh = bounds(spec, SolverSettings(eps=2e-5, max_iter=1200))
        assert lo - 5e-4 <= 0.31 <= hi + 5e-4
        assert hi - lo < 2e-2

    def test_query_zero_is_dichotomic_range(self):
        ip = InterpolationProblem(5.0, [(0.5, 0.2)], 0.0)
        spec = build_interpolation_relaxation(ip, 2)
        lo, hi, sl, sh = bounds(spec, SolverSettings(eps=2e-5, max_iter=1200))
        assert -1.0 - 1e-4 <= lo <= hi <= 1.0 + 1e-4


class TestScenarioFiles:
    def test_quench_doc(self):
        doc = {
            "scenario": "quench",
            "hamiltonian": {"bonds": [[1, 2, 1, 1, 0.25], [1, 2, 2, 2, 0.25],
                                      [1, 2, 3, 3, 0.25]], "n": 2},
            "bits": "10",
            "observable": "s2_3@1",
            "tau": [0.0, 0.5],
            "kappa": [2, 2],
        }
        info = load_scenario(doc)
        assert info["scenario"] == "quench"
        assert info["taus"] == [0.0, 0.5]
        assert info["observable"] == sz1(2)

    def test_ti_doc(self):
        doc = {"scenario": "ti-quench",
               "hamiltonian": {"ti": True, "bonds": [[1, 2, 1.0]]},
               "bits": "0", "observable": "s3_3@1", "tau": 0.1,
               "kappa": [2, 2, 5]}
        info = load_scenario(doc)
        assert info["hamiltonian"].ti

    def test_unknown_scenario(self):
        with pytest.raises(DnpoError):
            load_scenario({"scenario": "nope"})
