import numpy as np
import pytest
import scipy.sparse as sp

from dnpo.errors import NotHermitian, NumericError, ParseError
from dnpo.sdp import (
    ConicProgram,
    PSDBlock,
    SolverSettings,
    Solution,
    export_sdpa,
    import_sdpa,
    presolve,
    project_psd,
    realify,
    realify_block,
    solve,
)


def tiny_program(rhs=1.0, sense=1.0):
    """min sense*x subject to x = rhs and [x] >= 0."""
    A = sp.csr_matrix(np.array([[1.0]]))
    blocks = [PSDBlock(1, {(0, 0): {0: 1.0}})]
    return ConicProgram(1, np.array([sense]), A, np.array([rhs]), blocks, ["x"])


class TestProjectPSD:
    def test_diag_clip(self):
        out = project_psd(np.diag([1.0, -2.0]))
        assert np.allclose(out, np.diag([1.0, 0.0]))

    def test_psd_fixed(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((6, 6))
        m = a @ a.T
        assert np.allclose(project_psd(m), m, atol=1e-12)

    def test_offdiag(self):
        m = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert np.allclose(project_psd(m), np.full((2, 2), 0.5))

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((8, 8))
        m = m + m.T
        once = project_psd(m)
        assert np.max(np.abs(project_psd(once) - once)) < 1e-10

    def test_projection_optimality_sampled(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((5, 5))
        m = m + m.T
        p = project_psd(m)
        base = np.linalg.norm(m - p)
        for _ in range(100):
            a = rng.standard_normal((5, 5))
            z = a @ a.T
            assert base <= np.linalg.norm(m - z) + 1e-12

    def test_non_finite(self):
        with pytest.raises(NumericError):
            project_psd(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestRealify:
    def test_real_passthrough(self):
        m = np.array([[2.0, 1.0], [1.0, 2.0]])
        out = realify(m)
        assert out.shape == (2, 2)

    def test_constant_eigenvalues(self):
        m = np.array([[1.0, 1j], [-1j, 1.0]])
        out = realify(m)
        assert out.shape == (4, 4)
        w = np.sort(np.linalg.eigvalsh(out))
        assert np.allclose(w, [0.0, 0.0, 2.0, 2.0], atol=1e-12)

    def test_embedding_placement(self):
        ent = {(0, 0): {0: 1.0}, (0, 1): {1: 1j}, (1, 1): {0: 1.0}}
        blk = realify_block(2, ent)
        assert blk.dim == 4 and blk.complex_dim == 2
        # imaginary coefficient lands in the off-diagonal quadrant
        assert blk.entries[(0, 3)] == {1: -1.0}
        assert blk.entries[(1, 2)] == {1: 1.0}

    def test_non_hermitian_rejected(self):
        with pytest.raises(NotHermitian):
            realify(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))

    def test_faithful_on_random_hermitian(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        m = a + a.conj().T
        out = realify(m)
        wm = np.sort(np.linalg.eigvalsh(m))
        wo = np.sort(np.linalg.eigvalsh(out))
        assert np.allclose(np.repeat(wm, 2), wo, atol=1e-10)


class TestPresolve:
    def test_pins_and_merges(self):
        # x0 = 2, x1 = x0 + 1, x2 free in a block
        A = sp.csr_matrix(np.array([[1.0, 0.0, 0.0], [1.0, -1.0, 0.0]]))
        b = np.array([2.0, -1.0])
        blocks = [PSDBlock(1, {(0, 0): {2: 1.0}})]
        p = ConicProgram(3, np.array([1.0, 1.0, 1.0]), A, b, blocks, ["a", "b", "c"])
        red = presolve(p)
        assert red.program.n_vars == 1
        assert red.program.objective_offset == pytest.approx(5.0)
        x = red.lift(np.array([7.0]), 3)
        assert x[0] == pytest.approx(2.0)
        assert x[1] == pytest.approx(3.0)
        assert x[2] == pytest.approx(7.0)

    def test_constant_block_checked_and_dropped(self):
        A = sp.csr_matrix(np.array([[1.0]]))
        blocks = [PSDBlock(1, {(0, 0): {0: 1.0}})]
        p = ConicProgram(1, np.zeros(1), A, np.array([3.0]), blocks, ["x"])
        red = presolve(p)
        assert not red.program.blocks        # [3] >= 0 holds, block dropped

    def test_infeasible_pin_detected(self):
        from dnpo.errors import DnpoError
        A = sp.csr_matrix(np.array([[1.0], [1.0]]))
        b = np.array([1.0, 2.0])
        p = ConicProgram(1, np.zeros(1), A, b, [PSDBlock(1, {(0, 0): {0: 1.0}})], ["x"])
        with pytest.raises(DnpoError):
            presolve(p)


class TestSolve:
    def test_pinned_scalar(self):
        sol = solve(tiny_program(rhs=2.0))
        assert sol.status == "Optimal"
        assert sol.objective_value == pytest.approx(2.0, abs=1e-9)
        assert sol.x[0] == pytest.approx(2.0, abs=1e-9)

    def test_simple_sdp(self):
        # min x + y  s.t. [[x, 1], [1, y]] >= 0, x + y free -> optimum 2 at x=y=1
        blocks = [PSDBlock(2, {(0, 0): {0: 1.0}, (1, 1): {1: 1.0}},
                           const={(0, 1): 1.0})]
        p = ConicProgram(2, np.array([1.0, 1.0]), sp.csr_matrix((0, 2)),
                         np.zeros(0), blocks, ["x", "y"])
        sol = solve(p, SolverSettings(eps=1e-8, max_iter=20000))
        assert sol.objective_value == pytest.approx(2.0, abs=1e-5)

    def test_determinism(self):
        p = tiny_program(rhs=1.5)
        s1 = solve(p, SolverSettings())
        s2 = solve(p, SolverSettings())
        assert np.array_equal(s1.x, s2.x)
        assert s1.objective_value == s2.objective_value

    def test_settings_validation(self):
        from dnpo.errors import DnpoError
        with pytest.raises(DnpoError):
            SolverSettings(alpha=2.5)
        with pytest.raises(DnpoError):
            SolverSettings(eps=0.0)

    def test_certificate_is_valid_lower_bound(self):
        # min x s.t. [[x, 1],[1, x]] >= 0 -> optimum 1; |x| <= 10 known
        blocks = [PSDBlock(2, {(0, 0): {0: 1.0}, (1, 1): {0: 1.0}},
                           const={(0, 1): 1.0})]
        p = ConicProgram(1, np.array([1.0]), sp.csr_matrix((0, 1)), np.zeros(0),
                         blocks, ["x"], var_bounds=np.array([10.0]))
        sol = solve(p, SolverSettings(eps=1e-8, max_iter=20000))
        assert sol.certified is not None
        assert sol.certified <= 1.0 + 1e-9
        assert sol.objective_value == pytest.approx(1.0, abs=1e-5)


class TestSdpaRoundtrip:
    def test_trivial_program_file(self):
        p = tiny_program(rhs=1.0)
        text = export_sdpa(p)
        assert "mDIM" in text
        q = import_sdpa(text)
        assert p.structurally_equal(q)
        sol = solve(q)
        assert sol.objective_value == pytest.approx(1.0, abs=1e-7)

    def test_roundtrip_complex_block(self):
        ent = {(0, 0): {0: 1.0}, (0, 1): {0: 0.5j, 1: 1.0}, (1, 1): {1: 2.0}}
        blk = realify_block(2, ent)
        A = sp.csr_matrix(np.array([[1.0, 0.5]]))
        p = ConicProgram(2, np.array([1.0, -1.0]), A, np.array([0.25]), [blk], ["a", "b"])
        q = import_sdpa(export_sdpa(p))
        assert p.structurally_equal(q)

    def test_parse_error_line_numbers(self):
        with pytest.raises(ParseError):
            import_sdpa("2 = mDIM\n1 = nBLOCK\n2 = bLOCKsTRUCT\n1.0 2.0\n1 1 2 1 5.0\n")

    def test_comments_tolerated(self):
        p = tiny_program()
        text = '"a comment line\n*another\n' + export_sdpa(p)
        q = import_sdpa(text)
        assert p.structurally_equal(q)

    def test_file_roundtrip(self, tmp_path):
        p = tiny_program(rhs=2.5)
        path = tmp_path / "prog.dat-s"
        export_sdpa(p, path)
        q = import_sdpa(path)
        assert p.structurally_equal(q)
