import numpy as np
import pytest
import scipy.sparse as sp

from grps.basis import local_system
from grps.coeff import mstrig_eval, sample_field
from grps.errors import ConstraintRankError, InvalidArgument, NotSPD, SolverFailure
from grps.fem import assemble_load, assemble_stiffness
from grps.linalg import (KKTFactor, KKTSystem, SparseSym, dependent_rows, kkt_nullspace,
                         numerical_rank, solve_kkt, solve_spd)
from grps.measurements import build_measurements
from grps.mesh import build_coarse_mesh, patch, refine


def test_sparsesym_storage():
    M = np.array([[4.0, 1, 0], [1, 3, 0], [0, 0, 2]])
    S = SparseSym(M)
    assert S.n == 3
    assert np.array_equal(S.toarray(), M)
    # lower triangle only, sorted, no explicit zeros
    assert S.lower.nnz == 4
    assert S.lower.has_sorted_indices
    assert np.array_equal(S.diagonal(), [4, 3, 2])
    x = np.array([1.0, 2, 3])
    assert np.array_equal(S @ x, M @ x)
    assert S.quad(x) == x @ M @ x
    assert np.array_equal((2 * S).toarray(), 2 * M)
    assert np.array_equal(S.submatrix([0, 2]).toarray(), M[np.ix_([0, 2], [0, 2])])


def test_sparsesym_rejects_rectangular():
    with pytest.raises(InvalidArgument):
        SparseSym(np.ones((2, 3)))


@pytest.mark.parametrize('n', [1, 5, 40])
def test_spd_identity(n):
    b = np.random.default_rng(n).standard_normal(n)
    assert np.allclose(solve_spd(SparseSym(sp.identity(n)), b), b, rtol=0, atol=1e-14)


def test_spd_tridiagonal():
    A = SparseSym(sp.diags([-1, 2, -1], [-1, 0, 1], shape=(3, 3)))
    x = solve_spd(A, np.ones(3))
    assert np.allclose(x, [1.5, 2.0, 1.5], rtol=0, atol=1e-12)


def test_spd_against_dense_oracle():
    h = refine(build_coarse_mesh(2), 2)
    A = assemble_stiffness(h)
    b = assemble_load(h, lambda x, y: np.ones_like(x))
    x = solve_spd(A, b)
    ref = np.linalg.solve(A.toarray(), b)
    assert np.allclose(x, ref, rtol=0, atol=1e-9 * np.abs(ref).max())


def test_spd_residual_and_determinism():
    h = refine(build_coarse_mesh(4), 2)
    A = assemble_stiffness(h, sample_field(mstrig_eval, h))
    b = np.random.default_rng(0).standard_normal(A.n)
    x = solve_spd(A, b, tol=1e-10)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert np.array_equal(x, solve_spd(A, b, tol=1e-10))


def test_spd_energy_optimality():
    h = refine(build_coarse_mesh(2), 3)
    A = assemble_stiffness(h, sample_field(mstrig_eval, h))
    rng = np.random.default_rng(4)
    b = rng.standard_normal(A.n)
    x = solve_spd(A, b)
    J = lambda v: 0.5 * A.quad(v) - b @ v
    # first-order term is bounded by the residual; quadratic term is >= 0
    slack = np.linalg.norm(A @ x - b)
    for _ in range(10):
        d = rng.standard_normal(A.n)
        eps = 1e-3
        assert J(x) <= J(x + eps * d) + eps * slack * np.linalg.norm(d)


def test_spd_zero_rhs():
    assert np.array_equal(solve_spd(SparseSym(sp.identity(3)), np.zeros(3)), np.zeros(3))


@pytest.mark.parametrize('tol', [0.0, 1e-3, -1.0])
def test_spd_tol_range(tol):
    with pytest.raises(InvalidArgument):
        solve_spd(SparseSym(sp.identity(2)), np.ones(2), tol=tol)


def test_spd_detects_indefinite():
    A = SparseSym(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotSPD):
        solve_spd(A, np.array([1.0, -1.0]))
    with pytest.raises(NotSPD):
        solve_spd(SparseSym(np.diag([1.0, -1.0])), np.ones(2))


def test_spd_failure_reports_residual():
    A = SparseSym(sp.diags([-1, 2, -1], [-1, 0, 1], shape=(50, 50)))
    with pytest.raises(SolverFailure) as exc:
        solve_spd(A, np.ones(50), maxiter=2)
    assert exc.value.residual > 1e-10


def test_kkt_hand_example():
    sys = KKTSystem(SparseSym(sp.identity(2)), np.array([[1.0, 0.0]]), np.zeros(2), np.array([1.0]))
    x, y = solve_kkt(sys)
    assert np.allclose(x, [1, 0], atol=1e-14)
    assert np.allclose(y, [-1], atol=1e-14)
    assert sys.residual(x, y) < 1e-14


def test_kkt_homogeneous():
    sys = KKTSystem(SparseSym(sp.identity(3)), np.array([[1.0, 1, 0]]), np.zeros(3), np.zeros(1))
    x, y = solve_kkt(sys)
    assert not x.any() and not y.any()


def test_kkt_duplicate_row():
    C = np.array([[1.0, 1, 0], [1.0, 1, 0]])
    sys = KKTSystem(SparseSym(sp.identity(3)), C, np.zeros(3), np.array([1.0, 0.0]))
    with pytest.raises(ConstraintRankError) as exc:
        solve_kkt(sys)
    assert list(exc.value.rows) in ([0], [1])


def test_kkt_shape_checks():
    with pytest.raises(InvalidArgument):
        KKTSystem(SparseSym(sp.identity(2)), np.ones((3, 2)), None, np.ones(3))
    with pytest.raises(InvalidArgument):
        KKTSystem(SparseSym(sp.identity(2)), np.ones((1, 3)), None, np.ones(1))


def test_rank_helpers():
    C = np.array([[1.0, 0, 0], [0, 1, 0], [1, 1, 0]])
    assert numerical_rank(C) == 2
    assert len(dependent_rows(C)) == 1
    assert numerical_rank(np.zeros((2, 2))) == 0


def test_kkt_random_against_oracle():
    rng = np.random.default_rng(7)
    n, m = 30, 6
    B = rng.standard_normal((n, n))
    A = SparseSym(B @ B.T + n * np.eye(n))
    C = rng.standard_normal((m, n))
    sys = KKTSystem(A, C, rng.standard_normal(n), rng.standard_normal(m))
    x, y = solve_kkt(sys)
    xo, yo = kkt_nullspace(sys)
    assert np.allclose(x, xo, atol=1e-10)
    assert np.allclose(y, yo, atol=1e-9)
    assert sys.residual(x, y) <= 1e-10 * np.linalg.norm(sys.rhs)


@pytest.mark.parametrize('case', ['V', 'E', 'D'])
@pytest.mark.parametrize('level', [0, 1, 2, 4])
def test_patch_kkt_matches_nullspace_oracle(case, level):
    h = refine(build_coarse_mesh(2), 2)
    A = assemble_stiffness(h, sample_field(mstrig_eval, h))
    m = build_measurements(h, case)
    for i in range(m.N):
        A_loc, C_loc, active, pos = local_system(i, A, m, patch(h, m, i, level))
        d = np.zeros(len(active))
        d[pos] = 1
        sys = KKTSystem(A_loc, C_loc, None, d)
        x, _ = KKTFactor(A_loc, C_loc, tol=1e-11).solve(None, d)
        xo, _ = kkt_nullspace(sys)
        assert np.abs(x - xo).max() <= 1e-8 * max(1.0, np.abs(xo).max())
