import math

import numpy as np
import pytest
import scipy.sparse as sp

from grps.basis import build_all, energy_norms, full_level
from grps.coeff import mstrig_eval, sample_field
from grps.errors import DegenerateBasis
from grps.fem import assemble_load, fine_operator, norms, reference_solve
from grps.homog import (CSV_FIELDS, ErrorReport, Study, assemble_coarse, converge_study,
                        solve_coarse)
from grps.measurements import build_measurements
from grps.mesh import build_coarse_mesh, refine


def sin1(x, y):
    return np.sin(x)


def _problem(Nc, J, case, level, kappa=mstrig_eval):
    h = refine(build_coarse_mesh(Nc), J)
    op = fine_operator(h, sample_field(kappa, h))
    b = assemble_load(h, sin1)
    m = build_measurements(h, case)
    B = build_all(level, op.A, m, h)
    return h, op, b, m, B


def test_congruence_matches_dense_oracle():
    h, op, b, m, B = _problem(2, 2, 'V', 1, kappa=1.0)
    sys = assemble_coarse(op.A, op.M, b, B)
    P = B.matrix.toarray()
    ref_A = P @ op.A.toarray() @ P.T
    ref_M = P @ op.M.toarray() @ P.T
    assert np.abs(sys.A_H - ref_A).max() <= 1e-12 * np.abs(ref_A).max()
    assert np.abs(sys.M_H - ref_M).max() <= 1e-12 * np.abs(ref_M).max()
    assert np.allclose(sys.b_H, P @ b, rtol=0, atol=1e-15)
    assert np.array_equal(sys.A_H, sys.A_H.T)


def test_duplicated_basis_vector_is_degenerate():
    h, op, b, m, B = _problem(2, 2, 'V', 1)
    P = sp.vstack([B.matrix, B.matrix[3]], format='csr')
    with pytest.raises(DegenerateBasis):
        assemble_coarse(op.A, None, b, P)


def test_zero_load():
    h, op, b, m, B = _problem(2, 2, 'D', 1)
    sys = assemble_coarse(op.A, None, np.zeros(op.n), B)
    assert not sys.b_H.any()
    c, u = solve_coarse(sys)
    assert not c.any() and not u.any()


@pytest.mark.parametrize('case', ['V', 'E', 'D'])
def test_global_basis_identity(case):
    h = refine(build_coarse_mesh(2), 3)
    op = fine_operator(h, sample_field(mstrig_eval, h))
    b = assemble_load(h, sin1)
    u_ref = reference_solve(op, b)
    m = build_measurements(h, case)
    B = build_all(full_level(h), op.A, m, h)
    _, u_H = solve_coarse(assemble_coarse(op.A, None, b, B))
    interp = B.expand(m.apply(u_ref))
    diff = norms(op, u_H - interp)['energy'] / norms(op, interp)['energy']
    assert diff <= 1e-7


@pytest.fixture(scope='module')
def localized():
    h, op, b, m, B = _problem(4, 2, 'D', 1)
    u_ref = reference_solve(op, b)
    sys = assemble_coarse(op.A, None, b, B)
    c, u_H = solve_coarse(sys)
    return op, B, u_ref, c, u_H


def test_galerkin_orthogonality(localized):
    op, B, u_ref, c, u_H = localized
    r = B.matrix @ (op.A @ (u_ref - u_H))
    scale = energy_norms(op.A, B.matrix) * norms(op, u_ref)['energy']
    assert np.all(np.abs(r) <= 1e-8 * scale)


def test_best_approximation(localized):
    op, B, u_ref, c, u_H = localized
    best = norms(op, u_ref - u_H)['energy']
    rng = np.random.default_rng(0)
    for _ in range(10):
        v = B.expand(c + 1e-2 * np.abs(c).max() * rng.standard_normal(B.N))
        assert best <= norms(op, u_ref - v)['energy']


def test_converge_study_small():
    reps = converge_study('V', mstrig_eval, sin1, [2, 4], [1, 2], fine_level=4)
    assert [(r.Nc, r.level) for r in reps] == [(2, 1), (2, 2), (4, 1), (4, 2)]
    for r in reps:
        assert r.error == ''
        assert r.J == 4 - int(math.log2(r.Nc))
        assert 0 <= r.rel_h1 <= 1 and 0 <= r.rel_energy <= 1
        assert len(r.row()) == len(CSV_FIELDS)
    assert reps[0].N_dof == 8 and reps[2].N_dof == 32
    # a larger patch does not hurt
    assert reps[3].rel_h1 <= 1.05 * reps[2].rel_h1


def test_converge_study_records_failed_cells():
    # J = 3 - 2 = 1 is rejected for case E; Nc = 3 is not a power of two
    reps = converge_study('E', mstrig_eval, sin1, [2, 4, 3], [1], fine_level=3)
    assert reps[0].error == '' and reps[0].rel_h1 < 1
    assert reps[1].error and math.isnan(reps[1].rel_h1)
    assert reps[2].error and math.isnan(reps[2].rel_h1)


def test_study_shares_fine_reference():
    st = Study(mstrig_eval, sin1, fine_level=4)
    st.run('V', 2, 1)
    fine = st._fine
    st.run('V', 4, 1)
    assert st._fine is fine


def test_error_report_row_order():
    r = ErrorReport('D', 8, 4, 6, 304, 1.0, 0.5, 2.0, 0.25, 3.0, 4.0)
    assert r.row() == ['D', 8, 4, 6, 304, 1.0, 0.5, 2.0, 0.25, 3.0, 4.0]
