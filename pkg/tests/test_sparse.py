import io
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestkrylov.precision import Precision
from nestkrylov.sparse import (
    CsrMatrix,
    MatrixMarketError,
    PrecisionReplicas,
    ScalingError,
    StencilSpec,
    axpy,
    diagonal_scale,
    dot,
    from_coo,
    generate_stencil,
    norm2,
    read_matrix_market,
    residual,
    spmv,
    write_matrix_market,
)

FIX = Path(__file__).parent / "fixtures"
P16, P32, P64 = Precision.P16, Precision.P32, Precision.P64


def test_read_identity():
    A = read_matrix_market(FIX / "identity2.mtx")
    assert A.n == 2 and A.nnz == 2
    assert np.array_equal(A.diagonal(), [1.0, 1.0])


def test_symmetric_expansion_matches_hand_expanded_fixture():
    A = read_matrix_market(FIX / "tridiag_lower.mtx")
    B = read_matrix_market(FIX / "tridiag_full.mtx")
    assert A.nnz == 7
    assert np.array_equal(A.to_dense(), B.to_dense())
    A.validate()


def test_out_of_bounds():
    with pytest.raises(MatrixMarketError, match="index out of bounds"):
        read_matrix_market(FIX / "out_of_bounds.mtx")


@pytest.mark.parametrize("text,msg", [
    ("%%MatrixMarket matrix array real general\n2 2\n1\n0\n0\n1\n", "malformed header"),
    ("%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n", "not square"),
    ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n", "expected 2 entries"),
])
def test_parse_errors(text, msg):
    with pytest.raises(MatrixMarketError, match=msg):
        read_matrix_market(io.StringIO(text))


def test_duplicates_summed_and_pattern():
    text = "%%MatrixMarket matrix coordinate pattern general\n2 2 3\n1 1\n2 2\n1 1\n"
    A = read_matrix_market(io.StringIO(text))
    assert np.array_equal(A.to_dense(), [[2.0, 0.0], [0.0, 1.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.data())
def test_write_read_round_trip(n, data):
    dense = np.array(data.draw(st.lists(
        st.lists(st.one_of(st.just(0.0), st.floats(-1e6, 1e6, allow_subnormal=False)), min_size=n, max_size=n),
        min_size=n, max_size=n)))
    A = CsrMatrix.from_dense(dense)
    buf = io.StringIO()
    write_matrix_market(A, buf)
    buf.seek(0)
    B = read_matrix_market(buf)
    assert np.array_equal(B.to_dense(), A.to_dense())


def test_stencil_small_grid():
    A = generate_stencil(StencilSpec(1, 1, 1))
    assert A.n == 8
    assert np.all(np.diff(A.row_ptr) == 8)
    assert np.all(A.diagonal() == 26)
    A.validate()


def _interior(spec):
    nx, ny, nz = 1 << spec.log2_nx, 1 << spec.log2_ny, 1 << spec.log2_nz
    z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    inner = (x > 0) & (x < nx - 1) & (y > 0) & (y < ny - 1) & (z > 0) & (z < nz - 1)
    return inner.ravel()


@pytest.mark.parametrize("beta", [0.0, 0.5])
def test_stencil_interior_rows(beta):
    spec = StencilSpec(3, 3, 3, beta)
    A = generate_stencil(spec)
    assert A.n == 512
    inner = _interior(spec)
    counts = np.diff(A.row_ptr.astype(np.int64))
    assert np.all(counts[inner] == 27)
    y = spmv(A, np.ones(A.n))
    assert np.max(np.abs(y[inner])) <= 1e-12
    assert A.is_symmetric() == (beta == 0.0)


def test_stencil_beta_placement():
    A = generate_stencil(StencilSpec(2, 2, 2, 0.5)).to_dense()
    i = 1 + 4 * (1 + 4 * 1)  # interior point (1,1,1)
    assert A[i, i + 16] == -0.5 and A[i, i - 16] == -1.5
    assert A[i, i + 1] == -1.0 and A[i, i + 17] == -1.0


def test_stencil_names():
    assert StencilSpec.parse("hpcg_5_5_5").beta == 0.0
    assert StencilSpec.parse("hpgmp_5_4_3", hpgmp_beta=0.25) == StencilSpec(5, 4, 3, 0.25)
    assert StencilSpec(5, 4, 3, 0.25).name == "hpgmp_5_4_3"
    for bad in ("hpcg_0_1_1", "hpcg_11_1_1"):
        with pytest.raises(ValueError):
            StencilSpec.parse(bad)
    with pytest.raises(ValueError):
        StencilSpec(1, 1, 1, 1.0)


def test_diagonal_scale_examples():
    A = CsrMatrix.from_dense(np.diag([4.0, 9.0]))
    As, bs, d = diagonal_scale(A, np.array([2.0, 3.0]))
    assert np.array_equal(As.to_dense(), np.eye(2))
    assert np.allclose(d, [0.5, 1 / 3], rtol=0, atol=1e-16)
    assert np.allclose(bs, [1.0, 1.0])
    S, _, _ = diagonal_scale(generate_stencil(StencilSpec(2, 2, 2)))
    Sd = S.to_dense()
    assert np.all(np.diag(Sd) == 1.0)
    off = Sd[~np.eye(S.n, dtype=bool)]
    assert set(np.unique(off)) <= {0.0, -1 / 26}
    with pytest.raises(ScalingError, match="row 1"):
        diagonal_scale(CsrMatrix.from_dense([[0.0, 1.0], [1.0, 2.0]]))


def test_diagonal_scale_preserves_solution(rng):
    M = np.eye(6) * 5 + rng.standard_normal((6, 6))
    b = rng.standard_normal(6)
    As, bs, d = diagonal_scale(CsrMatrix.from_dense(M), b)
    y = np.linalg.solve(As.to_dense(), bs)
    assert np.allclose(d * y, np.linalg.solve(M, b))


def test_spmv_examples():
    I3 = CsrMatrix.identity(3)
    assert np.array_equal(spmv(I3, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
    A = CsrMatrix.from_dense([[3.0]], P32)
    x = np.array([0.1], dtype=np.float32)
    y = spmv(A, x)
    assert y.dtype == np.float32 and y[0] == np.float32(3) * np.float32(0.1)


def test_spmv_exact_in_half():
    A = generate_stencil(StencilSpec(2, 2, 2))
    vals = np.where(A.values == 26, 2.0, -1.0)
    A64 = CsrMatrix(A.n, A.row_ptr, A.col_idx, vals)
    A16 = A64.astype(P16)
    y = spmv(A16, np.ones(A.n, dtype=np.float32))
    assert y.dtype == np.float32
    assert np.array_equal(y.astype(np.float64), spmv(A64, np.ones(A.n)))


def test_spmv_matches_scipy(rng):
    A = generate_stencil(StencilSpec(3, 2, 2, 0.3))
    x = rng.standard_normal(A.n)
    assert np.allclose(spmv(A, x), A.to_scipy() @ x, rtol=1e-14, atol=1e-12)


def test_vector_kernels():
    assert dot(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0
    assert norm2(np.array([3.0, 4.0])) == 5
    assert np.array_equal(axpy(2.0, np.ones(2), np.array([0.0, 1.0])), [2.0, 3.0])
    h = np.ones(4, dtype=np.float16)
    assert dot(h, h).dtype == np.float16
    assert dot(h, np.ones(4, dtype=np.float32)).dtype == np.float32
    with pytest.raises(ValueError):
        dot(np.ones(2), np.ones(3))


def test_residual_precision():
    A = CsrMatrix.identity(3).astype(P16)
    x = np.ones(3, dtype=np.float32)
    r = residual(A, x, np.full(3, 2.0, dtype=np.float32))
    assert r.dtype == np.float32 and np.array_equal(r, np.ones(3))


def test_replicas_within_unit_roundoff():
    A = generate_stencil(StencilSpec(2, 2, 2, 0.5))
    As, _, _ = diagonal_scale(A)
    R = PrecisionReplicas(As)
    for p in (P32, P16):
        lo = R[p].values.astype(np.float64)
        assert np.all(np.abs(lo - As.values) <= p.unit_roundoff * np.abs(As.values))
        assert R[p].values.dtype == p.dtype


def test_from_coo_sorted_and_summed():
    A = from_coo(3, [2, 0, 2, 2], [1, 0, 0, 1], [1.0, 2.0, 3.0, 4.0])
    A.validate()
    assert np.array_equal(A.to_dense(), [[2, 0, 0], [0, 0, 0], [3, 5, 0]])
    assert A.row_ptr.dtype == np.uint32 and A.col_idx.dtype == np.uint32
