"""Block-sparse storage helpers, products, and the coarsest-level solver.

Matrices are held as scipy.sparse objects throughout: vector-valued
operators as BSR with dense 3x3 node blocks, couplings as 1x3 blocks,
and monolithic operators as CSR.  This module adds the small amount of
machinery scipy does not provide directly: a finalizing block-matrix
constructor, a symmetrizing Galerkin triple product, and a dense LU
with partial pivoting for the coarsest level of a hierarchy.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from .errors import ShapeError, SingularCoarseMatrix

__all__ = [
    "BlockLayout",
    "BlockSparseMatrix",
    "block_matrix",
    "spmv",
    "spmv_transpose",
    "triple_product",
    "CoarseFactorization",
    "coarse_factor",
    "coarse_solve",
    "write_matrix_market",
    "read_matrix_market",
]

#: Block-sparse matrices are scipy BSR under the hood; kept as a named
#: alias so call sites state the storage contract.
BlockSparseMatrix = sp.bsr_matrix


@dataclass(frozen=True)
class BlockLayout:
    """Partition metadata of a monolithic operator.

    Degrees of freedom are ordered linear-node components, then
    quadratic-node components, then pressure.  Every velocity node
    carries ``block_size`` components (3 for vector fields, 1 for the
    scalar hierarchies used inside the Schur preconditioner).
    """

    n_linear: int
    n_quadratic: int
    n_pressure: int = 0
    block_size: int = 3

    @property
    def n_velocity_nodes(self) -> int:
        return self.n_linear + self.n_quadratic

    @property
    def velocity_dof(self) -> int:
        return self.block_size * self.n_velocity_nodes

    @property
    def total_dof(self) -> int:
        return self.velocity_dof + self.n_pressure

    @property
    def is_saddle(self) -> bool:
        return self.n_pressure > 0


def block_matrix(rows, cols, blocks, shape, block_shape) -> BlockSparseMatrix:
    """Finalize a block-COO triplet into canonical BSR.

    Duplicate blocks are summed, column indices are sorted within each
    row, and explicitly zero blocks are pruned.

    Parameters
    ----------
    rows, cols : int arrays of block indices
    blocks : (nnzb, br, bc) array of dense blocks
    shape : (n_block_rows, n_block_cols)
    block_shape : (br, bc)
    """
    br, bc = block_shape
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    blocks = np.asarray(blocks, dtype=float).reshape(-1, br, bc)
    n, m = shape
    # scatter through a scalar COO (which sums duplicates), then rebuild BSR
    scalar_rows = (rows[:, None] * br + np.repeat(np.arange(br), bc)[None, :]).ravel()
    scalar_cols = (cols[:, None] * bc + np.tile(np.arange(bc), br)[None, :]).ravel()
    mat = sp.coo_matrix(
        (blocks.reshape(len(blocks), -1).ravel(), (scalar_rows, scalar_cols)),
        shape=(n * br, m * bc),
    ).tobsr(blocksize=(br, bc))
    mat.sort_indices()
    # prune all-zero blocks
    keep = np.abs(mat.data).max(axis=(1, 2)) > 0.0
    if not keep.all():
        coo2 = mat.tocoo()
        coo2.eliminate_zeros()
        mat = coo2.tobsr(blocksize=(br, bc))
        mat.sort_indices()
    return mat


def _check_matvec_shapes(m, x, transpose=False):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {x.shape}")
    n_expected = m.shape[0] if transpose else m.shape[1]
    if x.shape[0] != n_expected:
        raise ShapeError(
            f"operand length {x.shape[0]} does not match matrix shape {m.shape}"
        )
    return x


def spmv(m, x: np.ndarray) -> np.ndarray:
    """y = M x with explicit shape checking and deterministic order."""
    x = _check_matvec_shapes(m, x)
    return m @ x


def spmv_transpose(m, x: np.ndarray) -> np.ndarray:
    """y = M^T x with explicit shape checking."""
    x = _check_matvec_shapes(m, x, transpose=True)
    return m.T @ x


def triple_product(p, a, symmetric: bool = False) -> sp.csr_matrix:
    """Galerkin projection ``P^T A P``.

    With ``symmetric=True`` the result is averaged with its transpose so
    roundoff cannot break the symmetry the projection preserves
    mathematically; the sparsity pattern is unchanged by that averaging.
    """
    if p.shape[0] != a.shape[0] or a.shape[0] != a.shape[1]:
        raise ShapeError(f"cannot form P^T A P with A {a.shape} and P {p.shape}")
    coarse = (p.T @ (a @ p)).tocsr()
    if symmetric:
        coarse = ((coarse + coarse.T) * 0.5).tocsr()
    coarse.sort_indices()
    return coarse


@dataclass(frozen=True)
class CoarseFactorization:
    """Dense LU with partial pivoting of a coarsest-level operator.

    The operator is symmetrically equilibrated by its row maxima before
    factoring (``scaling[i] = 1/sqrt(max_j |a_ij|)``), so the pivot
    test stays meaningful for saddle matrices whose velocity and
    pressure blocks differ in magnitude by many orders.
    """

    lu: np.ndarray
    piv: np.ndarray
    scaling: np.ndarray
    n: int


def coarse_factor(a) -> CoarseFactorization:
    """Factor a (small) square operator with dense partial-pivot LU.

    Works for SPD and indefinite saddle matrices alike.  Raises
    ``SingularCoarseMatrix`` if a pivot of the equilibrated matrix
    falls below ``1e-14`` times its largest entry.
    """
    if sp.issparse(a):
        dense = a.toarray()
    else:
        dense = np.array(a, dtype=float)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ShapeError(f"coarse operator must be square, got {dense.shape}")
    row_max = np.abs(dense).max(axis=1)
    if np.any(row_max == 0.0):
        raise SingularCoarseMatrix("coarse operator has an empty row")
    scaling = 1.0 / np.sqrt(row_max)
    scaled = scaling[:, None] * dense * scaling[None, :]
    with warnings.catch_warnings():
        # exact singularity is detected by the pivot check below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(scaled, check_finite=False)
    if np.abs(np.diag(lu)).min() < 1e-14 * np.abs(scaled).max():
        raise SingularCoarseMatrix(
            "coarse operator has a pivot below 1e-14 of its largest entry"
        )
    return CoarseFactorization(lu=lu, piv=piv, scaling=scaling, n=dense.shape[0])


def coarse_solve(f: CoarseFactorization, b: np.ndarray) -> np.ndarray:
    """Back-substitute a coarsest-level factorization."""
    b = np.asarray(b, dtype=float)
    if b.shape != (f.n,):
        raise ShapeError(f"right-hand side shape {b.shape} does not match n={f.n}")
    y = scipy.linalg.lu_solve((f.lu, f.piv), f.scaling * b, check_finite=False)
    return f.scaling * y


def write_matrix_market(path: str, m) -> None:
    """Write a monolithic scalar matrix in Matrix Market coordinate format."""
    scipy.io.mmwrite(path, sp.coo_matrix(m))


def read_matrix_market(path: str) -> sp.csr_matrix:
    """Read a Matrix Market file as CSR."""
    return sp.csr_matrix(scipy.io.mmread(path))
