"""Block-partitioned vectors and self-adjoint operators.

Implements the splitting H = H_d + H_u + H_u^* of a self-adjoint operator on a
product space, the induced Gauss-Seidel operator sGS(H) = H_u H_d^{-1} H_u^*,
the operator H_hat = H + sGS(H) = (H_d + H_u) H_d^{-1} (H_d + H_u^*), and
H-weighted norms.  Storage is dense at the block level; ``BlockOperator`` also
accepts a matrix-free apply so larger blocks can be plugged in later.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import BlockStructureError, IndefiniteOperatorError, SingularBlockError

PSD_RTOL = 1e-12


@dataclass(frozen=True)
class BlockPartition:
    """Sizes of the blocks of a product space X_1 x ... x X_s."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s <= 0 for s in sizes):
            raise BlockStructureError("partition needs a nonempty list of positive block sizes")
        object.__setattr__(self, "sizes", sizes)

    @property
    def nblocks(self):
        return len(self.sizes)

    @property
    def total(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        off = [0]
        for s in self.sizes:
            off.append(off[-1] + s)
        return tuple(off)

    def block_slice(self, i):
        off = self.offsets
        return slice(off[i], off[i + 1])


@dataclass
class BlockVector:
    """A vector in a product space together with its block partition."""

    partition: BlockPartition
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != (self.partition.total,):
            raise BlockStructureError(
                "data length %r does not match partition total %d"
                % (self.data.shape, self.partition.total)
            )

    def block(self, i):
        return self.data[self.partition.block_slice(i)]

    def copy(self):
        return BlockVector(self.partition, self.data.copy())

    @classmethod
    def zeros(cls, partition):
        return cls(partition, np.zeros(partition.total))


class BlockOperator:
    """Self-adjoint linear operator on a product space with block access.

    Either a dense ``matrix`` or a pair of callables (``apply``, ``block``)
    must be supplied.  ``block(i, j)`` returns the dense matrix of the map
    X_j -> X_i.  Diagonal-block Cholesky factors are computed lazily and
    cached, so an operator instance should be treated as immutable after
    construction.
    """

    def __init__(self, partition, matrix=None, apply=None, block=None, psd=False):
        self.partition = partition
        self.psd = bool(psd)
        self._matrix = None
        self._apply = apply
        self._block = block
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=float)
            n = partition.total
            if matrix.shape != (n, n):
                raise BlockStructureError(
                    "matrix shape %r does not match partition total %d" % (matrix.shape, n)
                )
            self._matrix = matrix
        elif apply is None or block is None:
            raise BlockStructureError("need either a dense matrix or apply+block callables")
        self._diag_factors = None
        self._upper = None

    @classmethod
    def from_matrix(cls, partition, matrix, psd=False):
        return cls(partition, matrix=matrix, psd=psd)

    @classmethod
    def identity(cls, partition):
        return cls.from_matrix(partition, np.eye(partition.total), psd=True)

    @property
    def nblocks(self):
        return self.partition.nblocks

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.partition.total,):
            raise BlockStructureError("vector length does not match operator partition")
        if self._matrix is not None:
            return self._matrix @ v
        return np.asarray(self._apply(v), dtype=float)

    def block(self, i, j):
        """Dense matrix of block (i, j); (i, j) with i > j is block(j, i).T."""
        if self._matrix is not None:
            si = self.partition.block_slice(i)
            sj = self.partition.block_slice(j)
            return self._matrix[si, sj]
        return np.asarray(self._block(i, j), dtype=float)

    def to_matrix(self):
        if self._matrix is not None:
            return self._matrix
        n = self.partition.total
        out = np.empty((n, n))
        for i in range(self.nblocks):
            for j in range(self.nblocks):
                out[self.partition.block_slice(i), self.partition.block_slice(j)] = self.block(i, j)
        return out

    # -- cached pieces used by the sGS machinery --------------------------------

    def diag_factor(self, i):
        """Cholesky factor of H_ii (cached)."""
        if self._diag_factors is None:
            self._diag_factors = [None] * self.nblocks
        if self._diag_factors[i] is None:
            Hii = self.block(i, i)
            try:
                self._diag_factors[i] = sla.cho_factor(Hii, lower=True)
            except sla.LinAlgError as exc:
                raise SingularBlockError(i, "H_%d%d is not positive definite: %s" % (i, i, exc))
        return self._diag_factors[i]

    def diag_solve(self, i, rhs):
        return sla.cho_solve(self.diag_factor(i), rhs)

    def upper_matrix(self):
        """Dense strictly-block-upper part H_u (cached)."""
        if self._upper is None:
            n = self.partition.total
            Hu = np.zeros((n, n))
            for i in range(self.nblocks):
                for j in range(i + 1, self.nblocks):
                    Hu[self.partition.block_slice(i), self.partition.block_slice(j)] = self.block(i, j)
            self._upper = Hu
        return self._upper


def _as_block_vector(v, partition):
    if isinstance(v, BlockVector):
        if v.partition.sizes != partition.sizes:
            raise BlockStructureError("vector partition does not match operator partition")
        return v.data
    return np.asarray(v, dtype=float)


def split_blocks(H):
    """Split H into (H_d, H_u) with H = H_d + H_u + H_u^*."""
    part = H.partition
    n = part.total
    Hd = np.zeros((n, n))
    for i in range(part.nblocks):
        s = part.block_slice(i)
        Hd[s, s] = H.block(i, i)
    Hu = H.upper_matrix()
    return (
        BlockOperator.from_matrix(part, Hd, psd=H.psd),
        BlockOperator.from_matrix(part, Hu.copy()),
    )


def apply_upper(H, v):
    """H_u v for the strictly block-upper part of H."""
    v = _as_block_vector(v, H.partition)
    return H.upper_matrix() @ v


def apply_upper_adjoint(H, v):
    """H_u^* v (strictly block-lower apply)."""
    v = _as_block_vector(v, H.partition)
    return H.upper_matrix().T @ v


def diag_solve_all(H, v):
    """H_d^{-1} v using the cached per-block factors."""
    v = _as_block_vector(v, H.partition)
    out = np.empty_like(v)
    for i in range(H.nblocks):
        s = H.partition.block_slice(i)
        out[s] = H.diag_solve(i, v[s])
    return out


def lower_triangular_solve(H, v):
    """(H_d + H_u^*)^{-1} v by forward block substitution."""
    v = _as_block_vector(v, H.partition)
    part = H.partition
    out = np.empty_like(v)
    for i in range(H.nblocks):
        rhs = v[part.block_slice(i)].copy()
        for j in range(i):
            rhs -= H.block(i, j) @ out[part.block_slice(j)]
        out[part.block_slice(i)] = H.diag_solve(i, rhs)
    return out


def upper_triangular_solve(H, v):
    """(H_d + H_u)^{-1} v by backward block substitution."""
    v = _as_block_vector(v, H.partition)
    part = H.partition
    out = np.empty_like(v)
    for i in range(H.nblocks - 1, -1, -1):
        rhs = v[part.block_slice(i)].copy()
        for j in range(i + 1, H.nblocks):
            rhs -= H.block(i, j) @ out[part.block_slice(j)]
        out[part.block_slice(i)] = H.diag_solve(i, rhs)
    return out


def sgs_operator_apply(H, v):
    """Apply sGS(H) = H_u H_d^{-1} H_u^* to v."""
    w = apply_upper_adjoint(H, v)
    w = diag_solve_all(H, w)
    out = apply_upper(H, w)
    if isinstance(v, BlockVector):
        return BlockVector(H.partition, out)
    return out


def hat_operator_apply(H, v):
    """Apply H_hat = (H_d + H_u) H_d^{-1} (H_d + H_u^*) = H + sGS(H) to v."""
    x = _as_block_vector(v, H.partition)
    part = H.partition
    # w = (H_d + H_u^*) v
    w = apply_upper_adjoint(H, x)
    for i in range(part.nblocks):
        s = part.block_slice(i)
        w[s] += H.block(i, i) @ x[s]
    w = diag_solve_all(H, w)
    out = apply_upper(H, w)
    for i in range(part.nblocks):
        s = part.block_slice(i)
        out[s] += H.block(i, i) @ w[s]
    if isinstance(v, BlockVector):
        return BlockVector(part, out)
    return out


def sgs_matrix(H):
    """Dense sGS(H); convenience for desk-scale diagnostics."""
    Hu = H.upper_matrix()
    cols = np.empty_like(Hu)
    for k in range(H.partition.total):
        cols[:, k] = diag_solve_all(H, Hu.T[:, k])
    return Hu @ cols


def hat_matrix(H):
    """Dense H + sGS(H)."""
    return H.to_matrix() + sgs_matrix(H)


def weighted_norm(v, H):
    """||v||_H = sqrt(<v, Hv>) for PSD H, with roundoff clamping near zero."""
    x = _as_block_vector(v, H.partition) if isinstance(v, BlockVector) else np.asarray(v, float)
    q = float(x @ H.apply(x))
    scale = float(x @ x)
    if q < -PSD_RTOL * max(scale, 1e-300):
        raise IndefiniteOperatorError(
            "quadratic form %.3e is negative beyond tolerance for a declared PSD operator" % q
        )
    return np.sqrt(max(q, 0.0))
