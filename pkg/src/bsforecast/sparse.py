"""Minimal coordinate-format sparse matrix.

Only what the operator assembly and the least-squares solver need: matvec,
transpose matvec, Kronecker products, row scaling, row zeroing and
extraction of a sub-block. Entries are kept sorted row-major with no
duplicate coordinates and no explicit zeros.
"""

from __future__ import annotations

import numpy as np


class SparseMatrix:
    __slots__ = ("shape", "rows", "cols", "vals")

    def __init__(self, shape, rows, cols, vals):
        nrows, ncols = int(shape[0]), int(shape[1])
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols and vals must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols:
                raise IndexError(f"entry index out of range for shape {(nrows, ncols)}")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                k = int(np.argmax(dup))
                raise ValueError(f"duplicate coordinate ({rows[k]}, {cols[k]})")
        keep = vals != 0.0
        self.shape = (nrows, ncols)
        self.rows, self.cols, self.vals = rows[keep], cols[keep], vals[keep]
        for a in (self.rows, self.cols, self.vals):
            a.setflags(write=False)

    @classmethod
    def from_summed(cls, shape, rows, cols, vals) -> "SparseMatrix":
        """Build from triplets, summing values that share a coordinate."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if rows.size == 0:
            return cls(shape, rows, cols, vals)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        start = np.ones(rows.size, dtype=bool)
        start[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        idx = np.flatnonzero(start)
        return cls(shape, rows[idx], cols[idx], np.add.reduceat(vals, idx))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        k = np.arange(n)
        return cls((n, n), k, k, np.ones(n))

    @classmethod
    def diag(cls, d) -> "SparseMatrix":
        d = np.asarray(d, dtype=float)
        k = np.arange(d.size)
        return cls((d.size, d.size), k, k, d)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=float)
        r, c = np.nonzero(a)
        return cls(a.shape, r, c, a[r, c])

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def triplets(self):
        """Iterate ``(row, col, value)`` in row-major order."""
        for r, c, v in zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist()):
            yield r, c, v

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.shape[1],):
            raise ValueError(f"matvec: expected vector of length {self.shape[1]}, got shape {x.shape}")
        return np.bincount(self.rows, weights=self.vals * x[self.cols], minlength=self.shape[0])

    def rmatvec(self, y) -> np.ndarray:
        """``A.T @ y``."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.shape[0],):
            raise ValueError(f"rmatvec: expected vector of length {self.shape[0]}, got shape {y.shape}")
        return np.bincount(self.cols, weights=self.vals * y[self.rows], minlength=self.shape[1])

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix((self.shape[1], self.shape[0]), self.cols, self.rows, self.vals)

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def row_norms(self) -> np.ndarray:
        return np.sqrt(np.bincount(self.rows, weights=self.vals**2, minlength=self.shape[0]))

    def scale_rows(self, d) -> "SparseMatrix":
        """``diag(d) @ A``."""
        d = np.asarray(d, dtype=float)
        if d.shape != (self.shape[0],):
            raise ValueError("scale_rows: length mismatch")
        return SparseMatrix(self.shape, self.rows, self.cols, self.vals * d[self.rows])

    def zero_rows(self, mask) -> "SparseMatrix":
        mask = np.asarray(mask, dtype=bool)
        keep = ~mask[self.rows]
        return SparseMatrix(self.shape, self.rows[keep], self.cols[keep], self.vals[keep])

    def submatrix(self, row_idx, col_idx) -> "SparseMatrix":
        """Block ``A[row_idx][:, col_idx]`` with rows/columns renumbered in the given order."""
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        rmap = np.full(self.shape[0], -1, dtype=np.int64)
        cmap = np.full(self.shape[1], -1, dtype=np.int64)
        rmap[row_idx] = np.arange(row_idx.size)
        cmap[col_idx] = np.arange(col_idx.size)
        r, c = rmap[self.rows], cmap[self.cols]
        keep = (r >= 0) & (c >= 0)
        return SparseMatrix((row_idx.size, col_idx.size), r[keep], c[keep], self.vals[keep])

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return SparseMatrix.from_summed(
            self.shape,
            np.concatenate([self.rows, other.rows]),
            np.concatenate([self.cols, other.cols]),
            np.concatenate([self.vals, other.vals]),
        )

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )

    __hash__ = None


def kron(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    """Kronecker product: entry ``(ar*pb + br, ac*qb + bc) = a[ar, ac] * b[br, bc]``."""
    pb, qb = b.shape
    rows = (a.rows[:, None] * pb + b.rows[None, :]).ravel()
    cols = (a.cols[:, None] * qb + b.cols[None, :]).ravel()
    vals = (a.vals[:, None] * b.vals[None, :]).ravel()
    return SparseMatrix((a.shape[0] * pb, a.shape[1] * qb), rows, cols, vals)
