"""Assembly of the discrete Black-Scholes operator and the reduced least-squares system.

The operator acts on serialized grid vectors (``k = j*M + i``)::

    L = kron(Dt, I) + R @ kron(I, Dss)

where ``Dt`` is the backward time difference, ``Dss`` the central second
difference in s and ``R`` the diagonal of ``sigma(t_j)**2 / 2 * s_i**2``.
At an interior node this is the four-point "T" stencil

    (u[i,j] - u[i,j-1]) / dt + sigma(t_j)**2/2 * s_i**2 * (u[i+1,j] - 2u[i,j] + u[i-1,j]) / ds**2

Rows on the initial line and on the two price boundaries are zeroed, the
prescribed values are moved to the right-hand side and the corresponding
unknowns are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .grid import BoundaryData, GridSpec, tabulate_F
from .sparse import SparseMatrix, kron


def build_Dt(M: int, dt: float) -> SparseMatrix:
    if M < 2 or not dt > 0:
        raise ValueError(f"build_Dt needs M >= 2 and dt > 0, got M={M}, dt={dt}")
    r = np.arange(1, M)
    rows = np.concatenate([r, r])
    cols = np.concatenate([r - 1, r])
    vals = np.concatenate([np.full(M - 1, -1.0 / dt), np.full(M - 1, 1.0 / dt)])
    return SparseMatrix((M, M), rows, cols, vals)


def build_Dss(M: int, ds: float) -> SparseMatrix:
    if M < 3 or not ds > 0:
        raise ValueError(f"build_Dss needs M >= 3 and ds > 0, got M={M}, ds={ds}")
    h2 = 1.0 / ds**2
    r = np.arange(1, M - 1)
    rows = np.concatenate([r, r, r])
    cols = np.concatenate([r - 1, r, r + 1])
    vals = np.concatenate([np.full(M - 2, h2), np.full(M - 2, -2.0 * h2), np.full(M - 2, h2)])
    return SparseMatrix((M, M), rows, cols, vals)


def diffusion_coefficients(spec: GridSpec, bd: BoundaryData) -> np.ndarray:
    """``sigma(t_j)**2 / 2 * s_i**2`` serialized over the grid."""
    sig = np.asarray(bd.sigma(spec.t), dtype=float)
    coef = 0.5 * sig[:, None] ** 2 * spec.s[None, :] ** 2  # [j, i]
    return coef.reshape(-1)


def build_R(spec: GridSpec, bd: BoundaryData) -> SparseMatrix:
    return SparseMatrix.diag(diffusion_coefficients(spec, bd))


def boundary_mask(M: int) -> np.ndarray:
    """True at serialized indices on the initial line j=0 or on i=0 / i=M-1."""
    j, i = np.divmod(np.arange(M * M), M)
    return (j == 0) | (i == 0) | (i == M - 1)


def build_L(spec: GridSpec, bd: BoundaryData) -> SparseMatrix:
    M = spec.M
    eye = SparseMatrix.identity(M)
    time_part = kron(build_Dt(M, spec.dt), eye)
    space_part = kron(eye, build_Dss(M, spec.ds)).scale_rows(diffusion_coefficients(spec, bd))
    # the raw sum leaves Dss rows alive on j=0; the residual is only summed over interior nodes
    return (time_part + space_part).zero_rows(boundary_mask(M))


@dataclass(frozen=True)
class IndexMap:
    full_to_reduced: np.ndarray  # -1 on boundary indices
    reduced_to_full: np.ndarray

    @classmethod
    def for_grid(cls, M: int) -> "IndexMap":
        interior = np.flatnonzero(~boundary_mask(M))
        f2r = np.full(M * M, -1, dtype=np.int64)
        f2r[interior] = np.arange(interior.size)
        return cls(full_to_reduced=f2r, reduced_to_full=interior)

    @property
    def n_reduced(self) -> int:
        return int(self.reduced_to_full.size)

    @property
    def n_full(self) -> int:
        return int(self.full_to_reduced.size)


@dataclass(frozen=True)
class AssembledSystem:
    """Reduced problem ``min ||L u - b||^2 + beta ||u - F||^2`` over interior unknowns."""

    spec: GridSpec
    L_reduced: SparseMatrix
    b_reduced: np.ndarray
    F_reduced: np.ndarray
    u_bd: np.ndarray
    map: IndexMap
    row_norms: np.ndarray
    normalized: bool = False

    @property
    def n(self) -> int:
        return self.map.n_reduced

    def scatter(self, u_reduced) -> np.ndarray:
        """Full grid vector: prescribed boundary values plus the reduced unknowns."""
        u_reduced = np.asarray(u_reduced, dtype=float)
        if u_reduced.shape != (self.n,):
            raise ValueError(f"expected {self.n} reduced values, got shape {u_reduced.shape}")
        full = self.u_bd.copy()
        full[self.map.reduced_to_full] = u_reduced
        return full


def boundary_vector(spec: GridSpec, bd: BoundaryData) -> np.ndarray:
    M = spec.M
    u = np.zeros((M, M))  # [j, i]
    t = spec.t
    u[:, 0] = bd.u_b(t)
    u[:, -1] = bd.u_a(t)
    # the initial line owns the corners
    u[0, :] = bd.f(spec.s)
    u[0, 0] = bd.u_b(0.0)
    u[0, -1] = bd.u_a(0.0)
    return u.reshape(-1)


def reduce_system(L: SparseMatrix, spec: GridSpec, bd: BoundaryData) -> AssembledSystem:
    M = spec.M
    if L.shape != (M * M, M * M):
        raise ValueError(f"operator shape {L.shape} does not match grid M={M}")
    imap = IndexMap.for_grid(M)
    u_bd = boundary_vector(spec, bd)
    b_full = -L.matvec(u_bd)
    interior = imap.reduced_to_full
    F_full = tabulate_F(spec, bd).values
    u_bd.setflags(write=False)
    return AssembledSystem(
        spec=spec,
        L_reduced=L.submatrix(interior, interior),
        b_reduced=b_full[interior],
        F_reduced=F_full[interior].copy(),
        u_bd=u_bd,
        map=imap,
        row_norms=np.ones(interior.size),
    )


def normalize_rows(sys: AssembledSystem) -> AssembledSystem:
    """Scale every nonzero row of ``(L, b)`` to unit Euclidean norm.

    Zero rows are left alone and recorded with norm 0. ``row_norms`` accumulates
    across repeated calls so the original scaling can still be recovered.
    """
    norms = sys.L_reduced.row_norms()
    nonzero = norms > 0
    inv = np.zeros_like(norms)
    inv[nonzero] = 1.0 / norms[nonzero]
    scale = np.where(nonzero, inv, 1.0)
    return replace(
        sys,
        L_reduced=sys.L_reduced.scale_rows(scale),
        b_reduced=sys.b_reduced * scale,
        row_norms=np.where(nonzero, sys.row_norms * norms, 0.0),
        normalized=True,
    )


def assemble(spec: GridSpec, bd: BoundaryData, row_normalize: bool = True) -> AssembledSystem:
    sys = reduce_system(build_L(spec, bd), spec, bd)
    return normalize_rows(sys) if row_normalize else sys


def dump_triplets(sys: AssembledSystem, path) -> None:
    """Write ``L``, ``b`` and ``F`` as ``row col value`` text for offline inspection.

    Matrix entries use their (row, col); ``b`` and ``F`` follow in sections
    introduced by ``# b`` and ``# F`` with one ``index value`` pair per line.
    """
    lines = [f"# N_r={sys.n}", "# L"]
    lines += [f"{r} {c} {v!r}" for r, c, v in sys.L_reduced.triplets()]
    lines.append("# b")
    lines += [f"{k} {v!r}" for k, v in enumerate(sys.b_reduced.tolist())]
    lines.append("# F")
    lines += [f"{k} {v!r}" for k, v in enumerate(sys.F_reduced.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_triplets(path) -> tuple[SparseMatrix, np.ndarray, np.ndarray]:
    section = None
    n = None
    rows, cols, vals = [], [], []
    vectors = {"b": {}, "F": {}}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("# N_r="):
            n = int(line.split("=", 1)[1])
        elif line.startswith("#"):
            section = line[1:].strip()
        elif section == "L":
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
        else:
            k, v = line.split()
            vectors[section][int(k)] = float(v)
    if n is None:
        raise ValueError(f"{path}: missing '# N_r=' header")
    b = np.array([vectors["b"][k] for k in range(n)])
    F = np.array([vectors["F"][k] for k in range(n)])
    return SparseMatrix((n, n), rows, cols, vals), b, F
