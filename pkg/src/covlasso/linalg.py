"""Dense symmetric linear algebra used by every other module.

All heavy lifting is delegated to LAPACK through ``numpy.linalg.eigh``;
this module adds the conventions the rest of the package relies on:
eigenvalues sorted in descending order, roundoff-scale negative
eigenvalues clamped to zero, and explicit floor/ridge handling so
near-singular second-moment matrices degrade predictably instead of
blowing up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, InvalidMatrix, SingularMatrix

# Relative spectral floor: eigenvalues below REL * largest_eigenvalue are
# treated as zero wherever a floor applies.  Overridable per call site.
DEFAULT_EIG_FLOOR_REL = 1e-12

# Eigenvalues of a PSD-by-construction matrix may come back slightly
# negative from roundoff.  Anything within -NEG_EIG_BAND * max|S| of zero
# is clamped; genuinely indefinite input keeps its negative eigenvalues
# so the reconstruction identity still holds.
NEG_EIG_BAND = 1e-8


def _as_square_float(mat) -> np.ndarray:
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InvalidMatrix("matrix must have at least one row")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("matrix has non-finite entries")
    return arr


@dataclass(frozen=True)
class SymmetricMatrix:
    """A real symmetric matrix stored as an immutable float64 array.

    Construction symmetrizes the input as ``(M + M.T) / 2`` so tiny
    asymmetries from accumulation order cannot leak downstream.
    """

    data: np.ndarray

    def __init__(self, data):
        arr = _as_square_float(data)
        arr = (arr + arr.T) / 2.0
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data)))


@dataclass(frozen=True)
class Eigendecomposition:
    """Spectral decomposition S = Q diag(eigenvalues) Q^T.

    eigenvalues are sorted in descending order and eigenvectors are the
    matching orthonormal columns.  ``clamped_count`` and
    ``min_raw_eigenvalue`` record how much roundoff-negative spectrum was
    snapped to zero during :func:`eigendecompose`.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clamped_count: int = 0
    min_raw_eigenvalue: float = 0.0

    def __post_init__(self):
        self.eigenvalues.flags.writeable = False
        self.eigenvectors.flags.writeable = False

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def eigendecompose(sym: SymmetricMatrix) -> Eigendecomposition:
    """Eigendecompose a symmetric matrix, descending eigenvalue order.

    Negative eigenvalues no larger in magnitude than
    ``NEG_EIG_BAND * max|S|`` are artifacts of roundoff on a PSD matrix
    and are clamped to exactly zero; the count and the most negative raw
    value are kept as diagnostics.  Larger negative eigenvalues are
    preserved so ``Q diag(vals) Q^T`` still reconstructs the input.
    """
    vals, vecs = np.linalg.eigh(sym.data)
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    min_raw = float(vals.min())
    band = NEG_EIG_BAND * sym.max_abs()
    clamp = (vals < 0.0) & (vals >= -band)
    n_clamped = int(clamp.sum())
    if n_clamped:
        vals[clamp] = 0.0
    return Eigendecomposition(vals, vecs, n_clamped, min_raw)


def sym_sqrt(eig: Eigendecomposition, floor: float = 0.0) -> SymmetricMatrix:
    """Symmetric square root Q diag(sqrt(max(vals, floor))) Q^T.

    A positive ``floor`` regularizes (near-)singular input; with
    ``floor=0`` any residual negative eigenvalue contributes zero.
    """
    if floor < 0.0:
        raise InvalidMatrix("floor must be nonnegative")
    vals = np.maximum(eig.eigenvalues, floor)
    root = np.sqrt(vals)
    return SymmetricMatrix((eig.eigenvectors * root) @ eig.eigenvectors.T)


def log_det(eig: Eigendecomposition, floor: float = 0.0) -> float:
    """Log-determinant computed in log space as sum(log(max(vals, floor))).

    Raises SingularMatrix when ``floor`` is zero and the spectrum touches
    zero (or is negative), since the log-determinant is then undefined.
    """
    if floor < 0.0:
        raise InvalidMatrix("floor must be nonnegative")
    vals = np.maximum(eig.eigenvalues, floor)
    if np.any(vals <= 0.0):
        raise SingularMatrix(
            "log_det undefined: nonpositive eigenvalue with floor=0"
        )
    return float(np.sum(np.log(vals)))


def solve_spd(
    sym: SymmetricMatrix,
    rhs: np.ndarray,
    ridge: float = 0.0,
    floor: float = 0.0,
) -> np.ndarray:
    """Solve (S + ridge I) x = rhs through the eigendecomposition of S.

    ``floor`` lifts eigenvalues of S before the ridge is added, which is
    how callers opt into the package-wide spectral flooring policy.  If
    any effective eigenvalue stays below 1e-300 the system is reported
    as singular rather than silently overflowing.
    """
    b = np.asarray(rhs, dtype=np.float64)
    if b.shape != (sym.n,):
        raise DimMismatch(f"rhs shape {b.shape} does not match matrix order {sym.n}")
    if not np.all(np.isfinite(b)):
        raise InvalidMatrix("rhs has non-finite entries")
    eig = eigendecompose(sym)
    effective = np.maximum(eig.eigenvalues, floor) + ridge
    if np.min(effective) < 1e-300:
        raise SingularMatrix(
            f"matrix numerically singular: smallest effective eigenvalue "
            f"{np.min(effective):.3e}"
        )
    q = eig.eigenvectors
    return q @ ((q.T @ b) / effective)


def relative_floor(eig: Eigendecomposition, rel: float = DEFAULT_EIG_FLOOR_REL) -> float:
    """Absolute floor corresponding to a relative spectral threshold."""
    top = float(eig.eigenvalues[0]) if eig.n else 0.0
    return rel * max(top, 0.0)
