"""Second-moment accumulation over logit samples.

The central object is the uncentered second-moment matrix
E[f(x) f(x)^T] of per-sample logit vectors; nothing here subtracts a
mean or normalizes scales.  Accumulation walks samples in a fixed order
with Neumaier-compensated summation per matrix entry, so splitting a
sample stream into batches cannot change the result and merging
partial accumulators is reproducible to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatch,
    DimTooSmall,
    EmptyAccumulator,
    InvalidInput,
    InvalidLabels,
    OutOfRange,
)
from .linalg import SymmetricMatrix


@dataclass(frozen=True)
class LogitMatrix:
    """N samples of n per-category logits, optionally labeled and named."""

    data: np.ndarray
    labels: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __init__(self, data, labels=None, names=None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidInput(f"logit data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInput("logit data must have at least one row and column")
        if not np.all(np.isfinite(arr)):
            raise InvalidInput("logit data has non-finite entries")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

        if labels is not None:
            lab = np.asarray(labels)
            if lab.shape != (arr.shape[0],):
                raise InvalidLabels(
                    f"labels shape {lab.shape} does not match sample count {arr.shape[0]}"
                )
            if not np.issubdtype(lab.dtype, np.integer):
                raise InvalidLabels("labels must be integers")
            lab = lab.astype(np.int64)
            if lab.min() < 0 or lab.max() >= arr.shape[1]:
                raise InvalidLabels(
                    f"labels must lie in [0, {arr.shape[1]}), got range "
                    f"[{lab.min()}, {lab.max()}]"
                )
            lab.flags.writeable = False
            labels = lab
        object.__setattr__(self, "labels", labels)

        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != arr.shape[1]:
                raise InvalidInput(
                    f"expected {arr.shape[1]} category names, got {len(names)}"
                )
        object.__setattr__(self, "names", names)

    @property
    def samples(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]


class CovAccumulator:
    """Running compensated sum of outer products f f^T.

    Keeps the Neumaier pair (sums, comp) per entry; the mathematically
    accumulated value is ``sums + comp``.
    """

    __slots__ = ("n", "count", "sums", "comp")

    def __init__(self, n: int):
        if n < 1:
            raise DimTooSmall("accumulator needs at least one category")
        self.n = int(n)
        self.count = 0
        self.sums = np.zeros((n, n))
        self.comp = np.zeros((n, n))

    def _add_term(self, term: np.ndarray) -> None:
        # Neumaier update: the branch keeps the low-order bits of
        # whichever addend loses precision in sums + term.
        t = self.sums + term
        lost = np.where(
            np.abs(self.sums) >= np.abs(term),
            (self.sums - t) + term,
            (term - t) + self.sums,
        )
        self.comp += lost
        self.sums = t


def new_accumulator(n: int) -> CovAccumulator:
    return CovAccumulator(n)


def accumulate(acc: CovAccumulator, batch: LogitMatrix) -> CovAccumulator:
    """Fold a batch of samples into the accumulator, row by row in order.

    Because every sample is added individually, any partitioning of the
    same stream into batches produces bit-identical accumulator state.
    """
    if batch.n != acc.n:
        raise DimMismatch(
            f"batch has {batch.n} categories, accumulator expects {acc.n}"
        )
    for row in batch.data:
        acc._add_term(np.outer(row, row))
        acc.count += 1
    return acc


def merge(a: CovAccumulator, b: CovAccumulator) -> CovAccumulator:
    """Combine two partial accumulators into the first one.

    The second accumulator's (sums, comp) pair is folded in through the
    same compensated update used per sample, so merge agrees with
    sequential accumulation exactly on roundoff-free data and to
    compensation accuracy otherwise.
    """
    if a.n != b.n:
        raise DimMismatch(f"cannot merge accumulators of order {a.n} and {b.n}")
    a._add_term(b.sums)
    a._add_term(b.comp)
    a.count += b.count
    return a


@dataclass(frozen=True)
class CovMatrix:
    """Finalized second-moment matrix with its sample count."""

    mat: SymmetricMatrix
    sample_count: int

    @property
    def n(self) -> int:
        return self.mat.n


def finalize(acc: CovAccumulator) -> CovMatrix:
    if acc.count == 0:
        raise EmptyAccumulator("no samples accumulated")
    return CovMatrix(SymmetricMatrix((acc.sums + acc.comp) / acc.count), acc.count)


def cross_covariance(f: LogitMatrix, g: LogitMatrix, target: int) -> CovMatrix:
    """Second moment of f with its target column replaced by g's.

    This is the between-network variant: the mixed sample vector keeps
    every category of ``f`` except ``target``, which is taken from ``g``
    sample-for-sample.  With ``g`` equal to ``f`` the result is
    bit-identical to the plain covariance.
    """
    if f.data.shape != g.data.shape:
        raise DimMismatch(
            f"logit matrices differ in shape: {f.data.shape} vs {g.data.shape}"
        )
    if not 0 <= target < f.n:
        raise OutOfRange(f"target {target} outside [0, {f.n})")
    mixed = f.data.copy()
    mixed[:, target] = g.data[:, target]
    return finalize(accumulate(new_accumulator(f.n), LogitMatrix(mixed)))


@dataclass(frozen=True)
class ReducedProblem:
    """The target-row-deleted quadratic program data for one category.

    For target i this holds the (n-1)x(n-1) minor of the second-moment
    matrix (``chat``), the target column with entry i removed (``bhat``),
    and the target's own second moment ``cov_ii``.  Reduced coordinate j
    maps back to full coordinate j + 1 if j >= i else j.
    """

    target: int
    chat: SymmetricMatrix
    bhat: np.ndarray
    cov_ii: float
    n: int

    def __post_init__(self):
        self.bhat.flags.writeable = False

    @property
    def m(self) -> int:
        """Number of reduced (off-target) coordinates."""
        return self.n - 1

    def full_index(self, j: int) -> int:
        """Full-matrix coordinate of reduced coordinate j."""
        return j + 1 if j >= self.target else j

    def reduced_index(self, j: int) -> int:
        """Reduced coordinate of full coordinate j (j must differ from target)."""
        if j == self.target:
            raise OutOfRange("target has no reduced coordinate")
        return j - 1 if j > self.target else j


def reduce_problem(cov: CovMatrix, target: int) -> ReducedProblem:
    """Carve the one-vs-rest regression data for ``target`` out of ``cov``."""
    n = cov.n
    if n < 2:
        raise DimTooSmall("need at least two categories to form a reduced problem")
    if not 0 <= target < n:
        raise OutOfRange(f"target {target} outside [0, {n})")
    keep = np.arange(n) != target
    full = cov.mat.data
    chat = SymmetricMatrix(full[np.ix_(keep, keep)])
    bhat = full[keep, target].copy()
    return ReducedProblem(target, chat, bhat, float(full[target, target]), n)
