"""Diagnostics built on top of the dependency solver.

Covers the closed-form zero-penalty error (how redundant a category is
given all the others), a sound pre-solve screening rule for coefficients
forced to zero, a verified Lipschitz-style bound on how KKT residuals
drift along the penalty path, a Markov-style tail certificate, and
two-sided bounds on the error reduction achievable at a given penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CovMatrix, ReducedProblem, reduce_problem
from .errors import (
    DegenerateTarget,
    DimTooSmall,
    InvalidInput,
    OutOfRange,
)
from .linalg import (
    DEFAULT_EIG_FLOOR_REL,
    SymmetricMatrix,
    eigendecompose,
    log_det,
    relative_floor,
    solve_spd,
    sym_sqrt,
)
from .solver import SolutionPath, ReducedSolution, lambda_max


@dataclass(frozen=True)
class RedundancyReport:
    """How well a category is linearly predicted by all the others.

    ``min_error`` is the prediction error of the unpenalized optimum,
    equal to the reciprocal of the target diagonal entry of the inverse
    second-moment matrix.  ``log_det_ratio`` (full minus target-deleted
    minor) and ``eigen_error_sum`` (sum of squared target eigenvector
    weights over eigenvalues) recompute the same quantity through
    different factorizations as a cross-check.  ``relative_error``
    rescales by the target's own second moment into [0, 1]: 0 means the
    category is an exact linear combination of the rest, 1 means the
    rest carry no information about it.
    """

    target: int
    min_error: float
    log_det_ratio: float
    eigen_error_sum: float
    relative_error: float
    floored: bool

    def max_disagreement(self) -> float:
        """Largest relative deviation between the three computation routes."""
        ref = self.min_error
        if ref <= 0.0:
            return float("inf")
        via_det = float(np.exp(self.log_det_ratio))
        via_eig = 1.0 / self.eigen_error_sum
        return max(abs(via_det - ref), abs(via_eig - ref)) / ref


def redundancy(
    cov: CovMatrix, target: int, eig_floor_rel: float = DEFAULT_EIG_FLOOR_REL
) -> RedundancyReport:
    """Zero-penalty prediction error of ``target``, three ways.

    Route 1 solves Cov x = e_target (LU) and inverts the target entry;
    route 2 takes exp of the log-determinant difference between the full
    matrix and the target-deleted minor; route 3 expands the inverse
    diagonal entry in the eigenbasis.  When the spectrum dips below the
    relative floor all routes fall back to the floored eigenbasis and
    ``floored`` is set.
    """
    n = cov.n
    if n < 2:
        raise DimTooSmall("redundancy needs at least two categories")
    if not 0 <= target < n:
        raise OutOfRange(f"target {target} outside [0, {n})")
    full = cov.mat.data
    cov_ii = float(full[target, target])
    if cov_ii <= 1e-300:
        raise DegenerateTarget(
            f"category {target} has numerically zero second moment"
        )

    eig_full = eigendecompose(cov.mat)
    floor_full = relative_floor(eig_full, eig_floor_rel)
    floored = bool(np.min(eig_full.eigenvalues) < floor_full)

    basis = np.zeros(n)
    basis[target] = 1.0
    if floored:
        inv_entry = float(solve_spd(cov.mat, basis, floor=floor_full)[target])
    else:
        inv_entry = float(np.linalg.solve(full, basis)[target])
    min_error = 1.0 / inv_entry

    keep = np.arange(n) != target
    minor = SymmetricMatrix(full[np.ix_(keep, keep)])
    eig_minor = eigendecompose(minor)
    floor_minor = relative_floor(eig_minor, eig_floor_rel)
    floored = floored or bool(np.min(eig_minor.eigenvalues) < floor_minor)
    ratio = log_det(eig_full, floor_full) - log_det(eig_minor, floor_minor)

    weights = eig_full.eigenvectors[target, :]
    eigen_sum = float(
        np.sum(weights * weights / np.maximum(eig_full.eigenvalues, floor_full))
    )

    return RedundancyReport(
        target=target,
        min_error=min_error,
        log_det_ratio=ratio,
        eigen_error_sum=eigen_sum,
        relative_error=min_error / cov_ii,
        floored=floored,
    )


@dataclass(frozen=True)
class ScreeningRow:
    """Per-category screening data, in full coordinates."""

    index: int
    correlation_ratio: float
    certificate_threshold: float


@dataclass(frozen=True)
class ScreeningReport:
    """Pre-solve support screening for one target and penalty.

    ``certified_zero`` lists categories whose coefficient is provably
    zero at this penalty (a sound certificate derived from the residual
    drift bound along the path).  ``heuristic_zero`` lists categories
    whose cross moment with the target falls below half the penalty; on
    many instances this also predicts a zero coefficient, but it carries
    no guarantee and is reported for monitoring only.
    """

    target: int
    lam: float
    lam_max: float
    certified_zero: frozenset[int]
    heuristic_zero: frozenset[int]
    per_category: tuple[ScreeningRow, ...]
    floored: bool


def screen(
    cov: CovMatrix,
    target: int,
    lam: float,
    eig_floor_rel: float = DEFAULT_EIG_FLOOR_REL,
) -> ScreeningReport:
    """Certify zero coefficients before solving.

    At the largest useful penalty the solution is zero and the KKT
    residual is -bhat.  The residual-over-penalty vector drifts at a
    bounded rate as the penalty shrinks, so a category whose normalized
    cross moment |bhat_j| / max|bhat| stays strictly below
    1 - 2 ||root_j|| ||root^{-1} bhat|| |1/lam - 1/lam_max| can never
    activate at this penalty.  A 1e-12 guard band keeps the strict
    comparison sound under roundoff.
    """
    rp = reduce_problem(cov, target)
    lmax = lambda_max(rp)
    if not (np.isfinite(lam) and 0.0 < lam < lmax):
        raise OutOfRange(
            f"penalty must lie in (0, {lmax}) for screening, got {lam}"
        )

    eig = eigendecompose(rp.chat)
    floor = relative_floor(eig, eig_floor_rel)
    floored = bool(np.min(eig.eigenvalues) < floor)
    root = sym_sqrt(eig, floor)
    pulled = solve_spd(root, rp.bhat)
    pulled_norm = float(np.linalg.norm(pulled))
    col_norms = np.linalg.norm(root.data, axis=0)

    binf = float(np.max(np.abs(rp.bhat)))
    ratios = np.abs(rp.bhat) / binf
    drift = 2.0 * col_norms * pulled_norm * abs(1.0 / lam - 1.0 / lmax)
    thresholds = 1.0 - drift

    certified: list[int] = []
    heuristic: list[int] = []
    rows: list[ScreeningRow] = []
    half = 0.5 * lam
    for j in range(rp.m):
        full_j = rp.full_index(j)
        guard = 1e-12 * max(1.0, abs(float(thresholds[j])))
        if ratios[j] < thresholds[j] - guard:
            certified.append(full_j)
        if abs(float(rp.bhat[j])) < half:
            heuristic.append(full_j)
        rows.append(
            ScreeningRow(
                index=full_j,
                correlation_ratio=float(ratios[j]),
                certificate_threshold=float(thresholds[j]),
            )
        )

    return ScreeningReport(
        target=target,
        lam=float(lam),
        lam_max=lmax,
        certified_zero=frozenset(certified),
        heuristic_zero=frozenset(heuristic),
        per_category=tuple(rows),
        floored=floored,
    )


@dataclass(frozen=True)
class SlopeBoundCheck:
    """Verified residual-drift margins along a solved penalty path.

    One margin per consecutive grid pair: the worst-coordinate slack
    left in the drift bound (nonnegative margins everywhere means the
    bound held, which certifies the path solutions are mutually
    consistent).
    """

    margins: tuple[float, ...]
    passed: bool

    @property
    def pairs(self) -> int:
        return len(self.margins)


def check_slope_bounds(
    rp: ReducedProblem,
    path: SolutionPath,
    eig_floor_rel: float = DEFAULT_EIG_FLOOR_REL,
) -> SlopeBoundCheck:
    """Verify the residual drift bound on every consecutive path pair.

    For penalties lam1, lam2 in (0, lam_max] and each coordinate j the
    solved residuals r = Chat c - bhat must satisfy

        |r_j(lam1)/lam1 - r_j(lam2)/lam2|
            <= ||root_j|| ||root^{-1} bhat|| |1/lam1 - 1/lam2|

    up to 1e-8 roundoff slack.  All path points must have converged.
    """
    if any(not s.converged for s in path.solutions):
        raise InvalidInput("slope bound check needs a fully converged path")
    lmax = lambda_max(rp)
    if any(l > lmax * (1.0 + 1e-12) for l in path.lambdas):
        raise InvalidInput(
            "slope bound check is only valid for penalties at or below "
            "the zero-solution threshold"
        )

    eig = eigendecompose(rp.chat)
    floor = relative_floor(eig, eig_floor_rel)
    root = sym_sqrt(eig, floor)
    pulled_norm = float(np.linalg.norm(solve_spd(root, rp.bhat)))
    col_norms = np.linalg.norm(root.data, axis=0)

    chat = rp.chat.data
    margins: list[float] = []
    for k in range(len(path.lambdas) - 1):
        l1, l2 = path.lambdas[k], path.lambdas[k + 1]
        r1 = chat @ path.solutions[k].coef - rp.bhat
        r2 = chat @ path.solutions[k + 1].coef - rp.bhat
        lhs = np.abs(r1 / l1 - r2 / l2)
        rhs = col_norms * pulled_norm * abs(1.0 / l1 - 1.0 / l2) + 1e-8
        margins.append(float(np.min(rhs - lhs)))
    return SlopeBoundCheck(
        margins=tuple(margins), passed=bool(all(m >= 0.0 for m in margins))
    )


@dataclass(frozen=True)
class MarkovCertificate:
    """Tail certificate for the absolute prediction residual.

    ``holds`` applies the decision rule
    expected_sq_error <= tolerance * tail_prob.  Through Markov's
    inequality on the squared residual the certified statement
    P(|residual| >= tolerance) <= tail_prob is guaranteed whenever
    tolerance >= 1; below that the rule is the same scaling applied
    heuristically, so choose tolerances accordingly.
    """

    tolerance: float
    tail_prob: float
    expected_sq_error: float
    holds: bool


def certify(solution, tolerance: float, tail_prob: float) -> MarkovCertificate:
    """Certify a tail bound for an embedded dependency solution."""
    if not np.isfinite(tolerance) or tolerance <= 0.0:
        raise InvalidInput(f"tolerance must be positive, got {tolerance}")
    if not np.isfinite(tail_prob) or not 0.0 <= tail_prob <= 1.0:
        raise InvalidInput(f"tail probability must lie in [0, 1], got {tail_prob}")
    err = float(solution.pred_error)
    return MarkovCertificate(
        tolerance=float(tolerance),
        tail_prob=float(tail_prob),
        expected_sq_error=err,
        holds=bool(err <= tolerance * tail_prob),
    )


@dataclass(frozen=True)
class ErrorReductionBounds:
    """Bracket on the error reduction cov_ii - pred_error at one penalty.

    ``identity_value`` evaluates the exact dual identity at the solved
    point (equal to the true reduction at an exact optimum, up to solver
    tolerance); ``lower``/``upper`` bracket the same quantity using only
    the zero-solution dual point, so they can be computed without
    solving at this penalty.
    """

    lower: float
    upper: float
    identity_value: float


def error_reduction_bounds(
    rp: ReducedProblem,
    lam: float,
    sol: ReducedSolution,
    root: SymmetricMatrix,
) -> ErrorReductionBounds:
    """Two-sided bounds on how much the solved dependency reduces error.

    Uses the dual identity
    cov_ii - pred_error(lam) = ||root^{-1} bhat||^2 - (lam^2/2) ||xi(lam)||^2
    together with the drift bound
    ||xi(lam) - xi(lam_max)|| <= sqrt(2) ||root^{-1} bhat|| (1/lam - 1/lam_max),
    which lower-bounds ||xi(lam)|| by reverse triangle inequality and so
    upper-bounds the reduction.  The reduction is trivially nonnegative,
    giving the lower end.
    """
    if not sol.converged:
        raise InvalidInput("error reduction bounds need a converged solution")
    lmax = lambda_max(rp)
    if lmax <= 0.0:
        raise OutOfRange("target is uncorrelated with every other category")
    if not (np.isfinite(lam) and 0.0 < lam <= lmax * (1.0 + 1e-12)):
        raise OutOfRange(f"penalty must lie in (0, {lmax}], got {lam}")

    pulled = solve_spd(root, rp.bhat)
    pulled_norm = float(np.linalg.norm(pulled))
    pulled_sq = pulled_norm * pulled_norm
    sqrt2 = float(np.sqrt(2.0))

    xi = sqrt2 * (pulled - root.data @ sol.coef) / lam
    identity_value = pulled_sq - 0.5 * lam * lam * float(xi @ xi)

    xi_at_max = sqrt2 * pulled_norm / lmax
    drift = sqrt2 * pulled_norm * max(0.0, 1.0 / lam - 1.0 / lmax)
    shrunk = max(0.0, xi_at_max - drift)
    upper = pulled_sq - 0.5 * lam * lam * shrunk * shrunk
    return ErrorReductionBounds(lower=0.0, upper=upper, identity_value=identity_value)


def pair_covariance(cov: CovMatrix, i: int, j: int) -> float:
    """Co-adaptation weight |E[f_i f_j]| for a pair of categories.

    The magnitude of the cross moment is the natural penalty weight for
    training procedures that discourage one category's logit from
    co-adapting with another's.
    """
    if not (0 <= i < cov.n and 0 <= j < cov.n):
        raise OutOfRange(f"indices ({i}, {j}) outside [0, {cov.n})")
    if i == j:
        raise InvalidInput("pair covariance needs two distinct categories")
    return float(abs(cov.mat.data[i, j]))
