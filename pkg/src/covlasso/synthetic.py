"""Deterministic synthetic logit generator with planted dependencies.

Reproducibility across languages and library versions matters more here
than raw entropy, so random numbers come from a fully documented
generator rather than a platform RNG:

* Core stream: SplitMix64.  State advances by the 64-bit golden-ratio
  constant 0x9E3779B97F4A7C15; each output is the finalizer
  ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` (all mod 2^64) applied to the
  advanced state.  The k-th output of a stream seeded with s is therefore
  a pure function of (s, k).
* Uniform doubles in [0, 1): the top 53 bits, ``(u64 >> 11) * 2^-53``.
* Standard normals: Marsaglia polar.  Each attempt consumes exactly two
  uniforms a, b (in that order) to form u = 2a - 1, v = 2b - 1 and
  s = u^2 + v^2; attempts with s >= 1 or s == 0 are rejected.  An
  accepted attempt emits u * sqrt(-2 ln(s) / s) first and
  v * sqrt(-2 ln(s) / s) second.
* Stream splitting: substreams are derived per (purpose tag, column) as
  ``child = mix(mix(seed + (tag+1) * GAMMA) + (index+1) * GAMMA)`` where
  ``mix`` is the SplitMix64 finalizer and GAMMA the golden-ratio
  constant.  Tags: 1 = mixing weights, 2 = latent factors, 3 = noise.

Logits are generated as a rank-``latent_rank`` linear model: a weight
matrix W (n x r, entries N(0, 1/r), filled column by column) applied to
per-sample latent factors z ~ N(0, I_r) (also filled column by column).
A planted dependency overwrites the target column with the requested
linear combination of other columns before labels are taken, and labels
are always the argmax of the noise-free logits; target noise, if any,
is added afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import LogitMatrix
from .errors import InvalidInput, InvalidSpec

GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1
_K1 = 0xBF58476D1CE4E5B9
_K2 = 0x94D049BB133111EB

TAG_WEIGHTS = 1
TAG_LATENT = 2
TAG_NOISE = 3


def mix64(z: int) -> int:
    """SplitMix64 output finalizer (scalar, for seed derivation)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _K1) & _MASK
    z = ((z ^ (z >> 27)) * _K2) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, tag: int, index: int) -> int:
    """Substream seed for (tag, index); see the module docstring."""
    child = mix64((seed + (tag + 1) * GAMMA) & _MASK)
    return mix64((child + (index + 1) * GAMMA) & _MASK)


def _outputs(seed: int, start: int, count: int) -> np.ndarray:
    """SplitMix64 outputs number start+1 .. start+count of a stream.

    The linear state recurrence makes random access trivial:
    state after k draws is seed + k * GAMMA mod 2^64.
    """
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = (np.uint64(seed) + np.uint64(GAMMA) * idx).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_K1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_K2)
    return z ^ (z >> np.uint64(31))


def unit_doubles(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Uniform doubles in [0, 1) from a SplitMix64 stream."""
    return (_outputs(seed, start, count) >> np.uint64(11)) * 2.0**-53


def normals(seed: int, count: int) -> np.ndarray:
    """``count`` standard normals via Marsaglia polar on one stream.

    Vectorized evaluation of the sequential algorithm documented above:
    uniforms are consumed strictly in pairs, one pair per attempt, and
    accepted attempts emit their two normals in order, so generating
    attempts in blocks reproduces the scalar loop bit for bit.
    """
    if count < 0:
        raise InvalidInput("count must be nonnegative")
    out = np.empty(count)
    filled = 0
    consumed = 0  # uniforms drawn so far
    while filled < count:
        pairs_needed = (count - filled + 1) // 2
        attempts = max(16, int(pairs_needed / 0.7) + 8)
        raw = unit_doubles(seed, 2 * attempts, start=consumed)
        consumed += 2 * attempts
        u = 2.0 * raw[0::2] - 1.0
        v = 2.0 * raw[1::2] - 1.0
        s = u * u + v * v
        keep = (s < 1.0) & (s > 0.0)
        if not np.any(keep):
            continue
        su, sv, ss = u[keep], v[keep], s[keep]
        scale = np.sqrt(-2.0 * np.log(ss) / ss)
        pair_block = np.empty(2 * su.size)
        pair_block[0::2] = su * scale
        pair_block[1::2] = sv * scale
        take = min(pair_block.size, count - filled)
        out[filled : filled + take] = pair_block[:take]
        filled += take
    return out


@dataclass(frozen=True)
class PlantedDependency:
    """Ground-truth sparse combination to overwrite the target with."""

    target: int
    coefficients: tuple[tuple[int, float], ...]

    def __init__(self, target: int, coefficients):
        object.__setattr__(self, "target", int(target))
        if hasattr(coefficients, "items"):
            items = coefficients.items()
        else:
            items = coefficients
        pairs = tuple(sorted((int(j), float(w)) for j, w in items))
        object.__setattr__(self, "coefficients", pairs)


@dataclass(frozen=True)
class SyntheticSpec:
    """Full description of one synthetic dataset."""

    n: int
    samples: int
    latent_rank: int
    noise_sigma: float = 0.0
    planted: PlantedDependency | None = None
    seed: int = 0


@dataclass(frozen=True)
class PlantedTruth:
    """What the generator actually planted, for recovery scoring."""

    n: int
    target: int
    support: tuple[int, ...]
    coefficients: tuple[float, ...]
    noise_sigma: float


def _validate(spec: SyntheticSpec) -> None:
    if spec.n < 1:
        raise InvalidSpec("need at least one category")
    if spec.samples < 1:
        raise InvalidSpec("need at least one sample")
    if spec.latent_rank < 1:
        raise InvalidSpec("latent rank must be at least 1")
    if not math.isfinite(spec.noise_sigma) or spec.noise_sigma < 0.0:
        raise InvalidSpec(f"noise sigma must be nonnegative, got {spec.noise_sigma}")
    if spec.planted is not None:
        p = spec.planted
        if not 0 <= p.target < spec.n:
            raise InvalidSpec(f"planted target {p.target} outside [0, {spec.n})")
        if not p.coefficients:
            raise InvalidSpec("planted dependency needs at least one coefficient")
        seen = set()
        for j, w in p.coefficients:
            if not 0 <= j < spec.n:
                raise InvalidSpec(f"planted index {j} outside [0, {spec.n})")
            if j == p.target:
                raise InvalidSpec("planted support must not contain the target")
            if j in seen:
                raise InvalidSpec(f"planted index {j} repeated")
            if not math.isfinite(w) or w == 0.0:
                raise InvalidSpec(f"planted coefficient for {j} must be finite nonzero")
            seen.add(j)


def generate(spec: SyntheticSpec) -> tuple[LogitMatrix, PlantedTruth | None]:
    """Generate a labeled logit matrix, bit-deterministic in the seed."""
    _validate(spec)
    seed = spec.seed & _MASK
    n, big_n, rank = spec.n, spec.samples, spec.latent_rank

    weights = np.empty((n, rank))
    w_scale = 1.0 / math.sqrt(rank)
    for k in range(rank):
        weights[:, k] = normals(derive_seed(seed, TAG_WEIGHTS, k), n) * w_scale

    latent = np.empty((big_n, rank))
    for k in range(rank):
        latent[:, k] = normals(derive_seed(seed, TAG_LATENT, k), big_n)

    logits = latent @ weights.T

    truth: PlantedTruth | None = None
    if spec.planted is not None:
        p = spec.planted
        combo = np.zeros(big_n)
        for j, w in p.coefficients:
            combo += w * logits[:, j]
        logits[:, p.target] = combo
        labels = np.argmax(logits, axis=1).astype(np.int64)
        if spec.noise_sigma > 0.0:
            noise = normals(derive_seed(seed, TAG_NOISE, p.target), big_n)
            logits[:, p.target] = logits[:, p.target] + spec.noise_sigma * noise
        truth = PlantedTruth(
            n=n,
            target=p.target,
            support=tuple(j for j, _ in p.coefficients),
            coefficients=tuple(w for _, w in p.coefficients),
            noise_sigma=spec.noise_sigma,
        )
    else:
        labels = np.argmax(logits, axis=1).astype(np.int64)

    return LogitMatrix(logits, labels), truth


@dataclass(frozen=True)
class RecoveryReport:
    """Support recovery quality of a solution against planted truth."""

    precision: float
    recall: float


def verify_recovery(solution, truth: PlantedTruth) -> RecoveryReport:
    """Score recovered support against the planted one.

    Precision is 1.0 on an empty recovered support (no false positives);
    recall counts recovered planted categories.
    """
    if solution.n != truth.n:
        raise InvalidInput(
            f"solution has {solution.n} categories, truth has {truth.n}"
        )
    if solution.target != truth.target:
        raise InvalidInput(
            f"solution targets {solution.target}, truth targets {truth.target}"
        )
    found = set(solution.support)
    planted = set(truth.support)
    hits = len(found & planted)
    precision = 1.0 if not found else hits / len(found)
    recall = 1.0 if not planted else hits / len(planted)
    return RecoveryReport(precision=precision, recall=recall)
