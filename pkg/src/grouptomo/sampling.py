"""Measurement simulation and Monte Carlo accumulation machinery.

RNG contract ("philox-blocked-v1"): shots are processed in fixed blocks
of BLOCK_SIZE; block j of a run with seed s draws from
``numpy.random.Philox(key=[s, j])``.  The draws for shot i therefore
depend only on (seed, i) and on the fixed per-shot draw layout of the
scheme, never on thread count or shard layout.  Block statistics are
merged in block order, so a fixed (seed, shot count) pair fixes every
bit of the estimate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import DensityMatrix, fidelity, nearest_density, trace_distance
from .validation import ValidationError, check_probabilities

__all__ = [
    "BLOCK_SIZE",
    "RNG_CONTRACT",
    "block_rng",
    "iter_blocks",
    "sample_sphere",
    "sample_sphere_batch",
    "sample_categorical",
    "sample_inverse_cdf",
    "MatrixAccumulator",
    "ReconstructionResult",
    "run_blocked",
    "accumulate_terms",
    "bootstrap_fidelity_stderr",
]

BLOCK_SIZE = 4096
RNG_CONTRACT = "philox-blocked-v1"


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    """The generator owned by one block of the shot stream."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(block_index)]))


def iter_blocks(seed: int, total: int, block_size: int = BLOCK_SIZE):
    """Yield (block_index, start, count, rng) covering ``total`` shots."""
    start = 0
    index = 0
    while start < total:
        count = min(block_size, total - start)
        yield index, start, count, block_rng(seed, index)
        start += count
        index += 1


def sample_sphere_batch(rng: np.random.Generator, n: int):
    """Uniform directions: cos(theta) uniform on [-1, 1], phi on [0, 2pi)."""
    cos_theta = rng.uniform(-1.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.arccos(cos_theta), phi


def sample_sphere(rng: np.random.Generator):
    """One uniform direction as a (theta, phi) pair."""
    theta, phi = sample_sphere_batch(rng, 1)
    return float(theta[0]), float(phi[0])


def sample_categorical(weights, rng: np.random.Generator, size: int | None = None):
    """Draw indices with probability proportional to the given weights."""
    w = check_probabilities(weights, name="categorical weights")
    total = w.sum()
    if total <= 0.0:
        raise ValidationError("categorical weights sum to zero")
    cdf = np.cumsum(w)
    u = rng.random(size if size is not None else 1) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, len(w) - 1)
    return idx if size is not None else int(idx[0])


def categorical_rows(prob_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized categorical draw: one row of probabilities per uniform."""
    cdf = np.cumsum(prob_rows, axis=1)
    totals = cdf[:, -1]
    if np.any(totals <= 0.0):
        raise ValidationError("a probability row sums to zero")
    scaled = u * totals
    idx = (cdf < scaled[:, None]).sum(axis=1)
    return np.minimum(idx, prob_rows.shape[1] - 1)


def sample_inverse_cdf(pdf, values, rng: np.random.Generator,
                       weights=None, size: int | None = None):
    """Piecewise-constant inverse-CDF draw from a pdf tabulated on a grid.

    ``weights`` are the quadrature weights of the grid (uniform if
    omitted); draws land exactly on grid values.
    """
    p = check_probabilities(pdf, name="grid pdf")
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != p.shape:
        raise ValidationError("pdf and value grids disagree in length")
    mass = p if weights is None else p * np.asarray(weights, dtype=np.float64)
    total = mass.sum()
    if total <= 0.0:
        raise ValidationError("grid pdf carries no mass")
    cdf = np.cumsum(mass)
    u = rng.random(size if size is not None else 1) * total
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(vals) - 1)
    out = vals[idx]
    return out if size is not None else float(out[0])


class MatrixAccumulator:
    """Streaming mean and per-entry variance of complex matrix terms.

    One-pass Welford/Chan updates; snapshots of the running mean are
    kept at power-of-two counts for convergence traces.  Per-block means
    are retained (optionally) for bootstrap resampling.
    """

    def __init__(self, dim: int, *, keep_block_means: bool = True):
        self.dim = int(dim)
        self.count = 0
        self.mean = np.zeros((dim, dim), dtype=np.complex128)
        self._m2 = np.zeros((dim, dim), dtype=np.float64)
        self.checkpoints: list[tuple[int, np.ndarray]] = []
        self._keep_blocks = keep_block_means
        self.block_means: list[tuple[int, np.ndarray]] = []

    def add_batch(self, terms: np.ndarray, weights: np.ndarray | None = None) -> None:
        terms = np.asarray(terms, dtype=np.complex128)
        if terms.ndim != 3 or terms.shape[1:] != (self.dim, self.dim):
            raise ValidationError(
                f"term batch shape {terms.shape} does not match dim {self.dim}")
        if weights is None:
            self._add_uniform_with_checkpoints(terms)
        else:
            w = np.asarray(weights, dtype=np.float64)
            for i in range(terms.shape[0]):
                self._merge(terms[i][None, :, :], w[i])
        if self._keep_blocks and terms.shape[0]:
            self.block_means.append((terms.shape[0], terms.mean(axis=0)))

    def _add_uniform_with_checkpoints(self, terms: np.ndarray) -> None:
        # split the batch so running means get snapshotted exactly at 2^k
        n = terms.shape[0]
        offset = 0
        while offset < n:
            boundary = _next_power_of_two(self.count)
            take = min(n - offset, boundary - self.count)
            self._merge_block(terms[offset:offset + take])
            offset += take
            if self.count == boundary:
                self.checkpoints.append((self.count, self.mean.copy()))

    def _merge_block(self, terms: np.ndarray) -> None:
        b = terms.shape[0]
        if b == 0:
            return
        batch_mean = terms.mean(axis=0)
        delta = terms - batch_mean
        batch_m2 = np.sum(delta.real ** 2 + delta.imag ** 2, axis=0)
        n = self.count
        total = n + b
        gap = batch_mean - self.mean
        self.mean = self.mean + gap * (b / total)
        self._m2 = self._m2 + batch_m2 + (gap.real ** 2 + gap.imag ** 2) * (n * b / total)
        self.count = total

    def _merge(self, term: np.ndarray, weight: float) -> None:
        # frequency-weighted single update (ingested aggregated records)
        if weight <= 0:
            return
        n = self.count
        total = n + weight
        gap = term[0] - self.mean
        self.mean = self.mean + gap * (weight / total)
        self._m2 = self._m2 + (gap.real ** 2 + gap.imag ** 2) * (n * weight / total)
        self.count = total

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros((self.dim, self.dim))
        return self._m2 / (self.count - 1)

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros((self.dim, self.dim))
        return np.sqrt(self.variance / self.count)


def _next_power_of_two(n: int) -> int:
    p = 1
    while p <= n:
        p *= 2
    return p


@dataclass
class ReconstructionResult:
    """Raw estimate, its physical projection, and convergence bookkeeping."""

    estimate: np.ndarray
    symmetrized: DensityMatrix
    shots: float
    stderr: np.ndarray
    trace: list = field(default_factory=list)
    block_means: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.estimate.shape[0]

    def fidelity_to(self, rho_true) -> float:
        return fidelity(self.symmetrized, rho_true)

    def trace_distance_to(self, rho_true) -> float:
        return trace_distance(self.symmetrized, rho_true)


def finalize_result(acc_or_matrix, shots, rho_true=None, stderr=None,
                    checkpoints=None, block_means=None, meta=None) -> ReconstructionResult:
    if isinstance(acc_or_matrix, MatrixAccumulator):
        est = acc_or_matrix.mean
        stderr = acc_or_matrix.stderr
        checkpoints = acc_or_matrix.checkpoints
        block_means = acc_or_matrix.block_means
    else:
        est = np.asarray(acc_or_matrix, dtype=np.complex128)
        if stderr is None:
            stderr = np.zeros(est.shape, dtype=np.float64)
    trace = []
    if rho_true is not None and checkpoints:
        for n, snapshot in checkpoints:
            snap = nearest_density(snapshot)
            trace.append((n, fidelity(snap, rho_true), trace_distance(snap, rho_true)))
    return ReconstructionResult(
        estimate=est,
        symmetrized=nearest_density(est),
        shots=shots,
        stderr=stderr,
        trace=trace,
        block_means=list(block_means or []),
        meta=dict(meta or {}),
    )


def run_blocked(seed: int, shots: int, dim: int, term_fn, *, threads: int = 1,
                rho_true=None, keep_block_means: bool = True,
                meta: dict | None = None) -> ReconstructionResult:
    """Drive ``term_fn(rng, count) -> (count, dim, dim) terms`` over the shot stream.

    Blocks may be computed in parallel but are merged strictly in block
    order, so the estimate is identical for every thread count.
    """
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    acc = MatrixAccumulator(dim, keep_block_means=keep_block_means)
    blocks = list(iter_blocks(seed, shots))
    if threads <= 1:
        for _, _, count, rng in blocks:
            acc.add_batch(term_fn(rng, count))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(term_fn, rng, count) for _, _, count, rng in blocks]
            for fut in futures:
                acc.add_batch(fut.result())
    return finalize_result(acc, shots, rho_true=rho_true, meta=meta)


def map_ordered(fn, items, threads: int = 1):
    """Apply ``fn`` over items, in order, optionally on a thread pool.

    Results are yielded in input order regardless of completion order,
    so downstream accumulation is identical for every thread count.
    """
    if threads <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(fn, items)


def accumulate_terms(dim: int, batches, weights_batches=None, *, shots=None,
                     rho_true=None, meta=None) -> ReconstructionResult:
    """Accumulate precomputed term batches (the record-ingestion path)."""
    acc = MatrixAccumulator(dim)
    if weights_batches is None:
        for batch in batches:
            acc.add_batch(batch)
    else:
        for batch, w in zip(batches, weights_batches):
            acc.add_batch(batch, weights=w)
    if acc.count == 0:
        raise ValidationError("no measurement mass to accumulate")
    return finalize_result(acc, shots if shots is not None else acc.count,
                           rho_true=rho_true, meta=meta)


def bootstrap_fidelity_stderr(result: ReconstructionResult, rho_true,
                              resamples: int = 200, seed: int = 0) -> float:
    """Block-bootstrap standard error of the fidelity to a reference state.

    Resamples the retained per-block means with replacement; needs a
    result produced with block means kept.
    """
    blocks = result.block_means
    if len(blocks) < 2:
        raise ValidationError("bootstrap needs at least two retained blocks")
    sizes = np.array([b[0] for b in blocks], dtype=np.float64)
    means = np.array([b[1] for b in blocks])
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 0xB005]))
    vals = np.empty(resamples)
    for r in range(resamples):
        pick = rng.integers(0, len(blocks), size=len(blocks))
        w = sizes[pick]
        est = np.tensordot(w, means[pick], axes=(0, 0)) / w.sum()
        vals[r] = fidelity(nearest_density(est), rho_true)
    return float(vals.std(ddof=1))
