"""K-means codebooks and residual vector quantization.

Fitting uses Lloyd's algorithm with k-means++ seeding; an RVQ stacks one
codebook per stage, each fit on the residuals left by the previous stages.
Squared Euclidean distance throughout. All fits are deterministic for a
fixed (data, K, seed).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeds import derive_seed

# fits never see more vectors than this; larger inputs are subsampled
MAX_FIT_VECTORS = 200_000

RVQ_MAGIC = b"RVQ1"


class QuantizeError(ValueError):
    """Invalid quantizer input or file."""


@dataclass(frozen=True)
class Codebook:
    """K centroids of dimension D."""

    centroids: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise QuantizeError(f"centroids must be [K x D] with K >= 1, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise QuantizeError("centroids contain non-finite values")
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class RVQCodebooks:
    """Ordered quantizer stages sharing one embedding dimension.

    `fit_mean_residuals[s]` is the mean residual L2 norm measured after
    stage s during fitting (present only on freshly fit quantizers; it is
    not serialized).
    """

    stages: tuple[Codebook, ...]
    fit_mean_residuals: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.stages:
            raise QuantizeError("RVQ needs at least one stage")
        dims = {book.dim for book in self.stages}
        if len(dims) != 1:
            raise QuantizeError(f"stages disagree on dimension: {sorted(dims)}")

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def dim(self) -> int:
        return self.stages[0].dim

    @property
    def k(self) -> int:
        return self.stages[0].k


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


def _check_vectors(vectors: np.ndarray) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2:
        raise QuantizeError(f"expected [N x D] vectors, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise QuantizeError("input vectors contain non-finite values")
    return v


def _sq_dists(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||v - c||^2 expanded; clamp tiny negatives from cancellation
    d2 = (
        np.sum(vectors**2, axis=1)[:, None]
        - 2.0 * vectors @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = vectors.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = np.sum((vectors - vectors[chosen[0]]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a centroid; pick deterministically
            chosen[i] = i % n
        else:
            chosen[i] = rng.choice(n, p=d2 / total)
        d2 = np.minimum(d2, np.sum((vectors - vectors[chosen[i]]) ** 2, axis=1))
    return vectors[chosen].copy()


def kmeans_fit(vectors: np.ndarray, k: int, max_iters: int = 50, seed: int = 0) -> Codebook:
    """Lloyd's algorithm with k-means++ init; stops when assignments settle.

    Inputs larger than MAX_FIT_VECTORS are subsampled with the same seed.
    Empty clusters are re-seeded with the point farthest from its centroid.
    """
    vectors = _check_vectors(vectors)
    n = vectors.shape[0]
    if k < 1:
        raise QuantizeError(f"K must be >= 1, got {k}")
    if n < k:
        raise QuantizeError(f"need at least K={k} vectors, got {n}")

    rng = np.random.default_rng(seed)
    if n > MAX_FIT_VECTORS:
        idx = rng.choice(n, size=MAX_FIT_VECTORS, replace=False)
        vectors = vectors[np.sort(idx)]
        n = MAX_FIT_VECTORS

    centroids = _kmeans_pp_init(vectors, k, rng)
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iters):
        d2 = _sq_dists(vectors, centroids)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            mask = assign == j
            if mask.any():
                centroids[j] = vectors[mask].mean(axis=0)
        # re-seed empty clusters with the worst-fit points
        counts = np.bincount(assign, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if len(empties):
            point_d2 = d2[np.arange(n), assign]
            order = np.argsort(-point_d2, kind="stable")
            for slot, j in enumerate(empties):
                centroids[j] = vectors[order[slot]]
    return Codebook(centroids)


def kmeans_encode(vectors: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Nearest-centroid codes; ties break to the lowest centroid index."""
    vectors = _check_vectors(np.atleast_2d(vectors))
    if vectors.shape[1] != codebook.dim:
        raise QuantizeError(
            f"vector dim {vectors.shape[1]} != codebook dim {codebook.dim}"
        )
    return np.argmin(_sq_dists(vectors, codebook.centroids), axis=1)


def kmeans_inertia(vectors: np.ndarray, codebook: Codebook) -> float:
    """Sum of squared distances to the nearest centroid."""
    v = _check_vectors(np.atleast_2d(vectors))
    codes = kmeans_encode(v, codebook)
    # direct difference: exact 0 when a vector coincides with its centroid
    diff = v - codebook.centroids[codes]
    return float(np.sum(diff * diff))


# ---------------------------------------------------------------------------
# residual VQ
# ---------------------------------------------------------------------------


def rvq_fit(vectors: np.ndarray, n_stages: int, k: int, max_iters: int = 50, seed: int = 0) -> RVQCodebooks:
    """Fit `n_stages` codebooks, each on the residuals of the previous ones."""
    vectors = _check_vectors(vectors)
    if n_stages < 1:
        raise QuantizeError(f"n_stages must be >= 1, got {n_stages}")
    residual = vectors.copy()
    stages: list[Codebook] = []
    mean_residuals: list[float] = []
    for s in range(n_stages):
        book = kmeans_fit(residual, k, max_iters=max_iters, seed=derive_seed(seed, f"stage{s}"))
        codes = kmeans_encode(residual, book)
        residual = residual - book.centroids[codes]
        stages.append(book)
        mean_residuals.append(float(np.linalg.norm(residual, axis=1).mean()))
    return RVQCodebooks(tuple(stages), tuple(mean_residuals))


def rvq_encode(vectors: np.ndarray, books: RVQCodebooks) -> np.ndarray:
    """Greedy residual encoding.

    Accepts one vector [D] (returns codes [n_stages]) or a batch [N x D]
    (returns [N x n_stages]).
    """
    single = np.asarray(vectors).ndim == 1
    v = _check_vectors(np.atleast_2d(vectors))
    if v.shape[1] != books.dim:
        raise QuantizeError(f"vector dim {v.shape[1]} != quantizer dim {books.dim}")
    residual = v.copy()
    codes = np.empty((v.shape[0], books.n_stages), dtype=np.int64)
    for s, book in enumerate(books.stages):
        codes[:, s] = kmeans_encode(residual, book)
        residual -= book.centroids[codes[:, s]]
    return codes[0] if single else codes


def rvq_decode(codes: np.ndarray, books: RVQCodebooks) -> np.ndarray:
    """Sum the selected centroids; a prefix of m <= n_stages codes is allowed."""
    single = np.asarray(codes).ndim == 1
    c = np.atleast_2d(np.asarray(codes, dtype=np.int64))
    m = c.shape[1]
    if not 1 <= m <= books.n_stages:
        raise QuantizeError(f"got {m} code stages, quantizer has {books.n_stages}")
    out = np.zeros((c.shape[0], books.dim), dtype=np.float64)
    for s in range(m):
        book = books.stages[s]
        if c[:, s].min() < 0 or c[:, s].max() >= book.k:
            raise QuantizeError(f"stage {s} code out of range [0, {book.k})")
        out += book.centroids[c[:, s]]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# binary file format: magic "RVQ1", D, K, n_stages (LE int32), then per-stage
# centroids as LE float64, row-major
# ---------------------------------------------------------------------------


def save_rvq(path: str | Path, books: RVQCodebooks) -> None:
    ks = {book.k for book in books.stages}
    if len(ks) != 1:
        raise QuantizeError("file format requires a uniform K across stages")
    with Path(path).open("wb") as fh:
        fh.write(RVQ_MAGIC)
        fh.write(struct.pack("<iii", books.dim, books.k, books.n_stages))
        for book in books.stages:
            fh.write(np.ascontiguousarray(book.centroids, dtype="<f8").tobytes())


def load_rvq(path: str | Path) -> RVQCodebooks:
    data = Path(path).read_bytes()
    if data[:4] != RVQ_MAGIC:
        raise QuantizeError(f"{path}: not a quantizer file (bad magic)")
    dim, k, n_stages = struct.unpack_from("<iii", data, 4)
    want = 4 + 12 + 8 * dim * k * n_stages
    if len(data) != want:
        raise QuantizeError(f"{path}: truncated quantizer file ({len(data)} != {want} bytes)")
    stages = []
    offset = 16
    stage_bytes = 8 * dim * k
    for _ in range(n_stages):
        block = np.frombuffer(data, dtype="<f8", count=dim * k, offset=offset)
        stages.append(Codebook(block.reshape(k, dim).astype(np.float64)))
        offset += stage_bytes
    return RVQCodebooks(tuple(stages))
