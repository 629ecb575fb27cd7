"""State-action deduplication.

Trajectories are tiled into non-overlapping fixed-length chunks. Each chunk
becomes one L2-normalized feature combining pooled observations, their
temporal differences, and (scaled) actions. K-means groups look-alike
chunks; within a cluster, a chunk's similarity score is its best cosine
match against any other member. Chunks that near-duplicate an already-kept
chunk are flagged, always leaving at least one representative per duplicate
group.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyInput, IoFailure, KTooLarge
from .trajstore import CurationMask, Dataset, TrajectoryMask, seconds_to_frames

SINGLETON_SENTINEL = -2.0
UNCHUNKED_SENTINEL = -1.0
CEMB_MAGIC = b"CEMB"


@dataclass
class Chunk:
    traj_id: str
    start: int
    span_frames: int
    sub_indices: np.ndarray            # N frame ordinals relative to start
    feature: np.ndarray | None = None  # L2-normalized joint feature
    norm: float = 0.0                  # Euclidean norm before normalization


@dataclass
class DedupConfig:
    """``action_weight=None`` picks λ automatically so the action block's
    RMS matches the visual block's RMS across the dataset; neither modality
    then dominates the cosine geometry. ``k`` overrides the cluster-count
    rule k = max(1, round(num_chunks / target_cluster_size))."""

    chunk_seconds: float = 2.0
    n_subsample: int = 8
    target_cluster_size: int = 50
    k: int | None = None
    action_weight: float | None = None
    epsilon_d: float = 0.99
    seed: int = 0
    max_iters: int = 100
    drop_all_over_threshold: bool = False

    def __post_init__(self):
        if self.chunk_seconds <= 0:
            raise ValueError("chunk_seconds must be > 0")
        if self.n_subsample < 2:
            raise ValueError("n_subsample must be >= 2")
        if self.epsilon_d < -1.0:
            raise ValueError("epsilon_d below -1 is meaningless for cosines")
        if self.action_weight is not None and self.action_weight < 0:
            raise ValueError("action_weight must be >= 0")
        if self.target_cluster_size < 1:
            raise ValueError("target_cluster_size must be >= 1")


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray        # (k, d)
    assignment: np.ndarray       # (n,) cluster id per point
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    reseeds: int = 0             # empty-cluster repairs (each may bump inertia once)


def subsample_indices(span_frames: int, n: int) -> np.ndarray:
    """N uniformly spaced ordinals in [0, span), endpoints included."""
    return np.floor(np.linspace(0, span_frames - 1, n)).astype(np.int64)


def chunk_dataset(ds: Dataset, cfg: DedupConfig) -> list[Chunk]:
    """Tile each trajectory into chunks; a short tail is left unchunked."""
    chunks = []
    for traj in ds.trajectories:
        w = seconds_to_frames(cfg.chunk_seconds, traj.fps)
        sub = subsample_indices(w, cfg.n_subsample)
        for start in range(0, traj.num_frames - w + 1, w):
            chunks.append(Chunk(traj.id, start, w, sub))
    return chunks


def _raw_feature(obs: np.ndarray, actions: np.ndarray, action_weight: float) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    if obs.ndim != 2 or actions.ndim != 2 or obs.shape[0] != actions.shape[0]:
        raise DimensionMismatch(
            f"chunk frames {obs.shape} and actions {actions.shape} disagree"
        )
    z_v = np.concatenate([obs.mean(axis=0), np.diff(obs, axis=0).ravel()])
    z_a = actions.ravel() * action_weight
    return np.concatenate([z_v, z_a])


def embed_chunk(obs: np.ndarray, actions: np.ndarray, action_weight: float) -> np.ndarray:
    """Joint state-action feature for one chunk's N subsampled frames.

    Layout: mean observation (D), consecutive observation differences
    ((N−1)·D), then flattened actions scaled by λ (N·A); L2-normalized.
    An all-zero chunk stays the zero vector.
    """
    raw = _raw_feature(obs, actions, action_weight)
    norm = float(np.linalg.norm(raw))
    return raw / norm if norm > 0 else raw


def resolve_action_weight(ds: Dataset, chunks: list[Chunk], cfg: DedupConfig) -> float:
    """λ from config, or the visual-to-action RMS ratio over all chunks."""
    if cfg.action_weight is not None:
        return float(cfg.action_weight)
    sq_v = sq_a = 0.0
    n_v = n_a = 0
    for chunk in chunks:
        traj = ds.get(chunk.traj_id)
        idx = chunk.start + chunk.sub_indices
        z_v = np.concatenate(
            [
                traj.obs[idx].astype(np.float64).mean(axis=0),
                np.diff(traj.obs[idx].astype(np.float64), axis=0).ravel(),
            ]
        )
        acts = traj.actions[idx].astype(np.float64).ravel()
        sq_v += float((z_v**2).sum())
        sq_a += float((acts**2).sum())
        n_v += z_v.size
        n_a += acts.size
    if n_v == 0 or n_a == 0 or sq_a == 0.0:
        return 1.0
    rms_v = np.sqrt(sq_v / n_v)
    rms_a = np.sqrt(sq_a / n_a)
    return float(rms_v / rms_a) if rms_a > 0 else 1.0


def compute_features(
    ds: Dataset, chunks: list[Chunk], cfg: DedupConfig, threads: int = 1
) -> tuple[np.ndarray, float]:
    """Fill each chunk's feature/norm; returns the (n, d) matrix and λ."""
    lam = resolve_action_weight(ds, chunks, cfg)

    def one(chunk: Chunk) -> np.ndarray:
        traj = ds.get(chunk.traj_id)
        idx = chunk.start + chunk.sub_indices
        raw = _raw_feature(traj.obs[idx], traj.actions[idx], lam)
        chunk.norm = float(np.linalg.norm(raw))
        chunk.feature = raw / chunk.norm if chunk.norm > 0 else raw
        return chunk.feature

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            feats = list(pool.map(one, chunks))
    else:
        feats = [one(c) for c in chunks]
    if not feats:
        return np.empty((0, 0)), lam
    return np.stack(feats), lam


def default_k(num_chunks: int, target_cluster_size: int = 50) -> int:
    return max(1, int(round(num_chunks / target_cluster_size)))


def _assign(features: np.ndarray, centroids: np.ndarray, threads: int = 1) -> np.ndarray:
    def block(rows: np.ndarray) -> np.ndarray:
        d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)

    n = features.shape[0]
    if threads > 1 and n > 1:
        splits = np.array_split(np.arange(n), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ix: block(features[ix]), splits))
        return np.concatenate(parts)
    return block(features)


def kmeans(
    features: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    threads: int = 1,
) -> ClusterModel:
    """Seeded k-means++ plus Lloyd iterations to an assignment fixpoint.

    Empty clusters are re-seeded with the point currently farthest from its
    centroid. Centroid accumulation is single-threaded in fixed order, so
    the result does not depend on ``threads``.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n == 0:
        raise EmptyInput("kmeans needs at least one feature")
    if k > n:
        raise KTooLarge(k, n)
    if k < 1:
        raise ValueError("k must be >= 1")

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, features.shape[1]))
    centroids[0] = features[int(rng.integers(n))]
    d2 = ((features - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            pick = int(rng.integers(n))
        centroids[c] = features[pick]
        d2 = np.minimum(d2, ((features - centroids[c]) ** 2).sum(axis=1))

    assignment = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    converged = False
    reseeds = 0
    for _ in range(max_iters):
        new_assignment = _assign(features, centroids, threads)
        inertia = float(((features - centroids[new_assignment]) ** 2).sum())
        history.append(inertia)
        if np.array_equal(new_assignment, assignment):
            converged = True
            break
        assignment = new_assignment
        reseeded: set[int] = set()
        for c in range(k):
            members = assignment == c
            if members.any():
                centroids[c] = features[members].mean(axis=0)
        # re-seed any emptied cluster with the globally farthest point
        dists = ((features - centroids[assignment]) ** 2).sum(axis=1)
        for c in range(k):
            if not (assignment == c).any():
                order = np.argsort(-dists, kind="stable")
                far = next(int(i) for i in order if int(i) not in reseeded)
                reseeded.add(far)
                centroids[c] = features[far]
                reseeds += 1
    if not converged:
        # hit the iteration cap mid-update: re-anchor to the final centroids
        assignment = _assign(features, centroids, threads)
        history.append(float(((features - centroids[assignment]) ** 2).sum()))
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignment=assignment,
        inertia=history[-1],
        inertia_history=history,
        reseeds=reseeds,
    )


def similarity_scores(model: ClusterModel, features: np.ndarray, threads: int = 1) -> np.ndarray:
    """Best cosine match against any other same-cluster chunk.

    Members of singleton clusters have nothing to match and get the sentinel
    −2, which no threshold in [−1, 1] can exceed.
    """
    features = np.asarray(features, dtype=np.float64)
    scores = np.full(features.shape[0], SINGLETON_SENTINEL)

    def one_cluster(c: int) -> None:
        members = np.flatnonzero(model.assignment == c)
        if members.size < 2:
            return
        sims = features[members] @ features[members].T
        np.fill_diagonal(sims, -np.inf)
        scores[members] = sims.max(axis=1)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one_cluster, range(model.k)))
    else:
        for c in range(model.k):
            one_cluster(c)
    return scores


def duplicate_mask(
    chunks: list[Chunk],
    scores: np.ndarray,
    features: np.ndarray,
    model: ClusterModel,
    epsilon_d: float,
    traj_lens: dict[str, int],
    drop_all_over_threshold: bool = False,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Per-chunk and per-frame drop flags.

    Within each cluster, chunks are visited in descending distance from the
    centroid (ties broken by (traj_id, start)); a chunk is dropped iff its
    cosine to some already-kept chunk exceeds ``epsilon_d``, so one
    representative of every duplicate group always survives. The
    ``drop_all_over_threshold`` variant instead drops every chunk whose
    similarity score exceeds the threshold, representatives included.
    """
    n = len(chunks)
    chunk_drop = np.zeros(n, dtype=bool)
    if n:
        if drop_all_over_threshold:
            chunk_drop = np.asarray(scores) > epsilon_d
        else:
            dists = ((features - model.centroids[model.assignment]) ** 2).sum(axis=1)
            for c in range(model.k):
                members = np.flatnonzero(model.assignment == c)
                if members.size < 2:
                    continue
                order = sorted(
                    members,
                    key=lambda i: (-dists[i], chunks[i].traj_id, chunks[i].start),
                )
                kept: list[int] = []
                for i in order:
                    if kept and (features[i] @ features[kept].T > epsilon_d).any():
                        chunk_drop[i] = True
                    else:
                        kept.append(i)

    frame_drop = {tid: np.zeros(length, dtype=bool) for tid, length in traj_lens.items()}
    for chunk, dropped in zip(chunks, chunk_drop):
        if dropped:
            frame_drop[chunk.traj_id][chunk.start : chunk.start + chunk.span_frames] = True
    return chunk_drop, frame_drop


def cluster_dataset(
    ds: Dataset,
    cfg: DedupConfig,
    precomputed: np.ndarray | None = None,
    threads: int = 1,
) -> tuple[list[Chunk], np.ndarray, ClusterModel, np.ndarray]:
    """chunk → embed → cluster → score, without masking.

    Exposed separately so threshold sweeps can reuse one clustering.
    """
    chunks = chunk_dataset(ds, cfg)
    if precomputed is not None:
        if precomputed.shape[0] != len(chunks):
            raise DimensionMismatch(
                f"{precomputed.shape[0]} precomputed embeddings for {len(chunks)} chunks"
            )
        norms = np.linalg.norm(precomputed, axis=1)
        features = np.where(norms[:, None] > 0, precomputed / np.maximum(norms, 1e-300)[:, None], 0.0)
        for chunk, feat, nrm in zip(chunks, features, norms):
            chunk.feature = feat
            chunk.norm = float(nrm)
    else:
        features, _ = compute_features(ds, chunks, cfg, threads)
    if not chunks:
        empty = np.empty((0, 0))
        return chunks, empty, ClusterModel(0, empty, np.empty(0, dtype=np.int64), 0.0, []), np.empty(0)
    k = cfg.k if cfg.k is not None else default_k(len(chunks), cfg.target_cluster_size)
    model = kmeans(features, min(k, len(chunks)), cfg.seed, cfg.max_iters, threads)
    scores = similarity_scores(model, features, threads)
    return chunks, features, model, scores


def dedup_dataset(
    ds: Dataset,
    cfg: DedupConfig,
    precomputed: np.ndarray | None = None,
    threads: int = 1,
) -> tuple[CurationMask, dict]:
    """Run the full dedup pipeline; returns masks and a JSON-ready report."""
    chunks, features, model, scores = cluster_dataset(ds, cfg, precomputed, threads)
    traj_lens = {t.id: t.num_frames for t in ds.trajectories}
    _, frame_drop = duplicate_mask(
        chunks, scores, features, model, cfg.epsilon_d, traj_lens,
        cfg.drop_all_over_threshold,
    )

    sim_per_frame = {
        tid: np.full(length, UNCHUNKED_SENTINEL) for tid, length in traj_lens.items()
    }
    for chunk, score in zip(chunks, scores):
        sim_per_frame[chunk.traj_id][chunk.start : chunk.start + chunk.span_frames] = score

    masks = {}
    for traj in ds.trajectories:
        drop = frame_drop[traj.id]
        masks[traj.id] = TrajectoryMask(
            traj_id=traj.id,
            keep=(~drop).tolist(),
            reason=["duplicate" if d else "" for d in drop],
            subopt_score=[0.0] * traj.num_frames,
            dup_similarity=sim_per_frame[traj.id].tolist(),
        )
    mask = CurationMask(masks=masks)
    return mask, dedup_report(chunks, model, scores, mask)


def dedup_report(
    chunks: list[Chunk], model: ClusterModel, scores: np.ndarray, mask: CurationMask
) -> dict:
    sizes = np.bincount(model.assignment, minlength=model.k) if model.k else np.empty(0, int)
    size_values, size_counts = np.unique(sizes, return_counts=True) if model.k else ((), ())
    real = np.asarray(scores)[np.asarray(scores) > SINGLETON_SENTINEL]
    edges = np.linspace(-1.0, 1.0, 65)
    counts, _ = np.histogram(np.clip(real, -1.0, 1.0), bins=edges) if real.size else (np.zeros(64, int), None)
    return {
        "format_version": 1,
        "k": model.k,
        "num_chunks": len(chunks),
        "num_singletons": int((np.asarray(scores) == SINGLETON_SENTINEL).sum()),
        "cluster_size_histogram": [[int(v), int(c)] for v, c in zip(size_values, size_counts)],
        "similarity_histogram": {"bin_edges": edges.tolist(), "counts": counts.tolist()},
        "deletion_ratio": mask.deletion_ratio(),
    }


# --- precomputed chunk embeddings ----------------------------------------------


def load_chunk_embeddings(path: str | Path) -> np.ndarray:
    """Read the packed embedding file: magic ``CEMB``, u32 count, u32 dim,
    then count·dim little-endian f32 in chunk order."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(raw) < 12 or raw[:4] != CEMB_MAGIC:
        raise IoFailure(f"{path}: not a chunk-embedding file")
    count, dim = struct.unpack("<II", raw[4:12])
    expected = 12 + count * dim * 4
    if len(raw) != expected:
        raise IoFailure(f"{path}: {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw[12:], dtype="<f4").astype(np.float64).reshape(count, dim)


def save_chunk_embeddings(path: str | Path, embeddings: np.ndarray) -> None:
    arr = np.ascontiguousarray(embeddings, dtype="<f4")
    if arr.ndim != 2:
        raise DimensionMismatch("embeddings must be a 2-D array")
    try:
        with open(path, "wb") as fh:
            fh.write(CEMB_MAGIC)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
