"""Trajectory dataset model, on-disk container, and windowing utilities.

Container layout::

    <root>/manifest.json
    <root>/trajectories/<id>.bin

``manifest.json`` carries ``format_version`` (=1), ``obs_dim``, ``action_dim``
and a ``trajectories`` index of ``{id, fps, num_frames, labels?}``. Each blob
is ``TRJC`` magic, u32 LE format version, u32 LE frame count, then one record
per frame: ``obs_dim`` f32 LE followed by ``action_dim`` f32 LE, no padding.

Per-frame curation masks (written by the scoring/dedup stages) live in
``<out>/masks/<id>.json``; see :class:`TrajectoryMask`.
"""

from __future__ import annotations

import json
import math
import os
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidManifest,
    IoFailure,
    MaskShapeMismatch,
    MissingManifest,
    NonFiniteValue,
    TruncatedBlob,
)

FORMAT_VERSION = 1
BLOB_MAGIC = b"TRJC"

_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass
class FeatureFrame:
    """One transition: observation embedding + action vector at a frame."""

    index: int
    obs_embedding: np.ndarray
    action: np.ndarray


@dataclass
class Trajectory:
    """Ordered frames at a fixed control frequency.

    ``obs`` is (n, D) float32 and ``actions`` is (n, A) float32; frame ``i``
    occurs at wall-clock time ``i / fps`` seconds.
    """

    id: str
    fps: float
    obs: np.ndarray
    actions: np.ndarray
    labels: list[str] | None = None

    def __len__(self) -> int:
        return self.obs.shape[0]

    @property
    def num_frames(self) -> int:
        return self.obs.shape[0]

    @property
    def duration_seconds(self) -> float:
        return self.num_frames / self.fps

    def frame(self, i: int) -> FeatureFrame:
        return FeatureFrame(index=i, obs_embedding=self.obs[i], action=self.actions[i])

    def validate(self, obs_dim: int, action_dim: int) -> None:
        if self.fps <= 0:
            raise InvalidManifest(f"trajectory '{self.id}': fps must be positive, got {self.fps}")
        if self.num_frames == 0:
            raise InvalidManifest(f"trajectory '{self.id}': empty trajectory")
        if self.obs.shape != (self.num_frames, obs_dim):
            raise DimensionMismatch(
                f"obs shape {self.obs.shape} != ({self.num_frames}, {obs_dim})", self.id
            )
        if self.actions.shape != (self.num_frames, action_dim):
            raise DimensionMismatch(
                f"action shape {self.actions.shape} != ({self.num_frames}, {action_dim})", self.id
            )
        for name, arr in (("obs", self.obs), ("action", self.actions)):
            finite = np.isfinite(arr).all(axis=1)
            if not finite.all():
                raise NonFiniteValue(self.id, int(np.argmin(finite)))
        if self.labels is not None and len(self.labels) != self.num_frames:
            raise InvalidManifest(
                f"trajectory '{self.id}': {len(self.labels)} labels for {self.num_frames} frames"
            )


@dataclass
class Dataset:
    """A collection of trajectories with uniform obs/action dimensions."""

    trajectories: list[Trajectory]
    obs_dim: int
    action_dim: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def total_frames(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def get(self, traj_id: str) -> Trajectory:
        for t in self.trajectories:
            if t.id == traj_id:
                return t
        raise KeyError(traj_id)

    def validate(self) -> None:
        seen: set[str] = set()
        for traj in self.trajectories:
            if traj.id in seen:
                raise InvalidManifest(f"duplicate trajectory id '{traj.id}'")
            seen.add(traj.id)
            traj.validate(self.obs_dim, self.action_dim)


@dataclass(frozen=True)
class Window:
    """A contiguous span of ``span_frames`` frames starting at ``start``."""

    traj_id: str
    start: int
    span_frames: int
    span_seconds: float


def seconds_to_frames(seconds: float, fps: float) -> int:
    """Convert a duration to a frame count, rounding half up, floor 1."""
    if seconds <= 0 or fps <= 0:
        raise ValueError("seconds and fps must be positive")
    return max(1, int(math.floor(seconds * fps + 0.5)))


def sliding_windows(traj: Trajectory, span_seconds: float, stride_frames: int = 1) -> Iterator[Window]:
    """Yield every window of ``span_seconds`` that fits in the trajectory.

    Starts ascend from 0 in steps of ``stride_frames``; a trajectory shorter
    than one window yields nothing.
    """
    if stride_frames < 1:
        raise ValueError("stride_frames must be >= 1")
    w = seconds_to_frames(span_seconds, traj.fps)
    for start in range(0, len(traj) - w + 1, stride_frames):
        yield Window(traj.id, start, w, w / traj.fps)


# --- container i/o ------------------------------------------------------------


def _write_blob(path: Path, traj: Trajectory) -> None:
    payload = np.concatenate(
        [traj.obs.astype(np.float32, copy=False), traj.actions.astype(np.float32, copy=False)],
        axis=1,
    )
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, traj.num_frames))
        fh.write(payload.astype("<f4").tobytes())


def _read_blob(path: Path, traj_id: str, obs_dim: int, action_dim: int, num_frames: int) -> tuple[np.ndarray, np.ndarray]:
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise TruncatedBlob(traj_id, "blob file missing")
    if len(raw) < 12 or raw[:4] != BLOB_MAGIC:
        raise TruncatedBlob(traj_id, "bad or missing TRJC header")
    version, n = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise TruncatedBlob(traj_id, f"unsupported blob format_version {version}")
    if n != num_frames:
        raise TruncatedBlob(traj_id, f"blob declares {n} frames, manifest {num_frames}")
    payload = raw[12:]
    row = obs_dim + action_dim
    expected = num_frames * row * 4
    if len(payload) != expected:
        # A whole number of same-width rows of the wrong width is a dimension
        # problem; anything else is truncation/corruption.
        if (
            num_frames > 0
            and len(payload) % (4 * num_frames) == 0
            and len(payload) // (4 * num_frames) != row
        ):
            raise DimensionMismatch(
                f"blob rows have {len(payload) // (4 * num_frames)} floats, manifest "
                f"declares {row}",
                traj_id,
            )
        raise TruncatedBlob(traj_id, f"payload {len(payload)} bytes, expected {expected}")
    flat = np.frombuffer(payload, dtype="<f4").reshape(num_frames, row)
    obs = np.ascontiguousarray(flat[:, :obs_dim])
    actions = np.ascontiguousarray(flat[:, obs_dim:])
    return obs, actions


def save_dataset(ds: Dataset, root_path: str | os.PathLike) -> None:
    """Write the manifest + one blob per trajectory; round-trips bit-exactly."""
    ds.validate()
    root = Path(root_path)
    try:
        (root / "trajectories").mkdir(parents=True, exist_ok=True)
        index = []
        for traj in ds.trajectories:
            if not _ID_RE.match(traj.id):
                raise IoFailure(f"trajectory id '{traj.id}' is not filename-safe")
            entry = {"id": traj.id, "fps": traj.fps, "num_frames": traj.num_frames}
            if traj.labels is not None:
                entry["labels"] = traj.labels
            index.append(entry)
            _write_blob(root / "trajectories" / f"{traj.id}.bin", traj)
        manifest = {
            "format_version": FORMAT_VERSION,
            "obs_dim": ds.obs_dim,
            "action_dim": ds.action_dim,
            "meta": ds.meta,
            "trajectories": index,
        }
        with open(root / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_dataset(root_path: str | os.PathLike, threads: int = 1) -> Dataset:
    """Load and validate a dataset container.

    Rejects dimension mismatches, truncated blobs and non-finite values.
    Blob reads parallelize across trajectories when ``threads > 1``.
    """
    root = Path(root_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingManifest(str(root))
    try:
        manifest = json.loads(manifest_path.read_text())
    except (json.JSONDecodeError, OSError) as exc:
        raise InvalidManifest(f"unreadable manifest: {exc}") from exc
    for key in ("format_version", "obs_dim", "action_dim", "trajectories"):
        if key not in manifest:
            raise InvalidManifest(f"manifest missing '{key}'")
    if manifest["format_version"] != FORMAT_VERSION:
        raise InvalidManifest(f"unsupported format_version {manifest['format_version']}")
    obs_dim = int(manifest["obs_dim"])
    action_dim = int(manifest["action_dim"])
    if obs_dim <= 0 or action_dim <= 0:
        raise InvalidManifest("obs_dim and action_dim must be positive")

    entries = manifest["trajectories"]

    def load_one(entry: dict) -> Trajectory:
        for key in ("id", "fps", "num_frames"):
            if key not in entry:
                raise InvalidManifest(f"trajectory entry missing '{key}'")
        traj_id = str(entry["id"])
        num_frames = int(entry["num_frames"])
        if num_frames <= 0:
            raise InvalidManifest(f"trajectory '{traj_id}': num_frames must be positive")
        obs, actions = _read_blob(
            root / "trajectories" / f"{traj_id}.bin", traj_id, obs_dim, action_dim, num_frames
        )
        labels = entry.get("labels")
        if labels is not None:
            labels = [str(x) for x in labels]
        return Trajectory(id=traj_id, fps=float(entry["fps"]), obs=obs, actions=actions, labels=labels)

    if threads > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajectories = list(pool.map(load_one, entries))
    else:
        trajectories = [load_one(e) for e in entries]

    ds = Dataset(
        trajectories=trajectories,
        obs_dim=obs_dim,
        action_dim=action_dim,
        meta=manifest.get("meta", {}),
    )
    ds.validate()
    return ds


# --- curation masks -----------------------------------------------------------

REASONS = ("", "suboptimal", "duplicate", "both")


@dataclass
class TrajectoryMask:
    """Per-frame keep/drop decisions with provenance for one trajectory.

    ``dup_similarity`` is −1 on frames not covered by any chunk and −2 on
    frames whose chunk sits alone in its cluster.
    """

    traj_id: str
    keep: np.ndarray
    reason: list[str]
    subopt_score: np.ndarray
    dup_similarity: np.ndarray

    def __post_init__(self):
        self.keep = np.asarray(self.keep, dtype=bool)
        self.subopt_score = np.asarray(self.subopt_score, dtype=np.float64)
        self.dup_similarity = np.asarray(self.dup_similarity, dtype=np.float64)
        n = self.keep.shape[0]
        if not (len(self.reason) == n == self.subopt_score.shape[0] == self.dup_similarity.shape[0]):
            raise MaskShapeMismatch(f"trajectory '{self.traj_id}': mask arrays disagree in length")
        bad = set(self.reason) - set(REASONS)
        if bad:
            raise MaskShapeMismatch(f"trajectory '{self.traj_id}': invalid reasons {sorted(bad)}")

    @classmethod
    def keep_all(cls, traj_id: str, n: int) -> "TrajectoryMask":
        return cls(
            traj_id=traj_id,
            keep=np.ones(n, dtype=bool),
            reason=[""] * n,
            subopt_score=np.zeros(n),
            dup_similarity=np.full(n, -1.0),
        )


@dataclass
class CurationMask:
    """Masks for a whole dataset, keyed by trajectory id."""

    masks: dict[str, TrajectoryMask]

    def __getitem__(self, traj_id: str) -> TrajectoryMask:
        return self.masks[traj_id]

    @property
    def total_frames(self) -> int:
        return sum(m.keep.shape[0] for m in self.masks.values())

    def dropped_frames(self, reasons: tuple[str, ...] | None = None) -> int:
        count = 0
        for m in self.masks.values():
            if reasons is None:
                count += int((~m.keep).sum())
            else:
                count += sum(1 for k, r in zip(m.keep, m.reason) if not k and r in reasons)
        return count

    def deletion_ratio(self, reasons: tuple[str, ...] | None = None) -> float:
        total = self.total_frames
        return self.dropped_frames(reasons) / total if total else 0.0


def write_masks(mask: CurationMask, out_dir: str | os.PathLike) -> None:
    """Write one ``masks/<id>.json`` per trajectory under ``out_dir``."""
    masks_dir = Path(out_dir) / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)
    for traj_id in sorted(mask.masks):
        m = mask.masks[traj_id]
        doc = {
            "format_version": FORMAT_VERSION,
            "id": traj_id,
            "keep": [int(k) for k in m.keep],
            "reason": list(m.reason),
            "subopt_score": [float(x) for x in m.subopt_score],
            "dup_similarity": [float(x) for x in m.dup_similarity],
        }
        with open(masks_dir / f"{traj_id}.json", "w") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")


def read_masks(masks_dir: str | os.PathLike) -> CurationMask:
    """Load every ``*.json`` mask in a directory."""
    masks: dict[str, TrajectoryMask] = {}
    for path in sorted(Path(masks_dir).glob("*.json")):
        doc = json.loads(path.read_text())
        m = TrajectoryMask(
            traj_id=doc["id"],
            keep=np.array(doc["keep"], dtype=bool),
            reason=[str(r) for r in doc["reason"]],
            subopt_score=np.array(doc["subopt_score"], dtype=np.float64),
            dup_similarity=np.array(doc["dup_similarity"], dtype=np.float64),
        )
        masks[m.traj_id] = m
    return CurationMask(masks=masks)
