"""Container format, windowing math, and curation-mask round trips."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajcurate.errors import (
    DimensionMismatch,
    InvalidManifest,
    IoFailure,
    MaskShapeMismatch,
    MissingManifest,
    NonFiniteValue,
    TruncatedBlob,
)
from trajcurate.trajstore import (
    CurationMask,
    Dataset,
    Trajectory,
    TrajectoryMask,
    load_dataset,
    read_masks,
    save_dataset,
    seconds_to_frames,
    sliding_windows,
    write_masks,
)

from conftest import make_dataset, make_trajectory


# --- frame/second conversion ----------------------------------------------------


def test_seconds_to_frames_pins():
    assert seconds_to_frames(2.0, 10.0) == 20
    assert seconds_to_frames(1.0, 30.0) == 30
    # rounds half up
    assert seconds_to_frames(0.25, 10.0) == 3
    assert seconds_to_frames(0.24, 10.0) == 2
    # never below one frame
    assert seconds_to_frames(0.01, 10.0) == 1


@pytest.mark.parametrize("seconds,fps", [(0.0, 10.0), (-1.0, 10.0), (1.0, 0.0), (1.0, -5.0)])
def test_seconds_to_frames_rejects_nonpositive(seconds, fps):
    with pytest.raises(ValueError):
        seconds_to_frames(seconds, fps)


@given(
    seconds=st.floats(min_value=0.01, max_value=100.0, allow_nan=False),
    fps=st.floats(min_value=0.1, max_value=240.0, allow_nan=False),
)
def test_seconds_to_frames_matches_round_half_up(seconds, fps):
    w = seconds_to_frames(seconds, fps)
    assert w >= 1
    assert w == max(1, int(np.floor(seconds * fps + 0.5)))


# --- sliding windows --------------------------------------------------------------


def test_sliding_windows_dense():
    rng = np.random.default_rng(0)
    traj = make_trajectory(rng, n=7, fps=10.0)
    wins = list(sliding_windows(traj, 0.3))  # 3 frames at 10 fps
    assert [w.start for w in wins] == [0, 1, 2, 3, 4]
    assert all(w.span_frames == 3 for w in wins)
    assert all(w.span_seconds == pytest.approx(0.3) for w in wins)
    assert all(w.traj_id == traj.id for w in wins)


def test_sliding_windows_stride():
    rng = np.random.default_rng(0)
    traj = make_trajectory(rng, n=10, fps=10.0)
    assert [w.start for w in sliding_windows(traj, 0.3, stride_frames=2)] == [0, 2, 4, 6]
    with pytest.raises(ValueError):
        list(sliding_windows(traj, 0.3, stride_frames=0))


def test_sliding_windows_short_trajectory_yields_nothing():
    rng = np.random.default_rng(0)
    traj = make_trajectory(rng, n=5, fps=10.0)
    assert list(sliding_windows(traj, 2.0)) == []  # needs 20 frames


@given(n=st.integers(1, 60), w=st.integers(1, 25), stride=st.integers(1, 5))
@settings(max_examples=60)
def test_sliding_windows_counts(n, w, stride):
    rng = np.random.default_rng(0)
    traj = make_trajectory(rng, n=n, fps=1.0)
    wins = list(sliding_windows(traj, float(w), stride_frames=stride))
    expected = 0 if n < w else (n - w) // stride + 1
    assert len(wins) == expected
    # every window fits
    assert all(0 <= win.start and win.start + win.span_frames <= n for win in wins)


# --- dataset container -------------------------------------------------------------


def test_dataset_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(3)
    ds = make_dataset(rng, num_traj=3, n=17)
    ds.trajectories[0].labels = ["clean"] * 17
    save_dataset(ds, tmp_path / "data")
    back = load_dataset(tmp_path / "data")
    assert len(back) == 3
    assert back.obs_dim == ds.obs_dim and back.action_dim == ds.action_dim
    for a, b in zip(ds.trajectories, back.trajectories):
        assert a.id == b.id and a.fps == b.fps
        assert a.obs.dtype == b.obs.dtype == np.float32
        np.testing.assert_array_equal(a.obs, b.obs)
        np.testing.assert_array_equal(a.actions, b.actions)
        assert a.labels == b.labels


def test_dataset_save_is_deterministic(tmp_path):
    rng = np.random.default_rng(4)
    ds = make_dataset(rng, num_traj=2, n=9)
    save_dataset(ds, tmp_path / "a")
    save_dataset(ds, tmp_path / "b")
    for name in ["manifest.json", "trajectories/t000.bin"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_load_dataset_threads_match(tmp_path):
    rng = np.random.default_rng(5)
    ds = make_dataset(rng, num_traj=6, n=12)
    save_dataset(ds, tmp_path / "data")
    one = load_dataset(tmp_path / "data", threads=1)
    four = load_dataset(tmp_path / "data", threads=4)
    for a, b in zip(one.trajectories, four.trajectories):
        assert a.id == b.id
        np.testing.assert_array_equal(a.obs, b.obs)
        np.testing.assert_array_equal(a.actions, b.actions)


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingManifest):
        load_dataset(tmp_path / "nope")


def test_invalid_manifest_json(tmp_path):
    root = tmp_path / "data"
    root.mkdir()
    (root / "manifest.json").write_text("{not json")
    with pytest.raises(InvalidManifest):
        load_dataset(root)


def test_manifest_missing_key(tmp_path):
    root = tmp_path / "data"
    root.mkdir()
    (root / "manifest.json").write_text(json.dumps({"format_version": 1, "obs_dim": 2}))
    with pytest.raises(InvalidManifest):
        load_dataset(root)


def _saved_dataset(tmp_path, **kw):
    rng = np.random.default_rng(6)
    ds = make_dataset(rng, **kw)
    save_dataset(ds, tmp_path / "data")
    return tmp_path / "data"


def test_truncated_blob(tmp_path):
    root = _saved_dataset(tmp_path, num_traj=1, n=10)
    blob = root / "trajectories" / "t000.bin"
    blob.write_bytes(blob.read_bytes()[:-7])
    with pytest.raises(TruncatedBlob):
        load_dataset(root)


def test_bad_magic(tmp_path):
    root = _saved_dataset(tmp_path, num_traj=1, n=10)
    blob = root / "trajectories" / "t000.bin"
    raw = bytearray(blob.read_bytes())
    raw[:4] = b"XXXX"
    blob.write_bytes(bytes(raw))
    with pytest.raises(TruncatedBlob):
        load_dataset(root)


def test_missing_blob(tmp_path):
    root = _saved_dataset(tmp_path, num_traj=1, n=10)
    (root / "trajectories" / "t000.bin").unlink()
    with pytest.raises(TruncatedBlob):
        load_dataset(root)


def test_frame_count_mismatch(tmp_path):
    root = _saved_dataset(tmp_path, num_traj=1, n=10)
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["trajectories"][0]["num_frames"] = 11
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(TruncatedBlob):
        load_dataset(root)


def test_row_width_mismatch_is_dimension_error(tmp_path):
    # blob written with 6+3 floats per row, manifest claims 5+3
    root = _saved_dataset(tmp_path, num_traj=1, n=10)
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["obs_dim"] = 5
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DimensionMismatch):
        load_dataset(root)


def test_nonfinite_rejected(tmp_path):
    rng = np.random.default_rng(7)
    ds = make_dataset(rng, num_traj=1, n=10)
    ds.trajectories[0].obs[3, 1] = np.nan
    with pytest.raises(NonFiniteValue) as err:
        save_dataset(ds, tmp_path / "data")
    assert "frame 3" in str(err.value)


def test_unsafe_id_rejected(tmp_path):
    rng = np.random.default_rng(8)
    ds = make_dataset(rng, num_traj=1, n=4)
    ds.trajectories[0].id = "../evil"
    with pytest.raises(IoFailure):
        save_dataset(ds, tmp_path / "data")


def test_trajectory_validate_errors():
    rng = np.random.default_rng(9)
    traj = make_trajectory(rng, n=5, obs_dim=4, action_dim=2)
    with pytest.raises(DimensionMismatch):
        traj.validate(obs_dim=3, action_dim=2)
    traj2 = make_trajectory(rng, n=5)
    traj2.fps = 0.0
    with pytest.raises(InvalidManifest):
        traj2.validate(6, 3)


def test_blob_header_layout(tmp_path):
    """The on-disk layout is magic, u32 version, u32 count, then f32 rows."""
    root = _saved_dataset(tmp_path, num_traj=1, n=4, obs_dim=2, action_dim=1)
    raw = (root / "trajectories" / "t000.bin").read_bytes()
    assert raw[:4] == b"TRJC"
    version, count = struct.unpack("<II", raw[4:12])
    assert (version, count) == (1, 4)
    assert len(raw) == 12 + 4 * 3 * 4
    ds = load_dataset(root)
    flat = np.frombuffer(raw[12:], dtype="<f4").reshape(4, 3)
    np.testing.assert_array_equal(flat[:, :2], ds.trajectories[0].obs)


@given(
    n=st.integers(1, 20),
    obs_dim=st.integers(1, 8),
    action_dim=st.integers(1, 4),
    seed=st.integers(0, 2**16),
)
@settings(max_examples=25, deadline=None)
def test_round_trip_property(tmp_path_factory, n, obs_dim, action_dim, seed):
    rng = np.random.default_rng(seed)
    ds = make_dataset(rng, num_traj=2, n=n, obs_dim=obs_dim, action_dim=action_dim)
    root = tmp_path_factory.mktemp("rt")
    save_dataset(ds, root)
    back = load_dataset(root)
    for a, b in zip(ds.trajectories, back.trajectories):
        np.testing.assert_array_equal(a.obs, b.obs)
        np.testing.assert_array_equal(a.actions, b.actions)


# --- curation masks ----------------------------------------------------------------


def _mask(traj_id="t0", keep=(1, 0, 1), reason=("", "suboptimal", "")):
    n = len(keep)
    return TrajectoryMask(
        traj_id=traj_id,
        keep=np.array(keep, dtype=bool),
        reason=list(reason),
        subopt_score=np.linspace(0, 1, n),
        dup_similarity=np.full(n, -1.0),
    )


def test_mask_shape_validation():
    with pytest.raises(MaskShapeMismatch):
        TrajectoryMask("t0", np.ones(3, bool), [""] * 2, np.zeros(3), np.zeros(3))
    with pytest.raises(MaskShapeMismatch):
        _mask(reason=("", "bogus", ""))


def test_keep_all():
    m = TrajectoryMask.keep_all("t9", 5)
    assert m.keep.all() and m.reason == [""] * 5
    assert (m.dup_similarity == -1.0).all()


def test_curation_mask_counting():
    cm = CurationMask(masks={
        "a": _mask("a", keep=(1, 0, 0), reason=("", "suboptimal", "duplicate")),
        "b": _mask("b", keep=(0, 1, 1), reason=("both", "", "")),
    })
    assert cm.total_frames == 6
    assert cm.dropped_frames() == 3
    assert cm.dropped_frames(reasons=("suboptimal", "both")) == 2
    assert cm.dropped_frames(reasons=("duplicate",)) == 1
    assert cm.deletion_ratio() == pytest.approx(0.5)
    assert cm["a"].traj_id == "a"


def test_empty_mask_ratio_is_zero():
    assert CurationMask(masks={}).deletion_ratio() == 0.0


def test_mask_round_trip(tmp_path):
    cm = CurationMask(masks={
        "a": _mask("a"),
        "b": _mask("b", keep=(0, 0, 1, 1), reason=("both", "duplicate", "", "")),
    })
    write_masks(cm, tmp_path)
    assert (tmp_path / "masks" / "a.json").is_file()
    back = read_masks(tmp_path / "masks")
    assert set(back.masks) == {"a", "b"}
    for tid in cm.masks:
        np.testing.assert_array_equal(back[tid].keep, cm[tid].keep)
        assert back[tid].reason == cm[tid].reason
        np.testing.assert_array_equal(back[tid].subopt_score, cm[tid].subopt_score)
        np.testing.assert_array_equal(back[tid].dup_similarity, cm[tid].dup_similarity)


def test_mask_files_are_valid_sorted_json(tmp_path):
    write_masks(CurationMask(masks={"a": _mask("a")}), tmp_path)
    text = (tmp_path / "masks" / "a.json").read_text()
    assert text.endswith("\n")
    doc = json.loads(text)
    assert list(doc) == sorted(doc)
    assert doc["format_version"] == 1


@given(
    keep=st.lists(st.booleans(), min_size=1, max_size=30),
    seed=st.integers(0, 2**16),
)
@settings(max_examples=30, deadline=None)
def test_mask_round_trip_property(tmp_path_factory, keep, seed):
    rng = np.random.default_rng(seed)
    n = len(keep)
    reasons = ["" if k else rng.choice(["suboptimal", "duplicate", "both"]) for k in keep]
    cm = CurationMask(masks={
        "t": TrajectoryMask("t", np.array(keep), reasons,
                            rng.normal(size=n), rng.uniform(-2, 1, n)),
    })
    root = tmp_path_factory.mktemp("masks")
    write_masks(cm, root)
    back = read_masks(root / "masks")
    np.testing.assert_array_equal(back["t"].keep, cm["t"].keep)
    assert back["t"].reason == cm["t"].reason
    # JSON float text round-trips IEEE doubles exactly
    np.testing.assert_array_equal(back["t"].subopt_score, cm["t"].subopt_score)
    np.testing.assert_array_equal(back["t"].dup_similarity, cm["t"].dup_similarity)
