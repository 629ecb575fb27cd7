"""Generate a synthetic benchmark and look inside the container format.

Clean trajectories move a point agent monotonically through a latent task
phase; anomalies rewrite segments of that motion, and near-identical
chunks are planted across trajectories as duplicates. Everything is
deterministic given the seed, so a benchmark is reproducible bytes.
"""

import json
import tempfile
from pathlib import Path

from trajcurate.synthgen import SynthConfig, generate, separation_self_check
from trajcurate.trajstore import load_dataset, save_dataset

cfg = SynthConfig(
    num_traj=30,
    frames_per_traj=200,
    obs_dim=32,
    anomaly_rates={"pause": 0.1, "back_and_forth": 0.1},
    duplicate_rate=0.05,
    seed=7,
)
ds, gt = generate(cfg)

print(f"{len(ds.trajectories)} trajectories, obs_dim={ds.obs_dim}, action_dim={ds.action_dim}")

# ground truth knows which frames were rewritten and what was planted where
kinds = {}
for tid, segments in gt.anomaly_segments.items():
    for start, end, kind in segments:
        kinds[kind] = kinds.get(kind, 0) + 1
        if kinds[kind] == 1:
            print(f"example {kind}: {tid} frames [{start}, {end})")
print(f"anomaly segments by type: {kinds}")
print(f"planted duplicate groups: {len(gt.groups())}")

# the embedding geometry the deduper relies on: planted twins nearly
# identical, everything else well below the 0.99 decision threshold
check = separation_self_check(ds, gt)
print(f"planted min cosine:     {check['planted_min_similarity']:.5f}")
print(f"non-planted max cosine: {check['nonplanted_max_similarity']:.5f}")

# round-trip through the on-disk container: manifest + one blob per trajectory
with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp) / "bench"
    save_dataset(ds, root)
    gt.save(root / "ground_truth.json")
    manifest = json.loads((root / "manifest.json").read_text())
    print(f"manifest format_version={manifest['format_version']}, "
          f"{len(manifest['trajectories'])} entries")
    first = manifest["trajectories"][0]
    print(f"first entry: id={first['id']} fps={first['fps']} num_frames={first['num_frames']}")

    reloaded = load_dataset(root)
    same = all(
        (a.obs == b.obs).all() and (a.actions == b.actions).all()
        for a, b in zip(ds.trajectories, reloaded.trajectories)
    )
    print(f"reload is bit-identical: {same}")
