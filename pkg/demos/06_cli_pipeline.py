"""Drive the whole pipeline through the command-line interface.

Every library capability is also a subcommand, configured by one JSON file
with flag overrides. This script runs gen -> train-progress -> curate ->
report into a temporary directory and prints the artifacts, exactly as a
shell session would:

    trajcurate gen            --config run.json --out bench/
    trajcurate train-progress --config run.json --data bench/ --out model.ckpt
    trajcurate curate         --config run.json --data bench/ --model model.ckpt --out curated/
    trajcurate report         --config run.json --masks curated/ --truth bench/
"""

import json
import tempfile
from pathlib import Path

from trajcurate.cli import main

config = {
    "seed": 0,
    "synth": {
        "num_traj": 24,
        "frames_per_traj": 160,
        "anomaly_rates": {"pause": 0.125, "back_and_forth": 0.125},
        "duplicate_rate": 0.05,
    },
    "train": {"epochs": 150, "pairs_per_traj": 80},
    "subopt": {"epsilon_s": 0.58},
    "dedup": {"epsilon_d": 0.99},
}

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    cfg = root / "run.json"
    cfg.write_text(json.dumps(config, indent=2))
    bench, model, curated = root / "bench", root / "model.ckpt", root / "curated"

    for argv in (
        ["gen", "--config", str(cfg), "--out", str(bench)],
        ["train-progress", "--config", str(cfg), "--data", str(bench), "--out", str(model)],
        ["curate", "--config", str(cfg), "--data", str(bench),
         "--model", str(model), "--out", str(curated)],
        ["report", "--config", str(cfg), "--masks", str(curated), "--truth", str(bench)],
    ):
        print(f"\n$ trajcurate {' '.join(argv)}")
        code = main(argv)
        assert code == 0, f"{argv[0]} exited {code}"

    print("\nartifacts:")
    for p in sorted(curated.rglob("*")):
        if p.is_file():
            print(f"  {p.relative_to(root)}")

    report = json.loads((curated / "curation_report.json").read_text())
    print(f"\ndeletion ratios: {json.dumps(report['ratios'], indent=2)}")
