"""A small multi-seed experiment driven through the command-line interface.

Equivalent shell session:

    nmog simulate --input clean.hsic --case stripe --seed 0 --output noisy.hsic --metadata noisy.json
    nmog denoise  --input noisy.hsic --output restored.hsic --report report.json
    nmog evaluate --reference clean.hsic --test restored.hsic --csv bands.csv --json summary.json
    nmog experiment plan.json
"""

import json
import tempfile
from pathlib import Path

from nmog import planted_cube, save_cube
from nmog.cli import main

work = Path(tempfile.mkdtemp(prefix="nmog-demo-"))
save_cube(planted_cube(40, 40, 16, rank=3, seed=2)[0], work / "clean.hsic")

plan = {"clean_path": "clean.hsic", "case": "stripe", "seeds": [0, 1, 2], "K": 3, "R": 10, "output_dir": "out"}
(work / "plan.json").write_text(json.dumps(plan, indent=2))

status = main(["experiment", str(work / "plan.json")])
print("exit status", status)
print((work / "out" / "summary.csv").read_text())
print("per-seed rows in", work / "out" / "seeds.csv")
