"""
Command-line workflow: solve, validate with historical data, sweep
==================================================================

Run with ``python3 tutorials/03_command_line_workflow.py`` (a couple of
minutes). Each step calls the same entry point as the ``ccscopf`` shell command,
so every ``main([...])`` line below can be typed in a terminal as
``ccscopf ...`` instead.
"""
import csv
import json
import tempfile
from pathlib import Path

import numpy as np

from ccscopf import bundled_case, load_case
from ccscopf.cli import main

work = Path(tempfile.mkdtemp())

# %%
# 1. Solve mode (e) on the bundled 118-bus case. ``--log`` keeps one JSON line
#    per conic solve, sweep and constraint addition.
main(["solve", "--case", "ieee118", "--mode", "e", "--out", str(work / "e.json"), "--log", str(work / "e.log")])
events = [json.loads(line) for line in (work / "e.log").read_text().splitlines()]
for ev in events:
    if ev["event"] == "solve":
        print(f"  step {ev['step']:12s} objective {ev['objective']:10.1f}  pairs {ev['n_pairs']:4d}  cones {ev['n_soc']}")

# %%
# 2. Validate against "historical" deviations. Any CSV with bus ids as header
#    works; the columns are rescaled to zero mean and to the modeled covariance
#    before the replay. Here we fake heavy-tailed data for the fluctuating buses.
case = load_case(*bundled_case("ieee118"))
sigma = np.array(case.uncertainty.sigma)
buses = [b.id for b, s in zip(case.buses, sigma) if s > 0]
raw = np.random.default_rng(3).standard_t(4, size=(1500, len(buses)))
with open(work / "hist.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(buses)
    w.writerows(raw.round(4))
main(["validate", "--solution", str(work / "e.json"), "--historical", str(work / "hist.csv"),
      "--out-dir", str(work / "hist")])
main(["validate", "--solution", str(work / "e.json"), "--samples", "1500", "--seed", "3",
      "--out-dir", str(work / "normal")])
# heavier tails than the normal model usually mean more joint violations
for name in ("normal", "hist"):
    doc = json.loads((work / name / "validate_e.json").read_text())
    print(f"  {name:7s} joint line violations {100 * doc['joint_line_fraction']:.2f}%")

# %%
# 3. Cost sensitivity to the line/device violation probability.
main(["sweep", "--case", "ieee118", "--modes", "de", "--eps", "0.1,0.01", "--sigma", "10",
      "--out-dir", str(work / "sweep")])
print((work / "sweep" / "sweep.csv").read_text())
print("outputs in", work)
