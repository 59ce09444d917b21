"""
A three-bus walkthrough
=======================

Run with ``python3 tutorials/01_three_bus_walkthrough.py``. The script writes a
tiny MATPOWER case and a sidecar to a temporary folder, looks at the network
sensitivities, solves all five dispatch modes and replays the chance-constrained
solution against random load fluctuations.
"""
import json
import tempfile
from pathlib import Path

import numpy as np

from ccscopf import compare_modes, compute_sensitivities, load_case, prepare, sample_normal, solve_full_ccscopf
from ccscopf.validation import pair_flow_samples, pair_statistics

# %%
# The network: a cheap unit at bus 1, an expensive one at bus 3 and a 60 MW
# bottleneck on line 2 (bus 1 to bus 3). Loads sit at buses 2 and 3.
CASE = """function mpc = tri
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	40	0	0	0	1	1	0	230	1	1.1	0.9;
	3	1	80	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	0	0	1	100	1	300	0;
	3	0	0	0	0	1	100	1	300	0;
];
mpc.branch = [
	1	2	0	0.1	0	200	200	200	0	0	1	-360	360;
	1	3	0	0.1	0	60	60	60	0	0	1	-360	360;
	2	3	0	0.1	0	200	200	200	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	2	10	0;
	2	0	0	2	40	0;
];
"""

# The sidecar adds what MATPOWER has no field for: load fluctuations (MW
# standard deviations per bus, correlated within a zone), violation
# probabilities and the system reserve requirement.
SIDECAR = {
    "uncertainty": {"per_bus": {"2": 4.0, "3": 8.0}, "rho": 0.3},
    "chance": {"eps_l": 0.01, "eps": 0.01, "eps_g": 0.001},
    "reserve": {"up": 0.0, "down": 0.0, "cap_frac": 1.0},
}

work = Path(tempfile.mkdtemp())
(work / "tri.m").write_text(CASE)
(work / "tri.json").write_text(json.dumps(SIDECAR))
case = load_case(work / "tri.m", work / "tri.json")
print(f"{case.n_bus} buses, {len(case.lines)} lines, total load {case.loads.sum():.0f} MW")

# %%
# Sensitivities. Row k of the PTDF gives the flow on line k per MW injected at
# each bus (and withdrawn at the slack bus 1). The LODF column of an outaged
# line tells how its pre-outage flow is redistributed.
sens = compute_sensitivities(case)
np.set_printoptions(precision=3, suppress=True)
print("PTDF (lines x buses):\n", sens.ptdf)
print("LODF (lines x outaged lines):\n", sens.lodf)

# %%
# Five modes, from a plain economic dispatch (a) to the chance-constrained N-1
# dispatch whose devices and generators follow affine policies (e). Here there
# are no HVDC links or PSTs, so (d) and (e) coincide.
prep = prepare(case)
costs, sols, _ = compare_modes(prep)
for m, c in costs.costs.items():
    print(f"mode {m}: {c:9.2f} $/h")

# %%
# The chance constraints that ended up in the model, with expected flow,
# analytic standard deviation and the remaining slack (all in MW). A slack of
# zero means the constraint is tight at its 1% violation level.
sol = sols["e"]
for s in pair_statistics(sol, prep):
    print(f"line {s['line']} after outage {s['outage']}: mean {s['mean']:7.2f}  std {s['std']:5.2f}"
          f"  rating {s['rating']:6.1f}  slack {s['slack']:6.3f}")

# %%
# Monte Carlo check of the tight constraint: line 2 after losing line 1 should
# be overloaded in about 1% of the samples.
samples = sample_normal(prep.model, 100_000, seed=1)
flow, _ = pair_flow_samples(sol, prep, samples, 2, 1)
print(f"empirical overload probability: {np.mean(np.abs(flow) > 60.0 + 1e-4):.4f}")

# %%
# Without the fluctuations the same dispatch is just the deterministic N-1 OPF.
print("balancing participation of the units:", sol.alpha_G)
print("scheduled up reserves (MW):", sol.r_up)
print("mode (c) cost for comparison:", solve_full_ccscopf(prep, "c").cost)
