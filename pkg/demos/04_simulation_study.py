# # FDR and power as the second sample grows
#
# Synthetic study with K_A = 3 and K_B from 3 to 9 under unequal variances
# (lambda = 2 F(8, 12)). For each replicate the priors are refitted, BH is
# applied at 0.1 and FDR and power are recorded. Keep --reps small for a
# quick look; the full study uses 50.

# %%

import argparse

from epbayes import LambdaLaw, MethodId, SimulationScenario, run_study

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--reps", type=int, default=3)
ap.add_argument("--scenario", choices=[m.value for m in LambdaLaw], default="unequal")
ap.add_argument("--ka", type=int, default=3)
ap.add_argument("--json", help="also write the report as JSON")
args = ap.parse_args()

# %%

methods = [MethodId.EV, MethodId.WELCH, MethodId.BF, MethodId.VREPB, MethodId.DVEPB]
scenarios = [
    SimulationScenario(k_a=args.ka, k_b=kb, lambda_law=LambdaLaw(args.scenario), reps=args.reps, seed=2024)
    for kb in range(args.ka, args.ka + 7)
]
report = run_study(scenarios, methods)

# %% [markdown]
# One line per method: FDR and power against K_B.

# %%

print("K_B:       " + " ".join(f"{s.k_b:6d}" for s in scenarios))
for m in methods:
    fdr = " ".join(f"{report.get(m, s.k_b).fdr:6.3f}" for s in scenarios)
    pw = " ".join(f"{report.get(m, s.k_b).power:6.3f}" for s in scenarios)
    print(f"{m.value:6s} FDR {fdr}")
    print(f"{'':6s} pow {pw}")

if args.json:
    report.write_json(args.json)
