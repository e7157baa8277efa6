"""
Why subtract the envelope
=========================

Along the degenerating family t -> 0, sup(-phi_t) keeps growing, while
the deficit sup(-phi_t + V_t) stays put.  This runs the reference
configuration through the full pipeline and prints the sweep table.
"""

# %%
import os

from neflab.experiment import ExperimentConfig, run_sweep

here = os.path.dirname(os.path.abspath(__file__))
cfg = ExperimentConfig.from_json(os.path.join(here, os.pardir, "configs", "reference_n1.json"))
report = run_sweep(cfg)
sw = report.sweep

# %%
print("c_t exponent:", round(sw["fitted_exponent"], 4), "expected", sw["expected_exponent"])
print("chi semipositive:", sw["chi_semipositive"], f"(min eigenvalue {sw['chi_min_eigenvalue']:.3f})")
print("    t     sup(-phi)   sup(-phi+V)   S_inf")
for row in sw["deficits"]:
    print(f"{row['t']:6.2f}   {row['sup_minus_phi']:.4f}      {row['sup_deficit']:.4f}       {row['S_infinity']:.3f}")
print(f"deficit spread {sw['deficit_spread']:.2f}, raw growth {sw['raw_growth']:.2f}")

# %%
# Every inequality in the chain, with its worst margin over the sweep.
for name, s in sorted(report.suites.items()):
    print(f"{'ok  ' if s['ok'] else 'FAIL'} {name:22s} {s['margin']:.3e}")
