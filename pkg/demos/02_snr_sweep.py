"""NMSE against SNR for the proposed estimator, Direct-OMP and the genie.

Uses the desk preset with fewer trials; the CSV lands next to this script.
The same thing from the command line:

    riscascade run --preset desk --out snr.csv --sweep snr
"""

from pathlib import Path

from riscascade.harness import ExperimentConfig, emit_csv, sweep

cfg = ExperimentConfig.from_dict({"trials": 40}, preset="desk")
report = sweep(cfg, "snr")

print(f"{'method':>10} {'SNR':>6} {'NMSE':>8} {'std':>8}")
for row in report.rows:
    print(f"{row.method:>10} {row.snr_db:>6g} {row.mean_nmse:>8.4f} {row.std_nmse:>8.4f}")

out = emit_csv(report, Path(__file__).with_name("snr_sweep.csv"))
print("wrote", out)
