"""NMSE against average pilot overhead T at -5 dB.

The proposed method spends V shared slots plus tau per user, so
T = (V + K*tau) / K. Direct-OMP and the genie get round(T) slots each.
"""

from riscascade.harness import ExperimentConfig, sweep

cfg = ExperimentConfig.from_dict({"trials": 40, "snr_db": -5.0}, preset="desk")
report = sweep(cfg, "pilots")

for method in cfg.methods:
    series = report.series(method)
    curve = "  ".join(f"T={r.T:g}: {r.mean_nmse:.3f}" for r in series)
    print(f"{method:>10}  {curve}")

# %% ratio to Direct-OMP at each budget
for p, d in zip(report.series("proposed"), report.series("direct_omp")):
    print(f"T={p.T:g}: Direct-OMP / proposed = {d.mean_nmse / p.mean_nmse:.2f}")
