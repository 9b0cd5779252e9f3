"""Small versions of the three benchmark experiments.

Each run calibrates seeded synthetic scenes and reports the mean absolute
percent error (MAE) of f_c, f_p and the projector principal point.  The
command-line ``c2calib bench`` runs the same experiments with CSV output.
"""

# %% Accuracy at 0.5 px projector noise
from c2calib.bench import BenchSettings, mae_spread, run_ablation_table2, run_downsampling_table3, run_table1

settings = BenchSettings(sigma=0.5)
rep = run_table1(range(8), settings)
print(f"MAE {rep.mae:.2f}%  median {rep.median_mae:.2f}%  failed {rep.n_failed}")
for row in rep.rows:
    print(f"  scene {row.seed}: MAE {row.mae:6.2f}%  {', '.join(row.flags)}")

# %% Which objective terms matter: a few term subsets
tabs = run_ablation_table2(range(4), settings, configs={1: (1,), 8: (1, 2), 9: (3, 4, 5, 6, 7), 10: tuple(range(1, 8))})
for k, t in tabs.items():
    print(f"config {k:2d} ({t.label:>19}): MAE {t.mae:.2f}%")

# %% Fewer matches: keep every rate-th match per face
tabs = run_downsampling_table3(range(4), BenchSettings(sigma=0.5, samples_per_face=5000), rates=(1, 10, 100, 500))
for k, t in tabs.items():
    print(f"rate {k:3d}: MAE {t.mae:.2f}%")
print(f"spread {mae_spread(tabs):.2f} points")
