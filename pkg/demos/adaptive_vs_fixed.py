"""Adaptive sampling against fixed masks on a 64x64 phantom at 10x.

Equivalent to ``dynsamp run --config demos/default_config.json --out demo_out/run``.
Takes roughly 20 seconds.
"""

from dynsamp import ExperimentConfig, run_experiment

cfg = ExperimentConfig.from_json("demos/default_config.json")
initial, n_add, final = cfg.budget()
print(f"budget: {initial} initial + {n_add} x {cfg.batch_size} adaptive = {final} locations")

report = run_experiment(cfg, out_dir="demo_out/run")
for method, value in report.psnr.items():
    print(f"{method:>15s}: {value:6.2f} dB with {report.sample_counts[method]} samples")
print("first picks:", [idx for _, idx, _ in report.history[:10]])
