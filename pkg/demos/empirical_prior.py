"""Swap the roughness prior for a kernel-density prior fitted to training images.

The training set holds shifted and rescaled copies of the phantom, so the
prior is informative; compare with the roughness run of ``adaptive_vs_fixed.py``.
"""

from dynsamp import ExperimentConfig, run_experiment

cfg = ExperimentConfig.from_json("demos/default_config.json").replace(
    prior="empirical", bandwidth=2.0, n_train=24, mu=2e-3)
report = run_experiment(cfg, out_dir="demo_out/empirical")
for method, value in report.psnr.items():
    print(f"{method:>15s}: {value:6.2f} dB")
