"""Design a mask on a pilot frame and reuse it on a perturbed later frame.

The later frame carries a small bump, a stand-in for contrast changes in
dynamic imaging. The frozen adaptive mask is compared with fixed masks of the
same budget on both frames.
"""

from dynsamp import ExperimentConfig, run_pilot_transfer
from dynsamp.harness import perturbed_frames

cfg = ExperimentConfig.from_json("demos/default_config.json")
frames = perturbed_frames(cfg, n_frames=3, amplitude=0.2)
report = run_pilot_transfer(cfg, frames, out_dir="demo_out/pilot")
print(f"adaptive loop on the pilot: {report.psnr['adaptive_pilot']:.2f} dB")
for method in ("adaptive", *cfg.baselines):
    print(f"{method:>15s}: " + "  ".join(f"frame {i}: {v:6.2f} dB" for i, v in enumerate(report.psnr[method])))
