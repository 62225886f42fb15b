"""Experiment runner comparing adaptive sampling against fixed masks.

All methods in one experiment acquire exactly the same number of k-space
locations and are reconstructed with the same sampler settings; the final
image of each method is the posterior mean of its ensemble. A single root seed
governs every random draw (see :mod:`dynsamp.seeding` for the tags).
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arrayio
from .adaptive import (
    BASELINE_KINDS,
    SelectionPolicy,
    history_rows,
    compute_variance_map,
    make_baseline_mask,
    run_adaptive_acquisition,
)
from .forward_model import (
    PHANTOM_KINDS,
    SamplingMask,
    SensingOperator,
    make_coil_maps,
    make_phantom,
    normalize_shape,
    simulate_measurements,
)
from .priors import SCORE_KINDS, make_score, synthetic_training_set
from .seeding import (
    TAG_ACQUISITION,
    TAG_BASELINE_ACQUISITION,
    TAG_BASELINE_MASK,
    TAG_BASELINE_SGLD,
    TAG_PILOT_FRAME,
    TAG_SGLD,
    derive_seed,
)
from .sgld import PosteriorEnsemble, SGLDConfig, sample_posterior_ensemble

PSNR_CAP = 200.0


class ConfigError(ValueError):
    """Experiment configuration is inconsistent."""


def psnr(reference, estimate) -> float:
    """PSNR in dB between magnitude images, peak taken from ``|reference|``.

    Capped at 200 dB, which is also the value for identical images.
    """
    ref = np.abs(np.asarray(reference)).astype(np.float64)
    est = np.abs(np.asarray(estimate)).astype(np.float64)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {est.shape}")
    peak = ref.max()
    if peak == 0:
        raise ValueError("reference image is identically zero")
    mse = np.mean((ref - est) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10 * np.log10(peak**2 / mse)))


def reconstruct_final(ens: PosteriorEnsemble) -> np.ndarray:
    """Posterior-mean estimate: pointwise complex mean of the ensemble images."""
    if len(ens) == 0:
        raise ValueError("empty ensemble")
    return np.mean(ens.images, axis=0)


@dataclass
class ExperimentConfig:
    """Everything that defines an experiment; round-trips through JSON.

    Budgets count k-space locations in pointwise mode and whole lines in line
    mode. ``undersampling`` sets the final budget ``round(units / R)``; the
    adaptive arm starts from ``initial_count`` locations and adds ``n_add``
    batches of ``batch_size``. Leaving ``initial_count`` unset derives it as
    ``final - n_add * batch_size``; leaving ``n_add`` unset starts from 40% of
    the final budget. ``eta`` defaults to ``1 / noise_sigma**2``.
    """

    phantom: str = "shepp_logan_like"
    shape: tuple = (64, 64)
    num_coils: int = 1
    coil_profile: str = "uniform"
    noise_sigma: float = 0.05
    prior: str = "roughness"
    lam: float = 50.0
    bandwidth: float = 1.0
    n_train: int = 16
    n_steps: int = 100
    n_samples: int = 8
    mu: float = 1e-3
    mu_end: float | None = None
    eta: float | None = None
    eta_end: float | None = None
    init: str = "adjoint_plus_noise"
    init_noise: float = 0.01
    mode: str = "pointwise"
    batch_size: int = 10
    n_add: int | None = 30
    undersampling: float = 10.0
    initial_kind: str = "low_frequency"
    initial_count: int | None = None
    baselines: tuple = ("uniform_random", "poisson_disk")
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.shape = tuple(normalize_shape(self.shape))
        self.baselines = tuple(self.baselines)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["shape"] = list(self.shape)
        d["baselines"] = list(self.baselines)
        return d

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    @property
    def budget_units(self) -> int:
        if self.mode == "line" and len(self.shape) == 2:
            return self.shape[1]
        return int(np.prod(self.shape))

    def budget(self) -> tuple[int, int, int]:
        """``(initial_count, n_add, final_count)`` after filling in derived values."""
        units = self.budget_units
        b = self.batch_size
        target = max(1, int(round(units / self.undersampling)))
        if self.n_add is None:
            initial = self.initial_count or max(1, int(round(0.4 * target)))
            n_add = max(0, (target - initial) // b)
        elif self.initial_count is None:
            n_add = self.n_add
            initial = target - n_add * b
        else:
            initial, n_add = self.initial_count, self.n_add
        return initial, n_add, initial + n_add * b

    def validate(self) -> None:
        if self.phantom not in PHANTOM_KINDS:
            raise ConfigError(f"phantom must be one of {PHANTOM_KINDS}")
        if self.prior not in SCORE_KINDS:
            raise ConfigError(f"prior must be one of {SCORE_KINDS}")
        if self.mode not in ("pointwise", "line"):
            raise ConfigError("mode must be 'pointwise' or 'line'")
        unknown = [b for b in self.baselines if b not in BASELINE_KINDS]
        if unknown:
            raise ConfigError(f"unknown baseline kinds {unknown}")
        if self.initial_kind not in BASELINE_KINDS:
            raise ConfigError(f"initial_kind must be one of {BASELINE_KINDS}")
        if self.undersampling < 1:
            raise ConfigError("undersampling ratio must be >= 1")
        if self.batch_size < 1 or self.n_samples < 1 or self.n_steps < 0:
            raise ConfigError("batch_size and n_samples must be >= 1, n_steps >= 0")
        if self.noise_sigma < 0 or self.lam <= 0 or self.mu <= 0 or self.bandwidth <= 0:
            raise ConfigError("noise_sigma must be >= 0 and lam, mu, bandwidth > 0")
        if self.eta is None and self.noise_sigma == 0:
            raise ConfigError("eta must be given explicitly when noise_sigma is 0")
        initial, n_add, final = self.budget()
        if initial < 1:
            raise ConfigError(f"budget leaves {initial} initial samples; lower n_add or batch_size")
        if n_add < 0 or final > self.budget_units:
            raise ConfigError(f"initial {initial} + n_add {n_add} x batch {self.batch_size} exceeds grid of {self.budget_units}")
        if self.n_samples < 2 and n_add > 0:
            raise ConfigError("adaptive selection needs n_samples >= 2")
        try:
            make_phantom(self.phantom, self.shape)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sgld_config(self, seed: int) -> SGLDConfig:
        eta = self.eta if self.eta is not None else 1.0 / self.noise_sigma**2
        return SGLDConfig.build(self.n_steps, self.n_samples, mu=self.mu, eta=eta,
                                mu_end=self.mu_end, eta_end=self.eta_end,
                                init=self.init, init_noise=self.init_noise, rng_seed=seed)


@dataclass
class ExperimentReport:
    """Results of one experiment.

    ``psnr`` maps method name to dB (pilot reports: to a per-frame list).
    ``timings`` are wall-clock seconds and are written to a separate file so
    that ``report.json`` stays byte-reproducible.
    """

    config: dict
    seed: int
    psnr: dict
    sample_counts: dict
    masks: dict
    reconstructions: dict
    ground_truth: np.ndarray
    history: list = field(default_factory=list)
    variance_map: np.ndarray | None = None
    timings: dict = field(default_factory=dict)
    kind: str = "comparison"

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "config": self.config,
            "psnr_db": self.psnr,
            "sample_counts": self.sample_counts,
            "history": [list(r) for r in self.history],
            "arrays": sorted(self._array_names()),
        }

    def _array_names(self):
        names = ["ground_truth"]
        for method, rec in self.reconstructions.items():
            if isinstance(rec, list):
                names.extend(f"recon_{method}_frame{i:02d}" for i in range(len(rec)))
            else:
                names.append(f"recon_{method}")
        names.extend(f"mask_{m}" for m in self.masks)
        if self.variance_map is not None:
            names.append("variance_map")
        return names

    def write(self, out_dir) -> Path:
        """Write report JSON, timings, CSVs, arrays and PGM previews under ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        arrays, previews = out / "arrays", out / "previews"
        gt = self.ground_truth
        arrayio.save_array(arrays / "ground_truth", gt)
        arrayio.save_pgm(previews / "ground_truth.pgm", gt)
        for method, rec in self.reconstructions.items():
            frames = rec if isinstance(rec, list) else [rec]
            for i, img in enumerate(frames):
                name = f"recon_{method}_frame{i:02d}" if isinstance(rec, list) else f"recon_{method}"
                arrayio.save_array(arrays / name, img)
                arrayio.save_pgm(previews / f"{name}.pgm", img)
        for method, mask in self.masks.items():
            arrayio.save_mask(arrays / f"mask_{method}", mask)
            arrayio.save_pgm(previews / f"mask_{method}.pgm", mask.to_array().astype(float), fftshift=True)
        if self.variance_map is not None:
            arrayio.save_array(arrays / "variance_map", self.variance_map)
            arrayio.save_pgm(previews / "variance_map.pgm", self.variance_map, fftshift=True)
        (out / "report.json").write_text(arrayio.dumps_json(self.to_json_dict()))
        (out / "timings.json").write_text(arrayio.dumps_json(self.timings))
        rows = []
        for method, val in self.psnr.items():
            vals = val if isinstance(val, list) else [val]
            rows.extend((method, i, f"{v:.6f}", self.sample_counts[method]) for i, v in enumerate(vals))
        arrayio.write_csv(out / "metrics.csv", ["method", "frame", "psnr_db", "n_acquired"], rows)
        arrayio.write_csv(out / "history.csv", ["iteration", "selected_index", "variance_at_selection"],
                          [(it, idx, f"{v:.9g}") for it, idx, v in self.history])
        return out


def _as_stored(img) -> np.ndarray:
    # reported numbers are computed from the float32 arrays that get written
    return np.asarray(img).astype(np.complex64)


def _setup(cfg: ExperimentConfig, ground_truth=None):
    shape = cfg.shape
    gt = make_phantom(cfg.phantom, shape) if ground_truth is None else np.asarray(ground_truth, dtype=np.complex128)
    coils = make_coil_maps(cfg.num_coils, shape, cfg.coil_profile)
    op_template = SensingOperator(SamplingMask.full(shape, cfg.mode), coils, cfg.noise_sigma)
    patches = None
    if cfg.prior == "empirical":
        patches = synthetic_training_set(cfg.phantom, shape, cfg.n_train, cfg.seed)
    score = make_score(cfg.prior, shape, lam=cfg.lam, patches=patches, bandwidth=cfg.bandwidth)
    return gt, op_template, score


def _fixed_mask_recon(gt, op_template, score, cfg: ExperimentConfig, mask, acq_seed, sgld_seed):
    op = op_template.with_mask(mask)
    y = simulate_measurements(gt, op, acq_seed)
    ens = sample_posterior_ensemble(y, op, score, cfg.sgld_config(sgld_seed), threads=cfg.threads)
    return reconstruct_final(ens)


def _adaptive(gt, op_template, score, cfg: ExperimentConfig):
    initial, n_add, _ = cfg.budget()
    mask0 = make_baseline_mask(cfg.initial_kind, cfg.shape, initial,
                               seed=derive_seed(cfg.seed, TAG_BASELINE_MASK, 0), mode=cfg.mode)
    policy = SelectionPolicy(cfg.batch_size, cfg.mode)
    state, ens = run_adaptive_acquisition(gt, op_template, score, cfg.sgld_config(derive_seed(cfg.seed, TAG_SGLD)),
                                          policy, n_add, mask0, threads=cfg.threads)
    return state, ens


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Adaptive sampling versus every baseline in ``cfg.baselines`` at equal budget."""
    cfg.validate()
    _, _, final = cfg.budget()
    gt, op_template, score = _setup(cfg)
    gt_stored = _as_stored(gt)
    psnrs, counts, masks, recons, timings = {}, {}, {}, {}, {}

    t0 = time.perf_counter()
    state, ens = _adaptive(gt, op_template, score, cfg)
    recon = _as_stored(reconstruct_final(ens))
    timings["adaptive"] = time.perf_counter() - t0
    psnrs["adaptive"], masks["adaptive"], recons["adaptive"] = psnr(gt_stored, recon), state.mask, recon
    counts["adaptive"] = state.mask.count
    variance_map = compute_variance_map(ens).astype(np.float32) if len(ens) > 1 else None

    for j, kind in enumerate(cfg.baselines, start=1):
        t0 = time.perf_counter()
        mask = make_baseline_mask(kind, cfg.shape, final, seed=derive_seed(cfg.seed, TAG_BASELINE_MASK, j),
                                  mode=cfg.mode)
        rec = _as_stored(_fixed_mask_recon(gt, op_template, score, cfg, mask,
                                           derive_seed(cfg.seed, TAG_BASELINE_ACQUISITION, j),
                                           derive_seed(cfg.seed, TAG_BASELINE_SGLD, j)))
        timings[kind] = time.perf_counter() - t0
        psnrs[kind], masks[kind], recons[kind], counts[kind] = psnr(gt_stored, rec), mask, rec, mask.count

    report = ExperimentReport(cfg.to_dict(), cfg.seed, psnrs, counts, masks, recons, gt_stored,
                              history_rows(state), variance_map, timings)
    if out_dir is not None:
        report.write(out_dir)
    return report


def run_pilot_transfer(cfg: ExperimentConfig, frames, out_dir=None) -> ExperimentReport:
    """Design a mask adaptively on ``frames[0]`` and reuse it for every frame.

    Every frame, the pilot included, is then measured and reconstructed
    non-adaptively with the frozen adaptive mask and with each baseline mask of
    equal budget. Seeds are shared across frames, so differences between frames
    come from the objects alone. ``psnr['adaptive_pilot']`` is the PSNR of the
    adaptive loop's own final reconstruction of the pilot.
    """
    cfg.validate()
    frames = [np.asarray(f, dtype=np.complex128) for f in frames]
    if not frames:
        raise ValueError("need at least the pilot frame")
    if any(f.shape != tuple(cfg.shape) for f in frames):
        raise ValueError(f"all frames must have shape {tuple(cfg.shape)}")
    _, _, final = cfg.budget()
    pilot, op_template, score = _setup(cfg, frames[0])
    timings = {}

    t0 = time.perf_counter()
    state, ens = _adaptive(pilot, op_template, score, cfg)
    timings["adaptive_design"] = time.perf_counter() - t0
    masks = {"adaptive": state.mask}
    for j, kind in enumerate(cfg.baselines, start=1):
        masks[kind] = make_baseline_mask(kind, cfg.shape, final, seed=derive_seed(cfg.seed, TAG_BASELINE_MASK, j),
                                         mode=cfg.mode)

    stored = [_as_stored(f) for f in frames]
    psnrs = {"adaptive_pilot": psnr(stored[0], _as_stored(reconstruct_final(ens)))}
    recons = {}
    for j, (method, mask) in enumerate(masks.items()):
        t0 = time.perf_counter()
        acq_seed = derive_seed(cfg.seed, TAG_PILOT_FRAME, TAG_ACQUISITION, j)
        sgld_seed = derive_seed(cfg.seed, TAG_PILOT_FRAME, TAG_SGLD, j)
        recons[method] = [_as_stored(_fixed_mask_recon(f, op_template, score, cfg, mask, acq_seed, sgld_seed))
                          for f in frames]
        psnrs[method] = [psnr(ref, rec) for ref, rec in zip(stored, recons[method])]
        timings[method] = time.perf_counter() - t0
    counts = {m: mask.count for m, mask in masks.items()}
    counts["adaptive_pilot"] = state.mask.count

    report = ExperimentReport(cfg.to_dict(), cfg.seed, psnrs, counts, masks, recons, stored[0],
                              history_rows(state), None, timings, kind="pilot_transfer")
    if out_dir is not None:
        report.write(out_dir)
    return report


def perturbed_frames(cfg: ExperimentConfig, n_frames: int = 2, amplitude: float = 0.15) -> list[np.ndarray]:
    """Pilot phantom followed by copies carrying a small growing Gaussian bump.

    A stand-in for contrast uptake in dynamic imaging.
    """
    base = make_phantom(cfg.phantom, cfg.shape)
    shape = cfg.shape
    grids = np.meshgrid(*[(np.arange(n) + 0.5) / n * 2 - 1 for n in shape], indexing="ij")
    r2 = sum((g - c) ** 2 for g, c in zip(grids, (0.15, -0.2)[: len(shape)]))
    bump = np.exp(-r2 / 0.02)
    return [base + amplitude * (f / max(1, n_frames - 1)) * bump * np.exp(1j * np.angle(base + 1e-12))
            for f in range(n_frames)]
