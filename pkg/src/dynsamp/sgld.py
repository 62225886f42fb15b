"""Posterior ensembles by stochastic gradient Langevin dynamics.

One step of a chain is::

    x <- x + mu_t * score(x) - mu_t * eta_t * A'(A x - y) + sqrt(2 mu_t) * g

with ``g`` a circular complex Gaussian image (``E|g_n|^2 = 1``). For a Gaussian
prior and ``eta_t = 1 / sigma**2`` the chain's stationary law is the complex
Gaussian posterior with covariance ``(A'A / sigma^2 + lam T'T)^{-1}``, the same
moments that :mod:`dynsamp.analytic_oracle` computes in closed form.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arrayio import save_array
from .forward_model import MeasurementSet, SensingOperator, add_noise, apply_forward
from .priors import ScoreFunction
from .seeding import TAG_CHAIN, complex_normal, make_rng

INIT_KINDS = ("adjoint", "adjoint_plus_noise")
SCHEDULE_KINDS = ("constant", "geometric")
DIVERGENCE_LIMIT = 1e6


class SamplerDivergence(RuntimeError):
    """A chain produced a non-finite or exploding iterate."""

    def __init__(self, step: int, chain_index: int | None = None, detail: str = ""):
        self.step = step
        self.chain_index = chain_index
        where = f"step {step}" if chain_index is None else f"chain {chain_index}, step {step}"
        msg = f"SGLD diverged at {where}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg + " (reduce the step size mu or the likelihood weight eta)")


def make_schedule(kind: str, n_steps: int, start: float, end: float | None = None) -> np.ndarray:
    """Per-step positive values: ``constant`` at ``start`` or ``geometric`` from ``start`` to ``end``."""
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; choose from {SCHEDULE_KINDS}")
    if end is None:
        end = start
    if not (start > 0 and end > 0):
        raise ValueError("schedule values must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if kind == "constant":
        return np.full(n_steps, float(start))
    if n_steps < 2:
        raise ValueError("a geometric schedule needs at least 2 steps")
    return np.geomspace(start, end, n_steps)


@dataclass(frozen=True, eq=False)
class SGLDConfig:
    """Sampler settings; ``mu_schedule`` and ``eta_schedule`` have one entry per step.

    ``init_noise`` is relative: the ``adjoint_plus_noise`` start adds complex
    Gaussian noise of std ``init_noise * max|A'y|``. ``inject_noise=False``
    removes the Langevin noise (plain gradient ascent), which tests rely on.
    ``trace_every > 0`` with a ``trace_dir`` dumps every k-th iterate.
    """

    n_steps: int
    n_samples: int
    mu_schedule: np.ndarray
    eta_schedule: np.ndarray
    init: str = "adjoint_plus_noise"
    init_noise: float = 0.01
    rng_seed: int = 0
    inject_noise: bool = True
    trace_every: int = 0
    trace_dir: str | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu_schedule, dtype=float).reshape(-1)
        eta = np.asarray(self.eta_schedule, dtype=float).reshape(-1)
        if self.n_steps < 0 or self.n_samples < 1:
            raise ValueError("n_steps must be >= 0 and n_samples >= 1")
        if len(mu) != self.n_steps or len(eta) != self.n_steps:
            raise ValueError(f"schedules must have n_steps={self.n_steps} entries, got {len(mu)} and {len(eta)}")
        if np.any(mu <= 0) or np.any(eta <= 0):
            raise ValueError("schedule values must be positive")
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}")
        if self.init_noise < 0:
            raise ValueError("init_noise must be non-negative")
        object.__setattr__(self, "mu_schedule", mu)
        object.__setattr__(self, "eta_schedule", eta)

    @classmethod
    def build(cls, n_steps: int, n_samples: int, mu: float, eta: float = 1.0,
              mu_end: float | None = None, eta_end: float | None = None, **kwargs) -> SGLDConfig:
        """Constant schedules, or geometric ones when an ``*_end`` value is given."""
        mu_kind = "constant" if mu_end is None or n_steps < 2 else "geometric"
        eta_kind = "constant" if eta_end is None or n_steps < 2 else "geometric"
        return cls(n_steps, n_samples,
                   make_schedule(mu_kind, n_steps, mu, mu_end),
                   make_schedule(eta_kind, n_steps, eta, eta_end), **kwargs)

    def replace(self, **changes) -> SGLDConfig:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class PosteriorEnsemble:
    """Chain end points and their noisy full-grid k-space projections."""

    images: np.ndarray  # (n_samples, *shape)
    projections: np.ndarray  # (n_samples, num_coils, *shape)

    def __post_init__(self):
        if len(self.images) != len(self.projections):
            raise ValueError("images and projections must have equal length")

    def __len__(self):
        return len(self.images)


NOISE_BLOCK = 32


def _values(y) -> np.ndarray:
    return y.values if isinstance(y, MeasurementSet) else np.asarray(y)


def _check_state(x, step_index, chain_indices):
    peak = np.max(np.abs(x.reshape(len(x), -1)), axis=1)
    bad = ~np.isfinite(peak) | (peak > DIVERGENCE_LIMIT)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise SamplerDivergence(step_index, chain_indices[j], f"max |x| = {peak[j]:.3g}")


def sgld_step(x, y, op: SensingOperator, score: ScoreFunction, mu_t: float, eta_t: float,
              rng: np.random.Generator | None, noise: bool = True, step_index: int = 0,
              chain_index: int | None = None) -> np.ndarray:
    """One Langevin update of a single image; see the module docstring for the formula."""
    if not (mu_t > 0 and eta_t > 0):
        raise ValueError("mu_t and eta_t must be positive")
    g = complex_normal(rng, x.shape) if noise else None
    x_new = _update(x[None], _values(y), op, score, mu_t, eta_t, None if g is None else g[None])
    _check_state(x_new, step_index, [chain_index])
    return x_new[0]


def _update(xs, yv, op, score, mu_t, eta_t, g):
    # xs: (batch, *shape); identical arithmetic for any batch size
    drift = score.batch(xs, len(op.shape)) - eta_t * op.adjoint(op.forward(xs) - yv)
    out = xs + mu_t * drift
    if g is not None:
        out += np.sqrt(2 * mu_t) * g
    return out


class _NoiseStream:
    """Per-chain block draws of circular complex Gaussian step noise."""

    def __init__(self, rngs, shape, n_steps):
        self.rngs, self.shape, self.n_steps = rngs, shape, n_steps
        self.block, self.start = None, 0

    def get(self, t):
        if self.block is None or t >= self.start + len(self.block):
            size = min(NOISE_BLOCK, self.n_steps - t)
            draws = np.stack([r.standard_normal((size, 2, *self.shape)) for r in self.rngs], axis=1)
            self.block = (draws[:, :, 0] + 1j * draws[:, :, 1]) / np.sqrt(2.0)
            self.start = t
        return self.block[t - self.start]


def chain_rng(cfg: SGLDConfig, chain_index: int) -> np.random.Generator:
    return make_rng(cfg.rng_seed, TAG_CHAIN, chain_index)


def initialize_chain(y, op: SensingOperator, cfg: SGLDConfig, rng: np.random.Generator) -> np.ndarray:
    """``A'y``, plus relative Gaussian jitter for ``adjoint_plus_noise``."""
    x0 = op.adjoint(_values(y))
    if cfg.init == "adjoint_plus_noise" and cfg.init_noise > 0:
        scale = cfg.init_noise * float(np.max(np.abs(x0)))
        if scale > 0:
            x0 = x0 + complex_normal(rng, x0.shape, scale)
    return x0


def _run_chains(y, op, score, cfg: SGLDConfig, chain_indices):
    """Run a batch of chains; returns final states ``(batch, *shape)`` and their generators."""
    rngs = [chain_rng(cfg, i) for i in chain_indices]
    yv = _values(y)
    xs = np.stack([initialize_chain(yv, op, cfg, r) for r in rngs])
    noise = _NoiseStream(rngs, op.shape, cfg.n_steps) if cfg.inject_noise else None
    tracing = cfg.trace_every > 0 and cfg.trace_dir
    traces = []
    for t in range(cfg.n_steps):
        if tracing and t % cfg.trace_every == 0:
            traces.append(xs)
        g = noise.get(t) if noise is not None else None
        xs = _update(xs, yv, op, score, cfg.mu_schedule[t], cfg.eta_schedule[t], g)
        _check_state(xs, t, chain_indices)
    if tracing:
        traces.append(xs)
        stacked = np.stack(traces, axis=1)
        for j, i in enumerate(chain_indices):
            save_array(Path(cfg.trace_dir) / f"chain{i:03d}_trace", stacked[j], extra={"every": cfg.trace_every})
    return xs, rngs


def run_chain(y, op: SensingOperator, score: ScoreFunction, cfg: SGLDConfig, chain_index: int = 0) -> np.ndarray:
    """Run one chain from its initialization and return the final iterate.

    The result depends only on ``(cfg.rng_seed, chain_index)`` and the inputs,
    and is bit-identical to member ``chain_index`` of an ensemble.
    """
    return _run_chains(y, op, score, cfg, [chain_index])[0][0]


def _members(y, op, score, cfg, full_op, chain_indices):
    xs, rngs = _run_chains(y, op, score, cfg, chain_indices)
    proj = [add_noise(apply_forward(x, full_op), op.noise_sigma, r).values for x, r in zip(xs, rngs)]
    return xs, np.stack(proj)


def sample_posterior_ensemble(y, op: SensingOperator, score: ScoreFunction, cfg: SGLDConfig,
                              threads: int = 1) -> PosteriorEnsemble:
    """Run ``cfg.n_samples`` independent chains and project them onto the full grid.

    Chains are advanced together as one batch (or one batch per thread).
    Every chain owns its generator, which also supplies its projection noise,
    so the ensemble is identical for any ``threads`` value.
    """
    full_op = op.full()
    indices = list(range(cfg.n_samples))
    threads = max(1, min(int(threads), cfg.n_samples))
    if threads > 1:
        chunks = [c.tolist() for c in np.array_split(indices, threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _members(y, op, score, cfg, full_op, c), chunks))
        images = np.concatenate([p[0] for p in parts])
        projections = np.concatenate([p[1] for p in parts])
    else:
        images, projections = _members(y, op, score, cfg, full_op, indices)
    return PosteriorEnsemble(images, projections)


def log_posterior(x, y, op: SensingOperator, score: ScoreFunction, eta: float) -> float:
    """``log p(x) - eta * ||A x - y||^2 / 2``, the objective SGLD ascends without noise."""
    r = op.forward(x) - _values(y)
    return score.log_density(x) - 0.5 * eta * float(np.sum(np.abs(r) ** 2))
