"""Greedy variance-reduction acquisition and fixed baseline masks.

Each outer iteration draws a posterior ensemble under the current mask,
computes the per-location variance of the ensemble's k-space projections,
and acquires the unmeasured location(s) with the largest variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forward_model import (
    MeasurementSet,
    SamplingMask,
    SensingOperator,
    add_noise,
    apply_forward,
    as_image,
    line_indices,
    normalize_shape,
)
from .priors import ScoreFunction
from .seeding import TAG_ACQUISITION, TAG_SGLD, derive_seed
from .sgld import PosteriorEnsemble, SGLDConfig, sample_posterior_ensemble

BASELINE_KINDS = ("uniform_random", "poisson_disk", "low_frequency", "variable_density")


class ExhaustionError(ValueError):
    """Fewer unmeasured candidates remain than the policy asks for."""


@dataclass(frozen=True)
class SelectionPolicy:
    batch_size: int = 1
    mode: str = "pointwise"
    tie_break: str = "lowest-index"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.mode not in ("pointwise", "line"):
            raise ValueError("mode must be 'pointwise' or 'line'")
        if self.tie_break != "lowest-index":
            raise ValueError("only the lowest-index tie-break is supported")


@dataclass(frozen=True)
class HistoryEntry:
    iteration: int
    indices: tuple[int, ...]
    variances: tuple[float, ...]
    variance_map: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass
class AcquisitionState:
    """Current mask, the measurements on it, and what was picked when."""

    mask: SamplingMask
    measurements: MeasurementSet
    history: list[HistoryEntry] = field(default_factory=list)

    @property
    def operator(self) -> SensingOperator:
        return self.measurements.operator


def compute_variance_map(ens: PosteriorEnsemble) -> np.ndarray:
    """Population variance ``mean_i |y_i[n] - mean_j y_j[n]|^2`` per k-space location.

    Multi-coil projections are summed over coils, because acquiring a location
    acquires it in every coil.
    """
    proj = np.asarray(ens.projections)
    if proj.shape[0] < 2:
        raise ValueError("variance needs an ensemble of at least 2 members")
    centered = proj - proj.mean(axis=0)
    return np.sum(np.mean(np.abs(centered) ** 2, axis=0), axis=0)


def _ranked(scores: np.ndarray, candidates: np.ndarray, k: int) -> np.ndarray:
    # descending score, ascending index among equal scores
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:k]]


def select_next(var_map, state_or_mask, policy: SelectionPolicy) -> list[int]:
    """Flat indices of the next acquisition.

    Pointwise mode returns the ``batch_size`` unmeasured locations with the
    largest variance. Line mode ranks unmeasured columns by their variance
    summed over rows and returns every index of the chosen columns.
    """
    mask = state_or_mask.mask if isinstance(state_or_mask, AcquisitionState) else state_or_mask
    var_map = np.asarray(var_map, dtype=float)
    if var_map.shape != tuple(mask.shape):
        raise ValueError(f"variance map shape {var_map.shape} does not match mask shape {mask.shape}")
    acquired = mask.to_array()
    b = policy.batch_size
    if policy.mode == "line" and var_map.ndim == 2:
        col_var = var_map.sum(axis=0)
        free = np.flatnonzero(~acquired.any(axis=0))
        if len(free) < b:
            raise ExhaustionError(f"only {len(free)} unmeasured lines left, {b} requested")
        return line_indices(mask.shape, _ranked(col_var, free, b))
    flat = var_map.ravel()
    free = np.flatnonzero(~acquired.ravel())
    if len(free) < b:
        raise ExhaustionError(f"only {len(free)} unmeasured locations left, {b} requested")
    return [int(i) for i in _ranked(flat, free, b)]


def initial_state(ground_truth, op_template: SensingOperator, mask: SamplingMask, seed: int) -> AcquisitionState:
    """Simulate the starting measurements ``y0`` on ``mask``."""
    op = op_template.with_mask(mask)
    x = as_image(ground_truth, op.shape)
    y = add_noise(apply_forward(x, op), op.noise_sigma, seed)
    return AcquisitionState(mask, y, [])


def acquire(state: AcquisitionState, ground_truth, op_template: SensingOperator, indices,
            seed: int = 0, iteration: int | None = None, variances=(), variance_map=None) -> AcquisitionState:
    """Measure ``ground_truth`` at new ``indices`` with fresh noise and append them.

    Existing measurements are kept as they are; only the new locations are
    simulated, so ``y^(k) = [y^(k-1), y_l]``.
    """
    indices = [int(i) for i in indices]
    new_mask = state.mask.extend(indices)
    op = op_template.with_mask(new_mask)
    values = state.measurements.values.copy()
    if indices:
        x = as_image(ground_truth, op.shape)
        fresh = SamplingMask(new_mask.shape, tuple(indices))
        fresh_op = op_template.with_mask(fresh)
        values += add_noise(apply_forward(x, fresh_op), op.noise_sigma, seed).values
    it = len(state.history) + 1 if iteration is None else iteration
    entry = HistoryEntry(it, tuple(indices), tuple(float(v) for v in variances), variance_map)
    return AcquisitionState(new_mask, MeasurementSet(op, values), [*state.history, entry])


def run_adaptive_acquisition(ground_truth, op_template: SensingOperator, score: ScoreFunction,
                             sgld_cfg: SGLDConfig, policy: SelectionPolicy, n_add: int,
                             initial_mask: SamplingMask, threads: int = 1,
                             keep_variance_maps: bool = False):
    """Greedy adaptive sampling loop.

    Parameters
    ----------
    ground_truth
        Object that the simulated scanner measures.
    op_template
        Supplies coil maps and noise level; its mask is ignored.
    score
        Prior score used by the sampler.
    sgld_cfg
        Sampler settings. ``sgld_cfg.rng_seed`` is the root seed for the
        acquisition noise and for every ensemble drawn by the loop.
    policy
        Batch size and pointwise/line mode.
    n_add
        Number of outer iterations.
    initial_mask
        Locations measured before the first iteration; must be non-empty.

    Returns
    -------
    state, ensemble
        Final acquisition state and the posterior ensemble under the final mask.
    """
    if initial_mask.count == 0:
        raise ValueError("initial mask must contain at least one location")
    if n_add < 0:
        raise ValueError("n_add must be non-negative")
    root = sgld_cfg.rng_seed
    state = initial_state(ground_truth, op_template, initial_mask, derive_seed(root, TAG_ACQUISITION, 0))
    for k in range(1, n_add + 1):
        cfg_k = sgld_cfg.replace(rng_seed=derive_seed(root, TAG_SGLD, k))
        ens = sample_posterior_ensemble(state.measurements, state.operator, score, cfg_k, threads=threads)
        var_map = compute_variance_map(ens)
        picks = select_next(var_map, state, policy)
        state = acquire(state, ground_truth, op_template, picks, seed=derive_seed(root, TAG_ACQUISITION, k),
                        iteration=k, variances=var_map.ravel()[picks],
                        variance_map=var_map if keep_variance_maps else None)
    cfg_final = sgld_cfg.replace(rng_seed=derive_seed(root, TAG_SGLD, n_add + 1))
    ens = sample_posterior_ensemble(state.measurements, state.operator, score, cfg_final, threads=threads)
    return state, ens


def history_rows(state: AcquisitionState) -> list[tuple[int, int, float]]:
    """``(iteration, selected_index, variance_at_selection)`` rows for CSV export."""
    rows = []
    for entry in state.history:
        variances = entry.variances or (float("nan"),) * len(entry.indices)
        rows.extend((entry.iteration, idx, var) for idx, var in zip(entry.indices, variances))
    return rows


# --- baseline masks ---------------------------------------------------------

def _centered_freqs(shape):
    """Integer signed frequency coordinates of every flat index, shape ``(size, ndim)``."""
    grids = np.meshgrid(*[np.fft.fftfreq(n) * n for n in shape], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _low_frequency(shape, count):
    radius = np.sqrt(np.sum(_centered_freqs(shape) ** 2, axis=1))
    order = np.lexsort((np.arange(radius.size), radius))
    return [int(i) for i in order[:count]]


def _uniform_random(shape, count, rng):
    size = int(np.prod(shape))
    others = rng.permutation(np.arange(1, size))[: count - 1]
    return [0, *(int(i) for i in others)]


def _variable_density(shape, count, rng, power=2.0):
    freqs = _centered_freqs(shape)
    size = freqs.shape[0]
    radius = np.sqrt(np.sum((freqs / (np.asarray(shape) / 2.0)) ** 2, axis=1))
    weights = (1.0 + 8.0 * radius) ** (-power)
    weights[0] = 0.0
    weights /= weights.sum()
    others = rng.choice(size, size=count - 1, replace=False, p=weights) if count > 1 else []
    return [0, *(int(i) for i in others)]


def _poisson_fill(shape, pos, radius, order):
    """Random sequential addition with minimum distance ``radius``; DC first.

    ``pos`` holds the fftshifted grid position of every flat index.
    """
    blocked = np.zeros(shape, dtype=bool)
    reach = int(np.ceil(radius))
    offsets = np.stack(np.meshgrid(*[np.arange(-reach, reach + 1)] * len(shape), indexing="ij"), axis=-1)
    near = np.sum(offsets**2, axis=-1) < radius**2

    def block(p):
        lo = [max(0, c - reach) for c in p]
        hi = [min(n, c + reach + 1) for c, n in zip(p, shape)]
        win = tuple(slice(a - c + reach, b - c + reach) for a, b, c in zip(lo, hi, p))
        blocked[tuple(slice(a, b) for a, b in zip(lo, hi))] |= near[win]

    chosen = [0]
    block(pos[0])
    for idx in order:
        p = tuple(pos[idx])
        if blocked[p]:
            continue
        chosen.append(int(idx))
        block(p)
    return chosen


def poisson_disk_indices(shape, count, rng, tol=0.05, max_iter=40):
    """Poisson-disk pattern of exactly ``count`` locations and its minimum distance.

    The exclusion radius is bisected until random sequential addition yields a
    count within ``tol`` of the target, or the bracket collapses (counts jump
    at the discrete distances of the grid). The largest radius giving at least
    ``count`` points is kept and surplus points are dropped at random, which
    cannot shrink the minimum distance.
    """
    shape = normalize_shape(shape)
    freqs = _centered_freqs(shape).astype(int)
    pos = freqs + np.asarray(shape) // 2
    size = freqs.shape[0]
    order = rng.permutation(np.arange(1, size))
    lo, hi = 0.0, float(np.sqrt(np.sum((np.asarray(shape) / 2.0) ** 2))) + 1.0
    best_r, best = 0.0, [0, *(int(i) for i in order)]
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        pts = _poisson_fill(shape, pos, mid, order)
        if len(pts) >= count:
            lo, best_r, best = mid, mid, pts
            if len(pts) <= math.ceil(count * (1 + tol)):
                break
        else:
            hi = mid
        if hi - lo < 1e-3:
            break
    extra = len(best) - count
    if extra > 0:
        drop = set(rng.choice(np.arange(1, len(best)), size=extra, replace=False).tolist())
        best = [p for j, p in enumerate(best) if j not in drop]
    return best, best_r


def make_baseline_mask(kind: str, shape, target_count: int, seed: int = 0, mode: str = "pointwise") -> SamplingMask:
    """Fixed sampling pattern with exactly ``target_count`` locations (or lines).

    Every kind contains the DC sample (or the DC line in line mode). Line mode
    builds the 1D pattern over the columns of a 2D grid and acquires whole
    columns, in which case ``target_count`` counts lines.
    """
    shape = normalize_shape(shape)
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; choose from {BASELINE_KINDS}")
    line = mode == "line" and len(shape) == 2
    pattern_shape = (shape[1],) if line else shape
    size = int(np.prod(pattern_shape))
    if not 1 <= target_count <= size:
        raise ValueError(f"target_count {target_count} infeasible for a pattern of {size} locations")
    rng = np.random.default_rng(seed)
    if kind == "low_frequency":
        picks = _low_frequency(pattern_shape, target_count)
    elif kind == "uniform_random":
        picks = _uniform_random(pattern_shape, target_count, rng)
    elif kind == "variable_density":
        picks = _variable_density(pattern_shape, target_count, rng)
    else:
        picks, _ = poisson_disk_indices(pattern_shape, target_count, rng)
    if line:
        return SamplingMask(shape, tuple(line_indices(shape, picks)), "line")
    return SamplingMask(shape, tuple(picks), mode)
