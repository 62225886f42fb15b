"""Score functions ``grad log p(x)`` for complex images.

Gradients of a real log-density are returned as ``d/dRe + 1j * d/dIm``, i.e.
the real and imaginary parts are treated as independent real coordinates.
With that convention the roughness prior ``log p = -lam * ||T x||^2 / 2`` has
score ``-lam * T'T x``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .arrayio import dumps_json, load_array, save_array
from .forward_model import DimensionError, make_phantom, normalize_shape
from .seeding import make_rng, TAG_TRAINING_SET

SCORE_KINDS = ("roughness", "empirical")


def apply_T(x: np.ndarray) -> np.ndarray:
    """Periodic forward first differences along every axis.

    Returns an array of shape ``(x.ndim, *x.shape)`` whose slice ``d`` holds
    ``x[n + e_d] - x[n]`` with wrap-around.
    """
    x = np.asarray(x)
    return np.stack([np.roll(x, -1, axis=ax) - x for ax in range(x.ndim)])


def apply_TH(d: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`apply_T`."""
    d = np.asarray(d)
    ndim = d.ndim - 1
    if d.shape[0] != ndim:
        raise DimensionError(f"expected {ndim} stacked difference fields, got {d.shape[0]}")
    return sum(np.roll(d[ax], 1, axis=ax) - d[ax] for ax in range(ndim))


def roughness_normal(x: np.ndarray, ndim: int | None = None) -> np.ndarray:
    """``T'T x`` (the negated periodic Laplacian) over the last ``ndim`` axes."""
    ndim = x.ndim if ndim is None else ndim
    axes = range(x.ndim - ndim, x.ndim)
    out = 2 * ndim * x
    for ax in axes:
        out = out - np.roll(x, 1, axis=ax) - np.roll(x, -1, axis=ax)
    return out


def score_roughness(x, lam: float) -> np.ndarray:
    if not lam > 0:
        raise ValueError("roughness weight lambda must be positive")
    x = np.asarray(x, dtype=np.complex128)
    return -lam * apply_TH(apply_T(x))


class ScoreFunction:
    """Base class: ``f(x)`` returns the score, ``log_density`` the log-density up to a constant."""

    kind: str = ""
    shape: tuple[int, ...] | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def batch(self, xs: np.ndarray, ndim: int) -> np.ndarray:
        """Scores of a stack of images ``(batch, *shape)``."""
        return np.stack([self(x) for x in xs])


@dataclass(frozen=True)
class RoughnessScore(ScoreFunction):
    """First-order roughness prior ``p(x) ~ exp(-lam * ||T x||^2 / 2)``, periodic ``T``."""

    lam: float
    shape: tuple[int, ...] | None = None
    kind: str = field(default="roughness", init=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("roughness weight lambda must be positive")

    def __call__(self, x):
        return -self.lam * roughness_normal(x)

    def batch(self, xs, ndim):
        return -self.lam * roughness_normal(xs, ndim)

    def log_density(self, x):
        return -0.5 * self.lam * float(np.sum(np.abs(apply_T(x)) ** 2))


@dataclass(frozen=True, eq=False)
class EmpiricalScore(ScoreFunction):
    """Score of an isotropic Gaussian kernel density centred on training patches.

    ``p(x) = mean_j N(x; patch_j, h^2 I)`` over the real coordinates of ``x``,
    so ``score(x) = sum_j w_j(x) (patch_j - x) / h^2`` with softmax weights
    ``w_j`` proportional to ``exp(-||x - patch_j||^2 / (2 h^2))``.
    """

    patches: np.ndarray
    bandwidth: float
    kind: str = field(default="empirical", init=False)

    def __post_init__(self):
        patches = np.array(self.patches, dtype=np.complex128)
        if patches.ndim < 2 or patches.shape[0] == 0:
            raise ValueError("empirical score needs a non-empty stack of patches")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        patches.setflags(write=False)
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def shape(self):
        return self.patches.shape[1:]

    @property
    def num_patches(self) -> int:
        return self.patches.shape[0]

    def _sq_dists(self, x):
        diff = self.patches - x
        return np.sum(np.abs(diff.reshape(len(diff), -1)) ** 2, axis=1)

    def weights(self, x) -> np.ndarray:
        logits = -self._sq_dists(x) / (2 * self.bandwidth**2)
        return np.exp(logits - logsumexp(logits))

    def __call__(self, x):
        w = self.weights(x)
        mean = np.tensordot(w, self.patches, axes=1)
        return (mean - x) / self.bandwidth**2

    def log_density(self, x):
        logits = -self._sq_dists(x) / (2 * self.bandwidth**2)
        return float(logsumexp(logits) - np.log(self.num_patches))


def fit_empirical_score(data, bandwidth: float) -> EmpiricalScore:
    """Build the kernel score of a training set of equally shaped complex patches."""
    if len(data) == 0:
        raise ValueError("training set is empty")
    shapes = {np.shape(p) for p in data}
    if len(shapes) != 1:
        raise DimensionError(f"training patches have differing shapes: {sorted(shapes)}")
    return EmpiricalScore(np.stack([np.asarray(p, dtype=np.complex128) for p in data]), bandwidth)


def eval_score(f: ScoreFunction, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if f.shape is not None and tuple(f.shape) != x.shape:
        raise DimensionError(f"score expects shape {tuple(f.shape)}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("score evaluated at a non-finite image")
    return f(x)


def make_score(kind: str, shape=None, lam: float = 1.0, patches=None, bandwidth: float = 1.0) -> ScoreFunction:
    if kind == "roughness":
        return RoughnessScore(lam, None if shape is None else normalize_shape(shape))
    if kind == "empirical":
        if patches is None:
            raise ValueError("empirical score needs training patches")
        return fit_empirical_score(patches, bandwidth)
    raise ValueError(f"unknown score kind {kind!r}; choose from {SCORE_KINDS}")


def synthetic_training_set(kind: str, shape, count: int, seed: int) -> list[np.ndarray]:
    """Randomly shifted, scaled and phase-rotated copies of a phantom.

    A small stand-in for an image database; circular shifts of a few pixels and
    mild intensity changes keep the patches close to, but distinct from, the
    test object.
    """
    shape = normalize_shape(shape)
    rng = make_rng(seed, TAG_TRAINING_SET)
    base = make_phantom(kind, shape)
    out = []
    for _ in range(count):
        shift = tuple(int(s) for s in rng.integers(-2, 3, size=len(shape)))
        scale = rng.uniform(0.85, 1.15)
        phase = rng.uniform(-0.3, 0.3)
        out.append(scale * np.exp(1j * phase) * np.roll(base, shift, axis=tuple(range(len(shape)))))
    return out


def save_empirical_score(path, score: EmpiricalScore) -> Path:
    """Write the patch stack as an array file plus a ``.prior.json`` header."""
    stem = save_array(path, score.patches)
    header = {"kind": "empirical", "bandwidth": score.bandwidth, "num_patches": score.num_patches}
    stem.with_suffix(".prior.json").write_text(dumps_json(header))
    return stem


def load_empirical_score(path) -> EmpiricalScore:
    stem = Path(path)
    header = json.loads(stem.with_suffix(".prior.json").read_text())
    if header.get("kind") != "empirical":
        raise ValueError(f"not an empirical prior header: {header}")
    patches = load_array(stem).astype(np.complex128)
    if patches.shape[0] != header["num_patches"]:
        raise ValueError("patch count in header and array disagree")
    return EmpiricalScore(patches, header["bandwidth"])
