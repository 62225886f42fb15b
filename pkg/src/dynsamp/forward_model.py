"""Linear Fourier sensing model ``y = A x + noise`` with coil weighting.

Images are plain complex numpy arrays of shape ``(n,)`` (1D) or
``(rows, cols)`` (2D). Measurements live densely on the full k-space grid, one
grid per coil, with exact zeros at locations that have not been acquired.
k-space uses the unshifted numpy FFT order, so the DC sample is flat index 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import complex_normal

MASK_MODES = ("pointwise", "line")
PHANTOM_KINDS = ("shepp_logan_like", "smooth_bumps", "piecewise_constant_1d")
COIL_PROFILES = ("uniform", "gaussian_lobes")


class DimensionError(ValueError):
    """Shapes of an image, mask, coil set or measurement do not agree."""


def normalize_shape(shape) -> tuple[int, ...]:
    if np.isscalar(shape):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if len(shape) not in (1, 2) or min(shape) < 1:
        raise DimensionError(f"grid shape must be 1D or 2D with positive sizes, got {shape}")
    return shape


def as_image(x, shape=None) -> np.ndarray:
    """Coerce ``x`` to a finite complex128 image, optionally checking its shape."""
    x = np.asarray(x, dtype=np.complex128)
    if shape is not None and x.shape != tuple(shape):
        raise DimensionError(f"image shape {x.shape} does not match {tuple(shape)}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite entries")
    return x


def _fft_axes(ndim: int) -> tuple[int, ...]:
    return tuple(range(-ndim, 0))


def line_indices(shape, columns) -> list[int]:
    """Flat indices of whole columns of a 2D grid, column by column.

    For a 1D grid every index is its own line.
    """
    shape = normalize_shape(shape)
    columns = [int(c) for c in columns]
    if len(shape) == 1:
        return columns
    rows, cols = shape
    out = []
    for c in columns:
        if not 0 <= c < cols:
            raise IndexError(f"column {c} out of range for {cols} columns")
        out.extend(r * cols + c for r in range(rows))
    return out


@dataclass(frozen=True)
class SamplingMask:
    """Append-only ordered set of acquired flat k-space indices.

    In ``line`` mode the acquired set is a union of complete columns
    (phase-encode lines) of a 2D grid.
    """

    shape: tuple[int, ...]
    acquired: tuple[int, ...] = ()
    mode: str = "pointwise"

    def __post_init__(self):
        object.__setattr__(self, "shape", normalize_shape(self.shape))
        object.__setattr__(self, "acquired", tuple(int(i) for i in self.acquired))
        if self.mode not in MASK_MODES:
            raise ValueError(f"mask mode must be one of {MASK_MODES}, got {self.mode!r}")
        size = self.size
        if len(set(self.acquired)) != len(self.acquired):
            raise ValueError("mask indices must be unique")
        if any(i < 0 or i >= size for i in self.acquired):
            raise IndexError(f"mask index out of range for grid of size {size}")
        if self.mode == "line" and len(self.shape) == 2 and self.acquired:
            rows, cols = self.shape
            counts = np.bincount(np.asarray(self.acquired) % cols, minlength=cols)
            if np.any((counts != 0) & (counts != rows)):
                raise ValueError("line-mode mask must consist of complete columns")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def count(self) -> int:
        return len(self.acquired)

    def __len__(self) -> int:
        return len(self.acquired)

    def to_array(self) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        m[list(self.acquired)] = True
        return m.reshape(self.shape)

    def acquired_columns(self) -> list[int]:
        """Columns in acquisition order (line mode bookkeeping)."""
        if len(self.shape) == 1:
            return list(self.acquired)
        cols = self.shape[1]
        seen: dict[int, None] = {}
        for i in self.acquired:
            seen.setdefault(i % cols, None)
        return list(seen)

    def extend(self, indices) -> SamplingMask:
        """Return a new mask with ``indices`` appended.

        Raises ``ValueError`` if any index is already acquired.
        """
        indices = [int(i) for i in indices]
        already = set(self.acquired).intersection(indices)
        if already:
            raise ValueError(f"indices already acquired: {sorted(already)[:10]}")
        return SamplingMask(self.shape, self.acquired + tuple(indices), self.mode)

    @classmethod
    def full(cls, shape, mode: str = "pointwise") -> SamplingMask:
        shape = normalize_shape(shape)
        return cls(shape, tuple(range(int(np.prod(shape)))), mode)

    @classmethod
    def from_array(cls, array, mode: str = "pointwise") -> SamplingMask:
        array = np.asarray(array)
        return cls(array.shape, tuple(np.flatnonzero(array.ravel())), mode)


@dataclass(frozen=True, eq=False)
class CoilSensitivities:
    """Stack of complex coil maps, shape ``(num_coils, *image_shape)``."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim not in (2, 3) or maps.shape[0] < 1:
            raise DimensionError(f"coil maps must have shape (num_coils, *image_shape), got {maps.shape}")
        if not np.all(np.isfinite(maps)):
            raise ValueError("coil maps contain non-finite entries")
        if np.any(np.sum(np.abs(maps) ** 2, axis=0) <= 0):
            raise ValueError("coil maps have zero sum-of-squares at some pixel")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)

    @property
    def num_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.maps.shape[1:]


@dataclass(frozen=True, eq=False)
class SensingOperator:
    """Masked, coil-weighted, orthonormal FFT with explicit adjoint.

    ``forward`` maps an image to ``(num_coils, *shape)`` k-space grids that are
    zero off the mask; ``adjoint`` coil-combines zero-filled inverse FFTs.
    """

    mask: SamplingMask
    coils: CoilSensitivities
    noise_sigma: float = 0.0
    _mask_array: np.ndarray = field(init=False, repr=False)
    _conj_maps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.mask.shape) != tuple(self.coils.shape):
            raise DimensionError(f"mask shape {self.mask.shape} does not match coil shape {self.coils.shape}")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))
        object.__setattr__(self, "_mask_array", self.mask.to_array())
        object.__setattr__(self, "_conj_maps", np.conj(self.coils.maps))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape

    @property
    def num_coils(self) -> int:
        return self.coils.num_coils

    @property
    def mask_array(self) -> np.ndarray:
        return self._mask_array

    def forward(self, x: np.ndarray) -> np.ndarray:
        """``(..., *shape)`` images to ``(..., num_coils, *shape)`` masked k-space."""
        nd = len(self.shape)
        if x.shape[x.ndim - nd:] != self.shape or x.ndim < nd:
            raise DimensionError(f"image shape {x.shape} does not match operator shape {self.shape}")
        xe = np.expand_dims(x, axis=x.ndim - nd)
        k = np.fft.fftn(self.coils.maps * xe, axes=_fft_axes(nd), norm="ortho")
        k *= self._mask_array
        return k

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """``(..., num_coils, *shape)`` k-space to coil-combined ``(..., *shape)`` images."""
        nd = len(self.shape)
        expected = (self.num_coils, *self.shape)
        if y.ndim < nd + 1 or y.shape[y.ndim - nd - 1:] != expected:
            raise DimensionError(f"measurement shape {y.shape} does not match operator shape {expected}")
        im = np.fft.ifftn(y * self._mask_array, axes=_fft_axes(nd), norm="ortho")
        if self.num_coils == 1:
            return self._conj_maps[0] * np.squeeze(im, axis=-(nd + 1))
        return np.sum(self._conj_maps * im, axis=-(nd + 1))

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(x))

    def with_mask(self, mask: SamplingMask) -> SensingOperator:
        return SensingOperator(mask, self.coils, self.noise_sigma)

    def full(self) -> SensingOperator:
        """The same operator with every k-space location sampled."""
        return self.with_mask(SamplingMask.full(self.shape, self.mask.mode))


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Dense per-coil k-space data produced under ``operator``."""

    operator: SensingOperator
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        expected = (self.operator.num_coils, *self.operator.shape)
        if values.shape != expected:
            raise DimensionError(f"measurement shape {values.shape} does not match {expected}")
        object.__setattr__(self, "values", values)


def make_operator(shape, mask=None, coils=None, noise_sigma: float = 0.0) -> SensingOperator:
    """Convenience constructor: full mask and one uniform coil by default."""
    shape = normalize_shape(shape)
    if mask is None:
        mask = SamplingMask.full(shape)
    if coils is None:
        coils = make_coil_maps(1, shape, "uniform")
    return SensingOperator(mask, coils, noise_sigma)


def apply_forward(x, op: SensingOperator) -> MeasurementSet:
    """Noiseless measurements ``Mask * FFT(S_c * x)`` for every coil ``c``."""
    x = as_image(x)
    return MeasurementSet(op, op.forward(x))


def apply_adjoint(y, op: SensingOperator) -> np.ndarray:
    """``sum_c conj(S_c) * IFFT(Mask * y_c)``, the exact adjoint of :func:`apply_forward`."""
    values = y.values if isinstance(y, MeasurementSet) else np.asarray(y, dtype=np.complex128)
    if isinstance(y, MeasurementSet) and y.operator.shape != op.shape:
        raise DimensionError(f"measurement grid {y.operator.shape} does not match operator {op.shape}")
    return op.adjoint(values)


def add_noise(y: MeasurementSet, sigma: float, rng_seed) -> MeasurementSet:
    """Add circular complex Gaussian noise of total variance ``sigma**2`` on the mask.

    Parameters
    ----------
    y
        Measurements to perturb.
    sigma
        Standard deviation per complex sample; the real and imaginary parts
        each get ``sigma / sqrt(2)``.
    rng_seed
        Integer seed or an existing ``numpy.random.Generator``.
    """
    if sigma < 0:
        raise ValueError("noise sigma must be non-negative")
    if sigma == 0:
        return MeasurementSet(y.operator, y.values.copy())
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    noise = complex_normal(rng, y.values.shape, sigma)
    return MeasurementSet(y.operator, y.values + noise * y.operator.mask_array)


def simulate_measurements(x, op: SensingOperator, rng_seed) -> MeasurementSet:
    """Forward model plus noise at ``op.noise_sigma``."""
    return add_noise(apply_forward(x, op), op.noise_sigma, rng_seed)


# --- phantoms ---------------------------------------------------------------

# (amplitude, semi-axis a, semi-axis b, x0, y0, rotation in degrees); modified Shepp-Logan.
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


def _grid_coords(shape):
    """Pixel-centre coordinates in [-1, 1]; for 2D returns (x, y) with y pointing up."""
    if len(shape) == 1:
        n = shape[0]
        return ((np.arange(n) + 0.5) / n) * 2 - 1
    rows, cols = shape
    xs = ((np.arange(cols) + 0.5) / cols) * 2 - 1
    ys = 1 - ((np.arange(rows) + 0.5) / rows) * 2
    return np.meshgrid(xs, ys)


def _shepp_logan_magnitude(shape):
    x, y = _grid_coords(shape)
    img = np.zeros(shape)
    for amp, a, b, x0, y0, deg in _SHEPP_LOGAN:
        t = np.deg2rad(deg)
        xr = (x - x0) * np.cos(t) + (y - y0) * np.sin(t)
        yr = -(x - x0) * np.sin(t) + (y - y0) * np.cos(t)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp
    img = np.clip(img, 0.0, None)
    return img / img.max()


def _smooth_phase(shape):
    if len(shape) == 1:
        t = _grid_coords(shape)
        return 0.6 * t + 0.4 * np.exp(-((t - 0.2) ** 2) / 0.2)
    x, y = _grid_coords(shape)
    return 0.5 * x + 0.3 * y + 0.4 * np.exp(-((x + 0.2) ** 2 + (y - 0.1) ** 2) / 0.3)


def make_phantom(kind: str, shape) -> np.ndarray:
    """Deterministic complex test object with magnitude in [0, 1] and smooth phase.

    ``shepp_logan_like`` needs a 2D shape, ``piecewise_constant_1d`` a 1D shape;
    ``smooth_bumps`` accepts either.
    """
    shape = normalize_shape(shape)
    if kind == "shepp_logan_like":
        if len(shape) != 2:
            raise ValueError("shepp_logan_like phantom needs a 2D shape")
        mag = _shepp_logan_magnitude(shape)
    elif kind == "smooth_bumps":
        if len(shape) == 1:
            t = _grid_coords(shape)
            mag = (np.exp(-((t + 0.45) ** 2) / 0.02)
                   + 0.6 * np.exp(-((t - 0.1) ** 2) / 0.05)
                   + 0.8 * np.exp(-((t - 0.6) ** 2) / 0.01))
        else:
            x, y = _grid_coords(shape)
            bumps = ((1.0, -0.3, 0.3, 0.06), (0.7, 0.35, 0.2, 0.1), (0.85, 0.0, -0.4, 0.04), (0.5, -0.4, -0.3, 0.02))
            mag = sum(a * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / w) for a, cx, cy, w in bumps)
        mag = mag / mag.max()
    elif kind == "piecewise_constant_1d":
        if len(shape) != 1:
            raise ValueError("piecewise_constant_1d phantom needs a 1D shape")
        n = shape[0]
        edges = (0.0, 0.15, 0.35, 0.5, 0.7, 0.85, 1.0)
        levels = (0.1, 0.6, 0.3, 1.0, 0.5, 0.0)
        pos = (np.arange(n) + 0.5) / n
        mag = np.asarray(levels)[np.searchsorted(edges, pos, side="right") - 1]
    else:
        raise ValueError(f"unsupported phantom kind {kind!r}; choose from {PHANTOM_KINDS}")
    return mag * np.exp(1j * _smooth_phase(shape))


def make_coil_maps(num_coils: int, shape, profile: str = "uniform") -> CoilSensitivities:
    """Synthetic smooth coil sensitivities.

    ``uniform`` gives ``num_coils`` identical constant maps of value
    ``1/sqrt(num_coils)`` (all ones for one coil). ``gaussian_lobes`` places
    Gaussian lobes around the field of view, adds a gentle linear phase per coil
    and normalizes the maps to unit sum-of-squares at every pixel.
    """
    if int(num_coils) < 1:
        raise ValueError("num_coils must be at least 1")
    num_coils = int(num_coils)
    shape = normalize_shape(shape)
    if profile == "uniform":
        maps = np.full((num_coils, *shape), 1.0 / np.sqrt(num_coils), dtype=np.complex128)
        return CoilSensitivities(maps)
    if profile != "gaussian_lobes":
        raise ValueError(f"unsupported coil profile {profile!r}; choose from {COIL_PROFILES}")

    maps = np.empty((num_coils, *shape), dtype=np.complex128)
    if len(shape) == 1:
        t = _grid_coords(shape)
        centers = np.linspace(-0.9, 0.9, num_coils) if num_coils > 1 else np.zeros(1)
        for c, t0 in enumerate(centers):
            maps[c] = np.exp(-((t - t0) ** 2) / (2 * 0.5**2)) * np.exp(1j * (0.3 * c + 0.5 * t * t0))
    else:
        x, y = _grid_coords(shape)
        for c in range(num_coils):
            ang = 2 * np.pi * c / num_coils + np.pi / 4
            cx, cy = 1.1 * np.cos(ang), 1.1 * np.sin(ang)
            lobe = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * 0.8**2))
            maps[c] = lobe * np.exp(1j * (0.4 * c + 0.5 * (x * np.cos(ang) + y * np.sin(ang))))
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return CoilSensitivities(maps)
