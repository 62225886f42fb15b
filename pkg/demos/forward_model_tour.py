"""A tour of the sensing model: phantoms, coil maps, masks and the adjoint.

Run with ``python demos/forward_model_tour.py``; previews land in ``demo_out/tour``.
"""

from pathlib import Path

import numpy as np

from dynsamp import apply_adjoint, make_baseline_mask, make_coil_maps, make_operator, make_phantom, simulate_measurements
from dynsamp.arrayio import save_pgm

out = Path("demo_out/tour")
shape = (64, 64)

x = make_phantom("shepp_logan_like", shape)
save_pgm(out / "phantom.pgm", x)

# Four coils, each seeing mostly one corner of the field of view.
coils = make_coil_maps(4, shape, "gaussian_lobes")
for c, m in enumerate(coils.maps):
    save_pgm(out / f"coil{c}.pgm", m * x)

# A 4x undersampled Poisson-disk mask, noise at 1% of the peak.
mask = make_baseline_mask("poisson_disk", shape, 1024, seed=0)
save_pgm(out / "mask.pgm", mask.to_array().astype(float), fftshift=True)
op = make_operator(shape, mask, coils, noise_sigma=0.01)
y = simulate_measurements(x, op, rng_seed=0)

# The adjoint is the zero-filled, coil-combined reconstruction.
zero_filled = apply_adjoint(y, op)
save_pgm(out / "zero_filled.pgm", zero_filled)
print(f"{mask.count} of {mask.size} k-space locations measured")
print(f"zero-filled relative error: {np.linalg.norm(zero_filled - x) / np.linalg.norm(x):.3f}")

# Dot-product test of the adjoint on random data.
rng = np.random.default_rng(1)
u = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
v = rng.standard_normal((4, *shape)) + 1j * rng.standard_normal((4, *shape))
lhs, rhs = np.vdot(op.forward(u), v), np.vdot(u, op.adjoint(v))
print(f"<Au, v> - <u, A'v> = {abs(lhs - rhs):.2e}")
