"""Deterministic sub-seed derivation from a single root seed.

Every random draw in the package is funneled through :func:`derive_seed`, so an
experiment is a pure function of its root seed. Tags are small integers naming
the consumer (see the ``TAG_*`` constants) followed by any indices such as the
outer iteration or the chain number.
"""

import numpy as np

TAG_ACQUISITION = 1
TAG_SGLD = 2
TAG_BASELINE_MASK = 3
TAG_BASELINE_ACQUISITION = 4
TAG_BASELINE_SGLD = 5
TAG_PILOT_FRAME = 6
TAG_CHAIN = 7
TAG_TRAINING_SET = 8


def derive_seed(root: int, *tags: int) -> int:
    """Return a 63-bit integer seed derived from ``root`` and ``tags``."""
    ss = np.random.SeedSequence([int(root) % 2**64, *(int(t) for t in tags)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(root: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(root) % 2**64, *(int(t) for t in tags)]))


def complex_normal(rng: np.random.Generator, shape, std: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian draws with ``E|z|^2 = std**2``.

    Real and imaginary parts are independent with standard deviation
    ``std / sqrt(2)`` each.
    """
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (std / np.sqrt(2.0)) * (re + 1j * im)
