"""Counter-based random streams for reproducible parallel Monte-Carlo.

Every random draw in a campaign comes from a Philox stream derived from the
master seed plus a structured key (setup index, purpose tag, batch index).
Streams are independent of execution order, so realizations can be evaluated
in parallel or re-generated in a second pass with bit-identical results.
"""

import numpy as np

# purpose tags for stream keys
TOPOLOGY = 0
CHANNEL = 1
PILOT_NOISE = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the Generator identified by (seed, key).

    The same (seed, key) always yields the same stream; distinct keys yield
    statistically independent streams (SeedSequence spawn keys feeding a
    counter-based Philox generator).
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """I.i.d. CN(0, 1) samples: real and imaginary parts N(0, 1/2)."""
    z = rng.standard_normal(size=tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
