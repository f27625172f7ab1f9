"""Counter-based uniforms keyed by (seed, sample, position, step).

Each uniform is a pure function of its four integer coordinates, so a sweep
split across any number of workers, or run in any batch order, draws the same
numbers as a serial run. The mixing function is SplitMix64 applied once per
coordinate; the top 53 bits of the final state become a double in [0, 1).
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z):
    z = z + _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed, sample_ids, positions, step):
    """Uniforms of shape ``broadcast(sample_ids, positions)`` for one step."""
    sample_ids = np.asarray(sample_ids, dtype=np.uint64)
    positions = np.asarray(positions, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(np.uint64(int(seed) & _MASK64))
        h = _mix(h ^ sample_ids)
        h = _mix(h[..., None] ^ positions) if h.ndim else _mix(h ^ positions)
        h = _mix(h ^ np.uint64(int(step) & _MASK64))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def derive_seed(master_seed, *labels):
    """Stable 64-bit child seed for a labelled sub-run (e.g. one sweep cell)."""
    h = np.uint64(int(master_seed) & _MASK64)
    with np.errstate(over="ignore"):
        for label in labels:
            for byte in str(label).encode():
                h = _mix(h ^ np.uint64(byte))
            h = _mix(h)
    return int(h)
