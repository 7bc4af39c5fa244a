"""Counter-based random numbers.

Every variate is a pure function of ``(key, counter)``: the key is derived
from ``(master_seed, path_index, stream)`` and the counter addresses a
fixed slot, so a path's draws never depend on how paths are scheduled.
The generator is the SplitMix64 output mix applied to ``key + (c+1)*GAMMA``.

The scalar functions are compiled by numba for the hot loops; the ``*_np``
variants compute identical bits on uint64 arrays.
"""

import numpy as np

from ._accel import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi

# Counter layout inside one path stream.
CAND_SLOTS = 8          # per candidate: gap, accept, radius, up to 4 direction uniforms
SLOT_GAP = 0
SLOT_ACCEPT = 1
SLOT_RADIUS = 2
SLOT_DIR = 3
GRID_OFFSET = 1 << 62   # Gaussian grid increments live in their own counter range
GRID_SLOTS = 4

MASK64 = (1 << 64) - 1


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def uniform(key, counter):
    """Uniform variate in the open interval (0, 1)."""
    z = mix64(key + (counter + _ONE) * GAMMA)
    return ((z >> _S11) + 0.5) * _INV53


def _mix_int(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_key(master_seed, path_index, stream=0):
    """64-bit stream key for one ``(master_seed, path_index, stream)`` triple."""
    k = _mix_int(int(master_seed) + 0x9E3779B97F4A7C15)
    k = _mix_int(k ^ _mix_int(int(path_index) * 0xD1B54A32D192ED03 + 1))
    k = _mix_int(k ^ _mix_int(int(stream) * 0xAEF17502108EF2D9 + 7))
    return k


def derive_keys(master_seed, path_indices, stream=0):
    """Vector of keys (uint64) for many path indices."""
    return np.array([derive_key(master_seed, int(i), stream) for i in path_indices],
                    dtype=np.uint64)


def sub_seed(master_seed, tag):
    """Deterministic child seed for a named sub-task."""
    h = 0
    for ch in str(tag).encode("utf-8"):
        h = _mix_int(h ^ ch)
    return _mix_int(int(master_seed) ^ h)


def mix64_np(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def uniform_np(key, counter):
    """Array version of :func:`uniform`; broadcasts ``key`` against ``counter``."""
    key = np.asarray(key, dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    z = mix64_np(key + (counter + _ONE) * GAMMA)
    return ((z >> _S11).astype(np.float64) + 0.5) * _INV53


class RngStream:
    """Sequential view on one counter-based stream.

    Used outside the hot loops (oracle samplers, candidate draws for tests).
    """

    def __init__(self, master_seed, path_index=0, stream=0):
        self.key = np.uint64(derive_key(master_seed, path_index, stream))
        self.counter = 0

    def uniforms(self, n):
        c = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        return uniform_np(self.key, c)

    def exponentials(self, n):
        return -np.log(self.uniforms(n))

    def normals(self, n):
        m = (n + 1) // 2
        u = self.uniforms(2 * m)
        r = np.sqrt(-2.0 * np.log(u[:m]))
        z = np.concatenate([r * np.cos(_TWO_PI * u[m:]), r * np.sin(_TWO_PI * u[m:])])
        return z[:n]
