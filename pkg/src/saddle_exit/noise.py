"""Counter-based Gaussian noise for reproducible parallel Monte Carlo.

Normals for trajectory ``i`` are produced in fixed chunks of ``CHUNK`` steps.
Chunk ``c`` comes from a fresh Philox generator keyed by ``(seed, i)`` with
the counter set to ``c`` (and a stream id), so every increment is a pure
function of ``(seed, trajectory, step, stream)``. Batch composition and
thread assignment cannot change any draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHUNK = 1024
_MASK = (1 << 64) - 1

# stream ids keep unrelated uses of one (seed, trajectory) pair apart
STREAM_SDE = 0
STREAM_LIMIT_LAW = 1


def _generator(seed: int, index: int, chunk: int, stream: int) -> np.random.Generator:
    key = np.array([seed & _MASK, index & _MASK], dtype=np.uint64)
    counter = np.array([0, 0, chunk, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def chunk_normals(seed: int, index: int, chunk: int, d: int, stream: int = STREAM_SDE) -> np.ndarray:
    """Standard normals of shape ``(CHUNK, d)`` for one trajectory chunk."""
    return _generator(seed, index, chunk, stream).standard_normal((CHUNK, d))


def batch_normals(seed: int, indices, start: int, count: int, d: int,
                  stream: int = STREAM_SDE) -> np.ndarray:
    """Normals for steps ``start .. start+count-1`` of every trajectory in ``indices``.

    Returns an array of shape ``(len(indices), count, d)``.
    """
    indices = np.asarray(indices, dtype=np.int64)
    out = np.empty((len(indices), count, d))
    if count == 0:
        return out
    c0, c1 = start // CHUNK, (start + count - 1) // CHUNK
    off = start - c0 * CHUNK
    for row, i in enumerate(indices):
        if c0 == c1:
            out[row] = chunk_normals(seed, int(i), c0, d, stream)[off:off + count]
        else:
            z = np.concatenate([chunk_normals(seed, int(i), c, d, stream) for c in range(c0, c1 + 1)])
            out[row] = z[off:off + count]
    return out


@dataclass(frozen=True)
class NoiseStream:
    """Wiener increments of one trajectory, addressable by step number."""

    seed: int
    trajectory_index: int
    stream: int = STREAM_SDE

    def normals(self, start: int, count: int, d: int) -> np.ndarray:
        return batch_normals(self.seed, [self.trajectory_index], start, count, d, self.stream)[0]

    def increments(self, h: float, count: int, d: int, start: int = 0, refine: int = 1) -> np.ndarray:
        """Increments over steps of size ``h`` built from ``refine`` sub-steps each.

        With ``refine=2`` a step of size ``h`` sums the two sub-increments a
        run at step ``h/2`` would use, so both runs see the same Brownian path.
        """
        z = self.normals(start * refine, count * refine, d)
        return np.sqrt(h / refine) * z.reshape(count, refine, d).sum(axis=1)
