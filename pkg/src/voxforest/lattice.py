"""Discrete velocity sets (D2Q9 / D3Q27) and the direction conventions shared
by the grid, voxelizer and solver.

Direction 0 is the rest direction. Directions 1..Q-1 come in antiparallel
pairs (2k-1, 2k) so that ``opposite(q)`` is a constant-time index flip. The
same ordering indexes block-neighbor links, so "neighbor in direction q" and
"streaming direction q" always agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["VelocitySet", "D2Q9", "D3Q27", "velocity_set"]


def _paired_directions(dim):
    # Enumerate one representative per antiparallel pair, ordered by the
    # number of nonzero components (axis, face-diagonal, corner).
    reps = []
    rng = (-1, 0, 1)
    if dim == 2:
        cands = [(x, y) for x in rng for y in rng if (x, y) != (0, 0)]
    else:
        cands = [(x, y, z) for x in rng for y in rng for z in rng
                 if (x, y, z) != (0, 0, 0)]
    seen = set()
    for c in sorted(cands, key=lambda c: (sum(abs(v) for v in c), tuple(-v for v in c))):
        if c in seen or tuple(-v for v in c) in seen:
            continue
        seen.add(c)
        reps.append(c)
    dirs = [tuple([0] * dim)]
    for c in reps:
        dirs.append(c)
        dirs.append(tuple(-v for v in c))
    return np.array(dirs, dtype=np.int64)


def _weights(c):
    q, dim = c.shape
    w = np.empty(q, dtype=np.float64)
    if dim == 2:
        table = {0: 4.0 / 9.0, 1: 1.0 / 9.0, 2: 1.0 / 36.0}
    else:
        table = {0: 8.0 / 27.0, 1: 2.0 / 27.0, 2: 1.0 / 54.0, 3: 1.0 / 216.0}
    for i in range(q):
        w[i] = table[int(np.sum(np.abs(c[i])))]
    return w


@dataclass(frozen=True)
class VelocitySet:
    """Lattice velocity set with rest-first, antiparallel-pair ordering."""

    dim: int
    c: np.ndarray          # (Q, D) int64 direction vectors
    w: np.ndarray          # (Q,) weights
    opposite: np.ndarray   # (Q,) index of -c[q]
    cs2: float = 1.0 / 3.0
    norm: np.ndarray = field(default=None)  # (Q,) |c[q]|

    @property
    def q(self) -> int:
        return self.c.shape[0]

    def pair_representatives(self):
        """One member of each antiparallel pair (the odd indices)."""
        return np.arange(1, self.q, 2)


def _build(dim):
    c = _paired_directions(dim)
    w = _weights(c)
    q = c.shape[0]
    opp = np.zeros(q, dtype=np.int64)
    for i in range(1, q):
        opp[i] = i + 1 if i % 2 == 1 else i - 1
    norm = np.sqrt((c.astype(np.float64) ** 2).sum(axis=1))
    vs = VelocitySet(dim=dim, c=c, w=w, opposite=opp, norm=norm)
    assert abs(vs.w.sum() - 1.0) < 1e-15
    assert np.all(c[opp] == -c)
    return vs


D2Q9 = _build(2)
D3Q27 = _build(3)


def velocity_set(dim: int) -> VelocitySet:
    if dim == 2:
        return D2Q9
    if dim == 3:
        return D3Q27
    raise ValueError(f"unsupported dimension {dim}")
