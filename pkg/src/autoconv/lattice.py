"""Mass-quantum lattice on the simplex and its simplicial cells.

A mesh with ``m`` quanta places lattice points at ``a_i = 4n c_i / m``
where ``c`` is a composition of ``m`` into ``2n`` nonnegative parts, so
every lattice profile is exactly normalized.

Cells come from the Freudenthal (Kuhn) triangulation in partial-sum
coordinates ``y_s = c_0 + ... + c_{s-1}`` (``s = 1 .. d``, ``d = 2n - 1``),
where the simplex is the order region ``0 <= y_1 <= ... <= y_d <= m``. A
cell is a base point ``z`` plus a permutation ``pi``; its vertices are
``z, z + e_pi(1), ..., z + e_pi(1) + ... + e_pi(d)``. Every hyperplane
``y_s = y_t`` is a wall of the triangulation, so the cells inside the region
tile it exactly; there are ``m**d`` of them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np

from .core import CoefficientProfile, RangeMode, WindowIndex, as_mode, window_arrays, window_in_range
from .errors import CursorError, DomainError, RangeError

# int64 numerators times window-lcm factors must stay below this
_INT_LIMIT = 2**62


@dataclass(frozen=True)
class MeshSpec:
    n: int
    m: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DomainError(f"mesh needs n >= 1 and m >= 1, got n={self.n}, m={self.m}")

    @property
    def h(self) -> Fraction:
        """Coordinate step ``4n/m``."""
        return Fraction(4 * self.n, self.m)

    @property
    def parts(self) -> int:
        return 2 * self.n

    @property
    def dim(self) -> int:
        return 2 * self.n - 1


@dataclass(frozen=True)
class LatticePoint:
    counts: tuple

    def profile(self, mesh: MeshSpec) -> CoefficientProfile:
        if len(self.counts) != mesh.parts or sum(self.counts) != mesh.m:
            raise DomainError(f"{self.counts} is not a composition of {mesh.m} into {mesh.parts} parts")
        return CoefficientProfile(mesh.n, tuple(mesh.h * c for c in self.counts), normalized=True)


@dataclass(frozen=True)
class ChunkCursor:
    """Sub-enumeration of the compositions that start with ``prefix``."""

    prefix: tuple

    def encode(self) -> str:
        return ",".join(str(c) for c in self.prefix)

    @classmethod
    def decode(cls, text: str) -> "ChunkCursor":
        try:
            prefix = tuple(int(tok) for tok in text.split(",")) if text.strip() else ()
        except ValueError as exc:
            raise CursorError(f"malformed cursor {text!r}") from exc
        return cls(prefix)

    def validate(self, mesh: MeshSpec) -> None:
        if len(self.prefix) >= mesh.parts:
            raise CursorError(f"cursor prefix {self.prefix} too long for {mesh.parts} parts")
        if any(c < 0 for c in self.prefix) or sum(self.prefix) > mesh.m:
            raise CursorError(f"cursor prefix {self.prefix} invalid for m={mesh.m}")


def composition_count(m: int, parts: int) -> int:
    if m < 0 or parts < 1:
        raise DomainError("composition_count needs m >= 0 and parts >= 1")
    return math.comb(m + parts - 1, parts - 1)


def _compositions(total: int, parts: int) -> Iterator[tuple]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_compositions(mesh: MeshSpec, chunk: ChunkCursor | None = None) -> Iterator[LatticePoint]:
    """Lexicographic stream of lattice points, optionally restricted to a chunk."""
    prefix = ()
    if chunk is not None:
        chunk.validate(mesh)
        prefix = chunk.prefix
    remaining = mesh.m - sum(prefix)
    for rest in _compositions(remaining, mesh.parts - len(prefix)):
        yield LatticePoint(prefix + rest)


def chunk_cursors(mesh: MeshSpec, depth: int = 1) -> list[ChunkCursor]:
    """Cursors fixing the first ``depth`` counts; they partition the lattice, in lex order."""
    if not 1 <= depth < mesh.parts:
        raise CursorError(f"depth must be in [1, {mesh.parts - 1}]")
    return [ChunkCursor(p[:depth]) for p in _prefixes(mesh.m, depth, mesh.parts)]


def _prefixes(m, depth, parts):
    # prefixes of length depth whose sum is <= m (remaining parts absorb the rest)
    for p in itertools.product(range(m + 1), repeat=depth):
        if sum(p) <= m:
            yield p + (0,) * (parts - depth)


@lru_cache(maxsize=64)
def composition_array(total: int, parts: int) -> np.ndarray:
    """All compositions of ``total`` into ``parts`` parts as a lex-ordered int64 array."""
    if parts == 1:
        out = np.array([[total]], dtype=np.int64)
    else:
        blocks = []
        for first in range(total + 1):
            rest = composition_array(total - first, parts - 1)
            blocks.append(np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def covering_radius_l1(mesh: MeshSpec) -> Fraction:
    """``2n h``: round every coordinate to the ``h``-grid, then repair the sum.

    Each coordinate moves by less than ``h`` in the repair step, so every
    point of the simplex is within this l1 distance of a lattice point.
    """
    return mesh.parts * mesh.h


def round_to_lattice(mesh: MeshSpec, a) -> tuple:
    """Largest-remainder rounding of a simplex point to a lattice composition."""
    x = np.asarray(a, dtype=np.float64) * (mesh.m / (4 * mesh.n))
    base = np.floor(x).astype(np.int64)
    deficit = mesh.m - int(base.sum())
    order = np.argsort(-(x - base), kind="stable")
    if deficit >= 0:
        base[order[:deficit]] += 1
    else:
        # float noise pushed the floor sum over m
        for i in order[::-1]:
            if deficit == 0:
                break
            if base[i] > 0:
                base[i] -= 1
                deficit += 1
    return tuple(int(c) for c in base)


def exact_window_numerator(point: LatticePoint, w: WindowIndex) -> int:
    """``N = sum_{k <= i+j <= k+ell-2} c_i c_j``; the window value is ``4 n N / (ell m^2)``."""
    c = point.counts
    n = len(c) // 2
    if not window_in_range(n, w.k, w.ell, w.range_mode):
        raise RangeError(f"window (k={w.k}, ell={w.ell}) outside range for n={n}")
    total = 0
    for i in range(2 * n):
        for j in range(2 * n):
            if w.k <= (i - n) + (j - n) <= w.k + w.ell - 2:
                total += c[i] * c[j]
    return total


def window_numerators(counts: np.ndarray, range_mode: RangeMode | str = RangeMode.PROOF) -> np.ndarray:
    """Exact window numerators for every row of an integer composition array."""
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.shape[1] // 2
    m = int(counts[0].sum()) if counts.shape[0] else 0
    if m * m >= _INT_LIMIT:
        raise DomainError(f"m={m} too large for exact int64 numerators")
    size = counts.shape[1]
    s = np.zeros((counts.shape[0], 2 * size - 1), dtype=np.int64)
    for i in range(size):
        s[:, i:i + size] += counts[:, i:i + 1] * counts
    prefix = np.zeros((s.shape[0], s.shape[1] + 1), dtype=np.int64)
    np.cumsum(s, axis=1, out=prefix[:, 1:])
    lo, hi, _ = window_arrays(n, as_mode(range_mode))
    return prefix[:, hi] - prefix[:, lo]


def window_lcm(n: int, range_mode: RangeMode | str = RangeMode.PROOF) -> int:
    _, _, ell = window_arrays(n, as_mode(range_mode))
    return math.lcm(*(int(x) for x in ell))


def scaled_objective(counts: np.ndarray, range_mode: RangeMode | str = RangeMode.PROOF) -> np.ndarray:
    """Exact integers ``max_w N_w * (L / ell_w)`` with ``L`` the lcm of window lengths.

    The objective of each lattice point is ``4n * value / (L m^2)``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.shape[1] // 2
    mode = as_mode(range_mode)
    lcm = window_lcm(n, mode)
    m = int(counts[0].sum()) if counts.shape[0] else 0
    if m * m * lcm >= _INT_LIMIT:
        raise DomainError(f"m={m} too large for exact int64 scaled objective at n={n}")
    _, _, ell = window_arrays(n, mode)
    nums = window_numerators(counts, mode)
    return (nums * (lcm // ell)).max(axis=1)


# --- cells -----------------------------------------------------------------


def counts_to_partial(counts: np.ndarray) -> np.ndarray:
    """Compositions ``(P, 2n)`` to partial sums ``(P, d)``."""
    return np.cumsum(np.asarray(counts), axis=1)[:, :-1]


def partial_to_counts(y: np.ndarray, m: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    zeros = np.zeros((y.shape[0], 1), dtype=np.int64)
    full = np.hstack([zeros, y, np.full((y.shape[0], 1), m, dtype=np.int64)])
    return np.diff(full, axis=1)


def edge_directions(n: int) -> np.ndarray:
    """Count-space directions of every possible cell edge.

    Two vertices of a Freudenthal cell differ by a nonzero 0/1 vector in
    partial-sum coordinates; this returns all ``2**d - 1`` of them mapped
    back to count space (entries in ``{-1, 0, 1}``, zero sum).
    """
    d = 2 * n - 1
    z = np.array(list(itertools.product((0, 1), repeat=d))[1:], dtype=np.int64)
    zeros = np.zeros((z.shape[0], 1), dtype=np.int64)
    return np.diff(np.hstack([zeros, z, zeros]), axis=1)


def cell_count(mesh: MeshSpec) -> int:
    return mesh.m ** mesh.dim


def _weakly_increasing(length: int, lo: int, hi: int) -> np.ndarray:
    """All weakly increasing integer sequences of ``length`` in ``[lo, hi]``, lex order."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    if hi < lo:
        return np.zeros((0, length), dtype=np.int64)
    steps = composition_array(hi - lo, length + 1)[:, :-1]
    return lo + np.cumsum(steps, axis=1)


def slab_cells(mesh: MeshSpec, first: int) -> np.ndarray:
    """Vertices of all cells whose base has ``y_1 = first``.

    Returns partial-sum coordinates of shape ``(cells, d + 1, d)``. Cells are
    ordered by permutation (lex over ``itertools.permutations``) then by base
    (lex); vertex 0 is the base, the lowest-index lattice vertex.
    """
    d, m = mesh.dim, mesh.m
    if not 0 <= first < m:
        raise CursorError(f"slab index {first} outside [0, {m - 1}]")
    tail = _weakly_increasing(d - 1, first, m - 1)
    bases = np.hstack([np.full((tail.shape[0], 1), first, dtype=np.int64), tail])
    blocks = []
    for perm in itertools.permutations(range(d)):
        pos = np.empty(d, dtype=np.int64)
        pos[list(perm)] = np.arange(d)
        ok = np.ones(bases.shape[0], dtype=bool)
        for s in range(d - 1):
            if pos[s] < pos[s + 1]:
                # coordinate s moves first, so it must start strictly below s+1
                ok &= bases[:, s] < bases[:, s + 1]
        sel = bases[ok]
        if sel.shape[0] == 0:
            continue
        steps = np.zeros((d + 1, d), dtype=np.int64)
        for r, coord in enumerate(perm):
            steps[r + 1:, coord] += 1
        blocks.append(sel[:, None, :] + steps[None, :, :])
    if not blocks:
        return np.zeros((0, d + 1, d), dtype=np.int64)
    return np.concatenate(blocks, axis=0)


def locate_cell(mesh: MeshSpec, a) -> tuple[np.ndarray, np.ndarray]:
    """Cell containing the simplex point ``a`` and its barycentric weights.

    Returns ``(vertices, weights)``: vertex compositions of shape
    ``(d + 1, 2n)`` and weights with ``a = h * sum_v weights_v vertices_v``.
    """
    d, m = mesh.dim, mesh.m
    x = np.asarray(a, dtype=np.float64) * (m / (4 * mesh.n))
    y = np.cumsum(x)[:-1]
    base = np.clip(np.floor(y), 0, m - 1).astype(np.int64)
    frac = np.clip(y - base, 0.0, 1.0)
    # ties: the higher coordinate steps first so the cell stays in the order region
    order = np.lexsort((-np.arange(d), -frac))
    verts = np.repeat(base[None, :], d + 1, axis=0)
    for r, coord in enumerate(order):
        verts[r + 1:, coord] += 1
    f = frac[order]
    weights = np.empty(d + 1)
    weights[0] = 1.0 - f[0]
    weights[1:-1] = f[:-1] - f[1:]
    weights[-1] = f[-1]
    return partial_to_counts(verts, m), weights
