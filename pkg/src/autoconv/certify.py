"""Certified lower bounds for the min-max value over the simplex.

Two methods share the same chunked, checkpointable driver:

``global-lipschitz``
    Exact minimum over the lattice minus ``L * r`` with ``L = 1`` the
    l1-Lipschitz constant of the objective and ``r = 2n h`` the covering
    radius.

``cell-quadratic``
    Every Freudenthal cell of the mesh is bounded on its own. For a
    quadratic ``Q`` and a point ``x = sum_v lam_v v`` of a cell,

        Q(x) = sum_v lam_v Q(v) - 1/2 sum_{v<u} lam_v lam_u (v-u)^T H (v-u)

    and ``sum_{v<u} lam_v lam_u <= d / (2(d+1))``. Bounding the curvature
    term over every possible edge direction gives a per-window dip ``D_w``,
    so ``F(x) >= sum_w mu_w Q_w(x) >= min_v sum_w mu_w (Q_w(v) - D_w)`` for
    any weights ``mu`` on the simplex of windows. Single windows give a cheap
    bound for all cells; cells that could set the minimum get optimal weights
    from a small linear program. The final bound is evaluated exactly.

All values are integers in the unit ``4n / (2 (d+1) L m^2)`` with ``L`` the
lcm of window lengths, so certificates involve no rounding at all.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from . import __version__
from .core import RangeMode, as_mode, window_arrays
from .errors import CheckpointError, DomainError
from .lattice import (
    ChunkCursor,
    MeshSpec,
    composition_array,
    composition_count,
    counts_to_partial,
    covering_radius_l1,
    edge_directions,
    partial_to_counts,
    slab_cells,
    window_lcm,
    window_numerators,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
GLOBAL = "global-lipschitz"
CELLS = "cell-quadratic"
METHODS = (GLOBAL, CELLS)


def lipschitz_constant(n: int) -> Fraction:
    """l1-Lipschitz constant of the objective on ``A_n``.

    ``dQ/da_q = 2/(4 n ell) * (mass of ell-1 consecutive coefficients)``,
    which lies in ``[0, 2/ell]`` on ``A_n``; ``ell >= 2`` gives 1.
    """
    if n < 1:
        raise DomainError("n must be positive")
    return Fraction(1)


def float_down(q: Fraction) -> float:
    x = float(q)
    return x if Fraction(x) <= q else float(np.nextafter(x, -np.inf))


def float_up(q: Fraction) -> float:
    x = float(q)
    return x if Fraction(x) >= q else float(np.nextafter(x, np.inf))


def _frac_dict(q: Fraction) -> dict:
    return {"num": q.numerator, "den": q.denominator}


def _frac_load(d) -> Fraction:
    return Fraction(int(d["num"]), int(d["den"]))


@dataclass
class Certificate:
    n: int
    m: int
    range_mode: RangeMode
    method: str
    lattice_min: Fraction
    certified_exact: Fraction
    argmin_counts: tuple
    points_evaluated: int
    elapsed_s: float | None = None
    cells_evaluated: int | None = None
    weakest_cell: list | None = None

    @property
    def certified_bound(self) -> float:
        """Largest float not above the exact certified value."""
        return float_down(self.certified_exact)

    @property
    def error_term(self) -> float:
        """Smallest float not below ``lattice_min - certified``."""
        return float_up(self.lattice_min - self.certified_exact)

    def to_dict(self, timing: bool = False) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "m": self.m,
            "range_mode": self.range_mode.value,
            "method": self.method,
            "lattice_min": _frac_dict(self.lattice_min),
            "error_term": self.error_term,
            "certified_bound": self.certified_bound,
            "certified_bound_exact": _frac_dict(self.certified_exact),
            "argmin_counts": list(self.argmin_counts),
            "points_evaluated": self.points_evaluated,
            "cells_evaluated": self.cells_evaluated,
            "weakest_cell": self.weakest_cell,
            "elapsed_s": self.elapsed_s if timing else None,
        }

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise CheckpointError(f"unsupported certificate schema {d.get('schema_version')!r}")
        return cls(
            n=int(d["n"]),
            m=int(d["m"]),
            range_mode=RangeMode(d["range_mode"]),
            method=d["method"],
            lattice_min=_frac_load(d["lattice_min"]),
            certified_exact=_frac_load(d["certified_bound_exact"]),
            argmin_counts=tuple(d["argmin_counts"]),
            points_evaluated=int(d["points_evaluated"]),
            elapsed_s=d.get("elapsed_s"),
            cells_evaluated=d.get("cells_evaluated"),
            weakest_cell=d.get("weakest_cell"),
        )


@dataclass
class Checkpoint:
    """Progress of a certification run: everything before ``frontier`` is done."""

    n: int
    m: int
    range_mode: RangeMode
    method: str
    frontier: ChunkCursor | None
    lattice_best: int | None = None
    argmin_counts: tuple | None = None
    points_evaluated: int = 0
    cell_best: Fraction | None = None
    cell_best_key: tuple | None = None
    weakest_cell: list | None = None
    cells_evaluated: int = 0
    elapsed_s: float = 0.0
    certificate: Certificate | None = None
    version: str = __version__

    @property
    def mesh(self) -> MeshSpec:
        return MeshSpec(self.n, self.m)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "checkpoint",
            "artifact_version": self.version,
            "n": self.n,
            "m": self.m,
            "range_mode": self.range_mode.value,
            "method": self.method,
            "frontier": None if self.frontier is None else self.frontier.encode(),
            "lattice_best": self.lattice_best,
            "argmin_counts": None if self.argmin_counts is None else list(self.argmin_counts),
            "points_evaluated": self.points_evaluated,
            "cell_best": None if self.cell_best is None else _frac_dict(self.cell_best),
            "cell_best_key": None if self.cell_best_key is None else list(self.cell_best_key),
            "weakest_cell": self.weakest_cell,
            "cells_evaluated": self.cells_evaluated,
            "elapsed_s": self.elapsed_s,
            "certificate": None if self.certificate is None else self.certificate.to_dict(timing=True),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        try:
            if d.get("kind") != "checkpoint" or d.get("schema_version") != SCHEMA_VERSION:
                raise CheckpointError("not a checkpoint of a supported schema")
            if d.get("artifact_version") != __version__:
                raise CheckpointError(
                    f"checkpoint written by version {d.get('artifact_version')}, this is {__version__}")
            cp = cls(
                n=int(d["n"]),
                m=int(d["m"]),
                range_mode=RangeMode(d["range_mode"]),
                method=d["method"],
                frontier=None if d["frontier"] is None else ChunkCursor.decode(d["frontier"]),
                lattice_best=d["lattice_best"],
                argmin_counts=None if d["argmin_counts"] is None else tuple(d["argmin_counts"]),
                points_evaluated=int(d["points_evaluated"]),
                cell_best=None if d["cell_best"] is None else _frac_load(d["cell_best"]),
                cell_best_key=None if d["cell_best_key"] is None else tuple(d["cell_best_key"]),
                weakest_cell=d["weakest_cell"],
                cells_evaluated=int(d["cells_evaluated"]),
                elapsed_s=float(d["elapsed_s"]),
                certificate=None if d["certificate"] is None else Certificate.from_dict(d["certificate"]),
                version=d["artifact_version"],
            )
        except CheckpointError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
        if cp.method not in METHODS:
            raise CheckpointError(f"unknown method {cp.method!r}")
        if cp.frontier is not None:
            _check_frontier(cp)
        return cp

    def save(self, path: str | os.PathLike) -> None:
        """Atomic write: temp file in the same directory, then rename."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Checkpoint":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_dict(data)


class Interrupted(Exception):
    """Raised when a run stops before completion; carries the resumable checkpoint."""

    def __init__(self, checkpoint: Checkpoint):
        super().__init__(f"run interrupted at chunk {checkpoint.frontier.encode() if checkpoint.frontier else 'end'}")
        self.checkpoint = checkpoint


def _chunk_total(mesh: MeshSpec, method: str) -> int:
    # global: first count 0..m; cells: base y_1 in 0..m-1
    return mesh.m + 1 if method == GLOBAL else mesh.m


def _check_frontier(cp: Checkpoint) -> None:
    fr = cp.frontier
    try:
        fr.validate(cp.mesh)
    except Exception as exc:
        raise CheckpointError(str(exc)) from exc
    if len(fr.prefix) != 1 or not 0 <= fr.prefix[0] < _chunk_total(cp.mesh, cp.method):
        raise CheckpointError(f"frontier {fr.encode()!r} is not a chunk of this run")


# --- exact tables --------------------------------------------------------------


@dataclass(frozen=True)
class _Tables:
    n: int
    m: int
    mode: RangeMode
    lcm: int
    ell: np.ndarray
    value_scale: np.ndarray  # N_w -> units: 2 (d+1) L / ell_w
    lattice_scale: np.ndarray  # N_w -> L / ell_w
    dip: np.ndarray  # per-window dip in units
    unit: Fraction  # real value of one unit


def window_dips(n: int, range_mode: RangeMode | str = RangeMode.PROOF) -> np.ndarray:
    """Largest ``delta^T B_w delta`` over all cell edge directions (clipped at 0).

    ``B_w`` is the 0/1 band matrix of window ``w``; the quadratic form is the
    window numerator of the edge direction.
    """
    edges = edge_directions(n)
    forms = window_numerators(edges, range_mode)
    return np.maximum(forms.max(axis=0), 0)


def _tables(mesh: MeshSpec, mode: RangeMode) -> _Tables:
    n, m, d = mesh.n, mesh.m, mesh.dim
    _, _, ell = window_arrays(n, mode)
    lcm = window_lcm(n, mode)
    if 2 * (d + 1) * lcm * m * m >= 2**62:
        raise DomainError(f"mesh m={m} too fine for exact int64 arithmetic at n={n}")
    per = lcm // ell
    kappa = window_dips(n, mode)
    return _Tables(
        n=n, m=m, mode=mode, lcm=lcm, ell=ell,
        value_scale=2 * (d + 1) * per,
        lattice_scale=per,
        dip=kappa * d * per,
        unit=Fraction(4 * n, 2 * (d + 1) * lcm * m * m),
    )


# --- chunk workers -----------------------------------------------------------


def _prefixed(first: int, mesh: MeshSpec) -> np.ndarray:
    rest = composition_array(mesh.m - first, mesh.parts - 1)
    return np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest])


def _lattice_part(counts: np.ndarray, nums: np.ndarray, tab: _Tables):
    scaled = (nums * tab.lattice_scale).max(axis=1)
    i = int(np.argmin(scaled))
    return int(scaled[i]), tuple(int(c) for c in counts[i]), counts.shape[0]


def _global_chunk(mesh: MeshSpec, tab: _Tables, first: int, shared) -> dict:
    counts = _prefixed(first, mesh)
    best, arg, count = _lattice_part(counts, window_numerators(counts, tab.mode), tab)
    return {"lattice": (best, arg, count)}


def _game_bound(a: np.ndarray) -> Fraction:
    """Lower bound on ``min_lam max_w (lam^T a)_w`` from LP-optimal window weights.

    The weights come from a float LP; the bound is then evaluated exactly, so
    LP inaccuracy can only cost tightness.
    """
    rows, cols = a.shape
    scale = float(np.abs(a).max()) or 1.0
    af = a / scale
    res = linprog(
        c=np.r_[np.zeros(cols), -1.0],
        A_ub=np.hstack([-af, np.ones((rows, 1))]),
        b_ub=np.zeros(rows),
        A_eq=np.r_[np.ones(cols), 0.0][None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * cols + [(None, None)],
        method="highs",
    )
    if res.status != 0:
        return Fraction(int(a.min(axis=0).max()))
    mu = np.clip(res.x[:cols], 0.0, None)
    support = np.flatnonzero(mu > 0)
    weights = [Fraction(float(mu[w])) for w in support]
    total = sum(weights)
    vals = []
    for v in range(rows):
        vals.append(sum((wt * int(a[v, w]) for wt, w in zip(weights, support)), Fraction(0)) / total)
    return min(vals)


def cell_lower_bound(mesh: MeshSpec, range_mode: RangeMode | str, vertices) -> Fraction:
    """Exact lower bound on the objective over one cell, given its vertex compositions."""
    tab = _tables(mesh, as_mode(range_mode))
    vals = window_numerators(np.asarray(vertices, dtype=np.int64), tab.mode) * tab.value_scale
    a = vals - tab.dip[None, :]
    cheap = Fraction(int(a.min(axis=0).max()))
    return max(cheap, _game_bound(a)) * tab.unit


def _cells_chunk(mesh: MeshSpec, tab: _Tables, first: int, shared) -> dict:
    n, m, d = mesh.n, mesh.m, mesh.dim
    side = m + 1
    plane = side ** (d - 1)
    counts = np.vstack([_prefixed(first, mesh), _prefixed(first + 1, mesh)])
    nums = window_numerators(counts, tab.mode)
    own = counts[:, 0] == first
    if first == m - 1:
        own |= counts[:, 0] == m
    lattice = _lattice_part(counts[own], nums[own], tab)

    vals = nums * tab.value_scale
    y = counts_to_partial(counts)
    stride = side ** np.arange(d - 2, -1, -1, dtype=np.int64)
    key = (y[:, 0] - first) * plane + y[:, 1:] @ stride
    row_of = np.full(2 * plane, -1, dtype=np.int64)
    row_of[key] = np.arange(counts.shape[0])

    cells = slab_cells(mesh, first)
    ckey = (cells[:, :, 0] - first) * plane + cells[:, :, 1:] @ stride
    rows = row_of[ckey]
    cheap = np.full(rows.shape[0], np.iinfo(np.int64).min, dtype=np.int64)
    vals_t = np.ascontiguousarray(vals.T)
    for w in range(vals_t.shape[0]):
        np.maximum(cheap, vals_t[w][rows].min(axis=1) - tab.dip[w], out=cheap)

    best = None
    best_idx = None
    refined = 0
    for ci in np.argsort(cheap, kind="stable"):
        with shared["lock"]:
            bar = shared["bound"]
        if bar is not None and cheap[ci] > bar:
            break
        refined += 1
        v = max(Fraction(int(cheap[ci])), _game_bound(vals[rows[ci]] - tab.dip[None, :]))
        if best is None or v < best or (v == best and ci < best_idx):
            best, best_idx = v, int(ci)
        with shared["lock"]:
            if shared["bound"] is None or v < shared["bound"]:
                shared["bound"] = v
    if best is None:
        ci = int(np.argmin(cheap))
        best, best_idx = Fraction(int(cheap[ci])), ci
    weakest = partial_to_counts(cells[best_idx], m).tolist()
    log.debug("slab %d: %d cells, %d refined", first, rows.shape[0], refined)
    return {
        "lattice": lattice,
        "cells": (best, (first, best_idx), weakest, rows.shape[0]),
    }


# --- driver ----------------------------------------------------------------


def _merge(cp: Checkpoint, res: dict) -> None:
    best, arg, count = res["lattice"]
    if cp.lattice_best is None or best < cp.lattice_best:
        cp.lattice_best, cp.argmin_counts = best, arg
    cp.points_evaluated += count
    if "cells" in res:
        val, key, weakest, ncells = res["cells"]
        if cp.cell_best is None or (val, key) < (cp.cell_best, cp.cell_best_key):
            cp.cell_best, cp.cell_best_key, cp.weakest_cell = val, key, weakest
        cp.cells_evaluated += ncells


def _finish(cp: Checkpoint, tab: _Tables) -> Certificate:
    mesh = cp.mesh
    lattice_min = Fraction(4 * mesh.n * cp.lattice_best, tab.lcm * mesh.m ** 2)
    lipschitz = lattice_min - lipschitz_constant(mesh.n) * covering_radius_l1(mesh)
    if cp.method == GLOBAL:
        certified = lipschitz
    else:
        # both bounds are sound; the cell bound alone can trail on very coarse meshes
        certified = max(cp.cell_best * tab.unit, lipschitz)
    if cp.points_evaluated != composition_count(mesh.m, mesh.parts):
        raise AssertionError("lattice enumeration incomplete")
    return Certificate(
        n=mesh.n,
        m=mesh.m,
        range_mode=cp.range_mode,
        method=cp.method,
        lattice_min=lattice_min,
        certified_exact=certified,
        argmin_counts=cp.argmin_counts,
        points_evaluated=cp.points_evaluated,
        elapsed_s=round(cp.elapsed_s, 6),
        cells_evaluated=cp.cells_evaluated if cp.method == CELLS else None,
        weakest_cell=cp.weakest_cell if cp.method == CELLS else None,
    )


def _drive(cp: Checkpoint, threads: int = 1, checkpoint_path=None, max_chunks: int | None = None) -> Certificate:
    if cp.certificate is not None:
        return cp.certificate
    mesh = cp.mesh
    tab = _tables(mesh, cp.range_mode)
    worker = _global_chunk if cp.method == GLOBAL else _cells_chunk
    total = _chunk_total(mesh, cp.method)
    shared = {"lock": threading.Lock(), "bound": cp.cell_best}
    start = cp.frontier.prefix[0] if cp.frontier is not None else total
    threads = max(1, int(threads))
    done = 0
    with ThreadPoolExecutor(max_workers=threads) as pool:
        t = start
        while t < total:
            if max_chunks is not None and done >= max_chunks:
                cp.frontier = ChunkCursor((t,))
                if checkpoint_path is not None:
                    cp.save(checkpoint_path)
                raise Interrupted(cp)
            batch = list(range(t, min(total, t + threads)))
            if max_chunks is not None:
                batch = batch[: max_chunks - done]
            t0 = time.perf_counter()
            results = list(pool.map(lambda f: worker(mesh, tab, f, shared), batch))
            for res in results:
                _merge(cp, res)
            cp.elapsed_s += time.perf_counter() - t0
            done += len(batch)
            t = batch[-1] + 1
            cp.frontier = ChunkCursor((t,)) if t < total else None
            if checkpoint_path is not None and cp.frontier is not None:
                cp.save(checkpoint_path)
    cert = _finish(cp, tab)
    cp.certificate = cert
    if checkpoint_path is not None:
        cp.save(checkpoint_path)
    return cert


def _new(mesh: MeshSpec, range_mode, method: str) -> Checkpoint:
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}")
    return Checkpoint(mesh.n, mesh.m, as_mode(range_mode), method, frontier=ChunkCursor((0,)))


def certify_global(mesh: MeshSpec, range_mode: RangeMode | str = RangeMode.PROOF, *, threads: int = 1,
                   checkpoint_path=None, max_chunks: int | None = None) -> Certificate:
    """Lattice minimum minus ``L * 2n h``. Raises ``Interrupted`` if stopped early."""
    return _drive(_new(mesh, range_mode, GLOBAL), threads, checkpoint_path, max_chunks)


def certify_cells(mesh: MeshSpec, range_mode: RangeMode | str = RangeMode.PROOF, *, threads: int = 1,
                  checkpoint_path=None, max_chunks: int | None = None) -> Certificate:
    """Per-cell second-order bound, minimized over all cells of the mesh."""
    return _drive(_new(mesh, range_mode, CELLS), threads, checkpoint_path, max_chunks)


def certify(mesh: MeshSpec, range_mode: RangeMode | str = RangeMode.PROOF, method: str = CELLS, **kwargs) -> Certificate:
    return _drive(_new(mesh, range_mode, method), **kwargs)


def resume(checkpoint: Checkpoint | str | os.PathLike, *, threads: int = 1, checkpoint_path=None,
           max_chunks: int | None = None, expect: tuple | None = None) -> Certificate:
    """Finish an interrupted run; a completed checkpoint returns its stored certificate.

    ``expect`` is an optional ``(mesh, range_mode, method)`` the checkpoint
    must match.
    """
    if not isinstance(checkpoint, Checkpoint):
        if checkpoint_path is None:
            checkpoint_path = checkpoint
        checkpoint = Checkpoint.load(checkpoint)
    if expect is not None:
        mesh, mode, method = expect
        if (checkpoint.n, checkpoint.m, checkpoint.range_mode, checkpoint.method) != (
                mesh.n, mesh.m, as_mode(mode), method):
            raise CheckpointError("checkpoint belongs to a different mesh, range or method")
    if checkpoint.certificate is None and checkpoint.frontier is None:
        raise CheckpointError("checkpoint has neither a frontier nor a certificate")
    return _drive(checkpoint, threads, checkpoint_path, max_chunks)
