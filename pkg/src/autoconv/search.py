"""Seeded multistart descent for upper bounds on the min-max value.

Every restart draws a uniform point of ``A_n`` from its own random
substream, then runs a projected descent on the max of window quadratics.
Restarts run as one batched array computation; each row goes through the
same float operations whatever the batch size, so results do not depend on
how restarts are split across workers.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import (
    CoefficientProfile,
    RangeMode,
    as_mode,
    make_profile,
    objective,
    objective_batch,
    objective_bruteforce,
    project_rows,
    step_sup,
    window_arrays,
    window_values_batch,
)
from .errors import DomainError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SearchConfig:
    n: int
    range_mode: RangeMode = RangeMode.PROOF
    seed: int = 0
    restarts: int = 100
    max_iter: int = 10_000
    step0: float = 0.5
    decay: float = 0.5
    min_step: float = 1e-9
    symmetric: bool = False
    eps: float = 1e-6
    batch_size: int = 2048

    def __post_init__(self):
        object.__setattr__(self, "range_mode", as_mode(self.range_mode))
        if self.n < 1:
            raise DomainError("n must be positive")
        if self.restarts < 1:
            raise DomainError("restarts must be at least 1")
        if not (self.step0 > 0 and 0 < self.decay < 1 and self.min_step > 0):
            raise DomainError("step schedule must be positive and non-increasing")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass
class RestartSummary:
    index: int
    start_value: float
    final_value: float
    iterations: int


@dataclass
class SearchResult:
    n: int
    range_mode: RangeMode
    seed: int
    restarts: int
    best_value: float
    best_profile: CoefficientProfile
    step_sup: float
    best_restart: int
    per_restart: list[RestartSummary] = field(default_factory=list)

    @property
    def asymmetric(self) -> bool:
        """Best profile differs from its mirror image (beyond float noise)."""
        a = self.best_profile.array()
        return bool(np.abs(a - a[::-1]).max() > 1e-6)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "range_mode": self.range_mode.value,
            "seed": self.seed,
            "restarts": self.restarts,
            "best_value": self.best_value,
            "best_profile": list(self.best_profile.coeffs),
            "step_sup": self.step_sup,
            "best_restart": self.best_restart,
            "asymmetric": self.asymmetric,
            "per_restart_best": [r.final_value for r in self.per_restart],
            "per_restart": [asdict(r) for r in self.per_restart],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        n = int(d["n"])
        profile = CoefficientProfile(n, tuple(float(x) for x in d["best_profile"]), normalized=True)
        return cls(
            n=n,
            range_mode=RangeMode(d["range_mode"]),
            seed=int(d["seed"]),
            restarts=int(d["restarts"]),
            best_value=float(d["best_value"]),
            best_profile=profile,
            step_sup=float(d["step_sup"]),
            best_restart=int(d["best_restart"]),
            per_restart=[RestartSummary(**r) for r in d["per_restart"]],
        )


def restart_streams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent generators, one per restart, spawned from ``seed``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def random_profile(n: int, rng: np.random.Generator) -> CoefficientProfile:
    """Uniform point of ``A_n``: normalized standard exponentials."""
    e = rng.standard_exponential(2 * n)
    return CoefficientProfile(n, tuple(float(x) for x in e * (4 * n / e.sum())), normalized=True)


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a[:, ::-1])


def descent_direction(a: np.ndarray, values: np.ndarray, best: np.ndarray, eps: float,
                      range_mode: RangeMode) -> np.ndarray:
    """Average gradient of the windows within ``eps`` (relative) of the max.

    ``dQ_w/da_q = 2/(4 n ell) * sum_{j: q+j in band_w} a_j``. The window
    weights are scattered onto anti-diagonals by a difference array, then
    correlated with ``a``.
    """
    rows, size = a.shape
    n = size // 2
    lo, hi, ell = window_arrays(n, range_mode)
    active = values >= (best - eps * np.abs(best))[:, None]
    weight = active / active.sum(axis=1, keepdims=True)
    coef = weight * (2.0 / (4 * n * ell))
    diff = np.zeros((rows, 4 * n))
    for w in range(len(lo)):
        col = coef[:, w]
        if not col.any():
            continue
        diff[:, lo[w]] += col
        diff[:, hi[w]] -= col
    omega = np.cumsum(diff, axis=1)[:, :-1]
    grad = np.zeros_like(a)
    for j in range(size):
        grad += omega[:, j:j + size] * a[:, j:j + 1]
    return grad


def descend_batch(a: np.ndarray, cfg: SearchConfig, symmetric: bool | None = None):
    """Monotone projected descent on each row; returns ``(a, values, iterations)``."""
    symmetric = cfg.symmetric if symmetric is None else symmetric
    mode = cfg.range_mode
    total = 4 * cfg.n
    a = np.array(a, dtype=np.float64)
    if symmetric:
        a = project_rows(_symmetrize(a), total)
    rows = a.shape[0]
    values = window_values_batch(a, mode)
    best = values.max(axis=1)
    step = np.full(rows, cfg.step0)
    iters = np.zeros(rows, dtype=np.int64)
    live = np.ones(rows, dtype=bool)
    for _ in range(cfg.max_iter):
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        g = descent_direction(a[idx], values[idx], best[idx], cfg.eps, mode)
        if symmetric:
            g = _symmetrize(g)
        cand = project_rows(a[idx] - step[idx, None] * g, total)
        if symmetric:
            cand = _symmetrize(cand)
        cand_values = window_values_batch(cand, mode)
        cand_best = cand_values.max(axis=1)
        iters[idx] += 1
        ok = cand_best < best[idx]
        acc = idx[ok]
        a[acc] = cand[ok]
        values[acc] = cand_values[ok]
        best[acc] = cand_best[ok]
        rej = idx[~ok]
        step[rej] *= cfg.decay
        live[rej[step[rej] < cfg.min_step]] = False
    return a, best, iters


def local_descent(p: CoefficientProfile, cfg: SearchConfig) -> CoefficientProfile:
    """Descend from ``p``; the returned objective never exceeds the input's."""
    if not p.normalized:
        raise DomainError("local_descent needs a normalized profile")
    a, _, _ = descend_batch(p.array()[None, :], cfg)
    out = make_profile(p.n, a[0], normalize=True)
    if objective(out, cfg.range_mode).value > objective(p, cfg.range_mode).value:
        return p
    return out


def symmetrize(p: CoefficientProfile) -> CoefficientProfile:
    arr = p.array()
    return make_profile(p.n, 0.5 * (arr + arr[::-1]), normalize=True)


def polish_symmetric(p: CoefficientProfile, cfg: SearchConfig) -> CoefficientProfile:
    """Symmetrize, then descend inside the reflection-symmetric subspace."""
    start = symmetrize(p)
    a, _, _ = descend_batch(start.array()[None, :], cfg, symmetric=True)
    a = a[0]
    a = 0.5 * (a + a[::-1])
    out = make_profile(p.n, a, normalize=True)
    out = CoefficientProfile(p.n, tuple(0.5 * (x + y) for x, y in zip(out.coeffs, reversed(out.coeffs))), True)
    if objective(out, cfg.range_mode).value > objective(start, cfg.range_mode).value:
        return start
    return out


def _run_batch(cfg: SearchConfig, starts: np.ndarray):
    start_vals = objective_batch(starts, cfg.range_mode)
    a, vals, iters = descend_batch(starts, cfg)
    return start_vals, a, vals, iters


def multistart(cfg: SearchConfig, threads: int = 1) -> SearchResult:
    """Best of ``cfg.restarts`` seeded descents; ties go to the lower restart index."""
    streams = restart_streams(cfg.seed, cfg.restarts)
    starts = np.array([random_profile(cfg.n, g).array() for g in streams])
    if cfg.symmetric:
        starts = project_rows(_symmetrize(starts), 4 * cfg.n)
    bounds = list(range(0, cfg.restarts, cfg.batch_size)) + [cfg.restarts]
    batches = [starts[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda b: _run_batch(cfg, b), batches))
    start_vals = np.concatenate([p[0] for p in parts])
    final = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    iters = np.concatenate([p[3] for p in parts])
    best_idx = int(np.argmin(vals))
    profile = make_profile(cfg.n, final[best_idx], normalize=True)
    value = float(objective(profile, cfg.range_mode).value)
    check = objective_bruteforce(profile, cfg.range_mode)
    if abs(check - value) > 1e-12 * max(1.0, abs(value)):
        raise AssertionError(f"objective mismatch on best profile: {value} vs {check}")
    summaries = [
        RestartSummary(i, float(start_vals[i]), float(vals[i]), int(iters[i])) for i in range(cfg.restarts)
    ]
    return SearchResult(
        n=cfg.n,
        range_mode=cfg.range_mode,
        seed=cfg.seed,
        restarts=cfg.restarts,
        best_value=value,
        best_profile=profile,
        step_sup=float(step_sup(profile)),
        best_restart=best_idx,
        per_restart=summaries,
    )
