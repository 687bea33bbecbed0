"""Window objective over the coefficient simplex and its derived quantities.

A profile is a vector ``a = (a_{-n}, ..., a_{n-1})`` of nonnegative
densities, one per subinterval ``I_j = (j/4n, (j+1)/4n)`` of ``(-1/4, 1/4)``.
The window ``(k, ell)`` averages the autoconvolution of the induced step
function over ``(k/4n, (k+ell)/4n)`` through the band of coefficient products

    Q_{k,ell}(a) = 1/(4 n ell) * sum_{k <= i+j <= k+ell-2} a_i a_j

and the objective is the largest window value. Arrays are stored 0-based:
coefficient ``a_i`` lives at position ``i + n`` and the anti-diagonal sum
``s_m`` at position ``m + 2n``.

Float profiles are evaluated with numpy; profiles holding ``Fraction`` or
``int`` entries are evaluated exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Sequence

import numpy as np

from .errors import DegenerateError, DomainError, RangeError, ShapeError

MASS_RTOL = 1e-9
TIE_RTOL = 1e-12


class RangeMode(str, enum.Enum):
    """Admissible window ranges.

    ``THEOREM``: ``2 <= ell <= 2n`` and ``-n <= k <= n - ell``.
    ``PROOF``: ``2 <= ell <= 4n`` and ``-2n <= k <= 2n - ell`` (a superset,
    and the only range for which the all-pairs window is present).
    """

    THEOREM = "theorem"
    PROOF = "proof"


def as_mode(mode: RangeMode | str) -> RangeMode:
    return mode if isinstance(mode, RangeMode) else RangeMode(str(mode))


@dataclass(frozen=True)
class CoefficientProfile:
    """A nonnegative coefficient vector indexed ``-n .. n-1``.

    ``normalized`` records that the coefficients sum to ``4n`` (exactly for
    rational entries, to ``MASS_RTOL`` for floats). Unnormalized profiles are
    legal inputs to the evaluators.
    """

    n: int
    coeffs: tuple
    normalized: bool = False

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if len(self.coeffs) != 2 * self.n:
            raise ShapeError(f"expected {2 * self.n} coefficients, got {len(self.coeffs)}")
        for x in self.coeffs:
            if not x >= 0:
                raise DomainError(f"coefficients must be nonnegative, got {x!r}")
        if self.normalized and not _mass_ok(self.coeffs, 4 * self.n):
            raise DomainError(f"coefficients do not sum to 4n = {4 * self.n}")

    @property
    def exact(self) -> bool:
        return all(isinstance(x, Rational) for x in self.coeffs)

    def __getitem__(self, i: int):
        """Coefficient ``a_i`` for ``-n <= i <= n-1``."""
        if not -self.n <= i < self.n:
            raise IndexError(i)
        return self.coeffs[i + self.n]

    def array(self) -> np.ndarray:
        return np.array([float(x) for x in self.coeffs], dtype=np.float64)

    def to_fractions(self) -> "CoefficientProfile":
        return CoefficientProfile(self.n, tuple(Fraction(x) for x in self.coeffs), self.normalized)

    def to_floats(self) -> "CoefficientProfile":
        return CoefficientProfile(self.n, tuple(float(x) for x in self.coeffs), self.normalized)


def _mass_ok(coeffs, target) -> bool:
    total = sum(coeffs)
    if all(isinstance(x, Rational) for x in coeffs):
        return total == target
    return abs(float(total) - target) <= MASS_RTOL * target


def make_profile(n: int, raw: Sequence, normalize: bool = False, exact: bool = False) -> CoefficientProfile:
    """Build a normalized profile from ``2n`` nonnegative numbers.

    With ``normalize`` the entries are rescaled to sum to ``4n``; otherwise
    they must already do so. ``exact`` converts entries to ``Fraction`` first
    (floats convert without rounding), so normalization is exact.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    raw = list(raw)
    if len(raw) != 2 * n:
        raise ShapeError(f"expected {2 * n} coefficients, got {len(raw)}")
    if exact:
        vals = [Fraction(x) for x in raw]
    elif all(isinstance(x, Rational) for x in raw):
        vals = list(raw)
    else:
        vals = [float(x) for x in raw]
    for x in vals:
        if not x >= 0:
            raise DomainError(f"coefficients must be nonnegative, got {x!r}")
    if normalize:
        total = sum(vals)
        if total == 0:
            raise DegenerateError("cannot normalize a vector with zero total mass")
        if all(isinstance(x, Rational) for x in vals):
            scale = Fraction(4 * n) / total
            vals = [Fraction(x) * scale for x in vals]
        else:
            arr = np.asarray(vals, dtype=np.float64)
            vals = [float(x) for x in arr * (4 * n / arr.sum())]
    return CoefficientProfile(n, tuple(vals), normalized=True)


@dataclass(frozen=True)
class WindowIndex:
    """The band ``k <= i+j <= k+ell-2``, i.e. the interval ``(k/4n, (k+ell)/4n)``."""

    k: int
    ell: int
    range_mode: RangeMode = RangeMode.PROOF

    def reflected(self) -> "WindowIndex":
        return WindowIndex(-self.k - self.ell, self.ell, self.range_mode)


def window_in_range(n: int, k: int, ell: int, mode: RangeMode | str) -> bool:
    if as_mode(mode) is RangeMode.THEOREM:
        return 2 <= ell <= 2 * n and -n <= k <= n - ell
    return 2 <= ell <= 4 * n and -2 * n <= k <= 2 * n - ell


def window_set(n: int, range_mode: RangeMode | str = RangeMode.PROOF) -> list[WindowIndex]:
    """All windows of the given range, ordered by ``ell`` then ``k``."""
    mode = as_mode(range_mode)
    if n < 1:
        raise DomainError("n must be positive")
    if mode is RangeMode.THEOREM:
        return [WindowIndex(k, ell, mode) for ell in range(2, 2 * n + 1) for k in range(-n, n - ell + 1)]
    return [WindowIndex(k, ell, mode) for ell in range(2, 4 * n + 1) for k in range(-2 * n, 2 * n - ell + 1)]


@lru_cache(maxsize=None)
def window_arrays(n: int, range_mode: RangeMode | str = RangeMode.PROOF):
    """Window table as arrays ``(lo, hi, ell)``.

    The band sum of window ``w`` is ``P[hi[w]] - P[lo[w]]`` where ``P`` is
    the zero-prefixed cumulative sum of ``s`` in 0-based storage.
    """
    ws = window_set(n, range_mode)
    lo = np.array([w.k + 2 * n for w in ws], dtype=np.intp)
    ell = np.array([w.ell for w in ws], dtype=np.intp)
    hi = lo + ell - 1
    for arr in (lo, ell, hi):
        arr.setflags(write=False)
    return lo, hi, ell


@dataclass(frozen=True)
class AutoconvolutionSequence:
    """Anti-diagonal sums ``s_m = sum_{i+j=m} a_i a_j`` for ``m = -2n .. 2n-2``."""

    n: int
    s: tuple

    def __getitem__(self, m: int):
        if not -2 * self.n <= m <= 2 * self.n - 2:
            raise IndexError(m)
        return self.s[m + 2 * self.n]

    @property
    def total(self):
        return sum(self.s)


def autoconvolve(p: CoefficientProfile) -> AutoconvolutionSequence:
    if p.exact:
        a = p.coeffs
        size = 2 * p.n
        s = [0] * (4 * p.n - 1)
        for i in range(size):
            for j in range(size):
                s[i + j] += a[i] * a[j]
        return AutoconvolutionSequence(p.n, tuple(s))
    return AutoconvolutionSequence(p.n, tuple(float(x) for x in autoconvolve_batch(p.array()[None, :])[0]))


def autoconvolve_batch(a: np.ndarray) -> np.ndarray:
    """Row-wise self-convolution of an ``(R, 2n)`` array.

    Accumulates shifted outer-product columns so every row sees the same
    sequence of float operations regardless of ``R``.
    """
    a = np.asarray(a)
    rows, size = a.shape
    out = np.zeros((rows, 2 * size - 1), dtype=a.dtype)
    for i in range(size):
        out[:, i:i + size] += a[:, i:i + 1] * a
    return out


def window_value(s: AutoconvolutionSequence, w: WindowIndex):
    """``(1/(4 n ell)) * sum_{m=k}^{k+ell-2} s_m`` via prefix sums."""
    n = s.n
    if not window_in_range(n, w.k, w.ell, w.range_mode):
        raise RangeError(f"window (k={w.k}, ell={w.ell}) outside {as_mode(w.range_mode).value} range for n={n}")
    prefix = [0]
    for x in s.s:
        prefix.append(prefix[-1] + x)
    lo = w.k + 2 * n
    hi = lo + w.ell - 1
    band = prefix[hi] - prefix[lo]
    if all(isinstance(x, Rational) for x in s.s):
        return Fraction(band, 4 * n * w.ell)
    return band / (4 * n * w.ell)


def window_values_batch(a: np.ndarray, range_mode: RangeMode | str = RangeMode.PROOF) -> np.ndarray:
    """All window values for each row of an ``(R, 2n)`` float array; shape ``(R, W)``."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[1] // 2
    lo, hi, ell = window_arrays(n, as_mode(range_mode))
    s = autoconvolve_batch(a)
    # Band sums are grown one anti-diagonal at a time instead of taken as
    # prefix-sum differences: only nonnegative terms get added, so a tiny
    # band next to a heavy one keeps full relative accuracy.
    out = np.empty((s.shape[0], len(lo)))
    cur = s.copy()
    for length, idx in _bands_by_length(n, as_mode(range_mode)):
        while cur.shape[1] > s.shape[1] - length + 1:
            shift = s.shape[1] - cur.shape[1] + 1
            cur = cur[:, :-1] + s[:, shift:]
        out[:, idx] = cur[:, lo[idx]]
    return out / (4 * n * ell)


@lru_cache(maxsize=None)
def _bands_by_length(n: int, mode: RangeMode):
    """Window indices grouped by band length ``ell - 1``, shortest first."""
    _, _, ell = window_arrays(n, mode)
    return [(int(L), np.flatnonzero(ell - 1 == L)) for L in np.unique(ell - 1)]


def objective_batch(a: np.ndarray, range_mode: RangeMode | str = RangeMode.PROOF) -> np.ndarray:
    return window_values_batch(a, range_mode).max(axis=1)


@dataclass(frozen=True)
class Evaluation:
    value: float | Fraction
    argmax: tuple
    range_mode: RangeMode


def objective(p: CoefficientProfile, range_mode: RangeMode | str = RangeMode.PROOF) -> Evaluation:
    """Maximum window value, with every window tying the max within ``TIE_RTOL``."""
    mode = as_mode(range_mode)
    windows = window_set(p.n, mode)
    if p.exact:
        s = autoconvolve(p)
        vals = [window_value(s, w) for w in windows]
        best = max(vals)
        argmax = tuple(w for w, v in zip(windows, vals) if v == best)
        return Evaluation(best, argmax, mode)
    vals = window_values_batch(p.array()[None, :], mode)[0]
    best = float(vals.max())
    cut = best - TIE_RTOL * abs(best)
    argmax = tuple(w for w, v in zip(windows, vals) if v >= cut)
    return Evaluation(best, argmax, mode)


def objective_bruteforce(p: CoefficientProfile, range_mode: RangeMode | str = RangeMode.PROOF):
    """Literal double loop over ``(i, j)`` for every window. Test oracle only."""
    n = p.n
    best = None
    for w in window_set(n, range_mode):
        total = 0
        for i in range(-n, n):
            for j in range(-n, n):
                if w.k <= i + j <= w.k + w.ell - 2:
                    total += p[i] * p[j]
        if p.exact:
            val = Fraction(total, 4 * n * w.ell)
        else:
            val = total / (4 * n * w.ell)
        if best is None or val > best:
            best = val
    return best


def step_sup(p: CoefficientProfile):
    """Exact ``sup (f*f)`` for ``f = sum_j a_j chi_{I_j}``.

    ``f*f`` is piecewise linear with nodes at multiples of ``1/(4n)``; the
    node at ``(m+1)/(4n)`` carries ``s_m / (4n)``, so the sup is the largest
    anti-diagonal sum divided by ``4n``.
    """
    if not p.normalized and not _mass_ok(p.coeffs, 4 * p.n):
        raise DomainError("step_sup needs a normalized profile (sum 4n)")
    s = autoconvolve(p)
    top = max(s.s)
    if p.exact:
        return Fraction(top, 4 * p.n)
    return top / (4 * p.n)


def step_function_nodes(p: CoefficientProfile) -> list[tuple]:
    """Nodes ``(x, (f*f)(x))`` of the piecewise-linear autoconvolution, ``x`` rational."""
    s = autoconvolve(p)
    n = p.n
    nodes = [(Fraction(-2 * n, 4 * n), 0)]
    for m in range(-2 * n, 2 * n - 1):
        peak = Fraction(s[m], 4 * n) if p.exact else s[m] / (4 * n)
        nodes.append((Fraction(m + 1, 4 * n), peak))
    nodes.append((Fraction(2 * n, 4 * n), 0))
    return nodes


def sigma_from_c(c: float) -> float:
    if not c > 0:
        raise DomainError(f"c must be positive, got {c!r}")
    return math.sqrt(2.0 / c)


def c_from_sigma(sigma: float) -> float:
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    return 2.0 / (sigma * sigma)


@dataclass(frozen=True)
class ScaledConstants:
    c_value: float
    sigma_value: float

    @classmethod
    def from_c(cls, c: float) -> "ScaledConstants":
        return cls(float(c), sigma_from_c(c))

    @classmethod
    def from_sigma(cls, sigma: float) -> "ScaledConstants":
        return cls(c_from_sigma(sigma), float(sigma))


def reflect(p: CoefficientProfile) -> CoefficientProfile:
    """``a_i -> a_{-1-i}``: the mirror image of the step function."""
    return CoefficientProfile(p.n, tuple(reversed(p.coeffs)), p.normalized)


def project_rows(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of each row onto ``{x >= 0, sum x = total}`` (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - total
    idx = np.arange(1, v.shape[1] + 1)
    cond = u - css / idx > 0
    rho = v.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def project_to_simplex(n: int, v: Sequence[float]) -> CoefficientProfile:
    """Closest point of ``A_n`` to ``v`` in the Euclidean norm."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (2 * n,):
        raise ShapeError(f"expected {2 * n} entries, got shape {arr.shape}")
    total = 4 * n
    if np.all(arr >= 0) and abs(arr.sum() - total) <= 1e-12 * total:
        return CoefficientProfile(n, tuple(float(x) for x in arr), normalized=True)
    x = project_rows(arr[None, :], total)[0]
    return CoefficientProfile(n, tuple(float(t) for t in x), normalized=True)
