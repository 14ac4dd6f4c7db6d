"""Brownian, fractional Brownian and mixed noise on a uniform time grid.

Every sampler is a pure function of an explicit ``numpy.random.Generator``.
Trajectory ``k`` of an ensemble draws from :func:`path_stream` so results do
not depend on how paths are batched or distributed over workers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, linalg, special

CHOLESKY_CAP = 4096


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise NoiseError(f"horizon T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise NoiseError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.T
        return t

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.T, self.n_steps * int(factor))


def validate_hurst(H: float, allow_half: bool = False) -> float:
    """Return ``H`` as float, raising unless 1/2 < H < 1.

    ``allow_half`` admits H = 1/2 (plain Brownian motion), which some tests use
    as a reference case.
    """
    H = float(H)
    lo_ok = H >= 0.5 if allow_half else H > 0.5
    if not (lo_ok and H < 1.0):
        raise NoiseError(f"Hurst parameter must lie in (1/2, 1), got {H}")
    return H


def is_high_hurst(H: float) -> bool:
    """H in (3/4, 1), the regime where B + c B^H is equivalent to a Brownian motion."""
    return 0.75 < validate_hurst(H) < 1.0


@dataclass(frozen=True)
class CoefficientSpec:
    """Time-dependent coefficient f(t) = c * t**e (``e = 0`` is a constant)."""

    c: float
    e: float = 0.0

    def __post_init__(self):
        if self.c < 0 or self.e < 0 or not (math.isfinite(self.c) and math.isfinite(self.e)):
            raise NoiseError(f"coefficient needs c >= 0 and e >= 0, got c={self.c}, e={self.e}")

    @classmethod
    def constant(cls, c: float) -> "CoefficientSpec":
        return cls(float(c), 0.0)

    @classmethod
    def power(cls, c: float, e: float) -> "CoefficientSpec":
        return cls(float(c), float(e))

    @property
    def is_zero(self) -> bool:
        return self.c == 0.0

    @property
    def is_constant(self) -> bool:
        return self.e == 0.0

    @property
    def q(self) -> float:
        # int_0^t f^2 = c^2 t^(2q) / (2q)
        return self.e + 0.5

    @property
    def amplitude(self) -> float:
        return self.c**2 / (2.0 * self.q)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.e == 0.0:
            return np.full_like(t, self.c) if t.ndim else float(self.c)
        return self.c * t**self.e

    def sq_integral(self, t, s=0.0):
        """int_s^t f(r)^2 dr in closed form."""
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        q2 = 2.0 * self.q
        out = self.c**2 * (t**q2 - s**q2) / q2
        return float(out) if out.ndim == 0 else out


class DependenceKind(enum.Enum):
    IDENTICAL = "identical"
    INDEPENDENT = "independent"
    CORRELATED = "correlated"


@dataclass(frozen=True)
class DependenceMode:
    kind: DependenceKind = DependenceKind.IDENTICAL
    rho: float = 1.0

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise NoiseError(f"correlation must lie in [-1, 1], got {self.rho}")

    @classmethod
    def identical(cls):
        return cls(DependenceKind.IDENTICAL, 1.0)

    @classmethod
    def independent(cls):
        return cls(DependenceKind.INDEPENDENT, 0.0)

    @classmethod
    def correlated(cls, rho: float):
        return cls(DependenceKind.CORRELATED, float(rho))

    @classmethod
    def parse(cls, name: str, rho: float = 0.0) -> "DependenceMode":
        kind = DependenceKind(name.strip().lower())
        if kind is DependenceKind.IDENTICAL:
            return cls.identical()
        if kind is DependenceKind.INDEPENDENT:
            return cls.independent()
        return cls.correlated(rho)

    def __str__(self):
        if self.kind is DependenceKind.CORRELATED:
            return f"correlated(rho={self.rho:g})"
        return self.kind.value


@dataclass(frozen=True, eq=False)
class NoisePath:
    grid: TimeGrid
    values: np.ndarray
    kind: str = "BM"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n_steps + 1,):
            raise NoiseError(f"path has {v.shape} values, grid needs {self.grid.n_steps + 1}")
        if v[0] != 0.0:
            raise NoiseError("noise paths start at 0")
        if not np.all(np.isfinite(v)):
            raise NoiseError("noise path contains non-finite values")
        if self.kind not in ("BM", "FBM", "MIXED"):
            raise NoiseError(f"unknown path kind {self.kind!r}")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def at(self, t):
        """Linear interpolation between nodes."""
        return np.interp(t, self.grid.times, self.values)

    @classmethod
    def zeros(cls, grid: TimeGrid, kind: str = "MIXED") -> "NoisePath":
        return cls(grid, np.zeros(grid.n_steps + 1), kind)


def path_stream(master_seed: int, k: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``k`` (Philox keyed by seed and index)."""
    ss = np.random.SeedSequence(int(master_seed) & (2**64 - 1), spawn_key=(int(k),))
    return np.random.Generator(np.random.Philox(ss))


def refine_path(path: NoisePath, factor: int) -> NoisePath:
    """Piecewise-linear interpolation of a path onto a grid ``factor`` times finer."""
    factor = int(factor)
    if factor == 1:
        return path
    fine = path.grid.refine(factor)
    return NoisePath(fine, np.interp(fine.times, path.grid.times, path.values), path.kind)


# ---------------------------------------------------------------- Brownian motion


def bm_increments(grid: TimeGrid, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(grid.n_steps) * math.sqrt(grid.dt)


def sample_bm(grid: TimeGrid, rng: np.random.Generator) -> NoisePath:
    vals = np.concatenate(([0.0], np.cumsum(bm_increments(grid, rng))))
    return NoisePath(grid, vals, "BM")


# ---------------------------------------------------------------- Volterra kernel


def c_H(H: float) -> float:
    H = validate_hurst(H, allow_half=True)
    if H == 0.5:
        return 0.0
    log_beta = math.lgamma(2 - 2 * H) + math.lgamma(H - 0.5) - math.lgamma(1.5 - H)
    return math.sqrt(H * (2 * H - 1) * math.exp(-log_beta))


def kernel_KH(t: float, s: float, H: float) -> float:
    """Molchan-Golosov type kernel K^H(t, s) for H > 1/2, by quadrature.

    With u = sigma - s the integrand is u^(H-3/2) (s+u)^(H-1/2). The term
    u^(H-3/2) s^(H-1/2) is integrated exactly; the remainder behaves like
    u^(H-1/2) at 0 and goes to adaptive (algebraic-weight) quadrature.
    """
    H = validate_hurst(H)
    if t <= s:
        return 0.0
    if s <= 0.0:
        raise NoiseError("K^H(t, s) diverges as s -> 0; evaluate at s > 0")
    h = H - 0.5
    d = t - s
    leading = s**h * d**h / h

    # weight u^(H-3/2) handled by QAWS; the smooth factor vanishes at u = 0
    rest, _ = integrate.quad(
        lambda u: (s + u) ** h - s**h, 0.0, d, weight="alg", wvar=(H - 1.5, 0.0),
        epsabs=1e-14 * leading, epsrel=1e-10, limit=200,
    )
    return c_H(H) * s ** (-h) * (leading + rest)


def kernel_KH_closed(t, s, H: float):
    """Vectorised K^H(t, s) through the Gauss hypergeometric function.

    Independent of :func:`kernel_KH`; used for kernel matrices.
    """
    H = validate_hurst(H)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    h = H - 0.5
    out = np.zeros(np.broadcast(t, s).shape)
    if np.any(np.broadcast_to((s <= 0.0) & (t > s), out.shape)):
        raise NoiseError("K^H(t, s) diverges as s -> 0; evaluate at s > 0")
    mask = np.broadcast_to(t > s, out.shape)
    tt = np.broadcast_to(t, out.shape)[mask]
    ss = np.broadcast_to(s, out.shape)[mask]
    d = tt - ss
    z = -d / ss
    out[mask] = c_H(H) * d**h / h * special.hyp2f1(-h, h, h + 1.0, z)
    return out if out.ndim else float(out)


@lru_cache(maxsize=8)
def _volterra_matrix(T: float, n_steps: int, H: float) -> np.ndarray:
    grid = TimeGrid(T, n_steps)
    t = grid.times[1:]
    mid = (np.arange(n_steps) + 0.5) * grid.dt
    mat = kernel_KH_closed(t[:, None], mid[None, :], H)
    mat.setflags(write=False)
    return mat


def volterra_matrix(grid: TimeGrid, H: float) -> np.ndarray:
    """Rows i = 1..n: K^H(t_i, midpoint_j) for j < i, zero above the diagonal."""
    return _volterra_matrix(float(grid.T), int(grid.n_steps), validate_hurst(H))


def fbm_from_increments(grid: TimeGrid, H: float, dB: np.ndarray) -> np.ndarray:
    """Volterra sums for one path (1-D ``dB``) or a batch (rows of ``dB``)."""
    K = volterra_matrix(grid, H)
    dB = np.asarray(dB, dtype=float)
    body = dB @ K.T
    pad = np.zeros(dB.shape[:-1] + (1,))
    return np.concatenate((pad, body), axis=-1)


def sample_fbm_volterra(grid: TimeGrid, H: float, driver: NoisePath) -> NoisePath:
    if driver.grid != grid:
        raise NoiseError("driver path lives on a different grid")
    if driver.kind != "BM":
        raise NoiseError("Volterra construction needs a Brownian driver")
    vals = fbm_from_increments(grid, H, np.diff(driver.values))
    return NoisePath(grid, vals, "FBM")


# ---------------------------------------------------------------- Cholesky


def fbm_covariance(times: np.ndarray, H: float) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    two_h = 2.0 * H
    tt, ss = np.meshgrid(t, t, indexing="ij")
    return 0.5 * (tt**two_h + ss**two_h - np.abs(tt - ss) ** two_h)


@lru_cache(maxsize=8)
def _cholesky_factor(T: float, n_steps: int, H: float) -> np.ndarray:
    times = TimeGrid(T, n_steps).times[1:]
    cov = fbm_covariance(times, H)
    try:
        L = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise NoiseError(
            f"fBm covariance not numerically positive definite for n={n_steps}, H={H}; "
            "use fewer steps or add jitter"
        ) from exc
    L.setflags(write=False)
    return L


def cholesky_factor(grid: TimeGrid, H: float, cap: int = CHOLESKY_CAP) -> np.ndarray:
    if grid.n_steps > cap:
        raise NoiseError(f"Cholesky construction capped at {cap} steps, grid has {grid.n_steps}")
    return _cholesky_factor(float(grid.T), int(grid.n_steps), validate_hurst(H, allow_half=True))


def fbm_from_normals(grid: TimeGrid, H: float, z: np.ndarray, cap: int = CHOLESKY_CAP) -> np.ndarray:
    L = cholesky_factor(grid, H, cap)
    z = np.asarray(z, dtype=float)
    body = z @ L.T
    pad = np.zeros(z.shape[:-1] + (1,))
    return np.concatenate((pad, body), axis=-1)


def sample_fbm_cholesky(
    grid: TimeGrid, H: float, rng: np.random.Generator, cap: int = CHOLESKY_CAP
) -> NoisePath:
    z = rng.standard_normal(grid.n_steps)
    return NoisePath(grid, fbm_from_normals(grid, H, z, cap), "FBM")


# ---------------------------------------------------------------- mixed noise


def mixed_values(a: CoefficientSpec, b: CoefficientSpec, grid: TimeGrid, bm, fbm) -> np.ndarray:
    """Left-point sums of a dB + b dB^H; ``bm``/``fbm`` may be batches (last axis = time)."""
    left = grid.times[:-1]
    out = np.zeros(np.broadcast(np.asarray(bm), np.asarray(fbm)).shape)
    incr = np.zeros(out.shape[:-1] + (grid.n_steps,))
    if not a.is_zero:
        incr += a(left) * np.diff(bm, axis=-1)
    if not b.is_zero:
        incr += b(left) * np.diff(fbm, axis=-1)
    out[..., 1:] = np.cumsum(incr, axis=-1)
    return out


def mixed_noise(a: CoefficientSpec, b: CoefficientSpec, bm: NoisePath, fbm: NoisePath) -> NoisePath:
    if bm.grid != fbm.grid:
        raise NoiseError("Brownian and fractional paths live on different grids")
    if bm.kind != "BM" or fbm.kind != "FBM":
        raise NoiseError("mixed_noise expects a BM path and an FBM path")
    return NoisePath(bm.grid, mixed_values(a, b, bm.grid, bm.values, fbm.values), "MIXED")


@dataclass(frozen=True)
class NoiseBatch:
    """Rows are trajectories; columns are grid nodes."""

    grid: TimeGrid
    bm: np.ndarray
    fbm: np.ndarray
    mixed: np.ndarray
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def path(self, row: int, which: str = "mixed") -> NoisePath:
        kind = {"bm": "BM", "fbm": "FBM", "mixed": "MIXED"}[which]
        return NoisePath(self.grid, getattr(self, which)[row], kind)


def sample_noise_batch(
    grid: TimeGrid,
    H: float,
    a: CoefficientSpec,
    b: CoefficientSpec,
    mode: DependenceMode,
    master_seed: int,
    indices,
    with_fbm: bool = True,
) -> NoiseBatch:
    """Sample B, B^H and N for the trajectories in ``indices``.

    Each trajectory draws n standard normals for B, then (unless the mode is
    Identical) n more for the second driver, from its own stream. With
    ``with_fbm=False`` and b = 0 the fractional path is left at zero, which
    skips the O(n^2) construction without changing the random draws.
    """
    indices = np.asarray(indices, dtype=np.int64)
    n = grid.n_steps
    zb = np.empty((len(indices), n))
    zw = np.empty((len(indices), n)) if mode.kind is not DependenceKind.IDENTICAL else None
    for row, k in enumerate(indices):
        rng = path_stream(master_seed, int(k))
        zb[row] = rng.standard_normal(n)
        if zw is not None:
            zw[row] = rng.standard_normal(n)
    sq = math.sqrt(grid.dt)
    bm = np.zeros((len(indices), n + 1))
    bm[:, 1:] = np.cumsum(zb * sq, axis=1)
    if not with_fbm and b.is_zero:
        fbm = np.zeros_like(bm)
    elif mode.kind is DependenceKind.IDENTICAL:
        fbm = fbm_from_increments(grid, H, zb * sq)
    elif mode.kind is DependenceKind.INDEPENDENT:
        fbm = fbm_from_normals(grid, H, zw)
    else:
        dW = (mode.rho * zb + math.sqrt(max(0.0, 1.0 - mode.rho**2)) * zw) * sq
        fbm = fbm_from_increments(grid, H, dW)
    mixed = mixed_values(a, b, grid, bm, fbm)
    return NoiseBatch(grid, bm, fbm, mixed, indices)
