"""Fractional Brownian motion with Hurst index H in (1/2, 1).

Covariance kernel, joint covariance matrices on arbitrary grids, and exact
Gaussian path sampling for d independent components.

The covariance of fractional Brownian motion is

    R(s, t) = 1/2 (s^{2H} + t^{2H} - |s - t|^{2H}),

which for H > 1/2 also has the double-integral form

    R(s, t) = a_H int_0^s int_0^t |u - v|^{2H - 2} du dv,
    a_H = H (2H - 1).

Sampling is exact in law up to floating point: either a Cholesky factor of
the joint covariance on an arbitrary grid, or circulant embedding of the
increment covariance on a uniform grid. The Cholesky route is the default
because the simulation grids used elsewhere in the package are geometric,
not uniform.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError
from .rng import generator

_SPACING_MODES = ("uniform", "geometric")
_SAMPLING_METHODS = ("cholesky", "circulant")


@dataclass(frozen=True)
class Hurst:
    """Hurst index restricted to the long-memory regime (1/2, 1).

    Attributes
    ----------
    h : float
        The index itself, 0.5 < h < 1 strictly.
    alpha_h : float
        The constant a_H = H (2H - 1), in (0, 1).
    """

    h: float
    alpha_h: float = field(init=False)

    def __post_init__(self):
        h = float(self.h)
        if not np.isfinite(h) or not 0.5 < h < 1.0:
            raise DomainError(f"Hurst index must lie strictly in (0.5, 1), got {self.h!r}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "alpha_h", h * (2.0 * h - 1.0))


def as_hurst(h):
    """Coerce a float (or pass through a Hurst) with validation."""
    if isinstance(h, Hurst):
        return h
    return Hurst(float(h))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing grid of times starting at 0.

    ``points`` always includes t = 0 as its first entry (where every path
    is pinned to zero); sampling and covariance matrices only involve the
    positive points. ``spacing_mode`` records the intended layout and is
    what the circulant sampler checks before trusting uniformity.
    """

    points: np.ndarray
    spacing_mode: str = "geometric"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DomainError("grid needs at least two points in a 1-d array")
        if not np.all(np.isfinite(pts)):
            raise DomainError("grid points must be finite")
        if pts[0] != 0.0:
            raise DomainError(f"grid must start at 0, got {pts[0]!r}")
        if not np.all(np.diff(pts) > 0.0):
            raise DomainError("grid points must be strictly increasing (duplicates rejected)")
        if self.spacing_mode not in _SPACING_MODES:
            raise DomainError(f"spacing_mode must be one of {_SPACING_MODES}, got {self.spacing_mode!r}")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return int(self.points.size)

    @property
    def positive(self):
        """The positive times (everything past the pinned origin)."""
        return self.points[1:]

    def is_uniform(self, rtol=1e-9):
        d = np.diff(self.points)
        return bool(np.all(np.abs(d - d[0]) <= rtol * d[0]))

    @classmethod
    def uniform(cls, t_end, n_steps):
        """Uniform grid 0, h, 2h, ..., t_end with n_steps steps."""
        t_end = float(t_end)
        n_steps = int(n_steps)
        if t_end <= 0 or n_steps < 1:
            raise DomainError("uniform grid needs t_end > 0 and n_steps >= 1")
        return cls(np.linspace(0.0, t_end, n_steps + 1), spacing_mode="uniform")


def simulation_grid(k, checkpoints, resolution=4096, warmup=32):
    """Grid for integrating from time 1 out to k**max(checkpoints).

    Layout: {0}, a short uniform warm-up partition of (0, 1], then
    ``resolution`` log-uniformly spaced points on [1, k**t_max]. Each
    checkpoint value k**t is inserted exactly (same float expression the
    integrators use), so checkpoint lookups snap with zero error.
    """
    k = float(k)
    if not np.isfinite(k) or k <= 1.0:
        raise DomainError(f"k must exceed 1, got {k!r}")
    cps = tuple(float(t) for t in checkpoints)
    if not cps:
        raise DomainError("at least one checkpoint is required")
    if any(t <= 0 for t in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
        raise DomainError("checkpoints must be positive and strictly increasing")
    resolution = int(resolution)
    warmup = int(warmup)
    if resolution < 2 or warmup < 1:
        raise DomainError("resolution must be >= 2 and warmup >= 1")

    targets = np.array([k**t for t in cps])
    log_end = np.log(targets[-1])
    body_logs = np.linspace(0.0, log_end, resolution)
    cp_logs = np.log(targets)
    logs = np.union1d(body_logs, cp_logs)
    body = np.exp(logs)
    # overwrite with the exact float k**t so snapping is bitwise
    idx = np.searchsorted(logs, cp_logs)
    body[idx] = targets
    body[0] = 1.0
    warm = np.linspace(0.0, 1.0, warmup + 1)[1:-1]
    pts = np.concatenate(([0.0], warm, body))
    return TimeGrid(pts, spacing_mode="geometric")


def covariance(s, t, h):
    """Covariance R(s, t) of fBm at nonnegative times (vectorized)."""
    hh = as_hurst(h)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("covariance requires nonnegative times")
    two_h = 2.0 * hh.h
    out = 0.5 * (s**two_h + t**two_h - np.abs(s - t) ** two_h)
    if out.ndim == 0:
        return float(out)
    return out


def covariance_matrix(grid, h):
    """Joint covariance of B at the positive grid times.

    Returns an (n-1, n-1) symmetric positive definite matrix, where n is
    the total number of grid points including the pinned origin.
    """
    hh = as_hurst(h)
    t = grid.positive
    return covariance(t[:, None], t[None, :], hh)


def _cholesky_factor(grid, h):
    """Lower factor of the grid covariance, with one documented jitter retry.

    On a first failure, a diagonal jitter of 1e-12 * max(t)^{2H} is added
    once; a second failure raises NumericalError loudly rather than
    escalating silently.
    """
    hh = as_hurst(h)
    cov = covariance_matrix(grid, hh)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(grid.points[-1]) ** (2.0 * hh.h)
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            raise NumericalError(
                f"covariance factorization failed even with jitter {jitter:.3e} "
                f"(n={cov.shape[0]}, H={hh.h}); the grid is too ill-conditioned"
            ) from None


@dataclass(frozen=True)
class FbmPathSet:
    """d independent fBm components sampled on a common grid.

    ``values`` has shape (d, n) aligned with ``grid.points``; every
    component starts at exactly 0.
    """

    grid: TimeGrid
    d: int
    values: np.ndarray
    hurst: Hurst
    seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.d, self.grid.n):
            raise ConfigurationError(
                f"values shape {v.shape} does not match (d, n) = ({self.d}, {self.grid.n})"
            )
        if self.d < 1:
            raise ConfigurationError("need at least one component")
        if np.any(v[:, 0] != 0.0):
            raise ConfigurationError("paths must start at exactly 0")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def component(self, i):
        return self.values[i]


def paths_to_csv(paths):
    """Debug export: one row per time, columns time, component_1..d."""
    lines = ["time," + ",".join(f"component_{i + 1}" for i in range(paths.d))]
    for j in range(paths.grid.n):
        vals = ",".join(repr(float(x)) for x in paths.values[:, j])
        lines.append(f"{paths.grid.points[j]!r},{vals}")
    return "\n".join(lines) + "\n"


class FbmSampler:
    """Reusable exact sampler; factorizes the grid covariance once.

    method="cholesky" works on any grid. method="circulant" requires a
    uniform grid and uses circulant embedding of the increment covariance
    (exact in law; eigenvalues are clipped only when negative within
    rounding, anything materially negative raises NumericalError).
    """

    def __init__(self, grid, h, method="cholesky"):
        if method not in _SAMPLING_METHODS:
            raise ConfigurationError(f"method must be one of {_SAMPLING_METHODS}, got {method!r}")
        self.grid = grid
        self.hurst = as_hurst(h)
        self.method = method
        if method == "cholesky":
            self._factor = _cholesky_factor(grid, self.hurst)
        else:
            if grid.spacing_mode != "uniform" or not grid.is_uniform():
                raise ConfigurationError("circulant sampling requires a uniform grid")
            self._prepare_circulant()

    # -- circulant machinery -------------------------------------------------

    def _prepare_circulant(self):
        """Eigenvalues of the circulant embedding of the fGn covariance.

        For step h_s the increment autocovariance is
        gamma(j) = h_s^{2H}/2 (|j+1|^{2H} - 2|j|^{2H} + |j-1|^{2H}).
        The first row of the 2m-circulant is
        [gamma_0, ..., gamma_m, gamma_{m-1}, ..., gamma_1].
        """
        h_s = float(self.grid.points[1] - self.grid.points[0])
        m = self.grid.n - 1  # number of increments
        two_h = 2.0 * self.hurst.h
        j = np.arange(m + 1, dtype=float)
        gamma = 0.5 * h_s**two_h * (np.abs(j + 1) ** two_h - 2 * j**two_h + np.abs(j - 1) ** two_h)
        row = np.concatenate([gamma, gamma[-2:0:-1]])
        lam = np.fft.fft(row).real
        floor = -1e-10 * lam.max()
        if lam.min() < floor:
            raise NumericalError(
                f"circulant embedding not nonnegative definite (min eigenvalue {lam.min():.3e})"
            )
        self._lam = np.clip(lam, 0.0, None)
        self._m = m

    def _circulant_increments(self, g):
        """One component of fGn, consuming the stream in documented order.

        Draw order per component: m+1 normals for the real parts
        (frequencies 0..m), then m-1 normals for the imaginary parts
        (frequencies 1..m-1).
        """
        m = self._m
        lam = self._lam
        a = g.standard_normal(m + 1)
        b = g.standard_normal(m - 1) if m > 1 else np.zeros(0)
        w = np.zeros(2 * m, dtype=complex)
        w[0] = np.sqrt(lam[0] / (2 * m)) * a[0]
        w[m] = np.sqrt(lam[m] / (2 * m)) * a[m]
        if m > 1:
            scale = np.sqrt(lam[1:m] / (4 * m))
            w[1:m] = scale * (a[1:m] + 1j * b)
            w[m + 1 :] = np.conj(w[1:m][::-1])
        x = np.fft.fft(w).real[:m]
        return x

    # -- sampling ------------------------------------------------------------

    def sample(self, d, seed):
        """One path set; stream = (seed, "fbm"). Bit-identical per inputs."""
        return self.sample_batch(d, seed, 1, label="fbm")[0]

    def sample_batch(self, d, seed, reps, rep_offset=0, label="fbm"):
        """reps path sets; replication r uses stream (seed, label, rep_offset + r).

        Returns an array of shape (reps, d, n). Keying streams by absolute
        replication index makes block-splitting irrelevant to the output.
        """
        d = int(d)
        reps = int(reps)
        if d < 1:
            raise ConfigurationError("need at least one component")
        if reps < 1:
            raise ConfigurationError("need at least one replication")
        n_pos = self.grid.n - 1
        out = np.zeros((reps, d, self.grid.n))
        if self.method == "cholesky":
            z = np.empty((reps * d, n_pos))
            for r in range(reps):
                g = generator(seed, label, rep_offset + r)
                z[r * d : (r + 1) * d] = g.standard_normal((d, n_pos))
            vals = z @ self._factor.T
            out[:, :, 1:] = vals.reshape(reps, d, n_pos)
        else:
            for r in range(reps):
                g = generator(seed, label, rep_offset + r)
                for c in range(d):
                    out[r, c, 1:] = np.cumsum(self._circulant_increments(g))
        return out

    def sample_paths(self, d, seed):
        vals = self.sample(d, seed)
        return FbmPathSet(grid=self.grid, d=int(d), values=vals, hurst=self.hurst, seed=int(seed))


def sample_fbm(grid, d, h, seed, method="cholesky"):
    """d independent fBm components on the grid; exact Gaussian sampling.

    Deterministic: the same (grid, d, h, seed, method) gives bit-identical
    values on every platform and run.
    """
    sampler = FbmSampler(grid, h, method)
    return sampler.sample_paths(d, seed)
