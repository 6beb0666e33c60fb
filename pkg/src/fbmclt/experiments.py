"""Monte Carlo experiments on the rescaled iterated integrals.

The objects of study are X_k(t) = Y(k^t) / sqrt(log k) for a fixed order
q and Hurst index H. As k grows, X_k converges to a Brownian motion with
variance rate sigma_q^2(H); the routines here estimate the finite-k
moments, normality diagnostics, tightness exponents and convergence-rate
proxies that make that statement checkable at desk scale.

All replication streams are derived from the experiment seed by absolute
replication index, and every reduction is fixed-order, so a report is a
pure function of its configuration (bit-identical across runs and thread
counts).
"""

import math
import time
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import ndtr

from ._parallel import ordered_map
from .errors import ConfigurationError, DomainError, PartialReportError
from .fbm import FbmSampler, Hurst, as_hurst, simulation_grid
from .iterated import _SCHEMES, IterConfig, _section, _winding_terms_batch, _y_batch
from .quadratures import sigma2_squared, sigmaq_squared
from .rng import derive_seed

_BLOCK = 512


# ---------------------------------------------------------------------------
# scalar statistics
# ---------------------------------------------------------------------------


def ks_normal(x):
    """One-sample Kolmogorov-Smirnov test against N(0, 1).

    Returns (statistic, p_value); the p-value uses the asymptotic
    Kolmogorov series (both branches, switched near lambda = 1.18).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 8:
        raise DomainError(f"ks_normal needs a 1-d sample of size >= 8, got shape {x.shape}")
    n = x.size
    cdf = ndtr(np.sort(x))
    i = np.arange(1, n + 1)
    d_plus = float(np.max(i / n - cdf))
    d_minus = float(np.max(cdf - (i - 1) / n))
    d = max(d_plus, d_minus)
    return d, _kolmogorov_sf(math.sqrt(n) * d)


def _kolmogorov_sf(lam):
    """P(K > lam) for the Kolmogorov distribution, asymptotic series."""
    if lam <= 0.0:
        return 1.0
    if lam < 1.18:
        # complementary form, fast for small lambda
        total = 0.0
        for j in range(1, 20):
            total += math.exp(-((2 * j - 1) ** 2) * math.pi**2 / (8.0 * lam**2))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * total))
    total = 0.0
    for j in range(1, 200):
        term = (-1.0) ** (j - 1) * math.exp(-2.0 * j**2 * lam**2)
        total += term
        if abs(term) < 1e-17:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_critical_value(n, alpha=0.01):
    """Critical KS statistic: smallest d with P(D_n > d) <= alpha."""
    n = int(n)
    if n < 8:
        raise DomainError(f"need n >= 8, got {n}")
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    lo, hi = 1e-3, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _kolmogorov_sf(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return hi / math.sqrt(n)


def fourth_moment_gap(x):
    """(m4 - 3 m2^2, standard error) for a centered sample.

    The gap vanishes for Gaussian data; the standard error comes from the
    delta method on (m2, m4):
    se^2 = [ (m8 - m4^2) + 36 m2^2 (m4 - m2^2) - 12 m2 (m6 - m4 m2) ] / n.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 8:
        raise DomainError(f"fourth_moment_gap needs a 1-d sample of size >= 8, got shape {x.shape}")
    n = x.size
    x2 = x * x
    m2 = float(x2.mean())
    m4 = float((x2 * x2).mean())
    m6 = float((x2 * x2 * x2).mean())
    m8 = float((x2 * x2 * x2 * x2).mean())
    gap = m4 - 3.0 * m2 * m2
    var = (m8 - m4 * m4) + 36.0 * m2 * m2 * (m4 - m2 * m2) - 12.0 * m2 * (m6 - m4 * m2)
    se = math.sqrt(max(var, 0.0) / n)
    return gap, se


def stein_tv_bound(m2, gap, sigma_sq_t):
    """Total-variation distance bound from the second and fourth moments:

        2 sqrt(max(gap, 0) / (3 m2^2)) + 2 |m2 - s| / max(m2, s),

    with s = sigma_sq_t the limiting variance at the evaluation time.
    """
    m2 = float(m2)
    sigma_sq_t = float(sigma_sq_t)
    if m2 <= 0.0 or sigma_sq_t <= 0.0:
        raise DomainError("stein_tv_bound needs positive variances")
    term1 = 2.0 * math.sqrt(max(float(gap), 0.0) / (3.0 * m2 * m2))
    term2 = 2.0 * abs(m2 - sigma_sq_t) / max(m2, sigma_sq_t)
    return term1 + term2


# ---------------------------------------------------------------------------
# simulation engines
# ---------------------------------------------------------------------------


def simulate_x_samples(q, h, k, t_list, reps, seed, scheme="left_point",
                       resolution=2048, warmup=32, threads=1):
    """X_k(t) for every replication and checkpoint.

    Returns (x, snap_errors): x has shape (reps, len(t_list)). One path
    set serves all checkpoints of a replication. Replication r draws from
    stream (seed, "xsim", r) regardless of block layout or threads.
    """
    cfg = IterConfig(q=q, h=h, k=k, checkpoints=tuple(t_list), scheme=scheme)
    reps = int(reps)
    if reps < 1:
        raise ConfigurationError(f"reps must be >= 1, got {reps}")
    grid = simulation_grid(cfg.k, cfg.checkpoints, resolution=resolution, warmup=warmup)
    sampler = FbmSampler(grid, cfg.h, "cholesky")
    _, _, snap = _section(grid.points, cfg.k, cfg.checkpoints)

    def compute(offset):
        m = min(_BLOCK, reps - offset)
        vals = sampler.sample_batch(cfg.q, seed, m, rep_offset=offset, label="xsim")
        return _y_batch(vals, grid.points, cfg)

    ys = ordered_map(compute, range(0, reps, _BLOCK), threads)
    y = np.concatenate(ys, axis=0)
    x = y / math.sqrt(math.log(cfg.k))
    return x, tuple(float(e) for e in snap)


def simulate_winding_samples(h, t_end, reps, seed, scheme="left_point",
                             resolution=2048, warmup=32, threads=1):
    """(Z, term1, term2) samples of the winding functionals at horizon t_end.

    Z' = term1 - term2. Replication r draws from stream (seed, "wind", r).
    """
    hh = as_hurst(h)
    t_end = float(t_end)
    if t_end <= 1.0:
        raise DomainError(f"winding horizon must exceed 1, got {t_end!r}")
    if scheme not in _SCHEMES:
        raise DomainError(f"scheme must be one of {_SCHEMES}, got {scheme!r}")
    reps = int(reps)
    if reps < 1:
        raise ConfigurationError(f"reps must be >= 1, got {reps}")
    grid = simulation_grid(t_end, (1.0,), resolution=resolution, warmup=warmup)
    sampler = FbmSampler(grid, hh, "cholesky")

    def compute(offset):
        m = min(_BLOCK, reps - offset)
        vals = sampler.sample_batch(2, seed, m, rep_offset=offset, label="wind")
        return _winding_terms_batch(vals, grid.points, hh, t_end, scheme)

    parts = ordered_map(compute, range(0, reps, _BLOCK), threads)
    z = np.concatenate([p[0] for p in parts])
    t1 = np.concatenate([p[1] for p in parts])
    t2 = np.concatenate([p[2] for p in parts])
    return z, t1, t2


# ---------------------------------------------------------------------------
# experiment configuration and report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a CLT experiment sweep."""

    q: int
    h: Hurst
    k_list: tuple
    t_list: tuple
    reps: int
    seed: int
    scheme: str = "left_point"
    resolution: int = 2048
    warmup: int = 32

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise DomainError(f"order q must be an integer >= 2, got {self.q!r}")
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "h", as_hurst(self.h))
        ks = tuple(float(k) for k in self.k_list)
        if not ks or any(k <= 1.0 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigurationError("k_list must be nonempty, > 1, strictly increasing")
        object.__setattr__(self, "k_list", ks)
        ts = tuple(float(t) for t in self.t_list)
        if not ts or any(t <= 0.0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigurationError("t_list must be nonempty, positive, strictly increasing")
        object.__setattr__(self, "t_list", ts)
        if int(self.reps) < 1:
            raise ConfigurationError(f"reps must be >= 1, got {self.reps!r}")
        object.__setattr__(self, "reps", int(self.reps))
        object.__setattr__(self, "seed", int(self.seed))
        if self.scheme not in _SCHEMES:
            raise ConfigurationError(f"scheme must be one of {_SCHEMES}, got {self.scheme!r}")
        if int(self.resolution) < 2 or int(self.warmup) < 1:
            raise ConfigurationError("resolution must be >= 2 and warmup >= 1")
        object.__setattr__(self, "resolution", int(self.resolution))
        object.__setattr__(self, "warmup", int(self.warmup))

    def to_dict(self):
        return {
            "q": self.q,
            "hurst": self.h.h,
            "k_list": list(self.k_list),
            "t_list": list(self.t_list),
            "reps": self.reps,
            "seed": self.seed,
            "scheme": self.scheme,
            "resolution": self.resolution,
            "warmup": self.warmup,
        }


@dataclass(frozen=True)
class KBlock:
    """Per-k statistics of X_k(t) over the configured checkpoints."""

    k: float
    t_list: tuple
    sample_mean: tuple
    se_mean: tuple
    sample_var: tuple
    se_var: tuple
    fourth_moment: tuple
    se_fourth_moment: tuple
    fourth_moment_gap: tuple
    se_gap: tuple
    ks_statistic: tuple
    ks_p: tuple
    cov: tuple
    se_cov: tuple
    tightness_slope: float
    snap_errors: tuple

    def to_dict(self):
        return {
            "k": self.k,
            "t_list": list(self.t_list),
            "sample_mean": list(self.sample_mean),
            "se_mean": list(self.se_mean),
            "sample_var": list(self.sample_var),
            "se_var": list(self.se_var),
            "fourth_moment": list(self.fourth_moment),
            "se_fourth_moment": list(self.se_fourth_moment),
            "fourth_moment_gap": list(self.fourth_moment_gap),
            "se_gap": list(self.se_gap),
            "ks_statistic": list(self.ks_statistic),
            "ks_p": list(self.ks_p),
            "cov": [list(row) for row in self.cov],
            "se_cov": [list(row) for row in self.se_cov],
            # a single checkpoint gives no spacings to fit; JSON has no NaN
            "tightness_slope": self.tightness_slope if math.isfinite(self.tightness_slope) else None,
            "snap_errors": list(self.snap_errors),
        }


@dataclass(frozen=True)
class McReport:
    """Everything run_experiment measured, one block per k."""

    config: ExperimentConfig
    blocks: tuple

    def to_dict(self):
        return {"config": self.config.to_dict(), "blocks": [b.to_dict() for b in self.blocks]}

    def block_for(self, k):
        for b in self.blocks:
            if b.k == float(k):
                return b
        raise KeyError(f"no block for k={k!r}")


def _stats_block(k, t_list, x, snap):
    n, nt = x.shape
    mean = x.mean(axis=0)
    var = x.var(axis=0, ddof=1)
    se_mean = np.sqrt(var / n)
    x2 = x * x
    se_var = x2.std(axis=0, ddof=1) / math.sqrt(n)
    m4 = (x2 * x2).mean(axis=0)
    se_m4 = (x2 * x2).std(axis=0, ddof=1) / math.sqrt(n)
    gaps, se_gaps, ks_d, ks_p = [], [], [], []
    for j in range(nt):
        g, sg = fourth_moment_gap(x[:, j])
        gaps.append(g)
        se_gaps.append(sg)
        sd = math.sqrt(var[j])
        d, p = ks_normal(x[:, j] / sd)
        ks_d.append(d)
        ks_p.append(p)
    xc = x - mean[None, :]
    cov = (xc.T @ xc) / (n - 1)
    prod = x[:, :, None] * x[:, None, :]
    se_cov = prod.std(axis=0, ddof=1) / math.sqrt(n)
    slope = _tightness_slope(x, t_list)
    return KBlock(
        k=float(k),
        t_list=tuple(t_list),
        sample_mean=tuple(map(float, mean)),
        se_mean=tuple(map(float, se_mean)),
        sample_var=tuple(map(float, var)),
        se_var=tuple(map(float, se_var)),
        fourth_moment=tuple(map(float, m4)),
        se_fourth_moment=tuple(map(float, se_m4)),
        fourth_moment_gap=tuple(gaps),
        se_gap=tuple(se_gaps),
        ks_statistic=tuple(ks_d),
        ks_p=tuple(ks_p),
        cov=tuple(tuple(map(float, row)) for row in cov),
        se_cov=tuple(tuple(map(float, row)) for row in se_cov),
        tightness_slope=slope,
        snap_errors=tuple(snap),
    )


def _tightness_slope(x, t_list):
    """Fit log E|X(t) - X(s)|^4 against log(t - s) over checkpoint pairs."""
    pts = []
    for i, j in combinations(range(len(t_list)), 2):
        dt = t_list[j] - t_list[i]
        m = float(np.mean((x[:, j] - x[:, i]) ** 4))
        if dt > 0.0 and m > 0.0:
            pts.append((math.log(dt), math.log(m)))
    if len(set(a for a, _ in pts)) < 2:
        return float("nan")
    a = np.array([p[0] for p in pts])
    b = np.array([p[1] for p in pts])
    return float(np.polyfit(a, b, 1)[0])


def run_experiment(cfg, threads=1, budget_s=None):
    """Run the full sweep described by cfg; returns an McReport.

    Identical configurations produce identical reports. If budget_s is
    given and exceeded between k-blocks, PartialReportError carries the
    report of the completed blocks.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise ConfigurationError("run_experiment expects an ExperimentConfig")
    t0 = time.monotonic()
    blocks = []
    for ki, k in enumerate(cfg.k_list):
        if budget_s is not None and ki > 0 and time.monotonic() - t0 > float(budget_s):
            raise PartialReportError(
                f"budget {budget_s}s exceeded after {ki} of {len(cfg.k_list)} blocks",
                partial=McReport(config=cfg, blocks=tuple(blocks)),
            )
        sub = derive_seed(cfg.seed, "kblock", ki)
        x, snap = simulate_x_samples(
            cfg.q, cfg.h, k, cfg.t_list, cfg.reps, sub,
            scheme=cfg.scheme, resolution=cfg.resolution, warmup=cfg.warmup,
            threads=threads,
        )
        blocks.append(_stats_block(k, cfg.t_list, x, snap))
    return McReport(config=cfg, blocks=tuple(blocks))


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


def tightness_probe(q, h, k, t_pairs, reps, seed, scheme="left_point",
                    resolution=2048, warmup=32, threads=1):
    """Slope of log E|X(t) - X(s)|^4 vs log(t - s) over the given pairs.

    Degenerate pairs (t <= s or s <= 0) are excluded; if none survive, or
    all surviving spacings coincide, a DomainError is raised. A slope of 2
    is the self-similar ideal; anything well above 1 certifies tightness.
    """
    pairs = [(float(a), float(b)) for a, b in t_pairs]
    usable = [(a, b) for a, b in pairs if a > 0.0 and b > a]
    if not usable:
        raise DomainError("all checkpoint pairs are degenerate")
    gaps = sorted({b - a for a, b in usable})
    if len(gaps) < 2:
        raise DomainError("need at least two distinct spacings to fit a slope")
    times = tuple(sorted({t for p in usable for t in p}))
    x, _ = simulate_x_samples(q, h, k, times, reps, seed, scheme=scheme,
                              resolution=resolution, warmup=warmup, threads=threads)
    index = {t: i for i, t in enumerate(times)}
    pts = []
    for a, b in usable:
        m = float(np.mean((x[:, index[b]] - x[:, index[a]]) ** 4))
        if m > 0.0:
            pts.append((math.log(b - a), math.log(m)))
    if len(set(p[0] for p in pts)) < 2:
        raise DomainError("fourth moments degenerate; cannot fit a slope")
    av = np.array([p[0] for p in pts])
    bv = np.array([p[1] for p in pts])
    return float(np.polyfit(av, bv, 1)[0])


def rate_probe(reports, sigma_sq=None, details=False):
    """Decay exponent of the distance-to-Gaussian bound in log k.

    For each k-block (at its largest checkpoint t) the moment bound
    stein_tv_bound(m2, gap, sigma_q^2 t) is formed; the returned exponent
    is the least-squares slope of log(bound) against log(log k). Blocks
    whose gap estimate is nonpositive are clamped at their standard error
    (flagged; a warning is emitted), and dropped entirely if that is zero
    too. Fewer than 3 distinct usable k values raises DomainError, so
    duplicated reports cannot stand in for a real sweep.

    sigma_sq defaults to the package's own limit constant for the report's
    (q, H) (deterministic for q = 2, seeded MC otherwise).
    """
    if isinstance(reports, McReport):
        reports = [reports]
    reports = list(reports)
    if not reports:
        raise DomainError("no reports given")
    cfg0 = reports[0].config
    for r in reports:
        if r.config.q != cfg0.q or r.config.h != cfg0.h:
            raise ConfigurationError("rate_probe needs reports with a common (q, H)")
    if sigma_sq is None:
        if cfg0.q == 2:
            sigma_sq = sigma2_squared(cfg0.h).value
        else:
            sigma_sq = sigmaq_squared(
                cfg0.q, cfg0.h, 200_000, derive_seed(cfg0.seed, "rate-sigma")
            ).value
    sigma_sq = float(sigma_sq)
    pts = []
    clamped = []
    for rep in reports:
        for b in rep.blocks:
            t = b.t_list[-1]
            m2 = b.sample_var[-1]
            gap = b.fourth_moment_gap[-1]
            se = b.se_gap[-1]
            flag = gap <= 0.0
            g_eff = gap if gap > 0.0 else se
            if g_eff <= 0.0:
                continue
            bound = stein_tv_bound(m2, g_eff, sigma_sq * t)
            pts.append((b.k, bound, flag))
            if flag:
                clamped.append(b.k)
    distinct = len({k for k, _, _ in pts})
    if distinct < 3:
        raise DomainError(f"need at least 3 distinct usable k values, got {distinct}")
    if clamped:
        warnings.warn(
            f"nonpositive fourth-moment gaps clamped at their standard error for k={clamped}",
            RuntimeWarning,
            stacklevel=2,
        )
    xs = np.array([math.log(math.log(k)) for k, _, _ in pts])
    ys = np.array([math.log(b) for _, b, _ in pts])
    exponent = float(np.polyfit(xs, ys, 1)[0])
    if details:
        return {
            "exponent": exponent,
            "sigma_sq": sigma_sq,
            "points": [{"k": k, "bound": b, "clamped": f} for k, b, f in pts],
        }
    return exponent
