"""Limit constants and exact second moments, by quadrature and Monte Carlo.

Everything in this module ultimately evaluates integrals of products of
power kernels |x - y|^{2H-2} and the fBm covariance R. The key reduction,
used everywhere, is the closed form

    a_H int_1^r int_1^s |u - v|^{2H-2} du dv = R(r - 1, s - 1),

which removes one singular pair exactly.

Deterministic routes
--------------------
sigma2_squared evaluates

    sigma_2^2 = a_H int_0^1 x^{-2H} R(1, x) (1 - x)^{2H-2} dx

after the two power substitutions x = u^{1/(1-H)} on [0, 1/2] and
1 - x = v^{1/(2H-1)} on [1/2, 1], both of which flatten the worst endpoint
exponent to exactly 0. A second, independent scheme (composite
Gauss-Legendre on dyadic panels with geometric tail extrapolation) guards
the first.

variance_oracle (q = 2) evaluates the exact second moment

    E[Y(k^s) Y(k^t)] = a_H int_1^{k^t} int_1^{k^s}
        (r u)^{-2H} R(r-1, u-1) |r - u|^{2H-2} du dr

with the diagonal substitution w = |r - u|^{2H-1} (the singular factor
integrates away exactly: |r-u|^{2H-2} du = dw / (2H-1)) and a log
substitution on the outer variable.

Monte Carlo routes
------------------
All MC estimators use 64 fixed batches with independent derived streams
(error estimate = batch-means standard error), importance densities whose
singular factors cancel the integrand's singular factors exactly, and
fixed-order reductions, so results are byte-identical for any thread
count. Chains that must be sorted are sampled pairwise-conditionally and
then sorted; the density of the sorted vector is the permutation mixture
sum_pi prod_i p_i(y_{pi(i)}), which keeps every weight bounded (the
identity permutation alone cancels the singular factors).

The 4-d boundary-layer integrals (lemma41_integral, contraction_norm_q2)
are sampled in log coordinates, where the integrand is exactly
scale-invariant along the diagonal and decays exponentially (rate at
least 2 - 2H) transversally, with two power-law ridges handled by
dedicated proposal kernels. For lemma41_integral the diagonal coordinate
is integrated out in closed form (slab thickness max(0, L - spread)), so
at a fixed seed the estimate is pointwise nondecreasing in the horizon.
"""

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy import integrate

from ._parallel import ordered_map
from .errors import ConvergenceError, DomainError, NumericalError
from .fbm import as_hurst, covariance
from .rng import generator

_METHODS = ("adaptive_deterministic", "simplex_mc")
_N_BATCHES = 64
_MAX_MIXTURE_CHAIN = 6  # longest sorted chain given an exact permutation mixture


@dataclass(frozen=True)
class QuadResult:
    """A numeric estimate with an error estimate and bookkeeping."""

    value: float
    error_estimate: float
    n_evals: int
    method: str

    def __post_init__(self):
        if self.method not in _METHODS:
            raise DomainError(f"method must be one of {_METHODS}, got {self.method!r}")
        if not np.isfinite(self.value):
            raise NumericalError(f"non-finite estimate {self.value!r}")
        if not (np.isfinite(self.error_estimate) and self.error_estimate >= 0.0):
            raise NumericalError(f"invalid error estimate {self.error_estimate!r}")
        if int(self.n_evals) <= 0:
            raise NumericalError(f"n_evals must be positive, got {self.n_evals!r}")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "error_estimate", float(self.error_estimate))
        object.__setattr__(self, "n_evals", int(self.n_evals))

    def to_dict(self):
        return {
            "value": self.value,
            "error_estimate": self.error_estimate,
            "n_evals": self.n_evals,
            "method": self.method,
        }


# ---------------------------------------------------------------------------
# sigma_2^2
# ---------------------------------------------------------------------------


def _r1x(x, h):
    """R(1, x) for any x >= 0, cancellation-free and vectorized.

    For x < 1, 1 - (1-x)^{2H} is evaluated as -expm1(2H log1p(-x)), exact
    to machine precision even for x ~ 1e-15 where the direct form loses
    half the digits. For x >= 1 the plain form has no cancellation.
    """
    two_h = 2.0 * h.h
    x = np.asarray(x, dtype=float)
    big = x >= 1.0
    xs = np.where(big, 0.5, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        small_val = 0.5 * (xs**two_h - np.expm1(two_h * np.log1p(-xs)))
    big_val = 0.5 * (1.0 + x**two_h - np.abs(x - 1.0) ** two_h)
    out = np.where(big, big_val, small_val)
    if out.ndim == 0:
        return float(out)
    return out


def _sigma2_raw(x, h):
    """Integrand x^{-2H} R(1,x) (1-x)^{2H-2} without the a_H prefactor."""
    two_h = 2.0 * h.h
    return x ** (-two_h) * _r1x(x, h) * (1.0 - x) ** (two_h - 2.0)


def _sigma2_raw_right(tau, h):
    """Same integrand parameterized by tau = 1 - x.

    Keeps the exact tau in the singular factor; reconstructing tau from
    1 - x would lose it to rounding once x is within an ulp of 1.
    """
    two_h = 2.0 * h.h
    x = 1.0 - tau
    return x ** (-two_h) * _r1x(x, h) * tau ** (two_h - 2.0)


def _sigma2_left(u, h):
    """Left-half integrand after x = u^{1/(1-H)}; smooth at u = 0."""
    p = 1.0 / (1.0 - h.h)
    x = u**p
    if x > 1e-8:
        return p * u ** (p - 1.0) * _sigma2_raw(x, h)
    # series: x^{-2H} R(1,x) = H x^{1-2H} + 1/2 - (a_H/2) x^{2-2H} + O(x^{3-2H});
    # the exponents below come from u^{p-1} x^e = u^{p(e+1)-1} and p(2-2H) = 2
    return p * (
        h.h * u
        + 0.5 * u ** (p - 1.0)
        - 0.5 * h.alpha_h * u ** (p * (3.0 - 2.0 * h.h) - 1.0)
    )


def _sigma2_right(v, h):
    """Right-half integrand after 1 - x = v^{1/(2H-1)}; smooth at v = 0."""
    pp = 1.0 / (2.0 * h.h - 1.0)
    x = 1.0 - v**pp
    return pp * x ** (-2.0 * h.h) * _r1x(x, h)


def sigma2_squared(h, rel_tol=1e-8):
    """The order-2 limit variance constant sigma_2^2(H).

    Adaptive quadrature on the two substituted halves; raises
    ConvergenceError (with the best estimate attached) if the reported
    error exceeds rel_tol times the value.
    """
    hh = as_hurst(h)
    rel_tol = float(rel_tol)
    if not 1e-12 <= rel_tol <= 1e-2:
        raise DomainError(f"rel_tol must lie in [1e-12, 1e-2], got {rel_tol!r}")
    u_max = 0.5 ** (1.0 - hh.h)
    v_max = 0.5 ** (2.0 * hh.h - 1.0)
    left = integrate.quad(
        _sigma2_left, 0.0, u_max, args=(hh,), epsabs=0.0, epsrel=rel_tol / 8.0,
        limit=200, full_output=1,
    )
    right = integrate.quad(
        _sigma2_right, 0.0, v_max, args=(hh,), epsabs=0.0, epsrel=rel_tol / 8.0,
        limit=200, full_output=1,
    )
    value = hh.alpha_h * (left[0] + right[0])
    err = hh.alpha_h * (left[1] + right[1])
    n_evals = int(left[2]["neval"] + right[2]["neval"])
    result = QuadResult(value=value, error_estimate=err, n_evals=n_evals,
                        method="adaptive_deterministic")
    if err > rel_tol * abs(value):
        raise ConvergenceError(
            f"sigma_2^2 quadrature error {err:.3e} exceeds {rel_tol:.1e} * {value:.6e}",
            best=result,
        )
    return result


def _sigma2_dyadic(h, n_panels=240, n_nodes=16):
    """Independent sigma_2^2 scheme: Gauss-Legendre on dyadic panels.

    Panels halve toward each endpoint; the two un-covered tails are summed
    by geometric extrapolation with the known leading exponents (panel
    ratio 2^{-(2-2H)} at x = 0 and 2^{-(2H-1)} at x = 1). Used as the
    second route of the dual-method check; shares no code path with
    sigma2_squared beyond the raw integrand.
    """
    hh = as_hurst(h)
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)

    def panel_sums(transform):
        # integral over [c 2^{-j-1}, c 2^{-j}], j = 0..n_panels-1, c = 1/2
        edges_hi = 0.5 ** (np.arange(n_panels) + 1.0)
        edges_lo = edges_hi / 2.0
        mid = 0.5 * (edges_hi + edges_lo)
        half = 0.5 * (edges_hi - edges_lo)
        x = mid[:, None] + half[:, None] * nodes[None, :]
        vals = transform(x)
        return half * (vals @ weights)

    left = panel_sums(lambda x: _sigma2_raw(x, hh))
    right = panel_sums(lambda tau: _sigma2_raw_right(tau, hh))
    rho_left = 2.0 ** -(2.0 - 2.0 * hh.h)
    rho_right = 2.0 ** -(2.0 * hh.h - 1.0)
    tail_left = left[-1] * rho_left / (1.0 - rho_left)
    tail_right = right[-1] * rho_right / (1.0 - rho_right)
    return hh.alpha_h * (left.sum() + right.sum() + tail_left + tail_right)


# ---------------------------------------------------------------------------
# shared MC machinery
# ---------------------------------------------------------------------------

_FACT = [math.factorial(i) for i in range(12)]


def _batch_means(batch_fn, n_samples, seed, label, threads=1):
    """Mean and batch-means standard error over 64 derived streams.

    n_samples is rounded down to a multiple of 64. Batch b draws from
    stream (seed, label, b); the reduction order is fixed, so the result
    does not depend on the thread count.
    """
    per = int(n_samples) // _N_BATCHES
    if per < 1:
        raise DomainError(f"n_samples must be at least {_N_BATCHES}, got {n_samples!r}")
    means = ordered_map(
        lambda b: batch_fn(generator(seed, label, b), per), range(_N_BATCHES), threads
    )
    means = np.asarray(means, dtype=float)
    if not np.all(np.isfinite(means)):
        raise NumericalError(f"non-finite Monte Carlo batch means in stream {label!r}")
    value = float(means.mean())
    err = float(means.std(ddof=1) / np.sqrt(_N_BATCHES))
    return value, err, per * _N_BATCHES


def _near_total(x, lo, hi, p):
    """Normalizer int_lo^hi |x - y|^{p-1} dy (p = 2H - 1)."""
    dl_hi = np.clip(x - lo, 0.0, None)
    dl_lo = np.clip(x - hi, 0.0, None)
    dr_hi = np.clip(hi - x, 0.0, None)
    dr_lo = np.clip(lo - x, 0.0, None)
    return (dl_hi**p - dl_lo**p + dr_hi**p - dr_lo**p) / p


def _draw_near(g, x, lo, hi, p):
    """y on [lo, hi] with density |x - y|^{p-1} / normalizer, elementwise.

    Exact inverse transform: the side is picked by its mass, the distance
    by uniformity of D^p. Draws avoid y = x exactly (the magnitude uses
    1 - U in (0, 1]). Returns (y, density_at_y).
    """
    dl_hi = np.clip(x - lo, 0.0, None)
    dl_lo = np.clip(x - hi, 0.0, None)
    dr_hi = np.clip(hi - x, 0.0, None)
    dr_lo = np.clip(lo - x, 0.0, None)
    ml = (dl_hi**p - dl_lo**p) / p
    mr = (dr_hi**p - dr_lo**p) / p
    tot = ml + mr
    go_left = g.random(np.shape(x)) * tot < ml
    u = 1.0 - g.random(np.shape(x))
    wl = (dl_lo**p + u * (dl_hi**p - dl_lo**p)) ** (1.0 / p)
    wr = (dr_lo**p + u * (dr_hi**p - dr_lo**p)) ** (1.0 / p)
    y = np.where(go_left, x - wl, x + wr)
    dens = np.abs(x - y) ** (p - 1.0) / tot
    return y, dens


def _sorted_pair_mixture(xs, ys_sorted, tot, p):
    """Density of the sorted vector of pairwise-conditional draws.

    ys_sorted are the order statistics of independent y_i ~ |x_i - y|^{p-1}/tot_i.
    The density at the sorted point is sum over permutations pi of
    prod_i p_i(y_{pi(i)}).
    """
    m, c = xs.shape
    if c > _MAX_MIXTURE_CHAIN:
        raise DomainError(f"permutation mixture supports chains up to {_MAX_MIXTURE_CHAIN}")
    pair = np.abs(xs[:, :, None] - ys_sorted[:, None, :]) ** (p - 1.0) / tot[:, :, None]
    out = np.zeros(m)
    rows = np.arange(c)
    for pi in permutations(range(c)):
        out += np.prod(pair[:, rows, pi], axis=1)
    return out


# ---------------------------------------------------------------------------
# sigma_q^2 for q >= 3
# ---------------------------------------------------------------------------


def _sigmaq_batch(g, m, q, hh):
    h = hh.h
    p = 2.0 * h - 1.0
    mc = q - 2
    # outer variable: two-half power mixture matching both endpoint rates
    m0 = 0.5 ** (1.0 - h) / (1.0 - h)
    m1 = 0.5**p / p
    left = g.random(m) * (m0 + m1) < m0
    mag = 1.0 - g.random(m)
    xq = np.where(left, 0.5 * mag ** (1.0 / (1.0 - h)), 1.0 - 0.5 * mag ** (1.0 / p))
    dens_xq = np.where(left, xq ** -h, (1.0 - xq) ** (p - 1.0)) / (m0 + m1)

    xs = np.sort(g.random((m, mc)), axis=1) * xq[:, None]
    dens_xchain = _FACT[mc] / xq**mc

    if mc <= _MAX_MIXTURE_CHAIN:
        ys_raw, _ = _draw_near(g, xs, 0.0, 1.0, p)
        ys = np.sort(ys_raw, axis=1)
        tot = _near_total(xs, 0.0, 1.0, p)
        dens_ychain = _sorted_pair_mixture(xs, ys, tot, p)
    else:
        # long chains: plain sorted uniforms (heavier-tailed weights)
        ys = np.sort(g.random((m, mc)), axis=1)
        dens_ychain = np.full(m, float(_FACT[mc]))

    pair_prod = np.prod(np.abs(xs - ys) ** (p - 1.0), axis=1)
    f = (
        hh.alpha_h ** (q - 1)
        * xq ** (-q * h)
        * (1.0 - xq) ** (p - 1.0)
        * covariance(xs[:, 0], ys[:, 0], hh)
        * pair_prod
    )
    w = f / (dens_xq * dens_xchain * dens_ychain)
    return w.mean()


def sigmaq_squared(q, h, n_samples, seed, threads=1):
    """The order-q limit variance constant sigma_q^2(H), q >= 3, by MC.

    sigma_q^2 = a_H^{q-1} int_0^1 dx_q x_q^{-qH} (1-x_q)^{2H-2}
                int_M R(x_2, y_2) prod_{i=2}^{q-1} |x_i - y_i|^{2H-2},
    M = {0 <= x_2 < ... < x_{q-1} < x_q} x {0 <= y_2 < ... < y_{q-1} <= 1}.

    The importance design keeps every weight bounded (outer density
    matches both endpoint rates; each |x_i - y_i| factor is cancelled by
    its pairwise-conditional density through the sorted-vector mixture),
    so the batch-means error estimate is trustworthy for all H.
    """
    if int(q) != q or q < 3:
        raise DomainError(f"q must be an integer >= 3, got {q!r}")
    q = int(q)
    if int(n_samples) < 10_000:
        raise DomainError(f"n_samples must be >= 10000, got {n_samples!r}")
    hh = as_hurst(h)
    value, err, n_used = _batch_means(
        lambda g, m: _sigmaq_batch(g, m, q, hh), n_samples, seed, "sigmaq", threads
    )
    return QuadResult(value=value, error_estimate=err, n_evals=n_used, method="simplex_mc")


def _sigma3_deterministic(h, rel_tol=1e-7):
    """sigma_3^2 by nested deterministic quadrature (3-d), as an oracle.

    Outer x3 uses the same two endpoint substitutions as sigma_2^2; the
    inner y2 integral removes its |x2 - y2| singularity with the
    w = D^{2H-1} substitution. Slow but independent of the MC route.
    """
    hh = as_hurst(h)
    h_, a_h = hh.h, hh.alpha_h
    p = 2.0 * h_ - 1.0
    evals = [0]

    def inner_y(x2):
        # int_0^1 R(x2, y) |x2 - y|^{2H-2} dy
        def phi(y):
            evals[0] += 1
            return covariance(x2, y, hh)

        total = 0.0
        if x2 > 0.0:
            total += integrate.quad(
                lambda w: phi(x2 - w ** (1.0 / p)), 0.0, x2**p,
                epsabs=0.0, epsrel=rel_tol / 100.0, limit=100, full_output=1,
            )[0] / p
        if x2 < 1.0:
            total += integrate.quad(
                lambda w: phi(x2 + w ** (1.0 / p)), 0.0, (1.0 - x2) ** p,
                epsabs=0.0, epsrel=rel_tol / 100.0, limit=100, full_output=1,
            )[0] / p
        return total

    def mid_x2(x3):
        return integrate.quad(
            inner_y, 0.0, x3, epsabs=0.0, epsrel=rel_tol / 10.0, limit=100, full_output=1
        )[0]

    def outer_raw(x3):
        return x3 ** (-3.0 * h_) * (1.0 - x3) ** (p - 1.0) * mid_x2(x3)

    pw = 1.0 / (1.0 - h_)

    def outer_left(u):
        x3 = u**pw
        return pw * u ** (pw - 1.0) * outer_raw(x3)

    ppw = 1.0 / p

    def outer_right(v):
        x3 = 1.0 - v**ppw
        # the (1-x3)^{2H-2} factor cancels against the substitution exactly
        return ppw * x3 ** (-3.0 * h_) * mid_x2(x3)

    left = integrate.quad(outer_left, 0.0, 0.5 ** (1.0 - h_),
                          epsabs=0.0, epsrel=rel_tol, limit=200, full_output=1)
    right = integrate.quad(outer_right, 0.0, 0.5**p,
                           epsabs=0.0, epsrel=rel_tol, limit=200, full_output=1)
    value = a_h**2 * (left[0] + right[0])
    err = a_h**2 * (left[1] + right[1]) + rel_tol * abs(value)
    return QuadResult(value=value, error_estimate=err, n_evals=max(evals[0], 1),
                      method="adaptive_deterministic")


# ---------------------------------------------------------------------------
# exact finite-k second moments
# ---------------------------------------------------------------------------


def _oracle_q2(hh, k, s, t, rel_tol):
    h_, a_h = hh.h, hh.alpha_h
    p = 2.0 * h_ - 1.0
    k_t = k**t
    k_s = k**s
    evals = [0]

    def inner(r):
        # int_1^{k_s} sig^{-2H} R(r-1, sig-1) |r-sig|^{2H-2} dsig
        def phi(sig):
            evals[0] += 1
            return sig ** (-2.0 * h_) * covariance(r - 1.0, sig - 1.0, hh)

        total = 0.0
        lo = max(r - k_s, 0.0)
        hi = r - 1.0
        if hi > lo:
            total += integrate.quad(
                lambda w: phi(r - w ** (1.0 / p)), lo**p, hi**p,
                epsabs=0.0, epsrel=rel_tol / 100.0, limit=100, full_output=1,
            )[0] / p
        if k_s > r:
            total += integrate.quad(
                lambda w: phi(r + w ** (1.0 / p)), 0.0, (k_s - r) ** p,
                epsabs=0.0, epsrel=rel_tol / 100.0, limit=100, full_output=1,
            )[0] / p
        return total

    def outer(a):
        r = math.exp(a)
        return math.exp(a * (1.0 - 2.0 * h_)) * inner(r)

    res = integrate.quad(outer, 0.0, math.log(k_t),
                         epsabs=0.0, epsrel=rel_tol, limit=200, full_output=1)
    value = a_h * res[0]
    err = a_h * res[1] + 10.0 * rel_tol / 100.0 * abs(value)  # inner tolerance folded in
    result = QuadResult(value=value, error_estimate=err, n_evals=max(evals[0], 1),
                        method="adaptive_deterministic")
    if err > max(rel_tol * 10.0 * abs(value), 1e-300):
        raise ConvergenceError(
            f"second-moment quadrature error {err:.3e} too large for value {value:.6e}",
            best=result,
        )
    return result


def _oracle_mc_batch(g, m, q, hh, k, s, t):
    h_ = hh.h
    p = 2.0 * h_ - 1.0
    k_t = k**t
    k_s = k**s
    log_kt = math.log(k_t)
    mc = q - 2

    rq = np.exp((1.0 - g.random(m)) * log_kt)  # log-uniform on (1, k^t]
    dens_rq = 1.0 / (rq * log_kt)
    sq, dens_sq = _draw_near(g, rq, 1.0, k_s, p)

    if mc > 0:
        rs = 1.0 + np.sort(g.random((m, mc)), axis=1) * (rq[:, None] - 1.0)
        dens_rchain = _FACT[mc] / (rq - 1.0) ** mc
        ss_raw, _ = _draw_near(g, rs, 1.0, sq[:, None], p)
        ss = np.sort(ss_raw, axis=1)
        tot = _near_total(rs, 1.0, sq[:, None], p)
        dens_schain = _sorted_pair_mixture(rs, ss, tot, p)
        pair_prod = np.prod(np.abs(rs - ss) ** (p - 1.0), axis=1)
        r_factor = covariance(rs[:, 0] - 1.0, ss[:, 0] - 1.0, hh)
    else:
        dens_rchain = np.ones(m)
        dens_schain = np.ones(m)
        pair_prod = np.ones(m)
        r_factor = covariance(rq - 1.0, sq - 1.0, hh)

    f = (
        hh.alpha_h ** (q - 1)
        * (rq * sq) ** (-q * h_)
        * r_factor
        * pair_prod
        * np.abs(rq - sq) ** (p - 1.0)
    )
    w = f / (dens_rq * dens_sq * dens_rchain * dens_schain)
    return w.mean()


def variance_oracle(q, h, k, s, t, n_samples=200_000, seed=0, rel_tol=1e-8, threads=1):
    """Exact E[Y(k^s) Y(k^t)] for the order-q rescaled iterated integral.

    Deterministic nested quadrature for q = 2; simplex MC (pairwise
    importance, batch means) for q >= 3. Returns 0 when k^s <= 1 (empty
    integration region). Requires s <= t.
    """
    if int(q) != q or q < 2:
        raise DomainError(f"q must be an integer >= 2, got {q!r}")
    q = int(q)
    hh = as_hurst(h)
    k = float(k)
    if not np.isfinite(k) or k <= 1.0:
        raise DomainError(f"k must exceed 1, got {k!r}")
    s = float(s)
    t = float(t)
    if s > t:
        raise DomainError(f"need s <= t, got s={s!r} > t={t!r}")
    if k**s <= 1.0:
        return QuadResult(value=0.0, error_estimate=0.0, n_evals=1,
                          method="adaptive_deterministic" if q == 2 else "simplex_mc")
    if q == 2:
        return _oracle_q2(hh, k, s, t, rel_tol)
    value, err, n_used = _batch_means(
        lambda g, m: _oracle_mc_batch(g, m, q, hh, k, s, t),
        n_samples, seed, "oracle", threads,
    )
    return QuadResult(value=value, error_estimate=err, n_evals=n_used, method="simplex_mc")


def variance_oracle_mc(q, h, k, s, t, n_samples, seed, threads=1):
    """Simplex-MC estimate of E[Y(k^s) Y(k^t)] for any q >= 2.

    For q = 2 this is the independent cross-check of the deterministic
    route (the dual-method pair is never collapsed into one code path).
    """
    if int(q) != q or q < 2:
        raise DomainError(f"q must be an integer >= 2, got {q!r}")
    q = int(q)
    hh = as_hurst(h)
    k = float(k)
    if not np.isfinite(k) or k <= 1.0:
        raise DomainError(f"k must exceed 1, got {k!r}")
    s = float(s)
    t = float(t)
    if s > t:
        raise DomainError(f"need s <= t, got s={s!r} > t={t!r}")
    if k**s <= 1.0:
        return QuadResult(value=0.0, error_estimate=0.0, n_evals=1, method="simplex_mc")
    value, err, n_used = _batch_means(
        lambda g, m: _oracle_mc_batch(g, m, q, hh, k, s, t),
        n_samples, seed, "oracle-mc", threads,
    )
    return QuadResult(value=value, error_estimate=err, n_evals=n_used, method="simplex_mc")


# ---------------------------------------------------------------------------
# 4-d boundary-layer integrals in log coordinates
# ---------------------------------------------------------------------------


def _laplace_sample(g, m, beta):
    mag = g.standard_exponential(m) / beta
    sign = np.where(g.random(m) < 0.5, -1.0, 1.0)
    z = sign * mag
    dens = 0.5 * beta * np.exp(-beta * np.abs(z))
    return z, dens


def _ridge_sample(g, m, p, beta):
    """Offset with density prop. to |z|^{p-1} on |z| <= 1, exp tail beyond."""
    mass_in = 1.0 / p
    mass_out = 1.0 / beta
    pick_out = g.random(m) * (mass_in + mass_out) >= mass_in
    mag_in = (1.0 - g.random(m)) ** (1.0 / p)
    mag_out = 1.0 + g.standard_exponential(m) / beta
    mag = np.where(pick_out, mag_out, mag_in)
    sign = np.where(g.random(m) < 0.5, -1.0, 1.0)
    z = sign * mag
    norm = 2.0 * (mass_in + mass_out)
    dens = np.where(np.abs(z) <= 1.0, np.abs(z) ** (p - 1.0), np.exp(-beta * (np.abs(z) - 1.0))) / norm
    return z, dens


def _lemma41_batch(g, m, hh, big_l, beta):
    h_ = hh.h
    p = 2.0 * h_ - 1.0
    dl, p1 = _laplace_sample(g, m, beta)
    z1, p2 = _ridge_sample(g, m, p, beta)
    z2, p3 = _ridge_sample(g, m, p, beta)
    o1 = dl
    o2 = z1
    o3 = dl + z2
    spread = np.maximum(np.maximum(o1, o2), np.maximum(o3, 0.0)) - np.minimum(
        np.minimum(o1, o2), np.minimum(o3, 0.0)
    )
    thickness = np.clip(big_l - spread, 0.0, None)
    out = np.zeros(m)
    mask = thickness > 0.0
    if np.any(mask):
        a1, a2, a3 = o1[mask], o2[mask], o3[mask]
        y = np.exp(-a1)
        u = np.exp(-a2)
        v = np.exp(-a3)
        # |1-u| and |y-v| via expm1 (exact near the ridges)
        du = np.abs(np.expm1(-a2))
        dv = y * np.abs(np.expm1(a1 - a3))
        f = (
            (y * u * v) ** (1.0 - 2.0 * h_)
            * _r1x(y, hh)
            * covariance(u, v, hh)
            * du ** (p - 1.0)
            * dv ** (p - 1.0)
        )
        out[mask] = f * thickness[mask] / (p1 * p2 * p3)[mask]
    return out.mean()


def lemma41_integral(big_t, h, n_samples, seed, threads=1):
    """The 4-d boundary-layer integral over [1/T, 1]^4,

        int (xyuv)^{-2H} R(x,y) R(u,v) |x-u|^{2H-2} |y-v|^{2H-2},

    which grows like log T. Importance MC in log coordinates with the
    diagonal integrated out exactly; at a fixed seed the estimate is
    pointwise nondecreasing in T.
    """
    big_t = float(big_t)
    if not np.isfinite(big_t) or big_t <= 1.0:
        raise DomainError(f"horizon must exceed 1, got {big_t!r}")
    hh = as_hurst(h)
    big_l = math.log(big_t)
    beta = 1.0 - hh.h  # half the slowest transverse decay rate 2 - 2H
    value, err, n_used = _batch_means(
        lambda g, m: _lemma41_batch(g, m, hh, big_l, beta),
        n_samples, seed, "lemma41", threads,
    )
    return QuadResult(value=value, error_estimate=err, n_evals=n_used, method="simplex_mc")


def _contraction_batch(g, m, hh, big_l, beta):
    h_ = hh.h
    p = 2.0 * h_ - 1.0
    a = g.random(m) * big_l
    dl, p1 = _laplace_sample(g, m, beta)
    z1, p2 = _ridge_sample(g, m, p, beta)
    z2, p3 = _ridge_sample(g, m, p, beta)
    o1 = z1          # log s - log r   (singular pair r, s)
    o2 = dl          # log u - log r   (smooth pair r, u)
    o3 = dl + z2     # log v - log r   (singular pair u, v)
    b = a + o1
    c = a + o2
    d = a + o3
    inside = (b >= 0) & (b <= big_l) & (c >= 0) & (c <= big_l) & (d >= 0) & (d <= big_l)
    out = np.zeros(m)
    if np.any(inside):
        aa, bb, cc, dd = a[inside], b[inside], c[inside], d[inside]
        r = np.exp(aa)
        sv = np.exp(bb)
        u = np.exp(cc)
        v = np.exp(dd)
        drs = r * np.abs(np.expm1(bb - aa))
        duv = u * np.abs(np.expm1(dd - cc))
        f = (
            (r * sv * u * v) ** (1.0 - 2.0 * h_)
            * covariance(r - 1.0, u - 1.0, hh)
            * covariance(sv - 1.0, v - 1.0, hh)
            * drs ** (p - 1.0)
            * duv ** (p - 1.0)
        )
        out[inside] = f * big_l / (p1 * p2 * p3)[inside]
    return out.mean()


def contraction_norm_q2(k, h, n_samples, seed, threads=1):
    """Squared order-1 contraction norm of the order-2 kernel at level k.

    Returns (plain, symmetrized). For order 2 the contraction of the
    symmetrized kernel is itself symmetric, so the two values estimate the
    same integral; they are computed from independent streams and differ
    only by Monte Carlo noise. Both equal (a_H^2 / 8) J with

        J = int_{[1,k]^4} (rsuv)^{-2H} R(r-1,u-1) R(s-1,v-1)
            |r-s|^{2H-2} |u-v|^{2H-2}.

    The fourth-moment gap of X_k(1) equals 48 * (this) / (log k)^2.
    """
    k = float(k)
    if not np.isfinite(k) or k <= 1.0:
        raise DomainError(f"k must exceed 1, got {k!r}")
    hh = as_hurst(h)
    big_l = math.log(k)
    beta = 1.0 - hh.h
    scale = hh.alpha_h**2 / 8.0
    out = []
    for label in ("contraction-unsym", "contraction-sym"):
        value, err, n_used = _batch_means(
            lambda g, m: _contraction_batch(g, m, hh, big_l, beta),
            n_samples, seed, label, threads,
        )
        out.append(
            QuadResult(value=scale * value, error_estimate=scale * err,
                       n_evals=n_used, method="simplex_mc")
        )
    return tuple(out)
