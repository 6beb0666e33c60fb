"""Report flattening and figure rendering.

The CSV layout here is the one documented in docs/formats.md; the clt
subcommand and the report subcommand share it so their delimited outputs
are interchangeable. matplotlib is imported only inside render_report, so
data-only commands never pay for it.
"""

import json
import math
from pathlib import Path

import numpy as np

_REPORT_HEADER = (
    "k", "t", "sample_mean", "se_mean", "sample_var", "se_var",
    "fourth_moment", "se_fourth_moment", "fourth_moment_gap", "se_gap",
    "ks_statistic", "ks_p", "tightness_slope", "snap_error",
)


def report_rows(report):
    """Flatten an McReport into one row per (k, checkpoint)."""
    rows = []
    for b in report.blocks:
        for j, t in enumerate(b.t_list):
            rows.append((
                b.k, t, b.sample_mean[j], b.se_mean[j], b.sample_var[j],
                b.se_var[j], b.fourth_moment[j], b.se_fourth_moment[j],
                b.fourth_moment_gap[j], b.se_gap[j], b.ks_statistic[j],
                b.ks_p[j], b.tightness_slope, b.snap_errors[j],
            ))
    return rows


def _cell(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def report_csv(report):
    lines = [",".join(_REPORT_HEADER)]
    lines.extend(",".join(_cell(c) for c in row) for row in report_rows(report))
    return "\n".join(lines) + "\n"


def winding_stats(z, t1, t2):
    """Variance/covariance summary of winding samples (Z' = term1 - term2)."""
    z = np.asarray(z, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    n = z.size
    zp = t1 - t2
    c1 = t1 - t1.mean()
    c2 = t2 - t2.mean()
    out = {
        "var_z": float(z.var(ddof=1)),
        "se_var_z": float(((z - z.mean()) ** 2).std(ddof=1) / math.sqrt(n)),
        "var_zprime": float(zp.var(ddof=1)),
        "se_var_zprime": float(((zp - zp.mean()) ** 2).std(ddof=1) / math.sqrt(n)),
        "var_term1": float(t1.var(ddof=1)),
        "var_term2": float(t2.var(ddof=1)),
        "cov_terms": float((c1 * c2).sum() / (n - 1)),
        "se_cov_terms": float((c1 * c2).std(ddof=1) / math.sqrt(n)),
    }
    return out


def render_report(report, output_dir):
    """Write report.json, report.csv and the three figures; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    cfg = report.config
    payload = {"schema": "fbmclt/mc-report/v1", "params": cfg.to_dict(),
               "result": report.to_dict()}
    p = outdir / "report.json"
    p.write_text(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n")
    written.append(p)

    p = outdir / "report.csv"
    p.write_text(report_csv(report))
    written.append(p)

    ks = [b.k for b in report.blocks]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for j, t in enumerate(cfg.t_list):
        var = [b.sample_var[j] for b in report.blocks]
        se = [b.se_var[j] for b in report.blocks]
        ax.errorbar(ks, var, yerr=[3 * s for s in se], marker="o", capsize=3,
                    label=f"t = {t:g}")
    ax.set_xscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("sample Var[X_k(t)]")
    ax.set_title(f"Variance approach to the limit (q={cfg.q}, H={cfg.h.h:g})")
    ax.legend()
    fig.tight_layout()
    p = outdir / "var_vs_k.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for j, t in enumerate(cfg.t_list):
        gap = [abs(b.fourth_moment_gap[j]) for b in report.blocks]
        se = [b.se_gap[j] for b in report.blocks]
        ax.errorbar(ks, gap, yerr=[3 * s for s in se], marker="s", capsize=3,
                    label=f"t = {t:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("|m4 - 3 m2^2| of X_k(t)")
    ax.set_title("Fourth-moment gap decay")
    ax.legend()
    fig.tight_layout()
    p = outdir / "gap_vs_k.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for j, t in enumerate(cfg.t_list):
        d = [b.ks_statistic[j] for b in report.blocks]
        ax.plot(ks, d, marker="^", label=f"t = {t:g}")
    from .experiments import ks_critical_value

    ax.axhline(ks_critical_value(cfg.reps, 0.01), linestyle="--", color="gray",
               label="1% critical value")
    ax.set_xscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("KS distance to N(0, Var)")
    ax.set_title("Marginal normality")
    ax.legend()
    fig.tight_layout()
    p = outdir / "ks_vs_k.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    return written
