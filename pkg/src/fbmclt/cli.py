"""Command-line entry point.

Each capability is a subcommand emitting a JSON (default) or CSV report,
plus a one-line human summary. With ``--output`` the report goes to the
file and the summary to stdout; without it the report goes to stdout and
the summary to stderr, so piped output stays machine-readable.

Precedence: command-line flags > config-file keys > built-in defaults.
The config file is TOML; top-level keys apply to every subcommand and a
``[subcommand]`` table overrides them for that subcommand. Every flag can
also be set through an environment variable ``FBMCLT_<SUBCOMMAND>_<FLAG>``.

Reports never embed timestamps, hostnames or thread counts, so a rerun
with the same flags (at any ``--threads``) is byte-identical.

Exit codes: 0 success, 2 usage, 3 domain error, 4 configuration error,
5 numerical/convergence/budget error, 6 I/O error.
"""

import json
import math
import sys
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import reporting
from .errors import ConfigurationError, DomainError, NumericalError, PartialReportError
from .experiments import (
    ExperimentConfig,
    run_experiment,
    simulate_winding_samples,
    simulate_x_samples,
)
from .quadratures import (
    contraction_norm_q2,
    lemma41_integral,
    sigma2_squared,
    sigmaq_squared,
    variance_oracle,
    variance_oracle_mc,
)

_SUBCOMMANDS = ("sigma", "oracle", "simulate", "clt", "lemma41", "contraction", "windings", "report")
_CONTEXT = {"auto_envvar_prefix": "FBMCLT", "help_option_names": ["-h", "--help"]}


def _load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}")
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in data.items() if isinstance(v, dict)}
    unknown = sorted(set(tables) - set(_SUBCOMMANDS))
    if unknown:
        raise ConfigurationError(f"config file {path} has unknown sections: {unknown}")
    return {cmd: {**flat, **tables.get(cmd, {})} for cmd in _SUBCOMMANDS}


@click.group(context_settings=_CONTEXT)
@click.option("--config", "config_path", type=str, default=None,
              help="TOML config file; flags override its keys.")
@click.version_option(package_name="fbmclt", prog_name="fbmclt")
@click.pass_context
def cli(ctx, config_path):
    """Numerical laboratory for scaling limits of iterated fractional integrals."""
    if config_path is not None:
        ctx.default_map = _load_config(config_path)


# shared option decorators, applied bottom-up
_opt_hurst = click.option("--H", "h", type=float, required=True,
                          help="Hurst index, in (1/2, 1).")
_opt_seed = click.option("--seed", type=int, default=0, show_default=True,
                         help="Master seed; all sub-streams derive from it.")
_opt_threads = click.option("--threads", type=int, default=1, show_default=True,
                            help="Worker threads (results do not depend on this).")
_opt_output = click.option("--output", type=str, default=None,
                           help="Report file path (default: stdout).")
_opt_format = click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
                           default="json", show_default=True, help="Report format.")
_opt_scheme = click.option("--scheme", type=click.Choice(["left_point", "trapezoid"]),
                           default="left_point", show_default=True,
                           help="Riemann-sum scheme for the iterated integrals.")
_opt_samples = click.option("--samples", type=int, default=200_000, show_default=True,
                            help="Monte Carlo sample count for quadrature routines.")
_opt_resolution = click.option("--resolution", type=int, default=2048, show_default=True,
                               help="Grid points across the log-time body.")
_opt_warmup = click.option("--warmup", type=int, default=32, show_default=True,
                           help="Extra grid points on (0, 1) anchoring the paths.")


def _emit(kind, params, result, output, fmt, csv_text, summary):
    if fmt == "json":
        payload = {"schema": f"fbmclt/{kind}/v1", "params": params}
        if kind == "quad":
            # quad records are flat: {value, error, n_evals, method, params}
            payload.update(result)
        else:
            payload["result"] = result
        text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    else:
        text = csv_text
    if output is not None:
        Path(output).write_text(text)
        click.echo(summary)
    else:
        click.echo(text, nl=False)
        click.echo(summary, err=True)


def _fmt_cell(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def _csv(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt_cell(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"


def _quad_json(qr):
    """Serialized record: the typed error_estimate field travels as 'error'."""
    return {"value": qr.value, "error": qr.error_estimate,
            "n_evals": qr.n_evals, "method": qr.method}


def _quad_csv(qr):
    return _csv(("value", "error", "n_evals", "method"),
                [(qr.value, qr.error_estimate, qr.n_evals, qr.method)])


@cli.command()
@click.option("--q", type=int, default=2, show_default=True, help="Integral order.")
@_opt_hurst
@click.option("--tol", type=float, default=1e-8, show_default=True,
              help="Relative tolerance (deterministic q = 2 route).")
@_opt_samples
@_opt_seed
@_opt_threads
@_opt_output
@_opt_format
def sigma(q, h, tol, samples, seed, threads, output, fmt):
    """Limit variance constant sigma_q^2(H).

    q = 2 uses adaptive deterministic quadrature controlled by --tol;
    q >= 3 uses seeded importance-sampled Monte Carlo controlled by
    --samples.
    """
    if q == 2:
        qr = sigma2_squared(h, rel_tol=tol)
    else:
        qr = sigmaq_squared(q, h, samples, seed, threads=threads)
    params = {"q": q, "h": h, "tol": tol, "samples": samples, "seed": seed}
    summary = (f"sigma_{q}^2(H={h:g}) = {qr.value:.10g} +/- {qr.error_estimate:.3g} "
               f"[{qr.method}, {qr.n_evals} evals]")
    _emit("quad", params, _quad_json(qr), output, fmt, _quad_csv(qr), summary)


@cli.command()
@click.option("--q", type=int, required=True, help="Integral order (>= 2).")
@_opt_hurst
@click.option("--k", type=float, required=True, help="Scale parameter k (> 1).")
@click.option("--s", type=float, default=None,
              help="First exponent in E[Y(k^s) Y(k^t)] (default: t).")
@click.option("--t", type=float, default=1.0, show_default=True,
              help="Second exponent; requires s <= t.")
@_opt_samples
@_opt_seed
@click.option("--tol", type=float, default=1e-8, show_default=True,
              help="Relative tolerance (deterministic q = 2 route).")
@click.option("--mc", is_flag=True, default=False,
              help="Force the Monte Carlo route even at q = 2.")
@_opt_threads
@_opt_output
@_opt_format
def oracle(q, h, k, s, t, samples, seed, tol, mc, threads, output, fmt):
    """Exact-model moment E[Y(k^s) Y(k^t)] at finite k.

    The default route is deterministic quadrature at q = 2 and Monte
    Carlo above; --mc forces the independent Monte Carlo route at any q,
    which exists precisely to cross-check the deterministic one.
    """
    if s is None:
        s = t
    if mc:
        qr = variance_oracle_mc(q, h, k, s, t, samples, seed, threads=threads)
    else:
        qr = variance_oracle(q, h, k, s, t, n_samples=samples, seed=seed,
                             rel_tol=tol, threads=threads)
    params = {"q": q, "h": h, "k": k, "s": s, "t": t, "samples": samples,
              "seed": seed, "tol": tol, "mc": mc}
    summary = (f"E[Y(k^{s:g}) Y(k^{t:g})] at q={q}, H={h:g}, k={k:g}: "
               f"{qr.value:.10g} +/- {qr.error_estimate:.3g} [{qr.method}]")
    _emit("quad", params, _quad_json(qr), output, fmt, _quad_csv(qr), summary)


@cli.command()
@click.option("--q", type=int, default=2, show_default=True, help="Integral order.")
@_opt_hurst
@click.option("--k", type=float, required=True, help="Scale parameter k (> 1).")
@click.option("--t", "t_list", type=float, multiple=True, default=(1.0,),
              show_default=True, help="Checkpoint exponent; repeatable, increasing.")
@click.option("--reps", type=int, default=1000, show_default=True,
              help="Number of independent replications.")
@_opt_seed
@_opt_scheme
@_opt_resolution
@_opt_warmup
@_opt_threads
@_opt_output
@_opt_format
def simulate(q, h, k, t_list, reps, seed, scheme, resolution, warmup, threads, output, fmt):
    """Simulated samples of Y(k^t) and X_k(t) = Y(k^t)/sqrt(log k)."""
    x, snap = simulate_x_samples(q, h, k, t_list, reps, seed, scheme=scheme,
                                 resolution=resolution, warmup=warmup, threads=threads)
    y = x * math.sqrt(math.log(k))
    params = {"q": q, "h": h, "k": k, "t_list": list(t_list), "reps": reps,
              "seed": seed, "scheme": scheme, "resolution": resolution, "warmup": warmup}
    result = {
        "t_list": list(t_list),
        "snap_errors": list(snap),
        "y": [[float(v) for v in row] for row in y],
        "x": [[float(v) for v in row] for row in x],
    }
    rows = [(r, t_list[j], float(y[r, j]), float(x[r, j]))
            for r in range(x.shape[0]) for j in range(x.shape[1])]
    summary = (f"simulate: {reps} reps of order-{q} integrals at H={h:g}, k={k:g}, "
               f"{len(t_list)} checkpoint(s)")
    _emit("simulate", params, result, output, fmt, _csv(("rep", "t", "y", "x"), rows), summary)


@cli.command()
@click.option("--q", type=int, default=2, show_default=True, help="Integral order.")
@_opt_hurst
@click.option("--k", "k_list", type=float, multiple=True, default=(100.0, 1000.0),
              show_default=True, help="Scale parameter; repeatable, increasing.")
@click.option("--t", "t_list", type=float, multiple=True, default=(0.5, 1.0),
              show_default=True, help="Checkpoint exponent; repeatable, increasing.")
@click.option("--reps", type=int, default=1000, show_default=True,
              help="Replications per k.")
@_opt_seed
@_opt_scheme
@_opt_resolution
@_opt_warmup
@click.option("--budget", type=float, default=None,
              help="Wall-clock budget in seconds; exceeding it between "
                   "k-blocks aborts with the partial report.")
@_opt_threads
@_opt_output
@_opt_format
def clt(q, h, k_list, t_list, reps, seed, scheme, resolution, warmup, budget,
        threads, output, fmt):
    """Full convergence experiment: moments, normality and tightness per k."""
    cfg = ExperimentConfig(q=q, h=h, k_list=k_list, t_list=t_list, reps=reps,
                           seed=seed, scheme=scheme, resolution=resolution, warmup=warmup)
    report = run_experiment(cfg, threads=threads, budget_s=budget)
    summary = (f"clt: {len(report.blocks)} k-block(s) x {len(t_list)} checkpoint(s), "
               f"reps={reps}, q={q}, H={h:g}")
    _emit("mc-report", cfg.to_dict(), report.to_dict(), output, fmt,
          reporting.report_csv(report), summary)


@cli.command()
@_opt_hurst
@click.option("--t", "big_t", type=float, default=1e4, show_default=True,
              help="Upper horizon T of the four-fold singular integral.")
@_opt_samples
@_opt_seed
@_opt_threads
@_opt_output
@_opt_format
def lemma41(h, big_t, samples, seed, threads, output, fmt):
    """Four-fold singular integral over [1/T, 1]^4 that grows like log T."""
    qr = lemma41_integral(big_t, h, samples, seed, threads=threads)
    params = {"h": h, "t": big_t, "samples": samples, "seed": seed}
    ratio = qr.value / math.log(big_t)
    summary = (f"lemma41: integral(T={big_t:g}) = {qr.value:.10g} +/- "
               f"{qr.error_estimate:.3g}, /log T = {ratio:.6g}")
    _emit("quad", params, _quad_json(qr), output, fmt, _quad_csv(qr), summary)


@cli.command()
@_opt_hurst
@click.option("--k", type=float, default=1000.0, show_default=True,
              help="Scale parameter k (> 1).")
@_opt_samples
@_opt_seed
@_opt_threads
@_opt_output
@_opt_format
def contraction(h, k, samples, seed, threads, output, fmt):
    """Contraction norm ||f ox_1 f||^2 at q = 2, by two independent streams.

    Also reports the fourth-moment gap of X_k(1) reconstructed from the
    symmetrized norm via gap = 48 ||f~ ox_1 f~||^2 / (log k)^2.
    """
    unsym, sym = contraction_norm_q2(k, h, samples, seed, threads=threads)
    scale = 48.0 / math.log(k) ** 2
    gap = {"value": scale * sym.value, "error": scale * sym.error_estimate}
    params = {"h": h, "k": k, "samples": samples, "seed": seed}
    result = {"unsym": _quad_json(unsym), "sym": _quad_json(sym),
              "gap_reconstruction": gap}
    rows = [("unsym", unsym.value, unsym.error_estimate, unsym.n_evals, unsym.method),
            ("sym", sym.value, sym.error_estimate, sym.n_evals, sym.method),
            ("gap_reconstruction", gap["value"], gap["error"], None, None)]
    summary = (f"contraction at q=2, H={h:g}, k={k:g}: sym = {sym.value:.10g} "
               f"+/- {sym.error_estimate:.3g}, gap reconstruction = {gap['value']:.6g}")
    _emit("contraction", params, result, output, fmt,
          _csv(("label", "value", "error", "n_evals", "method"), rows), summary)


@cli.command()
@_opt_hurst
@click.option("--t", "t_end", type=float, default=1e4, show_default=True,
              help="Winding horizon t (> 1).")
@click.option("--reps", type=int, default=1000, show_default=True,
              help="Number of independent replications.")
@_opt_seed
@_opt_scheme
@_opt_resolution
@_opt_warmup
@_opt_threads
@_opt_output
@_opt_format
def windings(h, t_end, reps, seed, scheme, resolution, warmup, threads, output, fmt):
    """Variances of the planar winding functionals Z and Z' at horizon t."""
    z, t1, t2 = simulate_winding_samples(h, t_end, reps, seed, scheme=scheme,
                                         resolution=resolution, warmup=warmup,
                                         threads=threads)
    result = reporting.winding_stats(z, t1, t2)
    params = {"h": h, "t": t_end, "reps": reps, "seed": seed, "scheme": scheme,
              "resolution": resolution, "warmup": warmup}
    header = ("var_z", "se_var_z", "var_zprime", "se_var_zprime", "var_term1",
              "var_term2", "cov_terms", "se_cov_terms")
    summary = (f"windings at H={h:g}, t={t_end:g}: var(Z') = {result['var_zprime']:.6g} "
               f"+/- {result['se_var_zprime']:.3g}, var(Z) = {result['var_z']:.6g}, "
               f"cov(terms) = {result['cov_terms']:.3g}")
    _emit("windings", params, result, output, fmt,
          _csv(header, [tuple(result[k] for k in header)]), summary)


@cli.command()
@click.option("--q", type=int, default=2, show_default=True, help="Integral order.")
@_opt_hurst
@click.option("--k", "k_list", type=float, multiple=True, default=(100.0, 1000.0, 10000.0),
              show_default=True, help="Scale parameter; repeatable, increasing.")
@click.option("--t", "t_list", type=float, multiple=True, default=(0.5, 1.0),
              show_default=True, help="Checkpoint exponent; repeatable, increasing.")
@click.option("--reps", type=int, default=1000, show_default=True,
              help="Replications per k.")
@_opt_seed
@_opt_scheme
@_opt_resolution
@_opt_warmup
@click.option("--budget", type=float, default=None,
              help="Wall-clock budget in seconds; on overrun the completed "
                   "blocks are still rendered before the error exit.")
@_opt_threads
@click.option("--output-dir", type=str, required=True,
              help="Directory receiving report.json, report.csv and the figures.")
def report(q, h, k_list, t_list, reps, seed, scheme, resolution, warmup, budget,
           threads, output_dir):
    """Run a clt sweep and render figures next to the delimited output.

    Writes report.json, report.csv, var_vs_k.png, gap_vs_k.png and
    ks_vs_k.png into --output-dir. report.csv is byte-identical to
    `clt --format csv` with the same flags.
    """
    cfg = ExperimentConfig(q=q, h=h, k_list=k_list, t_list=t_list, reps=reps,
                           seed=seed, scheme=scheme, resolution=resolution, warmup=warmup)
    try:
        rep = run_experiment(cfg, threads=threads, budget_s=budget)
    except PartialReportError as exc:
        if exc.partial is not None and exc.partial.blocks:
            reporting.render_report(exc.partial, output_dir)
        raise
    written = reporting.render_report(rep, output_dir)
    click.echo(f"report: wrote {', '.join(sorted(p.name for p in written))} to {output_dir}")


def main(argv=None):
    """Parse argv, dispatch, and return the exit code (no sys.exit)."""
    try:
        cli.main(args=argv, prog_name="fbmclt", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        click.echo(f"{type(exc).__name__}: {exc.format_message()}", err=True)
        return 2
    except click.Abort:
        click.echo("Aborted", err=True)
        return 2
    except DomainError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return 3
    except ConfigurationError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return 4
    except (NumericalError, PartialReportError) as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return 5
    except OSError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return 6
    return 0


def run_cli(argv):
    """Programmatic entry point: run the CLI on argv, return the exit code."""
    return main(list(argv))


if __name__ == "__main__":
    sys.exit(main())
