"""Command-line front end.

Subcommands: ``estimate-rates``, ``analyze``, ``simulate``, ``compare``
and ``statespace``.  ``--config`` takes a YAML configuration file or
``reference:N:M`` for the built-in reference scenario.

Exit codes: 0 success, 2 usage or configuration error, 3 solver or
expansion failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import MeetingRates, NetworkConfig
from .csvio import write_csv, write_curve
from .errors import ConfigError, EpidtnError, StateBudgetExceeded, TooFewSamples
from .models import build_folded, build_monolithic
from .srn import expand_reachability
from .srn.expand import DEFAULT_MAX_STATES

log = logging.getLogger("epidtn")

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 2, 3
ANALYTIC_ENGINES = ("mono", "folded", "ode")
ENGINES = (*ANALYTIC_ENGINES, "sim")
SUMMARY_HEADER = ("engine", "N", "M", "delay", "delay_hw", "transmissions", "transmissions_hw",
                  "states", "transitions", "runs")


class UsageError(Exception):
    pass


# ----------------------------------------------------------------------------
# argument helpers
# ----------------------------------------------------------------------------


def load_config(spec: str) -> NetworkConfig:
    """Configuration from a YAML file or ``reference:N:M``."""
    if spec.startswith("reference:"):
        try:
            _, n, m = spec.split(":")
            return NetworkConfig.reference(int(n), int(m))
        except ValueError:
            raise UsageError(f"expected reference:N:M, got {spec!r}") from None
    if not Path(spec).is_file():
        raise UsageError(f"configuration file {spec!r} not found")
    return NetworkConfig.load(spec)


def parse_grid(spec: str | None) -> list[float] | None:
    """``start:stop:step`` (stop inclusive) to a strictly increasing grid."""
    if spec is None:
        return None
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise UsageError(f"--cdf-grid expects start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start or start < 0:
        raise UsageError("--cdf-grid needs 0 <= start <= stop and step > 0")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def _seeds(seed: int | None) -> tuple[int, int]:
    """Independent sub-seeds for rate estimation and simulation."""
    a, b = np.random.SeedSequence(seed).generate_state(2)
    return int(a), int(b)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _rates(args, cfg: NetworkConfig, out: Path | None) -> MeetingRates:
    """Rates from ``--rates``, or estimated once and saved next to the outputs."""
    if args.rates:
        rates = MeetingRates.load(args.rates)
        rates.check_for(cfg)
        return rates
    from .mobility import estimate_rates

    log.info("estimating meeting rates with %d runs per experiment", args.rate_runs)
    rates = estimate_rates(cfg, args.rate_runs, seed=_seeds(args.seed)[0])
    if out is not None:
        rates.dump(out / "rates.csv")
    return rates


# ----------------------------------------------------------------------------
# engines
# ----------------------------------------------------------------------------


def _expand(engine: str, cfg: NetworkConfig, rates: MeetingRates, max_states: int | None):
    build = build_monolithic if engine == "mono" else build_folded
    try:
        return expand_reachability(build(cfg, rates), max_states=max_states)
    except StateBudgetExceeded as exc:
        hint = " (try --engine folded or --engine ode)" if engine == "mono" else " (try --engine ode)"
        raise StateBudgetExceeded(f"{exc}{hint}") from exc


def run_engine(engine: str, cfg: NetworkConfig, rates: MeetingRates, args,
               grid: list[float] | None) -> tuple[dict, list[tuple[float, float]] | None]:
    """Evaluate one engine; returns a summary row and the CDF (if a grid is given)."""
    row = dict.fromkeys(SUMMARY_HEADER)
    row.update(engine=engine, N=cfg.N, M=cfg.M)
    cdf = None
    if engine in ("mono", "folded"):
        from .solve import delivery_cdf, mtta

        ctmc = _expand(engine, cfg, rates, args.max_states)
        res = mtta(ctmc, "transmissions")
        row.update(delay=res.mtta, transmissions=res.limit_reward,
                   states=ctmc.n_states, transitions=ctmc.n_transitions)
        if grid:
            cdf = delivery_cdf(ctmc, grid)
    elif engine == "ode":
        from .ode import integrate, ode_delay

        row["delay"] = ode_delay(cfg, rates)
        if grid:
            traj = integrate(cfg, rates, t_max=max(grid))
            frac = (traj.total_infected - 1.0) / (cfg.M - 1)
            cdf = [(t, float(np.clip(np.interp(t, traj.t, frac), 0.0, 1.0))) for t in grid]
    elif engine == "sim":
        from .mobility import simulate
        from .stats import EmpiricalCdf, mean_half_width

        batch = simulate(cfg, args.runs, tx_delay=args.tx_delay, seed=_seeds(args.seed)[1])
        d, dhw = mean_half_width(batch.delays)
        k, khw = mean_half_width(batch.transmissions)
        row.update(delay=d, delay_hw=dhw, transmissions=k, transmissions_hw=khw, runs=len(batch))
        if grid:
            cdf = EmpiricalCdf(batch.delays).curve(grid)
        row["_batch"] = batch
    else:
        raise UsageError(f"unknown engine {engine!r}")
    return row, cdf


def _summary_rows(rows: Sequence[dict]):
    return ([r.get(k) for k in SUMMARY_HEADER] for r in rows)


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_estimate_rates(args) -> int:
    from .mobility import estimate_rates

    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    cfg = load_config(args.config)
    rates = estimate_rates(cfg, args.runs, seed=_seeds(args.seed)[0])
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    rates.dump(out)
    print(f"lambda={rates.lam:.6g} mu={rates.mu:.6g} gamma={rates.gamma:.6g} "
          f"eta={rates.eta:.6g} (eta for {rates.eta_n} local nodes) -> {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.engine not in ANALYTIC_ENGINES:
        raise UsageError(f"analyze supports engines {ANALYTIC_ENGINES}; use 'simulate' for sim")
    cfg = load_config(args.config)
    grid = parse_grid(args.cdf_grid)
    out = _out_dir(args.out)
    rates = _rates(args, cfg, out)
    row, cdf = run_engine(args.engine, cfg, rates, args, grid)
    write_csv(out / "summary.csv", SUMMARY_HEADER, _summary_rows([row]))
    if cdf is not None:
        write_curve(out / "cdf.csv", cdf)
    print(f"{args.engine}: delay={row['delay']:.6g}"
          + (f" transmissions={row['transmissions']:.6g}" if row["transmissions"] is not None else "")
          + (f" states={row['states']}" if row["states"] is not None else ""))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .stats import EmpiricalCdf, chi_square_uniform_discrete, histogram, write_reports

    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    cfg = load_config(args.config)
    grid = parse_grid(args.cdf_grid)
    out = _out_dir(args.out)
    row, _ = run_engine("sim", cfg, None, args, None)
    batch = row.pop("_batch")
    batch.to_csv(out / "runs.csv")
    ci_defined = len(batch) > 1
    if not ci_defined:
        log.warning("a single run gives no confidence interval")
    write_csv(out / "summary.csv", (*SUMMARY_HEADER, "ci_defined"),
              [[*next(_summary_rows([row])), ci_defined]])
    if grid is None:
        grid = list(np.linspace(0.0, float(batch.delays.max()), 201))
    write_curve(out / "cdf.csv", EmpiricalCdf(batch.delays).curve(grid))
    if cfg.M > 2:
        try:
            report = chi_square_uniform_discrete(histogram(batch.transmissions, cfg.M - 1))
            write_reports(out / "chi_square.csv", [report])
        except TooFewSamples as exc:
            log.warning("uniformity test skipped: %s", exc)
    print(f"sim: runs={len(batch)} delay={row['delay']:.6g} transmissions={row['transmissions']:.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .stats import percent_error

    engines = [e.strip() for e in args.engines.split(",") if e.strip()]
    if len(engines) < 2 or len(set(engines)) != len(engines):
        raise UsageError("--engines needs at least two distinct engines")
    for e in engines:
        if e not in ENGINES:
            raise UsageError(f"unknown engine {e!r}; choose from {ENGINES}")
    if args.reference not in engines:
        raise UsageError(f"reference engine {args.reference!r} is not among --engines")
    cfg = load_config(args.config)
    out = _out_dir(args.out)
    rates = _rates(args, cfg, out) if set(engines) & set(ANALYTIC_ENGINES) else None
    rows = {}
    for e in engines:
        rows[e], _ = run_engine(e, cfg, rates, args, None)
        rows[e].pop("_batch", None)
    ref = rows[args.reference]

    def pe(v, r):
        return None if v is None or r is None else percent_error(v, r)

    header = (*SUMMARY_HEADER, "pe_delay", "pe_transmissions")
    table = [[*next(_summary_rows([r])), pe(r["delay"], ref["delay"]),
              pe(r["transmissions"], ref["transmissions"])] for r in rows.values()]
    write_csv(out / "comparison.csv", header, table)
    for e, r in rows.items():
        print(f"{e}: delay={r['delay']:.6g} PE={pe(r['delay'], ref['delay']):.3f}%")
    return EXIT_OK


def cmd_statespace(args) -> int:
    if args.engine not in ("mono", "folded"):
        raise UsageError("statespace supports engines mono and folded")
    cfg = load_config(args.config)
    # state counts do not depend on rate values
    rates = MeetingRates(1.0, 1.0, 1.0, 2.0)
    ctmc = _expand(args.engine, cfg, rates, args.max_states)
    print(f"{args.engine} N={cfg.N} M={cfg.M}: {ctmc.n_states} states, {ctmc.n_transitions} transitions")
    if args.out:
        out = _out_dir(args.out)
        write_csv(out / "statespace.csv", ("engine", "N", "M", "states", "transitions"),
                  [(args.engine, cfg.N, cfg.M, ctmc.n_states, ctmc.n_transitions)])
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epidtn", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, runs_default):
        sp.add_argument("--config", required=True, help="YAML configuration or reference:N:M")
        sp.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        sp.add_argument("--runs", type=int, default=runs_default, help="replications")

    def rate_source(sp):
        sp.add_argument("--rates", help="rates file; estimated by simulation when omitted")
        sp.add_argument("--rate-runs", type=int, default=10_000,
                        help="runs per experiment when estimating rates (default 10000)")

    def model_opts(sp):
        sp.add_argument("--max-states", type=int, default=DEFAULT_MAX_STATES,
                        help="tangible-state budget of the SRN engines")

    def sim_opts(sp):
        sp.add_argument("--tx-delay", type=float, default=0.01, help="transfer time in s (default 0.01)")

    sp = sub.add_parser("estimate-rates", help="estimate lambda, mu, gamma, eta by simulation")
    common(sp, 10_000)
    sp.add_argument("--out", required=True, help="rates file to write")
    sp.set_defaults(func=cmd_estimate_rates)

    sp = sub.add_parser("analyze", help="solve an analytic engine")
    common(sp, 8000)
    sp.add_argument("--engine", required=True, choices=ANALYTIC_ENGINES)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--cdf-grid", help="start:stop:step for cdf.csv")
    rate_source(sp)
    model_opts(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate", help="run epidemic-forwarding replications")
    common(sp, 8000)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--cdf-grid", help="start:stop:step for cdf.csv")
    sim_opts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="compare engines against a reference")
    common(sp, 8000)
    sp.add_argument("--engines", required=True, help="comma-separated, e.g. mono,sim")
    sp.add_argument("--reference", default="sim", help="reference engine (default sim)")
    sp.add_argument("--out", required=True, help="output directory")
    rate_source(sp)
    model_opts(sp)
    sim_opts(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("statespace", help="count tangible states without solving")
    sp.add_argument("--config", required=True, help="YAML configuration or reference:N:M")
    sp.add_argument("--engine", default="mono", choices=("mono", "folded"))
    sp.add_argument("--out", help="output directory")
    model_opts(sp)
    sp.set_defaults(func=cmd_statespace)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on malformed arguments
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"epidtn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EpidtnError as exc:
        print(f"epidtn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
