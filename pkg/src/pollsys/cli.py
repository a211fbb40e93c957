"""Command-line interface.

Subcommands: analyze, moments, lst, pcl, simulate, optimize, sweep.  Model
files use a flat key/value grammar plus a labeled rate table; see
parse_model_file.  Output files start with a manifest comment header (command,
model digest, version, seed) so every result is reproducible from its own
header.  Delimited outputs that represent curves (lst, sweep) additionally
render a PNG figure next to the CSV.

Exit codes: 0 success, 2 parse/usage error, 3 analysis error (e.g. unstable
model where stability is required).
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .model import (
    Distribution,
    PollingModel,
    StrategyProfile,
    make_model,
    periods,
    validate,
)
from .mva import solve_mva
from .stability import stability_report
from .transforms import Transform, transform_moment

_EXIT_PARSE = 2
_EXIT_ANALYSIS = 3

_DIST_TAGS = {"exponential": "exp", "deterministic": "det",
              "erlang": "erlang", "hyperexponential-2": "hyper2"}
_TAG_DISTS = {v: k for k, v in _DIST_TAGS.items()}


class CliError(Exception):
    def __init__(self, message: str, code: int = _EXIT_PARSE):
        super().__init__(message)
        self.code = code


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


# ---------------------------------------------------------------------------
# model file grammar


def _parse_distribution(text: str, where: str) -> Distribution:
    parts = text.strip().split(":")
    tag = parts[0].lower()
    if tag not in _TAG_DISTS:
        raise CliError(f"{where}: unknown distribution {parts[0]!r} "
                       f"(expected one of {sorted(_TAG_DISTS)})")
    try:
        args = [float(v) for v in parts[1:]]
        if tag == "exp":
            return Distribution.exponential(*args)
        if tag == "det":
            return Distribution.deterministic(*args)
        if tag == "erlang":
            return Distribution.erlang(int(args[0]), args[1])
        return Distribution.hyperexp2(*args)
    except (TypeError, ValueError, IndexError) as exc:
        raise CliError(f"{where}: bad parameters for {tag!r}: {exc}") from exc


def format_distribution(d: Distribution) -> str:
    tag = _DIST_TAGS[d.family]
    params = list(d.params)
    if d.family == "erlang":
        params[0] = int(params[0])
    return tag + ":" + ":".join(_fmt(p) if not isinstance(p, int) else str(p)
                                for p in params)


def parse_model_text(text: str, source: str = "<string>") -> PollingModel:
    """Parse the key/value + rate-table model format.

    Grammar (comments start with '#'; keys are case-insensitive)::

        n = 2
        discipline = exhaustive, exhaustive
        service = exp:1.0, exp:1.0
        switchover = exp:1.0, exp:1.0
        rates:
              V1   S1   V2   S2
        Q1   0.5  0.5  0.0  0.5
        Q2   0.5  0.5  0.5  0.5
    """
    keys: dict[str, str] = {}
    rate_rows: dict[int, list[float]] = {}
    columns: list[str] | None = None
    in_table = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if in_table:
            parts = line.split()
            if columns is None:
                columns = [p.upper() for p in parts]
                continue
            label = parts[0].upper()
            if not label.startswith("Q"):
                raise CliError(f"{where}: rate row must start with Q<i>, "
                               f"got {parts[0]!r}")
            try:
                qi = int(label[1:])
                values = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise CliError(f"{where}: bad rate row: {exc}") from exc
            if len(values) != len(columns):
                raise CliError(f"{where}: row Q{qi} has {len(values)} values "
                               f"for {len(columns)} period columns")
            rate_rows[qi] = values
            continue
        if line.lower().startswith("rates") and line.rstrip().endswith(":"):
            in_table = True
            continue
        if "=" not in line:
            raise CliError(f"{where}: expected 'key = value' or the rate table")
        key, _, value = line.partition("=")
        keys[key.strip().lower()] = value.strip()

    if "n" not in keys:
        raise CliError(f"{source}: missing key 'n'")
    try:
        n = int(keys["n"])
    except ValueError as exc:
        raise CliError(f"{source}: n must be an integer") from exc

    def listed(key: str) -> list[str]:
        if key not in keys:
            raise CliError(f"{source}: missing key {key!r}")
        items = [v.strip() for v in keys[key].replace(",", " ").split()]
        if len(items) == 1 and n > 1:
            items = items * n
        if len(items) != n:
            raise CliError(f"{source}: {key!r} needs {n} entries, "
                           f"got {len(items)}")
        return items

    disciplines = []
    for d in listed("discipline"):
        dl = d.lower()
        if dl not in ("exhaustive", "gated"):
            raise CliError(f"{source}: unknown discipline {d!r}")
        disciplines.append(dl)
    service = [_parse_distribution(v, source) for v in listed("service")]
    switchover = [_parse_distribution(v, source) for v in listed("switchover")]

    expected = [p.label for p in periods(n)]
    if columns is None:
        raise CliError(f"{source}: missing 'rates:' table")
    if columns != expected:
        missing = [c for c in expected if c not in columns]
        if missing:
            raise CliError(f"{source}: rate table is missing period "
                           f"column(s) {', '.join(missing)}")
        raise CliError(f"{source}: rate columns must be ordered "
                       f"{' '.join(expected)}")
    rates = []
    for i in range(1, n + 1):
        if i not in rate_rows:
            raise CliError(f"{source}: missing rate row Q{i}")
        rates.append(rate_rows[i])

    model = make_model(disciplines, service, switchover, rates)
    problems = validate(model)
    if problems:
        raise CliError(f"{source}: invalid model: " + "; ".join(problems))
    return model


def parse_model_file(path) -> PollingModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    return parse_model_text(text, source=str(path))


def dump_model(model: PollingModel) -> str:
    """Config-format text that parses back to an equal model."""
    lines = [
        f"n = {model.n}",
        "discipline = " + ", ".join(model.disciplines),
        "service = " + ", ".join(format_distribution(d) for d in model.service),
        "switchover = " + ", ".join(format_distribution(d)
                                    for d in model.switchover),
        "rates:",
        "     " + "  ".join(p.label for p in periods(model.n)),
    ]
    for i, row in enumerate(model.rates, start=1):
        lines.append(f"Q{i}   " + "  ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# manifest


def model_digest(model: PollingModel) -> str:
    return hashlib.sha256(dump_model(model).encode()).hexdigest()[:16]


def manifest_lines(command: str, model: PollingModel | None,
                   extra: dict | None = None) -> list[str]:
    out = [f"# command: {command}", f"# version: {__version__}"]
    if model is not None:
        out.append(f"# model: {model_digest(model)}")
    for k, v in (extra or {}).items():
        out.append(f"# {k}: {v}")
    return out


def _write_csv(path, header_comment: list[str], columns: list[str], rows):
    lines = list(header_comment)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v)
                              for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_analyze(args) -> int:
    model = parse_model_file(args.model)
    if args.dump_model:
        sys.stdout.write(dump_model(model))
        return 0
    report = stability_report(model)
    print(f"queues: {model.n}")
    print(f"stable: {report.stable}  margin: {_fmt(report.margin)}")
    print(f"retained queues: {list(report.retained_queues)}")
    if not report.supported:
        print("warning: retained queues with zero mean visit time: "
              f"{list(report.zero_visit_queues)}", file=sys.stderr)
    if not report.stable:
        print(f"error: model is unstable (margin {_fmt(report.margin)})",
              file=sys.stderr)
        return _EXIT_ANALYSIS
    sol = solve_mva(model)
    print(f"mean cycle time: {_fmt(sol.mean_cycle)}")
    print(f"offered load: {_fmt(sol.rho_bar)}")
    hdr = f"{'queue':>5} {'E[V]':>12} {'rate':>12} {'E[W]':>12} {'E[LQ]':>12}"
    print(hdr)
    for i in range(model.n):
        print(f"{i + 1:>5} {_fmt(sol.mean_visit[i]):>12} "
              f"{_fmt(sol.eff_rate[i]):>12} {_fmt(sol.wait[i]):>12} "
              f"{_fmt(sol.queue_len[i]):>12}")
    return 0


def _cmd_moments(args) -> int:
    from .distributions import queue_length_transform, waiting_time_transform

    model = parse_model_file(args.model)
    report = stability_report(model)
    if not report.stable:
        print(f"error: model is unstable (margin {_fmt(report.margin)})",
              file=sys.stderr)
        return _EXIT_ANALYSIS
    sol = solve_mva(model)
    rows = []
    for i in range(1, model.n + 1):
        if sol.eff_rate[i - 1] == 0.0:
            rows.append([f"{i}"] + [""] * 5)
            continue
        wt = waiting_time_transform(model, i)
        w1, _ = transform_moment(wt.transform, 1)
        w2, _ = transform_moment(wt.transform, 2)
        wstd = float(np.sqrt(max(w2 - w1 * w1, 0.0)))
        arr, _ = transform_moment(
            queue_length_transform(model, i, "arrival").transform, 1)
        arb, _ = transform_moment(
            queue_length_transform(model, i, "arbitrary").transform, 1)
        rows.append([f"{i}", w1, wstd, arr, arb, sol.wait[i - 1]])
    columns = ["queue", "wait_mean", "wait_std", "ql_arrival_mean",
               "ql_arbitrary_mean", "wait_mean_mva"]
    if args.output:
        _write_csv(args.output, manifest_lines("moments", model),
                   columns, rows)
        print(f"wrote {args.output}")
    else:
        print(",".join(columns))
        for row in rows:
            print(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    return 0


def _parse_grid(spec: str):
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise CliError(f"bad grid {spec!r}, expected start:stop:step") from exc
    if step <= 0 or stop < start:
        raise CliError(f"bad grid {spec!r}")
    count = int(round((stop - start) / step)) + 1
    return [start + k * step for k in range(count)]


def _cmd_lst(args) -> int:
    from . import distributions as dist

    model = parse_model_file(args.model)
    report = stability_report(model)
    if not report.stable:
        print(f"error: model is unstable (margin {_fmt(report.margin)})",
              file=sys.stderr)
        return _EXIT_ANALYSIS
    grid = _parse_grid(args.grid)
    kind = args.kind
    i = args.queue
    if kind == "wait":
        fn = lambda w: dist.waiting_time_lst(model, i, w)
    elif kind == "cycle":
        fn = lambda w: dist.cycle_time_lst(model, i, args.variant, w)
    elif kind == "intervisit":
        fn = lambda w: dist.intervisit_lst(model, i, w)
    elif kind == "visit":
        fn = lambda w: dist.visit_time_lst(model, i, w)
    else:
        raise CliError(f"unknown transform kind {kind!r}")
    values = [float(fn(w)) for w in grid]
    out = Path(args.output or f"lst_{kind}_q{i}.csv")
    _write_csv(out, manifest_lines(f"lst {kind}", model,
                                   {"queue": i, "grid": args.grid}),
               ["omega", "lst"], zip(grid, values))
    from .plotting import render_curve

    png = out.with_suffix(".png")
    render_curve(png, grid, values, "omega", f"E[exp(-omega {kind})]",
                 f"{kind} transform, queue {i}")
    print(f"wrote {out} and {png}")
    return 0


def _cmd_pcl(args) -> int:
    from .pcl import pcl_case, pcl_verify

    model = parse_model_file(args.model)
    tag = pcl_case(model)
    print(f"case: {tag}")
    if tag == "not-applicable":
        print("error: conservation law does not apply to this model",
              file=sys.stderr)
        return _EXIT_ANALYSIS
    report = stability_report(model)
    if not report.stable:
        print(f"error: model is unstable (margin {_fmt(report.margin)})",
              file=sys.stderr)
        return _EXIT_ANALYSIS
    summary = pcl_verify(model)
    print(f"lhs: {_fmt(summary.lhs)}")
    print(f"rhs: {_fmt(summary.rhs)}")
    print(f"gap: {_fmt(summary.gap)}")
    return 0


def _cmd_simulate(args) -> int:
    from .simulator import SimConfig, simulate

    model = parse_model_file(args.model)
    cfg = SimConfig(replications=args.replications,
                    events_per_replication=args.events,
                    warmup_fraction=args.warmup,
                    seed=args.seed)
    estimates = simulate(model, cfg)
    columns = ["metric", "mean", "half_width", "replications", "diverging"]
    rows = [[e.metric, e.mean, e.half_width, str(e.replications),
             str(e.diverging)] for e in estimates]
    header = manifest_lines("simulate", model, {
        "seed": cfg.seed, "replications": cfg.replications,
        "events": cfg.events_per_replication, "warmup": cfg.warmup_fraction})
    if args.output:
        _write_csv(args.output, header, columns, rows)
        print(f"wrote {args.output}")
    else:
        print(",".join(columns))
        for row in rows:
            print(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    return 0


def _cmd_optimize(args) -> int:
    from .strategy import optimize

    model = parse_model_file(args.model)
    profile, value = optimize(model, args.rate, args.objective)
    print(f"profile: {profile}")
    print(f"mean sojourn: {_fmt(value)}")
    return 0


def _cmd_sweep(args) -> int:
    from .strategy import enumerate_profiles, sweep, sweep_values

    model = parse_model_file(args.model)
    grid = _parse_grid(args.grid)
    result = sweep(model, args.rate, grid, queue=args.queue,
                   refine_tol=args.refine_tol)
    out = Path(args.output or "sweep.csv")
    rows = [[g, str(p), v] for g, p, v in
            zip(result.grid, result.best_profile, result.best_value)]
    header = manifest_lines("sweep", model, {
        "rate": args.rate, "grid": args.grid,
        "thresholds": " ".join(_fmt(t) for t in result.thresholds)})
    _write_csv(out, header, ["parameter", "profile", "sojourn"], rows)

    from .plotting import render_sweep

    winners = []
    for p in result.best_profile:
        if p.targets not in [w.targets for w in winners]:
            winners.append(p)
    curves = sweep_values(model, args.rate, result.grid, winners,
                          queue=args.queue)
    series = {str(p): curves[:, k] for k, p in enumerate(winners)}
    png = out.with_suffix(".png")
    render_sweep(png, result.grid, series, list(result.best_value),
                 f"mean service time, queue {args.queue}", "mean sojourn time")
    print(f"wrote {out} and {png}")
    print("thresholds: " + " ".join(_fmt(t) for t in result.thresholds))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pollsys",
        description="Exact analysis of cyclic polling systems with "
                    "position-dependent (smart-customer) arrival rates.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="stability report and MVA means")
    p.add_argument("model")
    p.add_argument("--dump-model", action="store_true",
                   help="print the parsed model in config format and exit")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("moments", help="transform-based means and std devs")
    p.add_argument("model")
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p.set_defaults(fn=_cmd_moments)

    p = sub.add_parser("lst", help="evaluate a transform on an omega grid")
    p.add_argument("model")
    p.add_argument("--kind", choices=["wait", "cycle", "intervisit", "visit"],
                   default="wait")
    p.add_argument("--queue", type=int, default=1)
    p.add_argument("--variant", default="visit-beginning",
                   choices=["visit-beginning", "visit-ending"])
    p.add_argument("--grid", default="0.0:5.0:0.1", metavar="START:STOP:STEP")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=_cmd_lst)

    p = sub.add_parser("pcl", help="pseudo-conservation law check")
    p.add_argument("model")
    p.set_defaults(fn=_cmd_pcl)

    p = sub.add_parser("simulate", help="discrete-event simulation estimates")
    p.add_argument("model")
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--events", type=int, default=1_000_000)
    p.add_argument("--warmup", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("optimize", help="best routing strategy by enumeration")
    p.add_argument("model", help="template model; rates are ignored")
    p.add_argument("--rate", type=float, required=True,
                   help="total arrival rate assigned by each strategy")
    p.add_argument("--objective", choices=["minimize", "maximize"],
                   default="minimize")
    p.set_defaults(fn=_cmd_optimize)

    p = sub.add_parser("sweep", help="optimal strategy along a parameter grid")
    p.add_argument("model", help="template model; rates are ignored")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--queue", type=int, default=1,
                   help="queue whose mean service time is swept")
    p.add_argument("--grid", default="0.0:2.0:0.01", metavar="START:STOP:STEP")
    p.add_argument("--refine-tol", type=float, default=0.005)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
