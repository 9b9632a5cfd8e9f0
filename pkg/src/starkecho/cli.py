"""starkecho command line: run, sweep, oracle, plot, compare, preset."""
from __future__ import annotations

import argparse
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, io, svg
from .dynamics import PropagationConfig, propagate_ensemble
from .ensemble import build_ensemble
from .sequence import PRESETS, SequenceError, parse_sequence, preset, serialize_sequence, validate

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2
METHOD_NAMES = {"exact": "exact_piecewise", "rk4": "rk4"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers

_PI_TERM = re.compile(r"^(?P<s>[-+])?(?P<k>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\*?(?P<pi>pi)?(?:/(?P<d>\d+\.?\d*))?$")


def parse_number(text: str) -> float:
    """A float, optionally in units of pi: ``1.5``, ``pi``, ``3pi/2``, ``-2*pi``."""
    s = text.strip().replace(" ", "").lower()
    m = _PI_TERM.match(s)
    if not m or (m.group("k") is None and m.group("pi") is None) or (m.group("k") and "*" in s and not m.group("pi")):
        raise UsageError(f"cannot read number {text!r}")
    v = float(m.group("k") or 1.0)
    if m.group("s") == "-":
        v = -v
    if m.group("pi"):
        v *= math.pi
    if m.group("d"):
        v /= float(m.group("d"))
    return v


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:count`` (inclusive, like linspace) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid {text!r} must be start:stop:count")
        try:
            n = int(parts[2])
        except ValueError:
            raise UsageError(f"grid count {parts[2]!r} is not an integer") from None
        if n < 1:
            raise UsageError("grid count must be at least 1")
        return np.linspace(parse_number(parts[0]), parse_number(parts[1]), n)
    return np.array([parse_number(p) for p in text.split(",") if p.strip()])


def load_sequence(args):
    if getattr(args, "preset", None) and getattr(args, "sequence", None):
        raise UsageError("give either a sequence file or --preset, not both")
    if getattr(args, "preset", None):
        try:
            return preset(args.preset)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if not getattr(args, "sequence", None):
        raise UsageError("a sequence file or --preset is required")
    path = Path(args.sequence)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read sequence file {path}: {exc.strerror or exc}") from None
    try:
        return parse_sequence(text)
    except SequenceError as exc:
        raise UsageError(f"{path}: {exc}") from None


def make_config(args, seq) -> PropagationConfig:
    kw = {}
    if args.dt is not None:
        kw["dt"] = args.dt
    if args.method:
        kw["method"] = METHOD_NAMES[args.method]
    kw["workers"] = args.workers
    kw["control_detuning"] = args.control_detuning
    try:
        return PropagationConfig.from_sequence(seq, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_gamma(args):
    if not args.gamma:
        return None
    try:
        return io.read_gamma(args.gamma)
    except OSError as exc:
        raise UsageError(f"cannot read decay file {args.gamma}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def out_dir(args) -> Path:
    return Path(args.out or ".")


def echo_list(traces, seq, ensemble, config, gamma):
    """Detected echoes at oracle-predicted times; empty when the program has none."""
    try:
        prediction = analysis.oracle_predict(seq)
    except analysis.ClassificationError:
        return []
    return [
        {**rep.to_dict(e.label), "predicted_time_us": round(e.time, 9), "predicted_character": e.character}
        for e, rep in analysis.echo_reports(traces, seq, prediction, ensemble, config, gamma)
    ]


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args) -> int:
    if args.replay:
        if args.preset or args.sequence:
            raise UsageError("--replay takes its inputs from the manifest")
        try:
            manifest = io.RunManifest.load(args.replay)
        except OSError as exc:
            raise UsageError(f"cannot read manifest {args.replay}: {exc.strerror or exc}") from None
        except (ValueError, io.SchemaError) as exc:
            raise UsageError(f"{args.replay}: {exc}") from None
        seq, rule, config, gamma = manifest.inputs()
        per_group = manifest.per_group or args.per_group
        name = manifest.preset
    else:
        seq = load_sequence(args)
        problems = validate(seq)
        if problems:
            raise UsageError("; ".join(map(str, problems)))
        config = make_config(args, seq)
        gamma = load_gamma(args)
        rule = "midpoint"
        per_group = args.per_group
        name = args.preset

    t0 = time.perf_counter()
    ensemble = build_ensemble(seq.ensemble_spec, rule)
    traces = propagate_ensemble(seq, ensemble, gamma, config, per_group=per_group)
    echoes = echo_list(traces, seq, ensemble, config, gamma)
    wall = time.perf_counter() - t0

    d = out_dir(args)
    io.atomic_write(d / "trace.csv", io.trace_csv(traces))
    if per_group:
        io.atomic_write(d / "groups.csv", io.groups_csv(traces))
    io.atomic_write(d / "echoes.json", io.dumps(echoes))
    manifest = io.manifest_for(seq, ensemble, rule, config, gamma, echoes, wall, per_group, name)
    io.atomic_write(d / "manifest.json", manifest.to_json())
    for e in echoes:
        print(f"{e['label']}: {e['character']} @ {e['echo_time_us']:.2f} us (|Im rho12| {e['amplitude']:.4g})")
    print(f"wrote {d / 'trace.csv'} ({len(traces.times)} rows) in {wall:.2f} s")
    return EXIT_OK


def cmd_sweep(args) -> int:
    seq = load_sequence(args)
    config = make_config(args, seq)
    gamma = load_gamma(args)
    phis = parse_grid(args.phi)
    try:
        table = analysis.efficiency_sweep(seq, phis, config=config, gamma=gamma)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    d = out_dir(args)
    io.atomic_write(d / "sweep.csv", io.sweep_csv(table))
    info = {"silence_threshold": table.threshold, "window_us": list(table.window)}
    full = (table.phi >= -1e-12) & (table.phi <= math.pi + 1e-12)
    if full.sum() >= 3:
        a, b, r2 = analysis.cosine_fit(table.phi[full], table.signed[full])
        info["cosine_fit"] = {"a": a, "b": b, "r_squared": r2}
        print(f"cosine fit on [0, pi]: {a:.4g} cos(phi) + {b:.3g}, R^2 = {r2:.4f}")
    if args.two_d:
        offsets = parse_grid(args.offsets)
        grid = analysis.sweep_2d(seq, phis, offsets, config=config, gamma=gamma)
        io.atomic_write(d / "sweep2d.csv", io.sweep2d_csv(offsets, phis, grid))
    io.atomic_write(d / "sweep.json", io.dumps(info))
    print(f"wrote {d / 'sweep.csv'} ({len(phis)} rows), silence threshold {table.threshold:.4g}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    seq = load_sequence(args)
    try:
        pred = analysis.oracle_predict(seq)
    except analysis.ClassificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    if args.json:
        sys.stdout.write(io.dumps(pred.to_dict()))
        return EXIT_OK
    print("phase ledger:")
    for entry in pred.phase_ledger:
        print(f"  {entry.pulse:<6} {entry.role:<10} @ {entry.t_on:g} us  {entry.transformation:<28} quadrature {entry.quadrature}")
    print("echoes:")
    for e in pred.echoes:
        print(f"  {e.label}: {e.character} ({e.quadrature} quadrature) @ {e.time:.4f} us")
    if not pred.echoes:
        print("  none")
    return EXIT_OK


def cmd_plot(args) -> int:
    path = Path(args.csv)
    try:
        header, cols = io.read_table(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except io.SchemaError as exc:
        raise UsageError(f"schema error: {exc}") from None
    if "time_us" in cols:
        xname, xlabel = "time_us", "time (us)"
    elif "phi_rad" in cols and "offset_mhz" not in cols:
        xname, xlabel = "phi_rad", "Stark phase (rad)"
    else:
        raise UsageError(f"schema error: {path} has neither a time_us nor a phi_rad column")
    wanted = [c.strip() for c in args.columns.split(",")] if args.columns else \
        (["im12", "re12"] if xname == "time_us" else ["amplitude"])
    missing = [c for c in wanted if c not in cols]
    if missing:
        raise UsageError(f"schema error: {path} lacks column(s) {', '.join(missing)}")
    shading = []
    if args.manifest:
        try:
            seq = io.RunManifest.load(args.manifest).inputs()[0]
        except OSError as exc:
            raise UsageError(f"cannot read manifest {args.manifest}: {exc.strerror or exc}") from None
        except (ValueError, KeyError) as exc:
            raise UsageError(f"{args.manifest}: {exc}") from None
        shading = [(p.t_on, p.t_off, p.channel.value, p.name) for p in seq.pulses]
    text = svg.line_chart(cols[xname], {c: cols[c] for c in wanted}, xlabel=xlabel,
                          ylabel=", ".join(wanted), title=args.title or path.name, shading=shading)
    if args.out and args.out.endswith(".svg"):
        target = Path(args.out)
    else:
        target = (Path(args.out) if args.out else path.parent) / (path.stem + ".svg")
    io.atomic_write(target, text)
    print(f"wrote {target}")
    return EXIT_OK


def cmd_compare(args) -> int:
    seq = load_sequence(args)
    problems = validate(seq)
    if problems:
        raise UsageError("; ".join(map(str, problems)))
    config = make_config(args, seq)
    gamma = load_gamma(args)
    try:
        prediction = analysis.oracle_predict(seq)
    except analysis.ClassificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    ensemble = build_ensemble(seq.ensemble_spec)
    traces = analysis.run(seq, ensemble, config, gamma)
    report = analysis.compare(traces, prediction, seq, ensemble, config, gamma)
    for line in report.lines():
        print(line)
    if args.out:
        io.atomic_write(Path(args.out) / "compare.json", io.dumps(report.to_dict()))
    if not report.passed:
        failed = [c.label for c in report.checks if not c.passed]
        print(f"compare failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    print("compare passed")
    return EXIT_OK


def cmd_preset(args) -> int:
    if not args.name:
        print("\n".join(PRESETS))
        return EXIT_OK
    try:
        seq = preset(args.name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(serialize_sequence(seq))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="output directory (default: current)")
    common.add_argument("--dt", type=float, help="grid step in us (default: from the sequence)")
    common.add_argument("--method", choices=sorted(METHOD_NAMES), help="propagator (default: exact)")
    common.add_argument("--per-group", action="store_true", help="also write per-group rho_12 (run only)")
    common.add_argument("--gamma", metavar="FILE", help="3x3 CSV of decay rates in 1/us")
    common.add_argument("--workers", type=int, default=1, help="threads for the ensemble (output is identical)")
    common.add_argument("--control-detuning", choices=("none", "group"), default="none",
                        help="detuning of level 2 while the control pulse is on")

    seqargs = argparse.ArgumentParser(add_help=False)
    seqargs.add_argument("sequence", nargs="?", help="sequence file")
    seqargs.add_argument("--preset", metavar="NAME", help=f"stock program: {', '.join(PRESETS)}")

    p = argparse.ArgumentParser(prog="starkecho", description="Three-level photon echo simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common, seqargs], help="propagate a sequence, write trace.csv etc.")
    r.add_argument("--replay", metavar="MANIFEST", help="redo a run from its manifest.json")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common, seqargs], help="e1 amplitude versus Stark phase")
    s.add_argument("--phi", default="0:pi:33", help="phase grid start:stop:count (default 0:pi:33)")
    s.add_argument("--2d", dest="two_d", action="store_true", help="also sweep the Stark detuning")
    s.add_argument("--offsets", default="-0.5:0.5:5", help="Stark detuning offsets in MHz for --2d")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", parents=[common, seqargs], help="phase-ledger echo prediction")
    o.add_argument("--json", action="store_true")
    o.set_defaults(func=cmd_oracle)

    pl = sub.add_parser("plot", parents=[common], help="SVG line plot of a trace or sweep CSV")
    pl.add_argument("csv")
    pl.add_argument("--columns", help="comma-separated columns (default im12,re12 or amplitude)")
    pl.add_argument("--manifest", help="shade pulse intervals from this manifest.json")
    pl.add_argument("--title")
    pl.set_defaults(func=cmd_plot)

    c = sub.add_parser("compare", parents=[common, seqargs], help="simulation versus oracle; exit 1 on mismatch")
    c.set_defaults(func=cmd_compare)

    pr = sub.add_parser("preset", help="print a preset's canonical text (no name: list presets)")
    pr.add_argument("name", nargs="?")
    pr.set_defaults(func=cmd_preset)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"starkecho {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
