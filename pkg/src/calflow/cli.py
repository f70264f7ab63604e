"""Command line: ``calflow {compile,run,profile,partition,explore,codegen}``.

Programs are given either as a bundle written by ``compile`` or as CAL files
plus ``--top``.  Exit status is 0 on success, 1 for user errors and 2 for
internal faults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

from calflow.errors import CalflowError

log = logging.getLogger("calflow")


class UsageError(CalflowError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _int_range(text: str) -> list[int]:
    """``3``, ``1..4`` or ``1,2,4``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return _int_list(text)
    except ValueError:
        raise UsageError(f"bad range {text!r}") from None


def _params(items: list[str] | None) -> dict:
    out = {}
    for it in items or []:
        k, sep, v = it.partition("=")
        if not sep:
            raise UsageError(f"--param expects NAME=VALUE, got {it!r}")
        v = v.strip()
        out[k.strip()] = v == "true" if v in ("true", "false") else int(v, 0)
    return out


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _program(args):
    """Returns ``(bundle, graph)`` from a bundle file or CAL sources."""
    from calflow.bundle import Bundle, compile_bundle

    inputs = args.program
    if len(inputs) == 1 and inputs[0].endswith(".json"):
        b = Bundle.from_json(_read(inputs[0]))
        if getattr(args, "param", None):
            b.params.update(_params(args.param))
        return b, b.elaborate()
    if not args.top:
        raise UsageError("--top is required with CAL sources")
    sources = [(p, _read(p)) for p in inputs]
    b, graph, _ = compile_bundle(sources, args.top, _params(getattr(args, "param", None)))
    return b, graph


def _plan(args, graph):
    from calflow.frontend import parse_xcf

    if getattr(args, "xcf", None):
        return parse_xcf(_read(args.xcf), graph)
    return None


def _profile(args, graph):
    from calflow.profiler import ProfileReport, profile_hardware, profile_software

    if args.profile:
        return ProfileReport.from_json(_read(args.profile))
    log.info("no --profile given; profiling the program now")
    return profile_software(graph).merge(profile_hardware(graph))


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _add_program(p, xcf: bool = False) -> None:
    p.add_argument("program", nargs="+", help="bundle (.json) or CAL source files")
    p.add_argument("--top", help="top network (CAL sources only)")
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="override a network parameter")
    if xcf:
        p.add_argument("--xcf", "--threads-map", dest="xcf", help="partition configuration")


# -- subcommands -------------------------------------------------------------------------


def cmd_compile(args) -> int:
    from calflow.bundle import compile_bundle
    from calflow.machine import build_siam

    if not args.top:
        raise UsageError("--top is required")
    sources = [(p, _read(p)) for p in args.program]
    b, graph, machines = compile_bundle(sources, args.top, _params(args.param))
    if args.output:
        Path(args.output).write_text(b.to_json())
    for name in args.dump_controller or []:
        if name not in graph.instances:
            raise UsageError(f"no instance {name!r} in {graph.name}")
        am = machines[name] if name in machines else build_siam(graph.actor(name))
        sys.stdout.write(am.to_dot())
    if not args.dump_controller:
        for n, s in b.controllers.items():
            print(f"{n}: {s['actor']}, {s['conditions']} conditions, {s['states']} states")
    return 0


def cmd_run(args) -> int:
    from calflow.hwsim import parse_cost_table
    from calflow.runtime import RunOptions, run_network

    _, graph = _program(args)
    plan = _plan(args, graph)
    opts = RunOptions(trace=bool(args.trace), seed=args.seed, timeout=args.timeout,
                      pin_threads=not args.no_pin)
    if args.fifo_depth:
        opts.fifo_depth = args.fifo_depth
    if args.threshold:
        opts.threshold = args.threshold
    if args.cost_table:
        opts.cost_table = parse_cost_table(_read(args.cost_table))
    res = run_network(graph, plan, options=opts)
    summary = {
        "network": graph.name,
        "status": res.status,
        "wall_time_s": round(res.wall_time, 6),
        "firings": res.firing_counts,
        "tokens": res.token_counts,
        "sim_cycles": res.sim_cycles,
        "kernel_calls": res.kernel_calls,
    }
    if res.channels_nonempty:
        summary["channels_nonempty"] = res.channels_nonempty
    if args.trace:
        lines = []
        for key in sorted(res.traces):
            lines.extend(f"{key}\t{i}\t{tok}" for i, tok in enumerate(res.traces[key]))
        Path(args.trace).write_text("\n".join(lines) + ("\n" if lines else ""))
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(f"{graph.name}: {res.status} in {res.wall_time:.3f} s")
        for a, n in summary["firings"].items():
            print(f"  fired {a}: {n}")
        for k, n in summary["tokens"].items():
            print(f"  tokens {k}: {n}")
        if plan is not None and plan.accelerator is not None:
            print(f"  simulated cycles: {res.sim_cycles}, kernel calls: {res.kernel_calls}")
        for k in res.channels_nonempty:
            print(f"  warning: {k} not empty at exit")
    return 0


def cmd_profile(args) -> int:
    from calflow.profiler import (BandwidthCurves, measure_boundary_bandwidth, measure_fifo_bandwidth,
                                  profile_hardware, profile_software)

    if args.mode in ("fifo", "boundary"):
        sizes = _int_list(args.sizes)
        if len(sizes) < 2:
            raise UsageError("--sizes needs at least two sizes")
        curves = BandwidthCurves()
        if args.mode == "fifo":
            curves.intra, curves.inter, estimated = measure_fifo_bandwidth(sizes, repeats=args.repeats)
            if estimated:
                log.warning("single core: inter-thread curve is scaled from the intra-thread curve")
            doc = {"intra": curves.intra.to_dict(), "inter": curves.inter.to_dict()}
        else:
            curves.read, curves.write = measure_boundary_bandwidth(sizes, repeats=args.repeats)
            doc = {"read": curves.read.to_dict(), "write": curves.write.to_dict()}
        _write(args.output, json.dumps(doc, indent=2) + "\n")
        return 0
    if not args.program:
        raise UsageError(f"--mode {args.mode} needs a program")
    _, graph = _program(args)
    if args.mode == "sw":
        rep = profile_software(graph, _plan(args, graph))
    elif args.mode == "hw":
        rep = profile_hardware(graph)
    else:
        rep = profile_software(graph, _plan(args, graph)).merge(profile_hardware(graph))
    if args.curves:
        merged = {**rep.curves.to_dict(), **json.loads(_read(args.curves))}
        rep.curves = BandwidthCurves.from_dict(merged)
    _write(args.output, rep.to_json() + "\n")
    return 0


def cmd_partition(args) -> int:
    from calflow.frontend import emit_xcf
    from calflow.frontend.xcf import ChannelConfig
    from calflow.partitioner import SolveLimits, build_model, emit_lp, solve_exact, solve_milp
    from calflow.partitioner.model import ACCEL

    _, graph = _program(args)
    prof = _profile(args, graph)
    inst = build_model(graph, prof, args.threads, args.accel, m=args.m, buffer_bytes=args.buffer_bytes)
    if args.lp:
        Path(args.lp).write_text(emit_lp(inst))
    if args.solver == "milp":
        sol = solve_milp(inst, args.time_limit)
    else:
        sol = solve_exact(inst, SolveLimits(time_limit=args.time_limit))
    if not sol.assignment:
        raise CalflowError(f"no feasible partition ({sol.status})")
    channels = {c.key: ChannelConfig(buffer_bytes=args.buffer_bytes) for c in graph.connections
                if (sol.assignment[c.src] == ACCEL) != (sol.assignment[c.dst] == ACCEL)}
    _write(args.output, emit_xcf(sol.plan(channels)))
    report = json.dumps(sol.to_dict(), indent=2) + "\n"
    if args.breakdown:
        Path(args.breakdown).write_text(report)
    if args.output not in (None, "-"):
        print(f"predicted {sol.predicted_ns:.1f} ns ({sol.status})")
        for a, p in sol.assignment.items():
            print(f"  {a}: {p}")
    return 0


def cmd_explore(args) -> int:
    from calflow.partitioner import SolveLimits, explore

    _, graph = _program(args)
    prof = _profile(args, graph)
    res = explore(graph, prof, _int_range(args.threads), _int_list(args.buffers), args.accel,
                  args.out, args.m, SolveLimits(time_limit=args.time_limit))
    for i, r in enumerate(res.rows):
        s = r.summary()
        if i == 0:
            print(",".join(s))
        print(",".join(str(v) for v in s.values()))
    return 0


def cmd_codegen(args) -> int:
    from calflow.codegen import write_gen

    _, graph = _program(args)
    plan = _plan(args, graph)
    if args.instances:
        members = [x for x in args.instances.split(",") if x]
        for m in members:
            if m not in graph.instances:
                raise UsageError(f"no instance {m!r} in {graph.name}")
    elif plan is not None:
        members = list(plan.accelerator.members) if plan.accelerator is not None else []
    else:
        members = [n for n in graph.instances if not graph.actor(n).software_only]
    channels = plan.channels if plan is not None else None
    for p in write_gen(graph, args.out, members, channels):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="calflow", description="CAL dataflow compiler, runtime and partitioner")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compile", help="parse, elaborate and build controllers")
    p.add_argument("program", nargs="+", help="CAL source files")
    p.add_argument("--top", help="top network")
    p.add_argument("--param", action="append", metavar="NAME=VALUE")
    p.add_argument("-o", "--output", help="bundle file to write")
    p.add_argument("--dump-controller", action="append", metavar="INSTANCE",
                   help="print the controller graph (Graphviz)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="execute a program")
    _add_program(p, xcf=True)
    p.add_argument("--trace", metavar="FILE", help="write per-connection token traces")
    p.add_argument("--seed", type=int, help="seed for accelerator schedules")
    p.add_argument("--fifo-depth", type=int)
    p.add_argument("--controller-threshold", "--threshold", dest="threshold", type=int,
                   help="controller instructions per scheduling turn")
    p.add_argument("--cost-table", metavar="FILE")
    p.add_argument("--timeout", type=float)
    p.add_argument("--no-pin", action="store_true", help="do not pin threads to cores")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("profile", help="collect timing and bandwidth data")
    p.add_argument("program", nargs="*")
    p.add_argument("--top")
    p.add_argument("--param", action="append", metavar="NAME=VALUE")
    p.add_argument("--xcf")
    p.add_argument("--mode", choices=["sw", "hw", "full", "fifo", "boundary"], default="full")
    p.add_argument("--sizes", default="64,256,1024,4096", help="buffer sizes in tokens")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--curves", metavar="FILE", help="bandwidth curves to merge into the profile")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("partition", help="solve for the best partition")
    _add_program(p)
    p.add_argument("--profile", metavar="FILE")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--accel", action="store_true")
    p.add_argument("--m", type=int, help="bound on boundary crossings")
    p.add_argument("--buffer-bytes", type=int, default=1 << 20)
    p.add_argument("--solver", choices=["exact", "milp"], default="exact")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--lp", metavar="FILE", help="also write the LP program")
    p.add_argument("--breakdown", metavar="FILE")
    p.add_argument("-o", "--output", help="XCF file (default stdout)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("explore", help="sweep thread counts and accelerator use")
    _add_program(p)
    p.add_argument("--profile", metavar="FILE")
    p.add_argument("--threads", default="1..4")
    p.add_argument("--accel", choices=["on", "off", "both"], default="both")
    p.add_argument("--buffers", default=str(1 << 20), help="boundary buffer sizes in bytes")
    p.add_argument("--m", type=int)
    p.add_argument("--time-limit", type=float)
    p.add_argument("--out", default="explore")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("codegen", help="emit accelerator sources")
    _add_program(p, xcf=True)
    p.add_argument("--instances", help="comma-separated accelerator members")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_codegen)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        return args.func(args)
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except (CalflowError, ValueError, OSError) as e:
        print(f"calflow: error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception:
        print("calflow: internal error", file=sys.stderr)
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
