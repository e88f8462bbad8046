"""Command-line interface.

Exit codes: 0 success, 1 domain failure (invalid channel, not
distinguishable, bound violated), 2 unreadable input, 3 numerical failure,
64 usage error.
"""
from __future__ import annotations

import argparse
import math
import os
import re
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .bounds import build_report
from .core import KrausChannel, identity_channel
from .errors import (
    ChannelFileError,
    DomainError,
    InfeasibleTransformError,
    InvalidChannelError,
    OpdiscError,
    OptimizerError,
    SynthesisError,
)
from .fidelity import alpha0, f1_identity
from .protocol import ProtocolPlan, plan_2d, plan_general
from .search import OptimizerConfig
from .serialization import (
    channel_from_dict,
    load_channel,
    load_document,
    plan_from_dict,
    plan_to_dict,
    render_json,
    save_json,
)
from .simulator import monte_carlo, verify_lemma2, verify_thm4

EXIT_OK, EXIT_DOMAIN, EXIT_PARSE, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x: Optional[float]) -> str:
    return "n/a" if x is None else f"{x:.10g}"


def _emit(lines: Sequence[Tuple[str, object]]) -> None:
    width = max(len(k) for k, _ in lines)
    for key, value in lines:
        print(f"{key:<{width}} = {value}")


def _config(args) -> OptimizerConfig:
    return OptimizerConfig(starts=args.starts, seed=args.seed, threads=args.threads)


# ==================================================================================================
# Commands
# ==================================================================================================


def cmd_validate(args) -> int:
    channel = load_channel(args.channel, check=False)
    v = channel.validity()
    data = {
        "name": channel.name,
        "dim": channel.dim,
        "kraus_operators": channel.num_kraus,
        "completeness_residual": v.completeness_residual,
        "choi_min_eigenvalue": v.choi_min_eigenvalue,
        "valid": v.is_valid,
    }
    if args.json:
        sys.stdout.write(render_json(data))
    else:
        _emit([
            ("channel", channel.name or "(unnamed)"),
            ("dim", channel.dim),
            ("kraus_operators", channel.num_kraus),
            ("completeness_residual", f"{v.completeness_residual:.3e}"),
            ("choi_min_eigenvalue", f"{v.choi_min_eigenvalue:.3e}"),
            ("valid", "yes" if v.is_valid else "no"),
        ])
    return EXIT_OK if v.is_valid else EXIT_DOMAIN


def cmd_report(args) -> int:
    channel = load_channel(args.channel)
    report = build_report(channel, _config(args), with_ea=args.ea)
    if args.json:
        sys.stdout.write(render_json(report.to_dict()))
        return EXIT_OK
    lines = [
        ("channel", channel.name or "(unnamed)"),
        ("f1", _fmt(report.f1)),
        ("theta", _fmt(report.theta)),
        ("cos_alpha0", _fmt(report.cos_alpha0)),
        ("distinguishable", "yes" if report.distinguishable else "no"),
    ]
    if report.distinguishable:
        if report.nmin_exact_2d is not None:
            lines.append(("N_exact_2d", report.nmin_exact_2d))
        lines += [("N_lower", report.nmin_lower), ("N_upper", report.nmin_upper)]
        lines.append(("lower_bound_reachable", "yes" if report.lower_bound_reachable else "unknown"))
    if args.ea:
        lines += [
            ("ea_f1", _fmt(report.ea_f1)),
            ("ea_N_lower", report.ea_nmin_lower if report.ea_nmin_lower is not None else "n/a"),
            ("ea_N_upper", report.ea_nmin_upper if report.ea_nmin_upper is not None else "n/a"),
        ]
    _emit(lines)
    if not report.distinguishable:
        print("not sequentially distinguishable from the identity")
    return EXIT_OK


def synthesize(channel: KrausChannel, config: OptimizerConfig, scheme: str = "auto") -> ProtocolPlan:
    f1 = f1_identity(channel, config)
    if not f1.distinguishable:
        raise DomainError(f"not sequentially distinguishable from the identity (f1 = {f1.value:.10g})")
    if scheme == "2d" or (scheme == "auto" and channel.dim == 2):
        return plan_2d(channel, f1, config)
    a0 = alpha0(channel, f1, config) if f1.theta < math.pi / 2 - 1e-9 else None
    return plan_general(channel, f1, a0, config)


def cmd_protocol(args) -> int:
    channel = load_channel(args.channel)
    plan = synthesize(channel, _config(args), args.scheme)
    if args.trace:
        save_json(args.trace, plan_to_dict(plan))
    schedule = plan.overlap_schedule()
    if args.json:
        sys.stdout.write(render_json({
            "rounds": plan.claimed_queries,
            "overlap_schedule": schedule,
            "terminal_leak": plan.terminal_leak(),
            "plan_path": args.trace,
        }))
        return EXIT_OK
    lines = [
        ("channel", channel.name or "(unnamed)"),
        ("rounds", plan.claimed_queries),
        ("overlap_schedule", ", ".join(f"{x:.4f}" for x in schedule)),
        ("terminal_leak", f"{plan.terminal_leak():.3e}"),
    ]
    if args.trace:
        lines.append(("plan", args.trace))
    _emit(lines)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.shots < 1:
        raise UsageError("--shots must be at least 1")
    kind, data = load_document(args.input)
    if kind == "plan":
        plan = plan_from_dict(data, args.input)
    else:
        plan = synthesize(channel_from_dict(data, args.input), _config(args))
    rep = monte_carlo(plan, args.shots, args.seed)
    if args.json:
        sys.stdout.write(render_json(rep.to_dict()))
    else:
        _emit([
            ("shots", rep.shots),
            ("wrong_guesses", rep.wrong_guesses),
            ("empirical_error", _fmt(rep.empirical_error)),
            ("max_terminal_leak", f"{rep.max_terminal_leak:.3e}"),
            ("seed", rep.seed),
        ])
    return EXIT_OK if rep.wrong_guesses == 0 else EXIT_DOMAIN


_FAMILY = re.compile(r"^(rotation|replace):([0-9.eE+-]+)$")


def known_angle(channel: KrausChannel) -> Optional[float]:
    """Exact angle to the identity for channels tagged with a recognized family name."""
    name = channel.name or ""
    if name == "identity":
        return 0.0
    m = _FAMILY.match(name)
    if not m:
        return None
    try:
        theta = float(m.group(2))
    except ValueError:
        return None
    return theta if 0.0 <= theta <= math.pi / 2 else None


def parse_grid(spec: str) -> List[float]:
    """``"a,b,c"`` lists values; ``"start:stop:count"`` spaces ``count`` values evenly, ends included."""
    try:
        if ":" in spec:
            start, stop, count = spec.split(":")
            n = int(count)
            if n < 1:
                raise ValueError
            return [float(x) for x in np.linspace(float(start), float(stop), n)]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad grid specification {spec!r}") from None


def cmd_verify(args) -> int:
    if args.mode == "lemma2":
        if len(args.channels) != 1:
            raise UsageError("lemma2 mode takes exactly one channel")
        channel = load_channel(args.channels[0])
        config = _config(args)
        f1 = f1_identity(channel, config)
        if not f1.distinguishable:
            raise DomainError("f1 = 1: nothing to verify")
        a0 = alpha0(channel, f1, config)
        if a0.cos_alpha0 >= 1.0 - 1e-12:
            raise DomainError("alpha0 = 0 (single-query channel): the bound is degenerate")
        grid = parse_grid(args.alphas) if args.alphas else list(np.linspace(0.0, a0.alpha0, 20))
        rep = verify_lemma2(channel, f1, a0, grid)
    else:
        if len(args.channels) not in (1, 2):
            raise UsageError("thm4 mode takes one or two channels")
        ch0 = load_channel(args.channels[0])
        ch1 = load_channel(args.channels[1]) if len(args.channels) == 2 else identity_channel(ch0.dim)
        theta0 = args.theta0 if args.theta0 is not None else known_angle(ch0)
        theta1 = args.theta1 if args.theta1 is not None else known_angle(ch1)
        if theta0 is None or theta1 is None:
            raise DomainError(
                "exact angles are required: optimized angles underestimate the true ones and would "
                "make the bound look stronger than it is; pass --theta0/--theta1 or use a channel "
                "named rotation:<angle> or replace:<angle>"
            )
        rep = verify_thm4(ch0, ch1, theta0, theta1, parse_grid(args.q), args.samples, args.seed)
    if args.json:
        sys.stdout.write(render_json({
            "kind": rep.kind,
            "rows": [r.__dict__ for r in rep.rows],
            "violations": rep.violations,
            "note": rep.note,
        }))
    else:
        sys.stdout.write(rep.to_csv())
        if rep.note:
            print(f"# {rep.note}")
        print(f"# violations: {rep.violations}")
    return EXIT_OK if rep.violations == 0 else EXIT_DOMAIN


# ==================================================================================================
# Entry point
# ==================================================================================================


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--starts", type=int, default=64, help="optimizer starts (default 64)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for the searches (default: all cores)")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    p = _Parser(prog="opdisc", description="Perfect discrimination of a quantum channel from the identity.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", parents=[common], help="check that a channel file is CPTP")
    s.add_argument("channel")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("report", parents=[common], help="fidelities and query-count bounds")
    s.add_argument("channel")
    s.add_argument("--ea", action="store_true", help="include entanglement-assisted quantities")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("protocol", parents=[common], help="synthesize a discrimination protocol")
    s.add_argument("channel")
    s.add_argument("--trace", metavar="OUT", help="write the plan to this file")
    s.add_argument("--scheme", choices=("auto", "2d", "general"), default="auto")
    s.set_defaults(func=cmd_protocol)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo run of a plan (or of a channel's plan)")
    s.add_argument("input", help="plan file or channel file")
    s.add_argument("--shots", type=int, default=10000)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", parents=[common], help="check the fidelity bounds numerically")
    s.add_argument("mode", choices=("lemma2", "thm4"))
    s.add_argument("channels", nargs="+")
    s.add_argument("--q", default="0:1:11", help="overlap grid, 'a,b,c' or 'start:stop:count'")
    s.add_argument("--alphas", help="angle grid for lemma2 mode (default: 20 points in [0, alpha0])")
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--theta0", type=float)
    s.add_argument("--theta1", type=float)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.starts < 1 or args.threads < 1:
            raise UsageError("--starts and --threads must be positive")
        if not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"opdisc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ChannelFileError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"opdisc: cannot read input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OptimizerError, SynthesisError) as exc:
        print(f"opdisc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidChannelError, DomainError, InfeasibleTransformError) as exc:
        print(f"opdisc: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OpdiscError as exc:
        print(f"opdisc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
