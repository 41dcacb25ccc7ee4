"""Command-line entry point: ``kljn <simulate|figure|attack|keyexchange|cf-check>``.

Every command is deterministic given its flags.  Parameters may also come
from a flat ``key=value`` file passed with ``--config``; explicit flags win.
No environment variables are read.

Exit codes: 0 success, 1 usage or validation error, 2 runtime or I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import derive_rng
from .eve import DISTINGUISHER_KINDS, estimate_advantage, make_distinguisher
from .loop import LoopState, ResistorPair, simulate_state, write_trace_csv
from .noise import FAMILIES, char_function, empirical_cf, explicit_assignment, johnson_scaling, make_model, sample_noise
from .protocol import SessionConfig, johnson_session_assignment, run_key_exchange

FIGURE_STREAM = 4
FIG3_ALPHAS = (0.5, 1.0, 1.5, 2.0)
FIGURE_N = 8192


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n")


def _manifest(command: str, args: argparse.Namespace, **extra) -> dict:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    return {"command": command, "version": __version__, "parameters": params, **extra}


def _read_config(path: Path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# -- shared flag groups -----------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="unsigned 64-bit master seed")
    p.add_argument("--config", type=Path, help="key=value parameter file; flags take precedence")


def _add_pair(p):
    p.add_argument("--r-low", type=float, default=1e3, help="low resistance, ohms")
    p.add_argument("--r-high", type=float, default=1e4, help="high resistance, ohms")


def _add_noise(p, families=FAMILIES):
    p.add_argument("--noise", choices=families, default="gaussian")
    p.add_argument("--alpha", type=float, help="stability parameter for --noise stable")
    p.add_argument("--magnitude", type=float, default=1.0, help="high-resistor noise magnitude, volts")
    p.add_argument("--scaling", choices=("johnson", "explicit"), default="johnson")
    p.add_argument(
        "--low-magnitude", type=float, help="low-resistor noise magnitude for --scaling explicit, volts"
    )


def _pair(args) -> ResistorPair:
    return ResistorPair(args.r_low, args.r_high)


def _assignment(args, pair):
    if args.noise == "stable" and args.alpha is None:
        raise ValueError("--noise stable needs --alpha")
    alpha = args.alpha if args.noise == "stable" else None
    if args.scaling == "johnson":
        return johnson_scaling(pair, args.noise, args.magnitude, alpha=alpha)
    if args.low_magnitude is None:
        raise ValueError("--scaling explicit needs --low-magnitude")
    return explicit_assignment(args.noise, args.low_magnitude, args.magnitude, alpha=alpha)


def _distinguisher(args):
    params = {}
    if args.distinguisher == "tail_quadrant":
        params = {"q": args.q}
    elif args.distinguisher == "ref_match":
        params = {"refs_per_state": args.refs_per_state, "ref_n": args.ref_n}
    return make_distinguisher(args.distinguisher, **params)


def _add_distinguisher_params(p):
    p.add_argument("--q", type=float, default=0.95, help="tail quantile for tail_quadrant")
    p.add_argument("--refs-per-state", type=int, default=8)
    p.add_argument("--ref-n", type=int, default=512)


# -- commands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise ValueError("--n must be >= 1")
    pair = _pair(args)
    assignment = _assignment(args, pair)
    trace = simulate_state(LoopState(args.state), pair, assignment, args.n, args.seed)
    write_trace_csv(trace, args.out)
    _write_json(Path(f"{args.out}.manifest.json"), _manifest("simulate", args, assignment=assignment.to_dict()))
    return 0


def _figure_datasets(fig_id: int, pair: ResistorPair):
    if fig_id == 2:
        asg = explicit_assignment("gaussian", 1.0, 1.5)
        return [(f"fig2_{s}", s, asg) for s in ("LH", "HL")]
    if fig_id == 3:
        return [
            (f"fig3_HL_alpha{a}", "HL", johnson_scaling(pair, "stable", 1.0, alpha=a)) for a in FIG3_ALPHAS
        ]
    if fig_id == 4:
        asg = johnson_scaling(pair, "uniform", 1.0)
        return [(f"fig4_{s}", s, asg) for s in ("LH", "HL")]
    raise ValueError(f"unknown figure id {fig_id}; expected 2, 3 or 4")


def cmd_figure(args) -> int:
    pair = ResistorPair(1e3, 1e4)
    datasets = _figure_datasets(args.id, pair)
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, (name, state, asg) in enumerate(datasets):
        trace = simulate_state(state, pair, asg, FIGURE_N, derive_rng(args.seed, FIGURE_STREAM, args.id, k))
        path = out_dir / f"{name}.csv"
        write_trace_csv(trace, path)
        entries.append(
            {
                "file": path.name,
                "state": state,
                "pair": pair.to_dict(),
                "assignment": asg.to_dict(),
                "n": FIGURE_N,
                "stream": [args.seed, FIGURE_STREAM, args.id, k],
            }
        )
    _write_json(out_dir / f"fig{args.id}_manifest.json", _manifest("figure", args, datasets=entries))
    return 0


def cmd_attack(args) -> int:
    if args.episodes < 10:
        raise ValueError("--episodes must be >= 10")
    if args.n < 2:
        raise ValueError("--n must be >= 2")
    pair = _pair(args)
    assignment = _assignment(args, pair)
    report = estimate_advantage(
        _distinguisher(args), pair, assignment, args.episodes, args.n, args.seed, n_jobs=args.jobs
    )
    record = report.to_dict()
    record["version"] = __version__
    args.out.write_text(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")
    print(report.to_table())
    return 0


def cmd_keyexchange(args) -> int:
    if args.bits < 1:
        raise ValueError("--bits must be >= 1")
    pair = _pair(args)
    if args.scaling == "johnson":
        assignment = johnson_session_assignment(pair, args.noise, args.thermal_constant)
    else:
        assignment = _assignment(args, pair)
    eve = None if args.eve == "none" else _distinguisher(argparse.Namespace(**{**vars(args), "distinguisher": args.eve}))
    config = SessionConfig(
        pair=pair,
        assignment=assignment,
        thermal_constant=args.thermal_constant,
        bits_requested=args.bits,
        samples_per_bit=args.samples_per_bit,
        master_seed=args.seed,
        eve_distinguisher=eve,
    )
    result = run_key_exchange(config)
    report = result.to_dict()
    report["manifest"] = _manifest("keyexchange", args)
    _write_json(args.out, report)
    if args.periods_out is not None:
        result.write_periods_csv(args.periods_out)
    eve_acc = "n/a" if result.eve_accuracy is None else f"{result.eve_accuracy:.4f}"
    print(
        f"kept {result.kept_periods} of {result.total_periods} periods, "
        f"agreement {result.agreement_rate:.4f}, eve accuracy {eve_acc}"
    )
    return 0


def cmd_cf_check(args) -> int:
    if args.n < 1:
        raise ValueError("--n must be >= 1")
    if args.t is not None:
        grid = np.array([float(x) for x in args.t.split(",")])
    else:
        if args.t_steps < 1:
            raise ValueError("--t-steps must be >= 1")
        grid = np.linspace(args.t_min, args.t_max, args.t_steps)
    if args.noise == "stable" and args.alpha is None:
        raise ValueError("--noise stable needs --alpha")
    model = make_model(args.noise, args.magnitude, args.alpha if args.noise == "stable" else None)
    samples = sample_noise(model, args.n, args.seed)
    emp = np.atleast_1d(empirical_cf(samples, grid))
    exact = np.atleast_1d(char_function(model, grid))
    lines = ["t,empirical,exact,abs_error"]
    lines += [f"{t:.17g},{e:.17g},{x:.17g},{abs(e - x):.17g}" for t, e, x in zip(grid, emp, exact)]
    args.out.write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")
    bound = 3.0 / math.sqrt(args.n)
    _write_json(
        Path(f"{args.out}.manifest.json"),
        _manifest("cf-check", args, max_abs_error=float(np.max(np.abs(emp - exact))), bound_3_over_sqrt_n=bound),
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kljn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kljn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write one wire trace as CSV")
    p.add_argument("--state", choices=[s.value for s in LoopState], default="LH")
    _add_pair(p)
    _add_noise(p)
    p.add_argument("--n", type=int, default=FIGURE_N)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("figure", help="write scatter datasets for figure 2, 3 or 4")
    p.add_argument("--id", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("attack", help="estimate a distinguisher's advantage")
    p.add_argument("--distinguisher", choices=DISTINGUISHER_KINDS, required=True)
    _add_distinguisher_params(p)
    _add_pair(p)
    _add_noise(p)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--n", type=int, default=4096, help="samples per episode")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers; does not change results")
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("keyexchange", help="run a key-exchange session")
    _add_pair(p)
    _add_noise(p, families=("gaussian", "uniform"))
    p.add_argument("--thermal-constant", type=float, default=1e-4, help="c in sigma^2 = c R, V^2/ohm")
    p.add_argument("--bits", type=int, default=128)
    p.add_argument("--samples-per-bit", type=int, default=4096)
    p.add_argument("--eve", choices=("none",) + DISTINGUISHER_KINDS, default="corr_sign")
    _add_distinguisher_params(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--periods-out", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_keyexchange)

    p = sub.add_parser("cf-check", help="compare empirical and exact characteristic functions")
    _add_noise(p)
    p.add_argument("--n", type=int, default=2**16)
    p.add_argument("--t", help="comma-separated t values; overrides the grid flags")
    p.add_argument("--t-min", type=float, default=0.1)
    p.add_argument("--t-max", type=float, default=3.0)
    p.add_argument("--t-steps", type=int, default=30)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_cf_check)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            values = _read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known - {"config"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        # feed file values in front of the real flags so the latter win
        prefix = [f"--{k.replace('_', '-')}={v}" for k, v in values.items() if k != "config"]
        argv = list(sys.argv[1:] if argv is None else argv)
        args = parser.parse_args([argv[0], *prefix, *argv[1:]])
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, TypeError) as exc:
        print(f"kljn {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError) as exc:
        print(f"kljn {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
