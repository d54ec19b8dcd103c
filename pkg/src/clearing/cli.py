"""Command-line front end.

Exit codes: 0 on success, 1 when a checked claim fails, 2 for bad arguments.
Errors go to stderr as a readable line followed by a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import experiments as ex
from .calibration import CalibrationError, calibrate
from .policies import CostParams, PolicyKind, PolicySpec, metrics
from .simulator import simulate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would print and exit on its own
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clearing", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def output_opts(p):
        p.add_argument("-o", "--output", type=Path, help="write the result here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    def policy_opts(p, *, policy_required=True):
        p.add_argument("--policy", required=policy_required, type=str.upper,
                       choices=[k.value for k in PolicyKind], metavar="KIND",
                       help="one of " + ", ".join(k.value.lower() for k in PolicyKind))
        p.add_argument("--lambda", dest="lam", type=float, required=True, help="arrival rate")
        p.add_argument("--q", type=int, help="quantity parameter")
        p.add_argument("--T", "--t", dest="T", type=float, help="time parameter")

    def cost_opts(p):
        p.add_argument("--fixed-dispatch", type=float, help="fixed cost per dispatch (A_D)")
        p.add_argument("--unit-transport", type=float, default=0.0, help="cost per order shipped (C_D)")
        p.add_argument("--waiting-rate", type=float, default=0.0, help="waiting cost per order per unit time")

    p = sub.add_parser("eval", help="closed-form metrics for one policy")
    policy_opts(p)
    cost_opts(p)
    output_opts(p)

    p = sub.add_parser("simulate", help="regenerative simulation estimates for one policy")
    policy_opts(p)
    p.add_argument("--n-cycles", type=int, default=ex.SIM_CYCLES)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--workers", type=int, default=1)
    output_opts(p)

    p = sub.add_parser("calibrate", help="policy parameters for a target expected cycle length")
    policy_opts(p)
    p.add_argument("--target-cycle", type=float, required=True)
    output_opts(p)

    p = sub.add_parser("compare-ec", help="compare policies at a fixed expected cycle length")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--target-cycle", type=float, required=True)
    p.add_argument("--q-list", type=_int_list, default=list(ex.DEFAULT_Q))
    cost_opts(p)
    output_opts(p)

    p = sub.add_parser("compare-qt", help="compare policies at shared parameters q and T")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--T", "--t", dest="T", type=float, required=True)
    cost_opts(p)
    output_opts(p)

    p = sub.add_parser("verify", help="run the moment checks, both comparison grids and the simulation cross-checks")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--config", type=Path, help="JSON file with grid overrides")
    p.add_argument("--rates", type=_float_list)
    p.add_argument("--q-list", type=_int_list)
    p.add_argument("--T-list", "--t-list", dest="T_list", type=_float_list)
    p.add_argument("--n-cycles", type=int)
    output_opts(p)
    return parser


def _policy(args) -> PolicySpec:
    kind = PolicyKind.parse(args.policy)
    q = args.q if kind in (PolicyKind.QP, PolicyKind.HP1, PolicyKind.HP2, PolicyKind.RHP1) else None
    T = args.T if kind is not PolicyKind.QP else None
    if args.q is not None and q is None:
        raise UsageError(f"{kind.value} takes no --q")
    if args.T is not None and T is None:
        raise UsageError(f"{kind.value} takes no --T")
    return PolicySpec(kind, q=q, T=T)


def _cost(args) -> CostParams | None:
    if args.fixed_dispatch is None and not args.unit_transport and not args.waiting_rate:
        return None
    return CostParams(args.fixed_dispatch or 0.0, args.unit_transport, args.waiting_rate)


def _emit(args, payload: dict, rows: list[dict] | None = None) -> None:
    if args.format == "csv":
        rows = rows if rows is not None else [payload]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2) + "\n"
    if args.output is not None:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)


def _flat_spec(p: PolicySpec) -> dict:
    return {"kind": p.kind.value, "q": p.q, "T": p.T}


def cmd_eval(args) -> int:
    spec = _policy(args)
    m = metrics(spec, args.lam, _cost(args))
    _emit(args, {**_flat_spec(spec), "lambda": args.lam, **m.to_dict()})
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _policy(args)
    est = simulate(spec, args.lam, args.n_cycles, args.seed, workers=args.workers)
    payload = est.to_dict()
    flat = {**_flat_spec(spec), "lambda": args.lam, "n_cycles": est.n_cycles, "seed": est.seed}
    for name in ("mean_cycle", "mean_orders", "mean_wait", "aod_hat",
                 "martingale_residual_w", "martingale_residual_n"):
        e = getattr(est, name)
        flat[name], flat[name + "_se"] = e.value, e.se
    _emit(args, payload, [flat])
    return EXIT_OK


def cmd_calibrate(args) -> int:
    kind = PolicyKind.parse(args.policy)
    spec = calibrate(kind, args.q, args.target_cycle, args.lam)
    ec = metrics(spec, args.lam).expected_cycle
    _emit(args, {**_flat_spec(spec), "lambda": args.lam, "target_cycle": args.target_cycle,
                 "expected_cycle": ec})
    return EXIT_OK


def _report_out(args, reports: list[ex.ComparisonReport]) -> int:
    if args.format == "csv":
        text = ex.write_csv(reports)
        if args.output is not None:
            args.output.write_text(text)
        else:
            sys.stdout.write(text)
    else:
        payload = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
        _emit(args, payload)
    return EXIT_OK if all(r.all_hold for r in reports) else EXIT_FAIL


def cmd_compare_ec(args) -> int:
    return _report_out(args, [ex.compare_fixed_cycle(args.lam, args.target_cycle, args.q_list, _cost(args))])


def cmd_compare_qt(args) -> int:
    return _report_out(args, [ex.compare_fixed_params(args.lam, args.q, args.T, _cost(args))])


def _verify_settings(args) -> dict:
    settings = {"rates": list(ex.DEFAULT_RATES), "loads": list(ex.DEFAULT_CYCLE_LOADS),
                "q_list": list(ex.DEFAULT_Q), "T_list": list(ex.DEFAULT_T),
                "n_cycles": ex.SIM_CYCLES, "sim_grid": [list(g) for g in ex.SIM_GRID]}
    if args.config is not None:
        try:
            loaded = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(loaded) - set(settings)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update(loaded)
    for key in ("rates", "q_list", "T_list", "n_cycles"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    return settings


def cmd_verify(args) -> int:
    s = _verify_settings(args)
    started = time.perf_counter()
    sections = ex.verify(args.seed, rates=s["rates"], loads=s["loads"], q_list=s["q_list"],
                         T_list=s["T_list"], sim_grid=[tuple(g) for g in s["sim_grid"]],
                         n_cycles=s["n_cycles"])
    elapsed = time.perf_counter() - started
    summary = {}
    failures = []
    for name, reports in sections.items():
        verdicts = [v for r in reports for v in r.verdicts]
        bad = [v for v in verdicts if not v.holds]
        strict_margins = [v.margin for v in verdicts if v.mode == "strict"]
        summary[name] = {"verdicts": len(verdicts), "failed": len(bad),
                         "min_strict_margin": min(strict_margins) if strict_margins else None}
        failures += [{"section": name, **v.to_dict()} for v in bad]
    ok = not failures
    payload = {"seed": args.seed, "all_hold": ok, "seconds": elapsed, "settings": s,
               "sections": summary, "failures": failures}
    if args.format == "csv":
        reports = [r for name in ("fixed-cycle", "fixed-params") for r in sections[name]]
        text = ex.write_csv(reports)
        if args.output is not None:
            args.output.write_text(text)
        else:
            sys.stdout.write(text)
    else:
        if args.output is not None:
            payload["reports"] = {name: [r.to_dict() for r in reps] for name, reps in sections.items()}
        _emit(args, payload)
    if args.output is not None or args.format == "csv":
        sys.stderr.write(f"verify: {'all claims hold' if ok else f'{len(failures)} claim(s) failed'}"
                         f" ({elapsed:.1f} s)\n")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"eval": cmd_eval, "simulate": cmd_simulate, "calibrate": cmd_calibrate,
            "compare-ec": cmd_compare_ec, "compare-qt": cmd_compare_qt, "verify": cmd_verify}


def _fail(message: str, kind: str, code: int) -> int:
    sys.stderr.write(message + "\n")
    sys.stderr.write(json.dumps({"error": message, "type": kind, "exit_code": code}) + "\n")
    return code


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(str(exc), "usage", EXIT_USAGE)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, CalibrationError, ValueError) as exc:
        return _fail(f"clearing {args.command}: {exc}", type(exc).__name__, EXIT_USAGE)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
