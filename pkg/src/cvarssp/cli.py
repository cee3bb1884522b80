"""Command-line driver: ``solve``, ``generate`` and ``audit``.

Exit status is 0 on success, 2 when a model violates a solver assumption and 1
for usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from contextlib import ExitStack
from fractions import Fraction
from pathlib import Path

from .chain import NotAChainError, cvar_chain
from .lp import BACKENDS, to_lp_format
from .lp.cvar import solve_cvar_lp
from .model import (
    EXACT,
    AssumptionError,
    ModelError,
    ThresholdQuery,
    float_mode,
    parse_model,
    parse_number,
    serialize_model,
    validate_assumptions,
)
from .models import GridSpec, WalkSpec, gen_fig2, gen_fig2_chain, gen_fig4, gen_grid, gen_walk
from .policy import PolicyError, dump_policy, load_policy, stationary
from .simulate import simulate_policy
from .ssp import solve_ssp
from .vi import WITNESS_STATE_LIMIT, solve_cvar_vi

EXACT_PAIR_LIMIT = 10_000
CSV_COLUMNS = ("threshold", "var", "cvar", "engine", "wall_time")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _thresholds(text: str) -> ThresholdQuery:
    try:
        return ThresholdQuery.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _fraction(text: str) -> Fraction:
    try:
        return parse_number(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _cell(text: str) -> tuple[int, int]:
    try:
        x, y = text.split(",")
        return int(x), int(y)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvarssp", description="CVaR-optimal planning in stochastic shortest path models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = sub.add_parser("solve", help="optimal VaR and CVaR for one or more thresholds")
    solve.add_argument("--model", required=True, help="model file, or - for standard input")
    solve.add_argument("--method", choices=("mc", "lp", "vi"), default="vi")
    solve.add_argument("--threshold", required=True, type=_thresholds, help="comma-separated, each in (0, 1)")
    solve.add_argument("--mode", choices=("exact", "float"), help="default: exact up to 10^4 state-action pairs")
    solve.add_argument("--lp-backend", choices=BACKENDS, help="LP solver (default follows --mode)")
    solve.add_argument("--policy-out", type=Path, help="write the witness policy here")
    solve.add_argument("--trace", type=Path, help="per-iteration CSV of the vi engine")
    solve.add_argument("--export-lp", type=Path, metavar="DIR", help="write every LP the lp engine builds")
    solve.add_argument("--seed", type=int, default=0, help="seed for --audit")
    solve.add_argument("--audit", type=_positive_int, metavar="SAMPLES", help="simulate the witness policy")
    solve.add_argument("--output", choices=("json", "csv"), default="json")

    gen = sub.add_parser("generate", help="write a benchmark model")
    gen_sub = gen.add_subparsers(dest="family", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--out", type=Path, help="output file (default: standard output)")
    common.add_argument("--check", action="store_true", help="also validate the assumptions")
    grid = gen_sub.add_parser("grid", parents=[common], help="robot and janitor grid")
    grid.add_argument("--x", type=int, default=4, help="grid width")
    grid.add_argument("--obstacles", default="1,1;3,2", help="semicolon-separated x,y cells ('' for none)")
    grid.add_argument("--start", type=_cell, default=(0, 0))
    grid.add_argument("--charger", type=_cell)
    grid.add_argument("--janitor-x", type=int, help="leftmost column of the janitor block")
    grid.add_argument("--janitor-start", type=_cell, default=(2, 1))
    grid.add_argument("--janitor-facing", choices=tuple("NESW"), default="N")
    grid.add_argument("--p-forward", type=_fraction, default=Fraction(1, 2))
    grid.add_argument("--p-turn", type=_fraction, default=Fraction(1, 4))
    walk = gen_sub.add_parser("walk", parents=[common], help="walk-or-gamble line")
    walk.add_argument("--n", type=int, required=True)
    fig2 = gen_sub.add_parser("fig2", parents=[common], help="exponential-memory example")
    fig2.add_argument("--n", type=int, required=True)
    fig2.add_argument("--k", type=int, help="omit for the plain cycle chain")
    fig2.add_argument("--p", type=_fraction, default=Fraction(1, 2))
    fig4 = gen_sub.add_parser("fig4", parents=[common], help="VaR-versus-CVaR counterexample")
    fig4.add_argument("--k", type=int, required=True)

    audit = sub.add_parser("audit", help="simulate a policy and report empirical risk")
    audit.add_argument("--model", required=True)
    audit.add_argument("--policy", required=True, type=Path)
    audit.add_argument("--threshold", required=True, type=_thresholds)
    audit.add_argument("--samples", type=_positive_int, default=100_000)
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--horizon", type=_positive_int, help="cost at which runs are censored")
    return parser


def _read_model(path: str, exact: bool):
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    return parse_model(text, exact=exact)


def _fmt(x) -> str:
    return str(x) if isinstance(x, Fraction) else repr(float(x))


def _policy_path(base: Path, k: int, total: int) -> Path:
    if total == 1:
        return base
    return base.with_name(f"{base.stem}_t{k}{base.suffix}")


def cmd_solve(args, out) -> int:
    text_mode = args.mode
    model = _read_model(args.model, exact=text_mode != "float")
    if text_mode is None:
        text_mode = "exact" if model.n_state_actions <= EXACT_PAIR_LIMIT else "float"
    numeric = EXACT if text_mode == "exact" else float_mode()
    if args.trace and args.method != "vi":
        raise UsageError("--trace needs --method vi")
    if args.export_lp and args.method != "lp":
        raise UsageError("--export-lp needs --method lp")
    report = validate_assumptions(model)
    if not report.ok:
        raise AssumptionError(report.summary())
    q = args.threshold
    want_policy = args.policy_out is not None or args.audit is not None
    e = solve_ssp(model, numeric)
    records, policies = [], []
    method = args.method
    if method == "mc":
        if not model.is_chain:
            raise NotAChainError("model is not a Markov chain")
        if not model.is_uniform:
            method = "vi"  # non-uniform chains go through the Pareto engine

    if method == "mc":
        for t in q:
            t0 = time.perf_counter()
            res = cvar_chain(model, t, numeric)
            records.append((t, res, "mc", time.perf_counter() - t0))
            policies.append(stationary(e.tail_policy))
    elif method == "lp":
        if args.export_lp:
            args.export_lp.mkdir(parents=True, exist_ok=True)
        for k, t in enumerate(q):
            def export(n, lp, k=k):
                if args.export_lp:
                    (args.export_lp / f"cvar_t{k}_n{n}.lp").write_text(to_lp_format(lp, f"threshold {t}, VaR guess {n}"))
            t0 = time.perf_counter()
            res, pol, _ = solve_cvar_lp(model, t, numeric, backend=args.lp_backend, e=e, on_lp=export)
            records.append((t, res, "lp", time.perf_counter() - t0))
            policies.append(pol)
    else:
        witness = want_policy and model.n_states <= WITNESS_STATE_LIMIT
        with ExitStack() as stack:
            trace = stack.enter_context(open(args.trace, "w", newline="")) if args.trace else None
            t0 = time.perf_counter()
            out_vi = solve_cvar_vi(model, q, numeric, trace=trace, witness=witness, e=e)
            elapsed = time.perf_counter() - t0
        for t in q:
            item = out_vi[numeric.convert(t)]
            res, pol = item if witness else (item, None)
            if want_policy and pol is None:
                pol = solve_cvar_lp(model, t, numeric, backend=args.lp_backend, e=e)[1]
            records.append((t, res, "vi", elapsed))
            policies.append(pol)

    if args.policy_out:
        for k, pol in enumerate(policies):
            _policy_path(args.policy_out, k, len(policies)).write_text(dump_policy(model, pol))

    audits = {}
    if args.audit:
        for (t, res, _, _), pol in zip(records, policies):
            rep = simulate_policy(model, pol, ThresholdQuery.of([t]), args.audit, args.seed, engine_cvar=res.cvar)
            audits[t] = rep

    if args.output == "csv":
        writer = csv.writer(out)
        writer.writerow(CSV_COLUMNS)
        for t, res, engine, wall in records:
            writer.writerow([_fmt(t), res.var, _fmt(res.cvar), engine, f"{wall:.6f}"])
    else:
        doc = {
            "model": args.model,
            "method": args.method,
            "mode": numeric.name,
            "expected_cost": _fmt(e.e[model.initial]),
            "results": [],
        }
        for t, res, engine, wall in records:
            rec = {
                "threshold": _fmt(t),
                "var": res.var,
                "cvar": _fmt(res.cvar),
                "cvar_float": float(res.cvar),
                "engine": engine,
                "wall_time": wall,
            }
            if t in audits:
                rep = audits[t]
                tf = float(t)
                rec["audit"] = {
                    "samples": rep.samples,
                    "censored": rep.censored,
                    "seed": rep.seed,
                    "var": rep.results[tf].var,
                    "cvar": rep.results[tf].cvar,
                    "half_width": rep.half_width[tf],
                }
            doc["results"].append(rec)
        json.dump(doc, out, indent=2)
        out.write("\n")
    return 0


def _generate(args):
    if args.family == "walk":
        return gen_walk(WalkSpec(args.n))
    if args.family == "fig4":
        return gen_fig4(args.k)
    if args.family == "fig2":
        return gen_fig2_chain(args.n, args.p) if args.k is None else gen_fig2(args.n, args.k, args.p)
    obstacles = frozenset(_cell(c) for c in args.obstacles.split(";") if c.strip())
    spec = GridSpec(
        width=args.x,
        obstacles=obstacles,
        start=args.start,
        charger=args.charger,
        janitor_x=args.janitor_x,
        janitor_start=args.janitor_start,
        janitor_facing="NESW".index(args.janitor_facing),
        p_forward=args.p_forward,
        p_turn=args.p_turn,
    )
    return gen_grid(spec)


def cmd_generate(args, out) -> int:
    model = _generate(args)
    text = serialize_model(model)
    if args.out:
        args.out.write_text(text)
    else:
        out.write(text)
    if args.check:
        report = validate_assumptions(model)
        print(f"check: {report.summary()}", file=sys.stderr)
        if not report.ok:
            return 2
    return 0


def cmd_audit(args, out) -> int:
    model = _read_model(args.model, exact=True)
    pol = load_policy(model, args.policy.read_text())
    rep = simulate_policy(model, pol, args.threshold, args.samples, args.seed, horizon=args.horizon)
    doc = {
        "samples": rep.samples,
        "completed": rep.completed,
        "censored": rep.censored,
        "horizon": rep.horizon,
        "seed": rep.seed,
        "mean": rep.mean,
        "mean_half_width": rep.mean_half_width,
        "results": [
            {"threshold": t, "var": r.var, "cvar": r.cvar, "half_width": rep.half_width[t]}
            for t, r in rep.results.items()
        ],
    }
    json.dump(doc, out, indent=2)
    out.write("\n")
    return 0


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"solve": cmd_solve, "generate": cmd_generate, "audit": cmd_audit}[args.command]
    try:
        return handler(args, out)
    except (AssumptionError, NotAChainError) as exc:
        print(f"cvarssp: assumption violated: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ModelError, PolicyError, OSError, ValueError) as exc:
        print(f"cvarssp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
