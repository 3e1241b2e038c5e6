"""Command-line driver.

Exit codes: 0 ok, 2 validation failure (arguments, instance, profile), 3 budget
exceeded, 4 stage failure.
Errors go to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import io as aio
from .core import LayeredInstance, is_valid_solution, solution_degree, validate_instance
from .experiments import gap_sweep
from .generators import HardInstanceLP, gen_hard_instance, gen_maxkcover_instance, gen_planted, gen_random_layered
from .lll_rounder import StageFailure, round_single_source
from .local_search import DESK_CONSTANTS, PAPER_CONSTANTS, StepCapExceeded, SearchState, exact_oracle, solve_multi_source
from .oracle import BudgetExceeded, brute_force_opt, halved_randomized_rounding, naive_randomized_rounding, sink_congestion_stats
from .params import PRESETS, ProfileError, make_profile
from .path_lp import NumericalFailure, PathBudgetExceeded, max_feasible_k
from .pipeline import run_pipeline
from .pruning import PremiseViolated, ResampleCapExceeded, local_to_global
from .reductions import InfeasibleReduction, prune_to_bounded_depth
from .sparsifier import RetriesExhausted, sparsify

log = logging.getLogger("maxmin_arbor")


class ValidationFailure(RuntimeError):
    pass


# flag defaults applied after the config file
DEFAULTS = {"profile": "desk-small", "jobs": 1, "format": "json", "out": "-", "alpha": 1.0,
            "constants": "desk", "node_cap": 2_000_000, "congestion": 1, "mode": "bounded-depth",
            "h": None, "B": 64, "q": 8, "pairs": 200}


def _int_range(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="u64 seed; required by randomized commands")
    common.add_argument("--profile", choices=sorted(PRESETS))
    common.add_argument("--k", type=int)
    common.add_argument("--out", help="output path, '-' for stdout")
    common.add_argument("--jobs", type=int)
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--config", help="JSON file with flag values and profile_overrides")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="maxmin-arbor", description="Max-min degree arborescence toolkit")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate an instance")
    gsub = g.add_subparsers(dest="kind", required=True)
    r = gsub.add_parser("random", parents=[common])
    r.add_argument("--h", type=int, required=True)
    r.add_argument("--widths", required=True, help="comma-separated layer sizes")
    r.add_argument("--edge-prob", type=float, required=True)
    pl = gsub.add_parser("planted", parents=[common])
    pl.add_argument("--h", type=int, required=True)
    pl.add_argument("--sources", type=int, default=1)
    pl.add_argument("--noise", type=float, default=0.0)
    hd = gsub.add_parser("hard", parents=[common])
    hd.add_argument("--h", type=int, required=True)
    hd.add_argument("--B", type=int)
    hd.add_argument("--q", type=int)
    hd.add_argument("--m", type=int, help="sink count (default q^h)")
    mk = gsub.add_parser("maxkcover", parents=[common])
    mk.add_argument("--m", type=int, required=True)
    mk.add_argument("--sets", required=True, help="JSON list of sets, or @file")

    o = sub.add_parser("oracle", parents=[common], help="exact brute-force optimum")
    o.add_argument("instance")
    o.add_argument("--node-cap", type=int)

    lp = sub.add_parser("lp", parents=[common], help="largest feasible k of the path LP")
    lp.add_argument("instance")

    sp = sub.add_parser("sparsify", parents=[common])
    sp.add_argument("instance")

    rd = sub.add_parser("round", parents=[common], help="single-source LLL rounding")
    rd.add_argument("instance")
    rd.add_argument("--trace", help="JSONL per-layer trace")

    pr = sub.add_parser("prune", parents=[common])
    pr.add_argument("instance")
    pr.add_argument("solution")
    pr.add_argument("--mode", choices=["bounded-depth", "local-to-global"])

    ls = sub.add_parser("localsearch", parents=[common], help="multi-source local search")
    ls.add_argument("instance")
    ls.add_argument("--alpha", type=float)
    ls.add_argument("--constants", choices=["desk", "paper"])
    ls.add_argument("--node-cap", type=int)
    ls.add_argument("--trace", help="potential trace CSV")

    pp = sub.add_parser("pipeline", parents=[common], help="full single-source pipeline")
    pp.add_argument("instance")

    vf = sub.add_parser("verify", parents=[common])
    vf.add_argument("instance")
    vf.add_argument("solution")
    vf.add_argument("--congestion", type=int)

    bl = sub.add_parser("baseline", help="randomized-rounding baselines")
    bsub = bl.add_subparsers(dest="variant", required=True)
    for name in ("naive", "halved"):
        b = bsub.add_parser(name, parents=[common])
        b.add_argument("instance")

    ex = sub.add_parser("experiment", help="Monte-Carlo experiments")
    esub = ex.add_subparsers(dest="experiment", required=True)
    gs = esub.add_parser("gapsweep", parents=[common])
    gs.add_argument("--h", type=_int_range, help="e.g. 2..4")
    gs.add_argument("--B", type=int)
    gs.add_argument("--q", type=int)
    gs.add_argument("--pairs", type=int)
    return p


def _merge_config(args: argparse.Namespace) -> dict:
    cfg = {}
    if args.config:
        cfg = aio.read_json(args.config)
    for key, val in cfg.items():
        if key == "profile_overrides":
            continue
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            if attr == "h" and isinstance(val, str):
                val = _int_range(val)
            setattr(args, attr, val)
    for key, val in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, val)
    return cfg.get("profile_overrides") or {}


def _need_seed(args) -> int:
    if args.seed is None:
        raise ValidationFailure(f"{args.cmd} is randomized and requires --seed")
    if not 0 <= args.seed < 2 ** 64:
        raise ValidationFailure("--seed must be an unsigned 64-bit integer")
    return args.seed


def _emit(args, obj, rows: list[dict] | None = None) -> None:
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
        if args.out in (None, "-"):
            sys.stdout.write(text)
        else:
            with open(args.out, "w") as fh:
                fh.write(text)
        return
    aio.write_json(obj, args.out)


def _load_layered(path: str) -> LayeredInstance:
    inst = aio.load_instance(path)
    probs = validate_instance(inst.base if isinstance(inst, LayeredInstance) else inst)
    if probs:
        raise ValidationFailure(f"invalid instance: {probs[:3]}")
    if not isinstance(inst, LayeredInstance):
        raise ValidationFailure("this command needs a layered instance (with 'layers')")
    return inst


def _profile(args, li: LayeredInstance, k: int, overrides: dict):
    return make_profile(args.profile, li.n, k, overrides)


def _lp_k(li: LayeredInstance, k: int | None):
    k_star, x = max_feasible_k(li)
    k_use = k_star if k is None else k
    if k_use > k_star:
        raise StageFailure("lp", f"path LP infeasible at k={k_use} (max {k_star})")
    return k_use, x


def cmd_gen(args, overrides) -> None:
    rng = np.random.default_rng(_need_seed(args))
    if args.kind == "random":
        widths = [int(w) for w in args.widths.split(",")]
        li = gen_random_layered(args.h, widths, args.edge_prob, rng)
    elif args.kind == "planted":
        if args.k is None:
            raise ValidationFailure("gen planted needs --k")
        li, _ = gen_planted(args.k, args.h, args.sources, args.noise, rng)
    elif args.kind == "hard":
        B = args.B or 64
        q = args.q or 8
        li = gen_hard_instance(args.h, B, q, args.m or q ** args.h, rng)
    else:
        text = args.sets
        sets = json.loads(open(text[1:]).read() if text.startswith("@") else text)
        if args.k is None:
            raise ValidationFailure("gen maxkcover needs --k")
        li = gen_maxkcover_instance(args.m, sets, args.k)
    d = aio.instance_to_dict(li)
    d.setdefault("provenance", {})["seed"] = args.seed
    _emit(args, d)


def cmd_oracle(args, overrides) -> None:
    inst = aio.load_instance(args.instance)
    base = inst.base if isinstance(inst, LayeredInstance) else inst
    k, w = brute_force_opt(base, node_cap=args.node_cap)
    _emit(args, {"k_opt": k, "solution": aio.solution_to_dict(w)})


def cmd_lp(args, overrides) -> None:
    li = _load_layered(args.instance)
    k_star, x = max_feasible_k(li)
    pi = x.index
    vals = [{"path": list(pi.path(i)), "x": round(float(x.value(i)), 12)}
            for i in range(len(pi)) if x.value(i) > 1e-12]
    _emit(args, {"k_max": k_star, "paths": len(pi), "x": vals}, rows=[{"k_max": k_star, "paths": len(pi)}])


def cmd_sparsify(args, overrides) -> None:
    li = _load_layered(args.instance)
    rng = np.random.default_rng(_need_seed(args))
    k, x = _lp_k(li, args.k)
    prof = _profile(args, li, k, overrides)
    wm = sparsify(x, k, prof, rng)
    _emit(args, {**wm.to_dict(), "attempts": wm.attempts, "profile": prof.to_dict()})


def cmd_round(args, overrides) -> None:
    li = _load_layered(args.instance)
    rng = np.random.default_rng(_need_seed(args))
    k, x = _lp_k(li, args.k)
    prof = _profile(args, li, k, overrides).validate()
    rep: dict = {}
    out = round_single_source(li, k, prof, rng, x=x, report=rep, trace_path=args.trace)
    _emit(args, {**aio.solution_to_dict(out), "k": k, "profile": prof.to_dict(),
                 "max_local": rep["max_local"], "max_global": rep["max_global"], "R": rep["R"]})


def cmd_prune(args, overrides) -> None:
    inst = aio.load_instance(args.instance)
    sol = aio.load_solution(args.solution)
    base = inst.base if isinstance(inst, LayeredInstance) else inst
    k = args.k if args.k is not None else solution_degree(base, sol)
    if args.mode == "bounded-depth":
        out = prune_to_bounded_depth(sol, k)
        _emit(args, {**aio.solution_to_dict(out), "k_in": k})
    else:
        rng = np.random.default_rng(_need_seed(args))
        li = inst if isinstance(inst, LayeredInstance) else None
        n = li.n if li else base.n
        prof = make_profile(args.profile, n, k, overrides)
        stats: dict = {}
        out = local_to_global(sol, k, prof, rng, stats)
        stats.pop("samples", None)
        _emit(args, {**aio.solution_to_dict(out), "k_in": k, "stats": stats, "profile": prof.to_dict()})


def cmd_localsearch(args, overrides) -> None:
    li = _load_layered(args.instance)
    if args.k is None:
        raise ValidationFailure("localsearch needs --k (the target optimum)")
    consts = DESK_CONSTANTS if args.constants == "desk" else PAPER_CONSTANTS
    states: list[SearchState] = []
    out = solve_multi_source(li, args.k, exact_oracle(args.node_cap), args.alpha, consts, state_out=states)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(states[0].potential_csv())
    _emit(args, {**aio.solution_to_dict(out), "degree": consts.degrees(args.k, args.alpha)[2],
                 "steps": len(states[0].trace)})


def cmd_pipeline(args, overrides) -> None:
    inst = aio.load_instance(args.instance)
    art = run_pipeline(inst, _need_seed(args), args.profile, args.k, overrides)
    pair = json.dumps({"degree": art["degree"], "congestion": art["congestion"]})
    # the artifact owns stdout when --out is '-'
    print(pair, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    _emit(args, art, rows=[{"degree": art["degree"], "congestion": art["congestion"]}])


def cmd_verify(args, overrides) -> None:
    inst = aio.load_instance(args.instance)
    base = inst.base if isinstance(inst, LayeredInstance) else inst
    sol = aio.load_solution(args.solution)
    k = args.k if args.k is not None else solution_degree(base, sol)
    res = is_valid_solution(base, sol, k, args.congestion)
    _emit(args, {"ok": res.ok, "k": k, "congestion": args.congestion, "reasons": res.reasons,
                 "warnings": res.warnings})
    if not res.ok:
        raise ValidationFailure("solution invalid: " + "; ".join(res.reasons[:3]))


def cmd_baseline(args, overrides) -> None:
    li = _load_layered(args.instance)
    rng = np.random.default_rng(_need_seed(args))
    prov = li.provenance or {}
    if prov.get("generator") == "hard":
        if args.k is None:
            raise ValidationFailure("baseline on a gap instance needs --k")
        k, x = args.k, HardInstanceLP(li, args.k)
    else:
        k, x = _lp_k(li, args.k)
    fn = naive_randomized_rounding if args.variant == "naive" else halved_randomized_rounding
    sol = fn(x, k, rng)
    stats = sink_congestion_stats(sol, li.sinks)
    _emit(args, {**aio.solution_to_dict(sol), "k": k, "stats": stats},
          rows=[{"k": k, "mean": stats["mean"], "max": stats["max"], "selected": stats["selected"]}])


def cmd_experiment(args, overrides) -> None:
    seed = _need_seed(args)
    hs = args.h or [2, 3, 4]
    rows = gap_sweep(hs, args.B, args.q, args.pairs, seed, args.jobs)
    _emit(args, {"rows": rows, "seed": seed}, rows=rows)


COMMANDS = {"gen": cmd_gen, "oracle": cmd_oracle, "lp": cmd_lp, "sparsify": cmd_sparsify,
            "round": cmd_round, "prune": cmd_prune, "localsearch": cmd_localsearch,
            "pipeline": cmd_pipeline, "verify": cmd_verify, "baseline": cmd_baseline,
            "experiment": cmd_experiment}

BUDGET = (BudgetExceeded, PathBudgetExceeded, ResampleCapExceeded, StepCapExceeded, RetriesExhausted)


def _error(code: int, exc: BaseException) -> int:
    body = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, StageFailure):
        body["stage"] = exc.stage
        cause = exc.cause
        if isinstance(cause, BUDGET):
            code = body["exit_code"] = 3
    print(json.dumps(body, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _merge_config(args)
        COMMANDS[args.cmd](args, overrides)
    except (ValidationFailure, ProfileError) as e:
        return _error(2, e)
    except BUDGET as e:
        return _error(3, e)
    except (StageFailure, InfeasibleReduction, PremiseViolated, NumericalFailure, ValueError, OSError) as e:
        return _error(4, e)
    return 0


if __name__ == "__main__":
    sys.exit(main())
