"""Command-line entry point: ``nearincl {generate,run,verify,bench,kk-distance}``."""

import argparse
import json
import logging
import sys
from pathlib import Path

from .algebra import FdAlgebra
from .errors import InvalidInputError, NearInclusionError
from .scenario import (
    CONTAINERS,
    PerturbationScenario,
    ScenarioParams,
    bench,
    default_out_dir,
    generate_scenario,
    kk_distance,
    parse_seeds,
    parse_sweep,
    run_report,
    verify_certificate,
)
from .similarity import EXIT_CODES

log = logging.getLogger("nearincl")


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _params(args):
    return ScenarioParams(
        block_sizes=args.blocks,
        ambient_dim=args.ambient_dim,
        multiplicities=args.multiplicities,
        container=args.container,
        container_blocks=args.container_blocks,
        strength=args.strength,
        unitary=args.unitary,
    )


def _add_scenario_options(p):
    p.add_argument("--blocks", type=_int_list, default=(2,), help="block sizes of the model, e.g. 2,3")
    p.add_argument("--ambient-dim", type=int, default=None)
    p.add_argument("--multiplicities", type=_int_list, default=None)
    p.add_argument("--container", choices=CONTAINERS, default="block-diagonal")
    p.add_argument("--container-blocks", type=_int_list, default=None)
    p.add_argument("--strength", type=float, default=1e-4, help="||S0 - I|| of the planted similarity")
    p.add_argument("--unitary", action="store_true", help="plant a unitary S0 (self-adjoint case)")


def _load_algebra(path):
    obj = json.loads(Path(path).read_text())
    if "a" in obj and "basis" not in obj:
        obj = obj["a"]
    return FdAlgebra.from_json(obj)


def cmd_generate(args):
    sc = generate_scenario(_params(args), args.seed)
    out = Path(args.out) if args.out else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{sc.scenario_id}.json"
    sc.save(path)
    print(json.dumps({"scenario": str(path), "gamma_bracket": list(sc.gamma_bracket)}))
    return 0


def cmd_run(args):
    sc = PerturbationScenario.load(args.scenario)
    cert, code, paths = run_report(sc, args.out, tol=args.tol)
    summary = {k: getattr(cert, k) for k in ("scenario_id", "outcome", "gamma_upper", "digamma_value",
                                               "s_minus_identity", "conjugation_residual")}
    summary["paths"] = {k: str(v) for k, v in paths.items()}
    if "margin" in cert.diagnostics:
        summary["margin"] = cert.diagnostics["margin"]
    print(json.dumps(summary))
    return code


def cmd_verify(args):
    rep = verify_certificate(args.certificate, args.scenario)
    print(json.dumps({"matches": rep.matches, "original": rep.original, "recomputed": rep.recomputed}))
    if not rep.matches:
        return 1
    return EXIT_CODES[rep.recomputed["outcome"]]


def cmd_bench(args):
    seeds = parse_seeds(args.seeds)
    sweep = parse_sweep(args.sweep) if args.sweep else None
    rows = bench(seeds, _params(args), sweep=sweep, csv_path=args.csv, tol=args.tol, jobs=args.jobs)
    counts = {}
    for r in rows:
        counts[r["outcome"]] = counts.get(r["outcome"], 0) + 1
    print(json.dumps({"runs": len(rows), "outcomes": counts, "csv": args.csv}))
    return 0


def cmd_kk(args):
    rep = kk_distance(_load_algebra(args.a), _load_algebra(args.b), seed=args.seed)
    print(json.dumps(rep.to_json()))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="nearincl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a planted scenario")
    p.add_argument("--seed", type=int, default=0)
    _add_scenario_options(p)
    p.add_argument("--out", default=None, help="output directory (default: $NEARINCL_OUT)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run the pipeline on a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="recompute a certificate's decisions")
    p.add_argument("--certificate", required=True)
    p.add_argument("--scenario", default=None, help="defaults to scenario.json next to the certificate")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="batch run over seeds and a parameter sweep")
    p.add_argument("--seeds", default="0..9", help="A..B inclusive or a comma list")
    p.add_argument("--sweep", default=None, help="e.g. strength=logspace(1e-6,1e-1,20)")
    _add_scenario_options(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--csv", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("kk-distance", help="bracket the symmetric near-inclusion distance")
    p.add_argument("--a", required=True, help="algebra JSON (or a scenario file, using its A)")
    p.add_argument("--b", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_kk)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 is reserved for the threshold outcome
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NearInclusionError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"nearincl {args.command}: {exc}", file=sys.stderr)
        if isinstance(exc, NearInclusionError) and not isinstance(exc, InvalidInputError):
            return EXIT_CODES["numerical-failure"]
        return 1


if __name__ == "__main__":
    sys.exit(main())
