"""Command-line entry point: ``coreset build|sensitivities|bench|stream``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from . import bench as _bench
from .dataset import DataError, iter_csv, load_csv, save_csv
from .losses import SolverConfig
from .sampler import sample_coreset
from .sensitivity import LOSSES, sensitivities
from .streaming import StreamState

log = logging.getLogger("nearconvex")


def _lambda(value: str):
    if value == "auto":
        return None
    lam = float(value)
    if not lam >= 1:
        raise argparse.ArgumentTypeError("lambda must be at least 1 or 'auto'")
    return lam


def _loss_args(p: argparse.ArgumentParser):
    p.add_argument("--loss", required=True, choices=LOSSES)
    p.add_argument("--z", type=float, default=1.0, help="exponent for lz and outlier losses")
    p.add_argument("--lambda", dest="lam", type=_lambda, default=None, metavar="L|auto",
                   help="regularisation for logistic/svm; 'auto' (default) uses sqrt(n)")


def _prep_args(p: argparse.ArgumentParser):
    p.add_argument("--standardize", action="store_true", help="zero mean, unit variance columns")
    p.add_argument("--unit-norm", action="store_true", help="scale so the largest row norm is 1")


def _load(args):
    ps = load_csv(args.input)
    return _bench.preprocess(ps, args.standardize, args.unit_norm)


def _lam(args, n):
    return math.sqrt(n) if args.lam is None else args.lam


def cmd_build(args) -> int:
    ps = _load(args)
    prof = sensitivities(ps, args.loss, z=args.z, lam=_lam(args, ps.n), seed=args.seed)
    cs = sample_coreset(ps, prof, args.size, args.seed)
    if args.merge_duplicates:
        cs = cs.merged()
    cs.to_csv(args.output, ps)
    if args.fsvd_output:
        _write_fsvd(args.fsvd_output, prof)
    log.info("coreset of %d rows from %d points, t=%.6g", len(cs), ps.n, prof.total)
    return 0


def _write_fsvd(path, prof):
    docs = [f.to_dict() for f in prof.fsvd]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(docs[0] if len(docs) == 1 else docs, fh, indent=2)
        fh.write("\n")


def cmd_sensitivities(args) -> int:
    ps = _load(args)
    prof = sensitivities(ps, args.loss, z=args.z, lam=_lam(args, ps.n), seed=args.seed)
    prof.to_csv(args.output)
    if args.fsvd_output:
        _write_fsvd(args.fsvd_output, prof)
    log.info("t=%.6g, bound=%.6g", prof.total, prof.bound)
    return 0


def cmd_bench(args) -> int:
    ps = _bench.load_input(args.input, args.synth, args.seed)
    cfg = _bench.BenchConfig(
        loss=args.loss, sizes=_bench.parse_sizes(args.sizes), trials=args.trials, seed=args.seed,
        z=args.z, lam=args.lam, standardize=args.standardize, unit_norm=args.unit_norm,
        output=args.output, workers=args.workers, timing=not args.no_timing,
        solver=SolverConfig(iterations=args.iterations))
    res = _bench.run_benchmark(cfg, ps)
    for size, method, mean, std in res.summary:
        log.info("%5d %-11s mean=%.4g std=%.4g", size, method, mean, std)
    return 0


def cmd_stream(args) -> int:
    peek = iter_csv(args.input, 1)
    first = next(peek)
    peek.close()
    d_prime = args.d_prime or first.d + 1
    lam = math.sqrt(args.stream_horizon) if args.lam is None else args.lam

    def profile(ps):
        return sensitivities(ps, args.loss, z=args.z, lam=lam, seed=args.seed)

    state = StreamState(profile, args.leaf, args.epsilon, args.delta, args.stream_horizon,
                        d_prime, args.c_const, args.seed, args.loss, args.max_node_size)
    for batch in iter_csv(args.input, 2 * args.leaf):
        state.push(batch)
    cs, pts = state.finish()
    save_csv(args.output, pts, source_rows=cs.indices)
    log.info("stream of %d points -> %d rows; eps'=%.4g, height=%d, max live buckets=%d",
             state.seen, len(cs), state.eps_prime, state.height, state.max_live)
    if args.provenance:
        with open(args.provenance, "w", encoding="utf-8") as fh:
            json.dump(state.provenance(), fh, indent=2)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coreset", description=__doc__)
    ap.add_argument("-q", "--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="sample a sensitivity coreset")
    p.add_argument("--input", required=True)
    _loss_args(p)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    _prep_args(p)
    p.add_argument("--output", required=True)
    p.add_argument("--merge-duplicates", action="store_true",
                   help="sum the weights of repeated draws")
    p.add_argument("--fsvd-output", help="also write the f-SVD as JSON")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("sensitivities", help="write per-point sensitivities")
    p.add_argument("--input", required=True)
    _loss_args(p)
    p.add_argument("--seed", type=int, default=0)
    _prep_args(p)
    p.add_argument("--output", required=True)
    p.add_argument("--fsvd-output", help="also write the f-SVD as JSON")
    p.set_defaults(func=cmd_sensitivities)

    p = sub.add_parser("bench", help="compare sensitivity and uniform sampling")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--synth", metavar="KIND,N,D", help=f"KIND is one of {_bench.SYNTH_KINDS}")
    _loss_args(p)
    p.add_argument("--sizes", required=True, metavar="A:B:K")
    p.add_argument("--trials", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    _prep_args(p)
    p.add_argument("--output", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--iterations", type=int, default=2000, help="subgradient iterations")
    p.add_argument("--no-timing", action="store_true",
                   help="write build_time_ms as 0 so reruns are byte-identical")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stream", help="merge-and-reduce coreset over the file in batches")
    p.add_argument("--input", required=True)
    _loss_args(p)
    p.add_argument("--leaf", type=int, required=True, help="leaves hold 2*LEAF points")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--stream-horizon", type=int, required=True, help="upper bound on stream length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--d-prime", type=int, default=None, help="dimension term of the sample size (default d+1)")
    p.add_argument("--c-const", type=float, default=1.0)
    p.add_argument("--max-node-size", type=int, default=None)
    p.add_argument("--provenance", help="write tree statistics as JSON")
    p.set_defaults(func=cmd_stream)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except (DataError, ValueError, OSError) as exc:
        log.error("error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
