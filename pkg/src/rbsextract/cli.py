"""Command-line front end.

Every subcommand validates its arguments before touching a file; data goes
to files or stdout, diagnostics to stderr. Exit status is 0 on success, 1
on a failed check or runtime error, 2 on bad usage.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bitcore import BitString, toeplitz_kernel, toeplitz_matvec, toeplitz_matvec_packed
from .errors import RbsError
from .planner import DEFAULT_MAX_BLOCK_SAMPLES, EqPlan, parse_plan, plan_eq, plan_neq
from .stream import (BitFileWriter, ExtractorState, bits_to_samples, count_raw_samples,
                     iter_raw_file, read_bits_file, samples_to_bits)

# entropy, sources and verify pull in scipy.stats/signal; they are imported
# by the commands that need them to keep 'plan' and 'extract' start-up fast.

log = logging.getLogger("rbsextract")

REFERENCE_PROFILE = {"b": 16, "N": 2 ** 51, "delta": Fraction(537, 800), "eps_log2": -30}
PLAN_KEYS = ("mode", "b", "N", "delta", "eps_log2", "eps_s_log2", "n1", "Delta",
             "max_block_samples")


class UsageError(Exception):
    """Bad or conflicting command-line input."""


def _int_expr(text: str) -> int:
    """Integer, optionally written as a power such as ``2^51`` or ``2**51``."""
    t = str(text).strip().replace("**", "^")
    try:
        if "^" in t:
            base, exp = t.split("^", 1)
            return int(base) ** int(exp)
        return int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _rational(text: str) -> Fraction:
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not an exact rational such as 537/800: {text!r}") from None


def _positive(kind):
    def conv(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return value
    return conv


CONVERTERS = {
    "mode": str, "b": _int_expr, "N": _int_expr, "delta": _rational, "eps_log2": float,
    "eps_s_log2": float, "n1": _int_expr, "Delta": _int_expr, "max_block_samples": _int_expr,
    "workers": _int_expr, "seed": Path, "in_path": Path, "out": Path,
    "var_x": float, "sigma_x2": float, "sigma_u2": float, "R": float,
    "count": _int_expr, "prng_seed": _int_expr,
}


def _apply_config(args: argparse.Namespace) -> None:
    """Fill unset options from ``--config`` key=value lines; flags win."""
    path = getattr(args, "config", None)
    if path is None:
        return
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        key = {"in": "in_path"}.get(key, key)
        if not sep or not hasattr(args, key) or key not in CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown or malformed entry {raw!r}")
        if getattr(args, key) is None:
            try:
                setattr(args, key, CONVERTERS[key](value.strip()))
            except argparse.ArgumentTypeError as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from None


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("plan parameters")
    g.add_argument("--mode", choices=["eq", "neq"])
    g.add_argument("--b", type=_int_expr, help="bits per sample")
    g.add_argument("--N", type=_int_expr, help="total samples (eq), e.g. 2^51")
    g.add_argument("--delta", type=_rational, help="min-entropy per raw bit as num/den")
    g.add_argument("--eps-log2", type=float, help="log2 of the total error target (eq)")
    g.add_argument("--eps-s-log2", type=float, help="log2 of the smoothing parameter")
    g.add_argument("--n1", type=_int_expr, help="samples in the first block (neq)")
    g.add_argument("--Delta", type=_int_expr, help="block growth in samples (neq)")
    g.add_argument("--max-block-samples", type=_int_expr)


def _plan_from_args(args: argparse.Namespace):
    """Plan from flags, or from ``--plan`` when given (never both)."""
    given = [k for k in PLAN_KEYS if getattr(args, k, None) is not None]
    plan_file = getattr(args, "plan", None)
    if plan_file is not None:
        if given:
            raise UsageError(f"--plan conflicts with explicit plan flags: {', '.join(given)}")
        try:
            return parse_plan(Path(plan_file).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read plan {plan_file}: {exc}") from None
    if args.mode is None:
        raise UsageError("--mode is required (or pass --plan)")
    need = ["b", "delta"] + (["N", "eps_log2"] if args.mode == "eq" else ["n1", "Delta"])
    missing = [k for k in need if getattr(args, k) is None]
    if missing:
        raise UsageError(f"--mode {args.mode} needs --{', --'.join(m.replace('_', '-') for m in missing)}")
    wrong = ["n1", "Delta", "max_block_samples"] if args.mode == "eq" else ["N", "eps_log2"]
    wrong = [k for k in wrong if getattr(args, k) is not None]
    if wrong:
        raise UsageError(f"--mode {args.mode} does not take --{', --'.join(w.replace('_', '-') for w in wrong)}")
    eps_s = 0.0 if args.eps_s_log2 is None else 2.0 ** args.eps_s_log2
    if args.mode == "eq":
        return plan_eq(args.b, args.N, args.delta, 2.0 ** args.eps_log2, eps_s)
    return plan_neq(args.b, args.delta, args.n1, args.Delta, eps_s,
                    args.max_block_samples or DEFAULT_MAX_BLOCK_SAMPLES)


def _require_file(path: Path | None, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    if not path.is_file():
        raise UsageError(f"{flag} {path}: no such file")
    return path


def _require_out(path: Path | None, *inputs: Path) -> Path:
    if path is None:
        raise UsageError("--out is required")
    parent = path.resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory {parent} does not exist")
    for p in inputs:
        if p is not None and p.exists() and path.resolve() == p.resolve():
            raise UsageError(f"--out {path} would overwrite an input")
    return path


def _emit(fields: dict) -> None:
    sys.stdout.write("".join(f"{k}={v}\n" for k, v in fields.items()))


# subcommands


def cmd_plan(args) -> int:
    plan = _plan_from_args(args)
    text = plan.to_text()
    if args.out is not None:
        out = _require_out(args.out)
        tmp = out.with_name(f".{out.name}.tmp")
        tmp.write_text(text)
        os.replace(tmp, out)
    sys.stdout.write(text)
    return 0


def cmd_extract(args) -> int:
    plan = _plan_from_args(args)
    seed_path = _require_file(args.seed, "--seed")
    in_path = _require_file(args.in_path, "--in")
    out_path = _require_out(args.out, seed_path, in_path)
    workers = args.workers or 1
    if workers < 1:
        raise UsageError("--workers must be >= 1")
    # the seed is checked before any raw data is read
    seed = read_bits_file(seed_path, plan.seed_len)
    state = ExtractorState(plan, seed, workers=workers)
    total = count_raw_samples(in_path, plan.b)
    chunk = args.chunk_samples
    if isinstance(plan, EqPlan):
        chunk = max(plan.n, chunk - chunk % plan.n)
    t0 = time.perf_counter()
    with BitFileWriter(out_path) as writer:
        for piece in iter_raw_file(in_path, plan.b, chunk):
            writer.write(state.feed_bits(piece))
    elapsed = time.perf_counter() - t0
    summary = state.finish()
    fields = {"mode": summary.mode, "input_samples": total, "blocks": summary.blocks_processed,
              "emitted_bits": summary.emitted_bits, "discarded_samples": summary.discarded_samples,
              "retained_samples": summary.retained_samples,
              "error_bound_spent": repr(summary.error_bound_spent),
              "gadget_error_spent": repr(summary.gadget_error_spent),
              "capped": summary.capped, "workers": workers, "seconds": f"{elapsed:.6f}",
              "throughput_in_bits_per_s": f"{total * plan.b / max(elapsed, 1e-9):.6g}"}
    _emit(fields)
    return 0


def _model_from_args(args):
    from .entropy import HomodyneModel
    if args.model is not None:
        return HomodyneModel.from_text(_require_file(args.model, "--model").read_text())
    missing = [k for k in ("var_x", "sigma_x2", "b", "R") if getattr(args, k) is None]
    if missing:
        raise UsageError(f"model needs --model or --{', --'.join(m.replace('_', '-') for m in missing)}")
    return HomodyneModel(args.var_x, args.sigma_x2, args.sigma_u2 or 0.0, args.b, args.R)


def cmd_entropy(args) -> int:
    from .entropy import HomodyneModel, delta_star, fit_ar1_variances
    if args.fit is not None:
        if args.model is not None or args.var_x is not None or args.sigma_x2 is not None:
            raise UsageError("--fit conflicts with --model/--var-x/--sigma-x2")
        if args.b is None or args.R is None:
            raise UsageError("--fit needs --b and --R")
        raw = _require_file(args.fit, "--fit")
        fit = fit_ar1_variances(bits_to_samples(read_bits_file(raw), args.b), args.b, args.R)
        _emit({"fit_var_x": repr(fit.var_x), "fit_sigma_x2": repr(fit.sigma_x2),
               "fit_phi": repr(fit.phi), "fit_count": fit.count,
               "note": "AR(1) model fit; not a certification"})
        model = HomodyneModel(fit.var_x, fit.sigma_x2, args.sigma_u2 or 0.0, args.b, args.R)
    else:
        model = _model_from_args(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bound = delta_star(model, args.tol, args.outer_tail, args.range_scaled)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rate = bound.rate_fraction()
    _emit({"noise_n": repr(bound.noise_n), "g_star": repr(bound.g_star),
           "delta_star": repr(bound.delta_star), "delta_star_unclamped": repr(bound.unclamped),
           "outer_tail": args.outer_tail, "range_scaled": args.range_scaled,
           "planner_delta": f"{rate.numerator}/{rate.denominator}"})
    return 0


def cmd_simulate(args) -> int:
    from .sources import HomodyneSimulator, SimSourceParams
    model = _model_from_args(args)
    if args.prng_seed is None:
        raise UsageError("--prng-seed is required")
    if args.count is None or args.count < 1:
        raise UsageError("--count must be >= 1")
    out = _require_out(args.out)
    params = SimSourceParams.from_model(model, args.prng_seed, negative=args.negative_phi)
    sim = HomodyneSimulator(params)
    chunk = 1 << 20
    with BitFileWriter(out) as writer:
        left = args.count
        while left:
            take = min(chunk, left)
            writer.write(samples_to_bits(sim.samples(take), model.b))
            left -= take
    _emit({"samples": args.count, "b": model.b, "phi": repr(params.phi),
           "prng_seed": args.prng_seed, "bytes": math.ceil(args.count * model.b / 8),
           "note": "simulated test data from a PRNG"})
    return 0


def cmd_check(args) -> int:
    from .verify import block_chi2_test, monobit_test
    bits = read_bits_file(_require_file(args.in_path, "--in"), args.nbits, exact=False)
    results = [monobit_test(bits, args.alpha), block_chi2_test(bits, args.block_len, args.alpha)]
    for r in results:
        print(r.to_text())
    return 0 if all(r.passed for r in results) else 1


def _time_best(fn, repeat: int) -> float:
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_eq(plan: EqPlan, samples: int, workers: int, repeat: int = 3, prng_seed: int = 0) -> dict:
    """Best-of-``repeat`` throughput of bulk equal-block extraction."""
    rng = np.random.default_rng(prng_seed)
    seed = BitString.random(plan.seed_len, rng)
    nbytes = samples * plan.b // 8
    raw = BitString(rng.integers(0, 256, nbytes, dtype=np.uint8), samples * plan.b)
    blocks = min(samples // plan.n, plan.num_blocks)
    kernel = toeplitz_kernel(plan.gadget.toeplitz, seed)
    kernel.apply_blocks(raw, min(blocks, 64), workers)
    secs = _time_best(lambda: kernel.apply_blocks(raw, blocks, workers), repeat)
    return {"samples": samples, "workers": workers, "blocks": blocks, "seconds": secs,
            "in_bits_per_s": blocks * plan.block_bits / secs,
            "out_bits_per_s": blocks * plan.r_per_block / secs, "blocks_per_s": blocks / secs}


def bench_matvec(plan: EqPlan, reps: int = 2000, prng_seed: int = 0) -> dict:
    """Per-block time of the word-packed and the unpacked reference products."""
    rng = np.random.default_rng(prng_seed)
    spec = plan.gadget.toeplitz
    seed, x = BitString.random(spec.seed_len, rng), BitString.random(spec.n, rng)
    toeplitz_matvec_packed(spec, seed, x)
    packed = _time_best(lambda: [toeplitz_matvec_packed(spec, seed, x) for _ in range(reps)], 3) / reps
    unpacked = _time_best(lambda: [toeplitz_matvec(spec, seed, x) for _ in range(reps)], 3) / reps
    return {"packed_s_per_block": packed, "unpacked_s_per_block": unpacked,
            "packed_speedup": unpacked / packed}


def cmd_bench(args) -> int:
    if args.plan is None and all(getattr(args, k) is None for k in PLAN_KEYS):
        p = REFERENCE_PROFILE
        plan = plan_eq(p["b"], p["N"], p["delta"], 2.0 ** p["eps_log2"])
    else:
        plan = _plan_from_args(args)
    if not isinstance(plan, EqPlan):
        raise UsageError("bench needs an eq plan")
    worker_list = args.workers_list or [1]
    if min(worker_list) < 1 or min(args.samples) < plan.n:
        raise UsageError("workers must be >= 1 and sample counts >= one block")
    _emit({"profile": f"b={plan.b} n={plan.n} block_bits={plan.block_bits} "
                      f"d={plan.gadget.d} r={plan.r_per_block}",
           "cpus": os.cpu_count()})
    _emit(bench_matvec(plan))
    for samples in args.samples:
        for w in worker_list:
            r = bench_eq(plan, samples, w, args.repeat)
            print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in r.items()))
    return 0


def cmd_selftest(args) -> int:
    from .verify import run_selftest
    rows = run_selftest(prng_seed=args.prng_seed)
    print("name\tresult\tdetail")
    for r in rows:
        print(f"{r.name}\t{'PASS' if r.passed else 'FAIL'}\t{r.detail}")
    return 0 if all(r.passed for r in rows) else 1


def cmd_gen_test_seed(args) -> int:
    if args.bits is not None:
        if args.plan is not None or any(getattr(args, k) is not None for k in PLAN_KEYS):
            raise UsageError("--bits conflicts with plan parameters")
        nbits = args.bits
    else:
        nbits = _plan_from_args(args).seed_len
    if nbits < 1:
        raise UsageError("seed length must be positive")
    out = _require_out(args.out)
    rng = np.random.default_rng(args.prng_seed)
    with BitFileWriter(out) as writer:
        writer.write(BitString.random(nbits, rng))
    _emit({"seed_bits": nbits, "status": "TEST ONLY",
           "note": "PRNG output; never use as an extraction seed in production"})
    print("TEST ONLY: generated seed is not suitable for real extraction", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbsextract",
                                     description="Block-wise Toeplitz randomness extraction toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key=value file; flags override it")
        p.set_defaults(func=func)
        return p

    p = add("plan", cmd_plan, "compute extraction parameters")
    _add_plan_flags(p)
    p.add_argument("--plan", type=Path, help=argparse.SUPPRESS)
    p.add_argument("--out", type=Path, help="also write the plan text here")

    p = add("extract", cmd_extract, "extract from a raw sample file")
    _add_plan_flags(p)
    p.add_argument("--plan", type=Path, help="plan file written by 'plan --out'")
    p.add_argument("--seed", type=Path)
    p.add_argument("--in", dest="in_path", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--workers", type=_int_expr)
    p.add_argument("--chunk-samples", type=_positive(_int_expr), default=1 << 20)

    def model_flags(p):
        p.add_argument("--model", type=Path, help="key=value model file")
        p.add_argument("--var-x", type=float)
        p.add_argument("--sigma-x2", type=float)
        p.add_argument("--sigma-u2", type=float)
        p.add_argument("--b", type=_int_expr)
        p.add_argument("--R", type=float)

    p = add("entropy", cmd_entropy, "certified min-entropy per sample")
    model_flags(p)
    p.add_argument("--fit", type=Path, help="raw recording to fit an AR(1) model to")
    p.add_argument("--tol", type=_positive(float), default=1e-12)
    p.add_argument("--outer-tail", choices=["erf", "erfc"], default="erf")
    p.add_argument("--range-scaled", action="store_true")

    p = add("simulate", cmd_simulate, "write simulated homodyne raw samples")
    model_flags(p)
    p.add_argument("--count", type=_int_expr)
    p.add_argument("--prng-seed", type=_int_expr)
    p.add_argument("--negative-phi", action="store_true")
    p.add_argument("--out", type=Path)

    p = add("check", cmd_check, "advisory statistical tests on a bit file")
    p.add_argument("--in", dest="in_path", type=Path)
    p.add_argument("--nbits", type=_int_expr)
    p.add_argument("--alpha", type=_positive(float), default=0.01)
    p.add_argument("--block-len", type=_positive(_int_expr), default=8)

    p = add("bench", cmd_bench, "throughput benchmark (default: reference block shape)")
    _add_plan_flags(p)
    p.add_argument("--plan", type=Path)
    p.add_argument("--workers", dest="workers_list", type=_int_expr, nargs="+")
    p.add_argument("--samples", type=_int_expr, nargs="+", default=[10 ** 7])
    p.add_argument("--repeat", type=_positive(_int_expr), default=3)

    p = add("selftest", cmd_selftest, "run the oracle suite")
    p.add_argument("--prng-seed", type=_int_expr, default=2024)

    p = add("gen-test-seed", cmd_gen_test_seed, "write a PRNG seed file for testing only")
    _add_plan_flags(p)
    p.add_argument("--plan", type=Path)
    p.add_argument("--bits", type=_int_expr)
    p.add_argument("--prng-seed", type=_int_expr)
    p.add_argument("--out", type=Path)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        _apply_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (RbsError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
