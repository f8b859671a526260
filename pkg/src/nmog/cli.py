"""Command-line entry point: ``nmog {simulate,denoise,svd,evaluate,experiment}``.

Exit status is 0 on success, 1 on I/O, format or divergence errors and 2 on
bad command-line flags.  ``NMOG_THREADS`` caps the BLAS thread pool
(0 or unset leaves the library default).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .hsi_data import Cube, CubeFormatError, ObservationMatrix, cube_to_matrix, load_cube, matrix_to_cube, save_cube
from .inference import InferenceConfig, denoise
from .metrics import evaluate, svd_baseline
from .noise_model import DivergenceError, Hyperparams
from .noise_sim import NoiseCase, NoiseSpec, corrupt

logger = logging.getLogger("nmog")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

CASES = [c.value for c in NoiseCase]


class UsageError(Exception):
    """Invalid flag values detected after parsing."""


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_simulate(args) -> int:
    clean = load_cube(args.input)
    noisy, meta = corrupt(clean, NoiseSpec(case=args.case, seed=args.seed))
    save_cube(noisy, args.output)
    meta.to_json(args.metadata)
    return EXIT_OK


def _config(rank, components, max_iters, tol, seed) -> InferenceConfig:
    return InferenceConfig(
        hyper=Hyperparams(K=components, R=rank), max_iters=max_iters, tol=tol, seed=seed
    )


def cmd_denoise(args) -> int:
    cube = load_cube(args.input)
    cfg = _config(args.rank, args.components, args.max_iters, args.tol, args.seed)
    try:
        out, report = denoise(cube, cfg)
    except DivergenceError as exc:
        print(f"nmog: {exc}", file=sys.stderr)
        if args.report and exc.state is not None:
            exc.state[2].to_json(args.report)
        return EXIT_FAILURE
    save_cube(out, args.output)
    if args.report:
        report.to_json(args.report)
    logger.info(
        "rank %d after %d iterations (converged=%s)", report.final_rank, report.iterations_run, report.converged
    )
    return EXIT_OK


def svd_cube(cube: Cube, rank: int) -> Cube:
    """Rank-``rank`` truncated SVD of the cube's matrix view, clipped to [0, 1]."""
    approx = svd_baseline(cube_to_matrix(cube), rank)
    out = matrix_to_cube(ObservationMatrix(np.clip(approx.values, 0.0, 1.0)), cube.rows, cube.cols)
    return out


def cmd_svd(args) -> int:
    cube = load_cube(args.input)
    if args.rank > min(cube.rows * cube.cols, cube.bands):
        raise UsageError(f"--rank must not exceed min(N, B) = {min(cube.rows * cube.cols, cube.bands)}")
    save_cube(svd_cube(cube, args.rank), args.output)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ref = load_cube(args.reference)
    test = load_cube(args.test)
    if ref.shape != test.shape:
        print(f"nmog: shape mismatch {ref.shape} vs {test.shape}", file=sys.stderr)
        return EXIT_FAILURE
    report = evaluate(ref, test)
    report.write_csv(args.csv)
    report.write_json(args.json)
    print(f"MPSNR {report.mpsnr:.4f} dB  MSSIM {report.mssim:.6f}")
    return EXIT_OK


PLAN_DEFAULTS = {"K": 3, "R": 20, "max_iters": 100, "tol": 1e-4, "svd_rank": None}


def load_plan(path) -> dict:
    """Read and validate an experiment plan (JSON)."""
    with open(path) as fh:
        plan = json.load(fh)
    if not isinstance(plan, dict):
        raise UsageError("plan must be a JSON object")
    missing = [k for k in ("clean_path", "case", "seeds", "output_dir") if k not in plan]
    if missing:
        raise UsageError(f"plan is missing {', '.join(missing)}")
    plan = {**PLAN_DEFAULTS, **plan}
    if plan["case"] not in CASES:
        raise UsageError(f"unknown case {plan['case']!r}; choose from {', '.join(CASES)}")
    seeds = plan["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise UsageError("seeds must be a non-empty list of non-negative integers")
    base = Path(path).parent
    for key in ("clean_path", "output_dir"):
        p = Path(plan[key])
        plan[key] = str(p if p.is_absolute() else base / p)
    return plan


def _run_seed(clean: Cube, plan: dict, seed: int, out_dir: Path) -> dict:
    noisy, meta = corrupt(clean, NoiseSpec(case=plan["case"], seed=seed))
    save_cube(noisy, out_dir / f"noisy_{seed}.hsic")
    meta.to_json(out_dir / f"noisy_{seed}.json")

    cfg = _config(plan["R"], plan["K"], plan["max_iters"], plan["tol"], seed)
    t0 = time.perf_counter()
    restored, report = denoise(noisy, cfg)
    nmog_time = time.perf_counter() - t0
    save_cube(restored, out_dir / f"nmog_{seed}.hsic")
    report.to_json(out_dir / f"nmog_{seed}_report.json")

    svd_rank = plan["svd_rank"] or report.final_rank
    t0 = time.perf_counter()
    baseline = svd_cube(noisy, svd_rank)
    svd_time = time.perf_counter() - t0
    save_cube(baseline, out_dir / f"svd_{seed}.hsic")

    row = {"seed": seed, "status": "ok", "final_rank": report.final_rank, "svd_rank": svd_rank}
    for name, cube, seconds in (("Noisy", noisy, 0.0), ("SVD", baseline, svd_time), ("NMoG", restored, nmog_time)):
        q = evaluate(clean, cube)
        q.write_csv(out_dir / f"{name.lower()}_{seed}_metrics.csv")
        row[f"{name}_MPSNR"] = q.mpsnr
        row[f"{name}_MSSIM"] = q.mssim
        row[f"{name}_time"] = seconds
    return row


def cmd_experiment(args) -> int:
    plan = load_plan(args.plan)
    clean = load_cube(plan["clean_path"])
    out_dir = Path(plan["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for seed in plan["seeds"]:
        try:
            rows.append(_run_seed(clean, plan, seed, out_dir))
        except (DivergenceError, ValueError, OSError) as exc:
            logger.error("seed %d failed: %s", seed, exc)
            rows.append({"seed": seed, "status": f"failed: {exc}"})

    fields = ["seed", "status", "final_rank", "svd_rank"] + [
        f"{m}_{q}" for m in ("Noisy", "SVD", "NMoG") for q in ("MPSNR", "MSSIM", "time")
    ]
    with open(out_dir / "seeds.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)

    ok = [r for r in rows if r["status"] == "ok"]
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "Noisy", "SVD", "NMoG"])
        for metric in ("MPSNR", "MSSIM", "time"):
            means = [np.mean([r[f"{m}_{metric}"] for r in ok]) if ok else float("nan") for m in ("Noisy", "SVD", "NMoG")]
            writer.writerow([metric] + [repr(float(v)) for v in means])
    _write_json(out_dir / "plan.json", plan)

    failed = len(rows) - len(ok)
    if failed:
        print(f"nmog: {failed} of {len(rows)} seed(s) failed; see seeds.csv", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmog", description="Mixture-of-Gaussians low-rank HSI denoising.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="corrupt a clean cube with one of the synthetic noise cases")
    p.add_argument("--input", required=True, help="clean cube file")
    p.add_argument("--case", required=True, choices=CASES)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--output", required=True, help="noisy cube file")
    p.add_argument("--metadata", required=True, help="noise metadata JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("denoise", help="fit the model and write the restored cube")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--rank", type=_positive_int, default=20, help="upper bound on the rank (default 20)")
    p.add_argument("--components", type=_positive_int, default=3, help="mixture components per band (default 3)")
    p.add_argument("--max-iters", type=_positive_int, default=100)
    p.add_argument("--tol", type=_positive_float, default=1e-4)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--report", help="inference report JSON")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("svd", help="truncated-SVD baseline")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--rank", type=_positive_int, required=True)
    p.set_defaults(func=cmd_svd)

    p = sub.add_parser("evaluate", help="per-band PSNR and SSIM of a test cube")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--csv", required=True, help="per-band metrics CSV")
    p.add_argument("--json", required=True, help="summary JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="simulate, denoise, baseline and evaluate over several seeds")
    p.add_argument("plan", help="JSON plan with clean_path, case, seeds, K, R, output_dir")
    p.set_defaults(func=cmd_experiment)
    return parser


def _thread_limit():
    raw = os.environ.get("NMOG_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"NMOG_THREADS must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"NMOG_THREADS must be a non-negative integer, got {raw!r}")
    if n == 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nmog: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, CubeFormatError, ValueError, json.JSONDecodeError) as exc:
        print(f"nmog: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
