"""Command line surface: validate, synthesize, evaluate, simulate, sweep.

Every command is file-in/file-out and deterministic for fixed inputs and
seed. Each run computes a manifest whose hash covers the command, input
file contents, resolved options and seeds (but not timing); all output
files reference that hash, and a sibling manifest JSON records it together
with artifact hashes and wall-clock data.

Exit codes: 0 success, 1 validation or I/O error, 2 infeasible budgets,
3 solver or extraction failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import hashlib
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .model import (
    ModelFormatError,
    ValidationError,
    load_model,
    with_overrides,
)
from .sdp import SolverOptions, write_iteration_csv
from .synth import (
    ExtractionFailure,
    InfeasibleProgram,
    SolverFailure,
    evaluate_mechanism,
    load_mechanism,
    save_mechanism,
    synthesize,
)
from .sim import run_experiment

_FLOAT_FMT = "{:.16e}"     # 17 significant digits, lossless for doubles


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return _FLOAT_FMT.format(v)


def _parse_eps(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return math.inf
    return float(text)


def _parse_grid(text: str) -> list[float]:
    vals = [_parse_eps(tok) for tok in text.split(",") if tok.strip()]
    if not vals:
        raise ValueError("empty grid")
    return vals


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest_core(command: str, inputs: dict, options: dict, seeds: dict) -> tuple[dict, str]:
    core = {
        "command": command,
        "inputs": {path: _sha256_file(path) for path in inputs.values()},
        "options": options,
        "seeds": seeds,
        "tool_version": __version__,
    }
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"), default=str)
    return core, hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _write_manifest(path: str, core: dict, manifest_hash: str,
                    artifacts: list[str], t0: float) -> None:
    doc = dict(core)
    doc["manifest_hash"] = manifest_hash
    doc["artifacts"] = {p: _sha256_file(p) for p in artifacts}
    doc["wall_clock"] = {
        "finished_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "elapsed_s": time.time() - t0,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _strip(path: str, ext: str) -> str:
    return path[:-len(ext)] if path.endswith(ext) else path


def _load_with_overrides(args) -> tuple:
    model, req = load_model(args.model)
    k = getattr(args, "k", None)
    eps_y = getattr(args, "eps_y", None)
    eps_u = getattr(args, "eps_u", None)
    if k is not None or eps_y is not None or eps_u is not None:
        model, req = with_overrides(model, req, K=k, eps_y=eps_y, eps_u=eps_u)
    return model, req


def _check_dims(model, req, mech) -> None:
    if mech.K != req.K:
        raise ValueError(f"mechanism horizon {mech.K} does not match request horizon {req.K}")
    if mech.n_y != model.n_y:
        raise ValueError(f"mechanism output size {mech.n_y} does not match model n_y {model.n_y}")
    if mech.Sigma_H.shape[0] != req.K * model.n_u:
        raise ValueError(
            f"mechanism input noise size {mech.Sigma_H.shape[0]} does not match "
            f"K*n_u = {req.K * model.n_u}")


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    try:
        load_model(args.model)
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        for line in exc.report.violations:
            print(f"violation: {line}", file=sys.stderr)
        return 1
    print("ok")
    return 0


def cmd_synthesize(args) -> int:
    t0 = time.time()
    base = _strip(args.out_mechanism, ".json")
    report_path = base + ".report.json"
    iters_path = base + ".iterations.csv"
    manifest_path = base + ".manifest.json"

    try:
        core, mh = _manifest_core(
            "synthesize",
            inputs={"model": args.model},
            options={"k": args.k, "eps_y": args.eps_y, "eps_u": args.eps_u,
                     "out_mechanism": args.out_mechanism},
            seeds={"seed": args.seed},
        )
        model, req = _load_with_overrides(args)
    except ValidationError as exc:
        for line in exc.report.violations:
            print(f"violation: {line}", file=sys.stderr)
        return 1
    except (OSError, ModelFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        rep = synthesize(model, req, solver_opts=SolverOptions(seed=args.seed))
    except InfeasibleProgram as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ExtractionFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    rep.mechanism.provenance["manifest_hash"] = mh
    try:
        save_mechanism(rep.mechanism, args.out_mechanism)
        doc = rep.to_dict()
        doc["manifest_hash"] = mh
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_iteration_csv(rep.solution, iters_path, header_comment=f"manifest_hash={mh}")
        _write_manifest(manifest_path, core, mh,
                        [args.out_mechanism, report_path, iters_path], t0)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    print(f"status=Optimal cost_bits={rep.cost_bits:.9g} mi_bits={rep.mi_bits:.9g} "
          f"entropy_H_bits={rep.entropy_H_bits:.9g} distortion_Y={rep.distortion_Y:.9g} "
          f"distortion_U={rep.distortion_U:.9g}")
    return 0


def cmd_evaluate(args) -> int:
    try:
        core, mh = _manifest_core(
            "evaluate",
            inputs={"model": args.model, "mechanism": args.mechanism},
            options={"k": args.k, "eps_y": args.eps_y, "eps_u": args.eps_u,
                     "out": args.out},
            seeds={},
        )
        model, req = _load_with_overrides(args)
        mech = load_mechanism(args.mechanism)
        _check_dims(model, req, mech)
    except ValidationError as exc:
        for line in exc.report.violations:
            print(f"violation: {line}", file=sys.stderr)
        return 1
    except (OSError, ModelFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    metrics = evaluate_mechanism(model, req, mech)
    doc = {
        "mi_bits": metrics.mi_bits,
        "entropy_H_bits": metrics.entropy_H_bits,
        "cost_bits": metrics.cost_bits,
        "distortion_Y": metrics.distortion_Y,
        "distortion_U": metrics.distortion_U,
        "manifest_hash": mh,
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        t0 = time.time()
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
            _write_manifest(_strip(args.out, ".json") + ".manifest.json", core, mh,
                            [args.out], t0)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    t0 = time.time()
    if args.n_runs <= 0:
        print("error: n_runs must be positive", file=sys.stderr)
        return 1
    try:
        core, mh = _manifest_core(
            "simulate",
            inputs={"model": args.model, "mechanism": args.mechanism},
            options={"k": args.k, "eps_y": args.eps_y, "eps_u": args.eps_u,
                     "n_runs": args.n_runs, "r_entries": args.r_entries,
                     "out_csv": args.out_csv},
            seeds={"seed": args.seed},
        )
        model, req = _load_with_overrides(args)
        mech = load_mechanism(args.mechanism)
        _check_dims(model, req, mech)
    except ValidationError as exc:
        for line in exc.report.violations:
            print(f"violation: {line}", file=sys.stderr)
        return 1
    except (OSError, ModelFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    summ = run_experiment(model, req, mech, n_runs=args.n_runs, seed=args.seed,
                          r_entries=args.r_entries)
    try:
        with open(args.out_csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# manifest_hash={mh}\n")
            fh.write("k,mse_yu,mse_zr,se_mse_zr,s_mean,shat_zr_mean\n")
            for k in range(summ.K):
                fh.write(",".join([
                    str(k + 1),
                    _fmt(summ.mse_yu[k]),
                    _fmt(summ.mse_zr[k]),
                    _fmt(summ.se_mse_zr[k]),
                    _fmt(summ.s_mean[k]),
                    _fmt(summ.shat_zr_mean[k]),
                ]) + "\n")
        _write_manifest(_strip(args.out_csv, ".csv") + ".manifest.json", core, mh,
                        [args.out_csv], t0)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"n_runs={summ.n_runs} mse_yu_total={summ.mse_yu_total:.9g} "
          f"mse_zr_total={summ.mse_zr_total:.9g}")
    return 0


def _sweep_point(model_path: str, k: int | None, eps_y: float, eps_u: float,
                 seed: int | None) -> tuple:
    """One grid point, safe to run in a worker process.

    Returns (status, cost, mi, entropy, distortion_Y, distortion_U).
    """
    nan = math.nan
    try:
        model, req = load_model(model_path)
        model, req = with_overrides(model, req, K=k, eps_y=eps_y, eps_u=eps_u)
        rep = synthesize(model, req, solver_opts=SolverOptions(seed=seed))
        return ("Optimal", rep.cost_bits, rep.mi_bits, rep.entropy_H_bits,
                rep.distortion_Y, rep.distortion_U)
    except InfeasibleProgram:
        return ("Infeasible", nan, nan, nan, nan, nan)
    except SolverFailure as exc:
        status = "SolverFailure"
        if exc.solution is not None:
            status = exc.solution.status.value
        return (status, nan, nan, nan, nan, nan)
    except ExtractionFailure:
        return ("ExtractionFailure", nan, nan, nan, nan, nan)
    except (ValidationError, ValueError):
        return ("ValidationError", nan, nan, nan, nan, nan)


def _sweep_point_star(t: tuple) -> tuple:
    return _sweep_point(*t)


def cmd_sweep(args) -> int:
    t0 = time.time()
    try:
        grid_y = _parse_grid(args.eps_y_grid)
        grid_u = _parse_grid(args.eps_u_grid)
    except ValueError as exc:
        print(f"error: bad grid: {exc}", file=sys.stderr)
        return 1

    try:
        # jobs is an execution knob with no effect on results, so it stays
        # outside the hashed manifest core.
        core, mh = _manifest_core(
            "sweep",
            inputs={"model": args.model},
            options={"k": args.k, "eps_y_grid": [_fmt(v) for v in grid_y],
                     "eps_u_grid": [_fmt(v) for v in grid_u],
                     "out_csv": args.out_csv},
            seeds={"seed": args.seed},
        )
        load_model(args.model)      # surface validation problems before sweeping
    except ValidationError as exc:
        for line in exc.report.violations:
            print(f"violation: {line}", file=sys.stderr)
        return 1
    except (OSError, ModelFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    points = [(args.model, args.k, ey, eu, args.seed)
              for ey in grid_y for eu in grid_u]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point_star, points))
    else:
        results = [_sweep_point_star(p) for p in points]

    try:
        with open(args.out_csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# manifest_hash={mh}\n")
            fh.write("eps_Y,eps_U,cost_bits,mi_bits,entropy_H_bits,"
                     "distortion_Y,distortion_U,solver_status\n")
            for (_, _, ey, eu, _), (status, cost, mi, ent, dy, du) in zip(points, results):
                fh.write(",".join([
                    _fmt(ey), _fmt(eu), _fmt(cost), _fmt(mi), _fmt(ent),
                    _fmt(dy), _fmt(du), status,
                ]) + "\n")
        _write_manifest(_strip(args.out_csv, ".csv") + ".manifest.json", core, mh,
                        [args.out_csv], t0)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    n_ok = sum(1 for r in results if r[0] == "Optimal")
    print(f"grid_points={len(points)} optimal={n_ok}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=None, help="override horizon length")
    p.add_argument("--eps-y", type=_parse_eps, default=None,
                   help="override output distortion budget (number or 'inf')")
    p.add_argument("--eps-u", type=_parse_eps, default=None,
                   help="override input distortion budget (number or 'inf')")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="privsynth",
        description="Synthesize and validate Gaussian privacy mechanisms for "
                    "finite-horizon linear stochastic systems.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file against all invariants")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synthesize", help="solve the design program and write the mechanism")
    p.add_argument("model")
    p.add_argument("out_mechanism")
    _add_override_flags(p)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="closed-form metrics of a mechanism against a model")
    p.add_argument("model")
    p.add_argument("mechanism")
    p.add_argument("--out", default=None, help="write metrics JSON here instead of stdout")
    _add_override_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="Monte Carlo adversary comparison for a mechanism")
    p.add_argument("model")
    p.add_argument("mechanism")
    p.add_argument("out_csv")
    p.add_argument("--n-runs", type=int, default=10000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--r-entries", choices=["K", "K-1"], default="K",
                   help="how many disclosed input steps the adversary receives")
    _add_override_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="solve over a budget grid and tabulate the cost surface")
    p.add_argument("model")
    p.add_argument("out_csv")
    p.add_argument("--eps-y-grid", required=True,
                   help="comma-separated output budgets (numbers or 'inf')")
    p.add_argument("--eps-u-grid", required=True,
                   help="comma-separated input budgets (numbers or 'inf')")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--k", type=int, default=None, help="override horizon length")
    p.set_defaults(func=cmd_sweep)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(all="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
