"""Command-line front end.

Subcommands: ``gen-data``, ``train``, ``eval``, ``gradcheck``, ``verify``,
``bench``.  Every run writes a manifest (resolved config, its hash, seed,
package version) next to its outputs, report tables go to CSV with header
rows and '.' decimal separators, and the report paths render matplotlib
figures alongside the delimited output unless ``--no-plots`` is given.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 numerical divergence.  ``ADRFLOW_SEED`` overrides the configured seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (SEED_ENV_VAR, build_run_config, resolve_config, write_manifest)
from .container import load_container
from .data import (gen_blob_sequence, gen_diffusion_sequence, gen_fig1,
                   load_dataset, split_sequences, windowed_arrays, write_dataset)
from .errors import AdrflowError, ConfigError, DivergenceError, ShapeMismatchError
from .metrics import compute_report
from .model import (forward, init_model, load_checkpoint, matched_ablation_config,
                    rollout, save_checkpoint, count_parameters)
from .training import gradcheck_model, train
from .verify import gradcheck_reference_setup, run_suites, ALL_SUITES
from . import bench as bench_mod
from . import report as report_mod

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def _env_seed(default: int) -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR}={raw!r} is not an integer")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adrflow",
        description="Differentiable advection-diffusion-reaction grids: "
                    "data generation, training, evaluation, verification.")
    parser.add_argument("--version", action="version", version=f"adrflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    g.add_argument("generator", choices=["fig1", "blob", "diffusion"])
    g.add_argument("--out", required=True, help="dataset directory")
    g.add_argument("--size", "--grid", dest="size", type=int, default=16,
                   help="square grid size (fig1 default 6)")
    g.add_argument("--steps", type=int, default=12, help="frames per sequence")
    g.add_argument("--val-steps", type=int, default=None,
                   help="frames per validation sequence (default: same as --steps)")
    g.add_argument("--count", type=int, default=60, help="number of sequences")
    g.add_argument("--val-count", type=int, default=10,
                   help="sequences held out for validation")
    g.add_argument("--sigma", type=float, default=1.5, help="blob width in pixels")
    g.add_argument("--vmax", type=float, default=2.0,
                   help="max blob speed in pixels per frame")
    g.add_argument("--kappa", type=float, default=1.0, help="true diffusivity")
    g.add_argument("--h", type=float, default=0.5, help="true step size")
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a model on a dataset directory")
    t.add_argument("--config", help="YAML run configuration")
    t.add_argument("--preset", help="named preset (swe-like, video-like, fig1, blob)")
    t.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="config override; flags win")
    t.add_argument("--data", help="dataset directory (overrides data.path)")
    t.add_argument("--out", required=True, help="run output directory")
    t.add_argument("--no-advection", action="store_true",
                   help="train the parameter-matched residual conv baseline instead")
    t.add_argument("--threads", type=int, help="per-sample parallelism (default 1)")
    t.add_argument("--no-plots", action="store_true")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset directory")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--rollout", type=_int_list, default=None,
                   help="comma-separated horizons (default 5,10,20,50)")
    e.add_argument("--split", choices=["train", "val"], default="val")
    e.add_argument("--dump-frames", action="store_true",
                   help="write prediction/target/absdiff PGM triptych")
    e.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE")
    e.add_argument("--no-plots", action="store_true")

    c = sub.add_parser("gradcheck", help="tape gradients vs finite differences")
    c.add_argument("--seeds", type=int, default=3)
    c.add_argument("--tol", type=float, default=1e-4)

    v = sub.add_parser("verify", help="run the oracle/property suites")
    v.add_argument("--only", action="append", default=None, choices=sorted(ALL_SUITES),
                   help="run a single suite (repeatable)")
    v.add_argument("--out", help="directory for the CSV report")

    b = sub.add_parser("bench", help="operator wall-time scaling")
    b.add_argument("--sizes", type=_int_list, default=list(bench_mod.DEFAULT_SIZES))
    b.add_argument("--dense-limit", type=int, default=64)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="directory for CSV and figure")
    b.add_argument("--no-plots", action="store_true")

    return parser


# ---------------------------------------------------------------------------
# gen-data


def _blob_start(rng, size, sigma, velocity, steps):
    """Random start keeping the whole trajectory 2*sigma inside when possible."""
    margin = 2.0 * sigma
    travel_r = velocity[0] * (steps - 1)
    travel_c = velocity[1] * (steps - 1)
    lo_r = margin + max(0.0, -travel_r)
    hi_r = size - 1 - margin - max(0.0, travel_r)
    lo_c = margin + max(0.0, -travel_c)
    hi_c = size - 1 - margin - max(0.0, travel_c)
    if lo_r >= hi_r or lo_c >= hi_c:  # trajectory longer than the grid
        lo_r = lo_c = margin
        hi_r = hi_c = size - 1 - margin
    return rng.uniform(lo_r, hi_r), rng.uniform(lo_c, hi_c)


def cmd_gen_data(args) -> int:
    seed = _env_seed(args.seed)
    if args.generator == "blob" and args.sigma <= 0:
        raise ConfigError("--sigma must be positive")
    if args.count < 1 or args.steps < 1:
        raise ConfigError("--count and --steps must be >= 1")

    if args.generator == "fig1":
        size = args.size if args.size != 16 else 6
        sample = gen_fig1(size, size)
        seq = np.concatenate([sample.history, sample.target], axis=0)
        train_seqs, val_seqs = [seq], [seq]
        params = {"generator": "fig1", "size": size}
    elif args.generator == "blob":
        if not 0 <= args.val_count < args.count:
            raise ConfigError("--val-count must be in [0, count)")
        val_steps = args.val_steps or args.steps
        train_idx, val_idx = split_sequences(args.count, args.val_count, seed)
        val_set = set(int(i) for i in val_idx)
        rng = np.random.default_rng(seed)
        seqs = []
        for k in range(args.count):
            angle = rng.uniform(0.0, 2.0 * np.pi)
            speed = rng.uniform(0.2, args.vmax)
            velocity = (speed * np.sin(angle), speed * np.cos(angle))
            steps = val_steps if k in val_set else args.steps
            start = _blob_start(rng, args.size, args.sigma, velocity, steps)
            seqs.append(gen_blob_sequence(args.size, args.size, velocity,
                                          args.sigma, steps,
                                          seed=seed + 1000 + k, start=start))
        train_seqs = [seqs[i] for i in train_idx]
        val_seqs = [seqs[i] for i in val_idx]
        params = {"generator": "blob", "size": args.size, "steps": args.steps,
                  "val_steps": val_steps, "count": args.count,
                  "val_count": args.val_count, "sigma": args.sigma,
                  "vmax": args.vmax}
    else:
        if not 0 <= args.val_count < args.count:
            raise ConfigError("--val-count must be in [0, count)")
        seqs = [gen_diffusion_sequence(args.size, args.size, args.kappa, args.h,
                                       args.steps, seed=seed + 1000 + k)
                for k in range(args.count)]
        train_idx, val_idx = split_sequences(args.count, args.val_count, seed)
        train_seqs = [seqs[i] for i in train_idx]
        val_seqs = [seqs[i] for i in val_idx]
        params = {"generator": "diffusion", "size": args.size, "steps": args.steps,
                  "count": args.count, "val_count": args.val_count,
                  "kappa": args.kappa, "h": args.h}

    params["seed"] = seed
    write_dataset(args.out, train_seqs, val_seqs, params)
    print(f"wrote {len(train_seqs)} train / {len(val_seqs)} val sequences to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _load_windowed(data_dir, j, horizon, stride):
    data_dir = Path(data_dir)
    if not (data_dir / "train.adrt").exists():
        raise ConfigError(f"dataset {data_dir} is missing train.adrt")
    train_seqs, val_seqs = load_dataset(data_dir)
    train_arrays = windowed_arrays(train_seqs, j, horizon, stride)
    val_arrays = windowed_arrays(val_seqs, j, horizon, stride) if val_seqs else None
    return train_arrays, val_arrays


def cmd_train(args) -> int:
    overrides = list(args.overrides)
    if args.data:
        overrides.append(f"data.path={args.data}")
    if args.threads is not None:
        overrides.append(f"train.threads={args.threads}")
    tree = resolve_config(args.config, args.preset, overrides)
    run = build_run_config(tree)
    if run.data.path is None:
        raise ConfigError("no dataset: pass --data or set data.path")

    model_cfg = run.model
    if args.no_advection:
        model_cfg = matched_ablation_config(model_cfg)
    model = init_model(model_cfg, seed=run.init_seed, kappa_init=run.kappa_init)
    print(f"model: {model_cfg.layer_count} layer(s), {count_parameters(model)} parameters"
          f"{' (advection disabled)' if args.no_advection else ''}")

    j = model_cfg.history_len
    (hist, targ_seq), val = _load_windowed(run.data.path, j, 1, run.data.stride)
    targ = targ_seq[:, 0]
    val_data = (val[0], val[1][:, 0]) if val is not None else None

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    every = max(1, run.train.epochs // 10)

    def progress(epoch, train_loss, val_loss, lr):
        if epoch % every == 0 or epoch == run.train.epochs - 1:
            print(f"epoch {epoch:6d}  train {train_loss:.3e}  lr {lr:.3e}")

    try:
        result = train(model, (hist, targ), run.train, val_data=val_data,
                       epoch_callback=progress)
    except DivergenceError as err:
        print(f"training diverged: {err}", file=sys.stderr)
        report_mod.write_csv(outdir / "loss.csv",
                             ["epoch", "train_loss", "val_loss", "lr"], [])
        return EXIT_DIVERGED

    report_mod.write_csv(outdir / "loss.csv",
                         ["epoch", "train_loss", "val_loss", "lr"], result.log)
    save_checkpoint(model, outdir / "checkpoint.adrt")
    write_manifest(outdir, "train", tree,
                   extra={"no_advection": bool(args.no_advection),
                          "parameters": count_parameters(model),
                          "final_train_loss": result.final_train_loss})
    if not args.no_plots and result.log:
        report_mod.save_loss_curve(outdir / "loss_curve.png", result.log)
    print(f"final train loss {result.final_train_loss:.3e}; wrote {outdir}/")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    tree = resolve_config(None, None, args.overrides)
    run = build_run_config(tree)
    model = load_checkpoint(args.checkpoint)
    cfg = model.config
    horizons = args.rollout if args.rollout is not None else list(run.eval.rollout)

    train_seqs, val_seqs = load_dataset(args.data)
    seqs = val_seqs if args.split == "val" and val_seqs else train_seqs
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    rows = []
    last_pred, last_targ = None, None
    for horizon in horizons:
        usable = [s for s in seqs if s.shape[0] >= cfg.history_len + 1 + horizon]
        if not usable:
            print(f"skipping horizon {horizon}: no sequence long enough", file=sys.stderr)
            continue
        hist, targ = windowed_arrays(usable, cfg.history_len, horizon,
                                     stride=max(1, run.data.stride))
        try:
            preds = rollout(model, hist, horizon)
        except ShapeMismatchError as err:
            print(f"checkpoint does not match dataset: {err}", file=sys.stderr)
            return EXIT_USAGE
        flat_p = preds.reshape(-1, *preds.shape[2:])
        flat_t = targ.reshape(-1, *targ.shape[2:])
        rep = compute_report(flat_p, flat_t, max_val=run.eval.max_val,
                             convention=run.eval.convention,
                             nrmse_mode=run.eval.nrmse_mode,
                             ssim_window=run.eval.ssim_window)
        rows.extend((horizon, metric, value) for metric, value in rep.rows())
        last_pred, last_targ = preds[0, -1, 0], targ[0, -1, 0]
        print(f"horizon {horizon}: mse {rep.mse:.3e}  nrmse {rep.nrmse:.3e}")

    if not rows:
        raise ConfigError("no evaluable horizon: sequences too short")
    report_mod.write_csv(outdir / "metrics.csv", ["horizon", "metric", "value"], rows)
    write_manifest(outdir, "eval", tree,
                   extra={"checkpoint": str(args.checkpoint), "data": str(args.data),
                          "horizons": horizons})
    if args.dump_frames and last_pred is not None:
        report_mod.dump_triptych(outdir, last_pred, last_targ)
    if not args.no_plots and last_pred is not None:
        report_mod.save_triptych_figure(outdir / "triptych.png", last_pred, last_targ)
    print(f"wrote {outdir}/metrics.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck / verify / bench


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for seed in range(args.seeds):
        model, hist, targ = gradcheck_reference_setup(seed)
        report = gradcheck_model(model, hist, targ)
        for name, value in sorted(report.items()):
            flag = "ok" if value <= args.tol else "FAIL"
            if seed == 0:
                print(f"{name:40s} {value:.3e}  {flag}")
            worst = max(worst, value)
    print(f"max relative error over {args.seeds} seed(s): {worst:.3e} "
          f"(tolerance {args.tol:.1e})")
    return EXIT_OK if worst <= args.tol else EXIT_VERIFY_FAILED


def cmd_verify(args) -> int:
    suites = run_suites(args.only)
    rows = []
    failed = []
    for suite in suites:
        for check in suite.checks:
            status = "PASS" if check.passed else "FAIL"
            print(f"[{status}] {suite.name}: {check.name} "
                  f"(value {check.value:.3e}, threshold {check.threshold:.3e})")
            rows.append((suite.name, check.name, check.value, check.threshold, status))
            if not check.passed:
                failed.append(f"{suite.name}: {check.name}")
    if args.out:
        report_mod.write_csv(Path(args.out) / "verify.csv",
                             ["suite", "check", "value", "threshold", "status"], rows)
    if failed:
        print("failed properties:", *failed, sep="\n  ", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    print(f"all {len(rows)} checks passed")
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = bench_mod.run_bench(sizes=tuple(args.sizes), dense_limit=args.dense_limit,
                               reps=args.reps, seed=args.seed)
    exponents = bench_mod.growth_exponents(rows)
    for row in rows:
        print(f"{row.op:18s} {row.size:4d}  {row.seconds:.6f}s  spread x{row.spread:.2f}")
    for op, slope in exponents.items():
        print(f"growth exponent {op:18s} {slope:.2f}")
    dense = exponents.get("dense_solve")
    for dct_op in ("dct_matrix_solve", "dct_fft_solve"):
        if dense is not None and dct_op in exponents:
            ok = exponents[dct_op] < dense
            print(f"{dct_op} grows {'slower' if ok else 'FASTER'} than dense_solve")
    if args.out:
        outdir = Path(args.out)
        report_mod.write_csv(outdir / "bench.csv",
                             ["op", "size", "median_seconds", "spread"],
                             bench_mod.bench_csv_rows(rows))
        report_mod.write_csv(outdir / "bench_exponents.csv", ["op", "exponent"],
                             sorted(exponents.items()))
        if not args.no_plots:
            report_mod.save_bench_figure(outdir / "bench.png",
                                         bench_mod.bench_csv_rows(rows))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
        "verify": cmd_verify,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as err:
        print(f"missing file: {err}", file=sys.stderr)
        return EXIT_USAGE
    except AdrflowError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VERIFY_FAILED


if __name__ == "__main__":
    sys.exit(main())
