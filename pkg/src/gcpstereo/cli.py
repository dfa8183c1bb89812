"""Command-line entry point: ``gcpstereo {train,match,eval,sweep-theta}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import csv
import logging
import os
import sys

import numpy as np
from PIL import Image

from . import evaluate
from .cost import save_cost_volume
from .gcp import save_gcp_mask
from .imageio import ImageFormatError, load_disparity_png, load_gray, normalize, save_disparity_png
from .net import TrainingDivergedError, load_params, save_params, train
from .pipeline import ConfigError, PipelineConfig, match

log = logging.getLogger("gcpstereo")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--cost", choices=("sad", "census"), help="matching cost (overrides config)")
    p.add_argument("--dmax", type=int, help="maximum disparity (overrides config)")
    p.add_argument("--theta", type=float, help="GCP confidence threshold (overrides config)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="gcpstereo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the confidence network on a data directory")
    p.add_argument("data_dir")
    p.add_argument("--model", "-o", required=True, help="output model file")
    p.add_argument("--log-csv", help="training log path (default: <model>.log.csv)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    _common(p)

    p = sub.add_parser("match", help="compute a disparity map for one stereo pair")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--out", "-o", required=True, help="output 16-bit disparity PNG")
    p.add_argument("--model", help="confidence network; enables GCP refinement")
    p.add_argument("--dump-gcp", action="store_true", help="also write <out>_gcp.png")
    p.add_argument("--dump-confidence", action="store_true",
                   help="also write <out>_confidence.png and <out>_confidence.bin")
    p.add_argument("--preview", action="store_true", help="also write <out>_color.png")
    _common(p)

    p = sub.add_parser("eval", help="per-frame error report over a data directory")
    p.add_argument("data_dir")
    p.add_argument("--model", help="confidence network; adds the refined pipeline")
    p.add_argument("--predictions", help="directory of precomputed NNNNNN_disp.png maps to score")
    p.add_argument("--out-dir", default=".", help="where frames.csv is written")
    p.add_argument("--tau", type=float, default=evaluate.DEFAULT_TAU)
    _common(p)

    p = sub.add_parser("sweep-theta", help="mean refined error for a range of thresholds")
    p.add_argument("data_dir")
    p.add_argument("--model", required=True)
    p.add_argument("--thetas", default=",".join(f"{i / 10:.1f}" for i in range(11)),
                   help="comma-separated thresholds in [0, 1]")
    p.add_argument("--out-dir", default=".", help="where theta_sweep.csv is written")
    p.add_argument("--tau", type=float, default=evaluate.DEFAULT_TAU)
    _common(p)
    return parser


def load_config(args):
    overrides = {"cost_kind": args.cost, "d_max": args.dmax, "theta": args.theta,
                 "seed": args.seed, "epochs": getattr(args, "epochs", None),
                 "lr": getattr(args, "lr", None)}
    if args.config:
        return PipelineConfig.from_file(args.config, overrides)
    return PipelineConfig.from_mapping({k: v for k, v in overrides.items() if v is not None})


def _load_model(path):
    if not os.path.isfile(path):
        raise UsageError(f"model file not found: {path}")
    return load_params(path)


def _load_frames(data_dir):
    if not os.path.isdir(data_dir):
        raise UsageError(f"data directory not found: {data_dir}")
    frames = evaluate.load_frames(data_dir)
    if not frames:
        raise UsageError(f"no NNNNNN_left/right/gt frames in {data_dir}")
    return frames


def cmd_train(args):
    config = load_config(args)
    frames = _load_frames(args.data_dir)
    dataset = [(normalize(f.left), normalize(f.right), f.gt) for f in frames]
    log_path = args.log_csv or args.model + ".log.csv"
    curve_rows = []

    def on_epoch(epoch, loss):
        curve_rows.append((epoch, loss))
        log.info("epoch %d mean hinge loss %.6f", epoch, loss)

    params, _ = train(dataset, config.train, log=on_epoch)
    save_params(params, args.model)
    with open(log_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        w.writerows((e, repr(loss)) for e, loss in curve_rows)
    print(f"trained on {len(frames)} frames; final mean loss {curve_rows[-1][1]:.6f}; model -> {args.model}")
    return EXIT_OK


def cmd_match(args):
    config = load_config(args)
    params = _load_model(args.model) if args.model else None
    if (args.dump_gcp or args.dump_confidence) and params is None:
        raise UsageError("--dump-gcp/--dump-confidence need --model")
    for path in (args.left, args.right):
        if not os.path.isfile(path):
            raise UsageError(f"image not found: {path}")
    left, right = load_gray(args.left), load_gray(args.right)
    if left.shape != right.shape:
        raise UsageError(f"left/right sizes differ: {left.shape} vs {right.shape}")
    result = match(left, right, config, params)
    stem = os.path.splitext(args.out)[0]
    save_disparity_png(result.disparity, args.out,
                       preview_path=stem + "_color.png" if args.preview else None)
    if args.dump_gcp:
        save_gcp_mask(result.mask, stem + "_gcp.png")
    if args.dump_confidence:
        save_cost_volume(result.confidence, stem + "_confidence.bin")
        cof = np.rint(result.mask.cof_c * 255).astype(np.uint8)
        Image.fromarray(cof, mode="L").save(stem + "_confidence.png")
    msg = f"disparity -> {args.out}"
    if result.mask is not None:
        msg += f" (GCP density {result.mask.density:.3f})"
    print(msg)
    return EXIT_OK


def cmd_eval(args):
    config = load_config(args)
    frames = _load_frames(args.data_dir)
    params = _load_model(args.model) if args.model else None
    reports, failures = [], []
    for fr in frames:
        try:
            if args.predictions:
                disp = load_disparity_png(os.path.join(args.predictions, f"{fr.frame_id}_disp.png"))
                disp = np.nan_to_num(disp, nan=0.0)
            else:
                disp = match(fr.left, fr.right, config).disparity
            eb = evaluate.error_rate(disp, fr.gt, args.tau)
            er = None
            if params is not None:
                er = evaluate.error_rate(match(fr.left, fr.right, config, params).disparity, fr.gt, args.tau)
            reports.append((fr.frame_id, eb, er))
        except Exception as exc:  # keep going; failures are listed at the end
            failures.append((fr.frame_id, exc))
            log.error("frame %s failed: %s", fr.frame_id, exc)
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "frames.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_id", "error_baseline", "error_refined", "improvement"])
        for fid, eb, er in reports:
            w.writerow([fid, repr(eb), "" if er is None else repr(er), "" if er is None else repr(eb - er)])
    for fid, exc in failures:
        print(f"frame {fid} failed: {exc}", file=sys.stderr)
    if not reports:
        return EXIT_FAILURE
    mean_b = float(np.mean([eb for _, eb, _ in reports]))
    print(f"frames evaluated: {len(reports)}  (failed: {len(failures)})")
    print(f"{config.cost_kind.upper()}+SGM mean error: {mean_b:.4%}")
    if params is not None:
        mean_r = float(np.mean([er for _, _, er in reports]))
        print(f"{config.cost_kind.upper()}+GCP+SGM mean error: {mean_r:.4%}")
        print(f"mean improvement: {mean_b - mean_r:.4%}")
    print(f"report -> {out}")
    return EXIT_OK


def cmd_sweep_theta(args):
    config = load_config(args)
    frames = _load_frames(args.data_dir)
    params = _load_model(args.model)
    try:
        thetas = [float(t) for t in args.thetas.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --thetas: {exc}") from exc
    try:
        points = evaluate.sweep_theta(frames, thetas, params, config, args.tau)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "theta_sweep.csv")
    evaluate.write_sweep_csv(points, out)
    for p in points:
        print(f"theta {p.theta:.3f}  mean error {p.mean_error:.4%}")
    best = evaluate.best_theta(points)
    print(f"best theta {best.theta:.3f} (mean error {best.mean_error:.4%}); sweep -> {out}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "match": cmd_match, "eval": cmd_eval, "sweep-theta": cmd_sweep_theta}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"gcpstereo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, ImageFormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"gcpstereo {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
