"""Batch command line: ``run``, ``synth``, ``eval`` and ``histogram``.

Exit codes: 0 success, 2 some images failed, 64 usage error,
66 unreadable input, 74 output cannot be written.
"""

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import DomainError, histogram
from .enhance import StretchParams, stretch_contrast, to_grayscale
from .imageio import DecodeError, load_binary, load_image, save_binary, save_gray, save_rgb, write_bytes_atomic
from .pipeline import DEFAULT_STAGE_ORDER, ConfigError, PipelineConfig, evaluate, micro_average, run_pipeline
from .segment import ThresholdStrategy, ittt_steps, otsu_threshold
from .synth import SynthParams, generate_corpus, read_manifest

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66
EXIT_CANTCREATE = 74

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")
PREDICTION_SUFFIX = "_skeleton"

log = logging.getLogger("crackdet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration


PIPELINE_KEYS = {
    "strategy": str,
    "ittt-epsilon": int,
    "ittt-max-iterations": int,
    "stretch-low": float,
    "stretch-high": float,
    "filter-radius": int,
    "min-area": int,
    "connectivity": int,
    "stage-order": str,
    "detection-min-length": float,
    "save-stages": lambda v: v.strip().lower() in ("1", "true", "yes", "on"),
    "parallelism": int,
}


def read_config_file(path) -> dict:
    """Parse a flat ``key=value`` file whose keys mirror the long flag names."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key not in PIPELINE_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = PIPELINE_KEYS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def _merged_settings(args) -> dict:
    """Flags override the config file, which overrides defaults."""
    settings = read_config_file(args.config) if args.config else {}
    for key in PIPELINE_KEYS:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            settings[key] = value
    return settings


def build_config(settings: dict) -> PipelineConfig:
    try:
        strategy = ThresholdStrategy.parse(
            settings.get("strategy", "otsu"),
            epsilon=settings.get("ittt-epsilon", 1),
            max_iterations=settings.get("ittt-max-iterations", 50),
        )
        stretch = StretchParams(settings.get("stretch-low", 0.01), settings.get("stretch-high", 0.01))
        order = settings.get("stage-order")
        stage_order = tuple(s.strip() for s in order.split(",") if s.strip()) if order else DEFAULT_STAGE_ORDER
        return PipelineConfig(
            stage_order=stage_order,
            stretch=stretch,
            strategy=strategy,
            filter_radius=settings.get("filter-radius", 1),
            min_component_area=settings.get("min-area", 20),
            connectivity=settings.get("connectivity", 8),
            detection_min_length=settings.get("detection-min-length", 10.0),
        )
    except (ConfigError, DomainError) as exc:
        raise UsageError(str(exc)) from None


def _add_pipeline_flags(p):
    p.add_argument("--config", help="key=value file mirroring the flag names")
    p.add_argument("--strategy", help="fixed:<t> | otsu | ittt (default otsu)")
    p.add_argument("--ittt-epsilon", type=int)
    p.add_argument("--ittt-max-iterations", type=int)
    p.add_argument("--stretch-low", type=float)
    p.add_argument("--stretch-high", type=float)
    p.add_argument("--filter-radius", type=int)
    p.add_argument("--min-area", type=int)
    p.add_argument("--connectivity", type=int, choices=(4, 8))
    p.add_argument("--detection-min-length", type=float)
    p.add_argument("--stage-order", help="comma-separated stage names")


# ---------------------------------------------------------------------------
# run


def _collect_inputs(paths):
    inputs = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            inputs.extend(sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES))
        else:
            inputs.append(path)
    return inputs


def _unique_stems(inputs):
    stems, seen = [], {}
    for path in inputs:
        stem = path.stem
        seen[stem] = seen.get(stem, 0) + 1
        stems.append(stem if seen[stem] == 1 else f"{stem}-{seen[stem]}")
    return stems


def _side_by_side(original, result_mask):
    """Original image next to the result (crack pixels white on black)."""
    result = np.repeat(np.where(result_mask, 255, 0).astype(np.uint8)[:, :, None], 3, axis=2)
    gap = np.full((original.shape[0], 4, 3), 128, dtype=np.uint8)
    return np.concatenate([original, gap, result], axis=1)


def _save_artifacts(report, stem, out_dir, save_stages):
    artifacts = {}
    for name, mask in (("mask", report.mask), ("skeleton", report.skeleton)):
        path = out_dir / f"{stem}_{name}.png"
        save_binary(mask, path)
        artifacts[name] = str(path)
    if save_stages:
        for index, (name, data) in enumerate(report.stages.items()):
            path = out_dir / f"{stem}_stage{index:02d}_{name}.png"
            if data.dtype == bool:
                save_binary(data, path)
            elif data.ndim == 3:
                save_rgb(data, path)
            else:
                save_gray(data, path)
            artifacts[f"stage:{name}"] = str(path)
        path = out_dir / f"{stem}_pair.png"
        save_rgb(_side_by_side(report.stages["original"], report.skeleton), path)
        artifacts["pair"] = str(path)
    return artifacts


def process_one(path, stem, config, out_dir, save_stages):
    """Run one image end to end; returns the report path."""
    image = load_image(path)
    report = run_pipeline(image, config, source=str(path), keep_stages=save_stages)
    report = replace(report, stage_artifacts=_save_artifacts(report, stem, out_dir, save_stages))
    report_path = out_dir / f"{stem}.json"
    write_bytes_atomic(report_path, report.to_json().encode("utf-8"))
    return report_path, report


def cmd_run(args) -> int:
    settings = _merged_settings(args)
    config = build_config(settings)
    parallelism = settings.get("parallelism", 1)
    save_stages = bool(settings.get("save-stages", False))
    if parallelism < 1:
        raise UsageError("--parallelism must be >= 1")
    inputs = _collect_inputs(args.input or [])
    if not inputs:
        raise UsageError("no input images")
    out_dir = Path(args.output)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        log.error("cannot write to %s: %s", out_dir, exc)
        return EXIT_CANTCREATE

    stems = _unique_stems(inputs)

    def work(item):
        path, stem = item
        try:
            return process_one(path, stem, config, out_dir, save_stages), None
        except Exception as exc:  # isolate per-image failures
            log.error("%s: %s", path, exc)
            return None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        results = list(pool.map(work, zip(inputs, stems)))

    reports, failures, detected = [], [], 0
    for path, (done, error) in zip(inputs, results):
        if error is not None:
            failures.append({"source": str(path), "error": error})
            continue
        report_path, report = done
        reports.append(str(report_path))
        detected += report.metrics.crack_detected
    summary = {
        "config": config.to_dict(),
        "inputs": len(inputs),
        "processed": len(reports),
        "failed": failures,
        "cracks_detected": detected,
        "reports": reports,
    }
    try:
        write_bytes_atomic(out_dir / "summary.json", (json.dumps(summary, indent=2) + "\n").encode("utf-8"))
    except OSError as exc:
        log.error("cannot write summary: %s", exc)
        return EXIT_CANTCREATE
    print(f"processed {len(reports)}/{len(inputs)} images, {detected} with cracks detected")
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    try:
        params = SynthParams(
            width=args.width,
            height=args.height,
            seed=args.seed,
            crack_width=args.crack_width,
            crack_intensity=args.crack_intensity,
            background=args.background,
            background_mean=args.background_mean,
            noise_sigma=args.noise_sigma,
            n_cracks=args.n_cracks,
            impulse_rate=args.impulse_rate,
            crack_length=args.crack_length,
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    try:
        manifest = generate_corpus(params, args.count, args.output)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_CANTCREATE
    print(manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


EVAL_COLUMNS = ["path", "true_positive", "false_positive", "false_negative", "matched_truth", "precision", "recall", "f1", "missing_prediction"]


def cmd_eval(args) -> int:
    try:
        rows = read_manifest(args.input)
    except OSError as exc:
        log.error("cannot read manifest: %s", exc)
        return EXIT_NOINPUT
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad manifest: {exc}") from None
    predictions = Path(args.predictions)
    if not predictions.is_dir():
        log.error("predictions directory %s does not exist", predictions)
        return EXIT_NOINPUT

    per_image, scores = [], []
    for row in rows:
        try:
            truth = load_binary(row["mask_path"])
        except (OSError, DecodeError) as exc:
            log.error("cannot read truth mask: %s", exc)
            return EXIT_NOINPUT
        pred_path = predictions / f"{Path(row['path']).stem}{args.suffix}.png"
        missing = not pred_path.exists()
        if missing:
            log.warning("no prediction for %s; scoring as empty", row["path"])
            predicted = np.zeros_like(truth)
        else:
            try:
                predicted = load_binary(pred_path)
            except (OSError, DecodeError) as exc:
                log.error("cannot read prediction %s: %s", pred_path, exc)
                return EXIT_NOINPUT
        try:
            score = evaluate(predicted, truth, args.tolerance)
        except DomainError as exc:
            log.error("%s: %s", pred_path, exc)
            return EXIT_NOINPUT
        scores.append(score)
        per_image.append({"path": Path(row["path"]).name, **score.to_dict(), "missing_prediction": missing})
    micro = micro_average(scores, args.tolerance)

    out_dir = Path(args.output)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=EVAL_COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    writer.writerows(per_image)
    doc = {"tolerance_radius": args.tolerance, "images": per_image, "micro": micro.to_dict()}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_bytes_atomic(out_dir / "eval.csv", buf.getvalue().encode("utf-8"))
        write_bytes_atomic(out_dir / "eval.json", (json.dumps(doc, indent=2) + "\n").encode("utf-8"))
    except OSError as exc:
        log.error("cannot write evaluation: %s", exc)
        return EXIT_CANTCREATE
    print(f"micro precision {micro.precision:.4f} recall {micro.recall:.4f} f1 {micro.f1:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# histogram


def cmd_histogram(args) -> int:
    try:
        image = load_image(args.input)
    except (OSError, DecodeError) as exc:
        log.error("cannot read %s: %s", args.input, exc)
        return EXIT_NOINPUT
    try:
        strategy = ThresholdStrategy.parse(args.strategy, args.ittt_epsilon, args.ittt_max_iterations)
        gray = to_grayscale(image)
        if args.stretch:
            gray, _ = stretch_contrast(gray, StretchParams(args.stretch_low, args.stretch_high))
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    bins = histogram(gray)

    if strategy.kind == "fixed":
        outcome = replace(otsu_threshold(bins), threshold=strategy.t, trace=(strategy.t,))
    elif strategy.kind == "otsu":
        outcome = otsu_threshold(bins)
    else:
        outcome, _ = ittt_steps(bins, strategy.epsilon, strategy.max_iterations)

    table = "intensity,count\n" + "".join(f"{v},{int(c)}\n" for v, c in enumerate(bins))
    lines = [f"strategy: {strategy}"]
    lines += [f"T{k}: {t}" for k, t in enumerate(outcome.trace)]
    lines += [
        f"threshold: {outcome.threshold}",
        f"iterations: {outcome.iterations}",
        f"converged: {str(outcome.converged).lower()}",
    ]
    if args.output:
        out_dir = Path(args.output)
        stem = Path(args.input).stem
        doc = {
            "source": str(args.input),
            "strategy": str(strategy),
            "trace": list(outcome.trace),
            "threshold": outcome.threshold,
            "iterations": outcome.iterations,
            "converged": outcome.converged,
        }
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_bytes_atomic(out_dir / f"{stem}_histogram.csv", table.encode("utf-8"))
            write_bytes_atomic(out_dir / f"{stem}_threshold.json", (json.dumps(doc, indent=2) + "\n").encode("utf-8"))
        except OSError as exc:
            log.error("cannot write histogram: %s", exc)
            return EXIT_CANTCREATE
    else:
        sys.stdout.write(table + "\n")
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crackdet", description="Histogram-based crack detection toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="detect cracks in images")
    run.add_argument("--input", nargs="+", help="image files or directories")
    run.add_argument("--output", required=True, help="directory for reports and masks")
    run.add_argument("--save-stages", action="store_const", const=True, default=None)
    run.add_argument("--parallelism", type=int)
    _add_pipeline_flags(run)
    run.set_defaults(func=cmd_run)

    synth = sub.add_parser("synth", help="generate a synthetic corpus")
    defaults = SynthParams()
    synth.add_argument("--output", required=True)
    synth.add_argument("--count", type=int, default=10)
    synth.add_argument("--seed", type=int, default=defaults.seed)
    synth.add_argument("--width", type=int, default=defaults.width)
    synth.add_argument("--height", type=int, default=defaults.height)
    synth.add_argument("--crack-width", type=int, default=defaults.crack_width)
    synth.add_argument("--crack-intensity", type=int, default=defaults.crack_intensity)
    synth.add_argument("--crack-length", type=float, default=None)
    synth.add_argument("--background", default=defaults.background)
    synth.add_argument("--background-mean", type=int, default=defaults.background_mean)
    synth.add_argument("--noise-sigma", type=float, default=defaults.noise_sigma)
    synth.add_argument("--n-cracks", type=int, default=defaults.n_cracks)
    synth.add_argument("--impulse-rate", type=float, default=defaults.impulse_rate)
    synth.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="score predictions against a corpus manifest")
    ev.add_argument("--input", required=True, help="corpus manifest.csv")
    ev.add_argument("--predictions", required=True, help="directory written by `run`")
    ev.add_argument("--output", required=True)
    ev.add_argument("--tolerance", type=int, default=2)
    ev.add_argument("--suffix", default=PREDICTION_SUFFIX, help="prediction file suffix before .png")
    ev.set_defaults(func=cmd_eval)

    hist = sub.add_parser("histogram", help="dump the intensity histogram and threshold trace")
    hist.add_argument("--input", required=True)
    hist.add_argument("--output", help="directory for CSV/JSON (default: CSV on stdout)")
    hist.add_argument("--strategy", default="otsu")
    hist.add_argument("--ittt-epsilon", type=int, default=1)
    hist.add_argument("--ittt-max-iterations", type=int, default=50)
    hist.add_argument("--stretch", action="store_true", help="histogram the contrast-stretched image")
    hist.add_argument("--stretch-low", type=float, default=0.01)
    hist.add_argument("--stretch-high", type=float, default=0.01)
    hist.set_defaults(func=cmd_histogram)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crackdet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
