"""Anchor optimization, row-box refinement and evaluation for table row/column detectors.

Exit codes: 0 success, 2 input error, 3 empty input, 4 threshold gate failed.
Every subcommand accepts ``--config FILE``: a JSON object whose keys mirror
the long flag names (dashes or underscores). Flags given on the command line
win over the file; unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .anchors import (
    COLUMN_RATIOS,
    DEFAULT_SCALES,
    ROW_RATIOS,
    AnchorSet,
    AnchorSpec,
    KMeansParams,
    extract_shape_samples,
    generate_traditional_anchors,
    kmeans_optimize,
    mean_best_iou,
)
from .errors import ConfigError, ImageIoError, InputError, TabAnchorError, ThresholdNotMet
from .evaluation import EvalConfig, dumps_report, evaluate_dataset
from .geometry import Box
from .ingest import (
    BoxClass,
    dumps_detections,
    find_page_image,
    load_gray_image,
    read_dataset,
    read_detections,
)
from .refine import RefineParams, audit_record, otsu_threshold, refine_detections
from .render import anchor_gallery_svg, overlay_png
from .synth import SynthSpec, write_synth_dir

logger = logging.getLogger("tabanchor")

_INTERNAL_DESTS = {"command", "config", "func"}


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    pass


def _write_text(path, text):
    Path(path).write_text(text, encoding="utf-8", newline="\n")


# --- optimize -------------------------------------------------------------


def cmd_optimize(args):
    if args.gt is None or args.out is None or args.cls is None:
        raise ConfigError("optimize needs --gt, --class and --out")
    cls = BoxClass.parse(args.cls)
    ratios = args.ratios
    if ratios is None:
        ratios = ROW_RATIOS if cls is BoxClass.ROW else COLUMN_RATIOS
    try:
        spec = AnchorSpec(tuple(args.scales), tuple(ratios))
        params_k = len(spec.scales) * len(spec.ratios)
        params = KMeansParams(
            k=params_k,
            max_iterations=args.max_iter,
            seed=args.seed,
            min_improvement=args.min_improvement,
            update=args.update,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    dataset = read_dataset(args.gt, jobs=args.jobs)
    samples = extract_shape_samples(dataset, cls, resize=not args.no_resize)
    init = generate_traditional_anchors(spec)
    optimized = kmeans_optimize(samples, init, params)
    before = mean_best_iou(samples, init)
    after = mean_best_iou(samples, optimized)
    _write_text(args.out, optimized.to_json())
    print(f"samples: {len(samples)} ({cls.value})")
    print(f"traditional mean_best_iou: {before:.6f}")
    print(f"optimized mean_best_iou:   {after:.6f}")
    print(f"iterations: {optimized.iterations_run}")
    return 0


# --- refine ---------------------------------------------------------------


def cmd_refine(args):
    if args.images is None or args.dets is None or args.out is None:
        raise ConfigError("refine needs --images, --dets and --out")
    clamp = Box(*args.clamp) if args.clamp else None
    dets = read_detections(args.dets)

    order = []
    by_page = {}
    for i, d in enumerate(dets):
        if d.page_id not in by_page:
            by_page[d.page_id] = []
            order.append(d.page_id)
        by_page[d.page_id].append(i)

    paths = {}
    for pid in order:
        path = find_page_image(args.images, pid)
        if path is None:
            raise ImageIoError(f"no image for page_id {pid!r} (looked for {pid}.png / {pid}.pgm)", args.images)
        paths[pid] = path

    def one(pid):
        image = load_gray_image(paths[pid])
        threshold = otsu_threshold(image) if args.otsu else args.intensity
        params = RefineParams(
            intensity_threshold=threshold,
            black_pixel_threshold=args.black_threshold,
            probe_width=args.probe_width,
            mode=args.mode,
            gap_limit=args.gap_limit,
            refine_columns=args.columns,
            clamp=clamp,
        )
        return refine_detections(image, [dets[i] for i in by_page[pid]], params, page_id=pid)

    try:
        if args.jobs > 1 and len(order) > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                refined_pages = list(pool.map(one, order))
        else:
            refined_pages = [one(pid) for pid in order]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    refined = [None] * len(dets)
    for pid, page_dets in zip(order, refined_pages):
        for i, d in zip(by_page[pid], page_dets):
            refined[i] = d
    _write_text(args.out, dumps_detections(refined))
    if args.audit:
        lines = [json.dumps(audit_record(b, a), separators=(",", ":")) for b, a in zip(dets, refined)]
        _write_text(args.audit, "".join(line + "\n" for line in lines))
    changed = sum(1 for b, a in zip(dets, refined) if b.box != a.box)
    print(f"refined {len(refined)} detections on {len(order)} pages ({changed} changed)")
    return 0


# --- eval -----------------------------------------------------------------


def cmd_eval(args):
    if args.gt is None or args.pred is None:
        raise ConfigError("eval needs --gt and --pred")
    try:
        config = EvalConfig(iou_threshold=args.iou, mode=args.mode, matching=args.matching)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    dataset = read_dataset(args.gt)
    preds = read_detections(args.pred)
    try:
        report = evaluate_dataset(dataset, preds, config, jobs=args.jobs)
    except InputError as exc:
        raise exc.located(args.pred) from None
    text = dumps_report(report)
    if args.out:
        _write_text(args.out, text)
    r, c = report.dataset_row, report.dataset_column
    print(f"row:    P={r.precision:.4f} R={r.recall:.4f} F={r.f_measure:.4f}")
    print(f"column: P={c.precision:.4f} R={c.recall:.4f} F={c.f_measure:.4f}")
    print(f"average F: {report.dataset_average_f:.4f}")
    if args.min_average_f is not None and report.dataset_average_f < args.min_average_f:
        raise ThresholdNotMet(f"average F {report.dataset_average_f:.6f} below --min-average-f {args.min_average_f}")
    return 0


# --- synth / render -------------------------------------------------------


def cmd_synth(args):
    if args.spec is None or args.out is None:
        raise ConfigError("synth needs --spec and --out")
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ImageIoError(f"cannot read: {exc.strerror}", args.spec) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", args.spec, exc.lineno) from None
    try:
        spec = SynthSpec.from_dict(data)
    except InputError as exc:
        raise exc.located(args.spec) from None
    except TypeError as exc:
        raise ConfigError(str(exc), args.spec) from None
    dataset, dets = write_synth_dir(spec, args.out, jobs=args.jobs)
    print(f"wrote {len(dataset)} pages and {len(dets)} detections to {args.out}")
    return 0


def cmd_render(args):
    if args.out is None:
        raise ConfigError("render needs --out")
    if args.page:
        if args.gt is None:
            raise ConfigError("page overlays need --gt")
        image = load_gray_image(args.page)
        page_id = args.page_id or Path(args.page).stem
        record = read_dataset(args.gt).by_id().get(page_id)
        layers = {"gt": list(record.rows) + list(record.columns) if record else []}
        if args.pred:
            layers["raw"] = [d.box for d in read_detections(args.pred) if d.page_id == page_id]
        if args.refined:
            layers["refined"] = [d.box for d in read_detections(args.refined) if d.page_id == page_id]
        overlay_png(image, layers, args.out)
        print(f"wrote overlay for {page_id} to {args.out}")
        return 0
    if args.anchors:
        try:
            anchor_set = AnchorSet.from_json(Path(args.anchors).read_text(encoding="utf-8"))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load anchors: {exc}", args.anchors) from None
    else:
        try:
            anchor_set = generate_traditional_anchors(AnchorSpec(tuple(args.scales), tuple(args.ratios)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    _write_text(args.out, anchor_gallery_svg(anchor_set))
    print(f"wrote {len(anchor_set.shapes)} anchors to {args.out}")
    return 0


# --- parser ---------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="tabanchor", description=__doc__.splitlines()[0], formatter_class=_Formatter)
    parser.add_argument("--log-level", default="WARNING", help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=_Formatter)
        p.add_argument("--config", default=None, help="JSON file whose keys mirror these flags")
        p.set_defaults(func=func)
        return p

    p = add("optimize", cmd_optimize, "optimize anchor shapes for one class by K-means under 1 - IoU")
    p.add_argument("--gt", default=None, help="ground truth: PageRecord JSONL file or directory of VOC XML files")
    p.add_argument("--class", dest="cls", choices=["row", "column"], default=None, help="box class to cluster (required)")
    p.add_argument("--scales", type=float, nargs="+", default=list(DEFAULT_SCALES), help="initial anchor scales")
    p.add_argument(
        "--ratios",
        type=float,
        nargs="+",
        default=None,
        help="initial width/height ratios; None means 50 25 10 3 for rows and 0.1 0.3 0.5 1 for columns",
    )
    p.add_argument("--seed", type=int, default=0, help="random seed (recorded; the default init is deterministic)")
    p.add_argument("--max-iter", type=int, default=300, help="maximum Lloyd iterations")
    p.add_argument("--min-improvement", type=float, default=1e-9, help="stop when mean distance improves less")
    p.add_argument("--update", choices=["mean", "medoid"], default="mean", help="centroid update rule")
    p.add_argument("--no-resize", action="store_true", help="skip the 1024x800 resize policy on samples")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for parsing")
    p.add_argument("--out", default=None, help="anchor JSON output path")

    p = add("refine", cmd_refine, "snap row detections to the ink extent of their page")
    p.add_argument("--images", default=None, help="directory holding <page_id>.png or <page_id>.pgm")
    p.add_argument("--dets", default=None, help="Detection JSONL input")
    p.add_argument("--out", default=None, help="refined Detection JSONL output")
    p.add_argument("--black-threshold", type=int, default=2, help="ink pixels a probe strip needs to qualify")
    p.add_argument("--probe-width", type=int, default=1, help="probe strip width in columns")
    p.add_argument("--intensity", type=int, default=128, help="a pixel is ink iff intensity < this")
    p.add_argument("--otsu", action="store_true", help="pick the intensity threshold per page with Otsu's method")
    p.add_argument("--mode", choices=["paper", "gap"], default="paper", help="scan the full row band or stop at gaps")
    p.add_argument("--gap-limit", type=int, default=50, help="empty columns that end a scan in gap mode")
    p.add_argument("--columns", action="store_true", help="also refine column detections (transposed)")
    p.add_argument("--clamp", type=float, nargs=4, default=None, metavar=("X0", "Y0", "X1", "Y1"), help="limit scans to this region")
    p.add_argument("--audit", default=None, help="optional per-box audit JSONL output")
    p.add_argument("--jobs", type=int, default=1, help="pages refined concurrently")

    p = add("eval", cmd_eval, "score detections against ground truth, per document then averaged")
    p.add_argument("--gt", default=None, help="ground truth PageRecord JSONL (or VOC XML directory)")
    p.add_argument("--pred", default=None, help="Detection JSONL")
    p.add_argument("--iou", type=float, default=0.5, help="IoU threshold for a match")
    p.add_argument("--mode", choices=["count", "area"], default="count", help="count- or area-based precision/recall")
    p.add_argument("--matching", choices=["greedy", "exact"], default="greedy", help="matching policy")
    p.add_argument("--out", default=None, help="report JSON output path")
    p.add_argument("--min-average-f", type=float, default=None, help="exit 4 when the dataset average F is lower")
    p.add_argument("--jobs", type=int, default=1, help="documents evaluated concurrently")

    p = add("synth", cmd_synth, "generate synthetic table pages, ground truth and jittered detections")
    p.add_argument("--spec", default=None, help="synth spec JSON {n_pages, seed, layout, perturb}")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="pages generated concurrently")

    p = add("render", cmd_render, "draw an anchor gallery (SVG) or a detection overlay (PNG)")
    p.add_argument("--anchors", default=None, help="anchor JSON to draw")
    p.add_argument("--scales", type=float, nargs="+", default=list(DEFAULT_SCALES), help="scales when no --anchors")
    p.add_argument("--ratios", type=float, nargs="+", default=[0.5, 1.0, 2.0], help="ratios when no --anchors")
    p.add_argument("--page", default=None, help="page image for an overlay")
    p.add_argument("--page-id", default=None, help="page_id of --page (defaults to its file stem)")
    p.add_argument("--gt", default=None, help="ground truth JSONL for the overlay")
    p.add_argument("--pred", default=None, help="raw Detection JSONL for the overlay")
    p.add_argument("--refined", default=None, help="refined Detection JSONL for the overlay")
    p.add_argument("--out", default=None, help="output .svg (gallery) or .png (overlay)")
    return parser, sub


def _subparser(sub, name):
    return sub.choices[name]


def _apply_config(parser, sub, argv, args):
    path = Path(args.config)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", path)
    subparser = _subparser(sub, args.command)
    dests = {a.dest for a in subparser._actions} - _INTERNAL_DESTS - {"help"}
    aliases = {a.dest: a.dest for a in subparser._actions}
    for a in subparser._actions:
        for opt in a.option_strings:
            aliases[opt.lstrip("-").replace("-", "_")] = a.dest
    defaults = {}
    for key, value in data.items():
        dest = aliases.get(str(key).replace("-", "_"))
        if dest is None or dest not in dests:
            raise ConfigError(f"unknown config key {key!r}", path)
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            args = _apply_config(parser, sub, argv, args)
        return args.func(args)
    except TabAnchorError as exc:
        print(f"tabanchor {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
