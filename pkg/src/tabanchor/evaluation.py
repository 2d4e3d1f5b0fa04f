"""Per-document precision / recall / F-measure, macro-averaged over a dataset."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import PageMismatch, UnknownPageId
from .geometry import area_inside_union, iou_matrix
from .ingest import BoxClass


class EvalMode(str, Enum):
    COUNT = "count"
    AREA = "area"


class MatchPolicy(str, Enum):
    GREEDY = "greedy"
    EXACT = "exact"


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    mode: EvalMode = EvalMode.COUNT
    matching: MatchPolicy = MatchPolicy.GREEDY

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")
        object.__setattr__(self, "mode", EvalMode(self.mode))
        object.__setattr__(self, "matching", MatchPolicy(self.matching))


@dataclass(frozen=True)
class ClassReport:
    precision: float
    recall: float
    f_measure: float
    tp: float = 0
    fp: float = 0
    fn: float = 0


@dataclass
class EvalReport:
    config: EvalConfig
    per_document: dict
    dataset_row: ClassReport
    dataset_column: ClassReport
    dataset_average_f: float


def precision(tp, fp):
    return tp / (tp + fp) if tp + fp > 0 else 0.0


def recall(tp, fn):
    return tp / (tp + fn) if tp + fn > 0 else 0.0


def f_measure(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def match_detections(gt, preds, iou_threshold=0.5, policy=MatchPolicy.GREEDY):
    """One-to-one matching of predictions to ground truth.

    Greedy (default) accepts pairs in order of descending IoU, ties going to
    the lower gt index and then the lower prediction index. The exact policy
    returns a maximum-cardinality matching, preferring higher total IoU among
    those. Returns a list of ``(gt_index, pred_index, iou)``.
    """
    m = iou_matrix(list(gt), list(preds))
    if m.size == 0:
        return []
    if MatchPolicy(policy) is MatchPolicy.EXACT:
        valid = m >= iou_threshold
        # cardinality dominates: any extra pair outweighs all IoU differences
        weight = np.where(valid, (m.size + 1) + m, 0.0)
        rows, cols = linear_sum_assignment(weight, maximize=True)
        return sorted((int(g), int(p), float(m[g, p])) for g, p in zip(rows, cols) if valid[g, p])

    g_idx, p_idx = np.nonzero(m >= iou_threshold)
    order = np.lexsort((p_idx, g_idx, -m[g_idx, p_idx]))
    used_g, used_p, out = set(), set(), []
    for i in order:
        g, p = int(g_idx[i]), int(p_idx[i])
        if g in used_g or p in used_p:
            continue
        used_g.add(g)
        used_p.add(p)
        out.append((g, p, float(m[g, p])))
    return out


def _class_report(gt, preds, config):
    if not gt and not preds:
        return ClassReport(1.0, 1.0, 1.0, 0, 0, 0)
    if config.mode is EvalMode.COUNT:
        tp = len(match_detections(gt, preds, config.iou_threshold, config.matching))
        fp, fn = len(preds) - tp, len(gt) - tp
        if not gt or not preds:
            return ClassReport(0.0, 0.0, 0.0, tp, fp, fn)
        p, r = precision(tp, fp), recall(tp, fn)
        return ClassReport(p, r, f_measure(p, r), tp, fp, fn)

    pred_area = sum(b.area for b in preds)
    gt_area = sum(b.area for b in gt)
    if not gt or not preds:
        return ClassReport(0.0, 0.0, 0.0, 0.0, float(pred_area), float(gt_area))
    tp_pred = sum(area_inside_union(b, gt) for b in preds)
    tp_gt = sum(area_inside_union(b, preds) for b in gt)
    p = tp_pred / pred_area if pred_area > 0 else 0.0
    r = tp_gt / gt_area if gt_area > 0 else 0.0
    return ClassReport(p, r, f_measure(p, r), tp_pred, pred_area - tp_pred, gt_area - tp_gt)


def evaluate_document(record, preds, config: EvalConfig = EvalConfig()):
    """Return ``{"row": ClassReport, "column": ClassReport}`` for one page."""
    by_class = {BoxClass.ROW: [], BoxClass.COLUMN: []}
    for d in preds:
        if d.page_id != record.page_id:
            raise PageMismatch(f"prediction for page {d.page_id!r} evaluated against {record.page_id!r}")
        by_class[d.cls].append(d.box)
    return {
        "row": _class_report(list(record.rows), by_class[BoxClass.ROW], config),
        "column": _class_report(list(record.columns), by_class[BoxClass.COLUMN], config),
    }


def _mean_report(reports):
    n = len(reports)
    if n == 0:
        return ClassReport(0.0, 0.0, 0.0, 0, 0, 0)
    return ClassReport(
        math.fsum(r.precision for r in reports) / n,
        math.fsum(r.recall for r in reports) / n,
        math.fsum(r.f_measure for r in reports) / n,
        sum(r.tp for r in reports),
        sum(r.fp for r in reports),
        sum(r.fn for r in reports),
    )


def evaluate_dataset(dataset, all_preds, config: EvalConfig = EvalConfig(), jobs=1) -> EvalReport:
    """Score each document independently, then take unweighted means.

    The dataset-level precision/recall/F are means of the per-document
    values; tp/fp/fn are summed for reference only.
    """
    pages = dataset.by_id()
    grouped = {pid: [] for pid in pages}
    for d in all_preds:
        if d.page_id not in grouped:
            raise UnknownPageId(f"prediction references unknown page_id {d.page_id!r}")
        grouped[d.page_id].append(d)
    ids = sorted(pages)

    def one(pid):
        return evaluate_document(pages[pid], grouped[pid], config)

    if jobs > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, ids))
    else:
        results = [one(pid) for pid in ids]
    per_document = dict(zip(ids, results))
    row = _mean_report([r["row"] for r in results])
    column = _mean_report([r["column"] for r in results])
    return EvalReport(config, per_document, row, column, (row.f_measure + column.f_measure) / 2)


# --- report serialisation -------------------------------------------------


def _encode(value, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(value, bool) or value is None:
        return "true" if value is True else "false" if value is False else "null"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, level + 1)}: {_encode(v, indent, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _class_dict(r: ClassReport):
    return asdict(r)


def report_to_dict(report: EvalReport):
    cfg = report.config
    return {
        "config": {"iou_threshold": float(cfg.iou_threshold), "mode": cfg.mode.value, "matching": cfg.matching.value},
        "per_document": {
            pid: {"row": _class_dict(doc["row"]), "column": _class_dict(doc["column"])}
            for pid, doc in report.per_document.items()
        },
        "dataset": {
            "row": _class_dict(report.dataset_row),
            "column": _class_dict(report.dataset_column),
            "average_f": float(report.dataset_average_f),
        },
    }


def dumps_report(report: EvalReport) -> str:
    """Report JSON with every real written at six decimal places."""
    return _encode(report_to_dict(report), 2, 0) + "\n"
