"""mAP@0.5 over BEV oriented boxes, and HD-map filtering of detections."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .csvio import emit_csv
from .errors import InputError
from .fusion import CLASSES, Detection
from .geometry import DrivableMap, in_drivable_area, oriented_iou
from .scenario import FrameTruth

REPORT_SCHEMA = ("class", "ap", "num_gt", "num_pred")


class ClassAP(NamedTuple):
    ap: float
    num_gt: int
    num_pred: int


@dataclass
class MapResult:
    per_class: dict[str, ClassAP]
    mean_ap: float

    def report_rows(self):
        rows = [(c, r.ap, r.num_gt, r.num_pred) for c, r in self.per_class.items()]
        rows.append(
            ("all", self.mean_ap,
             sum(r.num_gt for r in self.per_class.values()),
             sum(r.num_pred for r in self.per_class.values()))
        )
        return rows

    def to_csv(self, path: str | Path) -> Path:
        return emit_csv(self.report_rows(), REPORT_SCHEMA, path)


def average_precision(tp: Sequence[bool], num_gt: int) -> float:
    """Area under the all-points interpolated precision/recall envelope.

    ``tp`` flags predictions already ranked by descending confidence.
    """
    if num_gt <= 0:
        raise InputError("average_precision needs at least one ground truth")
    tp = np.asarray(tp, dtype=float)
    if len(tp) == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / num_gt
    precision = ctp / (ctp + cfp)
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _by_frame(predictions, truths: Sequence[FrameTruth]) -> list[list[Detection]]:
    keys = [f.anchor_time for f in truths]
    if isinstance(predictions, Mapping):
        unknown = set(predictions) - set(keys)
        if unknown:
            raise InputError(f"predictions reference unknown anchors: {sorted(unknown)[:5]}")
        return [list(predictions.get(k, [])) for k in keys]
    predictions = list(predictions)
    if len(predictions) != len(truths):
        raise InputError("prediction list must align one-to-one with the truth frames")
    return [list(p) for p in predictions]


def evaluate_map(
    predictions: Mapping[float, Sequence[Detection]] | Sequence[Sequence[Detection]],
    truths: Sequence[FrameTruth],
    iou_threshold: float = 0.5,
) -> MapResult:
    """Per-class AP with greedy highest-IoU matching inside each frame.

    Predictions of a class are ranked over all frames by confidence (ties:
    frame order, then position in the frame's list).  mAP averages the
    classes that occur in the ground truth.
    """
    preds = _by_frame(predictions, truths)
    per_class: dict[str, ClassAP] = {}
    for cls in CLASSES:
        gts = [[o.box for o in f.objects if o.class_label == cls] for f in truths]
        num_gt = sum(len(g) for g in gts)
        if num_gt == 0:
            continue
        ranked = [
            (-d.confidence, fi, di, d)
            for fi, frame_preds in enumerate(preds)
            for di, d in enumerate(frame_preds)
            if d.class_label == cls
        ]
        ranked.sort(key=lambda t: t[:3])
        used = [np.zeros(len(g), dtype=bool) for g in gts]
        tp = []
        for _, fi, _, det in ranked:
            best, best_iou = -1, iou_threshold
            for gi, gbox in enumerate(gts[fi]):
                if used[fi][gi]:
                    continue
                iou = oriented_iou(det.box, gbox)
                if iou >= best_iou and (best < 0 or iou > best_iou):
                    best, best_iou = gi, iou
            if best >= 0:
                used[fi][best] = True
            tp.append(best >= 0)
        per_class[cls] = ClassAP(average_precision(tp, num_gt), num_gt, len(ranked))
    mean_ap = float(np.mean([r.ap for r in per_class.values()])) if per_class else float("nan")
    return MapResult(per_class, mean_ap)


def apply_map_filter(detections: Sequence[Detection], drivable: DrivableMap) -> list[Detection]:
    """Drop detections whose centre lies outside the drivable area."""
    return [d for d in detections if in_drivable_area(d.position, drivable)]


def filter_frames(predictions: Mapping[float, Sequence[Detection]], drivable: DrivableMap):
    return {k: apply_map_filter(v, drivable) for k, v in predictions.items()}
