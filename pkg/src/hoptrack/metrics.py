"""CLEAR-MOT accumulation (FP, FN, IDSW, MOTA) and IDF1."""

from __future__ import annotations

import csv
import io as _stdio
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .assignment import iou_match, solve_assignment
from .core_types import BBox, iou

IOU_THRESHOLD = 0.5


@dataclass
class FrameTally:
    matches: list[tuple[int, int]]  # (gt id, pred id)
    fp: int
    fn: int
    idsw: int


@dataclass
class EvalAccumulator:
    fp: int = 0
    fn: int = 0
    idsw: int = 0
    gt_count: int = 0
    pred_count: int = 0
    matches: int = 0
    frames: int = 0
    # gt id -> pred id of its most recent match
    last_match: dict[int, int] = field(default_factory=dict)
    # (gt id, pred id) -> frames where the pair overlaps at IoU >= 0.5
    overlap: Counter = field(default_factory=Counter)

    def match_frame(self, gt: list[tuple[int, BBox]], pred: list[tuple[int, BBox]]) -> FrameTally:
        tally = match_frame(gt, pred, self.last_match)
        self.frames += 1
        self.gt_count += len(gt)
        self.pred_count += len(pred)
        self.fp += tally.fp
        self.fn += tally.fn
        self.idsw += tally.idsw
        self.matches += len(tally.matches)
        for g, p in tally.matches:
            self.last_match[g] = p
        for gid, gbox in gt:
            for pid, pbox in pred:
                if iou(gbox, pbox) >= IOU_THRESHOLD:
                    self.overlap[(gid, pid)] += 1
        return tally

    def merge(self, other: EvalAccumulator) -> EvalAccumulator:
        """Sum counters of two sequences (identities are kept apart per sequence)."""
        merged = EvalAccumulator(
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            idsw=self.idsw + other.idsw,
            gt_count=self.gt_count + other.gt_count,
            pred_count=self.pred_count + other.pred_count,
            matches=self.matches + other.matches,
            frames=self.frames + other.frames,
        )
        merged.overlap = Counter()
        for tag, acc in (("a", self), ("b", other)):
            for (g, p), n in acc.overlap.items():
                merged.overlap[((tag, g), (tag, p))] = n
        return merged


def _check_unique(rows, what: str) -> None:
    ids = [r[0] for r in rows]
    if len(ids) != len(set(ids)):
        dup = sorted(i for i, n in Counter(ids).items() if n > 1)
        raise ValueError(f"duplicate {what} id(s) in frame: {dup}")


def match_frame(
    gt: list[tuple[int, BBox]],
    pred: list[tuple[int, BBox]],
    last_match: dict[int, int] | None = None,
) -> FrameTally:
    """CLEAR correspondence for one frame.

    Correspondences from earlier frames are kept while they still overlap at
    IoU >= 0.5; the remaining objects are assigned optimally.  A ground-truth
    object matched to a different prediction than its previous match counts
    as an identity switch.
    """
    _check_unique(gt, "ground-truth")
    _check_unique(pred, "predicted")
    last_match = last_match or {}
    pred_index = {pid: k for k, (pid, _) in enumerate(pred)}

    pairs: list[tuple[int, int]] = []
    used_g, used_p = set(), set()
    for gi, (gid, gbox) in enumerate(gt):
        pid = last_match.get(gid)
        if pid is None or pid not in pred_index:
            continue
        pk = pred_index[pid]
        if pk not in used_p and iou(gbox, pred[pk][1]) >= IOU_THRESHOLD:
            pairs.append((gi, pk))
            used_g.add(gi)
            used_p.add(pk)

    rest_g = [i for i in range(len(gt)) if i not in used_g]
    rest_p = [k for k in range(len(pred)) if k not in used_p]
    res = iou_match([gt[i][1] for i in rest_g], [pred[k][1] for k in rest_p], IOU_THRESHOLD)
    pairs.extend((rest_g[a], rest_p[b]) for a, b in res.pairs)

    matches = [(gt[gi][0], pred[pk][0]) for gi, pk in pairs]
    idsw = sum(1 for g, p in matches if g in last_match and last_match[g] != p)
    return FrameTally(
        matches=sorted(matches),
        fp=len(pred) - len(pairs),
        fn=len(gt) - len(pairs),
        idsw=idsw,
    )


def mota(acc: EvalAccumulator) -> float:
    if acc.gt_count <= 0:
        raise ValueError("MOTA is undefined without ground-truth objects")
    return 1.0 - (acc.fp + acc.fn + acc.idsw) / acc.gt_count


def idf1_counts(acc: EvalAccumulator) -> tuple[int, int, int]:
    """(IDTP, IDFP, IDFN) under the overlap-maximizing identity matching."""
    if not acc.overlap:
        return 0, acc.pred_count, acc.gt_count
    gids = sorted({g for g, _ in acc.overlap}, key=repr)
    pids = sorted({p for _, p in acc.overlap}, key=repr)
    gi = {g: i for i, g in enumerate(gids)}
    pi = {p: i for i, p in enumerate(pids)}
    cost = np.zeros((len(gids), len(pids)))
    for (g, p), n in acc.overlap.items():
        cost[gi[g], pi[p]] = -n
    res = solve_assignment(cost, max_cost=-0.5)
    idtp = int(-sum(cost[r, c] for r, c in res.pairs))
    return idtp, acc.pred_count - idtp, acc.gt_count - idtp


def idf1(acc: EvalAccumulator) -> float:
    idtp, idfp, idfn = idf1_counts(acc)
    denom = 2 * idtp + idfp + idfn
    if denom == 0:
        return 1.0
    return 2 * idtp / denom


def evaluate(
    gt: dict[int, list[tuple[int, BBox]]],
    pred: dict[int, list[tuple[int, BBox]]],
) -> EvalAccumulator:
    acc = EvalAccumulator()
    for f in sorted(set(gt) | set(pred)):
        acc.match_frame(gt.get(f, []), pred.get(f, []))
    return acc


def outputs_to_pred(outputs) -> dict[int, list[tuple[int, BBox]]]:
    return {o.frame_id: [(tid, box) for tid, box, _ in o.rows] for o in outputs if o.rows}


COLUMNS = ("MOTA", "IDF1", "FP", "FN", "IDSW")


def metric_row(acc: EvalAccumulator) -> dict[str, float]:
    return {
        "MOTA": mota(acc) if acc.gt_count else float("nan"),
        "IDF1": idf1(acc),
        "FP": acc.fp,
        "FN": acc.fn,
        "IDSW": acc.idsw,
    }


def format_table(rows: dict[str, dict[str, float]]) -> str:
    name_w = max([len("sequence")] + [len(n) for n in rows])
    lines = [f"{'sequence':<{name_w}}  " + "  ".join(f"{c:>8}" for c in COLUMNS)]
    for name, row in rows.items():
        cells = [f"{row['MOTA'] * 100:8.2f}", f"{row['IDF1'] * 100:8.2f}"]
        cells += [f"{int(row[c]):8d}" for c in ("FP", "FN", "IDSW")]
        lines.append(f"{name:<{name_w}}  " + "  ".join(cells))
    return "\n".join(lines)


def format_csv(rows: dict[str, dict[str, float]]) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("sequence",) + COLUMNS)
    for name, row in rows.items():
        writer.writerow(
            [name, f"{row['MOTA']:.6f}", f"{row['IDF1']:.6f}", int(row["FP"]), int(row["FN"]), int(row["IDSW"])]
        )
    return buf.getvalue()
