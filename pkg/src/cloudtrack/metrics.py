"""CLEAR-MOT evaluation of hypothesis trajectories against ground truth.

Frame-by-frame sweep with persistent correspondences: an existing
ground-truth/hypothesis pair is kept while both are present and within the
gate; everything unmatched goes through a minimum-total-distance assignment
under the gate. Tallies yield MOTA, identity switches, mostly-tracked /
mostly-lost percentages and fragment counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

_FORBIDDEN = 1e12


@dataclass
class MotReport:
    mota: float  # percent, may be negative
    ids: int
    mt: float  # percent of GT trajectories tracked > 80% of their span
    ml: float  # percent tracked < 20%
    fm: int
    misses: int
    false_positives: int
    matches: int
    gt_total: int
    gate: float
    per_frame: list = field(default_factory=list)  # (frame, matches, misses, fp, switches)

    def lines(self) -> list[str]:
        return [
            f"mota: {self.mota:.4f}",
            f"ids: {self.ids}",
            f"mt: {self.mt:.4f}",
            f"ml: {self.ml:.4f}",
            f"fm: {self.fm}",
            f"misses: {self.misses}",
            f"false_positives: {self.false_positives}",
            f"matches: {self.matches}",
            f"gt_total: {self.gt_total}",
            f"gate: {self.gate}",
        ]


def _by_frame(trajectories) -> dict[int, dict[int, np.ndarray]]:
    table: dict[int, dict[int, np.ndarray]] = {}
    for traj in trajectories:
        for frame, pos in zip(traj.frames, traj.positions):
            table.setdefault(int(frame), {})[traj.identity] = pos
    return table


def evaluate(ground_truth, hypothesis, gate: float) -> MotReport:
    """CLEAR-MOT sweep; both inputs are iterables of Trajectory-like objects
    (identity, frames, positions)."""
    if gate <= 0:
        raise ValueError("gate must be positive")
    gt = _by_frame(ground_truth)
    hyp = _by_frame(hypothesis)
    frames = sorted(set(gt) | set(hyp))

    corr: dict[int, int] = {}  # gt identity -> hypothesis identity
    last_matched: dict[int, int] = {}  # last hypothesis each gt was matched to
    matched_frames: dict[int, int] = {}  # gt identity -> matched sample count
    gt_frames: dict[int, int] = {}
    was_matched: dict[int, bool] = {}  # previous status per gt, for FM

    misses = false_positives = matches = switches = fragments = 0
    per_frame = []

    for frame in frames:
        gt_here = gt.get(frame, {})
        hyp_here = hyp.get(frame, {})
        matched_gt: dict[int, int] = {}
        used_hyp: set[int] = set()

        # keep existing correspondences still within the gate
        for g in sorted(gt_here):
            h = corr.get(g)
            if h is None or h not in hyp_here or h in used_hyp:
                continue
            if np.linalg.norm(gt_here[g] - hyp_here[h]) <= gate:
                matched_gt[g] = h
                used_hyp.add(h)
            else:
                del corr[g]

        # assign the rest by minimum total distance under the gate
        free_g = [g for g in sorted(gt_here) if g not in matched_gt]
        free_h = [h for h in sorted(hyp_here) if h not in used_hyp]
        if free_g and free_h:
            ga = np.array([gt_here[g] for g in free_g])
            ha = np.array([hyp_here[h] for h in free_h])
            dist = np.sqrt(((ga[:, None, :] - ha[None, :, :]) ** 2).sum(-1))
            cost = np.where(dist <= gate, dist, _FORBIDDEN)
            for i, j in zip(*linear_sum_assignment(cost)):
                if dist[i, j] > gate:
                    continue
                g, h = free_g[i], free_h[j]
                matched_gt[g] = h
                used_hyp.add(h)

        frame_switches = 0
        for g, h in matched_gt.items():
            if g in last_matched and last_matched[g] != h:
                frame_switches += 1
            last_matched[g] = h
            # a hypothesis serves one gt: stale reverse mappings die here
            for other, prev in list(corr.items()):
                if prev == h and other != g:
                    del corr[other]
            corr[g] = h

        for g in gt_here:
            gt_frames[g] = gt_frames.get(g, 0) + 1
            hit = g in matched_gt
            if hit:
                matched_frames[g] = matched_frames.get(g, 0) + 1
            if was_matched.get(g, False) and not hit:
                fragments += 1
            was_matched[g] = hit

        frame_misses = len(gt_here) - len(matched_gt)
        frame_fp = len(hyp_here) - len(matched_gt)
        misses += frame_misses
        false_positives += frame_fp
        matches += len(matched_gt)
        switches += frame_switches
        per_frame.append((frame, len(matched_gt), frame_misses, frame_fp, frame_switches))

    gt_total = sum(gt_frames.values())
    mota = 100.0 * (1.0 - (misses + false_positives + switches) / gt_total) if gt_total else 100.0
    n_traj = len(gt_frames)
    coverage = [matched_frames.get(g, 0) / gt_frames[g] for g in gt_frames]
    mt = 100.0 * sum(c > 0.8 for c in coverage) / n_traj if n_traj else 100.0
    ml = 100.0 * sum(c < 0.2 for c in coverage) / n_traj if n_traj else 0.0
    return MotReport(
        mota=mota,
        ids=switches,
        mt=mt,
        ml=ml,
        fm=fragments,
        misses=misses,
        false_positives=false_positives,
        matches=matches,
        gt_total=gt_total,
        gate=gate,
        per_frame=per_frame,
    )
