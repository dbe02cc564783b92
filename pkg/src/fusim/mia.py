"""Loss-threshold membership inference and the forgetting metric built on it.

The attack predicts "member" when a sample's loss falls below a threshold
fitted on a held-back calibration split.  Comparing attack F1 on the
unlearned model against a trained-from-scratch model measures how much
erased-data signal survived unlearning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .models import evaluate
from .params import ParamVector


@dataclass(frozen=True)
class AttackSample:
    loss: float
    is_member: bool

    def __post_init__(self) -> None:
        if not math.isfinite(self.loss):
            raise ValueError(f"attack sample loss must be finite, got {self.loss}")


@dataclass(frozen=True)
class AttackReport:
    threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int


def _score(pred_member: np.ndarray, truth: np.ndarray) -> tuple[float, float, float, int, int, int, int]:
    tp = int(np.sum(pred_member & truth))
    fp = int(np.sum(pred_member & ~truth))
    tn = int(np.sum(~pred_member & ~truth))
    fn = int(np.sum(~pred_member & truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 0.0 if tp == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1, tp, fp, tn, fn


def collect_losses(
    params: ParamVector, member_data: Dataset, nonmember_data: Dataset
) -> list[AttackSample]:
    """Per-sample cross-entropy losses, members flagged true."""
    if len(member_data) == 0 or len(nonmember_data) == 0:
        raise ValueError("both datasets must be non-empty")
    samples: list[AttackSample] = []
    _, _, member_losses = evaluate(params, member_data)
    _, _, nonmember_losses = evaluate(params, nonmember_data)
    samples.extend(AttackSample(float(l), True) for l in member_losses)
    samples.extend(AttackSample(float(l), False) for l in nonmember_losses)
    return samples


def _stratified_split(
    losses: np.ndarray, truth: np.ndarray, split_seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Boolean calibration mask; each class split half and half by seed."""
    rng = np.random.default_rng(np.random.SeedSequence([split_seed, 0x31A]))
    cal = np.zeros(len(losses), dtype=bool)
    for flag in (True, False):
        idx = np.flatnonzero(truth == flag)
        perm = rng.permutation(idx)
        cal[perm[: (len(perm) + 1) // 2]] = True
    return cal, ~cal


def fit_and_score(samples: list[AttackSample], split_seed: int = 0) -> AttackReport:
    """Fit the threshold on a calibration half, report F1 on the test half.

    Candidate thresholds are the sorted calibration losses plus infinity
    (predict-everything); the rule is member iff loss < threshold.  Ties
    on calibration F1 resolve to the smaller threshold.
    """
    losses = np.array([s.loss for s in samples], dtype=np.float64)
    truth = np.array([s.is_member for s in samples], dtype=bool)
    if int(truth.sum()) < 2 or int((~truth).sum()) < 2:
        raise ValueError("need at least two samples of each membership class")
    cal_mask, test_mask = _stratified_split(losses, truth, split_seed)
    cal_losses, cal_truth = losses[cal_mask], truth[cal_mask]
    candidates = sorted(set(cal_losses.tolist())) + [math.inf]
    best_threshold, best_f1 = candidates[0], -1.0
    for t in candidates:
        _, _, f1, *_ = _score(cal_losses < t, cal_truth)
        if f1 > best_f1:
            best_threshold, best_f1 = t, f1
    test_losses, test_truth = losses[test_mask], truth[test_mask]
    precision, recall, f1, tp, fp, tn, fn = _score(test_losses < best_threshold, test_truth)
    return AttackReport(best_threshold, precision, recall, f1, tp, fp, tn, fn)


def unlearning_effectiveness(
    unlearned: ParamVector,
    scratch: ParamVector,
    erased_data: Dataset,
    heldout_data: Dataset,
    split_seed: int = 0,
) -> tuple[float, float, float]:
    """(F1 on unlearned, F1 on scratch, their difference).

    Treats the erased data as member candidates against held-out
    nonmembers.  A small |difference| means the unlearned model leaks no
    more membership signal than a model that never saw the erased data.
    """
    if unlearned.dim != scratch.dim:
        raise ValueError("models must share one parameter dimension")
    members, nonmembers = _balance(erased_data, heldout_data, split_seed)
    report_u = fit_and_score(collect_losses(unlearned, members, nonmembers), split_seed)
    report_s = fit_and_score(collect_losses(scratch, members, nonmembers), split_seed)
    return report_u.f1, report_s.f1, report_u.f1 - report_s.f1


def _balance(members: Dataset, nonmembers: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Equal-size evaluation sets keep F1 comparable across runs."""
    n = min(len(members), len(nonmembers))
    if n == 0:
        raise ValueError("both datasets must be non-empty")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA1]))

    def take(ds: Dataset) -> Dataset:
        if len(ds) == n:
            return ds
        return ds.subset(np.sort(rng.choice(len(ds), size=n, replace=False)))

    return take(members), take(nonmembers)
