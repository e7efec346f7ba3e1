"""Displacement metrics for multi-modal trajectory forecasts.

Best-of-K ADE/FDE follow the standard convention (unsquared euclidean
distance, final step without time averaging).  The squared-ADE and
FDE-over-horizon variants that circulate in parts of the literature are
available behind keyword flags, standard form default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class MetricShapeError(Exception):
    pass


def _check(pred: np.ndarray, gt: np.ndarray, pred_nd: int, gt_nd: int) -> None:
    if pred.ndim != pred_nd or gt.ndim != gt_nd:
        raise MetricShapeError(
            f"expected pred ndim {pred_nd} and gt ndim {gt_nd}, "
            f"got {pred.ndim} and {gt.ndim}"
        )
    if pred.shape[-2:] != gt.shape[-2:] or pred.shape[-1] != 2:
        raise MetricShapeError(
            f"incompatible shapes pred {pred.shape} vs gt {gt.shape}"
        )


def ade_k(pred: np.ndarray, gt: np.ndarray, squared: bool = False) -> float:
    """Best-of-K average displacement error for one agent.

    pred: [K, T, 2], gt: [T, 2].  Min over modes of the time-averaged
    euclidean distance (squared distance with ``squared=True``).
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check(pred, gt, 3, 2)
    d2 = ((pred - gt[None]) ** 2).sum(axis=2, dtype=np.float64)
    d = d2 if squared else np.sqrt(d2)
    return float(d.mean(axis=1).min())


def fde_k(pred: np.ndarray, gt: np.ndarray, time_averaged: bool = False) -> float:
    """Best-of-K final displacement error for one agent.

    pred: [K, T, 2], gt: [T, 2].  Min over modes of the euclidean
    distance at the final step; ``time_averaged`` divides by T.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check(pred, gt, 3, 2)
    d = np.sqrt(((pred[:, -1] - gt[-1]) ** 2).sum(axis=1, dtype=np.float64))
    out = float(d.min())
    if time_averaged:
        out /= pred.shape[1]
    return out


def min_joint_ade(pred: np.ndarray, gt: np.ndarray) -> float:
    """Joint best-of-K ADE over all agents of one scene.

    pred: [K, N, T, 2], gt: [N, T, 2].  The min is over joint modes: one
    k serves every agent, and the displacement is averaged over both
    agents and timesteps.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check(pred, gt, 4, 3)
    d = np.sqrt(((pred - gt[None]) ** 2).sum(axis=3, dtype=np.float64))
    return float(d.mean(axis=(1, 2)).min())


def joint_best_mode(pred: np.ndarray, gt: np.ndarray) -> int:
    """Index of the joint mode minimizing the scene-average displacement."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check(pred, gt, 4, 3)
    d = np.sqrt(((pred - gt[None]) ** 2).sum(axis=3, dtype=np.float64))
    return int(d.mean(axis=(1, 2)).argmin())


def miss_rate(pred: np.ndarray, gt: np.ndarray, threshold: float = 2.0) -> float:
    """Fraction of agents whose final-step displacement exceeds the
    threshold under the joint best mode (same mode for all agents)."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    k = joint_best_mode(pred, gt)
    final = np.sqrt(
        ((pred[k, :, -1] - gt[:, -1]) ** 2).sum(axis=1, dtype=np.float64)
    )
    return float((final > threshold).mean())


def mean_ade_best_of_k(pred: np.ndarray, gt: np.ndarray) -> float:
    """Dataset mean of per-agent best-of-K ADE.

    pred: [S, N, K, T, 2], gt: [S, N, T, 2]; vectorized batch form of
    ``ade_k`` used for validation quality during training.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.ndim != 5 or gt.ndim != 4:
        raise MetricShapeError(
            f"expected pred [S,N,K,T,2] and gt [S,N,T,2], got {pred.shape} vs {gt.shape}"
        )
    d = np.sqrt(((pred - gt[:, :, None]) ** 2).sum(axis=4, dtype=np.float64))
    return float(d.mean(axis=3).min(axis=2).mean())


@dataclass
class EvalReport:
    """Quality and parameter-efficiency summary of one scenario path."""

    scenario: str
    ade_k: float
    fde_k: float
    min_joint_ade: float
    miss_rate: float
    modes_k: int
    effective_params: int
    additional_params: int
    score: float

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "ade_k": self.ade_k,
            "fde_k": self.fde_k,
            "min_joint_ade": self.min_joint_ade,
            "miss_rate": self.miss_rate,
            "modes_k": self.modes_k,
            "effective_params": self.effective_params,
            "additional_params": self.additional_params,
            "score": self.score,
        }

    def as_text(self) -> str:
        lines = [f"{key}={value}" for key, value in self.as_dict().items()]
        return "\n".join(lines) + "\n"

    def as_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"


def build_report(
    pred: np.ndarray,
    gt: np.ndarray,
    scenario: str,
    effective_params: int,
    additional_params: int,
    score: float,
    miss_threshold: float = 2.0,
    squared_ade: bool = False,
    fde_over_horizon: bool = False,
) -> EvalReport:
    """Aggregate metrics over a [S, N, K, T, 2] prediction batch."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.ndim != 5 or gt.ndim != 4:
        raise MetricShapeError(
            f"expected pred [S,N,K,T,2] and gt [S,N,T,2], got {pred.shape} vs {gt.shape}"
        )
    s, n, k = pred.shape[0], pred.shape[1], pred.shape[2]
    ades = []
    fdes = []
    joints = []
    misses = []
    for i in range(s):
        joint_pred = pred[i].transpose(1, 0, 2, 3)  # [K, N, T, 2]
        joints.append(min_joint_ade(joint_pred, gt[i]))
        misses.append(miss_rate(joint_pred, gt[i], miss_threshold))
        for a in range(n):
            ades.append(ade_k(pred[i, a], gt[i, a], squared=squared_ade))
            fdes.append(fde_k(pred[i, a], gt[i, a], time_averaged=fde_over_horizon))
    return EvalReport(
        scenario=scenario,
        ade_k=float(np.mean(ades)),
        fde_k=float(np.mean(fdes)),
        min_joint_ade=float(np.mean(joints)),
        miss_rate=float(np.mean(misses)),
        modes_k=k,
        effective_params=effective_params,
        additional_params=additional_params,
        score=score,
    )
