"""Evaluation reports and their files."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from evaluation.metrics import UserMetrics

logger = logging.getLogger(__name__)

QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)

RANKING_CONVENTIONS = {
    "precision_denominator": "k",
    "empty_test_users": "excluded",
    "idcg_cutoff": "min(k, relevant)",
    "train_items": "excluded from rankings",
    "ties": "smaller index first",
}


class GammaPoint(BaseModel):
    gamma: float
    ndcg: float


class EvalReport(BaseModel):
    """Outcome of one benchmark run.

    ``timing`` and ``per_user`` are not part of the report body: the first
    goes to a ``.timing.json`` side file, the second to a ``.users.csv``.
    """

    dataset: str
    task: str
    mode: str
    metric: str
    gamma: Optional[float] = None
    k: int
    seed: int
    n_evaluated: int
    n_skipped: int = 0
    aggregates: Dict[str, float]
    distributions: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    gamma_curve: Optional[List[GammaPoint]] = None
    conventions: Dict[str, str] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)

    timing: Dict[str, float] = Field(default_factory=dict, exclude=True)
    per_user: Optional[Any] = Field(default=None, exclude=True)

    @property
    def stem(self) -> str:
        gamma = "na" if self.gamma is None else f"{self.gamma:g}"
        return f"{self.dataset}_{self.metric}_{self.mode}_{gamma}"

    def body(self) -> str:
        """Report JSON with a fixed key order and no run-dependent fields."""
        return json.dumps(self.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"


def distribution(values: np.ndarray) -> Dict[str, float]:
    """Mean, spread and quantiles of one per-user metric."""
    if values.size == 0:
        return {}
    summary = {"mean": float(np.mean(values)), "std": float(np.std(values)),
               "min": float(np.min(values)), "max": float(np.max(values))}
    for q, value in zip(QUANTILES, np.quantile(values, QUANTILES)):
        summary[f"q{int(q * 100):02d}"] = float(value)
    return summary


def ranking_report(
    metrics: UserMetrics,
    dataset: str,
    mode: str,
    metric: str,
    gamma: Optional[float],
    k: int,
    seed: int,
    **extra: Any,
) -> EvalReport:
    """Assemble a ranking-task report from per-user metrics."""
    means = metrics.means()
    aggregates = {f"precision@{k}": means["precision"], f"recall@{k}": means["recall"], f"ndcg@{k}": means["ndcg"]}
    return EvalReport(
        dataset=dataset,
        task="ranking",
        mode=mode,
        metric=metric,
        gamma=gamma,
        k=k,
        seed=seed,
        n_evaluated=metrics.n_evaluated,
        n_skipped=metrics.skipped,
        aggregates=aggregates,
        distributions={
            "precision": distribution(metrics.precision),
            "recall": distribution(metrics.recall),
            "ndcg": distribution(metrics.ndcg),
        },
        conventions=dict(RANKING_CONVENTIONS),
        per_user=metrics.to_frame(),
        **extra,
    )


def write_report(report: EvalReport, output_dir: Path) -> Path:
    """Write the report body, its per-user CSV and its timing side file."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / f"{report.stem}.report"
    path.write_text(report.body(), encoding="utf-8")

    if isinstance(report.per_user, pd.DataFrame):
        report.per_user.to_csv(output_dir / f"{report.stem}.users.csv", index=False, float_format="%.12g")
    if report.timing:
        (output_dir / f"{report.stem}.timing.json").write_text(
            json.dumps(report.timing, indent=2) + "\n", encoding="utf-8"
        )
    logger.info(f"Report written: {path}")
    return path


def write_gamma_curve(curve: List[GammaPoint], path: Path):
    """``gamma,ndcg`` CSV for plotting the tuning sweep."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([point.model_dump() for point in curve], columns=["gamma", "ndcg"])
    frame.to_csv(path, index=False, float_format="%.12g")
    logger.info(f"Gamma curve written: {path}")
