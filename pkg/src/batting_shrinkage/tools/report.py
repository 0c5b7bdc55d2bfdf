from __future__ import annotations
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from .validate import RESIDUAL_NOTE, BreakEven, CriterionReport

"""
CSV writers and aligned text renderings of the validation and break-even tables.
"""

logger = logging.getLogger(__name__)

CRITERION_HEADERS = {
    "sspe": "SSPE",
    "tse-hat": "TSE^",
    "tse-star": "TSE*",
    "tse-r-star": "TSE_R*",
    "twse-star": "TWSE*",
}


def write_csv(frame: pd.DataFrame, path: Union[str, Path], header_comment: Optional[Dict[str, object]] = None) -> Path:
    """Write ``frame`` without its index; ``header_comment`` becomes a leading ``# k=v ...`` line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in header_comment.items()) + "\n")
        frame.to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def write_text(text: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.3f}"


def render_table(reports: List[CriterionReport], criteria: List[str], labels: Optional[Dict[str, str]] = None) -> str:
    """
    One block per cohort: rows are estimators, columns criteria. A weighted-mean report,
    when present, is folded into the mean row as a parenthesised TWSE* value.
    """
    labels = labels or {}
    blocks = []
    for cohort in dict.fromkeys(r.cohort for r in reports):
        rows = [r for r in reports if r.cohort == cohort]
        weighted = next((r for r in rows if r.estimator == "weighted_mean"), None)
        rows = [r for r in rows if r.estimator != "weighted_mean"]
        if not rows:
            continue
        head = rows[0]
        names = [labels.get(r.estimator, r.estimator) for r in rows]
        width = max(len(n) for n in names + ["Estimator"]) + 2
        header = "Estimator".ljust(width) + "".join(CRITERION_HEADERS[c].rjust(16) for c in criteria)
        lines = [
            f"{cohort} ({head.split}; {head.n_estimation} for estimation, {head.n_validation} for validation)",
            header,
            "-" * len(header),
        ]
        for name, report in zip(names, rows):
            cells = []
            for criterion in criteria:
                text = _fmt(report.value(criterion))
                if criterion == "twse-star" and report.estimator == "mean" and weighted is not None:
                    text = f"{text} ({_fmt(weighted.twse_star)})"
                cells.append(text.rjust(16))
            lines.append(name.ljust(width) + "".join(cells))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def render_cohort_means(frame: pd.DataFrame) -> str:
    """Mean batting average per cohort and period."""
    lines = ["Cohort".ljust(14) + "Period 1".rjust(10) + "Period 2".rjust(10)]
    for cohort, row in frame.iterrows():
        lines.append(str(cohort).ljust(14) + f"{row['period_1']:10.3f}" + f"{row['period_2']:10.3f}")
    return "\n".join(lines) + "\n"


def break_even_frame(rows: List[BreakEven]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "cohort": r.cohort,
                "split": r.split,
                "n_val": r.n_validation,
                "sum_inv_4n1": r.sum_inv_4n1,
                "sum_inv_4n2": r.sum_inv_4n2,
                "expected_sspe_naive": r.expected_sspe_naive,
                "sse_to_mean": r.sse_to_mean,
                "c_factor": r.c_factor,
            }
            for r in rows
        ]
    )


def render_break_even(rows: List[BreakEven]) -> str:
    header = (
        "Cohort".ljust(14)
        + "sum 1/4N1".rjust(12)
        + "sum 1/4N2".rjust(12)
        + "E SSPE naive".rjust(14)
        + "SSE to mean".rjust(13)
        + "c".rjust(22)
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            r.cohort.ljust(14)
            + f"{r.sum_inv_4n1:12.3f}"
            + f"{r.sum_inv_4n2:12.3f}"
            + f"{r.expected_sspe_naive:14.3f}"
            + f"{r.sse_to_mean:13.3f}"
            + r.c_label().rjust(22)
        )
    lines.append("")
    lines.append(f"Note: {RESIDUAL_NOTE}.")
    return "\n".join(lines) + "\n"
