"""
Report tables: models as columns, (dataset, country) as rows
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from pydantic import ValidationError

from app.schemas.config import ARCHITECTURE_LABELS, ARCHITECTURE_ORDER
from app.schemas.events import CONTENT_TYPE_LABELS, CONTENT_TYPE_ORDER
from app.schemas.report import EvalReport
from app.services.run_service import EVAL_FILE

logger = logging.getLogger(__name__)

MODEL_COLUMNS = [ARCHITECTURE_LABELS[a] for a in ARCHITECTURE_ORDER]
TOP_CONTENTS = 10


def collect_reports(root) -> List[EvalReport]:
    """Every evaluation report below a directory, in path order"""
    reports = []
    for path in sorted(Path(root).rglob(EVAL_FILE)):
        try:
            reports.append(EvalReport.model_validate_json(path.read_text(encoding="utf-8")))
        except ValidationError as e:
            logger.warning("Skipping unreadable report %s: %s", path, e)
    return reports


def metric_table(reports: List[EvalReport], metric: str) -> pd.DataFrame:
    """
    Dataset x country rows, one column per model in the fixed model order.

    Missing cells stay empty; a later report for the same cell wins.
    """
    cells: Dict[tuple, Dict[str, Optional[float]]] = {}
    for report in reports:
        key = (CONTENT_TYPE_ORDER.index(report.content_type), report.country)
        cells.setdefault(key, {})[report.model_name] = getattr(report, metric)

    rows = []
    for (order, country) in sorted(cells):
        row = {"Dataset": CONTENT_TYPE_LABELS[CONTENT_TYPE_ORDER[order]], "Country": country}
        for column in MODEL_COLUMNS:
            row[column] = cells[(order, country)].get(column)
        rows.append(row)
    table = pd.DataFrame(rows, columns=["Dataset", "Country", *MODEL_COLUMNS])
    # None cells become NaN so text output renders them as "-"
    table[MODEL_COLUMNS] = table[MODEL_COLUMNS].astype(float)
    return table


def per_content_table(reports: List[EvalReport]) -> pd.DataFrame:
    """Plot-ready long table: content_id, model, rmse, count"""
    rows = [
        {"content_id": cid, "model": report.model_name, "rmse": entry.rmse, "count": entry.count}
        for report in reports
        for cid, entry in sorted(report.per_content.items())
    ]
    return pd.DataFrame(rows, columns=["content_id", "model", "rmse", "count"])


def daily_clicks(events: pd.DataFrame, top_n: int = TOP_CONTENTS) -> pd.DataFrame:
    """Clicks per day for the most-clicked contents of every type"""
    columns = ["date", "content_type", "content_id", "clicks"]
    if events.empty:
        return pd.DataFrame(columns=columns)
    frame = events.assign(date=events["timestamp"].dt.strftime("%Y-%m-%d"))
    parts = []
    for content_type in CONTENT_TYPE_ORDER:
        of_type = frame[frame["content_type"] == content_type.value]
        if of_type.empty:
            continue
        totals = of_type.groupby("content_id").size()
        # ties broken by id so the selection is stable
        top = totals.reset_index(name="n").sort_values(["n", "content_id"], ascending=[False, True])
        keep = top["content_id"].head(top_n)
        counts = (
            of_type[of_type["content_id"].isin(keep)]
            .groupby(["date", "content_id"]).size().reset_index(name="clicks")
        )
        counts.insert(1, "content_type", content_type.value)
        parts.append(counts)
    if not parts:
        return pd.DataFrame(columns=columns)
    return pd.concat(parts, ignore_index=True)[columns].sort_values(
        ["content_type", "content_id", "date"], kind="mergesort"
    ).reset_index(drop=True)


def aligned_text(table: pd.DataFrame, title: str, digits: int = 4) -> str:
    body = table.to_string(index=False, na_rep="-", float_format=lambda v: f"{v:.{digits}f}")
    return f"{title}\n{body}\n"


def write_tables(reports: List[EvalReport], out_dir) -> Dict[str, Path]:
    """AUC and RMSE tables as CSV and aligned text, plus the per-content RMSE CSV"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}
    for metric, title in (("auc", "AUC per model"), ("rmse", "RMSE per model")):
        table = metric_table(reports, metric)
        csv_path = out_dir / f"{metric}.csv"
        txt_path = out_dir / f"{metric}.txt"
        table.to_csv(csv_path, index=False, lineterminator="\n")
        txt_path.write_text(aligned_text(table, title), encoding="utf-8")
        written[f"{metric}_csv"] = csv_path
        written[f"{metric}_txt"] = txt_path

    per_content = out_dir / "per_content_rmse.csv"
    per_content_table(reports).to_csv(per_content, index=False, lineterminator="\n")
    written["per_content"] = per_content
    return written

