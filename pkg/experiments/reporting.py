"""CSV outputs. Every table has a header row; missing values are written as empty cells."""

import csv
import logging
from collections.abc import Iterable
from pathlib import Path

from adapt.trainer import TrainingLog
from models.models import FlightSummaryRow, MetricsRow

logger = logging.getLogger(__name__)

METRICS_COLUMNS = [
    "task",
    "seed",
    "lambda",
    "estimator",
    "source_set",
    "target",
    "baseline_accuracy",
    "adapted_accuracy",
    "mean_distance",
    "median_distance",
]
FLIGHT_COLUMNS = ["label", "episodes", "mean_distance", "median_distance", "failure_rate"]


def write_rows(path: str | Path, columns: list[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(file, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    logger.info(f"Wrote {path}")
    return path


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as file:
        return list(csv.DictReader(file))


def write_training_log(path: str | Path, log: TrainingLog) -> Path:
    return write_rows(path, log.columns, log.rows)


def write_metrics(path: str | Path, rows: list[MetricsRow]) -> Path:
    return write_rows(path, METRICS_COLUMNS, (row.model_dump(by_alias=True) for row in rows))


def write_flight_summary(path: str | Path, rows: list[FlightSummaryRow]) -> Path:
    return write_rows(path, FLIGHT_COLUMNS, (row.model_dump() for row in rows))


def read_metrics(path: str | Path) -> list[MetricsRow]:
    return [
        MetricsRow.model_validate({key: value if value != "" else None for key, value in row.items()})
        for row in read_rows(path)
    ]
