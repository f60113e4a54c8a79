"""CSV and JSON report emission"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple, Union

from app.models.experiment import OutputFormat
from app.models.report import AGGREGATE_LABELS, REPORT_FIELDS, AggregateRow, ReportRow
from app.services.analysis_service import summarize
from app.utils.exceptions import ReportIOError

logger = logging.getLogger(__name__)

Record = Union[ReportRow, AggregateRow]

AGGREGATED_FIELDS = REPORT_FIELDS[REPORT_FIELDS.index("iterations"):]


def _blocks(rows: Sequence[ReportRow]) -> Dict[Tuple[int, int, int, str], List[ReportRow]]:
    blocks: Dict[Tuple[int, int, int, str], List[ReportRow]] = {}
    for row in rows:
        blocks.setdefault((row.n, row.d, row.g, row.protocol), []).append(row)
    return blocks


def aggregate_rows(rows: Sequence[ReportRow]) -> List[AggregateRow]:
    """
    Mean, sigma and max rows of one block of runs on the same network and protocol

    Raises:
        DomainError: If rows is empty
    """
    summaries = {name: summarize(getattr(row, name) for row in rows) for name in AGGREGATED_FIELDS}
    first = rows[0]
    return [
        AggregateRow(
            n=first.n,
            d=first.d,
            g=first.g,
            protocol=first.protocol,
            seed_index=label,
            **{name: getattr(summary, label) for name, summary in summaries.items()},
        )
        for label in AGGREGATE_LABELS
    ]


def report_records(rows: Sequence[ReportRow], aggregate: bool = True) -> List[Record]:
    """Run rows grouped by (n, d, g, protocol), each group followed by its aggregate rows"""
    if not aggregate:
        return list(rows)
    records: List[Record] = []
    for block in _blocks(rows).values():
        records.extend(block)
        records.extend(aggregate_rows(block))
    return records


def render_report(rows: Sequence[ReportRow], fmt: OutputFormat, aggregate: bool = True) -> str:
    """
    Render rows as CSV (fixed header) or as a JSON array with the same field names

    Every block of runs on one network is closed by three aggregate rows whose
    seed_index is mean, sigma or max.

    Returns:
        UTF-8 text ending with a newline
    """
    records = report_records(rows, aggregate)
    if fmt is OutputFormat.JSON:
        return json.dumps([record.model_dump() for record in records], indent=2) + "\n"

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow(record.model_dump())
    return buffer.getvalue()


def emit_report(
    rows: Sequence[ReportRow],
    fmt: OutputFormat,
    path: Optional[Path] = None,
    stream: Optional[TextIO] = None,
    aggregate: bool = True,
) -> None:
    """
    Write a report to path, or to stream when no path is given

    Raises:
        ReportIOError: If the path cannot be written
    """
    text = render_report(rows, fmt, aggregate)
    if path is None:
        if stream is not None:
            stream.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"Cannot write report to {path}: {e}")
    logger.info(f"Wrote {len(rows)} rows to {path} ({fmt.value})")


def _parse_record(record: dict) -> Record:
    if str(record["seed_index"]) in AGGREGATE_LABELS:
        return AggregateRow(**record)
    return ReportRow(**record)


def parse_report(text: str, fmt: OutputFormat) -> List[Record]:
    """Read back a report rendered by render_report, aggregate rows included"""
    if fmt is OutputFormat.JSON:
        return [_parse_record(record) for record in json.loads(text)]
    return [_parse_record(record) for record in csv.DictReader(io.StringIO(text))]
