"""
Writes experiment output: JSON Lines metric files, the CSV projection of the
round records, and link traces. Every file is written to a temporary sibling
first and moved into place with os.replace, so readers never see a partial
file.
"""

# Standard Library Imports
import csv
import io
import json
import logging
import os
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Sequence

# Django Imports
from django.conf import settings

# Local Imports
from core.types import ActiveSet

from .config import ExperimentConfig
from .runner import RoundMetrics

logger = logging.getLogger(__name__)

ROUND_FIELDS = [f.name for f in fields(RoundMetrics)]


def dump_record(record) -> str:
    return json.dumps(record, sort_keys=True)


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(f".{path.name}.tmp")
    with open(tmp_path, 'w', newline='') as handle:
        handle.write(text)
    os.replace(tmp_path, path)
    logger.debug("Wrote %s", path)
    return path


def write_jsonl(path, records: Iterable[dict]) -> Path:
    return atomic_write(path, "".join(dump_record(record) + "\n" for record in records))


def write_csv(path, rounds: Sequence[RoundMetrics]) -> Path:
    """The round records as CSV, with the JSONL field names as header; a missing staleness is left empty."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=ROUND_FIELDS, lineterminator="\n")
    writer.writeheader()
    for metrics in rounds:
        row = metrics.as_record()
        row.pop('type')
        writer.writerow({name: ('' if value is None else value) for name, value in row.items()})
    return atomic_write(path, buffer.getvalue())


def active_set_record(active: ActiveSet) -> dict:
    return {'type': 'active_set', 't': active.round, 'members': list(active.members)}


def write_trace(path, trace: Iterable[ActiveSet]) -> Path:
    return write_jsonl(path, (active_set_record(active) for active in trace))


def trace_path(out_path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(f"{out_path.stem}.trace.jsonl")


def default_output_path(cfg: ExperimentConfig, seed: int) -> Path:
    """`cfg.output` if set, otherwise `<SIMULATION_OUTPUT_DIR>/<digest>-seed<seed>.jsonl`."""
    if cfg.output:
        return Path(cfg.output)
    return Path(settings.SIMULATION_OUTPUT_DIR) / f"{cfg.digest}-seed{seed}.jsonl"
