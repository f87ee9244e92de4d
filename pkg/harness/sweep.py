"""
Parameter sweeps: the cartesian product of a grid of scalar configuration
values, each cell run over the same seeds. Cells are independent and run on a
process pool; the aggregate is ordered by cell and does not depend on which
worker finished first.
"""

# Standard Library Imports
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

# Third-Party Imports
import numpy as np

# Local Imports
from core.exceptions import ConfigurationError

from .config import ExperimentConfig
from .forms import parse_config
from .runner import iter_experiment
from .writers import atomic_write, write_jsonl

logger = logging.getLogger(__name__)

SUMMARY_FILE = 'sweep_summary.json'
SUMMARY_METRICS = (
    'final_distance', 'mean_distance_last_100', 'final_grad_norm',
    'final_consensus_error', 'mean_staleness', 'mean_active_count',
)


def grid_cells(grid: Dict[str, List[str]]) -> List[Dict[str, str]]:
    names = list(grid)
    return [dict(zip(names, values)) for values in itertools.product(*(grid[name] for name in names))]


@dataclass(frozen=True)
class SweepCell:
    index: int
    params: Dict[str, str]
    config: ExperimentConfig
    seeds: Sequence[int]
    output: Path

    @property
    def file_name(self) -> str:
        return self.output.name


def _aggregate(summaries: Sequence[dict]) -> Dict[str, Dict[str, Optional[float]]]:
    """Mean and population std (ddof=0) of every summary metric over the seeds."""
    table = {}
    for name in SUMMARY_METRICS:
        values = [summary[name] for summary in summaries if summary[name] is not None]
        if values:
            table[name] = {'mean': float(np.mean(values)), 'std': float(np.std(values))}
        else:
            table[name] = {'mean': None, 'std': None}
    return table


def run_cell(cell: SweepCell) -> dict:
    """Runs every seed of one cell, writes the cell's JSONL file and returns its row of the summary table."""
    records, summaries = [], []
    for seed in cell.seeds:
        for result in iter_experiment(cell.config, seed):
            record = result.as_record()
            records.append(record)
            if record['type'] == 'summary':
                summaries.append(record)
    write_jsonl(cell.output, records)
    return {
        'cell': cell.index,
        'params': cell.params,
        'config_digest': cell.config.digest,
        'output': cell.file_name,
        'seeds': list(cell.seeds),
        'metrics': _aggregate(summaries),
        'runs': summaries,
    }


def build_cells(template: ExperimentConfig, grid: Dict[str, List[str]], seeds: Sequence[int], out_dir) -> List[SweepCell]:
    """Validates every cell's configuration before anything runs."""
    out_dir = Path(out_dir)
    cells = []
    for index, params in enumerate(grid_cells(grid)):
        try:
            config = parse_config({**template.as_dict(), **params})
        except ConfigurationError as exc:
            raise ConfigurationError({
                f"cell {index} ({field})": messages for field, messages in exc.message_dict.items()
            })
        cells.append(SweepCell(index, params, config, list(seeds), out_dir / f"cell-{index:03d}.jsonl"))
    return cells


def run_sweep(template: ExperimentConfig, grid: Dict[str, List[str]], seeds: Sequence[int], out_dir,
              workers: int = 1) -> dict:
    """
    Runs every cell of the grid over the given seeds.

    Returns:
        The summary table, which is also written to `<out_dir>/sweep_summary.json`.
    """
    if not seeds:
        raise ConfigurationError({'seeds': ["A sweep needs at least one seed."]})
    cells = build_cells(template, grid, seeds, out_dir)
    logger.info("Sweeping %d cells over %d seeds with %d worker(s)", len(cells), len(seeds), workers)
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(run_cell, cells))
    else:
        rows = [run_cell(cell) for cell in cells]

    table = {
        'template_digest': template.digest,
        'grid': grid,
        'seeds': list(seeds),
        'cells': rows,
    }
    atomic_write(Path(out_dir) / SUMMARY_FILE, json.dumps(table, sort_keys=True, indent=2) + "\n")
    logger.info("Sweep finished: %d cells written to %s", len(rows), out_dir)
    return table
