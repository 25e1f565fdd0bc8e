"""
Result writers and terminal reports.

Sweep results are written as results.csv (one row per grid point),
results.json (config plus estimates) and plotdata_<x>.csv with x, y, y_err
columns for external plotting. Terminal tables go to a rich console on
stderr so JSON on stdout stays clean.
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

try:
    from .models import DesignWeights, ErrorEstimate, Partition, RunOutcome
except ImportError:
    from models import DesignWeights, ErrorEstimate, Partition, RunOutcome


logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "algorithm", "family", "d", "K", "delta", "M", "T",
    "trials", "errors", "p_hat", "stderr", "mean_messages", "mean_index_broadcasts", "bound",
]
GRID_AXES = ("d", "delta", "K", "M", "T")
FLOAT_FORMAT = "%.10g"


def pick_x_param(estimates: Sequence[ErrorEstimate]) -> str:
    """First grid axis that varies across the estimates; T when none does."""
    for axis in GRID_AXES:
        if len({e.params.get(axis) for e in estimates}) > 1:
            return axis
    return "T"


class SweepReportGenerator:
    """Writes sweep result files and renders rich summaries."""

    def __init__(self, console: Optional[Console] = None):
        """
        Args:
            console: Where tables are printed (default: a stderr console)
        """
        self.console = console if console is not None else Console(stderr=True)

    def results_frame(self, estimates: Sequence[ErrorEstimate]) -> pd.DataFrame:
        rows = [e.to_dict() for e in estimates]
        return pd.DataFrame(rows, columns=RESULT_COLUMNS)

    def write_results(self, estimates: Sequence[ErrorEstimate], out_dir: str,
                      x_param: Optional[str] = None,
                      config: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
        """
        Write results.csv, results.json and plotdata_<x>.csv.

        Args:
            estimates: One estimate per grid point, in grid order
            out_dir: Output directory (created if missing)
            x_param: Grid axis for the plot data (default: the first varying axis)
            config: Sweep config stored alongside the estimates

        Returns:
            Mapping from file kind ("csv", "json", "plot") to path
        """
        if not estimates:
            raise ValueError("no estimates to write")
        os.makedirs(out_dir, exist_ok=True)
        x_param = x_param or pick_x_param(estimates)

        csv_path = os.path.join(out_dir, "results.csv")
        self.results_frame(estimates).to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)

        json_path = os.path.join(out_dir, "results.json")
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump({"config": config, "estimates": [e.to_dict() for e in estimates]}, fh, indent=2)
            fh.write("\n")

        plot_path = os.path.join(out_dir, f"plotdata_{x_param}.csv")
        plot = pd.DataFrame({
            "x": [e.params.get(x_param) for e in estimates],
            "y": [e.p_hat for e in estimates],
            "y_err": [e.stderr for e in estimates],
        })
        plot.to_csv(plot_path, index=False, float_format=FLOAT_FORMAT)

        logger.info(f"wrote {len(estimates)} grid points to {out_dir}")
        return {"csv": csv_path, "json": json_path, "plot": plot_path}

    def render_sweep_table(self, estimates: Sequence[ErrorEstimate]) -> Table:
        """Print and return a table of error estimates."""
        table = Table(
            title="Monte-Carlo error estimates",
            box=box.ROUNDED,
            show_header=True,
            header_style="bold magenta",
        )
        for name in ("d", "K", "delta", "M", "T"):
            table.add_column(name, style="cyan", justify="right")
        table.add_column("p_hat", style="yellow", justify="right")
        table.add_column("stderr", justify="right")
        table.add_column("bound", style="green", justify="right")
        table.add_column("messages", style="blue", justify="right")

        for e in estimates:
            p = e.params
            table.add_row(
                *(("-" if p.get(k) is None else str(p.get(k))) for k in ("d", "K", "delta", "M", "T")),
                f"{e.p_hat:.3f}",
                f"{e.stderr:.3f}",
                "-" if e.bound is None else f"{e.bound:.3g}",
                f"{e.mean_messages:.1f}",
            )
        self.console.print(table)
        return table

    def render_run_summary(self, outcome: RunOutcome) -> Panel:
        """Print and return a panel with the chosen arm, the ledger and any votes."""
        status = "[green]correct[/green]" if outcome.correct else "[red]wrong[/red]"
        ledger = outcome.ledger
        lines: List[str] = [
            f"algorithm: [bold]{outcome.algorithm.value}[/bold]",
            f"chosen arm: [bold]{outcome.chosen_arm}[/bold] ({status})",
            f"rounds traced: {len(outcome.traces)}",
            f"messages: {ledger.data_messages} "
            f"(allocation {ledger.allocation_messages}, statistics {ledger.statistics_messages}, "
            f"votes {ledger.vote_messages})",
            f"index broadcasts: {ledger.index_broadcasts}",
        ]
        for v in outcome.votes:
            lines.append(f"  block {v.block} (hub {v.hub}) -> arm {v.arm}, uncertainty {v.uncertainty:.4g}")
        panel = Panel("\n".join(lines), title="Run summary", box=box.ROUNDED)
        self.console.print(panel)
        return panel

    def render_design(self, design: DesignWeights) -> Table:
        table = Table(title=f"G-optimal design (g = {design.g_value:.4f}, d = {design.dim})", box=box.SIMPLE)
        table.add_column("arm", style="cyan", justify="right")
        table.add_column("weight", style="yellow", justify="right")
        for arm, w in design.as_dict([j + 1 for j in range(len(design.weights))]).items():
            table.add_row(str(arm), f"{w:.6f}")
        self.console.print(table)
        return table

    def render_partition(self, partition: Partition) -> Table:
        table = Table(title="Dominating-set partition", box=box.SIMPLE)
        table.add_column("hub", style="cyan", justify="right")
        table.add_column("members")
        for hub, block in zip(partition.hubs, partition.blocks):
            table.add_row(str(hub), ", ".join(str(v) for v in block))
        self.console.print(table)
        return table
