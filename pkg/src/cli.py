"""
Command-line interface for collaborative linear best-arm identification.

Subcommands run single identification runs, Monte-Carlo sweeps, design
solves, dominating-set partitions and bound evaluations. Results are JSON on
stdout (or --out); logs and tables go to stderr.

Exit codes: 0 success, 2 usage or configuration errors, 3 algorithm errors.
"""

import dataclasses
import functools
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

# Load MALINBAI_* defaults from .env during normal CLI usage; tests stay hermetic.
if 'pytest' not in sys.modules:
    load_dotenv()

# Add the src directory to Python path for imports
sys.path.insert(0, str(Path(__file__).parent))

from algorithms import run_gen, run_ma_od_linbai, run_star
from bandit_core import RngStream, gap_profile, hardness
from data_processor import BanditDataProcessor
from design import DEFAULT_EPSILON, DEFAULT_MAX_ITER, g_optimal_design
from experiments import (
    bound_gap_factor, comm_gap_factor, communication_lower_bound, lemma1_bound,
    lemma2_bound, lower_bound_exponent, monte_carlo, theorem1_bound, theorem2_bound,
)
from linalg import project_all, rank_basis
from models import AlgorithmKind, ConfigError, InstanceFamily, MaLinBAIError
from report_generator import SweepReportGenerator
from topology import build_partition, greedy_dominating_set, is_connected, star_graph


# Logs and tables share stderr; stdout carries JSON only.
console = Console(stderr=True)


def setup_logging(verbose: bool) -> None:
    """
    Configure logging based on verbosity level.

    Args:
        verbose: If True, enable debug logging; otherwise use info level
    """
    log_level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True)]
    )
    logging.getLogger("asyncio").setLevel(logging.WARNING)


def handle_errors(fn):
    """Map library errors onto exit codes 2 (configuration) and 3 (algorithm)."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as e:
            console.print(f"[red]{e.error_type.name}[/red]: {escape(e.message)}")
            sys.exit(2)
        except MaLinBAIError as e:
            console.print(f"[red]{e.error_type.name}[/red]: {escape(e.message)}")
            sys.exit(3)
    return wrapper


def validate_positive(ctx, param, value: Optional[int]) -> Optional[int]:
    """
    Validate that an optional integer option is at least 1.

    Raises:
        click.BadParameter: If the value is below 1
    """
    if value is not None and value < 1:
        raise click.BadParameter(f"must be at least 1, got {value}")
    return value


def validate_threads(ctx, param, value: int) -> int:
    if value < 1:
        raise click.BadParameter("Threads must be at least 1")
    if value > 64:
        raise click.BadParameter("Threads should not exceed 64")
    return value


def validate_epsilon(ctx, param, value: float) -> float:
    if value <= 0:
        raise click.BadParameter(f"epsilon must be positive, got {value}")
    return value


def emit(doc, out: Optional[str]) -> None:
    """Write a JSON document to ``out`` or stdout."""
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        console.print(f"[green]✓[/green] wrote {escape(out)}")
    else:
        click.echo(text)


seed_option = click.option(
    '--seed',
    type=int,
    default=None,
    help='Master seed (default: MALINBAI_SEED, else 0 for run)',
    envvar='MALINBAI_SEED'
)


@click.group()
@click.option(
    '--verbose',
    is_flag=True,
    help='Enable per-round debug logging',
    envvar='MALINBAI_VERBOSE'
)
@click.version_option(version='1.0.0', prog_name='malinbai')
def main(verbose: bool) -> None:
    """
    Collaborative fixed-budget best-arm identification for linear bandits.

    Example usage:

        malinbai run --algo star --instance std:d=10,delta=0.3 --M 15 --T 150 --seed 7

        malinbai sweep --config delta_sweep.json --out-dir results --threads 4

        malinbai bound --thm 1 --T 2000 --M 15 --d 10 --K 10 --delta 0.5
    """
    setup_logging(verbose)


@main.command()
@click.option('--algo', type=click.Choice([k.value for k in AlgorithmKind]), required=True,
              help='Identification procedure')
@click.option('--instance', 'instance_spec', required=True,
              help='Instance JSON file or generator spec (std:d=..,delta=.. / sphere:d=..,K=..)')
@click.option('--M', 'M', type=int, default=None, callback=validate_positive,
              help='Number of agents (Gen: defaults to the graph size)')
@click.option('--T', 'T', type=int, required=True, callback=validate_positive,
              help='Per-agent pull budget')
@seed_option
@click.option('--graph', 'graph_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Gen only: agent graph edge list (default: a star on M agents)')
@click.option('--partition', 'partition_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Gen only: partition JSON (default: greedy dominating set)')
@click.option('--epsilon', default=DEFAULT_EPSILON, show_default=True, callback=validate_epsilon,
              help='Design accuracy: g <= (1 + epsilon) d')
@click.option('--out', default=None, help='Write the outcome JSON here instead of stdout')
@handle_errors
def run(algo: str, instance_spec: str, M: Optional[int], T: int, seed: Optional[int],
        graph_path: Optional[str], partition_path: Optional[str], epsilon: float,
        out: Optional[str]) -> None:
    """Run one identification and print the outcome JSON."""
    logger = logging.getLogger(__name__)
    processor = BanditDataProcessor()
    inst = processor.parse_instance_spec(instance_spec)
    rng = RngStream(seed if seed is not None else 0)
    kind = AlgorithmKind(algo)
    logger.info(f"{kind.value}: K={inst.num_arms}, d={inst.dim}, T={T}, seed={rng.master_seed}")

    if kind is AlgorithmKind.GEN:
        if graph_path:
            graph = processor.load_graph(graph_path)
            if M is not None and M != graph.n:
                raise click.BadParameter(f"--M {M} does not match the graph's {graph.n} agents",
                                         param_hint="'--M'")
        elif M is not None:
            graph = star_graph(M)
        else:
            raise click.UsageError("gen needs --graph or --M")
        if partition_path:
            partition = processor.load_partition(partition_path)
        else:
            partition = build_partition(graph, greedy_dominating_set(graph))
        outcome = run_gen(inst, graph, partition, T, rng, epsilon=epsilon)
    else:
        if M is None:
            raise click.UsageError(f"{kind.value} needs --M")
        runner = run_star if kind is AlgorithmKind.STAR else run_ma_od_linbai
        outcome = runner(inst, M, T, rng, epsilon=epsilon)

    SweepReportGenerator(console).render_run_summary(outcome)
    emit(outcome.to_dict(), out)


@main.command()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Sweep config JSON')
@click.option('--out-dir', required=True, type=click.Path(file_okay=False),
              help='Directory for results.csv, results.json and plot data')
@click.option('--threads', default=1, show_default=True, callback=validate_threads,
              help='Trials run concurrently', envvar='MALINBAI_THREADS')
@seed_option
@click.option('--x', 'x_param', type=click.Choice(['d', 'delta', 'K', 'M', 'T']), default=None,
              help='Grid axis for the plot data (default: the first varying axis)')
@handle_errors
def sweep(config_path: str, out_dir: str, threads: int, seed: Optional[int],
          x_param: Optional[str]) -> None:
    """Estimate error probabilities over a parameter grid."""
    logger = logging.getLogger(__name__)
    processor = BanditDataProcessor()
    cfg = processor.load_sweep_config(config_path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=seed)

    instance = processor.load_instance(cfg.instance_path) if cfg.family is InstanceFamily.FILE else None
    graph = partition = None
    if cfg.graph is not None and cfg.graph.path:
        graph = processor.load_graph(cfg.graph.path)
        if cfg.graph.partition_path:
            partition = processor.load_partition(cfg.graph.partition_path)

    logger.info(f"sweep {cfg.algorithm.value}/{cfg.family.value}: {cfg.trials} trials per point, "
                f"{threads} thread(s)")
    estimates = monte_carlo(cfg, threads, instance=instance, graph=graph, partition=partition)

    reporter = SweepReportGenerator(console)
    reporter.render_sweep_table(estimates)
    paths = reporter.write_results(estimates, out_dir, x_param=x_param, config=cfg.to_dict())
    click.echo(json.dumps(paths, indent=2))


@main.command()
@click.option('--arms', 'arms_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Headerless CSV, one arm per row')
@click.option('--epsilon', default=DEFAULT_EPSILON, show_default=True, callback=validate_epsilon)
@click.option('--max-iter', default=DEFAULT_MAX_ITER, show_default=True, callback=validate_positive)
@click.option('--out', default=None, help='Write the design JSON here instead of stdout')
@handle_errors
def design(arms_path: str, epsilon: float, max_iter: int, out: Optional[str]) -> None:
    """Solve the G-optimal design over an arm set (projected onto its span)."""
    arms = BanditDataProcessor().load_arms_csv(arms_path)
    proj = project_all(rank_basis(arms), arms)
    weights = g_optimal_design(proj, epsilon=epsilon, max_iter=max_iter)
    SweepReportGenerator(console).render_design(weights)
    emit(weights.to_dict([j + 1 for j in range(arms.shape[0])]), out)


@main.command()
@click.option('--graph', 'graph_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Agent graph edge list')
@click.option('--out', default=None, help='Write the partition JSON here')
@handle_errors
def domset(graph_path: str, out: Optional[str]) -> None:
    """Greedy dominating set and the partition it induces."""
    processor = BanditDataProcessor()
    graph = processor.load_graph(graph_path)
    partition = build_partition(graph, greedy_dominating_set(graph))
    SweepReportGenerator(console).render_partition(partition)
    if out:
        processor.save_partition(partition, out)
    click.echo(json.dumps({**partition.to_dict(), "connected": is_connected(graph)}, indent=2))


@main.command()
@click.option('--thm', type=click.Choice(['1', '2', 'lower']), required=True,
              help='Theorem 1 (star), 2 (general graph) or the lower-bound exponent')
@click.option('--T', 'T', type=int, required=True, callback=validate_positive)
@click.option('--M', 'M', type=int, default=None, callback=validate_positive)
@click.option('--d', 'd', type=int, default=None, callback=validate_positive)
@click.option('--K', 'K', type=int, default=None, callback=validate_positive)
@click.option('--delta', type=float, default=None)
@click.option('--instance', 'instance_spec', default=None, help='Instance for --thm lower')
@handle_errors
def bound(thm: str, T: int, M: Optional[int], d: Optional[int], K: Optional[int],
          delta: Optional[float], instance_spec: Optional[str]) -> None:
    """Evaluate an error-probability bound."""
    if thm == 'lower':
        if not instance_spec:
            raise click.UsageError("--thm lower needs --instance")
        inst = BanditDataProcessor().parse_instance_spec(instance_spec)
        doc = {
            "theorem": "lower",
            "T": T,
            "hardness": hardness(inst),
            "delta_min": gap_profile(inst).delta_min,
            "exponent": lower_bound_exponent(inst, T),
        }
        click.echo(json.dumps(doc, indent=2))
        return

    missing = [name for name, v in (("--d", d), ("--K", K), ("--delta", delta)) if v is None]
    if thm == '1' and M is None:
        missing.append("--M")
    if missing:
        raise click.UsageError(f"--thm {thm} needs {', '.join(missing)}")
    if K < 2 or delta <= 0:
        raise click.BadParameter("need K >= 2 and delta > 0")

    agents = M if thm == '1' else 1
    value = theorem1_bound(T, M, d, K, delta) if thm == '1' else theorem2_bound(T, d, K, delta)
    doc = {
        "theorem": thm,
        "bound": value,
        "lemma1": lemma1_bound(T, agents, d, K, delta),
        "lemma2": lemma2_bound(T, agents, d, K, delta),
        "bound_gap_factor": bound_gap_factor(d, K) if d >= 2 else None,
    }
    if thm == '1' and T > 1:
        doc["communication_lower_bound"] = communication_lower_bound(M, T)
        doc["comm_gap_factor"] = comm_gap_factor(M, K, T)
    click.echo(json.dumps(doc, indent=2))


if __name__ == '__main__':
    main()
