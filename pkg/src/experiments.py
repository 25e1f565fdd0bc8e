"""
Experiment harness: synthetic instances, theoretical bounds and Monte-Carlo sweeps.

Trials are run concurrently by TrialRunner, which bounds the number of trials
in flight with an asyncio semaphore and executes each one in a worker thread.
Every trial draws only from its own substream ``(trial, ...)``, so results do
not depend on how many workers run or in which order trials finish.
"""

import asyncio
import itertools
import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence

import networkx as nx
import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist
from tenacity import (
    RetryError, before_sleep_log, retry, retry_if_exception_type, stop_after_attempt,
)

try:
    from .algorithms import ledger_closed_form, num_rounds, run_gen, run_ma_od_linbai, run_star
    from .bandit_core import RngStream, TIE_TOL, gap_profile, hardness, make_instance
    from .cache_manager import DesignCache
    from .models import (
        AgentGraph, AlgorithmKind, ConfigError, ErrorEstimate, GenerationFailedError,
        InstanceFamily, LinearBanditInstance, Partition, RunOutcome,
        SweepConfig, TiedBestArmError, TrialFailedError,
    )
    from .topology import build_partition, greedy_dominating_set, make_graph
except ImportError:
    from algorithms import ledger_closed_form, num_rounds, run_gen, run_ma_od_linbai, run_star
    from bandit_core import RngStream, TIE_TOL, gap_profile, hardness, make_instance
    from cache_manager import DesignCache
    from models import (
        AgentGraph, AlgorithmKind, ConfigError, ErrorEstimate, GenerationFailedError,
        InstanceFamily, LinearBanditInstance, Partition, RunOutcome,
        SweepConfig, TiedBestArmError, TrialFailedError,
    )
    from topology import build_partition, greedy_dominating_set, make_graph


logger = logging.getLogger(__name__)

# Substream key for per-trial instance generation; algorithm paths use small block indices.
INSTANCE_STREAM = 2 ** 31 - 2
MAX_SPHERE_ATTEMPTS = 100
MAX_GRAPH_ATTEMPTS = 1000
GRAPH_KINDS = ("star", "path", "cycle", "complete", "random")


# ---------------------------------------------------------------------------
# Instance generators
# ---------------------------------------------------------------------------

def gen_standard_instance(d: int, delta: float, noise_std: float = 1.0) -> LinearBanditInstance:
    """Canonical basis arms with theta = delta * e_1; arm 1 is best and every gap is delta."""
    if d < 2:
        raise ValueError(f"the standard instance needs d >= 2, got {d}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    theta = np.zeros(d)
    theta[0] = delta
    return make_instance(np.eye(d), theta, noise_std)


class _Resample(Exception):
    pass


def _sphere_attempt(d: int, K: int, rng: RngStream, noise_std: float) -> LinearBanditInstance:
    X = rng.generator().standard_normal((K, d))
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms < 1e-12):
        raise _Resample("zero-length draw")
    X = X / norms[:, None]

    rows, cols = np.triu_indices(K, k=1)
    closest = int(np.argmin(pdist(X)))
    u, v = int(rows[closest]), int(cols[closest])
    theta = X[u] + 0.01 * (X[u] - X[v])

    rewards = X @ theta
    others = np.delete(rewards, u)
    if rewards[u] - others.max() <= TIE_TOL:
        raise _Resample(f"arm {u + 1} is not the strict best arm")
    try:
        return make_instance(X, theta, noise_std)
    except TiedBestArmError as e:
        raise _Resample(str(e))


def gen_random_sphere_instance(d: int, K: int, rng: RngStream,
                               noise_std: float = 1.0) -> LinearBanditInstance:
    """
    K unit vectors in R^d with theta pushed off the closest pair.

    theta = u + 0.01 (u - v) for the closest pair (u, v); the draw is
    repeated until u is verified to be the strict best arm.

    Args:
        d: Ambient dimension
        K: Number of arms
        rng: Stream the draws come from; attempt i uses ``rng.child(i)``
        noise_std: Reward noise scale

    Raises:
        GenerationFailedError: If no valid instance appears within 100 draws.
    """
    if d < 2 or K < 2:
        raise ValueError(f"need d >= 2 and K >= 2, got d={d}, K={K}")
    attempts = itertools.count()

    @retry(
        stop=stop_after_attempt(MAX_SPHERE_ATTEMPTS),
        retry=retry_if_exception_type(_Resample),
        before_sleep=before_sleep_log(logger, logging.DEBUG),
    )
    def draw() -> LinearBanditInstance:
        return _sphere_attempt(d, K, rng.child(next(attempts)), noise_std)

    try:
        return draw()
    except RetryError as e:
        raise GenerationFailedError(
            f"no valid sphere instance (d={d}, K={K}) after {MAX_SPHERE_ATTEMPTS} draws: "
            f"{e.last_attempt.exception()}"
        )


def gen_graph(kind: str, n: int, p: float = 0.2, seed: int = 0) -> AgentGraph:
    """
    Named agent topologies on vertices 1..n.

    ``random`` draws G(n, p) graphs until one is connected.

    Raises:
        ValueError: On an unknown kind.
        GenerationFailedError: If no connected random graph was drawn.
    """
    if kind not in GRAPH_KINDS:
        raise ValueError(f"unknown graph kind '{kind}', expected one of {', '.join(GRAPH_KINDS)}")
    if kind == "star":
        G = nx.star_graph(n - 1)
    elif kind == "path":
        G = nx.path_graph(n)
    elif kind == "cycle":
        G = nx.cycle_graph(n) if n >= 3 else nx.path_graph(n)
    elif kind == "complete":
        G = nx.complete_graph(n)
    else:
        for attempt in range(MAX_GRAPH_ATTEMPTS):
            G = nx.gnp_random_graph(n, p, seed=seed + attempt)
            if nx.is_connected(G):
                break
        else:
            raise GenerationFailedError(
                f"no connected G({n}, {p}) graph in {MAX_GRAPH_ATTEMPTS} draws"
            )
    return make_graph(n, ((u + 1, v + 1) for u, v in G.edges))


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

def _check_positive(**values: float) -> None:
    for name, value in values.items():
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")


def theorem1_bound(T: float, M: float, d: float, K: int, delta_min: float) -> float:
    """4 log2(K) exp(-T M delta^2 / (32 d log2 K)); values above 1 are returned as-is."""
    _check_positive(T=T, M=M, d=d, delta_min=delta_min)
    if K < 2:
        raise ValueError(f"K must be at least 2, got {K}")
    L = math.log2(K)
    return 4.0 * L * math.exp(-T * M * delta_min ** 2 / (32.0 * d * L))


def theorem2_bound(T: float, d: float, K: int, delta_min: float) -> float:
    """8 log2(K) exp(-T delta^2 / (32 d log2 K)); no dependence on M or the partition."""
    _check_positive(T=T, d=d, delta_min=delta_min)
    if K < 2:
        raise ValueError(f"K must be at least 2, got {K}")
    L = math.log2(K)
    return 8.0 * L * math.exp(-T * delta_min ** 2 / (32.0 * d * L))


def lemma1_bound(T: float, M: float, d: float, K: int, gap: float) -> float:
    """Per-round probability that one arm with the given gap overtakes the best arm."""
    _check_positive(T=T, M=M, d=d, gap=gap)
    return math.exp(-T * M * gap ** 2 / (16.0 * d * num_rounds(K)))


def lemma2_bound(T: float, M: float, d: float, K: int, gap: float) -> float:
    """Per-round probability that the best arm is eliminated."""
    return 2.0 * lemma1_bound(T, M, d, K, gap)


def lower_bound_exponent(inst: LinearBanditInstance, T: float) -> float:
    """
    T / (H log2 d), the magnitude of the minimax lower-bound exponent.

    The constant of the order expression is taken as 1; log2 d is floored at 1.
    """
    return float(T) / (hardness(inst) * max(math.log2(inst.dim), 1.0))


def communication_lower_bound(M: int, T: float) -> float:
    """M / ln T, the order of messages any near-optimal protocol must send."""
    if T <= 1:
        raise ValueError(f"T must exceed 1, got {T}")
    return M / math.log(T)


def comm_gap_factor(M: int, K: int, T: float) -> float:
    """Star communication cost divided by the communication lower bound."""
    return ledger_closed_form(AlgorithmKind.STAR, M, K).data_messages / communication_lower_bound(M, T)


def bound_gap_factor(d: int, K: int) -> float:
    """log2 d / log2 K, the gap between the single-agent upper and lower bound exponents."""
    if d < 2 or K < 2:
        raise ValueError(f"need d >= 2 and K >= 2, got d={d}, K={K}")
    return math.log2(d) / math.log2(K)


# ---------------------------------------------------------------------------
# Property evaluators
# ---------------------------------------------------------------------------

def spearman_trend(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation; NaN when either sequence is constant."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("need two sequences of equal length >= 2")
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        return float("nan")
    return float(stats.spearmanr(xs, ys)[0])


def log_error_slope(xs: Sequence[float], p_hats: Sequence[float]) -> float:
    """Slope of the least-squares line through (x, log p_hat), skipping zero error rates."""
    points = [(x, p) for x, p in zip(xs, p_hats) if p > 0]
    if len(points) < 2:
        raise ValueError("need at least two grid points with measurable error")
    x, p = np.array(points, dtype=float).T
    return float(np.polyfit(x, np.log(p), 1)[0])


def bound_consistent(estimate: ErrorEstimate, bound: Optional[float] = None) -> bool:
    """p_hat <= bound + 3 stderr, using the estimate's own bound when none is given."""
    bound = estimate.bound if bound is None else bound
    if bound is None:
        raise ValueError("no bound to compare against")
    return estimate.p_hat <= bound + 3.0 * estimate.stderr


# ---------------------------------------------------------------------------
# Monte-Carlo
# ---------------------------------------------------------------------------

class TrialRunner:
    """
    Runs numbered trials with at most ``threads`` in flight.

    Results come back ordered by trial index. A failing trial aborts the
    batch with TrialFailedError.
    """

    def __init__(self, threads: int = 1):
        if threads < 1:
            raise ValueError(f"threads must be at least 1, got {threads}")
        self.threads = threads
        self.peak_concurrency = 0
        self._in_flight = 0

    async def run(self, trial_fn: Callable[[int], Any], trials: int, grid_index: int = 0) -> List[Any]:
        """
        Execute ``trial_fn(t)`` for t in 0..trials-1.

        Args:
            trial_fn: Blocking callable, executed in a worker thread
            trials: Number of trials
            grid_index: Grid point reported in failures

        Returns:
            Trial results in trial order

        Raises:
            TrialFailedError: For the lowest-numbered failing trial.
        """
        semaphore = asyncio.Semaphore(self.threads)

        async def one(t: int):
            async with semaphore:
                self._in_flight += 1
                self.peak_concurrency = max(self.peak_concurrency, self._in_flight)
                try:
                    return await asyncio.to_thread(trial_fn, t)
                finally:
                    self._in_flight -= 1

        results = await asyncio.gather(*(one(t) for t in range(trials)), return_exceptions=True)
        for t, result in enumerate(results):
            if isinstance(result, Exception):
                logger.error(f"trial {t} of grid point {grid_index} failed: {result}")
                raise TrialFailedError(t, grid_index, result) from result
        return list(results)


def grid_points(cfg: SweepConfig) -> List[Dict[str, Any]]:
    """
    Expand the config into grid points, in (d, delta, K, M, T) order.

    Parameters a family does not use are fixed: standard instances have
    K = d, sphere instances have no delta, file instances take d and K from
    the file.
    """
    if cfg.family is InstanceFamily.STANDARD:
        axes = itertools.product(cfg.d, cfg.delta, [None], cfg.M, cfg.T)
    elif cfg.family is InstanceFamily.SPHERE:
        axes = itertools.product(cfg.d, [None], cfg.K, cfg.M, cfg.T)
    else:
        axes = itertools.product([None], [None], [None], cfg.M, cfg.T)
    points = []
    for d, delta, K, M, T in axes:
        if cfg.family is InstanceFamily.STANDARD:
            K = d
        points.append({
            "algorithm": cfg.algorithm.value,
            "family": cfg.family.value,
            "d": d,
            "K": K,
            "delta": delta,
            "M": M,
            "T": T,
        })
    return points


def validate_sweep_config(cfg: SweepConfig) -> None:
    """
    Raises:
        ConfigError: On an empty grid or out-of-range values.
    """
    if cfg.trials < 1:
        raise ConfigError(f"trials must be at least 1, got {cfg.trials}")
    grids = {"M": cfg.M, "T": cfg.T}
    if cfg.family is InstanceFamily.STANDARD:
        grids.update(d=cfg.d, delta=cfg.delta)
    elif cfg.family is InstanceFamily.SPHERE:
        grids.update(d=cfg.d, K=cfg.K)
    elif cfg.instance_path is None:
        raise ConfigError("the file family needs instance_path")
    for name, values in grids.items():
        if not values:
            raise ConfigError(f"parameter grid '{name}' is empty")
        if any(v <= 0 for v in values):
            raise ConfigError(f"parameter grid '{name}' has non-positive values: {list(values)}")
    if cfg.noise_std < 0 or cfg.epsilon <= 0:
        raise ConfigError("noise_std must be >= 0 and epsilon > 0")
    if cfg.graph is not None and cfg.graph.kind not in GRAPH_KINDS and cfg.graph.path is None:
        raise ConfigError(f"unknown graph kind '{cfg.graph.kind}'")


class _GridPoint:
    """Everything a trial at one grid point needs."""

    def __init__(self, cfg: SweepConfig, params: Dict[str, Any],
                 instance: Optional[LinearBanditInstance],
                 graph: Optional[AgentGraph], partition: Optional[Partition],
                 cache: DesignCache):
        self.cfg = cfg
        self.params = params
        self.cache = cache
        self.instance = instance
        self.graph = graph
        self.partition = partition
        if cfg.family is InstanceFamily.STANDARD:
            self.instance = gen_standard_instance(params["d"], params["delta"], cfg.noise_std)
        if cfg.algorithm is AlgorithmKind.GEN:
            self._prepare_network()

    def _prepare_network(self) -> None:
        M = self.params["M"]
        if self.graph is None:
            spec = self.cfg.graph
            kind, p = (spec.kind, spec.p) if spec is not None else ("star", 0.2)
            self.graph = gen_graph(kind, M, p, seed=self.cfg.master_seed)
            self.partition = None
        elif self.graph.n != M:
            raise ConfigError(f"graph has {self.graph.n} agents but the grid asks for M={M}")
        if self.partition is None:
            self.partition = build_partition(self.graph, greedy_dominating_set(self.graph))

    def instance_for(self, t: int) -> LinearBanditInstance:
        if self.cfg.family is InstanceFamily.SPHERE:
            stream = RngStream(self.cfg.master_seed, (t, INSTANCE_STREAM))
            return gen_random_sphere_instance(self.params["d"], self.params["K"], stream, self.cfg.noise_std)
        return self.instance

    def run_trial(self, t: int) -> RunOutcome:
        inst = self.instance_for(t)
        rng = RngStream(self.cfg.master_seed, (t,))
        options = {"epsilon": self.cfg.epsilon, "cache": self.cache}
        if self.cfg.algorithm is AlgorithmKind.STAR:
            return run_star(inst, self.params["M"], self.params["T"], rng, **options)
        if self.cfg.algorithm is AlgorithmKind.GEN:
            return run_gen(inst, self.graph, self.partition, self.params["T"], rng, **options)
        return run_ma_od_linbai(inst, self.params["M"], self.params["T"], rng, **options)

    def bound(self) -> Optional[float]:
        if self.instance is None or self.cfg.algorithm is AlgorithmKind.MA_OD:
            return None
        inst = self.instance
        delta_min = gap_profile(inst).delta_min
        if self.cfg.algorithm is AlgorithmKind.STAR:
            return theorem1_bound(self.params["T"], self.params["M"], inst.dim, inst.num_arms, delta_min)
        return theorem2_bound(self.params["T"], inst.dim, inst.num_arms, delta_min)


def aggregate(params: Dict[str, Any], outcomes: Sequence[RunOutcome],
              bound: Optional[float] = None) -> ErrorEstimate:
    """Error fraction, its standard error and mean ledger totals over trials."""
    n = len(outcomes)
    errors = sum(1 for o in outcomes if not o.correct)
    p_hat = errors / n
    return ErrorEstimate(
        params=dict(params),
        p_hat=p_hat,
        stderr=math.sqrt(p_hat * (1.0 - p_hat) / n),
        trials=n,
        errors=errors,
        mean_messages=float(np.mean([o.ledger.data_messages for o in outcomes])),
        mean_index_broadcasts=float(np.mean([o.ledger.index_broadcasts for o in outcomes])),
        bound=bound,
    )


async def monte_carlo_async(cfg: SweepConfig, threads: int = 1, *,
                            instance: Optional[LinearBanditInstance] = None,
                            graph: Optional[AgentGraph] = None,
                            partition: Optional[Partition] = None,
                            cache: Optional[DesignCache] = None) -> List[ErrorEstimate]:
    """
    Estimate the error probability at every grid point of a sweep.

    Args:
        cfg: Sweep configuration
        threads: Trials in flight at once
        instance: The instance for the file family
        graph: Agent graph for Gen sweeps (generated from cfg.graph when absent)
        partition: Partition of ``graph`` (greedy when absent)
        cache: Design cache shared by the trials (a fresh one when absent)

    Returns:
        One ErrorEstimate per grid point, in grid order

    Raises:
        ConfigError: On an invalid config.
        TrialFailedError: When a trial raises.
    """
    validate_sweep_config(cfg)
    if cfg.family is InstanceFamily.FILE and instance is None:
        raise ConfigError("the file family needs the loaded instance")
    cache = cache if cache is not None else DesignCache()
    runner = TrialRunner(threads)
    estimates = []
    for g, params in enumerate(grid_points(cfg)):
        logger.info(f"grid point {g}: {params}")
        try:
            point = _GridPoint(cfg, params, instance, graph, partition, cache)
        except ValueError as e:
            raise ConfigError(f"grid point {g}: {e}")
        outcomes = await runner.run(point.run_trial, cfg.trials, grid_index=g)
        estimate = aggregate(params, outcomes, point.bound())
        logger.info(f"grid point {g}: p_hat={estimate.p_hat:.4f} +/- {estimate.stderr:.4f}")
        estimates.append(estimate)
    cache_stats = cache.get_stats()
    logger.info(f"design cache: {cache_stats['entries']} entries, hit rate {cache_stats['hit_rate_percent']}%")
    return estimates


def monte_carlo(cfg: SweepConfig, threads: int = 1, **kwargs) -> List[ErrorEstimate]:
    """Blocking wrapper around ``monte_carlo_async``."""
    return asyncio.run(monte_carlo_async(cfg, threads, **kwargs))
