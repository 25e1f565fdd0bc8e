"""
Data models for the collaborative linear best-arm identification toolkit.

This module contains the dataclasses and enums shared by every other module:
bandit instances, designs and allocations, agent graphs and partitions, run
outcomes with their communication ledgers, sweep configurations, and the
exception hierarchy.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


class ErrorTypes(Enum):
    """Kinds of failure raised by the library."""
    SINGULAR_MATRIX = "singular_matrix"
    EMPTY_ARM_SET = "empty_arm_set"
    OUT_OF_SPAN = "out_of_span"
    INDEX_OUT_OF_RANGE = "index_out_of_range"
    TIED_BEST_ARM = "tied_best_arm"
    DEGENERATE_SPAN = "degenerate_span"
    ALL_PRUNED = "all_pruned"
    NOT_DOMINATING = "not_dominating"
    INVALID_PARTITION = "invalid_partition"
    INSUFFICIENT_BUDGET = "insufficient_budget"
    GENERATION_FAILED = "generation_failed"
    TRIAL_FAILED = "trial_failed"
    INVALID_INSTANCE = "invalid_instance"
    INVALID_CONFIG = "invalid_config"


class MaLinBAIError(Exception):
    """Base class for every error raised by the library."""
    error_type: ErrorTypes = ErrorTypes.INVALID_CONFIG

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class SingularMatrixError(MaLinBAIError):
    error_type = ErrorTypes.SINGULAR_MATRIX


class EmptyArmSetError(MaLinBAIError):
    error_type = ErrorTypes.EMPTY_ARM_SET


class OutOfSpanError(MaLinBAIError):
    error_type = ErrorTypes.OUT_OF_SPAN


class IndexOutOfRangeError(MaLinBAIError):
    error_type = ErrorTypes.INDEX_OUT_OF_RANGE


class TiedBestArmError(MaLinBAIError):
    error_type = ErrorTypes.TIED_BEST_ARM


class DegenerateSpanError(MaLinBAIError):
    error_type = ErrorTypes.DEGENERATE_SPAN


class AllPrunedError(MaLinBAIError):
    error_type = ErrorTypes.ALL_PRUNED


class NotDominatingError(MaLinBAIError):
    error_type = ErrorTypes.NOT_DOMINATING


class InvalidPartitionError(MaLinBAIError):
    error_type = ErrorTypes.INVALID_PARTITION


class InsufficientBudgetError(MaLinBAIError):
    error_type = ErrorTypes.INSUFFICIENT_BUDGET


class GenerationFailedError(MaLinBAIError):
    error_type = ErrorTypes.GENERATION_FAILED


class InvalidInstanceError(MaLinBAIError):
    error_type = ErrorTypes.INVALID_INSTANCE


class ConfigError(MaLinBAIError):
    error_type = ErrorTypes.INVALID_CONFIG


class TrialFailedError(MaLinBAIError):
    """A Monte-Carlo trial raised; carries the trial and grid point it came from."""
    error_type = ErrorTypes.TRIAL_FAILED

    def __init__(self, trial: int, grid_index: int, cause: Exception):
        super().__init__(
            f"trial {trial} of grid point {grid_index} failed: "
            f"{type(cause).__name__}: {cause}"
        )
        self.trial = trial
        self.grid_index = grid_index
        self.cause = cause


class ConvergenceWarning(UserWarning):
    """Frank-Wolfe stopped at max_iter before reaching the requested accuracy."""


class AlgorithmKind(Enum):
    """The runnable identification procedures."""
    STAR = "star"
    GEN = "gen"
    MA_OD = "ma-od"


class InstanceFamily(Enum):
    """Instance generators available to sweeps."""
    STANDARD = "standard"
    SPHERE = "sphere"
    FILE = "file"


@dataclass(frozen=True)
class ProjectionBasis:
    """Orthonormal rows spanning the active arm set."""
    rows: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.rows.shape[0])

    @property
    def ambient_dim(self) -> int:
        return int(self.rows.shape[1])


@dataclass(frozen=True)
class LinearBanditInstance:
    """
    A stochastic linear bandit: K arm vectors, hidden parameter and noise scale.

    Build instances through ``bandit_core.make_instance`` so the invariants
    (K >= 2, finite entries, unique best arm) are checked.
    """
    arms: np.ndarray
    theta: np.ndarray
    noise_std: float = 1.0

    @property
    def num_arms(self) -> int:
        return int(self.arms.shape[0])

    @property
    def dim(self) -> int:
        return int(self.arms.shape[1])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "arms": self.arms.tolist(),
            "theta": self.theta.tolist(),
            "noise_std": float(self.noise_std),
        }


@dataclass(frozen=True)
class GapProfile:
    """Best arm (1-based) and per-arm sub-optimality gaps."""
    best_index: int
    gaps: Tuple[float, ...]
    delta_min: float


@dataclass(frozen=True)
class DesignWeights:
    """
    A probability design over arm positions.

    ``weights[j]`` is the mass on the j-th arm of the list the design was
    solved for; ``history`` holds the best g value seen after each logged
    iterate and is non-increasing.
    """
    weights: Tuple[float, ...]
    g_value: float
    iterations: int
    dim: int
    converged: bool = True
    history: Tuple[float, ...] = ()

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(j for j, w in enumerate(self.weights) if w > 0.0)

    def as_dict(self, labels: Optional[List[int]] = None) -> Dict[int, float]:
        """Map weights onto arm labels (positions when no labels are given)."""
        keys = labels if labels is not None else list(range(len(self.weights)))
        return {int(k): float(w) for k, w in zip(keys, self.weights) if w > 0.0}

    def to_dict(self, labels: Optional[List[int]] = None) -> Dict[str, Any]:
        return {
            "weights": {str(k): v for k, v in self.as_dict(labels).items()},
            "g_value": float(self.g_value),
            "dim": self.dim,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class PullAllocation:
    """Integer pull counts per arm position; counts sum to ``total``."""
    counts: Tuple[int, ...]
    total: int

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(j for j, c in enumerate(self.counts) if c > 0)


@dataclass(frozen=True)
class AgentGraph:
    """Undirected agent network on vertices 1..n."""
    n: int
    edges: frozenset

    def neighbors(self, v: int) -> set:
        return {b if a == v else a for a, b in self.edges if v in (a, b)}


@dataclass(frozen=True)
class Partition:
    """Dominating-set partition: star blocks, each led by ``hubs[i]``."""
    blocks: Tuple[Tuple[int, ...], ...]
    hubs: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {"blocks": [list(b) for b in self.blocks], "hubs": list(self.hubs)}


@dataclass(frozen=True)
class PartitionReport:
    """Outcome of partition validation; ``violation`` names the first failed check."""
    valid: bool
    violation: Optional[str] = None
    detail: str = ""


@dataclass
class AgentState:
    """Per-agent Gram and reward-moment accumulators for one round."""
    agent_id: int
    V: np.ndarray
    D: np.ndarray

    @classmethod
    def zeros(cls, agent_id: int, dim: int) -> "AgentState":
        return cls(agent_id=agent_id, V=np.zeros((dim, dim)), D=np.zeros(dim))

    def reset(self) -> None:
        self.V = np.zeros_like(self.V)
        self.D = np.zeros_like(self.D)


@dataclass
class ServerState:
    """Aggregated accumulators and the surviving arm labels (1-based)."""
    V: np.ndarray
    D: np.ndarray
    active_set: List[int]
    round: int = 0

    def reset(self, dim: int) -> None:
        self.V = np.zeros((dim, dim))
        self.D = np.zeros(dim)


@dataclass(frozen=True)
class RoundTrace:
    """What one elimination round did."""
    block: int
    round: int
    dim: int
    before: Tuple[int, ...]
    after: Tuple[int, ...]
    weights: Dict[int, float]
    allocation: Dict[int, int]
    estimates: Dict[int, float]
    g_value: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "block": self.block,
            "round": self.round,
            "dim": self.dim,
            "before": list(self.before),
            "after": list(self.after),
            "weights": {str(k): float(v) for k, v in sorted(self.weights.items())},
            "allocation": {str(k): int(v) for k, v in sorted(self.allocation.items())},
            "estimates": {str(k): float(v) for k, v in sorted(self.estimates.items())},
            "g_value": float(self.g_value),
        }


@dataclass
class CommLedger:
    """Message counts by kind."""
    allocation_messages: int = 0
    statistics_messages: int = 0
    vote_messages: int = 0
    index_broadcasts: int = 0

    @property
    def data_messages(self) -> int:
        """Round-trip traffic plus votes; the quantity the cost formulas count."""
        return self.allocation_messages + self.statistics_messages + self.vote_messages

    def merge(self, other: "CommLedger") -> "CommLedger":
        return CommLedger(
            allocation_messages=self.allocation_messages + other.allocation_messages,
            statistics_messages=self.statistics_messages + other.statistics_messages,
            vote_messages=self.vote_messages + other.vote_messages,
            index_broadcasts=self.index_broadcasts + other.index_broadcasts,
        )

    def to_dict(self) -> Dict[str, int]:
        return {
            "allocation_messages": self.allocation_messages,
            "statistics_messages": self.statistics_messages,
            "vote_messages": self.vote_messages,
            "index_broadcasts": self.index_broadcasts,
            "data_messages": self.data_messages,
        }


@dataclass(frozen=True)
class HubVote:
    """A block's surviving arm and its uncertainty a^T V^-1 a."""
    block: int
    hub: int
    arm: int
    uncertainty: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "block": self.block,
            "hub": self.hub,
            "arm": self.arm,
            "uncertainty": float(self.uncertainty),
        }


@dataclass
class RunOutcome:
    """Result of one identification run."""
    algorithm: AlgorithmKind
    chosen_arm: int
    correct: bool
    traces: List[RoundTrace]
    ledger: CommLedger
    votes: List[HubVote] = field(default_factory=list)

    def decision_dict(self) -> Dict[str, Any]:
        return {
            "chosen_arm": self.chosen_arm,
            "correct": self.correct,
            "traces": [t.to_dict() for t in self.traces],
        }

    def decision_json(self) -> str:
        return json.dumps(self.decision_dict(), indent=2)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algorithm": self.algorithm.value,
            "chosen_arm": self.chosen_arm,
            "correct": self.correct,
            "ledger": self.ledger.to_dict(),
            "votes": [v.to_dict() for v in self.votes],
            "traces": [t.to_dict() for t in self.traces],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class GraphSpec:
    """How a Gen sweep obtains its agent graph."""
    kind: str = "star"
    p: float = 0.2
    path: Optional[str] = None
    partition_path: Optional[str] = None


@dataclass(frozen=True)
class SweepConfig:
    """
    A Monte-Carlo sweep.

    List-valued grid parameters (d, delta, K, M, T) are expanded into their
    cartesian product in that order.
    """
    algorithm: AlgorithmKind
    family: InstanceFamily
    d: Tuple[int, ...] = (10,)
    delta: Tuple[float, ...] = (0.3,)
    K: Tuple[int, ...] = (100,)
    M: Tuple[int, ...] = (15,)
    T: Tuple[int, ...] = (150,)
    trials: int = 100
    master_seed: int = 0
    noise_std: float = 1.0
    epsilon: float = 1.0
    instance_path: Optional[str] = None
    graph: Optional[GraphSpec] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algorithm": self.algorithm.value,
            "family": self.family.value,
            "d": list(self.d),
            "delta": list(self.delta),
            "K": list(self.K),
            "M": list(self.M),
            "T": list(self.T),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "noise_std": self.noise_std,
            "epsilon": self.epsilon,
            "instance_path": self.instance_path,
            "graph": None if self.graph is None else {
                "kind": self.graph.kind,
                "p": self.graph.p,
                "path": self.graph.path,
                "partition_path": self.graph.partition_path,
            },
        }


@dataclass(frozen=True)
class ErrorEstimate:
    """Monte-Carlo error estimate at one grid point."""
    params: Dict[str, Any]
    p_hat: float
    stderr: float
    trials: int
    errors: int
    mean_messages: float
    mean_index_broadcasts: float
    bound: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            **self.params,
            "trials": self.trials,
            "errors": self.errors,
            "p_hat": self.p_hat,
            "stderr": self.stderr,
            "mean_messages": self.mean_messages,
            "mean_index_broadcasts": self.mean_index_broadcasts,
            "bound": self.bound,
        }
