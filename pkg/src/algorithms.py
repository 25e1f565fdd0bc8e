"""
Collaborative fixed-budget best-arm identification.

Three procedures share one elimination loop:

* ``run_star``: M agents report to a central server. Each round the server
  projects the surviving arms onto their span, solves a G-optimal design,
  sends every agent the same integer allocation, aggregates the agents'
  Gram/moment statistics, estimates theta by least squares and keeps the
  top half of the arms.
* ``run_gen``: every block of a dominating-set partition runs the star
  procedure with its hub as the server (the hub also pulls arms); the hubs'
  survivors are combined by majority vote.
* ``run_ma_od_linbai``: M agents each run the single-agent procedure
  independently and vote.

Random draws follow one path convention: agent ``rank`` of block ``block``
in round ``p`` samples from ``rng.child(block, rank, p)``. The star runner is
block 0, which is what makes a single-block Gen run reproduce a star run.
"""

import logging
from collections import Counter
from typing import List, Optional, Sequence, Tuple

import numpy as np

try:
    from .bandit_core import RngStream, gap_profile, sample_pulls
    from .cache_manager import DesignCache
    from .design import (
        DEFAULT_EPSILON, DEFAULT_MAX_ITER, PRUNE_THRESHOLD, design_matrix,
        g_optimal_design, prune_support, round_allocation,
    )
    from .linalg import project_all, quad_norm_sq, rank_basis, solve_psd
    from .models import (
        AgentGraph, AgentState, AlgorithmKind, CommLedger, DesignWeights, HubVote,
        InsufficientBudgetError, InvalidPartitionError, LinearBanditInstance,
        Partition, PullAllocation, RoundTrace, RunOutcome, ServerState,
    )
    from .topology import validate_partition
except ImportError:
    from bandit_core import RngStream, gap_profile, sample_pulls
    from cache_manager import DesignCache
    from design import (
        DEFAULT_EPSILON, DEFAULT_MAX_ITER, PRUNE_THRESHOLD, design_matrix,
        g_optimal_design, prune_support, round_allocation,
    )
    from linalg import project_all, quad_norm_sq, rank_basis, solve_psd
    from models import (
        AgentGraph, AgentState, AlgorithmKind, CommLedger, DesignWeights, HubVote,
        InsufficientBudgetError, InvalidPartitionError, LinearBanditInstance,
        Partition, PullAllocation, RoundTrace, RunOutcome, ServerState,
    )
    from topology import validate_partition


logger = logging.getLogger(__name__)

# Substream key reserved for vote tie-breaking; block indices stay far below it.
VOTE_STREAM = 2 ** 31 - 1


def num_rounds(K: int) -> int:
    """ceil(log2 K), computed exactly."""
    return max((K - 1).bit_length(), 1)


def survivors_after(K: int, p: int) -> int:
    """Size of the active set after round p: ceil(K / 2^p), at least 1."""
    return max(-(-K // (2 ** p)), 1)


def _check_budget(inst: LinearBanditInstance, T: int) -> int:
    rounds = num_rounds(inst.num_arms)
    if T < rounds * inst.dim:
        raise InsufficientBudgetError(
            f"budget T={T} is below rounds*d = {rounds}*{inst.dim}; "
            f"each round needs at least d pulls per agent"
        )
    return T // rounds


def _solve_design(proj: np.ndarray, epsilon: float, max_iter: int,
                  cache: Optional[DesignCache]) -> DesignWeights:
    if cache is None:
        return g_optimal_design(proj, epsilon=epsilon, max_iter=max_iter)
    key = DesignCache.make_key(proj, epsilon, max_iter)
    design = cache.get(key)
    if design is None:
        design = g_optimal_design(proj, epsilon=epsilon, max_iter=max_iter)
        cache.set(key, design)
    return design


def play_round(inst: LinearBanditInstance, active: Sequence[int], proj: np.ndarray,
               alloc: PullAllocation, participants: int, rng: RngStream,
               block: int, p: int, ledger: Optional[CommLedger] = None,
               local_rank: Optional[int] = None) -> ServerState:
    """
    Every participant pulls the allocation once; the server sums their statistics.

    Args:
        inst: Instance being played
        active: 1-based labels of the active arms, aligned with ``proj`` rows
        proj: Active arms in projected coordinates
        alloc: Pull counts aligned with ``active``
        participants: Number of agents pulling (hub included for Gen blocks)
        rng: Trial stream; agent substreams are derived from it
        block: Block index in the substream path
        p: Round number (1-based)
        ledger: Receives one allocation and one statistics message per
            remote participant
        local_rank: Participant co-located with the server (a Gen hub); its
            exchange is not a message

    Returns:
        ServerState holding V_S = sum V_m and D_S = sum D_m
    """
    dim = proj.shape[1]
    server = ServerState(V=np.zeros((dim, dim)), D=np.zeros(dim), active_set=list(active), round=p)
    support = list(alloc.support)
    labels = [active[j] for j in support]
    counts = [alloc.counts[j] for j in support]
    V_round = design_matrix(proj, alloc)
    for rank in range(participants):
        remote = ledger is not None and rank != local_rank
        if remote:
            ledger.allocation_messages += 1
        agent = AgentState.zeros(rank, dim)
        sums = sample_pulls(inst, labels, counts, rng.child(block, rank, p).generator())
        agent.V = V_round
        agent.D = proj[support].T @ sums
        if remote:
            ledger.statistics_messages += 1
        server.V = server.V + agent.V
        server.D = server.D + agent.D
    return server


def _eliminate(inst: LinearBanditInstance, participants: int, T: int, rng: RngStream,
               block: int, epsilon: float, max_iter: int,
               cache: Optional[DesignCache], ledger: CommLedger,
               local_rank: Optional[int] = None) -> Tuple[List[RoundTrace], int, float]:
    """
    Run the halving schedule for one star; returns traces, survivor and its uncertainty.

    Messages exchanged with remote participants are added to ``ledger``.
    """
    K = inst.num_arms
    rounds = num_rounds(K)
    b = _check_budget(inst, T)
    active = list(range(1, K + 1))
    for rank in range(participants):
        if rank != local_rank:
            ledger.index_broadcasts += K
    traces: List[RoundTrace] = []
    uncertainty = 0.0

    for p in range(1, rounds + 1):
        X = inst.arms[[i - 1 for i in active]]
        basis = rank_basis(X)
        proj = project_all(basis, X)
        d_p = basis.rank

        design = _solve_design(proj, epsilon, max_iter, cache)
        pruned = prune_support(design, PRUNE_THRESHOLD, proj)
        if not np.isfinite(pruned.g_value) or pruned.g_value > 2 * d_p:
            logger.warning(f"pruning raised g to {pruned.g_value:.4g} in round {p}; keeping the full support")
            pruned = design
        alloc = round_allocation(pruned, b, arms=proj)

        server = play_round(inst, active, proj, alloc, participants, rng, block, p,
                            ledger=ledger, local_rank=local_rank)
        theta_hat = solve_psd(server.V, server.D)
        estimates = proj @ theta_hat

        keep = survivors_after(K, p)
        ranked = sorted(range(len(active)), key=lambda j: (-estimates[j], active[j]))
        kept_positions = sorted(ranked[:keep])
        survivors = [active[j] for j in kept_positions]
        if p == rounds:
            uncertainty = quad_norm_sq(server.V, proj[kept_positions[0]])

        logger.debug(
            f"block {block} round {p}: d_p={d_p}, g={pruned.g_value:.3f}, "
            f"{len(active)} -> {len(survivors)} arms"
        )
        traces.append(RoundTrace(
            block=block,
            round=p,
            dim=d_p,
            before=tuple(active),
            after=tuple(survivors),
            weights=pruned.as_dict(active),
            allocation={active[j]: alloc.counts[j] for j in alloc.support},
            estimates={active[j]: float(estimates[j]) for j in range(len(active))},
            g_value=pruned.g_value,
        ))
        server.reset(d_p)
        active = survivors

    return traces, active[0], float(uncertainty)


def run_star(inst: LinearBanditInstance, M: int, T: int, rng: RngStream, *,
             epsilon: float = DEFAULT_EPSILON, max_iter: int = DEFAULT_MAX_ITER,
             cache: Optional[DesignCache] = None) -> RunOutcome:
    """
    Star-network identification with M agents and per-agent budget T.

    Raises:
        InsufficientBudgetError: If T < ceil(log2 K) * d.
        DegenerateSpanError: Propagated from the design solver.
    """
    if M < 1:
        raise ValueError(f"need at least one agent, got M={M}")
    ledger = CommLedger()
    traces, arm, _ = _eliminate(inst, M, T, rng, 0, epsilon, max_iter, cache, ledger)
    return RunOutcome(
        algorithm=AlgorithmKind.STAR,
        chosen_arm=arm,
        correct=arm == gap_profile(inst).best_index,
        traces=traces,
        ledger=ledger,
    )


def ensemble_vote(votes: Sequence[HubVote]) -> int:
    """
    Majority vote over hub survivors.

    Ties go to the tied arm with the lowest reported uncertainty (the minimum
    over hubs reporting it), then to the lower arm index.
    """
    if not votes:
        raise ValueError("no votes to combine")
    tally = Counter(v.arm for v in votes)
    top = max(tally.values())
    tied = [arm for arm, n in tally.items() if n == top]
    if len(tied) == 1:
        return tied[0]
    best_uncertainty = {arm: min(v.uncertainty for v in votes if v.arm == arm) for arm in tied}
    return min(tied, key=lambda arm: (best_uncertainty[arm], arm))


def run_gen(inst: LinearBanditInstance, graph: AgentGraph, partition: Partition, T: int,
            rng: RngStream, *, epsilon: float = DEFAULT_EPSILON,
            max_iter: int = DEFAULT_MAX_ITER,
            cache: Optional[DesignCache] = None) -> RunOutcome:
    """
    Generic-network identification over a dominating-set partition.

    Raises:
        InvalidPartitionError: If the partition fails validation on the graph.
        InsufficientBudgetError: If T < ceil(log2 K) * d.
    """
    report = validate_partition(graph, partition)
    if not report.valid:
        raise InvalidPartitionError(f"{report.violation}: {report.detail}")
    _check_budget(inst, T)

    traces: List[RoundTrace] = []
    votes: List[HubVote] = []
    ledger = CommLedger()
    for j, (block, hub) in enumerate(zip(partition.blocks, partition.hubs)):
        block_traces, arm, uncertainty = _eliminate(
            inst, len(block), T, rng, j, epsilon, max_iter, cache, ledger, local_rank=block.index(hub),
        )
        traces.extend(block_traces)
        votes.append(HubVote(block=j, hub=hub, arm=arm, uncertainty=uncertainty))
        ledger.vote_messages += 1
        logger.debug(f"block {j} (hub {hub}, {len(block)} agents) voted for arm {arm}")

    chosen = ensemble_vote(votes)
    return RunOutcome(
        algorithm=AlgorithmKind.GEN,
        chosen_arm=chosen,
        correct=chosen == gap_profile(inst).best_index,
        traces=traces,
        ledger=ledger,
        votes=votes,
    )


def run_ma_od_linbai(inst: LinearBanditInstance, M: int, T: int, rng: RngStream, *,
                     epsilon: float = DEFAULT_EPSILON, max_iter: int = DEFAULT_MAX_ITER,
                     cache: Optional[DesignCache] = None) -> RunOutcome:
    """
    M independent single-agent runs combined by majority vote.

    Agent m is block m with a single participant, so agent 0 replays
    ``run_star(M=1)``. Tied votes are broken uniformly at random from the
    reserved vote substream.
    """
    if M < 1:
        raise ValueError(f"need at least one agent, got M={M}")
    traces: List[RoundTrace] = []
    votes: List[HubVote] = []
    ledger = CommLedger()
    for m in range(M):
        agent_traces, arm, uncertainty = _eliminate(
            inst, 1, T, rng, m, epsilon, max_iter, cache, ledger, local_rank=0,
        )
        traces.extend(agent_traces)
        votes.append(HubVote(block=m, hub=m + 1, arm=arm, uncertainty=uncertainty))
        ledger.vote_messages += 1

    tally = Counter(v.arm for v in votes)
    top = max(tally.values())
    tied = sorted(arm for arm, n in tally.items() if n == top)
    if len(tied) == 1:
        chosen = tied[0]
    else:
        chosen = int(rng.child(VOTE_STREAM).generator().choice(tied))
        logger.debug(f"vote tie between arms {tied}; drew arm {chosen}")

    return RunOutcome(
        algorithm=AlgorithmKind.MA_OD,
        chosen_arm=chosen,
        correct=chosen == gap_profile(inst).best_index,
        traces=traces,
        ledger=ledger,
        votes=votes,
    )


def ledger_closed_form(kind, M: int, K: int, partition: Optional[Partition] = None) -> CommLedger:
    """
    Message counts predicted by the cost formulas.

    star: 2 M ceil(log2 K) round-trip messages plus K index broadcasts per agent.
    gen: 2 (M - |P|) ceil(log2 K) round-trip messages plus |P| votes.
    ma-od: M votes.
    """
    kind = AlgorithmKind(kind) if not isinstance(kind, AlgorithmKind) else kind
    rounds = num_rounds(K)
    if kind is AlgorithmKind.STAR:
        return CommLedger(M * rounds, M * rounds, 0, K * M)
    if kind is AlgorithmKind.GEN:
        if partition is None:
            raise ValueError("the gen ledger needs a partition")
        members = M - len(partition.blocks)
        return CommLedger(members * rounds, members * rounds, len(partition.blocks), K * members)
    return CommLedger(vote_messages=M)
