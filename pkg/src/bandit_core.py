"""
Linear bandit instances, reward sampling, gaps and hardness.

Arm indices in this module's public API are 1-based, matching how arms are
reported in run outcomes and on the command line.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

try:
    from .models import (
        GapProfile, IndexOutOfRangeError, InvalidInstanceError,
        LinearBanditInstance, TiedBestArmError,
    )
except ImportError:
    from models import (
        GapProfile, IndexOutOfRangeError, InvalidInstanceError,
        LinearBanditInstance, TiedBestArmError,
    )


logger = logging.getLogger(__name__)

TIE_TOL = 1e-12


@dataclass(frozen=True)
class RngStream:
    """
    A reproducible random substream addressed by (master_seed, path).

    Every call to ``generator()`` returns a fresh generator positioned at the
    start of the substream, so identical (master_seed, path) pairs always give
    identical samples and distinct paths give independent ones.
    """
    master_seed: int
    path: Tuple[int, ...] = ()

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.master_seed, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=self.path)
        return np.random.default_rng(seq)


def make_instance(arms: Sequence[Sequence[float]], theta: Sequence[float],
                  noise_std: float = 1.0) -> LinearBanditInstance:
    """
    Build a validated instance.

    Raises:
        InvalidInstanceError: On shape mismatch, non-finite entries, fewer
            than two arms, or negative noise.
        TiedBestArmError: If the best arm is not unique.
    """
    try:
        A = np.array(arms, dtype=float, ndmin=2)
        th = np.array(theta, dtype=float).ravel()
    except (TypeError, ValueError) as e:
        raise InvalidInstanceError(f"arms and theta must be numeric arrays: {e}")
    if A.ndim != 2 or A.shape[0] < 2:
        raise InvalidInstanceError(f"need at least two arms, got shape {A.shape}")
    if A.shape[1] < 1 or A.shape[1] != th.shape[0]:
        raise InvalidInstanceError(
            f"arm dimension {A.shape[1]} does not match theta dimension {th.shape[0]}"
        )
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(th))):
        raise InvalidInstanceError("arms and theta must be finite")
    if not np.isfinite(noise_std) or noise_std < 0:
        raise InvalidInstanceError(f"noise_std must be >= 0, got {noise_std}")
    A.setflags(write=False)
    th.setflags(write=False)
    inst = LinearBanditInstance(arms=A, theta=th, noise_std=float(noise_std))
    gap_profile(inst)
    return inst


def _check_index(inst: LinearBanditInstance, i: int) -> None:
    if not 1 <= i <= inst.num_arms:
        raise IndexOutOfRangeError(f"arm index {i} outside 1..{inst.num_arms}")


def expected_rewards(inst: LinearBanditInstance) -> np.ndarray:
    """Expected reward of every arm, position j holding arm j+1."""
    return inst.arms @ inst.theta


def expected_reward(inst: LinearBanditInstance, i: int) -> float:
    """Return <theta, a_i> for the 1-based arm index i."""
    _check_index(inst, i)
    return float(inst.arms[i - 1] @ inst.theta)


def sample_reward(inst: LinearBanditInstance, i: int, rng: RngStream) -> float:
    """One noisy reward of arm i drawn from the start of the given substream."""
    _check_index(inst, i)
    z = rng.generator().standard_normal()
    return expected_reward(inst, i) + inst.noise_std * float(z)


def sample_pulls(inst: LinearBanditInstance, arm_indices: Sequence[int],
                 counts: Sequence[int], generator: np.random.Generator) -> np.ndarray:
    """
    Reward sums for one agent pulling each listed arm ``counts`` times.

    Noise is drawn in one block, in the order the arms are listed.

    Args:
        inst: Instance being played
        arm_indices: 1-based arm indices
        counts: Pull count per listed arm
        generator: The agent's generator for this round

    Returns:
        Array of per-arm reward sums aligned with ``arm_indices``
    """
    counts = np.asarray(counts, dtype=int)
    means = np.array([expected_reward(inst, i) for i in arm_indices])
    sums = counts * means
    total = int(counts.sum())
    if total == 0 or inst.noise_std == 0.0:
        return sums
    noise = generator.standard_normal(total)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    noise_sums = np.array([noise[offsets[j]:offsets[j + 1]].sum() for j in range(len(counts))])
    return sums + inst.noise_std * noise_sums


def gap_profile(inst: LinearBanditInstance) -> GapProfile:
    """
    Best arm and sub-optimality gaps.

    Raises:
        TiedBestArmError: If two arms share the maximum expected reward
            within TIE_TOL.
    """
    rewards = expected_rewards(inst)
    order = np.argsort(-rewards, kind="stable")
    best, runner_up = int(order[0]), int(order[1])
    if rewards[best] - rewards[runner_up] <= TIE_TOL:
        raise TiedBestArmError(
            f"arms {best + 1} and {runner_up + 1} tie for the best expected reward"
        )
    gaps = rewards[best] - rewards
    gaps[best] = 0.0
    positive = gaps[gaps > 0]
    return GapProfile(
        best_index=best + 1,
        gaps=tuple(float(g) for g in gaps),
        delta_min=float(positive.min()),
    )


def hardness(inst: LinearBanditInstance) -> float:
    """
    Hardness H = sum of gap^-2 over the d highest-reward arms.

    The best arm's own (zero) gap is replaced by delta_min. When K < d all
    arms are summed.
    """
    profile = gap_profile(inst)
    rewards = expected_rewards(inst)
    order = np.argsort(-rewards, kind="stable")[: inst.dim]
    total = 0.0
    for j in order:
        gap = profile.gaps[j] if j != profile.best_index - 1 else profile.delta_min
        total += gap ** -2
    return float(total)
