"""Trajectory statistics over a batch of episodes."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .domain import Aspect, EpisodeResult, StopReason, Trajectory


@dataclass(frozen=True)
class TrajectoryStats:
    aspect_ratio: dict[Aspect, float]  # percentages
    representative: tuple[Trajectory, float]
    avg_length: float
    max_stop_ratio: float
    n_episodes: int

    def to_json(self) -> dict:
        traj, ratio = self.representative
        return {
            "n_episodes": self.n_episodes,
            "aspect_ratio": {a.letter: v for a, v in self.aspect_ratio.items()},
            "representative": {"trajectory": traj.notation, "ratio": ratio},
            "avg_length": self.avg_length,
            "max_stop_ratio": self.max_stop_ratio,
        }

    def to_text(self) -> str:
        traj, ratio = self.representative
        ratio_text = " : ".join(f"{self.aspect_ratio[a]:.0f}" for a in Aspect)
        return (
            f"Episodes        {self.n_episodes}\n"
            f"Aspect ratio    F : P : C = {ratio_text}\n"
            f"Representative  {traj.notation} ({100 * ratio:.1f}%)\n"
            f"Length          {self.avg_length:.2f}\n"
            f"Max stop        {100 * self.max_stop_ratio:.1f}%\n"
        )


def trajectory_stats(results: Sequence[EpisodeResult]) -> TrajectoryStats:
    """Aspect shares, modal trajectory, mean length and max-round stop share.

    Failed episodes are ignored. Ties for the modal trajectory go to the one
    seen first.
    """
    done = [r for r in results if not r.failed]
    if not done:
        raise ValueError("no completed episodes")
    occurrences = Counter(a for r in done for a in r.trajectory.aspects)
    total = sum(occurrences.values())
    aspect_ratio = {a: (100 * occurrences[a] / total if total else 0.0) for a in Aspect}
    modal, count = Counter(r.trajectory.aspects for r in done).most_common(1)[0]
    return TrajectoryStats(
        aspect_ratio=aspect_ratio,
        representative=(Trajectory(modal), count / len(done)),
        avg_length=sum(r.rounds_used for r in done) / len(done),
        max_stop_ratio=sum(r.stop_reason is StopReason.MAX_ROUNDS for r in done) / len(done),
        n_episodes=len(done),
    )
