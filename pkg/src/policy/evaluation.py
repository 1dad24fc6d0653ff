from dataclasses import dataclass
from typing import Tuple

import numpy as np


class EmptyEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalScore:
    metric_name: str
    mean_score: float
    std: float
    min_score: float
    max_score: float
    per_episode: Tuple[float, ...]


def evaluate_policy(results, metric_name="packet_loss"):
    """
    Expected score over episodes

    Args:
        results: EpisodeResult objects (or plain per-episode losses)

    Returns:
        EvalScore with mean, population std and range
    """
    losses = [float(getattr(r, "packet_loss", r)) for r in results]
    if not losses:
        raise EmptyEvaluationError("Cannot evaluate a policy on zero episodes")
    values = np.array(losses, dtype=float)
    return EvalScore(
        metric_name=metric_name,
        mean_score=float(values.sum() / len(values)),
        std=float(values.std()),
        min_score=float(values.min()),
        max_score=float(values.max()),
        per_episode=tuple(losses),
    )
