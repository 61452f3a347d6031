#!/usr/bin/env python

"""Score a trained city model on a held-out split."""

# Core Library modules
import logging
from typing import Dict, Sequence

# Third party modules
import numpy as np
from scipy.special import logsumexp

# First party modules
import trajtoolkit.data as data
from trajtoolkit.model import HalfOpenTransformer
from trajtoolkit.tensor import Tape

logger = logging.getLogger(__name__)


def score_split(
    model: HalfOpenTransformer,
    trajectories: Sequence[data.Trajectory],
    batch_size: int = 32,
) -> Dict[str, float]:
    """
    Evaluate next-location prediction on ``trajectories``.

    Returns
    -------
    Dict[str, float]
        ``loss`` (mean negative log-likelihood per predicted visit), ``top1``
        and ``top5`` accuracy, and ``count`` of predicted visits.
    """
    config = model.config
    total_loss = 0.0
    hits = {1: 0, 5: 0}
    count = 0
    batches = data.batch(
        trajectories, batch_size, config.max_seq_len, seed=None, bos_id=config.bos_id
    )
    for batch in batches:
        tape = Tape(enabled=False)
        logits = model.forward(tape, batch.ids, batch.mask).data[:, :-1]
        targets = batch.ids[:, 1:]
        valid = batch.mask[:, 1:]
        log_probs = logits - logsumexp(logits, axis=-1, keepdims=True)
        picked = np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]
        total_loss -= float(picked[valid].sum())
        ranking = np.argsort(-logits, axis=-1, kind="stable")
        for k in hits:
            in_top = (ranking[..., :k] == targets[..., None]).any(axis=-1)
            hits[k] += int(in_top[valid].sum())
        count += int(valid.sum())
    if count == 0:
        raise ValueError("split has no position to predict")
    return {
        "loss": total_loss / count,
        "top1": hits[1] / count,
        "top5": hits[5] / count,
        "count": float(count),
    }


def main(model: HalfOpenTransformer, trajectories, verbose=True) -> Dict[str, float]:
    """Score ``model`` and log the result."""
    scores = score_split(model, trajectories)
    if verbose:
        logger.info(
            "Loss: %0.4f, top-1: %0.2f%%, top-5: %0.2f%% over %i visits",
            scores["loss"],
            100 * scores["top1"],
            100 * scores["top5"],
            scores["count"],
        )
    return scores
