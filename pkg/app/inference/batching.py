from typing import List

import numpy as np

from app.utils.errors import InvalidArgumentError


def _check_batch_size(size: int, m: int) -> None:
    if m < 1:
        raise InvalidArgumentError(f"Batch size must be >= 1, got {m}.")
    if m > size:
        raise InvalidArgumentError(f"Batch size {m} exceeds the {size} active locations.")


def sample_minibatch(active: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw m distinct locations uniformly from the active set.

    Args:
        active (np.ndarray): Positions of the active locations.
        m (int): Batch size, 1 <= m <= len(active).
        rng (np.random.Generator): Random stream.

    Returns:
        np.ndarray: The selected positions.
    """
    active = np.asarray(active)
    _check_batch_size(len(active), m)
    if m == len(active):
        return active.copy()
    return rng.choice(active, size=m, replace=False)


def epoch_batches(active: np.ndarray, m: int, rng: np.random.Generator) -> List[np.ndarray]:
    """
    Shuffle the active set and split it into consecutive batches of size m.

    The last batch is shorter when m does not divide the set size. Each location appears
    in exactly one batch. A full-size batch keeps the original order.
    """
    active = np.asarray(active)
    _check_batch_size(len(active), m)
    if m == len(active):
        return [active.copy()]
    order = rng.permutation(active)
    return [order[start : start + m] for start in range(0, len(order), m)]
