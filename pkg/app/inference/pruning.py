from dataclasses import dataclass
from enum import Enum
from typing import Dict

import numpy as np

from app.geodata.location_table import LocationTable
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)


class GraphVariant(str, Enum):
    """Per-location graph after local pruning."""

    FULL = "full"
    NO_DAMAGE = "no_damage"
    REMOVED = "removed"


@dataclass(frozen=True)
class PruneResult:
    """
    Outcome of local pruning.

    `active` indexes the table rows that stay in the model; `has_bd` is aligned with
    `active`. `variants` holds one GraphVariant per table row.
    """

    active: np.ndarray
    has_bd: np.ndarray
    variants: np.ndarray

    @property
    def pruned_count(self) -> int:
        """Locations whose graph lost at least one node."""
        return int(np.count_nonzero(self.variants != GraphVariant.FULL.value))

    @property
    def removed_count(self) -> int:
        return int(np.count_nonzero(self.variants == GraphVariant.REMOVED.value))

    @property
    def damage_node_count(self) -> int:
        return int(np.count_nonzero(self.has_bd))

    def counts(self) -> Dict[str, int]:
        return {variant.value: int(np.count_nonzero(self.variants == variant.value)) for variant in GraphVariant}


def prune(table: LocationTable, enabled: bool = True) -> PruneResult:
    """
    Drop nodes that cannot be active at each location.

    A location without a building footprint loses its damage node, so y keeps x_F as its
    only latent parent. A location with neither an observation nor a footprint is removed.
    With pruning disabled every location keeps the full graph.

    Args:
        table (LocationTable): Locations with footprint flags.
        enabled (bool): Apply pruning.

    Returns:
        PruneResult: Active rows, damage-node mask and per-row variant tags.
    """
    n = len(table)
    if not enabled:
        variants = np.full(n, GraphVariant.FULL.value, dtype=object)
        return PruneResult(active=np.arange(n), has_bd=np.ones(n, dtype=bool), variants=variants)

    variants = np.where(table.footprint, GraphVariant.FULL.value, GraphVariant.NO_DAMAGE.value).astype(object)
    removed = ~table.footprint & ~table.has_observation
    variants[removed] = GraphVariant.REMOVED.value
    active = np.flatnonzero(~removed)
    result = PruneResult(active=active, has_bd=table.footprint[active].copy(), variants=variants)
    logger.info(f"Pruning kept {len(active)} of {n} locations: {result.counts()}.")
    return result
