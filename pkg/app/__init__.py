from pathlib import Path
from typing import Union

from app.services.artifact_store import ArtifactStore
from app.services.pipeline_service import PipelineService
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)


def create_pipeline(out_dir: Union[str, Path]) -> PipelineService:
    """Create a PipelineService writing its artifacts to `out_dir`."""
    store = ArtifactStore(out_dir)
    logger.info(f"Pipeline initialized with output directory {store.directory}.")
    return PipelineService(store)
