import sys

from app.cli import main
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except Exception as e:
        logger.critical(f"Unexpected failure: {str(e)}", exc_info=True)
        sys.exit(1)
