import sys

from experiments.cli import main
from utils.env_validation import settings
from utils.logging_config import configure_logging

# Configure logging at the entry point
configure_logging(settings.LOG_LEVEL)


if __name__ == "__main__":
    sys.exit(main())
