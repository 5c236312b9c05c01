#!/usr/bin/env python3
"""
Entry point script for the PED command line.

    python run_cli.py toynet ped-run --units 8 --stages 4 --seed 7
"""

import logging
import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from config import get_settings
from ped_prune.cli import main

if __name__ == "__main__":
    settings = get_settings()

    # stdout is reserved for JSON/CSV payloads; diagnostics go to stderr
    handlers = [logging.StreamHandler(sys.stderr)]
    if settings.log_file:
        handlers.append(logging.FileHandler(settings.log_file))
    logging.basicConfig(
        level=settings.log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )

    main()
