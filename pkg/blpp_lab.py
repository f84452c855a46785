#!/usr/bin/env python3
"""
BLPP Lab - command-line entry point.

    python blpp_lab.py <experiment> [--flag value]...
    python blpp_lab.py --list
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
