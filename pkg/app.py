# coding: utf-8
"""
SPANSENT
========
Command-line entry point: ``python app.py <command> --help``.
"""

import sys

from modules.cli import main

if __name__ == "__main__":
    sys.exit(main())
