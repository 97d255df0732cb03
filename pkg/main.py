#!/usr/bin/env python3
"""
Toeplitz GOF Entry Point
========================

Forwards to the command line, so `python main.py power-curve ...` works from a
checkout and `python main.py serve` starts the JSON service.
"""

import os
import sys

# Add the src directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

if __name__ == '__main__':
    from src.core.cli import cli_main
    sys.exit(cli_main())
