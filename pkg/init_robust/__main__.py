#!/usr/bin/env python3
"""
Entry point for python -m init_robust
"""

from . import cli

if __name__ == "__main__":
    cli()
