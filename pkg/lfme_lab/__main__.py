#!/usr/bin/env python3
"""
Main entry point for lfme_lab module

This allows running the module with: python -m lfme_lab
"""

import sys

from .main import lfme_cli

if __name__ == "__main__":
    sys.exit(lfme_cli())
