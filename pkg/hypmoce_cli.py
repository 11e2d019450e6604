#!/usr/bin/env python3
"""
hypmoce CLI - Command Line Interface

Runs the hypmoce commands from a source checkout without installing the package.
"""

import os
import sys

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from hypmoce.main import cli


if __name__ == '__main__':
    cli()
