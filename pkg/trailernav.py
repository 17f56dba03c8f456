#!/usr/bin/env python3
"""Command-line launcher for the trailer_nav package."""

import sys

from trailer_nav.cli import main

if __name__ == '__main__':
    sys.exit(main())
