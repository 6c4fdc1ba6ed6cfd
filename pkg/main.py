#!/usr/bin/env python3
"""Stochastic characteristics entry point"""

import sys

try:
    import numpy  # noqa
    import scipy  # noqa
    import pydantic  # noqa
    import aiofiles  # noqa
except ImportError as e:
    print(f"Critical import failed: {e}")
    print("Please run: pip install -r requirements.txt")
    sys.exit(1)

if __name__ == "__main__":
    from src.cli.main import main

    sys.exit(main())
