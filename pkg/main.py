#!/usr/bin/env python3
"""
fracdual launcher - run an experiment without installing the package

    python main.py run configs/duality_convergence.json
"""

import sys

from fracdual.cli import main

if __name__ == "__main__":
    sys.exit(main())
