#!/usr/bin/env python3
# --------------------------------------------------------
# decohere executable
# --------------------------------------------------------
import sys

from decohere.cli import main

if __name__ == '__main__':
    sys.exit(main())
