import os
import sys

# Prefer an in-tree build when one is pointed at; otherwise use the installed package.
build = os.environ.get("LEAP_PYTHON_BUILD")
if build:
    sys.path.insert(0, build)
