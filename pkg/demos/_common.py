"""Shared helpers for the demo scripts."""

import os
from pathlib import Path

from srgcl.graph import load_tudataset

HERE = Path(__file__).resolve().parent
DATA = Path(os.environ.get("SRGCL_DATA", HERE.parent / "tests" / "data"))


def mutag():
    root = DATA / "MUTAG" if (DATA / "MUTAG").exists() else DATA
    return load_tudataset(root, "MUTAG")
