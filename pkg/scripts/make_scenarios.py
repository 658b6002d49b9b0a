#!/usr/bin/env python3
"""Regenerate the bundled scenario configs under configs/.

The builders are deterministic (fixed seeds), so the generated files are
stable and checked in.  Run from the repository root:

    python3 scripts/make_scenarios.py [outdir]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vdlo.scenarios import write_scenario  # noqa: E402


def main() -> None:
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parent.parent / "configs"
    for name in ("prandtl", "inclusion", "kalthoff"):
        outdir = root / name
        write_scenario(name, outdir)
        print(f"wrote {outdir}/{{mesh,load,config}}.json")


if __name__ == "__main__":
    main()
