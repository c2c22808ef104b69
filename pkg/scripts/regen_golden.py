#!/usr/bin/env python3
"""Regenerate the golden trace files under tests/data/.

Run this only after an intentional behaviour change, then review the diff:
the goldens pin the exact event sequence of the bundled fault scenarios.
"""

import pathlib
import sys

from ansim.runner import run_scenario
from ansim.scenario import load_scenario

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"
GOLDEN_SCENARIOS = ("fire-sensor-dropout",)


def main() -> int:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    for name in GOLDEN_SCENARIOS:
        cfg = load_scenario(name)
        result = run_scenario(cfg, with_trace=True)
        path = DATA_DIR / f"{name}.trace"
        path.write_text("\n".join(result.trace) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(result.trace)} lines)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
