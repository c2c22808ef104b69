#!/usr/bin/env python3
"""Run the three bundled reference scenarios and print a byte-overhead table.

Each case keeps its own security profile (none, signed, signed+encapsulated).
Pass --normalize to rerun every case on the first case's topology so the
comparison is like-for-like, and --csv to save the plotting table.
"""

import argparse
import dataclasses
import json
import sys

from ansim.metrics import ComparisonReport
from ansim.runner import run_scenario
from ansim.scenario import load_scenario

CASES = ("paper-case1", "paper-case2", "paper-case3")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=None,
                        help="seed override for all three runs")
    parser.add_argument("--normalize", action="store_true",
                        help="run every case on the first case's topology")
    parser.add_argument("--csv", metavar="PATH",
                        help="write the per-category byte table here")
    parser.add_argument("--json", metavar="PATH",
                        help="write the full comparison report here")
    args = parser.parse_args()

    cfgs = [load_scenario(name) for name in CASES]
    if args.normalize:
        base = cfgs[0]
        cfgs = [dataclasses.replace(c, nodes=base.nodes, links=base.links,
                                    timers=base.timers,
                                    duration_ms=base.duration_ms)
                for c in cfgs]

    runs = {}
    for cfg in cfgs:
        report = run_scenario(cfg, seed=args.seed).report
        runs[cfg.security.profile] = report
        print(f"{cfg.name:<14} profile={report.profile:<11} "
              f"nodes={len(cfg.nodes)} sent={report.sent:>5} "
              f"wire_bytes={report.wire_bytes:>8}")

    comp = ComparisonReport(scenario="+".join(c.name for c in cfgs),
                            seed=args.seed if args.seed is not None
                            else cfgs[0].seed, runs=runs)
    print(f"\nencapsulated / plain  = {comp.ratio_encap_plain:.3f}")
    print(f"encapsulated / signed = {comp.ratio_encap_auth:.3f}")
    print(f"signed / plain        = {comp.ratio_auth_plain:.3f}")

    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(comp.to_csv())
        print(f"wrote {args.csv}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(comp.to_json_dict(), fh, indent=2)
            fh.write("\n")
        print(f"wrote {args.json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
