#!/usr/bin/env python3
"""Reproduce the dynamic curve-swap experiment on the virtual clock.

Plays the bundled voltage profile (two triangles 230 -> 255 -> 230 V),
pushes VVC2 through the cloud's updateGatewayCache route at t=120 s, and
shows the reactive-power envelope shrinking from 45.4% to 40.5% of
nameplate VA.

Run:  python3 demos/04_swap_experiment.py
"""

import json
from pathlib import Path

from gridgate.harness import emit, load_plan, run, summarize


def sparkline(values, width=80):
    blocks = " .:-=+*#%@"
    lo, hi = min(values), max(values)
    span = (hi - lo) or 1.0
    step = max(len(values) // width, 1)
    cells = [values[i] for i in range(0, len(values), step)]
    return "".join(blocks[int((v - lo) / span * (len(blocks) - 1))] for v in cells)


def main():
    plan = load_plan("vvc_swap_demo")
    series = run(plan)
    out = Path(__file__).with_name("swap_results.csv")
    emit(series, str(out), "csv")

    q = [abs(r.reactive_power_var) for r in series.rows]
    print("|Q| over time (swap at t=120 s):")
    print(sparkline(q))
    swap_idx = next(i for i, r in enumerate(series.rows) if r.curve_id != "VVC1")
    print(f"{'^'.rjust(swap_idx * 80 // len(series.rows))}  curve swap")

    print()
    print(json.dumps(summarize(series), indent=2))
    print(f"\nwrote {out}")
    print("same data via the CLI:  gridgate run --plan vvc_swap_demo --out results.csv")


if __name__ == "__main__":
    main()
