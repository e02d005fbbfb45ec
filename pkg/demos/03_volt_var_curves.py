#!/usr/bin/env python3
"""Inspect the two shipped Volt-VAR curves and their droop shape.

Prints a setpoint table; with matplotlib available, also saves
volt_var_curves.png next to this script.

Run:  python3 demos/03_volt_var_curves.py
"""

from importlib import resources
from pathlib import Path

from gridgate.vvc import parse_curve, setpoint


def main():
    data = resources.files("gridgate.data")
    vvc1 = parse_curve(data.joinpath("vvc1.json").read_bytes(), curve_id="VVC1")
    vvc2 = parse_curve(data.joinpath("vvc2.json").read_bytes(), curve_id="VVC2")

    print(f"{'voltage':>8}   {'VVC1 Q%':>8}   {'VVC2 Q%':>8}")
    for v in (200, 207, 212.75, 218.5, 230, 241.5, 247.25, 253, 260):
        print(f"{v:>8}   {setpoint(vvc1, v):>8.2f}   {setpoint(vvc2, v):>8.2f}")

    print()
    print(f"VVC1 curtails active power to {vvc1.active_power_limit}% while active;")
    print(f"VVC2 restores it to {vvc2.active_power_limit}% with tighter VAr limits.")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed, skipping the plot")
        return

    voltages = [190 + 0.1 * k for k in range(701)]
    fig, ax = plt.subplots(figsize=(7, 4))
    for curve, style in ((vvc1, "-"), (vvc2, "--")):
        ax.plot(voltages, [setpoint(curve, v) for v in voltages], style, label=curve.curve_id)
    ax.set_xlabel("terminal voltage (V)")
    ax.set_ylabel("reactive setpoint (% of nameplate VA)")
    ax.axhline(0, color="gray", lw=0.5)
    ax.legend()
    ax.grid(True, alpha=0.3)
    out = Path(__file__).with_name("volt_var_curves.png")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
