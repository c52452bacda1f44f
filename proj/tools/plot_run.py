#!/usr/bin/env python3
"""Render the CSV outputs of a `battkit run` directory as PNGs.

Usage: plot_run.py <run_dir>

The core toolkit only emits data files; this is the optional renderer.
Requires matplotlib.
"""

import csv
import sys
from pathlib import Path


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def column(rows, name, cast=float):
    out = []
    for r in rows:
        try:
            out.append(cast(r[name]))
        except (KeyError, ValueError):
            out.append(float("nan"))
    return out


def main():
    if len(sys.argv) != 2:
        print(__doc__)
        return 1
    run_dir = Path(sys.argv[1])
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    traj = read_csv(run_dir / "trajectory.csv")
    t = [v / 3600.0 for v in column(traj, "t_s")]

    fig, ax = plt.subplots(figsize=(10, 4))
    ax.plot(t, column(traj, "soc_true"), label="true SOC", lw=0.8)
    ax.plot(t, column(traj, "soc_hat"), label="estimated SOC", lw=0.8)
    base = run_dir / "baseline_trajectory.csv"
    if base.exists():
        b = read_csv(base)
        ax.plot([v / 3600.0 for v in column(b, "t_s")], column(b, "soc_hat"),
                label="continuous estimation", lw=0.8, alpha=0.7)
    ax.set_xlabel("time [h]")
    ax.set_ylabel("SOC")
    ax.legend()
    fig.tight_layout()
    fig.savefig(run_dir / "soc.png", dpi=150)

    fig, ax = plt.subplots(figsize=(10, 3))
    ax.plot(t, [v * 1e3 for v in column(traj, "dv_hat")], lw=0.8)
    ax.set_xlabel("time [h]")
    ax.set_ylabel("estimated bias [mV]")
    fig.tight_layout()
    fig.savefig(run_dir / "bias.png", dpi=150)

    per = read_csv(run_dir / "percycle.csv")
    cycles = column(per, "cycle")
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.2))
    a1.bar(cycles, column(per, "rmse_soc_pct"))
    a1.set_xlabel("cycle")
    a1.set_ylabel("SOC RMSE [%]")
    a2.bar(cycles, column(per, "re_qb_pct"))
    a2.set_xlabel("cycle")
    a2.set_ylabel("capacity RE [%]")
    fig.tight_layout()
    fig.savefig(run_dir / "percycle.png", dpi=150)

    print(f"wrote {run_dir}/soc.png, bias.png, percycle.png")
    return 0


if __name__ == "__main__":
    sys.exit(main())
