"""Optional PNG figures drawn from an experiment's CSV outputs."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _load(path: Path):
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    return np.atleast_1d(data)


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def make_figures(experiment: str, out: Path) -> list[str]:
    """Write figures for ``experiment`` into ``out``; returns the file names."""
    plt = _figure()
    made = []

    def save(fig, name):
        fig.tight_layout()
        fig.savefig(out / name, dpi=120)
        plt.close(fig)
        made.append(name)

    if experiment == "shrinker":
        fig, ax = plt.subplots(figsize=(6, 4))
        for f in sorted(out.glob("shrinker_a*.csv")):
            d = _load(f)
            ax.plot(d["y"], d["v"], label=f.stem.split("_a")[1])
        ax.set_xlabel("y")
        ax.set_ylabel("v")
        ax.legend(title="a")
        save(fig, "shrinker_profiles.png")
    elif experiment == "barrier":
        d = _load(out / "barrier_residual.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        sc = ax.scatter(d["r"], d["theta"], c=d["residual"], s=2, cmap="viridis")
        fig.colorbar(sc, ax=ax, label="residual / W")
        ax.set_xlabel("r")
        ax.set_ylabel("theta")
        save(fig, "barrier_residual.png")
    elif experiment == "flow":
        d = _load(out / "flow_observables.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(d["tau"], d["alpha2"] * np.abs(d["tau"]) * np.sqrt(8), label="sqrt 8 alpha2 |tau|")
        ax.axhline(-1.0, color="k", lw=0.8, ls="--")
        ax.set_xlabel("tau")
        ax.legend()
        save(fig, "flow_alpha2.png")
    elif experiment == "mz":
        d = _load(out / "xy_confinement.csv")
        fp = _load(out / "xy_fixed_points.csv")
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.scatter(d["x0"], d["y0"], s=8, label="starts")
        ax.scatter(fp["x"], fp["y"], marker="x", color="r", label="fixed points")
        xs = np.linspace(0, 2, 200)
        ax.plot(xs, xs**2, "k--", lw=0.8)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.legend()
        save(fig, "xy_plane.png")
    elif experiment == "spectral":
        d = _load(out / "spectral_eigen.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(np.arange(d.size), np.maximum(d["residual"], 1e-18), "o")
        ax.set_xticks(np.arange(d.size), d["label"], rotation=90)
        ax.set_ylabel("relative eigen-residual")
        save(fig, "spectral_residuals.png")
    elif experiment == "compare":
        d = _load(out / "compare_heat.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        for t in np.unique(d["t"])[::6]:
            m = d["t"] == t
            ax.plot(d["x"][m], d["psi"][m], label=f"t={t:.3g}")
        ax.set_xscale("log")
        ax.set_xlabel("x")
        ax.set_ylabel("psi")
        ax.legend()
        save(fig, "heat_profiles.png")
    return made
