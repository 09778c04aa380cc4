"""Static figures for sweep and diagnostic outputs, rendered to image files."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_power_curves", "plot_perm_report", "figure_path_for"]

_STYLE = {
    "figure.figsize": (5.5, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "savefig.dpi": 150,
}


def figure_path_for(csv_path, suffix=".png"):
    """Image path next to a CSV output: ``results.csv`` -> ``results.png``."""
    base = str(csv_path)
    if base.endswith(".csv"):
        base = base[:-4]
    return base + suffix


def plot_power_curves(curves, path, title=None):
    """Power against test size, one line per (method, n_train), stderr as a shaded band."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        n_train_values = {c.n_train for c in curves.values()}
        for (method, n_train), c in sorted(curves.items()):
            label = method if len(n_train_values) == 1 else f"{method} (n={n_train})"
            m = np.asarray(c.test_sizes, dtype=float)
            p = np.asarray(c.power)
            se = np.nan_to_num(np.asarray(c.stderr, dtype=float))
            (line,) = ax.plot(m, p, marker="o", label=label)
            ax.fill_between(m, np.clip(p - se, 0, 1), np.clip(p + se, 0, 1), color=line.get_color(), alpha=0.2)
        ax.set_xscale("log", base=2)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("test size m")
        ax.set_ylabel("power")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_perm_report(report, path, title=None):
    """Asymptotic, simulated-threshold and permutation power from ``perm_vs_asymptotics_report``."""
    rows = report["rows"]
    m = [r["m"] for r in rows]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        asym = [np.nan if r["asymptotic"] is None else r["asymptotic"] for r in rows]
        ax.plot(m, asym, marker="o", label="asymptotic")
        ax.plot(m, [r["simulated"] for r in rows], marker="s", label="simulated threshold")
        ax.plot(m, [r["permutation"] for r in rows], marker="^", label="permutation")
        ax.set_xscale("log", base=2)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("test size m")
        ax.set_ylabel("power")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
