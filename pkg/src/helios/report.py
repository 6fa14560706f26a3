"""Report output: tab-delimited data files plus matplotlib figures.

Every CLI report writes a plain delimited data file any plotting tool can
consume, and renders a PNG of the same data next to it.  Rendering is
always to file (Agg backend); nothing interactive."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def write_delimited(path, header, rows, delimiter: str = "\t") -> None:
    with open(path, "w") as f:
        f.write(delimiter.join(header) + "\n")
        for row in rows:
            f.write(delimiter.join(_fmt(v) for v in row) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def figure_path_for(data_path) -> str:
    base = str(data_path)
    stem = base.rsplit(".", 1)[0] if "." in base.rsplit("/", 1)[-1] else base
    return stem + ".png"


def sweep_figure(path, x, y, y_fit, xlabel: str, ylabel: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, "go", label="data")
    ax.plot(x, y_fit, "g-", label="fit")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def anova_figure(path, anova, response_name: str) -> None:
    names = [name for name, _, _ in anova.effects]
    scores = [min(f, 1e12) for _, f, _ in anova.effects]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, scores, color=["#c33", "#3a3", "#36c"])
    ax.axhline(anova.f_critical, color="k", linestyle="--",
               label=f"critical value {anova.f_critical:g}")
    ax.set_yscale("log")
    ax.set_ylabel("F-score")
    ax.set_title(f"effect screen on {response_name}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def inverse_figure(path, channel_names, target, predicted, predicted_std,
                   measured_mean, measured_std) -> None:
    idx = np.arange(len(channel_names))
    width = 0.35
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(idx - width / 2, predicted, width, yerr=predicted_std,
           capsize=4, label="predicted")
    ax.bar(idx + width / 2, measured_mean, width, yerr=measured_std,
           capsize=4, label="measured")
    ax.plot(idx, target, "k_", markersize=24, label="target")
    ax.set_xticks(idx, channel_names)
    ax.set_ylabel("counts")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
