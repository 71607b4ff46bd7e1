"""Optional PNG figures rendered next to the CSV artifacts.

Only imported when the caller asks for plots, so the headless CSV path never
touches matplotlib.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    # fixed metadata keeps the PNG bytes stable between reruns
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def _histograms(data: dict, out: Path, stem: str, xlabel: str) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for tag in ("synchronized", "naive"):
        values = np.asarray(data[tag])
        ax.hist(values, bins=100, histtype="step", density=True, label=tag)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    ax.legend()
    return _save(fig, out / f"{stem}.png")


def _sweep(data: dict, out: Path, stem: str) -> list[Path]:
    schema, rows = data["schema"], data["rows"]
    param = schema[0]
    col = {name: i for i, name in enumerate(schema)}
    files = []
    for metric, ylabel in (("full_match_rate", "full match rate"), ("reaction_mean_ms", "mean reaction (ms)")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for mode in dict.fromkeys(r[col["mode"]] for r in rows):
            sel = [r for r in rows if r[col["mode"]] == mode]
            ax.plot([r[0] for r in sel], [r[col[metric]] for r in sel], marker="o", label=mode)
        if metric == "full_match_rate":
            sel = [r for r in rows if r[col["mode"]] == "Adaptive"]
            ax.plot([r[0] for r in sel], [r[col["theoretical"]] for r in sel], "k--", label="closed form")
        ax.set_xlabel(param)
        ax.set_ylabel(ylabel)
        ax.legend()
        files.append(_save(fig, out / f"{stem}_{metric}.png"))
    return files


def _bench(data: dict, out: Path) -> Path:
    schema, table = data["schema"], data["table"]
    classes = schema[1:-1]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / len(table)
    x = np.arange(len(classes))
    for i, row in enumerate(table):
        ax.bar(x + i * width, np.nan_to_num(row[1:-1]), width, label=row[0])
    ax.set_xticks(x + 0.4 - width / 2, classes)
    ax.set_ylabel("AP@0.5")
    ax.set_ylim(0, 1.05)
    ax.legend()
    return _save(fig, out / "fusion_bench.png")


def render(experiment: str, data: dict, out: Path) -> list[Path]:
    out = Path(out)
    if experiment == "timing_hist":
        return [_histograms(data, out, "timing_errors", "acquisition error (ms)")]
    if experiment == "minmax_delay":
        return [_histograms(data, out, "minmax_delay", "min-max acquisition spread (ms)")]
    if experiment == "fusion_bench":
        return [_bench(data, out)]
    return _sweep(data, out, experiment)
