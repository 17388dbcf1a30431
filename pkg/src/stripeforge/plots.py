"""Report figures rendered from run / comparison CSV files.

Figures are written next to the delimited outputs; no interactive backend
is required.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def plot_run_timeline(run_cols: dict, out_path) -> Path:
    """Predicted class and distance versus frame for one run CSV."""
    fig, ax = plt.subplots(figsize=(8, 3.2))
    frames = run_cols["frame"]
    correct = run_cols["pred"] == run_cols["gt"]
    ax.scatter(frames[correct], run_cols["pred"][correct], s=8, color="tab:green",
               label="ground truth")
    ax.scatter(frames[~correct], run_cols["pred"][~correct], s=8, color="tab:red",
               label="misclassified")
    ax.set_xlabel("frame")
    ax.set_ylabel("predicted class")
    ax.set_yticks(np.unique(run_cols["pred"]))
    ax2 = ax.twinx()
    ax2.plot(frames, run_cols["z_m"], color="tab:blue", lw=0.8, alpha=0.6)
    ax2.set_ylabel("distance (m)", color="tab:blue")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_stripe_profile(run_cols: dict, out_path) -> Path:
    """Sign span (n_up, n_up + n_sign) over the pass."""
    fig, ax = plt.subplots(figsize=(8, 3.2))
    frames = run_cols["frame"]
    ax.fill_between(frames, run_cols["n_up"],
                    run_cols["n_up"] + run_cols["n_sign"],
                    alpha=0.4, color="tab:orange", label="sign span")
    ax.plot(frames, run_cols["n_up"], color="tab:orange", lw=0.8)
    ax.invert_yaxis()
    ax.set_xlabel("frame")
    ax.set_ylabel("scanline")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_mode_comparison(summary: dict[str, dict], out_path) -> Path:
    """Grouped bars: mean MR, PMCR and entropy per attack mode."""
    modes = list(summary)
    x = np.arange(len(modes))
    fig, axes = plt.subplots(1, 3, figsize=(9.5, 3.0))
    for ax, key, label in zip(
            axes,
            ("mean_mr", "mean_pmcr", "mean_entropy"),
            ("mean MR", "mean PMCR", "mean entropy (bits)")):
        ax.bar(x, [summary[m][key] for m in modes], color="tab:blue", width=0.6)
        ax.set_xticks(x)
        ax.set_xticklabels(modes, rotation=20, fontsize=8)
        ax.set_title(label, fontsize=9)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_distance_profile(bins, out_path) -> Path:
    """MR and PMCR per one-meter distance bin."""
    centers = [(b.z_lo + b.z_hi) / 2 for b in bins]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(centers, [b.mr for b in bins], "o-", label="MR", ms=3)
    ax.plot(centers, [b.pmcr for b in bins], "s-", label="PMCR", ms=3)
    ax.set_xlabel("sign-camera distance (m)")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
