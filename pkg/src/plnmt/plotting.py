"""Figures written next to the CLI's text outputs (PNG via the Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
from matplotlib import pyplot as plt  # noqa: E402

STYLE = {"figure.dpi": 100, "axes.spines.top": False, "axes.spines.right": False,
         "font.size": 9}


def code_distribution_figure(bins, path, title: str = "planner code usage") -> None:
    """Bar chart of ``CodeBin`` fractions in the given (descending) order."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * len(bins) + 1.5), 3.2))
        labels = [b.label for b in bins]
        ax.bar(range(len(bins)), [100.0 * b.fraction for b in bins], color="#4c72b0")
        ax.set_xticks(range(len(bins)))
        ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel("sentences (%)")
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def loss_curve_figure(history, path, title: str = "training loss") -> None:
    """Per-step ``loss`` (and per-epoch ``valid_loss`` if present) against step."""
    steps = [h["step"] for h in history if "loss" in h]
    losses = [h["loss"] for h in history if "loss" in h]
    vsteps = [h.get("step", h.get("epoch")) for h in history if "valid_loss" in h]
    vlosses = [h["valid_loss"] for h in history if "valid_loss" in h]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        if losses:
            ax.plot(steps, losses, lw=0.8, alpha=0.7, label="train")
        if vlosses:
            ax.plot(vsteps, vlosses, "o-", ms=3, label="validation")
        ax.set_xlabel("step" if losses else "epoch")
        ax.set_ylabel("loss")
        ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
