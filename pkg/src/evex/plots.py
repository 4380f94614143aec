"""Figure rendering for the report paths (heatmaps and training curves).

Every delimited output the CLI writes can be accompanied by a rendered PNG;
matplotlib runs on the Agg backend so this works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_heatmap(matrix, labels_x, labels_y, path, title=None, label_step=1):
    matrix = np.asarray(matrix)
    fig, ax = plt.subplots(figsize=(max(4.0, matrix.shape[1] * 0.3),
                                    max(3.5, matrix.shape[0] * 0.3)))
    im = ax.imshow(matrix, cmap="Reds", vmin=0.0, aspect="auto")
    ax.set_xticks(range(0, len(labels_x), label_step))
    ax.set_xticklabels(labels_x[::label_step], rotation=90, fontsize=6)
    ax.set_yticks(range(0, len(labels_y), label_step))
    ax.set_yticklabels(labels_y[::label_step], fontsize=6)
    fig.colorbar(im, ax=ax, fraction=0.046)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_attention_heatmap(prediction, path, title=None):
    from .evaluation import attention_matrix

    matrix = attention_matrix(prediction)
    save_heatmap(matrix, prediction.tokens, prediction.tokens, path, title=title)


def save_cooccurrence_heatmap(matrix, subtypes, path, title="event co-occurrence"):
    save_heatmap(matrix, list(subtypes), list(subtypes), path, title=title)


def save_training_curves(metric_log, path):
    if not metric_log:
        raise ValueError("empty metric log")
    epochs = [r["epoch"] for r in metric_log]
    loss = [r["train_loss"] for r in metric_log]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, loss, marker=".")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    for stage, style in (("trigger_cls", "-"), ("argument_role", "--")):
        ax2.plot(epochs, [r["dev"][stage]["f1"] for r in metric_log], style, label=stage)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("dev F1")
    ax2.set_ylim(-0.02, 1.02)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
