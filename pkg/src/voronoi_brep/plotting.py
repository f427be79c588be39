"""Report figures (written to files with the Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grids import NONE  # noqa: E402
from .metrics import CLASSES  # noqa: E402


def _cell_colors(cell_slice):
    """Stable pseudo-random colour per cell id, black on boundary voxels."""
    ids = np.where(cell_slice == NONE, 0, cell_slice + 1).astype(np.uint64)
    h = (ids * np.uint64(2654435761)) % np.uint64(1 << 24)
    rgb = np.stack([(h >> np.uint64(s)) & np.uint64(255) for s in (16, 8, 0)], axis=-1).astype(float) / 255.0
    rgb = 0.25 + 0.75 * rgb
    rgb[cell_slice == NONE] = 0.0
    return rgb


def plot_slices(path, udf, boundary, cells, axis: int = 2, index: int = None):
    """UDF, boundary probability and cells on one axis-aligned slice."""
    r = udf.r
    index = r // 2 if index is None else index
    take = lambda a: np.take(a, index, axis=axis)  # noqa: E731
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    im = axes[0].imshow(take(udf.d).T, origin="lower", cmap="viridis")
    fig.colorbar(im, ax=axes[0], fraction=0.046)
    axes[0].set_title("distance")
    axes[1].imshow(take(boundary.p).T, origin="lower", cmap="gray_r", vmin=0, vmax=1)
    axes[1].set_title("boundary probability")
    axes[2].imshow(np.transpose(_cell_colors(take(cells.cell_of)), (1, 0, 2)), origin="lower")
    axes[2].set_title(f"cells ({cells.n_cells})")
    names = "xyz".replace("xyz"[axis], "")
    for ax in axes:
        ax.set_xlabel(names[0])
        ax.set_ylabel(names[1])
    fig.suptitle(f"slice {'xyz'[axis]} = {index}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_model(path, samples: dict, title: str = ""):
    """Scatter of per-class primitive samples (``metrics.model_samples`` layout)."""
    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d")
    cmap = plt.get_cmap("tab20")
    for k, pts in enumerate(samples.get("surface", [])):
        sub = pts[:: max(1, len(pts) // 1500)]
        ax.scatter(sub[:, 0], sub[:, 1], sub[:, 2], s=1, color=cmap(k % 20), alpha=0.4)
    for pts in samples.get("curve", []):
        ax.plot(pts[:, 0], pts[:, 1], pts[:, 2], ".", ms=1, color="k")
    if samples.get("vertex"):
        v = np.concatenate(samples["vertex"])
        ax.scatter(v[:, 0], v[:, 1], v[:, 2], s=30, color="red", depthshade=False)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_zlim(0, 1)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_detection(path, reports):
    """Precision, recall and F1 against the matching threshold, per class."""
    ts = [r.threshold for r in reports]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), sharey=True)
    for ax, cls in zip(axes, CLASSES):
        for key, style in (("precision", "o-"), ("recall", "s--"), ("f1", "^-")):
            ax.plot(ts, [getattr(r[cls], key) for r in reports], style, label=key)
        ax.set_xscale("log")
        ax.set_title(cls)
        ax.set_xlabel("threshold")
        ax.set_ylim(-0.05, 1.05)
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
