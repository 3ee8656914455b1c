"""Report writers: JSON summaries, per-sample CSV dumps, and PNG figures.

Every report embeds the run configuration so results stay reproducible from
the artifact alone. Figures render with the Agg backend and are written next
to the delimited output.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def write_json(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2))


def write_csv(path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def metrics_figure(metrics, rows: list[dict], path) -> None:
    """Accuracy bars plus a histogram of per-prediction translation errors."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    names = ["open", "collide", "arm id"]
    values = [metrics.open_acc, metrics.collide_acc, metrics.id_acc]
    ax1.bar(names, values, color="#4878a8")
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("accuracy")
    ax1.set_title(f"binary heads (n={metrics.n_samples})")
    errors = [float(r["trans_error_voxels"]) for r in rows]
    ax2.hist(errors, bins=20, color="#a85448")
    ax2.set_xlabel("translation error (voxels)")
    ax2.set_ylabel("predictions")
    ax2.set_title(f"mean {metrics.trans_error_mean:.2f}, max {metrics.trans_error_max:.2f}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def grid_figure(grid, path) -> None:
    """Max-occupancy projections of a voxel grid along each axis."""
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.6))
    labels = [("y", "z"), ("x", "z"), ("x", "y")]
    for axis, (ax, (xl, yl)) in enumerate(zip(axes, labels)):
        proj = grid.occupancy.max(axis=axis)
        ax.imshow(proj.T, origin="lower", cmap="viridis")
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.set_title(f"max over axis {axis}")
    res = grid.spec.resolution
    fig.suptitle(f"occupancy projections, {res[0]:.1f} voxels/m", y=1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def rollout_figure(outcomes, path) -> None:
    """Per-episode success strip and keyframe counts."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 4), sharex=True)
    succ = np.array([1 if o.success else 0 for o in outcomes])
    colors = ["#2f9e44" if s else "#c92a2a" for s in succ]
    ax1.bar(range(len(outcomes)), np.ones(len(outcomes)), color=colors, width=0.9)
    ax1.set_yticks([])
    ax1.set_title(f"success rate {succ.mean():.2f} over {len(outcomes)} episodes")
    ax2.bar(range(len(outcomes)), [o.keyframes_used for o in outcomes], color="#4878a8")
    ax2.set_xlabel("episode")
    ax2.set_ylabel("keyframes")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def occupancy_histogram_text(grid) -> str:
    """Terminal-friendly histogram of per-voxel point counts."""
    occ = grid.occupancy.ravel()
    filled = occ[occ > 0]
    lines = [
        f"dims {grid.spec.dims}, span {np.round(grid.spec.span, 4).tolist()} m, "
        f"alpha {grid.spec.alpha}",
        f"origin {np.round(grid.spec.origin, 4).tolist()}",
        f"resolution {np.round(grid.spec.resolution, 3).tolist()} voxels/m",
        f"occupied voxels: {filled.size} / {occ.size} "
        f"({100.0 * filled.size / occ.size:.2f}%), total points {int(occ.sum())}",
    ]
    if filled.size:
        edges = [1, 2, 3, 5, 9, 17, 33, int(max(65, filled.max() + 1))]
        for lo, hi in zip(edges[:-1], edges[1:]):
            count = int(((filled >= lo) & (filled < hi)).sum())
            bar = "#" * min(60, count)
            lines.append(f"  {lo:>4}..{hi - 1:<4} {count:>7} {bar}")
    return "\n".join(lines)
