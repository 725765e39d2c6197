"""Static SVG figures via matplotlib (Agg backend, no display needed).

SVG output is made byte-stable by fixing the hash salt and dropping the
date metadata, so reruns produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "topolattice", "svg.fonttype": "path"}


def _save(fig, path) -> Path:
    p = Path(path)
    with matplotlib.rc_context(_RC):
        fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    return p


def heatmap_svg(path, M, labels, title: str = "", xlabel: str = "idler site",
                ylabel: str = "signal site", cmap: str = "viridis") -> Path:
    """Heatmap of a square map indexed by centre-zero site labels."""
    M = np.asarray(M, dtype=float)
    labels = np.asarray(labels)
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    ext = (labels[0] - 0.5, labels[-1] + 0.5, labels[-1] + 0.5, labels[0] - 0.5)
    im = ax.imshow(M, cmap=cmap, extent=ext, interpolation="nearest")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def matrix_svg(path, M, row_labels, col_labels, title: str = "") -> Path:
    """Small annotated matrix, e.g. interface-mode populations."""
    M = np.asarray(M, dtype=float)
    fig, ax = plt.subplots(figsize=(3.8, 3.4))
    im = ax.imshow(M, cmap="magma", interpolation="nearest")
    ax.set_xticks(range(len(col_labels)), col_labels)
    ax.set_yticks(range(len(row_labels)), row_labels)
    mx = M.max() if M.size and M.max() > 0 else 1.0
    for (i, j), v in np.ndenumerate(M):
        ax.text(j, i, f"{v / mx:.2f}", ha="center", va="center",
                color="w" if v < 0.6 * mx else "k", fontsize=7)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def bands_svg(path, k, bands, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    ax.plot(k, bands, color="k", lw=1)
    ax.set_xlim(k[0], k[-1])
    ax.set_xlabel("k a")
    ax.set_ylabel("propagation constant")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def phase_svg(path, t, tau, nu, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    data = np.where(np.asarray(nu) < 0, np.nan, nu).T
    im = ax.pcolormesh(t, tau, data, shading="nearest", cmap="cividis")
    ax.set_xlabel("t")
    ax.set_ylabel("tau")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="total winding")
    fig.tight_layout()
    return _save(fig, path)


def ensemble_svg(path, summaries: list[dict]) -> Path:
    """Mean K and F (with standard deviation bars) against disorder level."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.0, 3.2))
    for s in summaries:
        lv = [x["level"] for x in s["levels"]]
        a1.errorbar(lv, [x["K_mean"] for x in s["levels"]], [x["K_std"] for x in s["levels"]],
                    marker="o", capsize=2, label=s["name"])
        a2.errorbar(lv, [x["F_mean"] for x in s["levels"]], [x["F_std"] for x in s["levels"]],
                    marker="o", capsize=2, label=s["name"])
    a1.set_xlabel("disorder level")
    a1.set_ylabel("Schmidt number K")
    a2.set_xlabel("disorder level")
    a2.set_ylabel("fidelity F")
    a1.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def profile_svg(path, labels, powers, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.bar(labels, powers, color="tab:blue")
    ax.set_xlabel("site")
    ax.set_ylabel("output power")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
