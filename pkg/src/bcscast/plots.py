"""Rate-distortion figures for the report path."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "lines.markersize": 5,
}

_MARKERS = ["o", "s", "^", "d", "v", "*", "x"]


def plot_rd_curves(curves: dict, out_dir: str) -> list:
    """Write one figure per metric: quality against gross sample rate.

    `curves` maps (label, csnr) to (rates, psnr list, ms_ssim list); one
    panel per csnr, one line per label. Returns the written paths.
    """
    csnrs = sorted({k[1] for k in curves}, key=str)
    labels = sorted({k[0] for k in curves})
    written = []
    specs = [("psnr_db", 1, "PSNR (dB)", "rd_psnr.png"),
             ("ms_ssim", 2, "MS-SSIM", "rd_msssim.png")]
    with plt.rc_context(_STYLE):
        for _metric, slot, ylabel, fname in specs:
            ncol = max(len(csnrs), 1)
            fig, axes = plt.subplots(1, ncol, figsize=(4.2 * ncol, 3.4),
                                     squeeze=False, sharey=True)
            for ax, csnr in zip(axes[0], csnrs):
                for i, label in enumerate(labels):
                    key = (label, csnr)
                    if key not in curves:
                        continue
                    pts = curves[key]
                    ax.plot([r / 1e3 for r in pts[0]], pts[slot],
                            marker=_MARKERS[i % len(_MARKERS)], label=label)
                title = "noiseless" if csnr in ("", None) else f"CSNR {csnr} dB"
                ax.set_title(title)
                ax.set_xlabel("rate (ksamples)")
            axes[0][0].set_ylabel(ylabel)
            axes[0][0].legend(frameon=False)
            fig.tight_layout()
            path = os.path.join(out_dir, fname)
            fig.savefig(path)
            plt.close(fig)
            written.append(path)
    return written
