"""Report figures rendered next to the delimited (JSON-lines / CSV) outputs."""

import io

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib.figure import Figure

from nightglow.imgio import atomic_write_bytes

RC = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path, dpi=120):
    buf = io.BytesIO()
    with matplotlib.rc_context(RC):
        fig.savefig(buf, format="png", dpi=dpi, bbox_inches="tight", metadata={"Software": None})
    atomic_write_bytes(path, buf.getvalue())


def plot_apsf(apsf, kernel, path):
    """Angular profile (linear and log) plus the 2D kernel."""
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(10, 3.2))
        ax1, ax2, ax3 = fig.subplots(1, 3)
        center = len(apsf.angles) // 2
        theta = apsf.angles[center:]
        ax1.plot(theta, apsf.weights[center:], lw=1.2)
        ax1.set_xlabel("scattering angle (deg)")
        ax1.set_ylabel("weight")
        ax1.set_title(f"T={apsf.params.T:g}, q={apsf.params.q:g}")
        positive = apsf.weights[center:] > 0
        ax2.semilogy(theta[positive], apsf.weights[center:][positive], lw=1.2)
        ax2.set_xlabel("scattering angle (deg)")
        ax2.set_title("log scale")
        im = ax3.imshow(kernel, cmap="magma", interpolation="nearest")
        ax3.set_title(f"2D kernel {kernel.shape[0]}x{kernel.shape[1]}")
        ax3.set_xticks([])
        ax3.set_yticks([])
        fig.colorbar(im, ax=ax3, fraction=0.046, pad=0.04)
    _save(fig, path)


def plot_batch_report(rows, path):
    """Glow gain against light coverage for the successful records, with the gain curve."""
    ok = [r for r in rows if r.get("status") == "ok"]
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(7, 3.2))
        ax1, ax2 = fig.subplots(1, 2)
        if ok:
            sz = np.array([r["light_sz"] for r in ok])
            alpha = np.array([r["alpha"] for r in ok])
            grid = np.linspace(0, max(8.0, sz.max() * 1.1), 200)
            curve = np.maximum(0.4196 * grid ** 2 - 4.258 * grid + 11.35, 0)
            ax1.plot(grid, curve, color="0.6", lw=1, label="gain curve")
            ax1.scatter(sz, alpha, s=14, label="records")
            ax1.legend(frameon=False)
            ax2.bar(range(len(ok)), [r["ms"] for r in ok], color="tab:orange")
        ax1.set_xlabel("light_sz (%)")
        ax1.set_ylabel("alpha")
        ax2.set_xlabel("record")
        ax2.set_ylabel("runtime (ms)")
        fig.suptitle(f"{len(ok)}/{len(rows)} records rendered")
    _save(fig, path)


def plot_metric_pairs(rows, path):
    """Per-pair PSNR and SSIM bars."""
    names = [r["name"] for r in rows]
    psnr = [r["psnr"] if np.isfinite(r["psnr"]) else np.nan for r in rows]
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(max(5, 0.4 * len(rows) + 2), 4))
        ax1, ax2 = fig.subplots(2, 1, sharex=True)
        ax1.bar(range(len(rows)), psnr)
        ax1.set_ylabel("PSNR (dB)")
        ax2.bar(range(len(rows)), [r["ssim"] for r in rows], color="tab:green")
        ax2.set_ylabel("SSIM")
        ax2.set_xticks(range(len(rows)))
        ax2.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    _save(fig, path)
