"""Figure rendering for harness reports.

Renders the plot-ready report columns to PNG files next to the JSON/CSV
output. Uses the Agg backend so it works headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {"figure.figsize": (5.2, 3.4), "figure.dpi": 130, "axes.grid": True}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def render_sweep(report: dict, outdir) -> list[str]:
    """Accuracy and speedup curves of a reuse-ratio sweep."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = report["rows"]
    r = [row["r_reuse"] for row in rows]
    written = []
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        nmse = [row["mean_nmse"] for row in rows]
        std = [row["std_nmse"] for row in rows]
        ax.errorbar(r, nmse, yerr=std, marker="o", capsize=3)
        ax.set_yscale("log")
        ax.set_xlabel("reuse ratio")
        ax.set_ylabel("NMSE")
        kind = report.get("scenario", {}).get("kind", "sweep")
        mode = report.get("scenario", {}).get("mode", "")
        ax.set_title(f"{kind} ({mode}): accuracy vs reuse")
        written.append(_save(fig, outdir / "sweep_nmse.png"))

        fig, ax = plt.subplots()
        ax.plot(r, [row["speedup"] for row in rows], marker="s")
        ax.set_xlabel("reuse ratio")
        ax.set_ylabel("speedup vs full run")
        ax.set_title(f"{kind} ({mode}): speedup vs reuse")
        written.append(_save(fig, outdir / "sweep_speedup.png"))

        fig, ax = plt.subplots()
        ax.errorbar(
            r,
            [row["mean_ssim"] for row in rows],
            yerr=[row["std_ssim"] for row in rows],
            marker="o",
            capsize=3,
        )
        ax.set_xlabel("reuse ratio")
        ax.set_ylabel("SSIM")
        ax.set_title(f"{kind} ({mode}): structure vs reuse")
        written.append(_save(fig, outdir / "sweep_ssim.png"))
    return written


def render_kl(report: dict, outdir) -> list[str]:
    """Analytic-vs-MC agreement scatter and the convergence curve."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(_STYLE):
        cases = report["cases"]
        fig, ax = plt.subplots()
        analytic = [c["analytic"] for c in cases]
        estimate = [c["estimate"] for c in cases]
        ax.scatter(analytic, estimate, s=12, alpha=0.7)
        lim = max(max(analytic, default=1.0), 1e-12)
        ax.plot([0, lim], [0, lim], "k--", linewidth=1)
        ax.set_xlabel("analytic KL")
        ax.set_ylabel("Monte-Carlo estimate")
        ax.set_title("divergence check: analytic vs sampled")
        written.append(_save(fig, outdir / "kl_agreement.png"))

        curve = report["curve"]
        fig, ax = plt.subplots()
        ax.plot(curve["t"], curve["nmse"], marker="o")
        if curve.get("threshold_t") is not None:
            ax.axvline(curve["threshold_t"], color="r", linestyle=":")
        ax.set_yscale("log")
        ax.set_xlabel("noise level t")
        ax.set_ylabel("NMSE between diffused latents")
        ax.set_title("trajectory convergence under shared noise")
        written.append(_save(fig, outdir / "kl_convergence.png"))
    return written


def render_calibration(report: dict, outdir) -> list[str]:
    """Loss-vs-distance scatter with the chosen threshold."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        d = [p["d_env"] for p in report["pairs"]]
        loss = [p["nmse_increase"] for p in report["pairs"]]
        ax.scatter(d, loss, s=18)
        ax.axhline(report["budget"], color="g", linestyle="--", label="budget")
        ax.axvline(report["tau"], color="r", linestyle=":", label="tau")
        ax.set_xlabel("environment distance")
        ax.set_ylabel("NMSE increase under reuse")
        ax.set_title("gate calibration")
        ax.legend()
        written.append(_save(fig, outdir / "calibration_knee.png"))
    return written
