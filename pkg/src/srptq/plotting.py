"""Figure rendering for the report paths: PNGs written next to the CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def line_figure(path, x, series: dict[str, list], *, xlabel: str, ylabel: str,
                title: str) -> None:
    """One set of curves over a common x grid, saved to ``path``."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, ys in series.items():
        ax.plot(x, ys, marker="o", markersize=3.5, linewidth=1.4, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(path, report) -> None:
    """Gap-to-target curves per metric across system scales, log-log."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    metrics = sorted({r.metric for r in report.rows})
    for name in metrics:
        pts = [(r.scale, r.gap) for r in report.rows if r.metric == name]
        ax.plot([p[0] for p in pts], [max(p[1], 1e-12) for p in pts],
                marker="o", markersize=3.5, linewidth=1.2, label=name)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("servers")
    ax.set_ylabel("|estimate - limit|")
    ax.set_title("convergence toward large-system limits")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def coupling_figure(path, counters) -> None:
    """Both served-count processes of one coupled run."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.step(counters.times, counters.n_o, where="post", linewidth=1.2,
            label="original system, all served")
    ax.step(counters.times, counters.n_l1, where="post", linewidth=1.2,
            label="loss system, short served")
    ax.set_xlabel("time")
    ax.set_ylabel("cumulative served")
    ax.set_title("pathwise served-count comparison")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
