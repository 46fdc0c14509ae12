"""Report figures rendered to files next to the delimited outputs."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_pvalue_histogram",
    "save_pvalue_qq",
    "save_volcano",
    "save_fit_figures",
    "save_experiment_figures",
]


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def save_pvalue_histogram(pvalues, path, bins: int = 20) -> Path:
    pvalues = np.asarray([p for p in pvalues if p is not None and math.isfinite(p)])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(pvalues, bins=bins, range=(0, 1), color="#4878d0", edgecolor="white")
    if pvalues.size:
        ax.axhline(pvalues.size / bins, color="0.3", linestyle="--", linewidth=1)
    ax.set_xlabel("p-value")
    ax.set_ylabel("count")
    ax.set_title("Site-wise p-values")
    return _finish(fig, path)


def save_pvalue_qq(pvalues, path) -> Path:
    pvalues = np.sort(np.asarray([p for p in pvalues if p is not None and math.isfinite(p)]))
    n = pvalues.size
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    if n:
        expected = (np.arange(1, n + 1) - 0.5) / n
        obs = -np.log10(np.clip(pvalues, 1e-300, 1.0))
        exp = -np.log10(expected)
        ax.plot(exp, obs, ".", markersize=3, color="#4878d0")
        lim = max(exp.max(), obs.max()) * 1.05
        ax.plot([0, lim], [0, lim], color="0.3", linewidth=1)
    ax.set_xlabel("expected $-\\log_{10} p$")
    ax.set_ylabel("observed $-\\log_{10} p$")
    ax.set_title("p-value QQ")
    return _finish(fig, path)


def save_volcano(estimates, pvalues, path) -> Path:
    pairs = [(e, p) for e, p in zip(estimates, pvalues)
             if e is not None and p is not None and math.isfinite(e) and math.isfinite(p)]
    fig, ax = plt.subplots(figsize=(5, 4))
    if pairs:
        est = np.asarray([e for e, _ in pairs])
        logp = -np.log10(np.clip(np.asarray([p for _, p in pairs]), 1e-300, 1.0))
        ax.plot(est, logp, ".", markersize=3, color="#4878d0")
        ax.axhline(-math.log10(0.05), color="0.3", linestyle="--", linewidth=1)
    ax.set_xlabel("estimated effect")
    ax.set_ylabel("$-\\log_{10} p$")
    ax.set_title("Effects vs significance")
    return _finish(fig, path)


def save_fit_figures(results, out_dir) -> list[Path]:
    """Render the standard site-wise report figures from SiteResults."""
    out_dir = Path(out_dir)
    pvals, ests = [], []
    for res in results:
        for stat in res.covariates:
            pvals.append(stat.p_value)
            ests.append(stat.estimate)
    return [
        save_pvalue_histogram(pvals, out_dir / "pvalue_hist.png"),
        save_pvalue_qq(pvals, out_dir / "pvalue_qq.png"),
        save_volcano(ests, pvals, out_dir / "volcano.png"),
    ]


def save_experiment_figures(report, out_dir) -> list[Path]:
    """Render summary figures for an ExperimentReport."""
    out_dir = Path(out_dir)
    paths = []

    def _series(metric):
        series: dict[tuple[str, str], list[tuple[float, float]]] = {}
        for row in report.rows:
            vals = row.get(metric)
            if vals is None:
                continue
            for name, v in zip(row["covariate_names"], vals):
                if v is None or not math.isfinite(v):
                    continue
                series.setdefault((row["model"], name), []).append((row["n_samples"], v))
        return series

    for metric, fname, hline in (
        ("rmse", "rmse_vs_n.png", None),
        ("rejection_rate", "rejection_rates.png", 0.05),
        ("coverage", "coverage.png", 0.95),
    ):
        series = _series(metric)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for (model, name), pts in sorted(series.items()):
            pts.sort()
            ax.plot([x for x, _ in pts], [y for _, y in pts], "o-",
                    label=f"{model}:{name}", markersize=4)
        if hline is not None:
            ax.axhline(hline, color="0.3", linestyle="--", linewidth=1)
        ax.set_xlabel("samples per site")
        ax.set_ylabel(metric.replace("_", " "))
        if series:
            ax.legend(fontsize=8)
        paths.append(_finish(fig, out_dir / fname))
    return paths
