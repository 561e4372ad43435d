"""Static figure rendering for the CLI report outputs.

Uses the object-oriented matplotlib API without pyplot, so rendering works
headless and never touches the global backend state. Every function writes
one PNG next to the delimited artifacts.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

HYDROTOPE_COLORS = ("tab:blue", "tab:orange", "tab:green")
BAND_COLOR = "lightblue"


def _save(fig: Figure, path) -> None:
    fig.savefig(path, dpi=150, bbox_inches="tight")


def save_spectrum(path, eigenvalues, band_lo=None, band_hi=None) -> None:
    """Eigenvalue decay on a log axis with the bootstrap variability band."""
    idx = np.arange(1, len(eigenvalues) + 1)
    fig = Figure(figsize=(6.5, 4.2))
    ax = fig.subplots()
    if band_lo is not None and band_hi is not None:
        ax.fill_between(idx, np.maximum(band_lo, 1e-300), band_hi,
                        color=BAND_COLOR, label="bootstrap min/max")
    ax.semilogy(idx, np.maximum(eigenvalues, 1e-300), "o-", color="tab:blue",
                markersize=4, label="estimate")
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.set_xticks(idx[:: max(1, len(idx) // 21)])
    ax.legend(frameon=False)
    ax.set_title("Gradient outer-product spectrum")
    _save(fig, path)


def _coordinate_colors(n: int):
    """One color per hydrotope block of seven coordinates."""
    return [HYDROTOPE_COLORS[min(i // 7, 2)] for i in range(n)]


def save_eigenvectors(path, vectors, n_show: int = 4) -> None:
    """Bar panels of the leading eigenvector components, colored per block."""
    n = vectors.shape[0]
    n_show = min(n_show, vectors.shape[1])
    ncols = 2
    nrows = (n_show + 1) // 2
    fig = Figure(figsize=(10, 3.0 * nrows))
    axes = fig.subplots(nrows, ncols, squeeze=False)
    colors = _coordinate_colors(n)
    idx = np.arange(1, n + 1)
    for j in range(nrows * ncols):
        ax = axes[j // ncols][j % ncols]
        if j >= n_show:
            ax.axis("off")
            continue
        ax.bar(idx, vectors[:, j], color=colors)
        ax.axhline(0.0, color="black", linewidth=0.6)
        ax.set_ylim(-1.05, 1.05)
        ax.set_title(f"eigenvector {j + 1}")
        ax.set_xlabel("coordinate")
    fig.tight_layout()
    _save(fig, path)


def save_sensitivities(path, scores, names=None) -> None:
    """Normalized global sensitivity scores as a bar chart."""
    n = len(scores)
    fig = Figure(figsize=(8, 3.6))
    ax = fig.subplots()
    ax.bar(np.arange(1, n + 1), scores, color=_coordinate_colors(n))
    ax.set_xlabel("coordinate")
    ax.set_ylabel("sensitivity (normalized)")
    if names is not None:
        ax.set_xticks(np.arange(1, n + 1))
        ax.set_xticklabels(names, rotation=90, fontsize=6)
    ax.set_title("Global sensitivity scores")
    fig.tight_layout()
    _save(fig, path)


def save_active_marginals(path, prior_samples, posterior_states) -> None:
    """Prior versus posterior histograms per active component."""
    k = posterior_states.shape[1]
    fig = Figure(figsize=(3.4 * k, 5.6))
    axes = fig.subplots(2, k, squeeze=False)
    for j in range(k):
        ax = axes[0][j]
        ax.hist(prior_samples[:, j], bins=60, density=True, color="tab:gray")
        ax.set_title(f"prior, y_{j + 1}")
        ax = axes[1][j]
        ax.hist(posterior_states[:, j], bins=60, density=True, color="tab:blue")
        ax.set_title(f"posterior, y_{j + 1}")
    fig.tight_layout()
    _save(fig, path)


def save_pushforward(path, dates, obs, obs_lo, obs_hi, median, lo, hi,
                     mean=None, band_label="75% posterior band") -> None:
    """Observation noise band and posterior push-forward band over time."""
    t = dates.astype("datetime64[D]").astype("datetime64[s]").astype(object)
    fig = Figure(figsize=(11, 4.2))
    ax = fig.subplots()
    ax.fill_between(t, obs_lo, obs_hi, color="0.85", label="95% data noise band")
    ax.fill_between(t, lo, hi, color=BAND_COLOR, alpha=0.9, label=band_label)
    ax.plot(t, obs, color="black", linewidth=0.7, label="observed")
    ax.plot(t, median, color="tab:blue", linewidth=0.9, label="posterior median")
    if mean is not None:
        ax.plot(t, mean, color="tab:red", linewidth=0.7, linestyle="--",
                label="posterior mean")
    ax.set_ylabel("discharge [m3/d]")
    ax.legend(frameon=False, ncol=2, fontsize=8)
    fig.autofmt_xdate()
    _save(fig, path)


def save_discharge(path, dates, sim, obs=None) -> None:
    t = dates.astype("datetime64[D]").astype("datetime64[s]").astype(object)
    fig = Figure(figsize=(11, 4.0))
    ax = fig.subplots()
    if obs is not None:
        ax.plot(t, obs, color="black", linewidth=0.7, label="observed")
    ax.plot(t, sim, color="tab:blue", linewidth=0.9, label="simulated")
    ax.set_ylabel("discharge [m3/d]")
    ax.legend(frameon=False)
    fig.autofmt_xdate()
    _save(fig, path)


def save_forcing(path, forcing, discharge=None) -> None:
    """Precipitation, temperature and (optionally) generated discharge."""
    t = forcing.dates.astype("datetime64[s]").astype(object)
    nrows = 3 if discharge is not None else 2
    fig = Figure(figsize=(11, 2.6 * nrows))
    axes = fig.subplots(nrows, 1, sharex=True, squeeze=False)
    axes[0][0].bar(t, forcing.precip, width=1.0, color="tab:blue")
    axes[0][0].set_ylabel("precip [mm/d]")
    axes[1][0].plot(t, forcing.temp, color="tab:red", linewidth=0.7)
    axes[1][0].axhline(0.0, color="black", linewidth=0.5)
    axes[1][0].set_ylabel("temp [degC]")
    if discharge is not None:
        axes[2][0].plot(t, discharge, color="tab:green", linewidth=0.8)
        axes[2][0].set_ylabel("discharge [m3/d]")
    fig.autofmt_xdate()
    _save(fig, path)
