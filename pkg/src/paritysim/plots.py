"""Figure rendering for the scenario runner (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def parity_train_figure(path, rows) -> Path:
    ns = [r["n_pulses"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(ns, [r["parity_corrected"] for r in rows], width=0.6, color="tab:blue", label="sampled (corrected)")
    ax.plot(ns, [r["parity_expected"] for r in rows], "r--o", ms=4, label="(1-2eta)^N")
    ax.plot(ns, [r["parity_ideal"] for r in rows], "k:s", ms=4, label="ideal (-1)^N")
    ax.set_xlabel("pulses N")
    ax.set_ylabel("parity")
    ax.legend(fontsize=8)
    ax.axhline(0.0, color="gray", lw=0.5)
    return _save(fig, path)


def wigner_map_figure(path, i_axis, q_axis, values_2d, title="pi/2 W(I+iQ)") -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    vmax = max(1.0, float(np.max(np.abs(values_2d))))
    im = ax.pcolormesh(i_axis, q_axis, values_2d, cmap="RdBu_r", vmin=-vmax, vmax=vmax, shading="nearest")
    fig.colorbar(im, ax=ax, label=title)
    ax.set_xlabel("I")
    ax.set_ylabel("Q")
    ax.set_aspect("equal")
    return _save(fig, path)


def theta_sweep_figure(path, entries) -> Path:
    thetas = [e.theta for e in entries]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(thetas, [e.ideal_rho11 for e in entries], "b-", label="ideal rho11")
    axes[0].plot(thetas, [e.rho11 for e in entries], "bo", ms=4, label="rho11")
    axes[0].plot(thetas, [e.ideal_re_rho01 for e in entries], "y-", label="ideal Re rho01")
    axes[0].plot(thetas, [e.re_rho01 for e in entries], "ys", ms=4, label="Re rho01")
    axes[0].set_xlabel("theta (rad)")
    axes[0].legend(fontsize=7)
    axes[1].plot(thetas, [e.fidelity for e in entries], "ko-", ms=4)
    axes[1].set_xlabel("theta (rad)")
    axes[1].set_ylabel("fidelity")
    axes[1].set_ylim(0.8, 1.01)
    return _save(fig, path)


def density_matrix_figure(path, entries, title) -> Path:
    fig, ax = plt.subplots(figsize=(4.6, 4))
    dim = entries.shape[0]
    vmax = max(0.5, float(np.max(np.abs(entries.real))))
    im = ax.imshow(entries.real, cmap="RdBu_r", vmin=-vmax, vmax=vmax, origin="upper")
    ax.set_xticks(range(dim))
    ax.set_yticks(range(dim))
    ax.set_title(title, fontsize=10)
    fig.colorbar(im, ax=ax, label="Re(rho)")
    return _save(fig, path)


def g2_sweep_figure(path, rows) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    styles = {
        "coherent": ("tab:blue", "o"),
        "mixture": ("tab:orange", "o"),
        "even": ("tab:red", "^"),
        "odd": ("k", "D"),
    }
    by_case: dict = {}
    for r in rows:
        by_case.setdefault(r["case"], []).append(r)
    for case, case_rows in by_case.items():
        color, marker = styles.get(case, ("gray", "x"))
        powers = [r["power"] for r in case_rows]
        ax.errorbar(
            powers,
            [r["g2"] for r in case_rows],
            yerr=[r["stderr"] for r in case_rows],
            fmt=marker,
            color=color,
            ms=5,
            capsize=2,
            label=case,
        )
        ax.plot(powers, [r["g2_analytic"] for r in case_rows], "-", color=color, lw=1, alpha=0.7)
    ax.set_yscale("log")
    ax.set_xlabel("mean photon number |alpha|^2")
    ax.set_ylabel("g2(0)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def moments_figure(path, tables: dict) -> Path:
    """Bar chart of Re<a^dag^n a^m> for n <= m up to total order 4."""
    pairs = [(n, m) for n in range(5) for m in range(n, 5) if n + m <= 4 and (n, m) != (0, 0)]
    labels = [f"{n},{m}" for n, m in pairs]
    x = np.arange(len(pairs))
    width = 0.8 / max(1, len(tables))
    fig, ax = plt.subplots(figsize=(7, 4))
    colors = {"input": "tab:blue", "even": "tab:red", "odd": "k", "pooled": "tab:orange"}
    for k, (name, table) in enumerate(tables.items()):
        vals = [table.value(n, m).real for n, m in pairs]
        errs = [table.std_error(n, m) for n, m in pairs]
        ax.bar(x + k * width, vals, width=width, yerr=errs, capsize=2,
               color=colors.get(name, None), label=name)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_xlabel("(n, m)")
    ax.set_ylabel("Re moment")
    ax.legend(fontsize=8)
    return _save(fig, path)
