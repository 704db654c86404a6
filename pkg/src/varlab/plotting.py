"""Optional PNG figures next to the CSV tables (``--figures``); Agg backend only."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no version stamp in the files, so re-runs produce the same bytes
_META = {"Software": None}


def _save(fig, rundir, name):
    path = rundir.add_file(name)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def phi_curve(rundir, rho, phi_hat):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rho, phi_hat, "o-")
    ax.set_xscale("log")
    ax.set_xlabel("rho")
    ax.set_ylabel("phi_hat")
    ax.axhline(0.5, color="grey", lw=0.8, ls="--")
    return _save(fig, rundir, "phi_curve.png")


def hunt(rundir, rows):
    fig, ax = plt.subplots(figsize=(6, 4))
    for acc, marker, label in ((1, "o", "accepted"), (0, "x", "rejected")):
        pts = [(r["level_index"], r["psi"]) for r in rows if r["accepted"] == acc]
        if pts:
            li, psi = np.array(pts).T
            ax.plot(li, np.maximum(psi, 1e-300), marker, ls="", label=label)
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.set_xlabel("level index")
    ax.set_ylabel("Psi at local minimum")
    ax.legend()
    return _save(fig, rundir, "hunt.png")


def branch(rundir, lam, c1, ratio):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    a1.loglog(lam, c1, "o-")
    a1.set_xlabel("lambda")
    a1.set_ylabel("c1proxy")
    a2.semilogx(lam, ratio, "o-")
    a2.set_xlabel("lambda")
    a2.set_ylabel("c1proxy / lambda^(q/(1-q))")
    return _save(fig, rundir, "branch.png")


def fp_scan(rundir, r, ratio):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(r, ratio, ".-")
    ax.axhline(0.5, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("r")
    ax.set_ylabel("sup P / r^2")
    return _save(fig, rundir, "fp_scan.png")


def profile(rundir, energies):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.linspace(0, 1, len(energies)), energies, "o-")
    ax.set_xlabel("path parameter")
    ax.set_ylabel("energy")
    return _save(fig, rundir, "mountain_pass.png")
