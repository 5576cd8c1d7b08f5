"""Matplotlib figures written next to the CLI's CSV/JSON outputs.

Figures use the Agg backend and strip the PNG "Software" tag so reruns are
byte-identical.
"""
from __future__ import annotations

import matplotlib as mpl
mpl.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .surfaces import SurfaceMesh, stereographic

PNG_META = {"Software": None}
RC = {"font.size": 9, "axes.titlesize": 10, "figure.dpi": 100, "savefig.dpi": 100,
      "axes.spines.top": False, "axes.spines.right": False}


def _save(fig, path):
    fig.savefig(path, format="png", metadata=PNG_META)
    plt.close(fig)


def plot_mesh(mesh: SurfaceMesh, path, pole=(0.0, 0.0, 0.0, 1.0), pole_tol: float = 1e-6, title: str = ""):
    """Wireframe of the mesh: stereographic image for S^3, first three coordinates otherwise."""
    y = mesh.y
    if y.shape[-1] == 4:
        p = np.asarray(pole, dtype=float) / np.linalg.norm(pole)
        X = stereographic(y, p)
        near = np.linalg.norm(y - p, axis=-1) < pole_tol
        X[near] = np.nan
        # clip far points so one near-pole row does not flatten the picture
        r = np.linalg.norm(X, axis=-1)
        X[r > 10.0] = np.nan
    else:
        X = y[..., :3].copy()
    with mpl.rc_context(RC):
        fig = plt.figure(figsize=(5, 5))
        ax = fig.add_subplot(projection="3d")
        ax.plot_wireframe(X[..., 0], X[..., 1], X[..., 2], linewidth=0.3, color="0.2",
                          rstride=1, cstride=1)
        ax.set_box_aspect((1, 1, 1))
        ax.set_axis_off()
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_residuals(mesh: SurfaceMesh, path):
    """Conformality residual and speed |y_u| over the (u, v) grid."""
    with mpl.rc_context(RC):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2), constrained_layout=True)
        for ax, data, name in ((axes[0], mesh.conf_residual, "conformality residual"),
                               (axes[1], mesh.speed, "|y_u|")):
            if data is None:
                data = np.full(mesh.shape, np.nan)
            im = ax.pcolormesh(mesh.u, mesh.v, data.T, shading="nearest", cmap="viridis")
            ax.set_xlabel("u")
            ax.set_ylabel("v")
            ax.set_title(name)
            fig.colorbar(im, ax=ax)
        _save(fig, path)


def plot_sweep(x, spectra, path, xlabel: str = "parameter", mark=None):
    """Imaginary parts of the spectrum against a sweep parameter; optional vertical marks."""
    x = np.asarray(x, dtype=float)
    spectra = np.asarray(spectra, dtype=complex)
    with mpl.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3.2), constrained_layout=True)
        for j in range(spectra.shape[1]):
            ax.plot(x, spectra[:, j].imag, ".", ms=2.5, color="C0")
            re = spectra[:, j].real
            ok = np.abs(re) > 1e-9
            if ok.any():
                ax.plot(x[ok], re[ok], "x", ms=2.5, color="C3")
        if mark is not None:
            for m in np.atleast_1d(mark):
                ax.axvline(m, color="0.6", lw=0.6, ls="--")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("Im eig (dots), Re eig (crosses)")
        _save(fig, path)


def plot_trajectory_drift(v, drift: dict, path):
    """Semilog plot of the flow monitors against v."""
    with mpl.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3.2), constrained_layout=True)
        for name in sorted(drift):
            d = np.maximum(np.asarray(drift[name], dtype=float), 1e-18)
            ax.semilogy(v, d, lw=0.8, label=name)
        ax.set_xlabel("v")
        ax.set_ylabel("drift")
        ax.legend(frameon=False, fontsize=7)
        _save(fig, path)
