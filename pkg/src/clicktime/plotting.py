"""
Figures for the CLI reports.

Rendered with the Agg canvas directly (no pyplot state), and saved without
the software tag so identical data give identical PNG bytes.
"""
import io

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_STYLE = {"linewidth": 1.4}


def _new(ncols=1, width=6.4, height=4.0):
    fig = Figure(figsize=(width * ncols, height), dpi=100)
    FigureCanvasAgg(fig)
    axes = [fig.add_subplot(1, ncols, i + 1) for i in range(ncols)]
    for ax in axes:
        ax.grid(True, alpha=0.3, linewidth=0.5)
    return fig, axes


def to_png(fig):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    return buf.getvalue()


def phase_shift_figure(table):
    fig, (ax1, ax2) = _new(2)
    E = np.asarray(table.column("E"))
    ax1.plot(E, table.column("delta_std"), **_STYLE)
    ax1.set_xlabel("E")
    ax1.set_ylabel(r"$\delta_{std}$ [rad]")
    ax2.plot(E, table.column("dDelta_dE"), color="C1", **_STYLE)
    ax2.set_xlabel("E")
    ax2.set_ylabel(r"$\partial_E\delta$ [time]")
    fig.tight_layout()
    return fig


def density_figure(table, peaks=None):
    fig, (ax,) = _new()
    t = table.column("t")
    ax.plot(t, table.column("p_free"), label="free", **_STYLE)
    ax.plot(t, table.column("p_int"), label="interacting", linestyle="--", **_STYLE)
    for x, c in zip(peaks or (), ("C0", "C1")):
        ax.axvline(x, color=c, linewidth=0.8, alpha=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("p(t)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def povm_check_figure(table):
    fig, (ax,) = _new(width=7.0)
    names = table.column("invariant")
    dev = np.maximum(np.asarray(table.column("deviation"), dtype=float), 1e-18)
    thr = np.maximum(np.asarray(table.column("threshold"), dtype=float), 1e-18)
    y = np.arange(len(names))
    colors = ["C2" if ok else "C3" for ok in table.column("passed")]
    ax.barh(y, np.log10(dev), color=colors)
    ax.scatter(np.log10(thr), y, marker="|", s=200, color="k", label="threshold")
    ax.set_yticks(y)
    ax.set_yticklabels(names)
    ax.set_xlabel("log10 deviation")
    ax.legend(frameon=False, loc="lower right")
    fig.tight_layout()
    return fig


def delay_figure(t, p_free, p_int, report):
    fig, (ax,) = _new()
    ax.plot(t, p_free, label="free", **_STYLE)
    ax.plot(t, p_int, label="interacting", linestyle="--", **_STYLE)
    ax.axvline(report.t_mean_free, color="C0", linewidth=0.8)
    ax.axvline(report.t_mean_int, color="C1", linewidth=0.8)
    ax.set_title(f"mean shift {report.shift_mean:.4g}, on-shell {report.wigner_delay_at_k0:.4g}",
                 fontsize=10)
    ax.set_xlabel("t")
    ax.set_ylabel("p(t)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig
