"""Static figures for study series; each PNG is drawn from the CSV series of the same name."""

from __future__ import annotations

import io
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import write_atomic  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "savefig.dpi": 150,
}

_LABELS = {
    "dx": r"$\Delta x$",
    "H": r"$H$",
    "x": r"$x$",
    "l1_relative_error": r"relative $L^1$ error",
    "relative_error_to_local_minimizer": r"relative $L^1$ distance to local minimizer",
    "sup_l1_gap": r"$\sup_t \|U_H - U\|_{L^1}$",
}


def _finite(xs, ys):
    pts = [(x, y) for x, y in zip(xs, ys) if isinstance(y, float) and math.isfinite(y)]
    return [p[0] for p in pts], [p[1] for p in pts]


def _profiles(ax, header, rows):
    x = [r[0] for r in rows]
    for k, name in enumerate(header[1:], start=1):
        xs, ys = _finite(x, [float(r[k]) for r in rows])
        if not ys:
            continue
        style = {"color": "tab:red", "lw": 2.0} if name == "U_o_d" else {}
        ax.step(xs, ys, where="mid", label=name, **style)
    ax.set_xlabel(_LABELS["x"])
    ax.set_ylabel(r"$U_o$")
    ax.legend(fontsize=8)


def _convergence(ax, header, rows, y_names):
    x = [float(r[0]) for r in rows]
    for name in y_names:
        k = header.index(name)
        xs, ys = _finite(x, [float(r[k]) for r in rows])
        pos = [(a, b) for a, b in zip(xs, ys) if b > 0]
        if pos:
            ax.loglog([p[0] for p in pos], [p[1] for p in pos], "o-", label=name)
        zeros = [a for a, b in zip(xs, ys) if b == 0]
        if zeros:
            ax.plot(zeros, [ax.get_ylim()[0]] * len(zeros), "kv", label=f"{name} = 0")
    ax.set_xlabel(_LABELS.get(header[0], header[0]))
    ax.set_ylabel(_LABELS.get(y_names[0], y_names[0]) if len(y_names) == 1 else "value")
    ax.invert_xaxis()
    ax.legend(fontsize=8)


def render_curve(name: str, header: list[str], rows: list[list], out_dir: Path) -> Path | None:
    if not rows:
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if header[0] == "x":
            _profiles(ax, header, rows)
        elif name == "fig_diagonal_gamma_conv":
            _convergence(ax, header, rows, ["l1_relative_error", "objective_value"])
        else:
            _convergence(ax, header, rows, [h for h in header[1:]])
        ax.set_title(name.removeprefix("fig_").replace("_", " "))
        fig.tight_layout()
        path = Path(out_dir) / f"{name}.png"
        buf = io.BytesIO()
        fig.savefig(buf, format="png", metadata={"Software": None})
        write_atomic(path, buf.getvalue())
        plt.close(fig)
    return path


def render_all(curves: dict[str, tuple[list[str], list[list]]], out_dir: Path) -> list[Path]:
    paths = []
    for name, (header, rows) in curves.items():
        p = render_curve(name, header, rows, out_dir)
        if p is not None:
            paths.append(p)
    return paths
