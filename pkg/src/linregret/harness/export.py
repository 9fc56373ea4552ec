"""CSV / JSON / SVG exporters for regret traces and diagnostics."""

from __future__ import annotations

import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

from .runner import RegretTrace

CSV_HEADER = "episode,regret,cum_regret,optimism_violations"

__all__ = ["CSV_HEADER", "ExportError", "trace_to_csv", "trace_to_json", "trace_from_json",
           "trace_to_svg", "export", "load_trace"]


class ExportError(OSError):
    """Writing an export failed; the message names the path."""


def trace_to_csv(trace: RegretTrace) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for k in range(trace.K):
        buf.write(f"{k + 1},{float(trace.regret[k])!r},{float(trace.cum_regret[k])!r},"
                  f"{int(trace.optimism_violations[k])}\n")
    return buf.getvalue()


def trace_to_json(trace: RegretTrace) -> str:
    return json.dumps(trace.to_dict(), sort_keys=True)


def trace_from_json(text: str) -> RegretTrace:
    return RegretTrace.from_dict(json.loads(text))


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _polyline(xs, ys, x0, y0, w, h) -> str:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    xspan = xs.max() - xs.min() or 1.0
    yspan = ys.max() - ys.min() or 1.0
    px = x0 + (xs - xs.min()) / xspan * w
    py = y0 + h - (ys - ys.min()) / yspan * h
    return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))


def trace_to_svg(trace: RegretTrace, max_points: int = 800) -> str:
    """Two panels: cumulative regret against episode and against ln(episode)."""
    K = trace.K
    idx = np.unique(np.linspace(0, K - 1, min(K, max_points)).round().astype(int))
    ep = idx + 1.0
    cum = trace.cum_regret[idx]
    W, Hh, pad = 360, 240, 40
    panels = [("episode", ep), ("ln(episode)", np.log(ep))]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * (W + 2 * pad)}" '
             f'height="{Hh + 2 * pad}" font-family="sans-serif" font-size="11">']
    for i, (label, xs) in enumerate(panels):
        ox = i * (W + 2 * pad) + pad
        parts.append(f'<rect x="{ox}" y="{pad}" width="{W}" height="{Hh}" fill="none" stroke="#888"/>')
        parts.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" '
                     f'points="{_polyline(xs, cum, ox, pad, W, Hh)}"/>')
        parts.append(f'<text x="{ox + W / 2:.0f}" y="{pad + Hh + 28}" text-anchor="middle">{label}</text>')
        parts.append(f'<text x="{ox}" y="{pad - 8}">cumulative regret '
                     f'(max {float(cum[-1]):.4g}) {trace.algorithm} seed {trace.seed}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def export(obj, fmt: str, path) -> Path:
    """Write a trace (csv, json, svg-curve) or counts / fit (json) to ``path``."""
    path = Path(path)
    if isinstance(obj, RegretTrace):
        if fmt == "csv":
            return _write(path, trace_to_csv(obj))
        if fmt == "json":
            return _write(path, trace_to_json(obj))
        if fmt in ("svg", "svg-curve"):
            return _write(path, trace_to_svg(obj))
        raise ValueError(f"unknown trace export format {fmt!r}")
    if fmt != "json":
        raise ValueError(f"{type(obj).__name__} exports only as json")
    return _write(path, json.dumps(_jsonable(obj), sort_keys=True))


def load_trace(path) -> RegretTrace:
    path = Path(path)
    try:
        return trace_from_json(path.read_text())
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
