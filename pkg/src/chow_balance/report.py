"""Report serialization: JSON with tolerances, iteration CSVs and SVG plots."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

SCHEMA = "chow-balance-report/1"


def checked(value, tolerance, passed=None, reference=None) -> dict:
    """A number together with the tolerance it was judged against."""
    out = {"value": to_jsonable(value), "tolerance": float(tolerance)}
    if reference is not None:
        out["reference"] = to_jsonable(reference)
    if passed is None:
        passed = abs(value - (reference if reference is not None else 0.0)) < tolerance
    out["passed"] = bool(passed)
    return out


def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items() if not str(k).startswith("_")}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            if np.all(x.imag == 0):
                return to_jsonable(x.real.tolist())
            return {"re": to_jsonable(x.real.tolist()), "im": to_jsonable(x.imag.tolist())}
        return to_jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.complexfloating, complex)):
        return {"re": float(x.real), "im": float(x.imag)}
    return x


def write_json(path, payload):
    text = json.dumps(to_jsonable(payload), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def svg_convergence_plot(residuals, title="", tol=None) -> str:
    """Residual against iteration on a log axis, as a standalone SVG string."""
    W, H, L, R, T, B = 480, 320, 64, 16, 32, 40
    res = [r for r in residuals if r > 0 and math.isfinite(r)]
    lo = math.floor(math.log10(min(res + ([tol] if tol else [])))) if res else -16
    hi = math.ceil(math.log10(max(res))) if res else 0
    if hi <= lo:
        hi = lo + 1
    n = max(len(residuals) - 1, 1)

    def px(i):
        return L + (W - L - R) * i / n

    def py(v):
        v = max(v, 10.0**lo)
        return T + (H - T - B) * (hi - math.log10(v)) / (hi - lo)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>',
             f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
             f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
    step = max(1, (hi - lo) // 8)
    for e in range(lo, hi + 1, step):
        y = py(10.0**e)
        parts.append(f'<line x1="{L - 4}" y1="{y:.2f}" x2="{W - R}" y2="{y:.2f}" stroke="#ddd"/>')
        parts.append(f'<text x="{L - 6}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">1e{e}</text>')
    parts.append(f'<text x="{(L + W - R) / 2}" y="{H - 8}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="11">iteration (0..{len(residuals) - 1})</text>')
    if tol:
        y = py(tol)
        parts.append(f'<line x1="{L}" y1="{y:.2f}" x2="{W - R}" y2="{y:.2f}" stroke="#c33" '
                     f'stroke-dasharray="4 3"/>')
    pts = " ".join(f"{px(i):.2f},{py(r):.2f}" for i, r in enumerate(residuals) if r > 0 and math.isfinite(r))
    if pts:
        parts.append(f'<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{pts}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_trace(out_dir, name, trace, tol=None) -> dict:
    """CSV and SVG for one SolveTrace; returns the file names for the report."""
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{name}.csv"
    svg_path = out_dir / f"{name}.svg"
    trace.to_csv(csv_path)
    svg_path.write_text(svg_convergence_plot(trace.residuals, f"{name}: {trace.status}", tol))
    return {"csv": csv_path.name, "svg": svg_path.name}
