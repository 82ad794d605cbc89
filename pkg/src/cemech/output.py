"""Writers for CSV traces, payoff dumps, LP text, SVG charts and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ["period", "agent", "message_index", "prob", "realized_profile",
                 "gains_from_trade", "transfer_total", "avg_max_regret"]


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_trace_csv(path, result, agent_names) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in result.records:
            prof = "-".join(str(k) for k in rec.profile)
            total = float(rec.transfers.sum())
            for i, p in enumerate(rec.strategies):
                for k, v in enumerate(p):
                    w.writerow([rec.period, agent_names[i], k, _fmt(v), prof,
                                _fmt(rec.gains_from_trade), _fmt(total), _fmt(rec.avg_max_regret[i])])


def write_payoff_csv(path, mech, game, agent_names) -> None:
    n = game.n_agents
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"m{i + 1}" for i in range(n)] + ["agent", "utility", "transfer"])
        for prof in mech.profiles():
            for i in range(n):
                w.writerow(list(prof) + [agent_names[i], _fmt(game.values[prof + (i,)]),
                                         _fmt(game.transfers[prof + (i,)])])


def write_witness_csv(path, game, sigma, target, tol: float = 1e-12) -> None:
    n = game.n_agents
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"m{i + 1}" for i in range(n)] + ["labels", "prob", "on_target"])
        for prof in sigma.support(tol):
            labels = " ".join(game.labels[i][k] for i, k in enumerate(prof)) if game.labels else ""
            w.writerow(list(prof) + [labels, _fmt(sigma.probs[prof]), bool(target[prof])])


def write_lp_text(path, game, target, A, keys) -> None:
    """Plain inequality listing of the implementation LP (variables x<flat profile index>)."""
    A = A.tocsr()
    off = np.flatnonzero(~np.asarray(target, bool).reshape(-1))
    with open(path, "w") as fh:
        fh.write(f"\\ {game.n_profiles} variables, {A.shape[0]} incentive rows, all x >= 0\n")
        fh.write("max: " + " + ".join(f"x{k}" for k in off) + "\n" if off.size else "max: 0\n")
        fh.write("simplex: " + " + ".join(f"x{k}" for k in range(game.n_profiles)) + " = 1\n")
        for r, (i, a, b) in enumerate(keys):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            terms = " ".join(f"{v:+.12g} x{c}" for c, v in zip(A.indices[lo:hi], A.data[lo:hi]))
            fh.write(f"ic_{i}_{a}_{b}: {terms} <= 0\n")


# -- svg ----------------------------------------------------------------------------

def _polyline(xs, ys, x0, y0, w, h, ymin, ymax, color):
    span = (ymax - ymin) or 1.0
    xmax = max(xs[-1], 1)
    pts = " ".join(f"{x0 + w * x / xmax:.2f},{y0 + h - h * (y - ymin) / span:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>'


def trace_svg(path, panels: list, title: str = "") -> None:
    """``panels`` is a list of (label, [(series_name, xs, ys), ...]); one row per panel."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    W, H, pad = 640, 170, 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H * len(panels) + 30}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{pad}" y="18" font-size="13">{title}</text>']
    for r, (label, series) in enumerate(panels):
        y0 = 30 + r * H
        ys_all = [v for _, _, ys in series for v in ys] or [0.0]
        lo, hi = min(ys_all), max(ys_all)
        if hi - lo < 1e-12:
            lo, hi = lo - 1, hi + 1
        out.append(f'<rect x="{pad}" y="{y0}" width="{W - 2 * pad}" height="{H - pad}" '
                   f'fill="none" stroke="#999"/>')
        out.append(f'<text x="{pad}" y="{y0 - 4}">{label}</text>')
        out.append(f'<text x="4" y="{y0 + 10}">{hi:.3g}</text>')
        out.append(f'<text x="4" y="{y0 + H - pad}">{lo:.3g}</text>')
        for k, (name, xs, ys) in enumerate(series):
            c = colors[k % len(colors)]
            out.append(_polyline(xs, ys, pad, y0, W - 2 * pad, H - pad, lo, hi, c))
            out.append(f'<text x="{W - pad - 150}" y="{y0 + 14 + 12 * k}" fill="{c}">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def figure_series(result, window: int = 100) -> list:
    """Trailing modal-profile frequency, gains from trade and cumulative transfers, per period."""
    prof = result.profiles
    T = prof.shape[0]
    keys = np.ravel_multi_index(prof.T, tuple(int(v) + 1 for v in prof.max(axis=0)))
    freq = np.empty(T)
    for t in range(T):
        lo = max(0, t + 1 - window)
        _, c = np.unique(keys[lo:t + 1], return_counts=True)
        freq[t] = c.max() / (t + 1 - lo)
    periods = np.arange(1, T + 1)
    return periods, freq


# -- manifest -----------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, files, extra: dict | None = None) -> Path:
    directory = Path(directory)
    entries = [{"path": str(Path(f).relative_to(directory)), "sha256": sha256_file(f),
                "bytes": Path(f).stat().st_size} for f in sorted(files)]
    body = {"files": entries}
    if extra:
        body.update(extra)
    p = directory / "manifest.json"
    p.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return p


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    from fractions import Fraction
    if isinstance(o, Fraction):
        return str(o) if o.denominator != 1 else int(o)
    raise TypeError(f"not serialisable: {type(o)}")
