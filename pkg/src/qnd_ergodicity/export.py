"""Plot-ready CSV/JSON writers and curve sampling."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CurveResolutionError
from .mixture import GaussianMixture1D

CURVE_POINTS = 1024
CURVE_HALF_WIDTH = 6.0
CURVE_NORM_TOL = 1e-3

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def curve_grid(density: GaussianMixture1D, n_points: int = CURVE_POINTS) -> np.ndarray:
    """``n_points`` abscissae covering every component window ``center +/- 6 std``.

    Disjoint windows each get a share of the points proportional to their
    length (at least 16 apiece) so that distant narrow peaks stay resolved.
    """
    intervals = density.support(CURVE_HALF_WIDTH)
    if len(intervals) == 1:
        lo, hi = intervals[0]
        return np.linspace(lo, hi, n_points)
    lengths = np.array([hi - lo for lo, hi in intervals])
    floor = min(16, n_points // len(intervals))
    if floor < 2:
        raise CurveResolutionError(f"{len(intervals)} separate peaks cannot share {n_points} points")
    counts = np.maximum(floor, np.floor(n_points * lengths / lengths.sum()).astype(int))
    counts[np.argmax(counts)] += n_points - counts.sum()
    if counts.min() < floor:
        raise CurveResolutionError(f"{len(intervals)} separate peaks cannot share {n_points} points")
    return np.concatenate([np.linspace(lo, hi, k) for (lo, hi), k in zip(intervals, counts)])


def sample_curve(density: GaussianMixture1D, n_points: int = CURVE_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``density`` on :func:`curve_grid` and check it integrates to one."""
    x = curve_grid(density, n_points)
    y = density.pdf(x)
    area = float(_trapezoid(y, x))
    if abs(area - 1.0) > CURVE_NORM_TOL:
        raise CurveResolutionError(f"sampled curve integrates to {area:.6f}, not 1 +/- {CURVE_NORM_TOL}")
    return x, y


def write_two_column_csv(path: Path, header: Sequence[str], xs: Iterable[float], ys: Iterable[float]) -> Path:
    return write_csv(path, header, zip(xs, ys))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=",", lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else _fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, ensure_ascii=False, allow_nan=True) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path
