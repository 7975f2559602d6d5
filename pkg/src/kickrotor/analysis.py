"""Line-shape analysis of J distributions: fit window, exponential and Gaussian fits.

Both fits are least squares on log P_J over the lattice sites of the
window, with the centre J_c bounded to [0, J_max of the window].

* exponential:  log P = a - |J - J_c| / J_loc
* gaussian:     log P = a - ((J - J_c) / J_diff)^2

Neither needs an iterative optimiser.  For the exponential, fixing which
sites lie left/right of J_c makes the model linear in (a, 1/J_loc,
J_c/J_loc); enumerating the segments between sites plus their endpoints
gives the global bounded optimum, kink included.  The Gaussian is a
quadratic polynomial in J, with the same boundary treatment.  Exact ties
go to the lowest J_c.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FitError
from .rotor import OXYGEN, RotorSpec

J_LIM = 21
J_FLOOR = 4
WINDOW_THRESHOLD = 0.01
NOISE_FLOOR = 5e-3
ZERO_FLOOR = 1e-12
SHAPE_RATIO = 1.2
_TIE = 1e-10


@dataclass
class FitResult:
    model: str
    center: float
    width: float
    amplitude: float
    rms_log_residual: float
    window: tuple
    uncertainties: dict = field(default_factory=dict)
    floored: bool = False
    n_points: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["uncertainties"] = {k: (None if not math.isfinite(v) else v) for k, v in self.uncertainties.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        d = dict(d)
        d["window"] = tuple(d["window"])
        d["uncertainties"] = {k: (math.nan if v is None else v) for k, v in d["uncertainties"].items()}
        return cls(**d)


def fit_window(
    P_J,
    spec: RotorSpec = OXYGEN,
    *,
    j_floor: int = J_FLOOR,
    j_lim: int = J_LIM,
    threshold: float = WINDOW_THRESHOLD,
) -> tuple[int, int]:
    """Window (J_min, J_max) for line-shape fits.

    J_min is the lowest allowed J >= ``j_floor``; J_max is the highest
    allowed J with P_J > ``threshold``, capped at ``j_lim``.
    """
    p = np.asarray(P_J, dtype=float)
    allowed = [J for J in range(p.size) if spec.allows(J)]
    lows = [J for J in allowed if J >= j_floor]
    if not lows:
        raise FitError(f"no allowed level at or above J={j_floor}")
    j_min = lows[0]
    above = [J for J in allowed if p[J] > threshold]
    if not above:
        raise FitError(f"fit-range error: no level holds more than {threshold:g} of the population")
    j_max = min(max(above), j_lim)
    step = 1 if spec.parity == "both" else 2
    if j_max < j_min or (j_max - j_min) // step + 1 < 3:
        raise FitError(f"fit-range error: window ({j_min}, {j_max}) has fewer than 3 lattice sites")
    return j_min, j_max


def _window_data(P_J, window, spec, noise_floor):
    p = np.asarray(P_J, dtype=float)
    lo, hi = window
    J = np.array([j for j in range(lo, hi + 1) if spec.allows(j)], dtype=float)
    vals = p[J.astype(int)]
    if noise_floor:
        keep = vals >= noise_floor
        J, vals = J[keep], vals[keep]
    if J.size < 3:
        raise FitError(f"need at least 3 lattice sites in window {window}, have {J.size}")
    floored = bool(np.any(vals <= ZERO_FLOOR))
    y = np.log(np.maximum(vals, ZERO_FLOOR))
    return J, y, floored


def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return coef, float(r @ r)


def _pick(cands):
    """Lowest cost; near-ties resolved toward the lowest centre."""
    if not cands:
        return None
    best = min(c[0] for c in cands)
    tol = _TIE * max(1.0, best) + 1e-24
    return min((c for c in cands if c[0] <= best + tol), key=lambda c: c[1])


def _covariance(jac, ssr, n):
    p = jac.shape[1]
    if n <= p:
        return np.full((p, p), math.nan)
    try:
        return ssr / (n - p) * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.full((p, p), math.nan)


def fit_exponential(P_J, window, spec: RotorSpec = OXYGEN, *, noise_floor: float = 0.0) -> FitResult:
    """Fit P_J = A exp(-|J - J_c| / J_loc) in log space over ``window``."""
    J, y, floored = _window_data(P_J, window, spec, noise_floor)
    j_top = float(window[1])
    breaks = [0.0] + [float(j) for j in J if 0.0 < j < j_top] + [j_top]
    breaks = sorted(set(breaks))
    cands = []  # (cost, jc, a, b)
    for jc in breaks:
        X = np.column_stack([np.ones_like(J), -np.abs(J - jc)])
        (a, b), cost = _lstsq(X, y)
        if b > 0:
            cands.append((cost, jc, a, b))
    for lo, hi in zip(breaks, breaks[1:]):
        s = np.where(J >= hi, 1.0, -1.0)
        if np.all(s == s[0]):
            continue
        X = np.column_stack([np.ones_like(J), -s * J, s])
        (a, b, c), cost = _lstsq(X, y)
        if b > 0 and lo < c / b < hi:
            cands.append((cost, c / b, a, b))
    pick = _pick(cands)
    if pick is None:
        raise FitError(f"exponential fit failed on window {tuple(window)}: data not decaying")
    cost, jc, a, b = pick
    width = 1.0 / b
    d = J - jc
    sgn = np.sign(d)
    identifiable = np.any(sgn < 0) or np.any(d == 0)
    if identifiable:
        jac = np.column_stack([np.ones_like(J), sgn / width, np.abs(d) / width**2])
        cov = _covariance(jac, cost, J.size)
        unc = {"log_amplitude": cov[0, 0], "center": cov[1, 1], "width": cov[2, 2]}
    else:
        jac = np.column_stack([np.ones_like(J), np.abs(d) / width**2])
        cov = _covariance(jac, cost, J.size)
        unc = {"log_amplitude": cov[0, 0], "center": math.nan, "width": cov[1, 1]}
    unc = {k: math.sqrt(v) if math.isfinite(v) and v >= 0 else math.nan for k, v in unc.items()}
    return FitResult(
        "exponential", float(jc), float(width), float(math.exp(a)),
        math.sqrt(cost / J.size), (int(window[0]), int(window[1])), unc, floored, int(J.size),
    )


def fit_gaussian(P_J, window, spec: RotorSpec = OXYGEN, *, noise_floor: float = 0.0) -> FitResult:
    """Fit P_J = A exp(-((J - J_c) / J_diff)^2) in log space; J_diff is the 1/e half-width."""
    J, y, floored = _window_data(P_J, window, spec, noise_floor)
    j_top = float(window[1])
    cands = []
    X = np.column_stack([np.ones_like(J), J, J**2])
    (c0, c1, c2), cost = _lstsq(X, y)
    if c2 < 0:
        jc = -c1 / (2 * c2)
        if 0.0 <= jc <= j_top:
            cands.append((cost, jc, c0 - c2 * jc**2, -c2))
    for jc in (0.0, j_top):
        Xb = np.column_stack([np.ones_like(J), -(J - jc) ** 2])
        (a, b), cost_b = _lstsq(Xb, y)
        if b > 0:
            cands.append((cost_b, jc, a, b))
    pick = _pick(cands)
    if pick is None:
        raise FitError(f"gaussian fit failed on window {tuple(window)}: data not peaked")
    cost, jc, a, b = pick
    width = 1.0 / math.sqrt(b)
    d = J - jc
    jac = np.column_stack([np.ones_like(J), 2 * d / width**2, 2 * d**2 / width**3])
    cov = _covariance(jac, cost, J.size)
    unc = {"log_amplitude": cov[0, 0], "center": cov[1, 1], "width": cov[2, 2]}
    unc = {k: math.sqrt(v) if math.isfinite(v) and v >= 0 else math.nan for k, v in unc.items()}
    return FitResult(
        "gaussian", float(jc), float(width), float(math.exp(a)),
        math.sqrt(cost / J.size), (int(window[0]), int(window[1])), unc, floored, int(J.size),
    )


@dataclass
class ShapeVerdict:
    label: str
    score: float
    exponential: FitResult
    gaussian: FitResult


def classify_shape(P_J, window, spec: RotorSpec = OXYGEN, *, noise_floor: float = 0.0) -> ShapeVerdict:
    """Pick the line shape with the smaller rms log residual.

    The score is the ratio larger/smaller residual (each padded by 1e-12 so
    two exact fits compare as equal); below 1.2 the shape is "ambiguous".
    """
    fe = fit_exponential(P_J, window, spec, noise_floor=noise_floor)
    fg = fit_gaussian(P_J, window, spec, noise_floor=noise_floor)
    re_, rg = fe.rms_log_residual + 1e-12, fg.rms_log_residual + 1e-12
    score = max(re_, rg) / min(re_, rg)
    if score <= SHAPE_RATIO:
        label = "ambiguous"
    else:
        label = "exponential" if re_ < rg else "gaussian"
    return ShapeVerdict(label, score, fe, fg)


@dataclass
class WidthTrend:
    strengths: list
    widths: list
    strictly_increasing: bool

    def __bool__(self):
        return self.strictly_increasing


def width_vs_strength(results) -> WidthTrend:
    """Order widths by kick strength and report whether they strictly increase.

    ``results`` holds (P, FitResult) pairs or (P, width) pairs.
    """
    if len(results) < 2:
        raise FitError("need at least two (P, fit) entries")
    rows = sorted(
        ((float(P), float(getattr(r, "width", r))) for P, r in results), key=lambda t: t[0]
    )
    ps = [p for p, _ in rows]
    ws = [w for _, w in rows]
    inc = all(b > a for a, b in zip(ws, ws[1:])) and all(b > a for a, b in zip(ps, ps[1:]))
    return WidthTrend(ps, ws, inc)


def report_rows(entries) -> str:
    """CSV table (protocol, P, model, J_c, width, residual) from (protocol, P, FitResult)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["protocol", "P", "model", "J_c", "width", "residual"])
    for protocol, P, fr in entries:
        w.writerow([protocol, repr(float(P)), fr.model, repr(fr.center), repr(fr.width), repr(fr.rms_log_residual)])
    return buf.getvalue()
