"""Rotational tight-binding lattice: on-site energies and resonance map.

Sites are rotational levels J (lattice constant 2).  The on-site energy is
tan(phi_J) with phi_J = (pi/2) (eps - J(J+1)) T/T_rev, eps being the
quasienergy in units of hcB.  Neighbouring sites J and J+2 are degenerate
(a "resonance") whenever (2J+3) T/T_rev is an integer.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, DomainError, PoleError
from .rotor import OXYGEN, RotorSpec

POLE_TOLERANCE = 1e-9


@dataclass(frozen=True, order=True)
class ResonanceMarker:
    T_over_Trev: float
    J: int
    order_m: int

    @classmethod
    def make(cls, J: int, m: int) -> "ResonanceMarker":
        return cls(m / (2 * J + 3), J, m)

    @property
    def exact(self) -> Fraction:
        return Fraction(self.order_m, 2 * self.J + 3)


@dataclass
class LatticeProfile:
    quasienergy_over_hcB: float
    T_over_Trev: float
    onsite: list  # (J, phi_J, T_J)


def _reduce_half_pi(x):
    """Map an angle into (-pi/2, pi/2]."""
    r = np.mod(x, math.pi)
    return np.where(r > math.pi / 2, r - math.pi, r)


def phi_J(quasienergy_over_hcB: float, J: int, T_over_Trev: float) -> float:
    """Phase (pi/2)(eps - J(J+1)) T/T_rev reduced into (-pi/2, pi/2]."""
    if J < 0:
        raise DomainError(f"J must be >= 0, got {J}")
    raw = 0.5 * math.pi * (quasienergy_over_hcB - J * (J + 1)) * T_over_Trev
    return float(_reduce_half_pi(raw))


def onsite_energy(phi: float) -> float:
    """On-site energy tan(phi); raises :class:`PoleError` next to +-pi/2."""
    if abs(abs(phi) - math.pi / 2) < POLE_TOLERANCE:
        raise PoleError(f"tan(phi) pole at phi={phi!r}: perturb the quasienergy")
    return math.tan(phi)


def lattice_profile(
    quasienergy_over_hcB: float,
    T_over_Trev: float,
    j_values=None,
    spec: RotorSpec = OXYGEN,
) -> LatticeProfile:
    if j_values is None:
        j_values = spec.allowed_j()
    onsite = []
    for J in j_values:
        ph = phi_J(quasienergy_over_hcB, J, T_over_Trev)
        onsite.append((J, ph, onsite_energy(ph)))
    return LatticeProfile(quasienergy_over_hcB, T_over_Trev, onsite)


def onsite_period(T_over_Trev, j_values, max_period: int = 10) -> int | None:
    """Smallest lattice period p <= max_period of the on-site sequence, or None.

    Uses exact rational arithmetic: sites J and J' carry the same on-site
    energy iff (J'(J'+1) - J(J+1)) T / (2 T_rev) is an integer, independently
    of the quasienergy.
    """
    T = Fraction(T_over_Trev).limit_denominator(10**9) if isinstance(T_over_Trev, float) \
        else Fraction(T_over_Trev)
    js = list(j_values)
    for p in range(1, max_period + 1):
        if p >= len(js):
            break
        if all(
            ((js[i + p] * (js[i + p] + 1) - js[i] * (js[i] + 1)) * T / 2).denominator == 1
            for i in range(len(js) - p)
        ):
            return p
    return None


def runs_test(values) -> tuple[int, float, float]:
    """Wald-Wolfowitz runs test on the signs of ``values`` (zeros dropped).

    Returns (number of runs, z statistic, two-sided p-value).
    """
    s = np.sign(np.asarray(values, dtype=float))
    s = s[s != 0]
    n1 = int(np.sum(s > 0))
    n2 = int(np.sum(s < 0))
    if n1 == 0 or n2 == 0:
        return 1, -math.inf, 0.0
    runs = 1 + int(np.sum(s[1:] != s[:-1]))
    n = n1 + n2
    mu = 2.0 * n1 * n2 / n + 1.0
    var = 2.0 * n1 * n2 * (2.0 * n1 * n2 - n) / (n * n * (n - 1.0))
    z = (runs - mu) / math.sqrt(var)
    return runs, z, float(2 * norm.sf(abs(z)))


def resonance_times(J: int, m_range: tuple[int, int]) -> list[ResonanceMarker]:
    """Markers T/T_rev = m/(2J+3) for every integer m in the inclusive range."""
    if J < 0:
        raise DomainError(f"J must be >= 0, got {J}")
    lo, hi = m_range
    return [ResonanceMarker.make(J, m) for m in range(int(lo), int(hi) + 1)]


def resonance_map(
    J_max: int, T_interval: tuple[float, float], spec: RotorSpec = OXYGEN
) -> list[ResonanceMarker]:
    """All markers of allowed J <= J_max with T in the closed interval, sorted by (T, J)."""
    lo, hi = (float(x) for x in T_interval)
    if not (hi > lo and hi > 0 and lo <= 1 + 1e-15):
        raise ConfigError(f"resonance interval must be a nonempty part of (0, 1], got {T_interval}")
    flo, fhi = Fraction(lo), Fraction(hi)
    out = []
    for J in range(J_max + 1):
        if not spec.allows(J):
            continue
        q = 2 * J + 3
        m_lo = max(1, math.ceil(flo * q))
        m_hi = math.floor(fhi * q)
        out.extend(ResonanceMarker.make(J, m) for m in range(m_lo, m_hi + 1))
    out.sort(key=lambda mk: (mk.exact, mk.J))
    return out


def nearest_resonance_distance(T_over_Trev: float, J_set) -> tuple[float, ResonanceMarker]:
    """Smallest |T - m/(2J+3)| over J in ``J_set`` and all integers m.

    The distance is returned in units of T_rev together with the marker
    that achieves it (lowest J and m on ties).
    """
    J_set = sorted(set(int(j) for j in J_set))
    if not J_set:
        raise ConfigError("J_set must be nonempty")
    best = None
    for J in J_set:
        q = 2 * J + 3
        m0 = math.floor(T_over_Trev * q)
        for m in (m0, m0 + 1):
            d = abs(T_over_Trev - m / q)
            if best is None or d < best[0]:
                best = (d, ResonanceMarker.make(J, m))
    return best


def markers_to_csv(markers, spec: RotorSpec = OXYGEN) -> str:
    """CSV text with columns J, m, T_over_Trev, T_ps."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["J", "m", "T_over_Trev", "T_ps"])
    for mk in markers:
        w.writerow([mk.J, mk.order_m, repr(mk.T_over_Trev), repr(mk.T_over_Trev * spec.revival_time_ps)])
    return buf.getvalue()


def overlay_to_csv(overlays, spec: RotorSpec = OXYGEN) -> str:
    """CSV of protocol periods (label, T_over_Trev, T_ps) to draw over a resonance map."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "T_over_Trev", "T_ps"])
    for label, T in overlays:
        w.writerow([label, repr(float(T)), repr(float(T) * spec.revival_time_ps)])
    return buf.getvalue()
