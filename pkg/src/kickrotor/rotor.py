"""Rigid linear rotor: constants, spectrum, thermal statistics and cos^2 coupling.

Internal units: time in revival periods T_rev, energy in hcB, phases in
radians.  Physical units only appear in the conversion helpers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import constants as sc

from .errors import ConfigError, DomainError

C_CM_PER_PS = sc.c * 100.0 * 1e-12
K_B_CM_PER_K = sc.k / (sc.h * sc.c * 100.0)

O2_REVIVAL_TIME_PS = 11.67

PARITIES = ("odd", "even", "both")


@dataclass(frozen=True)
class RotorSpec:
    """Molecular constants and basis truncation of a linear rotor.

    ``polarizability_anisotropy`` is a polarizability volume in cubic
    angstrom; it is only needed by :func:`kick_strength_from_fluence`.
    """

    revival_time_ps: float = O2_REVIVAL_TIME_PS
    parity: str = "odd"
    centrifugal_const: float = 0.0
    j_max: int = 41
    polarizability_anisotropy: float | None = None

    def __post_init__(self):
        problems = []
        if not self.revival_time_ps > 0:
            problems.append(f"revival_time_ps must be > 0, got {self.revival_time_ps}")
        if self.parity not in PARITIES:
            problems.append(f"parity must be one of {PARITIES}, got {self.parity!r}")
        if int(self.j_max) != self.j_max or self.j_max < 1:
            problems.append(f"j_max must be a positive integer, got {self.j_max}")
        if self.centrifugal_const < 0:
            problems.append("centrifugal_const must be >= 0")
        if problems:
            raise ConfigError("invalid RotorSpec", problems)

    @property
    def rot_constant(self) -> float:
        """Rotational constant B in 1/cm, from T_rev = 1/(2cB)."""
        return 1.0 / (2.0 * C_CM_PER_PS * self.revival_time_ps)

    def allows(self, J: int) -> bool:
        if self.parity == "both":
            return True
        return (J % 2 == 1) == (self.parity == "odd")

    def allowed_j(self) -> list[int]:
        return [J for J in range(self.j_max + 1) if self.allows(J)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RotorSpec":
        return cls(**d)


OXYGEN = RotorSpec()


@dataclass(frozen=True)
class BasisBlock:
    """One Raman-coupled lattice: fixed M, J values of one parity, step 2."""

    m: int
    j_list: tuple[int, ...] = field()

    def __post_init__(self):
        js = tuple(int(j) for j in self.j_list)
        object.__setattr__(self, "j_list", js)
        if not js:
            raise ConfigError(f"empty basis block for m={self.m}")
        if js[0] < abs(self.m):
            raise ConfigError(f"J={js[0]} < |m|={abs(self.m)} in basis block")
        if any(b - a != 2 for a, b in zip(js, js[1:])):
            raise ConfigError(f"basis block J values must step by 2: {js}")

    @property
    def size(self) -> int:
        return len(self.j_list)

    @property
    def j(self) -> np.ndarray:
        return np.asarray(self.j_list)

    def index(self, J: int) -> int:
        return self.j_list.index(J)

    @classmethod
    def for_state(cls, spec: RotorSpec, J: int, m: int) -> "BasisBlock":
        """Block of ``spec`` containing the state |J, m>."""
        if not spec.allows(J):
            raise ConfigError(f"J={J} not allowed for parity={spec.parity!r}")
        if abs(m) > J or J > spec.j_max:
            raise ConfigError(f"invalid state |J={J}, M={m}> for j_max={spec.j_max}")
        start = abs(m) if (abs(m) - J) % 2 == 0 else abs(m) + 1
        return cls(m, tuple(range(start, spec.j_max + 1, 2)))


def rot_energy(J, spec: RotorSpec = OXYGEN):
    """Rotational energy in units of hcB (scalar or array).

    E = J(J+1) - (D/B) J^2 (J+1)^2, with D the centrifugal constant.
    """
    Ja = np.asarray(J)
    if np.any(Ja < 0):
        raise DomainError(f"rotational quantum number must be >= 0, got {J}")
    x = Ja * (Ja + 1)
    if spec.centrifugal_const:
        x = x - (spec.centrifugal_const / spec.rot_constant) * x.astype(float) ** 2
    return x if np.ndim(J) else x.item()


def rot_energy_cm(J, spec: RotorSpec = OXYGEN):
    """Rotational energy in 1/cm."""
    return spec.rot_constant * np.asarray(rot_energy(J, spec), dtype=float)


def thermal_weights(spec: RotorSpec, temperature: float, cutoff: float = 0.999):
    """Boltzmann weights of the |J, M> levels, heaviest first.

    Levels are kept in order of decreasing weight until the running total
    reaches ``cutoff``; the retained weights are renormalised to one.
    Ties are ordered by (J, M) so the output is deterministic.

    Returns a list of ``(J, M, weight)`` tuples.
    """
    if not temperature > 0:
        raise ConfigError(f"temperature must be > 0 K, got {temperature}")
    if not 0.0 < cutoff < 1.0:
        raise ConfigError(f"cutoff must lie in (0, 1), got {cutoff}")
    js = np.array(spec.allowed_j())
    if js.size == 0:
        raise ConfigError("no allowed rotational levels")
    beta = spec.rot_constant / (K_B_CM_PER_K * temperature)
    e = np.asarray(rot_energy(js, spec), dtype=float)
    w_j = np.exp(-beta * (e - e.min()))
    z = float(np.sum((2 * js + 1) * w_j))
    # Distribution must be converged inside the basis.
    top = js >= js[-1] - 2
    tail = float(np.sum((2 * js[top] + 1) * w_j[top])) / z
    if tail > 1e-6:
        raise ConfigError(
            f"thermal distribution at {temperature} K is not converged below "
            f"j_max={spec.j_max} (top-site weight {tail:.2e}); raise j_max or lower T"
        )
    levels = [
        (int(J), M, float(w) / z)
        for J, w in zip(js, w_j)
        for M in range(-int(J), int(J) + 1)
    ]
    levels.sort(key=lambda t: (-t[2], t[0], t[1]))
    kept, running = [], 0.0
    for lvl in levels:
        if lvl[2] <= 0.0:
            break
        kept.append(lvl)
        running += lvl[2]
        if running >= cutoff:
            break
    if not kept:
        raise ConfigError("cutoff excludes every thermal level")
    total = math.fsum(w for _, _, w in kept)
    return [(J, M, w / total) for J, M, w in kept]


def cos2_elements(J, m):
    """Closed-form <J,m|cos^2|J,m> and <J+2,m|cos^2|J,m> (arrays allowed)."""
    J = np.asarray(J, dtype=float)
    m2 = float(m) ** 2
    diag = 1.0 / 3.0 + (2.0 / 3.0) * (J * (J + 1) - 3 * m2) / ((2 * J - 1) * (2 * J + 3))
    off = np.sqrt(((J + 1) ** 2 - m2) * ((J + 2) ** 2 - m2)) / (
        (2 * J + 3) * np.sqrt((2 * J + 1) * (2 * J + 5))
    )
    return diag, off


def cos2_matrix(block: BasisBlock) -> np.ndarray:
    """Real symmetric matrix of cos^2(theta) over ``block.j_list``."""
    js = block.j
    diag, off = cos2_elements(js, block.m)
    mat = np.diag(diag)
    if js.size > 1:
        k = np.arange(js.size - 1)
        mat[k, k + 1] = off[:-1]
        mat[k + 1, k] = off[:-1]
    return mat


def kick_strength_from_fluence(fluence_integral: float, spec: RotorSpec) -> float:
    """Dimensionless kick strength P = (Delta alpha / 4 hbar) * integral E^2 dt.

    ``fluence_integral`` is the time integral of the squared field envelope
    in V^2 s / m^2.  The anisotropy is taken from ``spec`` as a polarizability
    volume in cubic angstrom and converted to SI via 4 pi eps0.
    """
    if spec.polarizability_anisotropy is None:
        raise ConfigError("kick_strength_from_fluence needs spec.polarizability_anisotropy")
    d_alpha = 4 * math.pi * sc.epsilon_0 * spec.polarizability_anisotropy * 1e-30
    return d_alpha * fluence_integral / (4 * sc.hbar)


def gaussian_fluence_integral(peak_intensity_w_cm2: float, fwhm_fs: float) -> float:
    """Integral of E^2 dt for a Gaussian intensity profile, in V^2 s / m^2."""
    intensity = peak_intensity_w_cm2 * 1e4
    area = intensity * fwhm_fs * 1e-15 * math.sqrt(math.pi / (4 * math.log(2)))
    return 2 * area / (sc.c * sc.epsilon_0)


def kick_params(T_over_Trev: float, P: float) -> tuple[float, float]:
    """Effective Planck constant tau = 2 pi T/T_rev and stochasticity K = tau P."""
    if not T_over_Trev > 0:
        raise DomainError("pulse period must be > 0")
    if P < 0:
        raise DomainError("kick strength must be >= 0")
    tau = 2 * math.pi * T_over_Trev
    return tau, tau * P


def ps_to_trev(t_ps, spec: RotorSpec = OXYGEN):
    return t_ps / spec.revival_time_ps


def trev_to_ps(t, spec: RotorSpec = OXYGEN):
    return t * spec.revival_time_ps
