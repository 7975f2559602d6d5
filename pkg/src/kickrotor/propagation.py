"""Unitary propagators for the kicked rotor and evolution through pulse trains.

Every operator acts on a single :class:`~kickrotor.rotor.BasisBlock`; blocks
of different M (and different J parity) never mix, so M and parity
conservation hold by construction.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, LeakageError
from .rotor import OXYGEN, BasisBlock, RotorSpec, cos2_matrix, rot_energy

LEAKAGE_THRESHOLD = 1e-6
DEFAULT_N_SUB = 64
#: Gaussian envelopes are cut at +-PULSE_HALF_WINDOW * FWHM.
PULSE_HALF_WINDOW = 2.5
MODES = ("delta", "finite")


@dataclass
class RotState:
    block: BasisBlock
    amplitudes: np.ndarray

    @classmethod
    def basis(cls, spec: RotorSpec, J: int, m: int) -> "RotState":
        block = BasisBlock.for_state(spec, J, m)
        amps = np.zeros(block.size, dtype=complex)
        amps[block.index(J)] = 1.0
        return cls(block, amps)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.populations()))

    def fidelity(self, other: "RotState") -> float:
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)


@dataclass
class Trajectory:
    """States and per-J populations; index n is the state after n kicks."""

    states_after_kick: list
    populations_after_kick: list

    @property
    def block(self) -> BasisBlock:
        return self.states_after_kick[0].block

    @property
    def final(self) -> RotState:
        return self.states_after_kick[-1]


def _energies(block: BasisBlock, spec: RotorSpec) -> np.ndarray:
    return np.asarray(rot_energy(block.j, spec), dtype=float)


def free_propagator(dt: float, block: BasisBlock, spec: RotorSpec = OXYGEN) -> np.ndarray:
    """Diagonal of exp(-i H0 dt) with dt in units of T_rev.

    In these units the phase of level J is pi * E_J * dt with E_J in hcB.
    """
    if dt < 0:
        raise ConfigError(f"free evolution time must be >= 0, got {dt}")
    return _free_phases(dt, block, spec)


def _free_phases(dt, block, spec):
    # phase reduced modulo 2 pi before exponentiating; exact identity at dt = 1
    e = _energies(block, spec)
    return np.exp(-2j * math.pi * np.mod(0.5 * e * dt, 1.0))


@lru_cache(maxsize=256)
def _cos2_eig(block: BasisBlock):
    w, v = np.linalg.eigh(cos2_matrix(block))
    return w, v


def delta_kick(P: float, block: BasisBlock) -> np.ndarray:
    """Impulsive kick exp(+i P cos^2(theta)) on ``block``."""
    if P < 0:
        raise ConfigError(f"kick strength must be >= 0, got {P}")
    if P == 0:
        return np.eye(block.size, dtype=complex)
    w, v = _cos2_eig(block)
    return (v * np.exp(1j * P * w)) @ v.T


# Sixth-order Magnus integrator on three Gauss-Legendre nodes, composed by a
# symmetric triple jump into an eighth-order step.
_GAUSS_X = np.array([0.5 - math.sqrt(15) / 10, 0.5, 0.5 + math.sqrt(15) / 10])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0
_YOSHIDA_1 = 1.0 / (2.0 - 2.0 ** (1.0 / 7.0))
_YOSHIDA = (_YOSHIDA_1, 1.0 - 2.0 * _YOSHIDA_1, _YOSHIDA_1)


def _comm(a, b):
    return a @ b - b @ a


def _magnus6(h0_diag, c2, h, f1, f2, f3):
    """exp(Omega) for one Magnus-6 step of length h with envelope samples f_i.

    H(t) = diag(h0_diag) - f(t) * c2.  Returns a unitary matrix.
    """
    n = h0_diag.size
    a = []
    for f in (f1, f2, f3):
        m = -f * c2.astype(complex)
        m[np.diag_indices(n)] += h0_diag
        a.append(-1j * h * m)
    a1 = a[1]
    a2 = (math.sqrt(15) / 3) * (a[2] - a[0])
    a3 = (10.0 / 3.0) * (a[2] - 2 * a[1] + a[0])
    c1 = _comm(a1, a2)
    cc = -_comm(a1, 2 * a3 + c1) / 60.0
    omega = a1 + a3 / 12.0 + _comm(-20 * a1 - a3 + c1, a2 + cc) / 240.0
    # omega is anti-Hermitian; exponentiate through the Hermitian i*omega
    herm = 1j * omega
    herm = 0.5 * (herm + herm.conj().T)
    lam, vec = np.linalg.eigh(herm)
    return (vec * np.exp(-1j * lam)) @ vec.conj().T


def envelope_nodes(fwhm: float, n_sub: int):
    """Sample times, signed quadrature weights and envelope values of a pulse.

    The intensity envelope is a Gaussian of the given FWHM truncated to
    +-2.5 FWHM and scaled so that the discrete weighted sum is exactly 1.
    Returns arrays of shape (n_sub, 3 jumps, 3 nodes) plus the per-jump
    step lengths.
    """
    half = PULSE_HALF_WINDOW * fwhm
    if n_sub < 1:
        raise ConfigError(f"n_sub must be >= 1, got {n_sub}")
    dt = 2 * half / n_sub
    if not dt > 16 * np.finfo(float).eps * half:
        raise ConfigError(f"n_sub={n_sub} too large for fwhm={fwhm}: substep underflows")
    starts = -half + dt * np.arange(n_sub)
    steps = dt * np.array(_YOSHIDA)
    offsets = np.concatenate([[0.0], np.cumsum(steps)[:-1]])
    t = starts[:, None, None] + offsets[None, :, None] + steps[None, :, None] * _GAUSS_X
    w = steps[None, :, None] * _GAUSS_W * np.ones_like(t)
    sigma = fwhm / (2 * math.sqrt(2 * math.log(2)))
    f = np.exp(-0.5 * (t / sigma) ** 2)
    f = f / np.sum(w * f)
    return t, w, f, steps


def finite_pulse(
    P: float,
    fwhm: float,
    n_sub: int = DEFAULT_N_SUB,
    block: BasisBlock | None = None,
    spec: RotorSpec = OXYGEN,
) -> np.ndarray:
    """Propagator of a Gaussian pulse of area P and duration ``fwhm`` (T_rev units).

    The pulse window [-2.5 FWHM, 2.5 FWHM] is split into ``n_sub`` equal
    substeps, each integrated with an eighth-order Magnus scheme (kinetic
    term included exactly to that order).  The result is referred to the
    pulse centre, i.e. the free evolution over the window is removed on both
    sides, so that it replaces a delta kick at the same instant and tends to
    ``delta_kick(P, block)`` as fwhm -> 0.
    """
    if block is None:
        raise ConfigError("finite_pulse needs a basis block")
    if P < 0:
        raise ConfigError(f"kick strength must be >= 0, got {P}")
    if fwhm < 0:
        raise ConfigError(f"fwhm must be >= 0, got {fwhm}")
    if int(n_sub) != n_sub or n_sub < 1:
        raise ConfigError(f"n_sub must be a positive integer, got {n_sub}")
    if fwhm == 0 or P == 0:
        return delta_kick(P, block)
    t, w, f, steps = envelope_nodes(fwhm, int(n_sub))
    f = P * f
    h0 = math.pi * _energies(block, spec)
    c2 = cos2_matrix(block)
    u = np.eye(block.size, dtype=complex)
    for k in range(int(n_sub)):
        for j, h in enumerate(steps):
            u = _magnus6(h0, c2, h, *f[k, j]) @ u
    back = np.exp(1j * h0 * PULSE_HALF_WINDOW * fwhm)
    return back[:, None] * u * back[None, :]


class PropagatorCache:
    """Kick operators keyed by (mode, P, fwhm, n_sub, block, spec).

    Reads are lock-free; insertion is serialised so concurrent workers never
    build the same entry twice.
    """

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._store)

    def kick(self, P, fwhm, mode, block, spec, n_sub=DEFAULT_N_SUB):
        if mode == "delta" or fwhm == 0:
            key = ("delta", float(P), block)
        else:
            key = ("finite", float(P), float(fwhm), int(n_sub), block, spec)
        op = self._store.get(key)
        if op is None:
            with self._lock:
                op = self._store.get(key)
                if op is None:
                    if key[0] == "delta":
                        op = delta_kick(P, block)
                    else:
                        op = finite_pulse(P, fwhm, n_sub, block, spec)
                    op.setflags(write=False)
                    self._store[key] = op
        return op


def leakage(populations: np.ndarray, block: BasisBlock, spec: RotorSpec) -> float:
    """Population in the two highest lattice sites, if they reach j_max."""
    if block.j_list[-1] < spec.j_max - 1 or block.size < 3:
        return 0.0
    return float(np.sum(populations[-2:]))


def evolve_train(
    initial: RotState,
    train,
    mode: str = "delta",
    spec: RotorSpec = OXYGEN,
    n_sub: int = DEFAULT_N_SUB,
    cache: PropagatorCache | None = None,
    leakage_threshold: float | None = LEAKAGE_THRESHOLD,
) -> Trajectory:
    """Propagate ``initial`` through every pulse of ``train``.

    Free evolution over the inter-pulse gaps alternates with the kick
    operator of each pulse (``mode`` ``"delta"`` or ``"finite"``).  Entry n
    of the returned trajectory is the state right after the n-th pulse.
    ``leakage_threshold=None`` disables the basis-truncation guard.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    pulses = list(train.pulses if hasattr(train, "pulses") else train)
    if not pulses:
        raise ConfigError("pulse train is empty")
    times = [p.time for p in pulses]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError("pulse times must be strictly increasing")
    cache = cache if cache is not None else PropagatorCache()
    block = initial.block
    psi = np.asarray(initial.amplitudes, dtype=complex).copy()
    states = [RotState(block, psi.copy())]
    pops = [np.abs(psi) ** 2]
    t_prev = None
    for n, pulse in enumerate(pulses, start=1):
        if t_prev is not None:
            psi = _free_phases(pulse.time - t_prev, block, spec) * psi
        op = cache.kick(pulse.strength, pulse.fwhm, mode, block, spec, n_sub)
        psi = op @ psi
        t_prev = pulse.time
        p = np.abs(psi) ** 2
        leak = leakage(p, block, spec)
        if leakage_threshold is not None and leak > leakage_threshold:
            raise LeakageError(n, leak)
        states.append(RotState(block, psi.copy()))
        pops.append(p)
    return Trajectory(states, pops)
