"""Pulse-train protocols: periodic trains and sets, timing jitter, amplitude noise.

Times and durations are in units of T_rev.  Random draws use numpy's
``Generator(PCG64(seed))``; the stream for a given integer seed is fixed by
the PCG64 algorithm and numpy's ziggurat normal sampler, so generated
trains are identical across platforms.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GenerationError
from .lattice import nearest_resonance_distance
from .rotor import O2_REVIVAL_TIME_PS

MAX_REJECTIONS = 10_000
MAX_SET_ATTEMPTS = 1_000
SHAPER_WINDOW_PS = 50.0
DESIGNS = ("periodic-interval", "jitter", "jitter-avoiding")


@dataclass(frozen=True)
class Pulse:
    time: float
    strength: float
    fwhm: float = 0.0

    def __post_init__(self):
        if self.strength < 0:
            raise ConfigError(f"pulse strength must be >= 0, got {self.strength}")
        if self.fwhm < 0:
            raise ConfigError(f"pulse fwhm must be >= 0, got {self.fwhm}")


@dataclass
class PulseTrain:
    pulses: list
    label: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.pulses = list(self.pulses)
        if not self.pulses:
            raise ConfigError("a pulse train needs at least one pulse")
        for a, b in zip(self.pulses, self.pulses[1:]):
            if not b.time > a.time:
                raise ConfigError(f"pulse times must increase strictly ({a.time} -> {b.time})")
            if b.time - a.time <= 3 * max(a.fwhm, b.fwhm):
                raise ConfigError(
                    f"pulses at {a.time} and {b.time} overlap (gap <= 3 x FWHM)"
                )

    def __len__(self):
        return len(self.pulses)

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.pulses])

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def strengths(self) -> np.ndarray:
        return np.array([p.strength for p in self.pulses])

    def to_dict(self, revival_time_ps: float = O2_REVIVAL_TIME_PS) -> dict:
        return {
            "label": self.label,
            "seed": self.seed,
            "pulses": [
                {
                    "t_ps": p.time * revival_time_ps,
                    "t_over_Trev": p.time,
                    "P": p.strength,
                    "fwhm_ps": p.fwhm * revival_time_ps,
                }
                for p in self.pulses
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, revival_time_ps: float = O2_REVIVAL_TIME_PS) -> "PulseTrain":
        pulses = [
            Pulse(float(p["t_over_Trev"]), float(p["P"]), float(p["fwhm_ps"]) / revival_time_ps)
            for p in d["pulses"]
        ]
        return cls(pulses, d.get("label", ""), d.get("seed"))

    def to_json(self, revival_time_ps: float = O2_REVIVAL_TIME_PS) -> str:
        return json.dumps(self.to_dict(revival_time_ps), sort_keys=True)


@dataclass
class TrainSet:
    trains: list
    design: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ConfigError(f"design must be one of {DESIGNS}, got {self.design!r}")
        if not self.trains:
            raise ConfigError("a train set needs at least one train")
        n = {len(t) for t in self.trains}
        if len(n) != 1:
            raise ConfigError(f"all trains in a set must have the same pulse count, got {sorted(n)}")

    def __len__(self):
        return len(self.trains)

    def __iter__(self):
        return iter(self.trains)

    @property
    def n_pulses(self) -> int:
        return len(self.trains[0])

    def all_intervals(self) -> np.ndarray:
        return np.concatenate([t.intervals for t in self.trains])

    def to_dict(self, revival_time_ps: float = O2_REVIVAL_TIME_PS) -> dict:
        return {
            "design": self.design,
            "parameters": self.parameters,
            "trains": [t.to_dict(revival_time_ps) for t in self.trains],
        }

    @classmethod
    def from_dict(cls, d: dict, revival_time_ps: float = O2_REVIVAL_TIME_PS) -> "TrainSet":
        trains = [PulseTrain.from_dict(t, revival_time_ps) for t in d["trains"]]
        return cls(trains, d["design"], dict(d.get("parameters", {})))


def _train_from_intervals(intervals, P, fwhm, label, seed=None) -> PulseTrain:
    times = np.concatenate([[0.0], np.cumsum(intervals)])
    return PulseTrain([Pulse(float(t), float(P), float(fwhm)) for t in times], label, seed)


def periodic_train(
    N: int,
    T_over_Trev: float,
    P: float,
    fwhm: float = 0.0,
    *,
    revival_time_ps: float = O2_REVIVAL_TIME_PS,
    window_limit_ps: float = SHAPER_WINDOW_PS,
) -> PulseTrain:
    """N equal pulses at 0, T, 2T, ..., (N-1)T.

    Warns (does not fail) when the train is longer than the pulse-shaper
    window ``window_limit_ps``.
    """
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    if not T_over_Trev > 0:
        raise ConfigError(f"period must be > 0, got {T_over_Trev}")
    train = _train_from_intervals([T_over_Trev] * (N - 1), P, fwhm, f"periodic T={T_over_Trev:.6g}")
    span = train.times[-1] * revival_time_ps
    if span > window_limit_ps:
        warnings.warn(
            f"train spans {span:.1f} ps, beyond the {window_limit_ps:g} ps shaper window",
            stacklevel=2,
        )
    return train


def periodic_set(N, interval, count, P, fwhm=0.0, **kwargs) -> TrainSet:
    """``count`` periodic trains with periods evenly spaced over ``interval`` (inclusive)."""
    if count < 2:
        raise ConfigError(f"count must be >= 2, got {count}")
    lo, hi = interval
    periods = np.linspace(lo, hi, count)
    trains = [periodic_train(N, float(T), P, fwhm, **kwargs) for T in periods]
    params = {"N": N, "interval": [lo, hi], "count": count, "P": P, "fwhm": fwhm}
    return TrainSet(trains, "periodic-interval", params)


def _draw_interval(rng, mean_T, sigma, floor, avoid):
    for _ in range(MAX_REJECTIONS):
        x = mean_T + sigma * rng.standard_normal()
        if x < floor:
            continue
        if avoid is not None:
            d, _ = nearest_resonance_distance(x, avoid[0])
            if d < avoid[1]:
                continue
        return x
    what = f"interval >= {floor:.4g} T_rev"
    if avoid is not None:
        what += f" and >= {avoid[1]:.4g} T_rev from resonances of J in {sorted(avoid[0])}"
    raise GenerationError(
        f"no admissible interval after {MAX_REJECTIONS} draws (mean {mean_T}, sigma {sigma}): "
        f"constraint {what}"
    )


def jittered_train(
    N: int,
    mean_T: float,
    sigma_frac: float,
    seed: int,
    avoid=None,
    P: float = 0.0,
    fwhm: float = 0.0,
) -> PulseTrain:
    """Train whose N-1 intervals are independent Gaussian draws.

    Intervals have mean ``mean_T`` and standard deviation
    ``sigma_frac * mean_T``; draws shorter than 3 x FWHM are rejected, and
    with ``avoid=(J_set, min_distance)`` so are draws closer than
    ``min_distance`` (T_rev units) to any resonance of J in J_set.
    """
    if sigma_frac < 0:
        raise ConfigError(f"sigma_frac must be >= 0, got {sigma_frac}")
    if not mean_T > 0:
        raise ConfigError(f"mean period must be > 0, got {mean_T}")
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    rng = np.random.Generator(np.random.PCG64(seed))
    sigma = sigma_frac * mean_T
    floor = 3 * fwhm
    if avoid is not None:
        avoid = (tuple(sorted(avoid[0])), float(avoid[1]))
    if sigma == 0:
        if mean_T <= floor:
            raise GenerationError(f"period {mean_T} below 3 x FWHM")
        intervals = [_draw_interval(rng, mean_T, 0.0, floor, avoid)] * (N - 1) if N > 1 else []
    else:
        intervals = [_draw_interval(rng, mean_T, sigma, floor, avoid) for _ in range(N - 1)]
    label = f"jitter T={mean_T:.6g} sigma={sigma_frac:.3g} seed={seed}"
    return _train_from_intervals(intervals, P, fwhm, label, seed)


def set_statistics_ok(intervals, mean_T, sigma_frac) -> bool:
    """Aggregate checks on all intervals of a jittered set.

    Sample mean within 5 % of ``mean_T`` and sample standard deviation within
    15 % of the target ``sigma_frac * mean_T``.
    """
    x = np.asarray(intervals, dtype=float)
    if abs(x.mean() - mean_T) > 0.05 * mean_T:
        return False
    target = sigma_frac * mean_T
    if target == 0:
        return bool(np.allclose(x, mean_T, rtol=1e-12, atol=0.0))
    s = x.std(ddof=1) if x.size > 1 else 0.0
    return abs(s - target) <= 0.15 * target


def jittered_set(
    count: int,
    N: int,
    mean_T: float,
    sigma_frac: float,
    base_seed: int,
    avoid=None,
    P: float = 0.0,
    fwhm: float = 0.0,
) -> TrainSet:
    """``count`` jittered trains whose pooled intervals match the target statistics.

    Attempt ``a`` builds train ``i`` from seed ``base_seed + a*count + i``;
    attempts continue until the pooled intervals pass
    :func:`set_statistics_ok`.
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    for attempt in range(MAX_SET_ATTEMPTS):
        seeds = [base_seed + attempt * count + i for i in range(count)]
        trains = [jittered_train(N, mean_T, sigma_frac, s, avoid, P, fwhm) for s in seeds]
        pooled = np.concatenate([t.intervals for t in trains]) if N > 1 else np.array([mean_T])
        if set_statistics_ok(pooled, mean_T, sigma_frac):
            break
    else:
        raise GenerationError(
            f"no jittered set with mean {mean_T} and sigma {sigma_frac:.0%} "
            f"after {MAX_SET_ATTEMPTS} attempts"
        )
    params = {
        "count": count,
        "N": N,
        "mean_T": mean_T,
        "sigma_frac": sigma_frac,
        "base_seed": base_seed,
        "attempt": attempt,
        "avoid": None if avoid is None else {"J": sorted(avoid[0]), "min_distance": avoid[1]},
        "P": P,
        "fwhm": fwhm,
    }
    return TrainSet(trains, "jitter" if avoid is None else "jitter-avoiding", params)


def amplitude_noise(train: PulseTrain, sigma_P_frac: float, seed: int) -> PulseTrain:
    """Multiply every strength by an independent factor ~ N(1, sigma), clipped at 0."""
    if sigma_P_frac < 0:
        raise ConfigError(f"sigma_P_frac must be >= 0, got {sigma_P_frac}")
    if sigma_P_frac == 0:
        return PulseTrain(list(train.pulses), train.label, train.seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    factors = np.maximum(0.0, 1.0 + sigma_P_frac * rng.standard_normal(len(train)))
    pulses = [Pulse(p.time, p.strength * float(f), p.fwhm) for p, f in zip(train.pulses, factors)]
    return PulseTrain(pulses, f"{train.label} ampnoise={sigma_P_frac:g}", train.seed)


def noisy_set(train_set: TrainSet, sigma_P_frac: float, base_seed: int) -> TrainSet:
    """Apply :func:`amplitude_noise` to every train, seeds ``base_seed + i``."""
    trains = [amplitude_noise(t, sigma_P_frac, base_seed + i) for i, t in enumerate(train_set)]
    params = dict(train_set.parameters, amplitude_noise=sigma_P_frac, amplitude_seed=base_seed)
    return TrainSet(trains, train_set.design, params)


def min_resonance_distance(train_set: TrainSet, J_set) -> float:
    """Smallest distance (T_rev units) of any interval of the set to a resonance."""
    return min(nearest_resonance_distance(float(x), J_set)[0] for x in train_set.all_intervals())
