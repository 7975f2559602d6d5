"""Thermal ensemble x pulse-train set -> averaged kick-by-kick J distributions."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LeakageError
from .propagation import DEFAULT_N_SUB, PropagatorCache, RotState, evolve_train
from .pulses import TrainSet
from .rotor import BasisBlock, RotorSpec, rot_energy, thermal_weights


@dataclass
class EnsembleResult:
    """Averaged populations, ``p_of_J_after_kick[n, J]`` for n = 0..N, J = 0..j_max."""

    p_of_J_after_kick: np.ndarray
    metadata: dict = field(default_factory=dict)
    per_train: list | None = None

    @property
    def n_kicks(self) -> int:
        return self.p_of_J_after_kick.shape[0] - 1

    @property
    def final(self) -> np.ndarray:
        return self.p_of_J_after_kick[-1]

    @property
    def n_trains(self) -> int:
        return int(self.metadata.get("n_trains", 1))

    def to_csv(self) -> str:
        p = self.p_of_J_after_kick
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kick"] + [f"J{j}" for j in range(p.shape[1])])
        for n, row in enumerate(p):
            w.writerow([n] + [repr(float(x)) for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"metadata": self.metadata, "p_of_J_after_kick": self.p_of_J_after_kick.tolist()}
        if self.per_train is not None:
            doc["per_train"] = [p.tolist() for p in self.per_train]
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_csv(cls, text: str) -> "EnsembleResult":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        rows = list(csv.reader(lines))
        if not rows:
            raise ConfigError("population CSV is empty")
        header, body = rows[0], rows[1:]
        if header[0] != "kick" or not all(h.startswith("J") for h in header[1:]):
            raise ConfigError("population CSV must have columns kick, J0, J1, ...")
        js = [int(h[1:]) for h in header[1:]]
        p = np.zeros((len(body), max(js) + 1))
        for i, row in enumerate(body):
            p[i, js] = [float(x) for x in row[1:]]
        return cls(p, {"source": "csv"})

    @staticmethod
    def combine(results: list) -> "EnsembleResult":
        """Merge results over disjoint train subsets, weighted by train count."""
        counts = np.array([r.n_trains for r in results], dtype=float)
        p = sum(c * r.p_of_J_after_kick for c, r in zip(counts, results)) / counts.sum()
        meta = dict(results[0].metadata, n_trains=int(counts.sum()))
        return EnsembleResult(p, meta)


@dataclass
class EnergyCurve:
    hcB: np.ndarray
    cm: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kick", "E_hcB", "E_cm"])
        for n, (a, b) in enumerate(zip(self.hcB, self.cm)):
            w.writerow([n, repr(float(a)), repr(float(b))])
        return buf.getvalue()


def initial_ensemble(spec: RotorSpec, temperature: float, cutoff: float = 0.999):
    """One basis state |J, M> per retained thermal level, with its weight."""
    return [
        (RotState.basis(spec, J, M), w)
        for J, M, w in thermal_weights(spec, temperature, cutoff)
    ]


def _member_key(state: RotState):
    return (abs(state.block.m), state.block.j_list, state.amplitudes.tobytes())


def _collapse(ensemble, use_m_symmetry: bool):
    """Merge +M/-M members (identical dynamics); order by (J0, |M|, M)."""
    groups: dict = {}
    order = []
    for state, w in ensemble:
        key = _member_key(state) if use_m_symmetry else (id(state),)
        if key in groups:
            groups[key][1] += w
        else:
            groups[key] = [state, w]
            order.append(key)
    members = [tuple(groups[k]) for k in order]

    def sort_key(item):
        st = item[0]
        j0 = st.block.j_list[int(np.argmax(np.abs(st.amplitudes)))]
        return (j0, abs(st.block.m), st.block.m)

    members.sort(key=sort_key)
    if use_m_symmetry:
        members = [
            (RotState(st.block, st.amplitudes) if st.block.m >= 0 else _flip_m(st), w)
            for st, w in members
        ]
    return members


def _flip_m(state: RotState) -> RotState:
    return RotState(BasisBlock(-state.block.m, state.block.j_list), state.amplitudes)


def run_ensemble(
    ensemble,
    train_set: TrainSet,
    mode: str,
    spec: RotorSpec,
    *,
    n_sub: int = DEFAULT_N_SUB,
    use_m_symmetry: bool = True,
    workers: int = 1,
    keep_per_train: bool = False,
    cache: PropagatorCache | None = None,
    metadata: dict | None = None,
) -> EnsembleResult:
    """Evolve every (member, train) pair and average the J populations.

    Weights are the member weight times 1/len(train_set).  Each train's
    member sum is accumulated in the fixed member order, then trains are
    averaged in set order, so the result does not depend on ``workers``.
    """
    if not ensemble:
        raise ConfigError("empty initial ensemble")
    members = _collapse(ensemble, use_m_symmetry)
    cache = cache if cache is not None else PropagatorCache()
    trains = list(train_set)
    n_rows = train_set.n_pulses + 1
    width = spec.j_max + 1

    def job(ti_mi):
        ti, mi = ti_mi
        state, w = members[mi]
        try:
            traj = evolve_train(state, trains[ti], mode, spec, n_sub, cache)
        except LeakageError as exc:
            j0 = state.block.j_list[int(np.argmax(np.abs(state.amplitudes)))]
            raise LeakageError(
                exc.kick_index, exc.population, member=f"J={j0}, M={state.block.m}, train={ti}"
            ) from None
        out = np.zeros((n_rows, width))
        out[:, list(state.block.j_list)] = np.array(traj.populations_after_kick)
        return out

    grid = [(ti, mi) for ti in range(len(trains)) for mi in range(len(members))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pops = list(pool.map(job, grid))
    else:
        pops = [job(g) for g in grid]

    per_train = []
    k = 0
    for ti in range(len(trains)):
        acc = np.zeros((n_rows, width))
        for mi in range(len(members)):
            acc += members[mi][1] * pops[k]
            k += 1
        per_train.append(acc)
    total = np.zeros((n_rows, width))
    for acc in per_train:
        total += acc
    total /= len(trains)

    meta = {
        "spec": spec.to_dict(),
        "mode": mode,
        "n_sub": n_sub if mode == "finite" else None,
        "n_trains": len(trains),
        "n_members": len(members),
        "train_set": train_set.to_dict(spec.revival_time_ps),
        "seeds": [t.seed for t in trains],
    }
    meta.update(metadata or {})
    return EnsembleResult(total, meta, per_train if keep_per_train else None)


def absorbed_energy_curve(result: EnsembleResult, spec: RotorSpec) -> EnergyCurve:
    """Mean rotational energy sum_J E_J P_J(n) after each kick."""
    js = np.arange(result.p_of_J_after_kick.shape[1])
    e = np.asarray(rot_energy(js, spec), dtype=float)
    hcb = result.p_of_J_after_kick @ e
    return EnergyCurve(hcb, hcb * spec.rot_constant)


def row_norm_error(result: EnsembleResult) -> float:
    return float(np.max(np.abs(result.p_of_J_after_kick.sum(axis=1) - 1.0)))


def saturation_kick(energy, fraction: float = 0.9) -> int:
    """First kick index at which the energy reaches ``fraction`` of its maximum."""
    e = np.asarray(energy, dtype=float)
    e0 = e[0]
    target = e0 + fraction * (e.max() - e0)
    return int(np.argmax(e >= target - 1e-15 * max(1.0, abs(target))))


def relative_variation(energy, start: int, stop: int | None = None) -> float:
    """(max - min) / min of the energy over kicks start..stop inclusive."""
    seg = np.asarray(energy, dtype=float)[start: None if stop is None else stop + 1]
    return float((seg.max() - seg.min()) / seg.min())
