"""Command-line front end: ``kickrotor {resonance-map,simulate,sweep,fit}``.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical error.
The default output directory comes from ``$KICKROTOR_OUTPUT_DIR``
(falling back to ``./kickrotor-out``).
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .analysis import NOISE_FLOOR, classify_shape, fit_window
from .ensemble import EnsembleResult
from .errors import ConfigError, NumericalError
from .lattice import markers_to_csv, overlay_to_csv, resonance_map
from .pipeline import run_protocol, write_outputs
from .propagation import PropagatorCache
from .rotor import RotorSpec

OUTPUT_ENV = "KICKROTOR_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

# Period intervals of the two periodic protocols, drawn over resonance maps.
OVERLAY_INTERVALS = (("set1", 0.26, 0.29), ("set2", 0.315, 0.325))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or "kickrotor-out")


def _interval(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"interval must look like lo:hi, got {text!r}") from None
    return lo, hi


def _load(args) -> dict:
    raw = cfgmod.load_config_file(args.config) if args.config else {}
    sets = list(args.set or [])
    if args.preset:
        sets.append(f"protocol.preset={args.preset}")
    if args.seed is not None:
        sets.append(f"seed={args.seed}")
    if args.mode:
        sets.append(f"simulation.mode={args.mode}")
    if args.workers is not None:
        sets.append(f"simulation.workers={args.workers}")
    if args.output:
        sets.append(f"output.directory={args.output}")
    return cfgmod.resolve(cfgmod.apply_overrides(raw, sets))


def _outdir(cfg: dict) -> Path:
    d = cfg["output"]["directory"]
    return Path(d) if d else default_output_dir()


def cmd_resonance_map(args) -> int:
    lo, hi = _interval(args.t)
    spec = RotorSpec(parity=args.parity)
    markers = resonance_map(args.jmax, (lo, hi), spec)
    out = Path(args.out) if args.out else default_output_dir() / "resonance_map.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(markers_to_csv(markers, spec))
    print(f"{len(markers)} markers -> {out}")
    if not args.no_overlay:
        rows = [(f"{label}_{end}", T) for label, a, b in OVERLAY_INTERVALS for end, T in (("lo", a), ("hi", b))]
        ov = out.with_name(out.stem + "_overlay.csv")
        ov.write_text(overlay_to_csv(rows, spec))
        print(f"overlay -> {ov}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    cache = PropagatorCache()
    outcomes = [run_protocol(cfg, proto, cache) for proto in cfgmod.protocols(cfg)]
    paths = write_outputs(cfg, outcomes, _outdir(cfg))
    for oc in outcomes:
        f = oc.fit
        print(f"{oc.name}: P={oc.kick_strength:g} shape={oc.verdict.label} "
              f"{f.model} J_c={f.center:.3f} width={f.width:.3f}")
    print(f"{len(paths)} files -> {_outdir(cfg)}")
    return EXIT_OK


_SWEEP_KEYS = {"P": "kick_strength", "mean_T": "mean_period_Trev"}


def _sweep_protocol(proto: dict, axis: str, value: float) -> dict:
    p = copy.deepcopy(proto)
    if axis == "P":
        p["kick_strength"] = value
    elif p["design"] == "periodic-interval":
        half = 0.5 * (p["period_hi_Trev"] - p["period_lo_Trev"])
        p["period_lo_Trev"], p["period_hi_Trev"] = value - half, value + half
    else:
        p["mean_period_Trev"] = value
    p["name"] = f"{p['name']}@{axis}={value:g}"
    return p


def sweep_table(cfg: dict, axis: str, values) -> str:
    """CSV with one row per grid point: fitted J_c, width, final energy."""
    protos = cfgmod.protocols(cfg)
    if len(protos) != 1:
        raise ConfigError("sweep needs a single-protocol config (not a multi-run preset)")
    cache = PropagatorCache()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([axis, "shape", "model", "J_c", "width", "residual", "E_final_hcB", "E_final_cm"])
    for v in values:
        oc = run_protocol(cfg, _sweep_protocol(protos[0], axis, float(v)), cache)
        f = oc.fit
        w.writerow([
            repr(float(v)), oc.verdict.label, f.model, repr(f.center), repr(f.width),
            repr(f.rms_log_residual), repr(float(oc.energy.hcB[-1])), repr(float(oc.energy.cm[-1])),
        ])
    return f"# config_hash={cfgmod.config_hash(cfg)} seed={cfg['seed']} axis={axis}\n" + buf.getvalue()


def cmd_sweep(args) -> int:
    cfg = _load(args)
    try:
        values = [float(x) for x in args.values.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    if not values:
        raise ConfigError("--values must list at least one grid point")
    text = sweep_table(cfg, args.axis, values)
    out = _outdir(cfg) / f"sweep_{args.axis}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(f"{len(values)} rows -> {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        text = Path(args.populations).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.populations}: {exc}") from None
    res = EnsembleResult.from_csv(text)
    if not -res.p_of_J_after_kick.shape[0] <= args.kick < res.p_of_J_after_kick.shape[0]:
        raise ConfigError(f"--kick {args.kick} outside 0..{res.n_kicks}")
    p = res.p_of_J_after_kick[args.kick]
    spec = RotorSpec(parity=args.parity, j_max=p.size - 1)
    floor = NOISE_FLOOR if args.noise_floor_mask else 0.0
    verdict = classify_shape(p, fit_window(p, spec), spec, noise_floor=floor)
    doc = {
        "source": str(args.populations),
        "kick": args.kick,
        "shape": verdict.label,
        "score": verdict.score,
        "exponential": verdict.exponential.to_dict(),
        "gaussian": verdict.gaussian.to_dict(),
    }
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _config_flags(p):
    p.add_argument("config", nargs="?", help="YAML config (or a result.json to re-run)")
    p.add_argument("--preset", help="protocol preset, e.g. fig3-1a")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("finite", "delta"))
    p.add_argument("--workers", type=int, help="maximum worker threads")
    p.add_argument("--output", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kickrotor", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("resonance-map", help="resonance markers T/T_rev = m/(2J+3)")
    p.add_argument("--jmax", type=int, default=13)
    p.add_argument("--t", default="0.2:0.45", help="T/T_rev interval lo:hi")
    p.add_argument("--parity", default="odd", choices=("odd", "even", "both"))
    p.add_argument("--out", help="CSV path")
    p.add_argument("--no-overlay", action="store_true", help="skip the protocol-interval overlay file")
    p.set_defaults(func=cmd_resonance_map)

    p = sub.add_parser("simulate", help="run a preset or explicit protocol")
    _config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="scan P or the mean period")
    _config_flags(p)
    p.add_argument("--axis", required=True, choices=tuple(_SWEEP_KEYS))
    p.add_argument("--values", required=True, help="comma-separated grid")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="re-fit a populations CSV")
    p.add_argument("populations")
    p.add_argument("--kick", type=int, default=-1)
    p.add_argument("--parity", default="odd", choices=("odd", "even", "both"))
    p.add_argument("--noise-floor-mask", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
