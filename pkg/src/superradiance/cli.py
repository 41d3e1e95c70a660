"""Command-line front end.

Exit codes: 0 success, 2 invalid arguments, 3 I/O failure, 4 numerical
failure. The default seed may be set with the ``SUPERRADIANCE_SEED``
environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import analytic, estimator, io, quantum
from .exceptions import DomainError, NumericalError, ResourceError
from .model import CorrelationCurve, DetectorSet, EmitterChain

log = logging.getLogger("superradiance")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "SUPERRADIANCE_SEED"
TEMPLATES = {"spe": "spe", "eq3": "spe", "tls": "tls", "eq5": "tls"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Fully resolved parameters of one run, stored next to every output."""

    subcommand: str
    model: Optional[str] = None
    n: Optional[int] = None
    kd: Optional[float] = None
    intensity: float = 1.0
    amplitude: float = 1.0
    m: Optional[int] = None
    theta1: float = 0.0
    grid: Optional[list] = None  # [start, stop, count] in radians
    realizations: Optional[int] = None
    seed: Optional[int] = None
    inputs: dict = field(default_factory=dict)
    output: Optional[str] = None
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def chain(self) -> EmitterChain:
        return EmitterChain(self.n, self.kd, self.model, self.intensity, self.amplitude)

    def grid_values(self) -> np.ndarray:
        start, stop, count = self.grid
        return np.linspace(start, stop, int(count))


def parse_kd(text: str) -> float:
    """``pi``, ``2pi``, ``2*pi``, ``pi/2`` or a plain real number."""
    s = text.strip().lower().replace(" ", "")
    m = re.fullmatch(r"([0-9.eE+-]*)\*?pi(?:/([0-9.eE+-]+))?", s)
    try:
        if m:
            coef = float(m.group(1)) if m.group(1) not in ("", "+") else 1.0
            if m.group(1) == "-":
                coef = -1.0
            value = coef * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
        else:
            value = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid kd {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("kd must be positive")
    return value


def parse_grid(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be start:stop:count")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}") from None
    if count < 1:
        raise argparse.ArgumentTypeError("grid count must be >= 1")
    return [start, stop, count]


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _grid_radians(grid, degrees):
    if degrees:
        return [math.radians(grid[0]), math.radians(grid[1]), grid[2]]
    return list(grid)


def _angles(args, grid):
    theta1 = math.radians(args.theta1) if args.degrees else args.theta1
    return theta1, _grid_radians(grid, args.degrees)


def _add_chain(p, models, default_model):
    p.add_argument("--model", choices=models, default=default_model)
    p.add_argument("--n", type=_positive_int, required=True, help="number of emitters")
    p.add_argument("--kd", type=parse_kd, default=math.pi, help="k*d; accepts 'pi'")


def _add_geometry(p, default_grid="-0.6:0.6:1201"):
    p.add_argument("--theta1", type=float, default=0.0)
    p.add_argument("--grid", type=parse_grid, default=parse_grid(default_grid),
                   help="theta2 grid start:stop:count (radians unless --degrees)")
    p.add_argument("--degrees", action="store_true", help="angles given in degrees")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="superradiance", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("analytic", help="closed-form correlation curve")
    _add_chain(p, ["spe", "tls"], "spe")
    p.add_argument("--m", type=_positive_int, required=True)
    _add_geometry(p)
    p.add_argument("--normalize", choices=["auto", "raw", "max"], default="auto",
                   help="auto: max-normalized for spe, raw for tls")
    p.add_argument("--absolute-scale", action="store_true",
                   help="multiply thermal curves by (m-1)!")
    p.add_argument("--output", "-o")

    p = sub.add_parser("quantum", help="exact single-photon-emitter curve")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--kd", type=parse_kd, default=math.pi)
    p.add_argument("--m", type=_positive_int, required=True)
    _add_geometry(p)
    p.add_argument("--engine", choices=["statevector", "permanent"], default="statevector")
    p.add_argument("--normalize", choices=["raw", "max"], default="raw")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--output", "-o")

    p = sub.add_parser("simulate", help="synthesize a camera frame stack")
    _add_chain(p, ["tls", "cls", "spe"], "tls")
    p.add_argument("--intensity", type=float, default=1.0, help="mean intensity per TLS")
    p.add_argument("--amplitude", type=float, default=1.0, help="field modulus per CLS")
    p.add_argument("--grid", type=parse_grid, default=parse_grid("-0.6:0.6:1024"),
                   help="pixel angles start:stop:count")
    p.add_argument("--pixels", type=_positive_int, help="override the grid pixel count")
    p.add_argument("--degrees", action="store_true")
    p.add_argument("--frames", type=_positive_int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--envelope", type=float, help="slit width / slit spacing")
    p.add_argument("--shot-noise", type=float, help="mean photon count per pixel")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("correlate", help="correlate a frame stack")
    p.add_argument("--frames", required=True, help="GMF1 frame stack")
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--ref", default="auto", help="reference pixel index or 'auto'")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--output", "-o")

    p = sub.add_parser("fit", help="offset/prefactor fit against a template")
    p.add_argument("--data", required=True)
    p.add_argument("--template", required=True, help="closed form 'spe' (alias eq3), 'tls' (alias eq5), or a curve CSV")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--m", type=_positive_int)
    p.add_argument("--kd", type=parse_kd)
    p.add_argument("--theta1", type=float)
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--output", "-o")

    p = sub.add_parser("report", help="visibility, FWHM and peak position of a curve")
    p.add_argument("--data", required=True)
    p.add_argument("--output", "-o")

    p = sub.add_parser("replay", help="re-run the configuration stored in a sidecar")
    p.add_argument("sidecar")
    p.add_argument("--output", "-o", help="write to this path instead of the recorded one")
    return parser


def _emit_curve(curve: CorrelationCurve, config: RunConfig):
    if config.output:
        io.write_curve(config.output, curve, config.to_dict())
        log.info("wrote %s", config.output)
    else:
        sys.stdout.write("theta2,value" + (",stderr" if curve.stderr is not None else "") + "\n")
        cols = [curve.theta2, curve.values] + ([curve.stderr] if curve.stderr is not None else [])
        for row in zip(*cols):
            sys.stdout.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def _emit_report(payload: dict, output):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run_analytic(cfg: RunConfig):
    chain = cfg.chain()
    norm = cfg.flags["normalize"]
    if norm == "auto":
        norm = "max" if cfg.model == "spe" else "raw"
    curve = analytic.analytic_curve(
        chain, cfg.m, cfg.theta1, cfg.grid_values(),
        normalization="max-normalized" if norm == "max" else "raw",
        absolute_scale=cfg.flags.get("absolute_scale", False),
    )
    _emit_curve(curve, cfg)


def run_quantum(cfg: RunConfig):
    chain = cfg.chain()
    grid = cfg.grid_values()
    engine = cfg.flags["engine"]
    workers = cfg.flags.get("workers", 1)
    values = []
    for theta2 in grid:
        det = DetectorSet.coincident(cfg.theta1, theta2, cfg.m)
        if engine == "permanent":
            values.append(quantum.g_spe_permanent(chain, det, workers=workers))
        else:
            values.append(quantum.g_spe_statevector(chain, det))
    meta = {"n_sources": cfg.n, "m": cfg.m, "theta1": cfg.theta1, "kd": cfg.kd,
            "source_model": "spe", "engine": engine}
    curve = CorrelationCurve(grid, values, meta=meta)
    if cfg.flags["normalize"] == "max":
        curve = curve.max_normalized()
    _emit_curve(curve, cfg)


def run_simulate(cfg: RunConfig):
    if cfg.model == "spe":
        raise UsageError("single-photon emitters have no classical frames; "
                         "use the 'quantum' subcommand for SPE curves")
    stack = estimator.synthesize_frames(
        cfg.chain(), cfg.grid_values(), cfg.realizations, cfg.seed,
        envelope=cfg.flags.get("envelope"), shot_noise=cfg.flags.get("shot_noise"),
        workers=cfg.flags.get("workers", 1),
    )
    io.write_stack(cfg.output, stack, cfg.to_dict())
    log.info("wrote %s (%d frames x %d pixels)", cfg.output, stack.frames, stack.pixels)


def run_correlate(cfg: RunConfig):
    stack = io.read_stack(cfg.inputs["frames"])
    ref = cfg.flags.get("ref", "auto")
    ref_pixel = None if ref == "auto" else int(ref)
    curve = estimator.correlate_frames(stack, ref_pixel, cfg.m,
                                       workers=cfg.flags.get("workers", 1))
    _emit_curve(curve, cfg)


def _template_for(cfg: RunConfig, data: CorrelationCurve) -> CorrelationCurve:
    name = cfg.inputs["template"]
    if name in TEMPLATES:
        model = TEMPLATES[name]
        chain = EmitterChain(cfg.n, cfg.kd, model)
        return analytic.analytic_curve(chain, cfg.m, cfg.theta1, data.theta2)
    return io.read_curve(name)


def run_fit(cfg: RunConfig):
    data = io.read_curve(cfg.inputs["data"])
    template = _template_for(cfg, data)
    result = estimator.fit_offset_prefactor(data, template, weighted=cfg.flags.get("weighted", False))
    payload = asdict(result)
    payload["parameter_stderr"] = list(result.parameter_stderr)
    payload["config"] = cfg.to_dict()
    _emit_report(payload, cfg.output)


def run_report(cfg: RunConfig):
    curve = io.read_curve(cfg.inputs["data"])
    vis = estimator.visibility(curve)
    try:
        metrics = estimator.curve_metrics(curve)
    except NumericalError as exc:
        _emit_report({"visibility": vis, "fwhm": None, "peak_position": None,
                      "error": str(exc), "config": cfg.to_dict()}, cfg.output)
        raise
    payload = asdict(metrics)
    payload["config"] = cfg.to_dict()
    _emit_report(payload, cfg.output)


RUNNERS = {
    "analytic": run_analytic,
    "quantum": run_quantum,
    "simulate": run_simulate,
    "correlate": run_correlate,
    "fit": run_fit,
    "report": run_report,
}


def _fill_from_sidecar(args, cfg: RunConfig):
    """Take missing fit parameters from the data curve's metadata."""
    side = io.curve_sidecar(args.data)
    meta = io.read_json(side).get("meta", {}) if side.exists() else {}
    cfg.n = args.n if args.n is not None else meta.get("n_sources")
    cfg.m = args.m if args.m is not None else meta.get("m")
    cfg.kd = args.kd if args.kd is not None else meta.get("kd", math.pi)
    cfg.theta1 = args.theta1 if args.theta1 is not None else meta.get("theta1", 0.0)
    if args.template in TEMPLATES and (cfg.n is None or cfg.m is None):
        raise UsageError("--n and --m are required for analytic templates")


def resolve_config(args) -> RunConfig:
    sub = args.subcommand
    cfg = RunConfig(subcommand=sub, output=getattr(args, "output", None))
    if sub in ("analytic", "quantum"):
        cfg.model = getattr(args, "model", "spe")
        cfg.n, cfg.kd, cfg.m = args.n, args.kd, args.m
        cfg.theta1, cfg.grid = _angles(args, args.grid)
        cfg.flags["normalize"] = args.normalize
        if sub == "analytic":
            cfg.flags["absolute_scale"] = args.absolute_scale
        else:
            cfg.flags["engine"] = args.engine
            cfg.flags["workers"] = args.workers
    elif sub == "simulate":
        cfg.model, cfg.n, cfg.kd = args.model, args.n, args.kd
        cfg.intensity, cfg.amplitude = args.intensity, args.amplitude
        grid = list(args.grid)
        if args.pixels:
            grid[2] = args.pixels
        cfg.grid = _grid_radians(grid, args.degrees)
        cfg.realizations = args.frames
        cfg.seed = default_seed() if args.seed is None else args.seed
        cfg.flags.update(envelope=args.envelope, shot_noise=args.shot_noise, workers=args.workers)
    elif sub == "correlate":
        cfg.m = args.m
        cfg.inputs["frames"] = args.frames
        cfg.flags.update(ref=args.ref, workers=args.workers)
    elif sub == "fit":
        cfg.inputs.update(data=args.data, template=args.template)
        cfg.flags["weighted"] = args.weighted
        _fill_from_sidecar(args, cfg)
    elif sub == "report":
        cfg.inputs["data"] = args.data
    return cfg


def execute(cfg: RunConfig):
    if cfg.subcommand not in RUNNERS:
        raise UsageError(f"unknown subcommand {cfg.subcommand!r}")
    RUNNERS[cfg.subcommand](cfg)


def _join_values(argv):
    """Attach values such as ``-0.6:0.6:1201`` to their option.

    argparse otherwise mistakes a leading minus sign for an option flag.
    """
    out, it = [], iter(argv)
    for tok in it:
        if tok in ("--grid", "--theta1", "--kd"):
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_join_values(sys.argv[1:] if argv is None else list(argv)))
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.subcommand == "replay":
            cfg = RunConfig.from_dict(io.read_json(args.sidecar)["config"])
            if args.output:
                cfg.output = args.output
        else:
            cfg = resolve_config(args)
        execute(cfg)
    except (UsageError, DomainError, ResourceError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
