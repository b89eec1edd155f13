"""Command-line entry point: ``meanfield <command> [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 requested time not
covered by the available data, 4 numerical failure, 1 replay hash mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngmod
from .config import ConfigError, ModelConfig, SchemeConfig, reference_config
from .density import expectation_surface, size_marginal_snapshots
from .diagnostics import CoverageError, chaos_propagation_test, iteration_for, w1_versus_time
from .io import (density_plotscript, dump_json, load_flow, read_trajectory,
                 surface_plotscript, write_density, write_flow, write_surface,
                 write_trajectory)
from .manifest import MANIFEST_SUFFIX, RunManifest, compare_outputs, now
from .model import DomainError, theory_constants
from .particles import run_report, simulate
from .scheme import SchemeError, run_scheme
from .transport import dudley_rate_experiment, loglog_slope, support_radius

log = logging.getLogger("meanfield")

PATH_OPTIONS = ("--config", "--traj", "--flow-dir", "--out", "--out-dir")
EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_COVERAGE, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _override(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def resolve_config(args) -> ModelConfig:
    """Config file (or the reference values) with ``--set`` and ``--seed`` applied."""
    cfg = ModelConfig.from_json(args.config) if getattr(args, "config", None) else reference_config()
    overrides = dict(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        unknown = set(overrides) - set(cfg.to_dict())
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        cfg = cfg.with_overrides(**overrides)
    return cfg


def _flow(args):
    fa = load_flow(args.flow_dir)
    seed = fa.scheme.seed if args.seed is None else args.seed
    return fa, seed


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


# -- commands --------------------------------------------------------------
# Each returns (manifest root, output files, resolved config, seed tree).

def cmd_simulate(args):
    cfg = resolve_config(args)
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    ens = simulate(cfg, args.n, args.horizon, rngmod.stream(cfg.seed, rngmod.INITIAL_ENSEMBLE),
                   clamp=args.clamp)
    out = Path(args.out)
    write_trajectory(out, ens)
    report = _sibling(out, ".report.json")
    dump_json(report, run_report(ens, cfg.seed))
    return out.parent, [out, report], cfg.to_dict(), {
        "master": cfg.seed, "streams": [rngmod.INITIAL_ENSEMBLE]}


def cmd_mfl(args):
    cfg = resolve_config(args)
    scfg = SchemeConfig(M=args.m, K=args.k, n_max=args.steps, jitter=args.jitter, seed=cfg.seed)
    fa = run_scheme(cfg, scfg)
    out = Path(args.out_dir)
    paths = write_flow(out, fa)
    return out, paths, {**cfg.to_dict(), "scheme": scfg.to_dict()}, {
        "master": scfg.seed,
        "streams": [rngmod.OMEGA_SAMPLE, rngmod.TRAIN_SET, rngmod.TEST_SET]}


def cmd_compare(args):
    fa, seed = _flow(args)
    cfg = fa.config
    chaos = chaos_propagation_test(cfg, fa, args.n_list, args.t, args.reps, seed=seed)
    slope = None
    if len(args.n_list) >= 2:
        s, _ = loglog_slope(np.array(args.n_list, float), np.array(chaos.mean_discrepancy))
        slope = s if np.isfinite(s) else None
    report = {"chaos": chaos.to_dict(), "discrepancy_slope": slope, "w1_curve": None}
    if args.traj:
        times, hist, theta = read_trajectory(args.traj)
        last = times[-1] + 1e-9
        for t in args.times:
            if t > last:
                raise CoverageError(f"trajectory ends at t = {times[-1]}, requested {t}")
        report["w1_curve"] = w1_versus_time(fa, hist, theta, args.times, seed).to_dict()
    out = Path(args.out)
    dump_json(out, report)
    return out.parent, [out], cfg.to_dict(), {
        "master": seed, "streams": [rngmod.COMPETITORS, "focal", rngmod.REFERENCE_CLOUD]}


def cmd_rates(args):
    cfg = resolve_config(args)
    res = dudley_rate_experiment(cfg, args.sizes, args.reps, seed=cfg.seed)
    out = Path(args.out)
    dump_json(out, res.to_dict())
    return out.parent, [out], cfg.to_dict(), {"master": cfg.seed, "streams": ["dudley"]}


def cmd_bounds(args):
    fa, seed = _flow(args)
    cfg = fa.config
    times = sorted(set([0.0, *args.times]))
    for t in times:
        iteration_for(t, fa)
    horizon = max(times)
    entries = []
    for N in args.n:
        if N < 2:
            raise ConfigError("--n values must be >= 2")
        ens = simulate(cfg, N, horizon, rngmod.stream(seed, rngmod.INITIAL_ENSEMBLE, N))
        entries.append(w1_versus_time(fa, ens.history, ens.theta, times, seed).to_dict())
    out = Path(args.out)
    dump_json(out, {"R0": support_radius(cfg), "runs": entries})
    return out.parent, [out], cfg.to_dict(), {
        "master": seed, "streams": [rngmod.INITIAL_ENSEMBLE, rngmod.REFERENCE_CLOUD, "moments"]}


def cmd_density(args):
    fa, seed = _flow(args)
    iters = [iteration_for(t, fa) for t in args.times]
    snaps = size_marginal_snapshots(fa, iters, args.samples, seed=seed, bandwidth=args.bandwidth)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths, names = [], []
    for n in iters:
        p = out / f"density_n{n:04d}.csv"
        side = write_density(p, snaps[n], {"n": n, "t_days": n * fa.config.dt})
        paths += [p, side]
        names.append(p.name)
    if args.emit_plotscript:
        gp = out / "density.gp"
        gp.write_text(density_plotscript(names), encoding="utf-8")
        paths.append(gp)
    return out, paths, fa.config.to_dict(), {"master": seed, "streams": [rngmod.MFL_SAMPLE]}


def cmd_surface(args):
    fa, seed = _flow(args)
    n = iteration_for(args.time, fa)
    surf = expectation_surface(fa, n, args.grid, args.mc, seed=seed)
    out = Path(args.out)
    write_surface(out, surf)
    paths = [out]
    if args.emit_plotscript:
        gp = _sibling(out, ".gp")
        gp.write_text(surface_plotscript(out.name, args.grid), encoding="utf-8")
        paths.append(gp)
    return out.parent, paths, fa.config.to_dict(), {
        "master": seed, "streams": [rngmod.MARGINAL_U, rngmod.MARGINAL_UPRIME]}


def cmd_constants(args):
    cfg = resolve_config(args)
    K = theory_constants(cfg)
    data = {"K1": K.K1, "K2": K.K2, "K3": K.K3, "K4": K.K4, "K24": K.K24,
            "R_M": cfg.R_M, "support_radius": support_radius(cfg)}
    if not args.out:
        print(json.dumps(data, indent=2))
        return None
    out = Path(args.out)
    dump_json(out, data)
    return out.parent, [out], cfg.to_dict(), {"master": cfg.seed, "streams": []}


def cmd_replay(args):
    man = RunManifest.read(args.manifest)
    into = Path(args.into) if args.into else Path(tempfile.mkdtemp(prefix="meanfield-replay-"))
    into.mkdir(parents=True, exist_ok=True)
    argv = list(man.argv)
    i = argv.index(man.out_option)
    target = into / Path(man.out_value).name
    argv[i + 1] = str(target)
    code = main(argv)
    if code != EXIT_OK:
        return code
    root = target if man.out_option == "--out-dir" else into
    result = compare_outputs(man.outputs, root)
    for rel, ok in result.items():
        print(f"{'match   ' if ok else 'MISMATCH'} {rel}")
    return EXIT_OK if all(result.values()) else EXIT_MISMATCH


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meanfield", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="JSON config file (default: reference values)")
        sp.add_argument("--set", action="append", type=_override, metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
        sp.add_argument("--seed", type=int)

    def with_flow(sp):
        sp.add_argument("--flow-dir", required=True)
        sp.add_argument("--seed", type=int, help="default: the seed of the flow run")

    sp = sub.add_parser("simulate", help="integrate an N-plant population")
    with_config(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--horizon", type=float, default=10.0, help="days")
    sp.add_argument("--clamp", action="store_true", help="clip sizes into (s_m, S]")
    sp.add_argument("--out", required=True, help="trajectory CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("mfl", help="run the mean-field approximation scheme")
    with_config(sp)
    sp.add_argument("--m", type=int, default=1000)
    sp.add_argument("--k", type=int, default=100)
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--jitter", type=float, default=1e-8)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_mfl)

    sp = sub.add_parser("compare", help="finite populations against the mean-field flow")
    with_flow(sp)
    sp.add_argument("--traj", help="trajectory CSV for the W1-versus-time curve")
    sp.add_argument("--n-list", type=_ints, default=[11, 51, 101, 501])
    sp.add_argument("--reps", type=int, default=20)
    sp.add_argument("--t", type=float, default=10.0, help="comparison time (days)")
    sp.add_argument("--times", type=_floats, default=[0.0, 0.5, 1.0, 2.0])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("rates", help="two-sample W1 decay with sample size")
    with_config(sp)
    sp.add_argument("--sizes", type=_ints, default=[64, 128, 256, 512, 1024])
    sp.add_argument("--reps", type=int, default=10)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("bounds", help="measured W1 against the stability bound")
    with_flow(sp)
    sp.add_argument("--n", type=_ints, default=[11, 101])
    sp.add_argument("--times", type=_floats, default=[0.5, 1.0, 2.0])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("density", help="size densities of the mean-field law")
    with_flow(sp)
    sp.add_argument("--times", type=_floats, default=[1.0, 5.0, 10.0])
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--bandwidth", type=float)
    sp.add_argument("--emit-plotscript", action="store_true")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_density)

    sp = sub.add_parser("surface", help="expected size over the plot")
    with_flow(sp)
    sp.add_argument("--time", type=float, default=10.0)
    sp.add_argument("--grid", type=int, default=50)
    sp.add_argument("--mc", type=int, default=1000)
    sp.add_argument("--emit-plotscript", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_surface)

    sp = sub.add_parser("constants", help="Lipschitz-type constants of the interaction")
    with_config(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("replay", help="re-run a manifest and check its output hashes")
    sp.add_argument("manifest")
    sp.add_argument("--into", help="output directory (default: a fresh temp dir)")
    sp.set_defaults(func=cmd_replay)
    return p


def _absolute_paths(argv: list[str]) -> list[str]:
    out = list(argv)
    for i, a in enumerate(out[:-1]):
        if a in PATH_OPTIONS:
            out[i + 1] = str(Path(out[i + 1]).resolve())
    return out


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started, t0 = now(), time.perf_counter()
    try:
        result = args.func(args)
    except CoverageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except (SchemeError, DomainError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "replay" or result is None:
        return result if isinstance(result, int) else EXIT_OK
    root, paths, config, seeds = result
    opt = "--out-dir" if "--out-dir" in argv else "--out"
    man = RunManifest(args.command, _absolute_paths(argv), config, seeds, __version__, started,
                      out_option=opt, out_value=argv[argv.index(opt) + 1])
    man.add_outputs(paths, Path(root))
    man.finished = now()
    man.wall_seconds = round(time.perf_counter() - t0, 3)
    if opt == "--out-dir":
        man_path = Path(root) / "manifest.json"
    else:
        man_path = _sibling(Path(argv[argv.index(opt) + 1]), MANIFEST_SUFFIX)
    man.write(man_path)
    log.info("wrote %d file(s) and %s", len(paths), man_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
