"""Command-line entry point binding JSON configs to the workbench modules.

Contract: exit 0 on success, 1 on configuration errors (missing or malformed
config, unknown keys, invalid values), 2 on runtime failures. A manifest is
written into the output directory before any computation starts and is
rewritten with the final status afterwards, so an interrupted or failed run
is visible as such. All randomness derives from the single config seed via
role-path keys; reruns with the same config produce byte-identical CSV and
JSON (wall times live in a timing.json sidecar, SVG carries no timestamps).

Output directory precedence: --out-dir flag, then the HULLVAR_OUT_DIR
environment variable, then the config's out_dir, then runs/<subcommand>.
"""

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import bodies, experiments, hull, paraboloid, sampling

ENV_OUT_DIR = "HULLVAR_OUT_DIR"

_SUBCOMMANDS = (
    "sample-hull", "sweep", "paraboloid", "sigma2", "asa",
    "depoisson", "volvar", "th2check", "report",
)

_SCHEMAS = {
    "sample-hull": ({"body", "mode", "level"},
                    {"k", "seed", "out_dir", "label"}),
    "sweep": ({"body", "k", "mode", "grid", "replications"},
              {"g", "seed", "out_dir", "label"}),
    "paraboloid": ({"side", "height"},
                   {"base_dim", "margin", "seed", "out_dir", "label"}),
    "sigma2": ({"k"},
               {"method", "base_dim", "side", "height", "margin", "reps",
                "grids", "seed", "out_dir", "label"}),
    "asa": ({"body"}, {"out_dir", "label"}),
    "depoisson": ({"body", "k", "grid", "replications"},
                  {"seed", "out_dir", "label"}),
    "volvar": ({"body", "n", "replications"},
               {"seed", "out_dir", "label"}),
    "th2check": ({"body", "k", "g", "grid", "replications"},
                 {"seed", "sigma2", "sigma2_se", "mean_density",
                  "mean_density_se", "out_dir", "label"}),
}


class ConfigError(Exception):
    """Anything wrong with flags, config files, or their values."""


@dataclass(frozen=True)
class Command:
    """A parsed invocation: subcommand plus the shared flags."""

    subcommand: str
    config_path: str
    overrides: tuple
    threads: int
    out_dir: str
    seed: int
    body: str
    verbosity: int


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--threads", type=int,
                        default=max(1, os.cpu_count() or 1),
                        help="task pool size; 1 is the serial reference")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--body", help="body shorthand, e.g. ball:2 or "
                                       "ellipsoid:2,1,1")
    common.add_argument("-v", "--verbose", action="count", default=0)
    parser = _Parser(prog="hullvar",
                     description="random-polytope workbench commands")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _load_config(command: Command) -> dict:
    data = {}
    if command.config_path:
        path = Path(command.config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for item in command.overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            data[key] = json.loads(raw)
        except json.JSONDecodeError:
            data[key] = raw
    if command.seed is not None:
        data["seed"] = command.seed
    if command.body is not None:
        data["body"] = command.body
    return data


def _check_schema(subcommand: str, data: dict) -> None:
    required, optional = _SCHEMAS[subcommand]
    unknown = sorted(set(data) - required - optional)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted(required - set(data))
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")


def _parse_body(shorthand):
    if isinstance(shorthand, dict):
        try:
            return bodies.body_from_config(shorthand)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad body config: {exc}")
    if isinstance(shorthand, str):
        kind, _, rest = shorthand.partition(":")
        try:
            vals = [float(x) for x in rest.split(",")] if rest else []
        except ValueError:
            raise ConfigError(f"bad numbers in body shorthand {shorthand!r}")
        try:
            if kind == "ball":
                if not vals:
                    raise ConfigError("ball shorthand needs ball:dim[,radius]")
                radius = vals[1] if len(vals) > 1 else 1.0
                return bodies.make_ball(int(vals[0]), radius)
            if kind == "ellipsoid":
                return bodies.make_ellipsoid(tuple(vals))
        except ValueError as exc:
            raise ConfigError(f"bad body shorthand {shorthand!r}: {exc}")
        raise ConfigError(
            f"unknown body shorthand {shorthand!r}; use ball:d[,r], "
            "ellipsoid:a1,...,ad, or a config object"
        )
    raise ConfigError("body must be a string shorthand or a config object")


def _resolve_out_dir(command: Command, data: dict) -> Path:
    if command.out_dir:
        return Path(command.out_dir)
    env = os.environ.get(ENV_OUT_DIR)
    if env:
        return Path(env)
    if data.get("out_dir"):
        return Path(str(data["out_dir"]))
    return Path("runs") / command.subcommand


def _versions() -> dict:
    try:
        from importlib import metadata

        version = metadata.version("artifact")
    except Exception:
        version = "unknown"
    return {
        "package": version,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _write_manifest(out: Path, command: Command, config_echo: dict,
                    outputs, status: str) -> None:
    doc = {
        "command": command.subcommand,
        "config": config_echo,
        "versions": _versions(),
        "seed_policy": "every stream derives from the config seed and a "
                       "role path; execution order never affects output",
        "outputs": sorted(outputs),
        "status": status,
    }
    (out / "manifest.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _log(command: Command, message: str) -> None:
    if command.verbosity:
        print(f"[hullvar {command.subcommand}] {message}", file=sys.stderr)


# ---------------------------------------------------------------------------
# per-subcommand preparation: validate, build the echo, return the runner


def _prepare_sample_hull(command, data):
    body = _parse_body(data["body"])
    mode = data["mode"]
    if mode not in ("poisson", "binomial"):
        raise ConfigError("sample-hull mode must be poisson or binomial")
    level = float(data["level"])
    k = int(data.get("k", 0))
    if not 0 <= k < body.dim:
        raise ConfigError(f"k must lie in 0..{body.dim - 1}")
    seed = int(data.get("seed", 0))
    echo = {"body": body.to_config(), "mode": mode, "level": level, "k": k,
            "seed": seed}

    def run(out):
        if mode == "poisson":
            sample = sampling.sample_poisson(body, level, seed)
        else:
            sample = sampling.sample_binomial(body, int(level), seed)
        lattice = hull.convex_hull(sample.points)
        (out / "sample.csv").write_text(sampling.sample_to_csv(sample))
        (out / "lattice.json").write_text(hull.lattice_to_json(lattice))
        (out / "scores.csv").write_text(
            hull.scores_to_csv(hull.xi_scores(lattice, k))
        )

    return echo, ["sample.csv", "lattice.json", "scores.csv"], run


def _prepare_sweep(command, data):
    config = experiments.SweepConfig(
        body=_parse_body(data["body"]),
        k=int(data["k"]),
        mode=data["mode"],
        grid=tuple(data["grid"]),
        replications=int(data["replications"]),
        seed=int(data.get("seed", 0)),
        g_id=data.get("g", "const"),
        label=str(data.get("label", "")),
    )
    echo = config.to_config()
    outputs = ["report.csv", "fit.json"]
    if len(config.grid) >= 4:
        outputs.append("scaling.svg")

    def run(out):
        report = experiments.run_sweep(config, threads=command.threads)
        (out / "report.csv").write_text(experiments.report_to_csv(report))
        _log(command, f"sweep finished; {len(report.rows)} grid points")
        fits = {"variance": None, "mean": None}
        if len(config.grid) >= 4:
            from dataclasses import asdict

            try:
                vfit = experiments.fit_scaling(report)
                fits["variance"] = asdict(vfit)
                fits["mean"] = asdict(experiments.fit_scaling(report, "mean"))
                experiments.plot_scaling(report, vfit, out / "scaling.svg")
            except ValueError as exc:
                fits["note"] = f"fit unavailable: {exc}"
                outputs.remove("scaling.svg")
        else:
            fits["note"] = "fit unavailable: fewer than 4 grid points"
        _write_json(out / "fit.json", fits)
        _write_json(out / "timing.json", {
            "grid_seconds": list(report.timings),
            "total_seconds": sum(report.timings),
        })

    return echo, outputs, run


def _prepare_paraboloid(command, data):
    base_dim = int(data.get("base_dim", 1))
    side = float(data["side"])
    height = float(data["height"])
    margin = float(data.get("margin", 0.0))
    seed = int(data.get("seed", 0))
    echo = {"base_dim": base_dim, "side": side, "height": height,
            "margin": margin, "seed": seed}

    def run(out):
        scene = paraboloid.make_scene(side=side, height=height, seed=seed,
                                      base_dim=base_dim, margin=margin)
        result = paraboloid.analyze_scene(scene)
        (out / "scene.json").write_text(paraboloid.scene_to_json(scene, result))

    return echo, ["scene.json"], run


def _prepare_sigma2(command, data):
    method = data.get("method", "window")
    if method not in ("window", "correlation"):
        raise ConfigError("sigma2 method must be window or correlation")
    k = int(data["k"])
    base_dim = int(data.get("base_dim", 1))
    seed = int(data.get("seed", 0))
    side = float(data.get("side", 16.0 if method == "window" else 8.0))
    height = float(data.get("height", 6.0))
    margin = float(data.get("margin", 1.5))
    reps = int(data.get("reps", 400 if method == "window" else 150))
    grids = data.get("grids", {})
    if not isinstance(grids, dict):
        raise ConfigError("grids must be an object of grid parameters")
    echo = {"method": method, "k": k, "base_dim": base_dim, "side": side,
            "height": height, "margin": margin, "reps": reps, "seed": seed,
            "grids": grids}

    def run(out):
        from dataclasses import asdict

        if method == "window":
            est = paraboloid.estimate_sigma2_window(
                k, side=side, height=height, margin=margin, reps=reps,
                seed=seed, base_dim=base_dim,
            )
        else:
            est = paraboloid.estimate_sigma2_correlation(
                k, grids=grids, side=side, height=height, reps=reps,
                seed=seed, base_dim=base_dim,
            )
        (out / "sigma2.csv").write_text(paraboloid.estimates_to_csv([est]))
        _write_json(out / "sigma2.json", asdict(est))

    return echo, ["sigma2.csv", "sigma2.json"], run


def _prepare_asa(command, data):
    body = _parse_body(data["body"])
    echo = {"body": body.to_config()}

    def run(out):
        res = bodies.affine_surface_area(body)
        print(f"affine surface area of {body.body_id}: {res.value:.12g} "
              f"(quadrature error {res.error:.3g})")
        _write_json(out / "asa.json", {
            "body": body.to_config(), "body_id": body.body_id,
            "value": res.value, "error": res.error,
            "refinements": res.refinements,
        })

    return echo, ["asa.json"], run


def _prepare_depoisson(command, data):
    body = _parse_body(data["body"])
    grid = [int(n) for n in data["grid"]]
    k = int(data["k"])
    reps = int(data["replications"])
    seed = int(data.get("seed", 0))
    if not 0 <= k < body.dim:
        raise ConfigError(f"k must lie in 0..{body.dim - 1}")
    echo = {"body": body.to_config(), "k": k, "grid": grid,
            "replications": reps, "seed": seed}

    def run(out):
        rep = experiments.depoisson_compare(body, k, grid, reps, seed)
        (out / "depoisson.csv").write_text(experiments.depoisson_to_csv(rep))
        _write_json(out / "depoisson.json", rep)

    return echo, ["depoisson.csv", "depoisson.json"], run


def _prepare_volvar(command, data):
    body = _parse_body(data["body"])
    n = int(data["n"])
    reps = int(data["replications"])
    seed = int(data.get("seed", 0))
    if body.dim not in (2, 3):
        raise ConfigError("volvar needs a body of dimension 2 or 3")
    echo = {"body": body.to_config(), "n": n, "replications": reps,
            "seed": seed}

    def run(out):
        _write_json(out / "volvar.json",
                    experiments.volume_variance(body, n, reps, seed))

    return echo, ["volvar.json"], run


def _prepare_th2check(command, data):
    body = _parse_body(data["body"])
    k = int(data["k"])
    g_id = str(data["g"])
    try:
        experiments.test_function(g_id)
    except ValueError as exc:
        raise ConfigError(str(exc))
    grid = tuple(float(x) for x in data["grid"])
    reps = int(data["replications"])
    seed = int(data.get("seed", 0))
    if not 0 <= k < body.dim:
        raise ConfigError(f"k must lie in 0..{body.dim - 1}")
    echo = {"body": body.to_config(), "k": k, "g": g_id, "grid": list(grid),
            "replications": reps, "seed": seed}
    kwargs = {}
    for key in ("sigma2", "sigma2_se", "mean_density", "mean_density_se"):
        if key in data:
            kwargs[key] = float(data[key])
            echo[key] = kwargs[key]

    def run(out):
        _write_json(out / "th2check.json", experiments.theorem2_check(
            body, k, g_id, grid, reps, seed, **kwargs))

    return echo, ["th2check.json"], run


def _prepare_report(command, data):
    if "command" in data and "config" in data:
        manifest = data
        if not command.config_path:
            raise ConfigError("report needs --config pointing at a manifest")
        source_dir = Path(command.config_path).parent
    else:
        source = data.get("source")
        if not source:
            raise ConfigError("report needs a sweep manifest: pass its path "
                              "via --config or a config with a 'source' key")
        src = Path(str(source))
        if src.is_dir():
            src = src / "manifest.json"
        if not src.is_file():
            raise ConfigError(f"manifest not found: {src}")
        manifest = json.loads(src.read_text())
        source_dir = src.parent
    if manifest.get("command") != "sweep":
        raise ConfigError("report regenerates sweep outputs; the manifest "
                          f"describes {manifest.get('command')!r}")
    cfg = manifest["config"]
    try:
        config = experiments.SweepConfig(
            body=bodies.body_from_config(cfg["body"]),
            k=int(cfg["k"]), mode=cfg["mode"], grid=tuple(cfg["grid"]),
            replications=int(cfg["replications"]), seed=int(cfg["seed"]),
            g_id=cfg.get("g", "const"), label=cfg.get("label", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad sweep config in manifest: {exc}")
    csv_path = source_dir / "report.csv"
    if not csv_path.is_file():
        raise ConfigError(f"report.csv not found next to the manifest: {csv_path}")
    echo = {"source": str(source_dir), "sweep_config": cfg}

    def run(out):
        from dataclasses import asdict

        report = experiments.report_from_csv(csv_path.read_text(), config)
        fits = {"variance": None, "mean": None}
        try:
            vfit = experiments.fit_scaling(report)
            fits["variance"] = asdict(vfit)
            fits["mean"] = asdict(experiments.fit_scaling(report, "mean"))
            experiments.plot_scaling(report, vfit, out / "scaling.svg")
        except ValueError as exc:
            fits["note"] = f"fit unavailable: {exc}"
            outputs.remove("scaling.svg")
        _write_json(out / "fit.json", fits)

    outputs = ["fit.json", "scaling.svg"]
    return echo, outputs, run


_PREPARERS = {
    "sample-hull": _prepare_sample_hull,
    "sweep": _prepare_sweep,
    "paraboloid": _prepare_paraboloid,
    "sigma2": _prepare_sigma2,
    "asa": _prepare_asa,
    "depoisson": _prepare_depoisson,
    "volvar": _prepare_volvar,
    "th2check": _prepare_th2check,
    "report": _prepare_report,
}


def dispatch(command: Command) -> int:
    """Run one parsed command; returns the process exit status."""
    try:
        data = _load_config(command)
        if command.subcommand != "report":
            _check_schema(command.subcommand, data)
        echo, outputs, run = _PREPARERS[command.subcommand](command, data)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    out = _resolve_out_dir(command, data)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, command, echo, outputs, "running")
    _log(command, f"manifest written to {out}")
    t0 = time.perf_counter()
    try:
        run(out)
    except Exception as exc:
        _write_manifest(out, command, echo, outputs,
                        f"failed: {type(exc).__name__}: {exc}")
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    _write_manifest(out, command, echo, outputs, "complete")
    _log(command, f"done in {time.perf_counter() - t0:.2f}s")
    return 0


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    command = Command(
        subcommand=args.subcommand,
        config_path=args.config,
        overrides=tuple(args.overrides),
        threads=args.threads,
        out_dir=args.out_dir,
        seed=args.seed,
        body=args.body,
        verbosity=args.verbose,
    )
    return dispatch(command)


if __name__ == "__main__":
    sys.exit(main())
