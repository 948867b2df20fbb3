"""Command line front end: generate meshes, verify data, sweep associated families."""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import loops as L
from .catalog import NAMES, ExampleSpec, catalog_potential, parse_preset
from .errors import ConfigError, GridTooSmall, NilSymError
from .frames import PotentialSpec, build_frames
from .grid import Grid
from .report import DEFAULT_THRESHOLDS, mesh_points_report, pipeline_report, read_mesh_csv, spinor_report
from .spinors import SpinorField
from .sym import associated_family_report, mesh_from_frames

EXIT_OK, EXIT_FATAL, EXIT_USAGE = 0, 1, 2
OUTPUT_KINDS = ("mesh-obj", "mesh-csv", "report-json")


class JobConfig:
    """Validated job description."""

    def __init__(self, obj: dict):
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        pot = obj.get("potential", "umbrella")
        self.preset: ExampleSpec | None = None
        try:
            if isinstance(pot, str):
                self.preset = parse_preset(pot)
                self.potential = catalog_potential(self.preset)
            else:
                self.potential = PotentialSpec.from_json(pot)
        except NilSymError as exc:
            raise ConfigError(f"potential: {exc}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"potential: malformed ({exc})") from None
        g = obj.get("grid", {})
        try:
            c = g.get("center", [0.0, 0.0])
            hw = g.get("half_widths", [0.4, 0.4])
            res = g.get("resolution", [41, 41])
            if isinstance(hw, (int, float)):
                hw = [hw, hw]
            if isinstance(res, int):
                res = [res, res]
            self.grid = Grid(complex(float(c[0]), float(c[1])), (float(hw[0]), float(hw[1])),
                             (int(res[0]), int(res[1])))
        except GridTooSmall as exc:
            raise ConfigError(f"grid: {exc}") from None
        except (TypeError, ValueError, IndexError, AttributeError) as exc:
            raise ConfigError(f"grid: malformed ({exc})") from None
        if min(self.grid.half_widths) <= 0:
            raise ConfigError("grid: half widths must be positive")
        thetas = obj.get("lambdas", [0.0])
        if not isinstance(thetas, list) or not thetas:
            raise ConfigError("lambdas: expected a nonempty list of angles")
        try:
            self.thetas = [float(t) for t in thetas]
        except (TypeError, ValueError):
            raise ConfigError("lambdas: angles must be numbers") from None
        default_n = self.preset.truncation if self.preset else L.DEFAULT_N
        self.truncation = int(obj.get("truncation", default_n))
        if self.truncation < 1:
            raise ConfigError("truncation must be positive")
        tol = obj.get("tolerances", {})
        self.tail_tol = float(tol.get("tail", L.DEFAULT_TAIL_TOL))
        self.cond_max = float(tol.get("birkhoff_conditioning", L.BIG_CELL_COND))
        self.ode_tol = float(tol.get("ode", 1e-10))
        self.thresholds = dict(DEFAULT_THRESHOLDS)
        self.thresholds.update({k: float(v) for k, v in tol.get("residuals", {}).items()})
        for name, v in [("tail", self.tail_tol), ("birkhoff_conditioning", self.cond_max),
                        ("ode", self.ode_tol)] + list(self.thresholds.items()):
            if not v > 0:
                raise ConfigError(f"tolerance {name} must be > 0")
        self.outputs = obj.get("outputs", [{"type": "report-json", "path": "report.json"}])
        for o in self.outputs:
            if not isinstance(o, dict) or o.get("type") not in OUTPUT_KINDS or not isinstance(o.get("path"), str):
                raise ConfigError(f"outputs: each entry needs type in {OUTPUT_KINDS} and a path")
        self.seed = int(obj.get("seed", 0))
        self.H = float(obj.get("H", 0.0))

    @property
    def lambdas(self):
        return [complex(np.exp(1j * t)) for t in self.thetas]


def load_config(path) -> JobConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return JobConfig(obj)


def _default_config() -> JobConfig:
    return JobConfig({})


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _suffixed(path, k, count):
    if count == 1:
        return path
    root, ext = os.path.splitext(path)
    return f"{root}_{k}{ext}"


def run_pipeline(cfg: JobConfig, threads: int = 1):
    ff = build_frames(cfg.potential, cfg.grid.z, cfg.truncation, cfg.ode_tol, cfg.cond_max, cfg.tail_tol)
    lams = cfg.lambdas
    if threads > 1 and len(lams) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            meshes = list(ex.map(lambda l: mesh_from_frames(ff, cfg.grid, l), lams))
    else:
        meshes = [mesh_from_frames(ff, cfg.grid, l) for l in lams]
    return meshes, ff


def _job_header(cfg: JobConfig) -> dict:
    return {"schema": 1, "version": __version__,
            "potential": cfg.preset.label() if cfg.preset else cfg.potential.to_json(),
            "grid": cfg.grid.to_json(), "thetas": cfg.thetas, "truncation": cfg.truncation,
            "seed": cfg.seed}


def cmd_generate(cfg: JobConfig, out_dir: str, threads: int = 1) -> int:
    meshes, ff = run_pipeline(cfg, threads)
    per = [pipeline_report(m, ff, cfg.lambdas, cfg.thresholds, cfg.seed) for m in meshes]
    report = _job_header(cfg)
    report.update({"ode_steps": ff.ode_steps, "tail": ff.tail, "phase_fixed": ff.phase_fixed,
                   "meshes": per, "verdict": int(any(r["verdict"] for r in per))})
    if len(meshes) >= 2:
        report["family"] = associated_family_report(meshes)
    os.makedirs(out_dir, exist_ok=True)
    for o in cfg.outputs:
        path = os.path.join(out_dir, o["path"])
        if o["type"] == "report-json":
            write_json(path, report)
            continue
        for k, m in enumerate(meshes):
            p = _suffixed(path, k, len(meshes))
            (m.to_obj if o["type"] == "mesh-obj" else m.to_csv)(p)
    return EXIT_OK


def cmd_family(cfg: JobConfig, out_dir: str, threads: int = 1) -> int:
    if len(cfg.lambdas) < 2:
        raise ConfigError("family needs at least two lambda angles")
    meshes, ff = run_pipeline(cfg, threads)
    report = _job_header(cfg)
    report["family"] = associated_family_report(meshes)
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "family.json"), report)
    return EXIT_OK


def _read_input(path):
    """Spinor CSV (psi columns) or mesh CSV (x1, x2, x3 columns)."""
    try:
        with open(path) as fh:
            header = fh.readline()
    except OSError as exc:
        raise ConfigError(f"cannot read input: {exc}") from None
    cols = [c.strip() for c in header.split(",")]
    if "psi1_re" in cols:
        return "spinors", SpinorField.from_csv(path)
    if "x1" in cols:
        return "mesh", read_mesh_csv(path)
    raise ConfigError("input is neither a spinor CSV nor a mesh CSV", 1, 1)


def cmd_verify(input_path: str, cfg: JobConfig, out_dir: str | None) -> int:
    kind, data = _read_input(input_path)
    if kind == "spinors":
        rep = spinor_report(data, cfg.H, None, cfg.lambdas, cfg.thresholds)
    else:
        grid, pts = data
        rep = mesh_points_report(pts, grid, cfg.H, cfg.lambdas, cfg.thresholds)
    rep = dict(schema=1, input_kind=kind, **rep)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_json(os.path.join(out_dir, "verify.json"), rep)
    else:
        json.dump(_jsonable(rep), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nilsym", description="Minimal surfaces in Nil3 from loop group potentials.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="job configuration (JSON)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")

    common(sub.add_parser("generate", help="run the pipeline and write meshes and a report"))
    common(sub.add_parser("family", help="associated family report over the configured angles"))
    v = sub.add_parser("verify", help="residual report for a spinor or mesh CSV")
    v.add_argument("input")
    common(v, need_config=False)
    v.set_defaults(out=None)
    sub.add_parser("presets", help="list named example potentials")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "presets":
        for name in NAMES:
            print({"umbrella": "umbrella", "paraboloid": "paraboloid",
                   "helicoid": "helicoid:a=<v>,k=<v>", "catenoid": "catenoid:a=<v>[,t=<v>]"}[name])
        return EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else _default_config()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "generate":
            return cmd_generate(cfg, args.out, args.threads)
        if args.command == "family":
            return cmd_family(cfg, args.out, args.threads)
        return cmd_verify(args.input, cfg, args.out)
    except (ConfigError, GridTooSmall) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NilSymError as exc:
        print(f"fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
