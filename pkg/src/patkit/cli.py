"""Command-line front end: config-driven simulate / reconstruct / verify
pipelines plus a PSNR utility.

Configs are JSON documents validated strictly: unknown keys are rejected so a
typo'd parameter never silently falls back to a default.  Every output file
carries provenance (config hash, seed, package version, command line) in its
JSON sidecar; binary payloads are byte-reproducible for a fixed
(config, seed, precision).

Exit codes: 0 success, 1 usage/config error, 2 numerical failure.
PAT_THREADS caps internal FFT parallelism.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__, analysis, fieldio, recon, scenarios
from .solver import NumericalInstabilityError, TimeSeriesData

log = logging.getLogger("patkit")

# Normalized adjointness thresholds (max over trials) used by `verify`.
VERIFY_MAX_NORMALIZED = {"f32": 1e-3, "f64": 1e-4}
DENSE_ORACLE_THRESHOLD = 1e-3
_DENSE_LIMIT = 10**7


class ConfigError(Exception):
    pass


def _check_keys(section: dict, allowed: set, context: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {context}")


def _get(section: dict, key: str, kind, default=None, required: bool = False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"key {key!r} must be {kind.__name__}")
    return value


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(cfg, {"scenario", "precision", "seed", "method", "verify",
                      "output"}, "config root")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()
    ).hexdigest()


def _git_revision() -> str | None:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True,
            timeout=5,
        )
    except OSError:
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def _provenance(cfg: dict, seed: int, precision: str) -> dict:
    prov = {
        "command": " ".join(sys.argv),
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "precision": precision,
        "version": __version__,
    }
    rev = _git_revision()
    if rev:
        prov["git_revision"] = rev
    return prov


def _build_scenario(cfg: dict) -> scenarios.Scenario:
    scfg = cfg.get("scenario")
    if not isinstance(scfg, dict):
        raise ConfigError("config needs a 'scenario' object")
    _check_keys(scfg, {"name", "n", "pml", "n_sensors", "noise_rel", "cfl",
                       "crossings", "dir"}, "scenario")
    name = _get(scfg, "name", str, required=True)
    noise_rel = _get(scfg, "noise_rel", float, default=0.01)
    kwargs = {}
    if "cfl" in scfg:
        kwargs["cfl"] = _get(scfg, "cfl", float)
    if "crossings" in scfg:
        kwargs["crossings"] = _get(scfg, "crossings", float)
    if name == "custom":
        directory = _get(scfg, "dir", str, required=True)
        scn = scenarios.load_scenario(directory)
    elif name in ("I", "II", "homogeneous2d"):
        n = _get(scfg, "n", int, required=True)
        if "pml" in scfg:
            kwargs["pml"] = _get(scfg, "pml", int)
        try:
            if name == "I":
                scn = scenarios.scenario_I(n, **kwargs)
            elif name == "II":
                if "n_sensors" in scfg:
                    kwargs["n_sensors"] = _get(scfg, "n_sensors", int)
                scn = scenarios.scenario_II(n, **kwargs)
            else:
                scn = scenarios.homogeneous_2d(n, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError(
            f"unknown scenario name {name!r}; use I, II, homogeneous2d or custom"
        )
    if "noise_rel" in scfg or name != "custom":
        scn.noise_rel = noise_rel
    return scn


def _method_settings(cfg: dict, scenario_label: str, override: str | None):
    mcfg = dict(cfg.get("method", {}))
    _check_keys(mcfg, {"name", "iterations", "eta_factor", "lambda",
                       "prox_iterations", "theta", "project",
                       "ground_truth"}, "method")
    name = override or _get(mcfg, "name", str, default="TV+")
    lam = _get(mcfg, "lambda", float)
    if lam is None:
        lam = 0.05 if scenario_label == "I" else 0.01
    try:
        settings = recon.ReconSettings(
            method=name,
            iterations=_get(mcfg, "iterations", int, default=100),
            eta_factor=_get(mcfg, "eta_factor", float, default=1.8),
            lam=lam,
            prox_iterations=_get(mcfg, "prox_iterations", int, default=20),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    theta = _get(mcfg, "theta", float)
    project = _get(mcfg, "project", bool, default=True)
    ground_truth = _get(mcfg, "ground_truth", str)
    return settings, theta, project, ground_truth


def _common(cfg: dict, args) -> tuple[str, int, Path]:
    precision = args.precision or _get(cfg, "precision", str, default="f64")
    if precision not in ("f32", "f64"):
        raise ConfigError("precision must be 'f32' or 'f64'")
    seed = args.seed if args.seed is not None else _get(cfg, "seed", int, default=0)
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    ocfg = cfg.get("output", {})
    _check_keys(ocfg, {"dir"}, "output")
    out = Path(args.out or _get(ocfg, "dir", str, default="out"))
    return precision, seed, out


def _save_png(path: Path, image: np.ndarray) -> None:
    # Grayscale heatmap scaled to each image's own min/max; for 3D volumes
    # the central slice along the first axis is rendered.
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[img.shape[0] // 2]
    lo, hi = float(img.min()), float(img.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    data = ((img - lo) * scale).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def cmd_simulate(cfg: dict, args) -> int:
    precision, seed, out = _common(cfg, args)
    scn = _build_scenario(cfg)
    ops = scn.make_operators(precision=precision)
    log.info("simulating scenario %s: grid %s, %d sensors, %d steps",
             scn.label, scn.grid.dims, scn.sensors.n_sensors,
             scn.time.n_steps)
    f = scenarios.simulate_data(scn, seed=seed, ops=ops)
    prov = _provenance(cfg, seed, precision)
    spacing = scn.grid.spacing
    fieldio.write_field(out / "data.patf", f.samples, spacing=[scn.time.dt],
                        units="Pa", provenance=prov)
    fieldio.write_field(out / "ground_truth.patf", scn.p0, spacing=spacing,
                        units="Pa", provenance=prov)
    fieldio.write_json(out / "manifest.json", {
        "kind": "simulate",
        "scenario": scn.label,
        "grid_dims": list(scn.grid.dims),
        "pml_size": list(scn.grid.pml_size),
        "n_sensors": scn.sensors.n_sensors,
        "n_steps": scn.time.n_steps,
        "dt": scn.time.dt,
        "noise_rel": scn.noise_rel,
        "provenance": prov,
    })
    log.info("wrote %s", out / "data.patf")
    return 0


def cmd_reconstruct(cfg: dict, data_path: str, args) -> int:
    precision, seed, out = _common(cfg, args)
    scn = _build_scenario(cfg)
    ops = scn.make_operators(precision=precision)
    samples, _ = fieldio.read_field(data_path)
    if samples.shape != ops.data_shape:
        raise ConfigError(
            f"data shape {samples.shape} does not match the configured "
            f"operators {ops.data_shape}"
        )
    f = TimeSeriesData(samples.astype(ops.dtype), scn.time)
    settings, theta, project, gt_path = _method_settings(cfg, scn.label,
                                                         args.method)
    ground_truth = None
    if gt_path:
        ground_truth, _ = fieldio.read_field(gt_path)
    log.info("reconstructing with %s (K=%d)", settings.method,
             settings.iterations)
    img, itlog, info = recon.reconstruct(ops, f, settings, theta=theta,
                                         ground_truth=ground_truth,
                                         project_output=project)
    prov = _provenance(cfg, seed, precision)
    fieldio.write_field(out / "image.patf", img, spacing=scn.grid.spacing,
                        units="Pa", provenance=prov)
    _save_png(out / "image.png", img)
    with open(out / "log.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["iteration", "objective",
                                                "step_norm", "wall_time",
                                                "psnr"])
        writer.writeheader()
        for row in itlog.rows():
            writer.writerow(row)
    manifest = {
        "kind": "reconstruct",
        "method": settings.method,
        "iterations": settings.iterations,
        "eta_factor": settings.eta_factor,
        "lambda": settings.lam,
        "projected": project,
        "provenance": prov,
    }
    manifest.update({k: float(v) for k, v in info.items()})
    fieldio.write_json(out / "manifest.json", manifest)
    log.info("wrote %s", out / "image.patf")
    return 0


def cmd_verify(cfg: dict, args) -> int:
    precision, seed, out = _common(cfg, args)
    vcfg = cfg.get("verify", {})
    _check_keys(vcfg, {"trials"}, "verify")
    trials = _get(vcfg, "trials", int, default=100)
    scn = _build_scenario(cfg)
    ops = scn.make_operators(precision=precision)
    log.info("adjointness study: %d trials on grid %s (%s)", trials,
             scn.grid.dims, precision)
    report = analysis.run_adjoint_study(ops, trials=trials, seed=seed)
    threshold = VERIFY_MAX_NORMALIZED[precision]
    passed = report.max_log10_normalized <= np.log10(threshold)
    result = {
        "report": json.loads(report.to_json()),
        "max_normalized_threshold": threshold,
        "adjoint_study_passed": bool(passed),
        "provenance": _provenance(cfg, seed, precision),
    }
    if ops.n_image * ops.n_data <= _DENSE_LIMIT:
        log.info("dense transpose oracle on %d x %d", ops.n_data, ops.n_image)
        A = analysis.dense_forward(ops)
        B = analysis.dense_adjoint(ops)
        rel = float(np.linalg.norm(B - A.T) / np.linalg.norm(A.T))
        dense_ok = rel <= DENSE_ORACLE_THRESHOLD
        result["dense_oracle"] = {
            "relative_frobenius_error": rel,
            "threshold": DENSE_ORACLE_THRESHOLD,
            "passed": bool(dense_ok),
        }
        passed = passed and dense_ok
    else:
        result["dense_oracle"] = {"skipped": "problem too large"}
    result["passed"] = bool(passed)
    fieldio.write_json(out / "verify.json", result)
    log.info("max log10 normalized chi = %.2f (threshold %.2f): %s",
             report.max_log10_normalized, np.log10(threshold),
             "PASS" if passed else "FAIL")
    return 0 if passed else 2


def cmd_psnr(p_path: str, q_path: str) -> int:
    p, _ = fieldio.read_field(p_path)
    q, _ = fieldio.read_field(q_path)
    value = analysis.psnr(p, q)
    print(f"{value:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pat",
        description="Photoacoustic tomography simulation and reconstruction",
    )
    parser.add_argument("--quiet", action="store_true",
                        help="only print warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--precision", choices=("f32", "f64"), default=None)

    p_sim = sub.add_parser("simulate", help="run the forward model")
    add_common(p_sim)
    p_sim.add_argument("--method", default=None, help=argparse.SUPPRESS)

    p_rec = sub.add_parser("reconstruct", help="reconstruct an image from data")
    add_common(p_rec)
    p_rec.add_argument("data", help="path to the recorded data field file")
    p_rec.add_argument("--method", default=None,
                       choices=("TR", "BP", "iTR", "iTR+", "LS", "LS+", "TV+"))

    p_ver = sub.add_parser("verify", help="adjointness verification study")
    add_common(p_ver)
    p_ver.add_argument("--method", default=None, help=argparse.SUPPRESS)

    p_psnr = sub.add_parser("psnr", help="PSNR between two field files")
    p_psnr.add_argument("image", help="reference image field file")
    p_psnr.add_argument("other", help="comparison image field file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        if args.command == "psnr":
            return cmd_psnr(args.image, args.other)
        cfg = load_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, args.data, args)
        if args.command == "verify":
            return cmd_verify(cfg, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except fieldio.FieldFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalInstabilityError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
