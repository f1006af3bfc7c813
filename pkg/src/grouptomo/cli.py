"""Batch command line front end.

Subcommands:

    run           simulate (or exactly integrate) a scheme and reconstruct
    ingest        reconstruct from an external measurement-record CSV
    verify-frame  numerically check a frame's defining identities
    list-schemes  print schemes and their config keys

Configs are flat ``key = value`` text files ('#' starts a comment).
Unknown keys are rejected before any computation.  All randomness flows
from the single config seed (override with --seed-override).  Exit
codes: 0 success, 2 validation error, 3 numerical failure.

Artifacts written to the output directory:

    rho_true.json   simulated reference state (run only)
    rho_est.json    reconstructed state (raw estimate)
    metrics.json    fidelity, trace distance, k checks where applicable
    trace.csv       convergence trace (shots or k_max rows, per scheme)
    records.csv     simulated measurement records (sampled runs)
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import displaced, frames, homodyne, oscillator, spin
from .io import read_records_csv, write_matrix_json, write_records_csv
from .linalg import DensityMatrix, random_mixed_density, random_pure_density
from .validation import NumericalFailure, ValidationError

_REQUIRED = object()

_COMMON = {
    "scheme": (str, _REQUIRED),
    "seed": (int, 0),
    "shots": (int, 0),
}

_SCHEMAS = {
    "spin-sphere": {
        **_COMMON,
        "two_s": (int, _REQUIRED),
        "state": (str, "random-pure"),
        "polar_nodes": (int, 0),       # 0: sized from two_s
        "azimuthal_nodes": (int, 0),
        "threads": (int, 0),
    },
    "spin-finite": {
        **_COMMON,
        "two_s": (int, _REQUIRED),
        "state": (str, "random-pure"),
        "mode": (str, "rotations"),
        "labels": (str, ""),
        "labels_seed": (int, -1),      # -1: reuse seed
        "threads": (int, 0),
    },
    "homodyne": {
        **_COMMON,
        "nmax": (int, _REQUIRED),
        "state": (str, "fock:0"),
        "mode": (str, "exact"),
        "phi_nodes": (int, 50),
        "x_max": (float, 6.0),
        "x_nodes": (int, 401),
        "k_max": (float, 12.0),
        "threads": (int, 0),
    },
    "displaced-count": {
        **_COMMON,
        "nmax": (int, _REQUIRED),
        "state": (str, "fock:0"),
        "mode": (str, "exact"),
        "y": (float, math.pi),
        "radius": (float, 5.0),
        "steps": (int, 100),
        "threads": (int, 0),
    },
    "verify-frame": {
        "scheme": (str, _REQUIRED),
        "frame": (str, _REQUIRED),
        "seed": (int, 0),
        "trials": (int, 8),
        "checks": (int, 20),
        "two_s": (int, 1),
        "polar_nodes": (int, 0),
        "azimuthal_nodes": (int, 0),
        "psi_nodes": (int, 0),
        "nmax": (int, 24),
        "radius": (float, 4.0),
        "steps": (int, 60),
        "y": (float, math.pi),
    },
}


def parse_config(path: str) -> dict:
    raw = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key in raw:
            raise ValidationError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    if "scheme" not in raw:
        raise ValidationError("config is missing the 'scheme' key")
    scheme = raw["scheme"]
    if scheme not in _SCHEMAS:
        raise ValidationError(
            f"unknown scheme {scheme!r}; valid: {', '.join(sorted(_SCHEMAS))}")
    schema = _SCHEMAS[scheme]
    unknown = set(raw) - set(schema)
    if unknown:
        raise ValidationError(f"unknown config keys for {scheme}: {sorted(unknown)}")
    config = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                config[key] = conv(raw[key])
            except ValueError as exc:
                raise ValidationError(f"config key {key!r}: {exc}") from exc
        elif default is _REQUIRED:
            raise ValidationError(f"config is missing required key {key!r} for {scheme}")
        else:
            config[key] = default
    if config.get("shots", 0) < 0:
        raise ValidationError("shots must be nonnegative")
    return config


def _default_threads(cli_value: int | None, config: dict) -> int:
    if cli_value is not None and cli_value > 0:
        return cli_value
    if config.get("threads", 0) > 0:
        return config["threads"]
    env = os.environ.get("GROUPTOMO_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _spin_state(spec: str, dim: int, seed: int) -> DensityMatrix:
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x57A7E]))
    if spec == "random-pure":
        return random_pure_density(dim, rng)
    if spec == "random-mixed":
        return random_mixed_density(dim, rng)
    if spec == "maximally-mixed":
        return DensityMatrix(np.eye(dim, dtype=np.complex128) / dim)
    if spec.startswith("basis:"):
        k = int(spec.split(":", 1)[1])
        if not 0 <= k < dim:
            raise ValidationError(f"basis index {k} outside 0..{dim - 1}")
        m = np.zeros((dim, dim), dtype=np.complex128)
        m[k, k] = 1.0
        return DensityMatrix(m)
    raise ValidationError(f"unknown spin state spec {spec!r}")


def _oscillator_state(spec: str, space: oscillator.FockSpace) -> DensityMatrix:
    kind, _, arg = spec.partition(":")
    try:
        if kind == "fock":
            return oscillator.fock_state(space, int(arg))
        if kind == "coherent":
            re_s, im_s = arg.split(",")
            return oscillator.coherent_state(space, complex(float(re_s), float(im_s)))
        if kind == "thermal":
            return oscillator.thermal_state(space, float(arg))
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"bad state spec {spec!r}: {exc}") from exc
    raise ValidationError(f"unknown state spec {spec!r} (fock:n | coherent:re,im | thermal:nbar)")


def _parse_labels(text: str) -> list:
    labels = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [float(v) for v in chunk.split(",")]
        if len(parts) != 3:
            raise ValidationError("each label needs 'theta,phi,psi'")
        labels.append((spin.Direction(parts[0], parts[1]), parts[2]))
    if not labels:
        raise ValidationError("empty label list")
    return labels


def _finite_labels(config: dict, system: spin.SpinSystem) -> list:
    if config["labels"]:
        return _parse_labels(config["labels"])
    seed = config["labels_seed"] if config["labels_seed"] >= 0 else config["seed"]
    return spin.random_finite_labels(system, seed=seed, mode=config["mode"])


def _write_trace_csv(path: Path, header: tuple, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _write_metrics(path: Path, metrics: dict) -> None:
    path.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")


def _run_scheme(config: dict, threads: int, records=None):
    """Returns (rho_true or None, result, trace_header, trace_rows, batch or None)."""
    scheme = config["scheme"]
    seed = config["seed"]
    shots = config["shots"]
    if scheme == "spin-sphere":
        system = spin.spin_operators(config["two_s"])
        rho = _spin_state(config["state"], system.dim, seed)
        if records is not None:
            result = spin.reconstruct_sphere_records(system, records, threads=threads)
            return None, result, ("shots", "fidelity", "trace_distance"), [], None
        if shots > 0:
            batch = spin.sample_spin_sphere(rho, system, shots, seed)
            result = spin.reconstruct_sphere_records(system, batch, rho_true=rho,
                                                     threads=threads)
            return rho, result, ("shots", "fidelity", "trace_distance"), result.trace, batch
        polar = config["polar_nodes"] or None
        azim = config["azimuthal_nodes"] or None
        frame = spin.sphere_frame(config["two_s"], polar, azim)
        result = spin.reconstruct_spin_quadrature(rho, system, frame)
        rows = [(0, result.fidelity_to(rho), result.trace_distance_to(rho))]
        return rho, result, ("shots", "fidelity", "trace_distance"), rows, None
    if scheme == "spin-finite":
        system = spin.spin_operators(config["two_s"])
        labels = _finite_labels(config, system)
        rho = _spin_state(config["state"], system.dim, seed)
        if records is not None:
            result = spin.reconstruct_finite_records(system, labels, records,
                                                     mode=config["mode"])
            return None, result, ("shots", "fidelity", "trace_distance"), [], None
        if shots > 0:
            batch = spin.sample_spin_finite(rho, system, labels, shots, seed)
            result = spin.reconstruct_finite_records(system, labels, batch,
                                                     mode=config["mode"], rho_true=rho)
            rows = [(shots, result.fidelity_to(rho), result.trace_distance_to(rho))]
            return rho, result, ("shots", "fidelity", "trace_distance"), rows, batch
        result = spin.reconstruct_spin_finite(rho, system, labels, mode=config["mode"])
        rows = [(0, result.fidelity_to(rho), result.trace_distance_to(rho))]
        return rho, result, ("shots", "fidelity", "trace_distance"), rows, None
    if scheme == "homodyne":
        space = oscillator.fock_space(config["nmax"])
        grid = homodyne.HomodyneGrid(config["phi_nodes"], config["x_max"],
                                     config["x_nodes"], config["k_max"])
        if records is not None:
            result = homodyne.reconstruct_homodyne_records(grid, records, dim=space.dim,
                                                           threads=threads)
            return None, result, ("shots", "fidelity", "trace_distance"), [], None
        rho = _oscillator_state(config["state"], space)
        if config["mode"] == "sampled":
            if shots < 1:
                raise ValidationError("sampled mode needs shots >= 1")
            batch = homodyne.sample_homodyne(rho, grid, shots, seed)
            result = homodyne.reconstruct_homodyne_records(grid, batch, dim=space.dim,
                                                           rho_true=rho, threads=threads)
            return rho, result, ("shots", "fidelity", "trace_distance"), result.trace, batch
        result = homodyne.reconstruct_homodyne(rho, grid, mode="exact")
        ks = sorted({config["k_max"] / 4, config["k_max"] / 2, config["k_max"]})
        rows = homodyne.kmax_convergence(rho, grid, ks)
        return rho, result, ("k_max", "fidelity", "trace_distance"), rows, None
    if scheme == "displaced-count":
        space = oscillator.fock_space(config["nmax"])
        grid = displaced.AlphaGrid(config["radius"], config["steps"], config["y"])
        if records is not None:
            result = displaced.reconstruct_bw_records(grid, records, space=space,
                                                      threads=threads)
            return None, result, ("shots", "fidelity", "trace_distance"), [], None
        rho = _oscillator_state(config["state"], space)
        if config["mode"] == "sampled":
            if shots < 1:
                raise ValidationError("sampled mode needs shots >= 1")
            batch = displaced.sample_displaced_counts(rho, grid, shots, seed, space=space)
            result = displaced.reconstruct_bw_records(grid, batch, space=space,
                                                      rho_true=rho, threads=threads)
            return rho, result, ("shots", "fidelity", "trace_distance"), result.trace, batch
        result = displaced.reconstruct_bw(rho, grid, mode="exact", space=space)
        rows = [(0, result.fidelity_to(rho), result.trace_distance_to(rho))]
        return rho, result, ("shots", "fidelity", "trace_distance"), rows, None
    raise ValidationError(f"scheme {scheme!r} cannot be run")


def _emit_artifacts(out: Path, rho_true, result, trace_header, trace_rows, batch,
                    config: dict) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    if rho_true is not None:
        write_matrix_json(out / "rho_true.json", rho_true.matrix)
    write_matrix_json(out / "rho_est.json", result.estimate)
    _write_trace_csv(out / "trace.csv", trace_header, trace_rows)
    if batch is not None:
        write_records_csv(out / "records.csv", batch)
    metrics = {
        "scheme": config["scheme"],
        "shots": result.shots,
        "seed": config.get("seed", 0),
    }
    for key in ("mode", "k_max", "min_photon_mass", "y"):
        if key in result.meta:
            metrics[key] = result.meta[key]
    if rho_true is not None:
        metrics["fidelity"] = result.fidelity_to(rho_true)
        metrics["trace_distance"] = result.trace_distance_to(rho_true)
        if config["scheme"] in ("homodyne", "displaced-count"):
            # truncation artifacts live in the top rows; report the
            # quarantined block (n <= nmax/2) separately
            blk = rho_true.dim // 2 + 1
            diff = (result.estimate - rho_true.matrix)[:blk, :blk]
            metrics["central_block_error"] = float(np.linalg.norm(diff))
    _write_metrics(out / "metrics.json", metrics)
    return metrics


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    if config["scheme"] == "verify-frame":
        return _cmd_verify(args)
    if args.seed_override is not None:
        config["seed"] = args.seed_override
    threads = _default_threads(args.threads, config)
    rho_true, result, header, rows, batch = _run_scheme(config, threads)
    metrics = _emit_artifacts(Path(args.out), rho_true, result, header, rows,
                              batch, config)
    mass = result.meta.get("min_photon_mass", 1.0)
    if mass < 1.0 - 1e-4:
        print(f"numerical failure: photon mass deficit (min mass {mass:.6f}); "
              "artifacts written", file=_sys.stderr)
        return 3
    print(json.dumps(metrics, sort_keys=True))
    return 0


def _cmd_ingest(args) -> int:
    config = parse_config(args.config)
    if args.seed_override is not None:
        config["seed"] = args.seed_override
    threads = _default_threads(args.threads, config)
    records = read_records_csv(args.records)
    if records.scheme != config["scheme"]:
        raise ValidationError(
            f"records are {records.scheme!r} but config wants {config['scheme']!r}")
    _, result, header, rows, _ = _run_scheme(config, threads, records=records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_json(out / "rho_est.json", result.estimate)
    _write_trace_csv(out / "trace.csv", header, rows or result.trace)
    metrics = {"scheme": config["scheme"], "shots": result.shots,
               "records": len(records)}
    _write_metrics(out / "metrics.json", metrics)
    print(json.dumps(metrics, sort_keys=True))
    return 0


def _build_frame(config: dict):
    kind = config["frame"]
    if kind == "pauli":
        return frames.pauli_frame(), 2.0
    if kind == "spin":
        system = spin.spin_operators(config["two_s"])
        sframe = spin.sphere_frame(config["two_s"],
                                   config["polar_nodes"] or None,
                                   config["azimuthal_nodes"] or None,
                                   config["psi_nodes"] or None)
        return spin.rotation_frame(system, sframe), 1.0 / system.dim
    space = oscillator.fock_space(config["nmax"])
    if kind == "displacement":
        return oscillator.displacement_frame(space, config["radius"], config["steps"]), math.pi
    if kind == "displaced-count":
        grid = displaced.AlphaGrid(config["radius"], config["steps"], config["y"])
        return displaced.bw_frame(space, grid), math.pi / (2.0 * (1.0 - math.cos(config["y"])))
    raise ValidationError(f"unknown frame {kind!r}")


def _cmd_verify(args) -> int:
    config = parse_config(args.config)
    if config["scheme"] != "verify-frame":
        raise ValidationError("verify-frame needs a config with scheme = verify-frame")
    frame, k_theory = _build_frame(config)
    rng = np.random.Generator(np.random.Philox(key=[config["seed"], 0xCAFE]))
    e0 = np.zeros(frame.dim, dtype=np.complex128)
    e0[0] = 1.0
    k_est = frames.estimate_k_tilde(frame, e0, e0)
    spread = frames.k_tilde_invariance(frame, config["trials"], config["seed"])
    closure_max = 0.0
    trace_max = 0.0
    for _ in range(config["checks"]):
        g = rng.standard_normal((frame.dim, frame.dim)) \
            + 1j * rng.standard_normal((frame.dim, frame.dim))
        a = (g + g.conj().T) / 2.0
        closure_max = max(closure_max, frames.closure_residual(frame, a))
        trace_max = max(trace_max, frames.trace_identity_residual(frame, a))
    metrics = {
        "frame": config["frame"],
        "k_tilde_estimate": k_est,
        "k_tilde_theory": k_theory,
        "k_tilde_error": abs(k_est - k_theory),
        "invariance_spread": spread,
        "closure_residual_max": closure_max,
        "trace_identity_residual_max": trace_max,
        "discretization_tol": frame.discretization_tol,
        "elements": len(frame),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics(out / "metrics.json", metrics)
    print(json.dumps(metrics, sort_keys=True))
    bad = (closure_max > frame.discretization_tol
           or trace_max > frame.discretization_tol
           or abs(k_est - k_theory) > max(1e-3, frame.discretization_tol))
    if bad:
        print("numerical failure: frame residuals exceed the declared tolerance",
              file=_sys.stderr)
        return 3
    return 0


def _cmd_list(_args) -> int:
    for scheme in sorted(_SCHEMAS):
        keys = ", ".join(sorted(k for k in _SCHEMAS[scheme] if k != "scheme"))
        print(f"{scheme}: {keys}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="grouptomo",
                                     description="group-covariant quantum tomography")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker thread cap (default: GROUPTOMO_THREADS or 1)")
        p.add_argument("--seed-override", type=int, default=None)

    p_run = sub.add_parser("run", help="simulate and reconstruct")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_ing = sub.add_parser("ingest", help="reconstruct from a records CSV")
    common(p_ing)
    p_ing.add_argument("--records", required=True, help="measurement records CSV")
    p_ing.set_defaults(fn=_cmd_ingest)

    p_ver = sub.add_parser("verify-frame", help="check frame identities")
    common(p_ver)
    p_ver.set_defaults(fn=_cmd_verify)

    p_list = sub.add_parser("list-schemes", help="print schemes and config keys")
    p_list.set_defaults(fn=_cmd_list)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=_sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
