"""Experiment runner: config parsing, pipelines, CSV/JSON artifacts.

Subcommands
-----------
solve         minimize the configured energy, dump u and metadata
diagnose      frequency/Weiss/Monneau profile on the radius ladder
blowup        frequency estimate + tangent fit at the analysis point
strata        contact set, free boundary, classification, strata atlas
verify        run the verification check suite for the config
convergence   refinement study against an analytic reference

Flags: --config PATH (required), --out DIR (overrides config output_dir),
--threads N (default 1; reductions are ordered, so outputs are identical
for any N).  Exit codes: 0 pass, 1 check failure, 2 config error.

Config document (JSON, one object)::

    {
      "schema_version": "1",
      "grid": {"dim": 2, "cells_per_axis": 65},
      "problem": {
        "A": [["1", "0"], ["0", "1"]],       # n x n expression strings
        "k_plus": "1", "k_minus": "2",       # slab penalties, >= 0
        "h": "0",                            # obstacle on the slab
        "p": 2.0, "kappa": 2,
        "dirichlet_g": "x1",                 # outer boundary data
        "ellipticity": [1.0, 1.0],           # declared (lambda, Lambda)
        "lipschitz_bound": 0.0
      },
      "ladder": {"rho_max": 0.9, "per_octave": 4},
      "solver": {"tol": 1e-10, "max_iter": 100},
      "diagnostics": {"center": "free_boundary"},   # or "origin" or [x1, ...]
      "pipeline": ["solve", "diagnose"],
      "output_dir": "out",
      "seeds": 0,
      "convergence": {"problem": "smooth", "levels": [33, 65, 129]}
    }

Expression grammar (bit-exact; a strict subset of Python expressions)::

    expr := number | x1 | x2 | x3
          | expr + expr | expr - expr | expr * expr | expr / expr
          | expr ** number | -expr | +expr
          | exp(expr) | log(expr) | sin(expr) | cos(expr) | max(expr, 0)

CSV artifacts are RFC-4180-style with a header row and 17 significant
digits; JSON manifests carry schema_version "1", the sha256 of the
canonical config, every emitted file, and per-stage wall-clock times.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import freeboundary as fb
from .blowup import estimate_frequency, fit_tangent
from .errors import SpecError
from .expressions import parse_expression
from .fields import CoefficientField, ProblemSpec, ScalarField
from .geometry import build_grid
from .manufactured import log_solution_w
from .solver import assemble, minimize, solve_linear_mixed
from .taylor import normalize
from .verification import run_verification

__all__ = ["ExperimentConfig", "RunManifest", "run", "convergence_study", "main"]

SCHEMA_VERSION = "1"
STAGES = ("solve", "diagnose", "blowup", "strata", "verify", "convergence")


class ConfigError(SpecError):
    """Malformed experiment configuration; names the offending field."""


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


@dataclass
class ExperimentConfig:
    """Parsed configuration; `raw` is the canonical dict (round-trip stable)."""

    raw: dict
    grid_dim: int
    grid_cells: int
    problem: dict
    ladder_rho_max: float
    ladder_per_octave: int
    solver_tol: float
    solver_max_iter: int
    diagnostics_center: object
    pipeline: list
    output_dir: str
    seeds: int
    convergence: dict

    @classmethod
    def parse(cls, document) -> "ExperimentConfig":
        if isinstance(document, (str, Path)):
            try:
                document = json.loads(Path(document).read_text())
            except (OSError, json.JSONDecodeError) as err:
                raise ConfigError(f"cannot read config: {err}") from err
        if not isinstance(document, dict):
            raise ConfigError("config must be a JSON object")

        def need(path, caster, default=None):
            node = document
            for key in path.split(".")[:-1]:
                node = node.get(key, {})
            leaf = path.split(".")[-1]
            if leaf not in node:
                if default is not None:
                    return default
                raise ConfigError(f"missing config field {path!r}")
            try:
                return caster(node[leaf])
            except (TypeError, ValueError) as err:
                raise ConfigError(f"bad value for {path!r}: {err}") from err

        dim = need("grid.dim", int)
        cells = need("grid.cells_per_axis", int)
        problem = document.get("problem")
        if not isinstance(problem, dict):
            raise ConfigError("missing config field 'problem'")
        for fieldname in ("A", "k_plus", "k_minus", "h", "p", "kappa", "dirichlet_g"):
            if fieldname not in problem:
                raise ConfigError(f"missing config field 'problem.{fieldname}'")
        A = problem["A"]
        if (not isinstance(A, list) or len(A) != dim
                or any(not isinstance(r, list) or len(r) != dim for r in A)):
            raise ConfigError(f"'problem.A' must be a {dim}x{dim} matrix of strings")
        for i, row in enumerate(A):
            for j, entry in enumerate(row):
                try:
                    parse_expression(str(entry))
                except SpecError as err:
                    raise ConfigError(f"problem.A[{i}][{j}]: {err}") from err
        for fieldname in ("k_plus", "k_minus", "h", "dirichlet_g"):
            try:
                parse_expression(str(problem[fieldname]))
            except SpecError as err:
                raise ConfigError(f"problem.{fieldname}: {err}") from err

        pipeline = document.get("pipeline", ["solve"])
        if not isinstance(pipeline, list) or any(s not in STAGES for s in pipeline):
            raise ConfigError(f"'pipeline' must list stages from {STAGES}")

        cfg = cls(
            raw=document,
            grid_dim=dim,
            grid_cells=cells,
            problem=problem,
            ladder_rho_max=need("ladder.rho_max", float, 0.9),
            ladder_per_octave=need("ladder.per_octave", int, 4),
            solver_tol=need("solver.tol", float, 1e-10),
            solver_max_iter=need("solver.max_iter", int, 100),
            diagnostics_center=document.get("diagnostics", {}).get(
                "center", "free_boundary"),
            pipeline=list(pipeline),
            output_dir=str(document.get("output_dir", "out")),
            seeds=int(document.get("seeds", 0)),
            convergence=document.get("convergence", {}),
        )
        return cfg

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def to_spec(self) -> ProblemSpec:
        grid = build_grid(self.grid_dim, self.grid_cells)
        prob = self.problem
        A = CoefficientField(
            [[str(e) for e in row] for row in prob["A"]],
            ellipticity=tuple(prob.get("ellipticity", (1.0, 1.0))),
            lipschitz_bound=float(prob.get("lipschitz_bound", 0.0)),
        )
        return ProblemSpec(
            grid=grid, A=A,
            k_plus=str(prob["k_plus"]), k_minus=str(prob["k_minus"]),
            h=str(prob["h"]), p=float(prob["p"]), kappa=int(prob["kappa"]),
            dirichlet_g=str(prob["dirichlet_g"]),
        )


@dataclass
class RunManifest:
    config_hash: str
    schema_version: str = SCHEMA_VERSION
    artifacts: list = dc_field(default_factory=list)
    wall_clock: dict = dc_field(default_factory=dict)
    checks: dict = dc_field(default_factory=dict)
    threads: int = 1
    exit_status: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": self.schema_version,
            "config_hash": self.config_hash,
            "artifacts": sorted(self.artifacts),
            "wall_clock": {k: round(v, 6) for k, v in self.wall_clock.items()},
            "checks": self.checks,
            "threads": self.threads,
            "exit_status": self.exit_status,
        }, sort_keys=True, indent=2)


def _write(out_dir: Path, name: str, text: str, manifest: RunManifest):
    path = out_dir / name
    path.write_text(text)
    manifest.artifacts.append(name)


def _nodal_csv(u: ScalarField) -> str:
    """Row-major nodal dump, axis order x1..xn, header row, 17 digits."""
    grid = u.grid
    nodes = grid.nodes()
    header = ",".join(f"x{i + 1}" for i in range(grid.dim)) + ",u"
    lines = [header]
    flat = u.values.ravel()
    for row, val in zip(nodes, flat):
        lines.append(",".join(_fmt(c) for c in row) + "," + _fmt(val))
    return "\n".join(lines) + "\n"


def _resolve_center(cfg: ExperimentConfig, spec, u):
    center = cfg.diagnostics_center
    if isinstance(center, (list, tuple)):
        return np.asarray([float(c) for c in center])
    if center == "origin":
        return np.zeros(spec.grid.dim)
    contact = fb.extract_contact_set(u, spec.h)
    pts = fb.extract_free_boundary(contact, u, spec.h)
    pts = [p for p in pts
           if np.abs(p[: spec.grid.dim - 1]).max() <= 1.0 - fb.EDGE_MARGIN]
    return pts[0] if pts else np.zeros(spec.grid.dim)


def run(config, out_dir=None, threads: int = 1) -> RunManifest:
    """Execute the configured pipeline stages in order; deterministic output."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.parse(config)
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=cfg.config_hash(), threads=threads)

    spec = cfg.to_spec()
    solve_result = None
    norm = None

    for stage in cfg.pipeline:
        t0 = time.perf_counter()
        try:
            if stage == "solve":
                energy = assemble(spec)
                zero = ScalarField(spec.grid, np.zeros(spec.grid.shape))
                solve_result = minimize(
                    energy, zero, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter
                )
                _write(out, "u.csv", _nodal_csv(solve_result.u), manifest)
                _write(out, "solve.json",
                       json.dumps(solve_result.metadata(), sort_keys=True, indent=2),
                       manifest)
                manifest.checks["solve"] = True

            elif stage == "diagnose":
                if solve_result is None:
                    raise SpecError("diagnose requires a prior solve stage")
                norm = normalize(spec, solve_result.u)
                center = _resolve_center(cfg, spec, solve_result.u)
                if np.abs(center).max() > 1e-14:
                    local = fb.recenter(spec, solve_result.u, center,
                                        per_octave=cfg.ladder_per_octave)
                    profile = dg.frequency_profile(
                        local.field, local.A, kappa=local.kappa, ladder=local.ladder,
                        k_plus=local.k_plus, k_minus=local.k_minus, p=local.p,
                        f_eval=local.f_eval,
                        f_growth_constant=norm.f_growth_constant,
                    )
                else:
                    ladder = dg.RadiusLadder.default(
                        spec.grid.spacing, rho_max=cfg.ladder_rho_max,
                        per_octave=cfg.ladder_per_octave,
                    )
                    profile = dg.frequency_profile(
                        norm.v, spec.A, kappa=spec.kappa, ladder=ladder,
                        k_plus=spec.k_plus, k_minus=spec.k_minus, p=spec.p,
                        f_eval=norm.f_eval,
                        f_growth_constant=norm.f_growth_constant,
                    )
                _write(out, "frequency.csv", profile.csv_text(), manifest)
                meta = profile.manifest()
                meta["center"] = [float(c) for c in center]
                _write(out, "diagnostics.json",
                       json.dumps(meta, sort_keys=True, indent=2), manifest)
                manifest.checks["diagnose"] = True

            elif stage == "blowup":
                if solve_result is None:
                    raise SpecError("blowup requires a prior solve stage")
                center = _resolve_center(cfg, spec, solve_result.u)
                local = fb.recenter(spec, solve_result.u, center,
                                    per_octave=cfg.ladder_per_octave)
                profile = dg.frequency_profile(
                    local.field, local.A, kappa=local.kappa, ladder=local.ladder,
                    k_plus=local.k_plus, k_minus=local.k_minus, p=local.p,
                    f_eval=local.f_eval,
                )
                est = estimate_frequency(profile)
                nu = max(est.nu_int, 1)
                tangent = fit_tangent(local.field, np.zeros(spec.grid.dim), nu,
                                      local.ladder)
                payload = json.loads(tangent.to_json())
                payload["frequency"] = {
                    "nu_hat": est.nu_hat, "nu_int": est.nu_int,
                    "confidence": est.confidence,
                    "truncation_limited": est.truncation_limited,
                }
                payload["center"] = [float(c) for c in center]
                _write(out, "tangents.json",
                       json.dumps(payload, sort_keys=True, indent=2), manifest)
                manifest.checks["blowup"] = True

            elif stage == "strata":
                if solve_result is None:
                    raise SpecError("strata requires a prior solve stage")
                contact = fb.extract_contact_set(solve_result.u, spec.h)
                pts = fb.extract_free_boundary(contact, solve_result.u, spec.h)
                admissible = [
                    p for p in pts
                    if np.abs(p[: spec.grid.dim - 1]).max() <= 1.0 - fb.EDGE_MARGIN
                ]
                classified = [
                    fb.classify_point(p, solve_result.u, spec) for p in admissible
                ]
                report = fb.stratify(classified)
                atlas = [c.record() for c in classified]
                _write(out, "atlas.json",
                       json.dumps({"points": atlas, "counts": report["counts"],
                                   "line_fits": report["line_fits"]},
                                  sort_keys=True, indent=2), manifest)
                header = ",".join(f"x{i + 1}" for i in range(spec.grid.dim))
                rows = [header] + [
                    ",".join(_fmt(c) for c in p) for p in admissible
                ]
                _write(out, "sigma_points.csv", "\n".join(rows) + "\n", manifest)
                manifest.checks["strata"] = True

            elif stage == "verify":
                checks, artifacts = run_verification(
                    spec, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter,
                    seed=cfg.seeds,
                )
                for c in checks:
                    print(c.line())
                    manifest.checks[f"verify:{c.name}"] = bool(c.passed)
                if "profile" in artifacts:
                    _write(out, "frequency.csv",
                           artifacts["profile"].csv_text(), manifest)
                    _write(out, "diagnostics.json",
                           json.dumps(artifacts["profile"].manifest(),
                                      sort_keys=True, indent=2), manifest)
                if "local_profile" in artifacts:
                    _write(out, "frequency_local.csv",
                           artifacts["local_profile"].csv_text(), manifest)
                if "solve" in artifacts:
                    _write(out, "u.csv", _nodal_csv(artifacts["solve"].u), manifest)
                    _write(out, "solve.json",
                           json.dumps(artifacts["solve"].metadata(),
                                      sort_keys=True, indent=2), manifest)
                if not all(c.passed for c in checks):
                    manifest.exit_status = 1

            elif stage == "convergence":
                params = cfg.convergence or {}
                table = convergence_study(
                    dim=cfg.grid_dim,
                    levels=params.get("levels", [33, 65, 129]),
                    problem=params.get("problem", "smooth"),
                )
                lines = ["cells,h,max_error,observed_order"]
                for row in table["rows"]:
                    lines.append(
                        f"{row['cells']},{_fmt(row['h'])},{_fmt(row['max_error'])},"
                        + (row["observed_order"] if isinstance(row["observed_order"], str)
                           else _fmt(row["observed_order"]))
                    )
                _write(out, "convergence.csv", "\n".join(lines) + "\n", manifest)
                manifest.checks["convergence"] = True

        except Exception as err:   # noqa: BLE001 - stage failures recorded, not raised
            manifest.checks[stage] = False
            manifest.exit_status = 1
            print(f"[FAIL] stage {stage}: {err}", file=sys.stderr)
            manifest.wall_clock[stage] = time.perf_counter() - t0
            break
        manifest.wall_clock[stage] = time.perf_counter() - t0

    # manifest completeness: list anything already in the directory
    existing = sorted(
        str(p.relative_to(out)) for p in out.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    )
    for name in existing:
        if name not in manifest.artifacts:
            manifest.artifacts.append(name)
    (out / "manifest.json").write_text(manifest.to_json())
    manifest.artifacts.append("manifest.json")
    return manifest


def convergence_study(dim: int = 2, levels=(33, 65, 129), problem: str = "smooth") -> dict:
    """Refinement errors against an analytic reference.

    problem "linear": u = x1 (exactly representable; errors at the
    rounding floor, order reported as "exact"). problem "smooth": the
    harmonic 3 x1^2 xn - xn^3 with smooth slab derivative 3 x1^2.
    problem "wlog": the log-singular field with p = 2 and slab derivative
    (x1)^+; its limited regularity caps the observable order near 1.
    """
    if problem == "linear":
        exact = lambda P: P[:, 0]
        flux = lambda P: np.zeros(P.shape[0])
    elif problem == "smooth":
        exact = lambda P: 3.0 * P[:, 0] ** 2 * P[:, -1] - P[:, -1] ** 3
        flux = lambda P: 3.0 * P[:, 0] ** 2
    elif problem == "wlog":
        w = log_solution_w(2, 1.0)
        exact = w.evaluate
        flux = lambda P: np.maximum(P[:, 0], 0.0)
    else:
        raise ConfigError(f"unknown convergence problem {problem!r}")

    A = CoefficientField.identity(dim)
    rows = []
    errors = []
    for cells in levels:
        grid = build_grid(dim, int(cells))
        u = solve_linear_mixed(flux, exact, A, grid)
        ref = np.asarray(exact(grid.nodes()), dtype=float).reshape(grid.shape)
        err = float(np.abs(u.values - ref).max())
        errors.append(err)
        rows.append({"cells": int(cells), "h": grid.spacing, "max_error": err})
    for i, row in enumerate(rows):
        if i == 0:
            row["observed_order"] = ""
        elif errors[i] <= 1e-12:
            row["observed_order"] = "exact"
        else:
            row["observed_order"] = float(np.log2(errors[i - 1] / errors[i]))
    orders = [r["observed_order"] for r in rows[1:]
              if isinstance(r["observed_order"], float)]
    return {"rows": rows, "orders": orders,
            "exact_floor": all(e <= 1e-12 for e in errors)}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="thinlab",
        description="two-penalty boundary obstacle laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker count; output is identical for any value")
    args = parser.parse_args(argv)

    try:
        cfg = ExperimentConfig.parse(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    # the chosen subcommand runs as a single-stage pipeline (verify and
    # convergence are self-contained; others prepend the solve they need)
    stage = args.command
    pipeline = [stage]
    if stage in ("diagnose", "blowup", "strata"):
        pipeline = ["solve", stage]
    cfg.pipeline = pipeline

    try:
        manifest = run(cfg, out_dir=args.out, threads=args.threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    return manifest.exit_status


if __name__ == "__main__":
    sys.exit(main())
