"""Command-line entry point: ``excursion-lab <command> [--config PATH] ...``.

Commands
--------
formula        CSV sweep of the closed-form expectations
mc             Monte-Carlo report (JSON) and optional per-sample CSV
checks         kernel, Gaussian, two-path and critical-radius diagnostics
mesh-export    plain-text vertex/face listing
basis-export   orthonormal coefficient matrix as CSV

Every output file embeds a run manifest (a ``# manifest:`` first line in
text and CSV files, a ``manifest`` key in JSON).  Only its ``execution``
entry (timestamp, elapsed time, worker count) changes between runs with
the same configuration and seed.

Exit codes: 0 success, 2 validation error, 3 failed check.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import __version__
from ._validation import ValidationError, check_positive_int
from .chern import CURVE, PROJSPACE, RingSpec, expected_chi_curve, rows_to_csv, sweep_rows
from .embedding import critical_radius, slice_sin2_geometric, slice_sin2_kernel
from .excursion import mc_run
from .geometry import ELLIPTIC, PROJECTIVE, GeometrySpec, build_mesh, make_geometry
from .kernel import gaussian_check, gaussian_window, tyz_check
from .sections import orthonormal_basis

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CHECK_FAILED = 3

TOLERANCES = {
    "tyzExact": 1e-6,
    "tyzSpread": 1e-6,
    "modeAgreement": 1e-8,
    "validPairFloor": 1e-3,
    "nearDiagonal": 1e-6,
    "degeneracyDelta": 1e-9,
    "rHatRatio": 0.5,
    "meshEdgeFactor": 0.2,
}


# ------------------------------------------------------------------ config
@dataclass
class ChecksConfig:
    pairBudget: int = 64
    modePairs: int = 1000
    gaussianB: float = 2.5
    epsilon: float = 0.25
    gaussianN: list = field(default_factory=lambda: [16, 256])


@dataclass
class FormulaConfig:
    rings: list = field(default_factory=list)
    N: list = field(default_factory=list)
    u: list = field(default_factory=lambda: [0.5, 0.9, 0.96, 1.0])


@dataclass
class RunConfig:
    """Validated run configuration with every default materialized.

    ``u`` is a list of thresholds or ``"auto"``, which selects
    ``max(0.96, cos(0.8 rHat_N))`` per N.
    """

    geometry: dict = field(default_factory=lambda: {"family": PROJECTIVE, "m": 1, "tau": [0.0, 1.0], "degL": 1})
    N: list = field(default_factory=lambda: [4])
    u: Union[list, str] = "auto"
    meshEdge: Optional[float] = None
    quadratureOrder: Optional[int] = None
    nSamples: int = 10000
    seed: int = 0
    workers: int = 1
    chernMode: str = "auto"
    perSampleLog: bool = False
    formula: FormulaConfig = field(default_factory=FormulaConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        sub = {}
        for key, klass in (("formula", FormulaConfig), ("checks", ChecksConfig)):
            part = data.pop(key, {}) or {}
            bad = set(part) - set(klass.__dataclass_fields__)
            if bad:
                raise ValidationError(f"unknown {key} keys: {sorted(bad)}")
            sub[key] = klass(**part)
        if "N" in data and not isinstance(data["N"], list):
            data["N"] = [data["N"]]
        if "u" in data and not isinstance(data["u"], (list, str)):
            data["u"] = [data["u"]]
        cfg = cls(**data, **sub)
        cfg.validate()
        return cfg

    def specs(self) -> list[GeometrySpec]:
        return [GeometrySpec.from_dict(dict(self.geometry, N=N)) for N in self.N]

    def validate(self) -> None:
        geo = dict(self.geometry)
        if "family" not in geo:
            raise ValidationError("geometry.family is required")
        if not self.N:
            raise ValidationError("N must list at least one power")
        specs = self.specs()
        GeometrySpec.from_dict(dict(geo, N=1))
        if self.u != "auto":
            if not isinstance(self.u, list) or not self.u:
                raise ValidationError("u must be 'auto' or a non-empty list")
            for u in self.u:
                if not 0 < float(u) <= 1:
                    raise ValidationError(f"u must lie in (0, 1], got {u!r}")
        if self.meshEdge is not None and not float(self.meshEdge) > 0:
            raise ValidationError("meshEdge must be positive")
        if self.quadratureOrder is not None:
            check_positive_int(self.quadratureOrder, "quadratureOrder")
        check_positive_int(self.nSamples, "nSamples")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")
        check_positive_int(self.workers, "workers")
        if self.chernMode not in ("auto", "exact", "float"):
            raise ValidationError("chernMode must be auto, exact or float")
        check_positive_int(self.checks.pairBudget, "checks.pairBudget")
        check_positive_int(self.checks.modePairs, "checks.modePairs")
        for N in self.checks.gaussianN:
            check_positive_int(N, "checks.gaussianN")
        for s in specs:
            if s.family == ELLIPTIC and s.total_degree < 3:
                raise ValidationError("elliptic embeddings need N degL >= 3")
        self.formula_rings()
        for u in self.formula.u:
            if not 0 <= float(u) <= 1:
                raise ValidationError(f"formula u must lie in [0, 1], got {u!r}")

    def formula_rings(self) -> list[RingSpec]:
        if self.formula.rings:
            out = []
            for r in self.formula.rings:
                kind = r.get("kind")
                if kind == CURVE:
                    out.append(RingSpec.curve(r.get("g", 0), r.get("degL", 1)))
                elif kind == PROJSPACE:
                    out.append(RingSpec.projspace(r.get("m", 1)))
                else:
                    raise ValidationError(f"unknown ring kind {kind!r}")
            return out
        g = self.geometry
        if g["family"] == ELLIPTIC:
            return [RingSpec.curve(1, g.get("degL", 1))]
        m = g.get("m", 1)
        return [RingSpec.curve(0, 1)] if m == 1 else [RingSpec.projspace(m)]

    def mesh_edge(self, N: int) -> float:
        base = TOLERANCES["meshEdgeFactor"] / math.sqrt(N)
        return base if self.meshEdge is None else min(float(self.meshEdge), base)

    def to_dict(self) -> dict:
        d = asdict(self)
        # the worker count never changes results; it is reported under "execution"
        d.pop("workers")
        d["formula"]["N"] = self.formula.N or list(self.N)
        return d


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------- manifest
def manifest(command: str, cfg: RunConfig, started: float) -> dict:
    return {
        "tool": "excursion-lab",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "tolerances": dict(TOLERANCES),
        "execution": {
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "elapsedSeconds": round(time.perf_counter() - started, 3),
            "workers": cfg.workers,
        },
    }


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _num(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, complex):
        return [_num(obj.real), _num(obj.imag)]
    return obj


def _num(x: float):
    # shortest round-trip repr; non-finite values become strings
    if math.isfinite(x):
        return float(f"{x:.17g}")
    return str(x)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


def _with_header(man: dict, body: str) -> str:
    return "# manifest: " + json.dumps(_jsonable(man), sort_keys=False) + "\n" + body


# ---------------------------------------------------------------- commands
def _basis(spec: GeometrySpec, cfg: RunConfig):
    geometry = make_geometry(spec)
    return geometry, orthonormal_basis(geometry, cfg.quadratureOrder)


def _auto_u(basis, mesh, cfg: RunConfig) -> tuple[float, float]:
    rep = critical_radius(basis, mesh, cfg.checks.pairBudget, seed=cfg.seed)
    return max(0.96, math.cos(0.8 * rep.r_hat)), rep.r_hat


def cmd_formula(cfg: RunConfig, out: Path, started: float) -> int:
    Ns = cfg.formula.N or cfg.N
    rows = sweep_rows(cfg.formula_rings(), Ns, cfg.formula.u, mode=cfg.chernMode)
    path = _write(out, "formula.csv", _with_header(manifest("formula", cfg, started), rows_to_csv(rows)))
    print(path)
    return EXIT_OK


def cmd_mc(cfg: RunConfig, out: Path, started: float) -> int:
    runs = []
    for spec in cfg.specs():
        if spec.m != 1:
            raise ValidationError("Monte Carlo runs need a curve (m = 1)")
        geometry, basis = _basis(spec, cfg)
        mesh = build_mesh(geometry, cfg.mesh_edge(spec.N))
        r_hat = None
        if cfg.u == "auto":
            u, r_hat = _auto_u(basis, mesh, cfg)
            us = [u]
        else:
            us = [float(u) for u in cfg.u]
        for j, u in enumerate(us):
            rep = mc_run(geometry, basis, mesh, u, cfg.nSamples, cfg.seed, workers=cfg.workers)
            g = geometry.genus
            closed = expected_chi_curve(g, spec.degL, spec.N, u, mode=cfg.chernMode)
            runs.append({
                "N": spec.N,
                "u": u,
                "uRule": "max(0.96, cos(0.8 rHat))" if r_hat is not None else "config",
                "rHat": r_hat,
                "expectedChiClosedForm": closed.value,
                "report": rep.to_json(),
            })
            if cfg.perSampleLog:
                _write(out, f"mc_samples_N{spec.N}_u{j}.csv",
                       _with_header(manifest("mc", cfg, started), rep.samples_csv()))
    doc = {"manifest": manifest("mc", cfg, started), "runs": runs}
    path = _write(out, "mc.json", _dump_json(doc))
    print(path)
    return EXIT_OK


def _valid_pairs(geometry, count: int, rng: np.random.Generator, N: int):
    """Half uniform pairs, half near pairs with log-uniform separation."""
    half = count // 2
    c1, z1 = geometry.sample_uniform(rng, count)
    c2, z2 = geometry.sample_uniform(rng, count - half)
    r = 10 ** rng.uniform(-3, math.log10(1 / math.sqrt(2 * N)), half)
    step = r * np.exp(2j * math.pi * rng.random(half))
    lam = geometry.base_scale(c1[:half], z1[:half])
    c3, z3 = geometry.normalize(c1[:half], z1[:half, 0:1] + (step / np.sqrt(lam))[:, None])
    cw = np.concatenate([c3, c2])
    zw = np.concatenate([z3, z2])
    d = geometry.distance(c1, z1, cw, zw)
    keep = d >= TOLERANCES["validPairFloor"]
    return c1[keep], z1[keep], cw[keep], zw[keep]


def mode_agreement(basis, geometry, count: int, seed: int) -> dict:
    rng = np.random.default_rng([seed, geometry.N])
    c1, z1, c2, z2 = _valid_pairs(geometry, count, rng, geometry.N)
    F1, d1 = basis.evaluate(c1, z1)
    F2, d2 = basis.evaluate(c2, z2)
    sg = slice_sin2_geometric(F1, d1[:, 0], F2, d2[:, 0])
    sk, bracket = slice_sin2_kernel(F1, d1[:, 0], F2, d2[:, 0])
    fallback = np.abs(bracket) <= 1e-12
    sk = np.where(fallback, sg, sk)
    diff = np.abs(sg - sk)
    return {"N": geometry.N, "pairs": int(len(diff)), "maxDiscrepancy": float(np.max(diff)),
            "fallbacks": int(fallback.sum())}


def _gaussian_offsets(N_min: int, b: float):
    # |u|, |v| <= 2, shrunk if the window of the smallest N is narrower
    scale = min(1.0, 0.99 * gaussian_window(N_min, b) / 4.0)
    grid = np.array([-2, -1, 0, 1, 2], dtype=float) * scale
    pts = (grid[:, None] + 1j * grid[None, :]).ravel()
    pts = pts[np.abs(pts) <= 2 * scale]
    u = np.repeat(pts, len(pts))
    v = np.tile(pts, len(pts))
    return u, v


def cmd_checks(cfg: RunConfig, out: Path, started: float) -> int:
    failures = []
    tyz_rows, mode_rows, cr_rows, gauss_rows = [], [], [], []
    for spec in cfg.specs():
        geometry, basis = _basis(spec, cfg)
        if spec.m == 1:
            mesh = build_mesh(geometry, cfg.mesh_edge(spec.N))
            probe = mesh
        else:
            probe = geometry.sample_uniform(np.random.default_rng(cfg.seed), 2000)
        rep = tyz_check(basis, probe)
        row = rep.summary()
        if spec.family == PROJECTIVE and spec.m == 1:
            ratio = np.array([r["ratio"] for r in rep.rows])
            exact = float(np.max(np.abs(ratio - 1 - 1 / spec.N)))
            row["exactDeviation"] = exact
            if exact > TOLERANCES["tyzExact"]:
                failures.append(f"tyz N={spec.N}: |pi Pi/N - 1 - 1/N| = {exact:.3g}")
            if rep.spread > TOLERANCES["tyzSpread"]:
                failures.append(f"tyz N={spec.N}: spread {rep.spread:.3g}")
        tyz_rows.append(row)
        mrow = mode_agreement(basis, geometry, cfg.checks.modePairs, cfg.seed)
        mode_rows.append(mrow)
        if mrow["maxDiscrepancy"] > TOLERANCES["modeAgreement"]:
            failures.append(f"mode agreement N={spec.N}: {mrow['maxDiscrepancy']:.3g}")
        if spec.m == 1:
            cr = critical_radius(basis, mesh, cfg.checks.pairBudget, seed=cfg.seed)
            cr_rows.append(cr.to_json())
    devs = [r["max_deviation"] for r in tyz_rows]
    if any(b >= a for a, b in zip(devs, devs[1:])) and sorted(cfg.N) == list(cfg.N):
        failures.append("tyz deviations are not decreasing in N")
    if cr_rows:
        first = cr_rows[0]["rHat"]
        low = min(r["rHat"] for r in cr_rows)
        if low < TOLERANCES["rHatRatio"] * first:
            failures.append(f"rHat decays: min {low:.4g} < 0.5 * {first:.4g}")
    if cfg.geometry.get("m", 1) == 1 and cfg.checks.gaussianN:
        gN = sorted(cfg.checks.gaussianN)
        u, v = _gaussian_offsets(gN[0], cfg.checks.gaussianB)
        for N in gN:
            spec = GeometrySpec.from_dict(dict(cfg.geometry, N=N))
            geometry, basis = _basis(spec, cfg)
            center = 0.1 + 0.05j if spec.family == PROJECTIVE else 0.3 + 0.4j
            g = gaussian_check(basis, center, u, v, b=cfg.checks.gaussianB, epsilon=cfg.checks.epsilon)
            gauss_rows.append(g.summary())
        if len(gauss_rows) > 1 and not gauss_rows[-1]["max_deviation"] < gauss_rows[0]["max_deviation"]:
            failures.append("Gaussian deviation does not decrease with N")
    doc = {
        "manifest": manifest("checks", cfg, started),
        "tyz": tyz_rows,
        "gaussian": gauss_rows,
        "modeAgreement": mode_rows,
        "criticalRadius": cr_rows,
        "failures": failures,
    }
    path = _write(out, "checks.json", _dump_json(doc))
    print(path)
    for f in failures:
        print("FAIL:", f, file=sys.stderr)
    return EXIT_CHECK_FAILED if failures else EXIT_OK


def cmd_mesh_export(cfg: RunConfig, out: Path, started: float) -> int:
    for spec in cfg.specs():
        geometry = make_geometry(spec)
        mesh = build_mesh(geometry, cfg.mesh_edge(spec.N))
        path = _write(out, f"mesh_N{spec.N}.txt", _with_header(manifest("mesh-export", cfg, started), mesh.to_text()))
        print(path)
    return EXIT_OK


def cmd_basis_export(cfg: RunConfig, out: Path, started: float) -> int:
    for spec in cfg.specs():
        _, basis = _basis(spec, cfg)
        path = _write(out, f"basis_N{spec.N}.csv",
                      _with_header(manifest("basis-export", cfg, started), basis.coefficients_csv()))
        print(path)
    return EXIT_OK


COMMANDS = {
    "formula": cmd_formula,
    "mc": cmd_mc,
    "checks": cmd_checks,
    "mesh-export": cmd_mesh_export,
    "basis-export": cmd_basis_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="excursion-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--workers", type=int,
                       help="worker processes (fallback: EXCURSION_LAB_WORKERS, then the config)")
        p.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        workers = args.workers
        if workers is None and os.environ.get("EXCURSION_LAB_WORKERS"):
            try:
                workers = int(os.environ["EXCURSION_LAB_WORKERS"])
            except ValueError as exc:
                raise ValidationError("EXCURSION_LAB_WORKERS must be an integer") from exc
        if workers is not None:
            cfg.workers = workers
        cfg.validate()
        return COMMANDS[args.command](cfg, Path(args.out), started)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
