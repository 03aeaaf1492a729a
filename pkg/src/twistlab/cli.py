"""Experiment driver: build, sweep, verify, brouwer, plot.

Configuration is a single JSON document; every flag overrides the matching
key one-to-one.  Outputs land in --out: CSV tables (byte-identical across
reruns with the same config and seed), hand-rolled static SVG plots
(800x600 viewport), structured JSON verdicts, and a manifest listing every
emitted file with its SHA-256 digest, written last.

Exit codes: 0 success, 2 config error, 3 check failure, 4 ambiguous
geometry.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import brouwer, construction, dynamics, genfun, verify
from .construction import CounterexampleSpec
from .genfun import ImplicitSolveConfig, Rect
from .geom import Polyline

TOOL_VERSION = "0.1.0"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3
EXIT_AMBIGUOUS = 4

DEFAULT_CONFIG = {
    "k0": 4,
    "k_max": 24,
    "tol": 1e-12,
    "grid_step": 0.005,
    "window": [-0.5, 0.5, 0.0001, 1.0],
    "eps_list": None,
    "map": "counterexample",
    "seed": 0,
    "out": "out",
}


class ConfigError(ValueError):
    pass


def load_config(args) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            cfg.update(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    for key in ("k0", "kmax", "grid_step", "tol", "eps_list", "map", "seed", "out"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg["k_max" if key == "kmax" else key] = val
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["tol"] <= 0 or cfg["grid_step"] <= 0:
        raise ConfigError("tolerances and grid steps must be positive")
    if cfg["k_max"] < cfg["k0"] + 2:
        raise ConfigError("k_max must be at least k0 + 2")
    if cfg["eps_list"] is not None:
        eps = list(cfg["eps_list"])
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_list must be strictly increasing")


class Manifest:
    """Per-run inventory: config echo, checks, file digests; written last."""

    def __init__(self, out_dir: Path, cfg: dict, command: str):
        self.out_dir = out_dir
        self.data = {
            "tool_version": TOOL_VERSION,
            "command": command,
            "config": cfg,
            "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "checks": [],
            "files": [],
        }

    def add_check(self, name: str, passed: bool, detail: str = ""):
        self.data["checks"].append({"name": name, "passed": bool(passed),
                                    "detail": detail})

    def add_file(self, path: Path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.data["files"].append({
            "path": path.name,
            "sha256": digest,
            "bytes": path.stat().st_size,
        })

    def write(self):
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, default=str) + "\n")

    @property
    def all_passed(self) -> bool:
        return all(c["passed"] for c in self.data["checks"])


def _write_csv(path: Path, header, rows):
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _svg_scatter(path: Path, points, xlabel: str, ylabel: str, title: str,
                 logx: bool = False):
    """Static 800x600 scatter; points are (x, y, flag) with flag coloring."""
    width, height = 800, 600
    margin = 70
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2:g}" y="30" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{width/2:g}" y="{height-15:g}" text-anchor="middle" font-size="13">{xlabel}</text>',
        f'<text x="20" y="{height/2:g}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 20 {height/2:g})">{ylabel}</text>',
        f'<rect x="{margin}" y="{margin}" width="{width-2*margin}" '
        f'height="{height-2*margin}" fill="none" stroke="black"/>',
    ]
    if points:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        if logx:
            xs = [math.log10(x) if x > 0 else math.nan for x in xs]
        finite = [(x, y, f) for (x, y, f), xv in zip(points, xs)
                  if math.isfinite(xv)]
        xs = [x for x in xs if math.isfinite(x)]
        if xs:
            x_lo, x_hi = min(xs), max(xs)
            y_lo, y_hi = min(ys), max(ys)
            x_span = (x_hi - x_lo) or 1.0
            y_span = (y_hi - y_lo) or 1.0

            def to_px(x, y):
                if logx:
                    x = math.log10(x) if x > 0 else x_lo
                px = margin + (x - x_lo) / x_span * (width - 2 * margin)
                py = height - margin - (y - y_lo) / y_span * (height - 2 * margin)
                return px, py

            for x, y, flag in points:
                px, py = to_px(x, y)
                color = {"fixed": "#c0392b", "empty": "#2980b9"}.get(flag, "#7f8c8d")
                parts.append(
                    f'<circle cx="{px:.2f}" cy="{py:.2f}" r="4" fill="{color}"/>'
                )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def _polyline_json(result) -> dict:
    def encode(poly):
        if poly is None:
            return None
        return {
            "vertices": [[float(x), float(y)] for x, y in poly.vertices],
            "closed": bool(poly.closed),
            "start_ray": list(poly.start_ray) if poly.start_ray else None,
            "end_ray": list(poly.end_ray) if poly.end_ray else None,
        }

    return {
        "status": result.status,
        "line": encode(result.line),
        "events": [asdict(e) for e in result.events],
        "legs": result.legs,
        "failure": (None if result.failure is None else
                    {"kind": result.failure.kind, "detail": result.failure.detail}),
    }


# --- commands -----------------------------------------------------------------


def cmd_build(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, "build")
    spec = CounterexampleSpec(k0=int(cfg["k0"]), k_max=int(cfg["k_max"]))
    solve_cfg = ImplicitSolveConfig(tolerance=float(cfg["tol"]))
    try:
        construction.build_annulus_map(spec, solve_cfg)
        manifest.add_check("build", True)
    except (construction.ContractionFailure, construction.GluingMismatch) as exc:
        manifest.add_check("build", False, f"{exc}; raise k0 and retry")
        manifest.write()
        print(f"build failed: {exc}", file=sys.stderr)
        return EXIT_CHECK

    suite = verify.construction_suite(spec)
    for name, passed, detail in suite:
        manifest.add_check(name, passed, detail)

    rows = []
    for k in range(spec.k0, spec.k0 + 9):
        eps, point = construction.predicted_fixed_data(spec, k)
        rows.append((k, eps, point[0], point[1]))
    card = out_dir / "map_card.csv"
    _write_csv(card, ["k", "epsilon_k", "fixed_x", "fixed_y"], rows)
    manifest.add_file(card)
    # strictly decreasing until the sizes underflow to exactly 0.0
    decreasing = all(a[1] > b[1] or a[1] == b[1] == 0.0
                     for a, b in zip(rows, rows[1:]))
    decreasing = decreasing and rows[0][1] > 0.0
    manifest.add_check("epsilon_decreasing_to_underflow", decreasing)
    manifest.write()
    print(f"map card: {card}")
    return EXIT_OK if manifest.all_passed else EXIT_CHECK


def _sweep_grid(cfg: dict, spec: CounterexampleSpec):
    if cfg["eps_list"]:
        return [float(e) for e in cfg["eps_list"]]
    eps = [construction.predicted_fixed_data(spec, k)[0]
           for k in range(spec.k0, spec.k0 + 5)]
    grid = sorted(set(eps) | {math.sqrt(a * b) for a, b in zip(eps, eps[1:]) if a > 0 and b > 0})
    return grid


def cmd_sweep(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, "sweep")
    spec = CounterexampleSpec(k0=int(cfg["k0"]), k_max=int(cfg["k_max"]))
    solve_cfg = ImplicitSolveConfig(tolerance=float(cfg["tol"]))
    name = cfg["map"]
    if name == "counterexample":
        lift = construction.build_annulus_map(spec, solve_cfg)
    else:
        catalog = dynamics.reference_maps(solve_cfg)
        if name not in catalog:
            raise ConfigError(f"unknown map {name!r}")
        lift = catalog[name]

    grid = _sweep_grid(cfg, spec)
    tol = float(cfg["tol"])
    result = dynamics.SweepResult(epsilon_grid=grid)
    rows = []
    for eps in grid:
        f_eps = dynamics.translate_eps(lift, eps)
        if name == "counterexample":
            windows = []
            for k in range(spec.k0, spec.k0 + 5):
                eps_k, point = construction.predicted_fixed_data(spec, k)
                half = max(construction.inner_radius(k) * 2.0 ** spec.k0 / 2.0, 1e-6)
                windows.append(Rect(point[0] - half, point[0] + half,
                                    max(point[1] - half, 1e-4),
                                    min(point[1] + half, 1.0)))
            records = []
            for w in windows:
                step = w.width / 41.0
                records.extend(dynamics.find_fixed_points(
                    f_eps, w, step, tol=max(tol, 1e-12), epsilon=eps))
        else:
            w = Rect(*cfg["window"])
            records = dynamics.find_fixed_points(
                f_eps, w, float(cfg["grid_step"]), tol=max(tol, 1e-12), epsilon=eps)
        if records:
            result.records.extend(records)
            for r in records:
                rows.append((eps, "fixed", r.location[0], r.location[1],
                             r.residual, r.index, None, float(cfg["grid_step"])))
        else:
            cert = dynamics.min_displacement(
                f_eps, Rect(*cfg["window"]), float(cfg["grid_step"]), epsilon=eps)
            result.certificates.append(cert)
            rows.append((eps, "empty", None, None, None, None,
                         cert.min_displacement, cert.grid_step))
    csv_path = out_dir / f"sweep_{name}.csv"
    _write_csv(csv_path, ["epsilon", "status", "x", "y", "residual", "index",
                          "min_displacement", "grid_step"], rows)
    manifest.add_file(csv_path)

    points = [(r[0], r[3], r[1]) for r in rows if r[1] == "fixed"]
    points += [(r[0], 0.0, r[1]) for r in rows if r[1] == "empty"]
    svg_path = out_dir / f"sweep_{name}.svg"
    _svg_scatter(svg_path, points, "epsilon", "fixed-point y",
                 f"fixed-point locus: {name} (emptiness certificates at y=0 "
                 "are grid evidence, not proof)", logx=True)
    manifest.add_file(svg_path)
    manifest.add_check("sweep_covered", result.covered())
    manifest.write()
    print(f"sweep CSV: {csv_path}")
    return EXIT_OK if manifest.all_passed else EXIT_CHECK


def cmd_verify(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, "verify")
    spec = CounterexampleSpec(k0=int(cfg["k0"]), k_max=int(cfg["k_max"]))
    report = verify.run_all(spec, seed=int(cfg["seed"]))
    for name, passed, detail in report:
        manifest.add_check(name, passed, detail)
        status = "pass" if passed else "FAIL"
        print(f"[{status}] {name}" + (f": {detail}" if detail and not passed else ""))
    json_path = out_dir / "verify_report.json"
    json_path.write_text(json.dumps(
        [{"name": n, "passed": p, "detail": d} for n, p, d in report],
        indent=2) + "\n")
    manifest.add_file(json_path)
    manifest.write()
    return EXIT_OK if manifest.all_passed else EXIT_CHECK


def cmd_brouwer(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, "brouwer")
    name = cfg["map"]
    try:
        fixture = brouwer_fixture(name)
    except KeyError:
        raise ConfigError(f"unknown brouwer map {name!r}") from None
    h, AB, BC, B, window = fixture
    params = brouwer.ConstructionParams()
    verdict = "verified"
    try:
        result = brouwer.construct_half_line(h, AB, BC, np.asarray(B), params)
    except (brouwer.TangencyAmbiguous, brouwer.SamplingInconclusive) as exc:
        (out_dir / f"brouwer_{name}.json").write_text(json.dumps(
            {"status": "ambiguous", "detail": str(exc)}, indent=2) + "\n")
        manifest.add_file(out_dir / f"brouwer_{name}.json")
        manifest.add_check("construction", False, str(exc))
        manifest.write()
        return EXIT_AMBIGUOUS

    payload = _polyline_json(result)
    if result.line is not None:
        per = brouwer.detect_eventual_periodicity(result.line, result.events)
        payload["periodicity"] = None if per is None else {
            "N": per[0],
            "W0": None if per[1] is None else
            [[float(x), float(y)] for x, y in per[1].vertices],
        }
    if result.ok and result.line is not None:
        line = result.line
        if line.start_ray is None:
            line = Polyline(line.vertices, end_ray=line.end_ray,
                            start_ray=(0.0, -1.0))
        reports = []
        for res in (1e-2, 5e-3):
            reports.append(brouwer.verify_brouwer_line(h, line, window, res))
        payload["verification"] = [
            {"resolution": r.resolution, "ok": r.ok, "separation": r.separation}
            for r in reports
        ]
        verified = all(r.ok for r in reports)
        manifest.add_check("brouwer_line_verified", verified)
        if not verified:
            verdict = "failed-honestly"
    else:
        verdict = "failed-honestly"
        manifest.add_check("construction", False,
                           result.failure.detail if result.failure else "")
    payload["verdict"] = verdict
    json_path = out_dir / f"brouwer_{name}.json"
    json_path.write_text(json.dumps(payload, indent=2) + "\n")
    manifest.add_file(json_path)
    manifest.write()
    print(f"brouwer verdict for {name}: {verdict}")
    return EXIT_OK if verdict == "verified" else EXIT_CHECK


def cmd_plot(cfg: dict, csv_file: str) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    path = Path(csv_file)
    if not path.exists():
        raise ConfigError(f"CSV file {path} not found")
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    idx = {name: i for i, name in enumerate(header)}
    points = []
    for line in lines[1:]:
        cells = line.split(",")
        eps = float(cells[idx["epsilon"]])
        status = cells[idx["status"]]
        y = float(cells[idx["y"]]) if cells[idx["y"]] else 0.0
        points.append((eps, y, status))
    svg_path = out_dir / (path.stem + ".svg")
    _svg_scatter(svg_path, points, "epsilon", "fixed-point y",
                 f"fixed-point locus: {path.stem}", logx=True)
    print(f"plot: {svg_path}")
    return EXIT_OK


# --- brouwer fixtures ----------------------------------------------------------


def brouwer_fixture(name: str):
    """Named (h, AB, BC, B, window) setups for the brouwer command."""
    if name == "translation":
        h = brouwer.PlaneMap(
            forward=lambda p: (p[0] + 1.0, p[1]),
            inverse=lambda q: (q[0] - 1.0, q[1]),
            periodic=True,
            twist_y0=0.0,
            name="translation",
        )
        A = np.array([-1.0, 0.0])
        B = np.array([0.0, 0.0])
        C = np.array([1.0, 0.0])
        AB = Polyline(np.array([A, B]))
        BC = Polyline(np.array([B, C]))
        return h, AB, BC, B, (-4.0, 4.0, -4.0, 6.0)
    if name == "compactified-shear":
        lift = dynamics.reference_maps()["shear"]
        h = brouwer.compactify(lift)
        B = np.array([0.3, 0.5])
        v = B[1]
        s = brouwer.plane_to_strip(0.0, v)[1]
        A = np.array([B[0] - s, v])
        C = np.array([B[0] + s, v])
        AB = Polyline(np.array([A, B]))
        BC = Polyline(np.array([B, C]))
        return h, AB, BC, B, (-4.0, 5.0, -6.0, 8.0)
    if name == "periodic-hedgehog":
        h = hedgehog_map()
        A = np.array([0.5, -1.2])
        B = h.fwd(A)
        AB = Polyline(np.array([A, B]))
        BC = brouwer.sample_image(h.fwd, AB, 0.01)
        return h, AB, BC, B, (-4.0, 4.0, -3.0, 3.0)
    if name == "tangency":
        h = brouwer.PlaneMap(
            forward=lambda p: (p[0] + 1.0, p[1]),
            inverse=lambda q: (q[0] - 1.0, q[1]),
            periodic=True,
            twist_y0=0.0,
            name="translation",
        )
        # the arc grazes its own image at distance ~5e-10: inconclusive
        AB = Polyline(np.array([
            [0.0, 0.0], [0.2, 0.1], [1.2, 0.1 + 5e-10], [1.0, 0.0],
        ]))
        B = np.array([1.0, 0.0])
        BC = brouwer.sample_image(h.fwd, AB, 0.05)
        return h, AB, BC, B, (-4.0, 4.0, -4.0, 4.0)
    raise KeyError(name)


def hedgehog_map() -> brouwer.PlaneMap:
    """Periodic fixed-point-free plane map with two vertical crossings.

    h(x, y) = (x + s(y), y + v(y)) with s vanishing exactly at y = +-1 and
    v > 0 everywhere; the crossing arcs on every vertical recur, so the
    half-line construction deviates at each integer vertical and the
    deviation log is periodic with period 1.
    """

    def s(y):
        return 0.5 * (y * y - 1.0) / (1.0 + y * y) ** 2

    def v(y):
        return 0.05 / (1.0 + y * y)

    def forward(p):
        x, y = p
        return (x + s(y), y + v(y))

    def inverse(q):
        X, Y = q
        y = Y
        for _ in range(100):
            y_new = Y - v(y)
            if abs(y_new - y) < 1e-15:
                y = y_new
                break
            y = y_new
        return (X - s(y), y)

    return brouwer.PlaneMap(forward=forward, inverse=inverse, periodic=True,
                            twist_y0=1.5, name="hedgehog")


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twistlab",
        description="Area-preserving annulus maps from generating functions: "
                    "fixed-point persistence experiments and Brouwer-line "
                    "primitives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("build", "sweep", "verify", "brouwer", "plot"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--k0", type=int, default=None)
        p.add_argument("--kmax", type=int, default=None)
        p.add_argument("--grid-step", dest="grid_step", type=float, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--eps-list", dest="eps_list", type=float, nargs="+",
                       default=None)
        p.add_argument("--map", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        if name == "plot":
            p.add_argument("csv", type=str)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "build":
            return cmd_build(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "brouwer":
            return cmd_brouwer(cfg)
        if args.command == "plot":
            return cmd_plot(cfg, args.csv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (brouwer.TangencyAmbiguous, brouwer.SamplingInconclusive) as exc:
        print(f"ambiguous geometry: {exc}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    except (construction.ContractionFailure, construction.GluingMismatch) as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
