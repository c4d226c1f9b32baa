"""Command-line interface.

Exit codes: 0 success, 1 a reproduced claim failed, 2 invalid input or
usage, 3 numerical failure (budget, convergence, loss of hyperbolicity).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .dynamics import PerturbedEndo, TrigTerm, periodic_points, preimage_leaves, lyapunov_exponents, forward_orbit
from .entropy import (
    DEFAULT_N_LIST,
    DEFAULT_TAU_LIST,
    default_mean_phi,
    entropy_production,
    folding_entropy,
    folding_entropy_constant_degree,
)
from .errors import InvalidInputError, NumericalError
from .gibbs import (
    forward_srb,
    inverse_srb,
    max_period_within_budget,
    periodic_gibbs_approximant,
    pressure_estimate,
)
from .livshitz import DEFAULT_TOL, cohomology_verdict
from .measures import GridHistogram, integrate
from .potentials import LogAbsDet, Potential, UnstableNegLogDet, parse_potential
from .repro import CLAIMS, paper_repro
from .samplers import AtomSampler, BackwardWalkSampler, ForwardOrbitSampler, HaarSampler, HistogramSampler
from .streams import stream

EXIT_OK = 0
EXIT_CLAIM = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

BUNDLED = ("paper_cor7b", "linear")

MAP_SCHEMA = {
    "type": "object",
    "required": ["m", "matrix"],
    "additionalProperties": False,
    "properties": {
        "m": {"type": "integer", "minimum": 2},
        "matrix": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "terms": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["target", "amplitude", "frequency"],
                "additionalProperties": False,
                "properties": {
                    "target": {"type": "integer", "minimum": 0},
                    "amplitude": {"type": "number"},
                    "frequency": {"type": "array", "items": {"type": "integer"}},
                    "phase": {"type": "number"},
                },
            },
        },
        "label": {"type": "string"},
    },
}


class SpecError(InvalidInputError):
    """A map spec that does not follow the schema; ``path`` names the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class MapSpec:
    m: int
    matrix: list
    terms: list
    label: str
    _endo: PerturbedEndo | None = field(default=None, repr=False, compare=False)

    def build(self) -> PerturbedEndo:
        if self._endo is None:
            self._endo = self._build()
        return self._endo

    def _build(self) -> PerturbedEndo:
        terms = [TrigTerm(t["target"], float(t["amplitude"]), tuple(t["frequency"]), float(t.get("phase", 0.0))) for t in self.terms]
        return PerturbedEndo(self.matrix, terms, self.label)

    def to_dict(self) -> dict:
        return {"m": self.m, "matrix": self.matrix, "terms": self.terms, "label": self.label}


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def parse_map_spec(text: str) -> MapSpec:
    """Parse and validate a JSON map spec; the map itself is checked for hyperbolicity."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError("$", f"not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    validator = jsonschema.Draft7Validator(MAP_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SpecError(_path(err.absolute_path), err.message)
    m = data["m"]
    matrix = data["matrix"]
    if len(matrix) != m:
        raise SpecError("$.matrix", f"expected {m} rows, got {len(matrix)}")
    for i, row in enumerate(matrix):
        if len(row) != m:
            raise SpecError(f"$.matrix[{i}]", f"expected {m} entries, got {len(row)}")
    terms = data.get("terms", [])
    for i, t in enumerate(terms):
        if t["target"] >= m:
            raise SpecError(f"$.terms[{i}].target", f"must be < m = {m}")
        if len(t["frequency"]) != m:
            raise SpecError(f"$.terms[{i}].frequency", f"expected {m} entries")
        if not math.isfinite(t["amplitude"]):
            raise SpecError(f"$.terms[{i}].amplitude", "must be finite")
    spec = MapSpec(m, [[int(a) for a in row] for row in matrix], terms, data.get("label", ""))
    spec.build()
    return spec


def bundled_spec_text(name: str) -> str:
    return resources.files("toralfold").joinpath("specs", f"{name}.json").read_text(encoding="utf-8")


def load_spec(arg: str | None) -> MapSpec:
    """``arg`` is a path, the name of a bundled spec, or ``None`` for the perturbed example."""
    if arg is None:
        arg = "paper_cor7b"
    if arg in BUNDLED:
        return parse_map_spec(bundled_spec_text(arg))
    path = Path(arg)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read spec {arg!r}: {exc.strerror}") from exc
    return parse_map_spec(text)


# -- helpers ------------------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _flatten(prefix: str, obj, rows: list):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, json.dumps(obj) if isinstance(obj, list) else obj))


class Output:
    """Writes the report envelope to stdout or ``--out``, plus side artifacts."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out) if args.out else None
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[str] = []

    def artifact(self, name: str, text: str) -> None:
        if self.out is None:
            return
        (self.out / name).write_text(text, encoding="utf-8")
        self.artifacts.append(name)

    def emit(self, command: str, spec: MapSpec | None, result: dict, csv_rows: list | None = None) -> None:
        envelope = {
            "command": command,
            "version": __version__,
            "seed": self.args.seed,
            "workers": self.args.workers,
            "spec": spec.to_dict() if spec else None,
            "result": result,
        }
        if self.artifacts:
            envelope["artifacts"] = self.artifacts
        envelope = _jsonable(envelope)
        if self.args.format == "csv":
            text = self._csv(envelope, csv_rows)
            name = "report.csv"
        else:
            text = json.dumps(envelope, indent=2, sort_keys=False) + "\n"
            name = "report.json"
        if self.out is not None:
            (self.out / name).write_text(text, encoding="utf-8")
        sys.stdout.write(text)

    @staticmethod
    def _csv(envelope: dict, rows: list | None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if rows:
            for r in rows:
                w.writerow(r)
        else:
            flat: list = []
            _flatten("", envelope, flat)
            w.writerow(["key", "value"])
            w.writerows(flat)
        return buf.getvalue()


# -- commands ---------------------------------------------------------------------------------


def cmd_analyze(args, spec: MapSpec, out: Output):
    g = spec.build()
    mods = g.linear.eigenvalue_moduli
    result = {
        "m": g.m,
        "degree": g.degree,
        "determinant": g.linear.det,
        "eigenvalue_moduli": mods.tolist(),
        "log_eigenvalue_moduli": np.log(mods).tolist(),
        "hyperbolicity_margin": g.linear.hyperbolicity_margin,
        "spectral_gap": g.spectral_gap(),
        "perturbation_norm": g.perturbation_size() if g.terms else 0.0,
        "stable_dim": g.stable_dim,
        "unstable_dim": g.unstable_dim,
        "linear": g.is_linear,
    }
    if args.n:
        x0 = stream(args.seed, 11, 0).random((4, g.m))
        res = lyapunov_exponents(g, forward_orbit(g, x0, args.n + 64, 100))
        result["lyapunov"] = {"exponents": res.exponents.mean(axis=0).tolist(), "steps": res.steps}
    out.emit("analyze", spec, result)


def cmd_preimages(args, spec, out):
    g = spec.build()
    point = np.array(_floats(args.point)) if args.point else np.zeros(g.m)
    if point.shape != (g.m,):
        raise InvalidInputError(f"--point needs {g.m} coordinates")
    n = args.n or 1
    leaves = [leaf for leaf, _ in preimage_leaves(g, point, n)]
    back = np.array([g.iterate(leaf, n) for leaf in leaves])
    from .torus import torus_distance

    err = float(np.max(torus_distance(back, point)))
    out.artifact("preimages.txt", "\n".join(" ".join(f"{c:.17g}" for c in p) for p in leaves) + "\n")
    out.emit("preimages", spec, {"point": point, "depth": n, "count": len(leaves), "round_trip_error": err, "leaves": leaves[:64]})


def cmd_periodic(args, spec, out):
    g = spec.build()
    n = args.n or 1
    pts = periodic_points(g, n)
    from .torus import torus_distance

    err = float(np.max(torus_distance(g.iterate(pts, n), pts)))
    out.artifact("periodic.txt", "\n".join(" ".join(f"{c:.17g}" for c in p) for p in pts) + "\n")
    count = abs(int(g.linear.power_minus_identity(n).det))
    out.emit("periodic", spec, {"period": n, "count": len(pts), "det_count": count, "round_trip_error": err, "points": pts[:64]})


def _potential(args) -> Potential:
    return parse_potential(args.potential)


def cmd_gibbs(args, spec, out):
    g = spec.build()
    phi = _potential(args)
    n = args.n or max_period_within_budget(g, 12)
    mu = periodic_gibbs_approximant(g, phi, n)
    result = {
        "period": n,
        "atoms": len(mu),
        "potential": phi.to_dict(),
        "pressure": mu.log_partition / n,
        "integral_phi": integrate(mu, phi, g),
        "integral_log_det": integrate(mu, LogAbsDet(), g),
        "integral_cos_2pi_x1": integrate(mu, lambda p: np.cos(2 * np.pi * p[..., 0])),
        "max_weight": float(np.max(mu.weights)),
        "min_weight": float(np.min(mu.weights)),
    }
    out.artifact("atoms.txt", "\n".join(f"{p[0]:.17g} {p[1]:.17g} {w:.17g}" for p, w in zip(mu.points, mu.weights)) + "\n")
    out.emit("gibbs", spec, result)


def cmd_pressure(args, spec, out):
    g = spec.build()
    phi = _potential(args)
    n = args.n or 8
    out.emit("pressure", spec, {"period": n, "potential": phi.to_dict(), "pressure": pressure_estimate(g, phi, n)})


def _histogram_result(g, h: GridHistogram, out: Output, name: str) -> dict:
    out.artifact(f"{name}.txt", h.to_text())
    return {
        "resolution": h.resolution,
        "deposits": h.total,
        "l1_to_uniform": h.l1_to_uniform(),
        "integral_log_det": integrate(h, LogAbsDet(), g),
    }


def cmd_srb(args, spec, out):
    g = spec.build()
    n = args.n or 1000
    h = forward_srb(g, 100, n, args.samples or 10_000, args.grid, args.seed, args.workers)
    result = _histogram_result(g, h, out, "srb_histogram")
    result.update({"n_transient": 100, "n_average": n, "samples": args.samples or 10_000})
    out.emit("srb", spec, result)


def cmd_inverse_srb(args, spec, out):
    g = spec.build()
    n = args.n or 200
    h = inverse_srb(g, n, args.samples or 10_000, args.grid, args.seed, args.workers)
    result = _histogram_result(g, h, out, "inverse_srb_histogram")
    result.update({"n_walk": n, "samples": args.samples or 10_000})
    out.emit("inverse-srb", spec, result)


def _sampler_for(args, g, phi, kind: str):
    if kind == "atoms":
        n = max_period_within_budget(g, 12)
        return AtomSampler(periodic_gibbs_approximant(g, phi, n))
    if kind == "forward":
        return ForwardOrbitSampler(100, 1)
    if kind == "backward":
        return BackwardWalkSampler(args.walk_length)
    if kind == "haar":
        return HaarSampler()
    if kind.startswith("histogram:"):
        text = Path(kind.split(":", 1)[1]).read_text(encoding="utf-8")
        return HistogramSampler(GridHistogram.from_text(text, 10**9))
    raise InvalidInputError(f"unknown sampler {kind!r}")


def cmd_folding(args, spec, out):
    g = spec.build()
    phi = _potential(args)
    n_list = [args.n] if args.n else list(DEFAULT_N_LIST)
    taus = _floats(args.tau) if args.tau else list(DEFAULT_TAU_LIST)
    sampler = _sampler_for(args, g, phi, args.sampler)
    table = folding_entropy(g, phi, sampler, n_list, taus, args.samples or 500, args.seed, None, args.workers)
    rows = [["n", "tau", "value", "stderr", "excluded_rate"]] + [list(r) for r in table.rows()]
    out.emit("folding", spec, table.to_dict(), rows)


def cmd_production(args, spec, out):
    g = spec.build()
    measure = args.measure
    samples = args.samples or 10_000
    if measure == "inverse-srb":
        F = folding_entropy_constant_degree(g)
        rep = entropy_production(F, g, BackwardWalkSampler(args.walk_length), samples, args.seed, args.workers)
    elif measure == "haar":
        F = folding_entropy_constant_degree(g)
        rep = entropy_production(F, g, HaarSampler(), samples, args.seed, args.workers)
    elif measure in ("srb", "gibbs"):
        phi = UnstableNegLogDet() if measure == "srb" else _potential(args)
        n = args.n or 10
        taus = _floats(args.tau) if args.tau else [0.05]
        mean_phi, _ = default_mean_phi(g, phi)
        if measure == "srb":
            fold_sampler = ForwardOrbitSampler(100, 1)
            det_sampler = ForwardOrbitSampler(100, 1000)
        else:
            fold_sampler = det_sampler = _sampler_for(args, g, phi, "atoms")
        table = folding_entropy(g, phi, fold_sampler, [n], taus, args.folding_samples, args.seed, mean_phi, args.workers)
        rep = entropy_production(table, g, det_sampler, samples, args.seed, args.workers, headline=(n, taus[-1]))
    else:
        raise InvalidInputError(f"unknown measure {measure!r}")
    result = rep.to_dict()
    result["measure"] = measure
    out.artifact("production.csv", rep.to_csv())
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    out.emit("production", spec, result, rows)


def cmd_livshitz(args, spec, out):
    g = spec.build()
    verdict = cohomology_verdict(g, args.tol, args.n or 4, args.form)
    out.emit("livshitz", spec, verdict.to_dict())


def cmd_paper_repro(args, spec, out):
    only = args.claims.split(",") if args.claims else None
    if only:
        unknown = [c for c in only if c not in CLAIMS]
        if unknown:
            raise InvalidInputError(f"unknown claim(s): {', '.join(unknown)}")
    report = paper_repro(args.seed, args.workers, args.quick, only)
    for c in report.claims:
        sys.stderr.write(c.line() + "\n")
    rows = [["claim", "passed", "runtime_s", "budget_s"]] + [[c.name, c.ok, f"{c.runtime:.3f}", c.budget] for c in report.claims]
    out.emit("paper-repro", None, report.to_dict(), rows)
    if not report.passed:
        sys.stderr.write(f"failing claim(s): {', '.join(report.failing)}\n")
        return EXIT_CLAIM
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "preimages": cmd_preimages,
    "periodic": cmd_periodic,
    "gibbs": cmd_gibbs,
    "pressure": cmd_pressure,
    "srb": cmd_srb,
    "inverse-srb": cmd_inverse_srb,
    "folding": cmd_folding,
    "production": cmd_production,
    "livshitz": cmd_livshitz,
    "paper-repro": cmd_paper_repro,
}


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="map spec JSON file, or a bundled name: " + ", ".join(BUNDLED))
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--out", help="directory for report.json/report.csv and artifacts")
    common.add_argument("--n", type=_positive, help="depth, period or length (command specific)")
    common.add_argument("--tau", help="comma-separated tau values")
    common.add_argument("--samples", type=_positive, help="number of independent samples")
    common.add_argument("--grid", type=_positive, default=512, help="histogram bins per axis")
    common.add_argument("--workers", type=_positive, default=1)
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = argparse.ArgumentParser(prog="toralfold", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "preimages":
            p.add_argument("--point", help="comma-separated coordinates (default origin)")
        if name in ("gibbs", "pressure", "folding", "production"):
            p.add_argument("--potential", default="zero", help="zero | logdet | stable | unstable | cos:<amp> | const:<c>")
        if name in ("folding", "production"):
            p.add_argument("--sampler", default="atoms", help="atoms | forward | backward | haar | histogram:<file>")
            p.add_argument("--walk-length", type=_positive, default=200)
        if name == "production":
            p.add_argument("--measure", default="inverse-srb", choices=("inverse-srb", "srb", "haar", "gibbs"))
            p.add_argument("--folding-samples", type=_positive, default=512)
        if name == "livshitz":
            p.add_argument("--tol", type=float, default=DEFAULT_TOL)
            p.add_argument("--form", choices=("log", "abs"), default="log")
        if name == "paper-repro":
            p.add_argument("--quick", action="store_true", help="reduced sample sizes")
            p.add_argument("--claims", help="comma-separated subset: " + ", ".join(CLAIMS))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = None if args.command == "paper-repro" else load_spec(args.spec)
        out = Output(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default", RuntimeWarning)
            code = COMMANDS[args.command](args, spec, out)
        return code or EXIT_OK
    except InvalidInputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except NumericalError as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
