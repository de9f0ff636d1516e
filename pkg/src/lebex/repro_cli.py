"""Command-line front end.

Subcommands map one-to-one onto engine operations::

    lebex eval --config cfg.json
    lebex norm --config cfg.json --format csv
    lebex tail --config cfg.json --out tail.csv --format csv
    lebex classify --config cfg.json
    lebex diagnose --config cfg.json --seed 0
    lebex support --config cfg.json --seed 0
    lebex reproduce-paper --format text

A config is JSON with ``model`` (optional), ``functional``, ``variable`` or
``variables``, ``params`` and ``seed``.  Every report carries the tolerance
policy and the evidence grade of each result.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import traceback
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from . import extension_engine as ee
from . import membership_lab as ml
from .functional_catalog import FunctionalSpec, spec_from_json
from .reproduce import CASES, ReproRecord, reproduce, thread_cap
from .space_model import AtomicModel, RandomVariable, UnboundedError, parse_number, rv_from_json

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_REPRO = 4

COMMANDS = ("eval", "norm", "tail", "classify", "diagnose", "support", "reproduce-paper")
SAMPLING = ("diagnose", "support")
FORMATS = ("json", "csv", "text")
CHECKS = ("ui", "attainment", "lebesgue", "interchange")


class ConfigError(ValueError):
    """A config that does not resolve; mapped to exit code 2."""


@dataclass
class ExperimentConfig:
    model: AtomicModel | None
    spec: FunctionalSpec | None
    variables: list
    labels: list
    params: dict = field(default_factory=dict)
    seed: int | None = None
    out: str | None = None
    raw: dict = field(default_factory=dict)

    def param(self, key: str, default):
        return self.params.get(key, default)


def _positive(params: dict, key: str) -> None:
    if key in params:
        v = params[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
            raise ConfigError(f"params.{key} must be a positive number")


def _grid(params: dict, key: str, mode: str, default):
    if key not in params:
        return default
    vals = params[key]
    if not isinstance(vals, list) or not vals:
        raise ConfigError(f"params.{key} must be a nonempty list")
    try:
        out = tuple(parse_number(v, mode) for v in vals)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"params.{key}: {exc}") from exc
    if any(v <= 0 for v in out) and key == "alphas":
        raise ConfigError("params.alphas must be positive")
    if any(v < 0 for v in out):
        raise ConfigError(f"params.{key} must be nonnegative")
    return out


def load_config(data: dict, command: str, seed: int | None = None) -> ExperimentConfig:
    """Resolve every descriptor of ``data``; raises ``ConfigError`` on the first failure."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        model = AtomicModel.from_json(data["model"]) if data.get("model") is not None else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    spec = None
    if command != "support" or "functional" in data:
        if "functional" not in data:
            raise ConfigError("config needs a functional descriptor")
        try:
            spec = spec_from_json(data["functional"], model)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"functional: {exc}") from exc
    if command == "support":
        if spec is None:
            raise ConfigError("support needs a functional descriptor")
        if model is None and getattr(spec, "model", None) is None:
            raise ConfigError("support needs a model")
    descs = data.get("variables", [data["variable"]] if "variable" in data else [])
    if command not in ("support",) and not descs:
        raise ConfigError("config needs a variable or variables")
    variables, labels = [], []
    for k, d in enumerate(descs):
        try:
            variables.append(rv_from_json(d, model))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"variable {k}: {exc}") from exc
        labels.append(str(d.get("label", f"X{k}")) if isinstance(d, dict) else f"X{k}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    for key in ("tol", "rtol", "c", "budget", "samples"):
        _positive(params, key)
    seed = seed if seed is not None else data.get("seed")
    if command in SAMPLING and seed is None:
        raise ConfigError(f"{command} samples dual densities and needs a seed (--seed or config 'seed')")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("seed must be a nonnegative integer")
    checks = params.get("checks", list(CHECKS))
    if any(c not in CHECKS + ("jst",) for c in checks):
        raise ConfigError(f"params.checks must be drawn from {CHECKS + ('jst',)}")
    return ExperimentConfig(model, spec, variables, labels, params, seed, data.get("out"), data)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def tolerance_policy(extra: dict | None = None) -> dict:
    pol = {
        "ladder_tol": ee.LADDER_TOL,
        "divergence_cap": ee.DIVERGENCE_CAP,
        "growth_run": ee.GROWTH_RUN,
        "growth_ratio": ee.GROWTH_RATIO,
        "eps_tail": ee.EPS_TAIL,
        "delta_away": ee.DELTA_AWAY,
        "plateau_tol": ee.PLATEAU_TOL,
        "probe_tol": ml.PROBE_TOL,
        "attain_tol": ml.ATTAIN_TOL,
        "duality_slack": ml.DUALITY_SLACK,
        "ui_eps": ml.UI_EPS,
        "ui_delta": ml.UI_DELTA,
    }
    pol.update(extra or {})
    return pol


def _grade(r: ee.LimitResult) -> str:
    if r.status != ee.CONVERGED:
        return ml.NO_GRADE if r.status == ee.INCONCLUSIVE else ml.NUMERICAL
    return ml.CERTIFYING if r.certifying else ml.NUMERICAL


@dataclass
class Report:
    command: str
    results: list
    policy: dict
    rows: list = field(default_factory=list)  # tidy CSV rows
    header: tuple = ()
    text: list = field(default_factory=list)
    diverged: bool = False
    failed: bool = False

    def to_json(self) -> dict:
        return {"schema_version": ml.SCHEMA_VERSION, "command": self.command, "policy": self.policy, "results": self.results}


def _limit_json(label: str, r: ee.LimitResult) -> dict:
    return {"variable": label, "grade": _grade(r), **r.to_json()}


def _eval_one(spec: FunctionalSpec, X: RandomVariable, route: str) -> ee.LimitResult:
    if X.bounded:
        try:
            v = spec.evaluate(X)
            return ee.LimitResult(v, ee.CONVERGED, route="bounded", certifying=isinstance(v, Fraction))
        except UnboundedError:
            pass
    if X.nonnegative:
        return ee.hat_eval_nonneg(spec, X, route)
    d = ee.hat_eval(spec, X, route)
    return ee.LimitResult(d.value, d.status, d.upper_first.ladder, d.upper_first.est_error, d.upper_first.route, d.upper_first.certifying, d.note)


def cmd_eval(cfg: ExperimentConfig) -> Report:
    route = cfg.param("route", "auto")
    rep = Report("eval", [], tolerance_policy({"route": route}), header=("variable", "value", "status", "route", "est_error", "grade"))
    for label, X in zip(cfg.labels, cfg.variables):
        r = _eval_one(cfg.spec, X, route)
        rep.results.append(_limit_json(label, r))
        rep.rows.append((label, ee._num(r.value), r.status, r.route, ee._num(r.est_error), _grade(r)))
        rep.text.append(f"{label}: {_fmt(r.value)} [{r.status}, {r.route}, grade {_grade(r)}]")
        rep.diverged |= r.status == ee.DIVERGING
    return rep


def cmd_norm(cfg: ExperimentConfig) -> Report:
    rtol = float(cfg.param("rtol", 1e-8))
    rep = Report("norm", [], tolerance_policy({"rtol": rtol}), header=("variable", "norm", "status", "steps", "grade"))
    for label, X in zip(cfg.labels, cfg.variables):
        g = ee.gauge_norm_result(cfg.spec, X, rtol)
        grade = ml.NUMERICAL if g.status == ee.CONVERGED else ml.NO_GRADE
        rep.results.append({"variable": label, "norm": ee._num(g.value), "status": g.status, "steps": g.steps, "note": g.note, "grade": grade})
        rep.rows.append((label, ee._num(g.value), g.status, g.steps, grade))
        rep.text.append(f"{label}: ||X|| = {_fmt(g.value)} [{g.status}, {g.steps} evaluations]")
        rep.diverged |= g.status == ee.DIVERGING
    return rep


def _tail_grids(cfg: ExperimentConfig, X) -> tuple:
    mode = X.model.mode if hasattr(X, "model") else "float"
    return _grid(cfg.params, "alphas", mode, ee.DEFAULT_ALPHAS), _grid(cfg.params, "Ns", mode, ee.DEFAULT_NS)


def cmd_tail(cfg: ExperimentConfig) -> Report:
    rep = Report("tail", [], tolerance_policy(), header=("variable", "alpha", "N", "value", "status", "est_error", "grade"))
    for label, X in zip(cfg.labels, cfg.variables):
        alphas, Ns = _tail_grids(cfg, X)
        prof = ee.tail_profile(cfg.spec, X, alphas, Ns)
        rep.results.append({"variable": label, **prof.to_json()})
        for a, n, r in prof.entries:
            rep.rows.append((label, ee._num(a), ee._num(n), ee._num(r.value), r.status, ee._num(r.est_error), _grade(r)))
            rep.diverged |= r.status == ee.DIVERGING
        for a, v in prof.verdicts.items():
            rep.text.append(f"{label}: alpha={_fmt(a)} tail {v}")
    return rep


def cmd_classify(cfg: ExperimentConfig) -> Report:
    rep = Report("classify", [], tolerance_policy(), header=("variable", "class", "certifying", "grade", "note"))
    for label, X in zip(cfg.labels, cfg.variables):
        alphas, Ns = _tail_grids(cfg, X)
        v = ml.classify(cfg.spec, X, alphas, Ns)
        grade = ml.CERTIFYING if v.certifying else (ml.NO_GRADE if v.cls == ml.VERDICT_INCONCLUSIVE else ml.NUMERICAL)
        rep.results.append({"variable": label, "grade": grade, **v.to_json()})
        rep.rows.append((label, v.cls, v.certifying, grade, v.note))
        rep.text.append(f"{label}: {v.cls} [grade {grade}] {v.note}")
    return rep


def cmd_diagnose(cfg: ExperimentConfig) -> Report:
    c = float(cfg.param("c", 1.0))
    budget = int(cfg.param("budget", 32))
    checks = cfg.param("checks", list(CHECKS))
    rep = Report("diagnose", [], tolerance_policy({"c": c, "budget": budget, "seed": cfg.seed}), header=("variable", "series", "x", "y"))
    for label, X in zip(cfg.labels, cfg.variables):
        out: dict[str, Any] = {"variable": label}
        if "ui" in checks:
            d = ml.ui_diagnostic(cfg.spec, X, c, budget, cfg.seed)
            out["ui"] = ml._jsonify(d.ui)
            out["ui_curve"] = [[ee._num(p), ee._num(v)] for p, v in d.ui_curve]
            for p, v in d.ui_curve:
                rep.rows.append((label, "ui_curve", ee._num(p), ee._num(v)))
            rep.text.append(f"{label}: uniformly integrable = {d.ui.get('uniformly_integrable')} [grade {d.ui.get('grade')}] {d.ui.get('reason', '')}")
        if "attainment" in checks:
            a = ml.attainment_check(cfg.spec, X, budget, cfg.seed).attainment
            out["attainment"] = ml._jsonify(a)
            rep.text.append(f"{label}: attained = {a.get('attained')}, gap = {_fmt(a.get('gap'))} [grade {a.get('grade')}]")
            rep.diverged |= a.get("hat_status") == ee.DIVERGING
        if "lebesgue" in checks:
            probes = ml.lebesgue_probe(cfg.spec, X).lebesgue_probes
            out["lebesgue_probes"] = ml._jsonify(probes)
            for p in probes:
                for k, v in enumerate(p["values"]):
                    rep.rows.append((label, f"probe:{p['probe']}", k, v))
                rep.text.append(f"{label}: probe {p['probe']}: pass = {p['pass']} [{p['status']}, grade {p['grade']}]")
                rep.diverged |= p["status"] == ee.DIVERGING
        if "interchange" in checks:
            ic = ml.truncation_interchange_check(cfg.spec, X)
            out["interchange"] = ic.to_json()
            rep.text.append(f"{label}: truncation interchange = {ic.ok} {ic.discrepancy}")
        rep.results.append(out)
    if "jst" in checks:
        res = ml.jst_crosscheck(cfg.spec, list(zip([cfg.spec] * len(cfg.variables), cfg.variables, cfg.labels)), c, budget, cfg.seed)
        rep.results.append({"jst": _jst_json(res)})
        for r in res["instances"]:
            for name, cond in r.conditions.items():
                rep.text.append(f"{r.label}: {name} pass = {cond['pass']} [grade {cond['grade']}]")
        rep.text.append(f"cross-check consistent = {res['consistent']}, certifying consistent = {res['certifying_consistent']}")
    return rep


def _jst_json(res: dict) -> dict:
    return {
        "schema_version": res["schema_version"],
        "consistent": res["consistent"],
        "certifying_consistent": res["certifying_consistent"],
        "matrix": res["matrix"],
        "instances": [r.to_json() for r in res["instances"]],
    }


def cmd_support(cfg: ExperimentConfig) -> Report:
    samples = int(cfg.param("samples", 32))
    model = cfg.model if cfg.model is not None else cfg.spec.model
    s = ee.maximal_support(cfg.spec, model, samples, cfg.seed)
    grade = ml.SAMPLED if s.complete else ml.NO_GRADE
    rep = Report("support", [{"grade": grade, **s.to_json()}], tolerance_policy({"samples": samples, "seed": cfg.seed}), header=("atom", "in_support", "zhat"))
    zhat = s.Zhat.float_values() if s.Zhat is not None else [0.0] * model.n
    for i in range(model.n):
        rep.rows.append((i, i in s.support, ee._num(zhat[i])))
    rep.text.append(f"support {len(s.support)}/{model.n} atoms, sensitive = {s.sensitive} [grade {grade}] {s.note}")
    return rep


def cmd_reproduce_paper(cfg: ExperimentConfig | None = None, threads: int | None = None) -> Report:
    records: list[ReproRecord] = reproduce(CASES, threads)
    rep = Report(
        "reproduce-paper",
        [r.to_json() for r in records],
        tolerance_policy({"threads": threads or thread_cap()}),
        header=("case", "location", "expected_symbolic", "expected", "computed", "abs_error", "rel_error", "tol", "pass"),
    )
    for r in records:
        j = r.to_json(runtime=False)
        rep.rows.append(tuple(j[k] if k != "pass" else r.passed for k in ("case", "location", "expected_symbolic", "expected", "computed", "abs_error", "rel_error", "tol", "pass")))
        flag = "PASS" if r.passed else "FAIL"
        rep.text.append(f"{flag} {r.case:32s} err={r.abs_error:.3g} tol={r.tol:g} ({r.runtime:.2f}s) {r.note}")
    rep.failed = not all(r.passed for r in records)
    if rep.failed:
        rep.text.append("failures: " + ", ".join(r.case for r in records if not r.passed))
    return rep


HANDLERS = {
    "eval": cmd_eval,
    "norm": cmd_norm,
    "tail": cmd_tail,
    "classify": cmd_classify,
    "diagnose": cmd_diagnose,
    "support": cmd_support,
}


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, Fraction):
        return str(x)
    try:
        f = float(x)
    except (TypeError, ValueError):
        return str(x)
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return f"{f:.12g}"


def _csv_cell(x):
    if isinstance(x, float):
        return repr(x)
    return x


def render(rep: Report, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rep.to_json(), indent=2, sort_keys=True, default=str) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(rep.header)
        for row in rep.rows:
            w.writerow([_csv_cell(x) for x in row])
        return buf.getvalue()
    pol = ", ".join(f"{k}={v}" for k, v in sorted(rep.policy.items()))
    return "\n".join([f"# {rep.command}", *rep.text, f"# policy: {pol}"]) + "\n"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--seed", type=int, default=None, help="seed for the dual-density sampler")
    common.add_argument("--strict", action="store_true", help="exit 3 when any limit diverges")
    common.add_argument("--format", choices=FORMATS, default="text")
    common.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    p = argparse.ArgumentParser(prog="lebex", description="Monotone convex functionals, their maximum Lebesgue extension and Orlicz-type membership.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def _read_config(path: str | None) -> dict:
    if path is None:
        raise ConfigError("--config is required for this command")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def run(argv: list[str] | None = None) -> tuple[int, str]:
    """Parse ``argv``, run the command and return ``(exit code, rendered report)``."""
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce-paper":
            rep = cmd_reproduce_paper()
            out_path = args.out
        else:
            cfg = load_config(_read_config(args.config), args.command, args.seed)
            rep = HANDLERS[args.command](cfg)
            out_path = args.out or cfg.out
    except ConfigError as exc:
        return EXIT_CONFIG, f"config error: {exc}\n"
    except Exception:  # anything else is a bug in the engine
        return EXIT_INTERNAL, "internal error:\n" + traceback.format_exc()
    text = render(rep, args.format)
    if out_path:
        try:
            with open(out_path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            return EXIT_CONFIG, f"config error: cannot write output: {exc}\n"
    code = EXIT_OK
    if rep.failed:
        code = EXIT_REPRO
    elif args.strict and rep.diverged:
        code = EXIT_DIVERGENCE
    return code, "" if out_path else text


def main(argv: list[str] | None = None) -> int:
    code, text = run(argv)
    stream = sys.stderr if code in (EXIT_CONFIG, EXIT_INTERNAL) else sys.stdout
    stream.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
