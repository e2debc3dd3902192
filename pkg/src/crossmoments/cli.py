"""Command-line interface: reproducible level-set moment experiments.

Subcommands
-----------
geman      classify the small-lag convergence of a 1D model, print the
           dyadic table of both integrand numerators
moments    Kac-Rice moment report (1D crossings / 2D roots / 2D length)
           plus an integrand trace CSV
simulate   Monte Carlo ensemble, CSV per replicate + aggregate JSON
validate   the cross-check matrix; exit 0 iff every check passes

Exit codes: 0 success, 1 validation failure, 2 config error,
3 inconclusive classification, 4 certified divergence.

CSV formats (stable; new columns are only ever appended):
  geman_table.csv       tau,sigma2,numerator
  integrand_trace.csv   tau,integrand   (1D)  |  r,integrand   (2D)
  ensemble.csv          replicate_id,value,delta

All machine-readable output is a pure function of (config, flags, seed):
rerunning a command reproduces files byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import kacrice, simulate, validation
from .covmodels import field_from_json, model_from_json
from .errors import ConfigError, CrossmomentsError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3
EXIT_DIVERGENT = 4

_SCHEMA = {
    "model": {"kind", "params"},
    "field": {"profiles", "domain_dim"},
    "level": None,
    "domain": {"T", "rect"},
    "quadrature": {
        "tau_floor", "panels_per_decade", "linear_panels",
        "gl_order", "rel_tol", "max_refine",
    },
    "geman": {"k_min", "k_max", "alpha_tol", "se_tol", "s_tol"},
    "mc": {
        "replicates", "resolution", "seed", "target_rel_se",
        "max_draws", "workers", "richardson",
    },
    "output": {"dir"},
}


def _check_keys(obj, allowed, path):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown config key {path}{key!r}")


def load_config(path: str) -> dict:
    """Parse and strictly validate an experiment config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path!r}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    _check_keys(cfg, set(_SCHEMA), "")
    for section, allowed in _SCHEMA.items():
        if allowed is not None and section in cfg:
            if not isinstance(cfg[section], dict):
                raise ConfigError(f"config section {section!r} must be an object")
            _check_keys(cfg[section], allowed, f"{section}.")
    if ("model" in cfg) == ("field" in cfg):
        raise ConfigError("config needs exactly one of 'model' or 'field'")
    return cfg


def _build_model(cfg):
    try:
        if "model" in cfg:
            return model_from_json(cfg["model"]), "1d"
        field = field_from_json(cfg["field"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if field.domain_dim == 2 and field.codomain_dim == 2:
        return field, "roots2d"
    if field.domain_dim == 2 and field.codomain_dim == 1:
        return field, "length2d"
    raise ConfigError(
        f"unsupported field shape: domain {field.domain_dim}, codomain {field.codomain_dim}"
    )


def _geman_config(cfg):
    return kacrice.GemanConfig(**cfg.get("geman", {}))


def _quad_config(cfg):
    return kacrice.QuadConfig(**cfg.get("quadrature", {}))


def _mc_settings(cfg, args):
    mc = dict(cfg.get("mc", {}))
    if args.seed is not None:
        mc["seed"] = args.seed
    if args.replicates is not None:
        mc["replicates"] = args.replicates
    if args.resolution is not None:
        mc["resolution"] = args.resolution
    mc.setdefault("seed", 0)
    return mc


def _out_dir(cfg, args):
    out = args.out or cfg.get("output", {}).get("dir")
    if out:
        os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) for v in row) + "\n")


def cmd_geman(cfg, args) -> int:
    model, kind = _build_model(cfg)
    if kind != "1d":
        raise ConfigError("geman requires a 1D model")
    report = kacrice.geman_classify(model, config=_geman_config(cfg))
    table = list(zip(report.lags, report.sigma2_values, report.numerator_values))
    payload = {
        "classification": report.classification,
        "sigma2_form": dataclasses.asdict(report.sigma2_fit),
        "numerator_form": dataclasses.asdict(report.numerator_fit),
        "tau2_integral_converges": report.tau2_integral_converges,
        "table": [{"tau": t, "sigma2": s, "numerator": g} for t, s, g in table],
    }
    if args.json:
        json.dump(payload, sys.stdout, sort_keys=True, indent=2, default=float)
        sys.stdout.write("\n")
    else:
        print(f"classification: {report.classification}")
        print(f"sigma2 form:    {report.sigma2_fit.classification} "
              f"(alpha={report.sigma2_fit.alpha}, se={report.sigma2_fit.alpha_se})")
        print(f"numerator form: {report.numerator_fit.classification} "
              f"(alpha={report.numerator_fit.alpha}, se={report.numerator_fit.alpha_se})")
        header = "lam2+r''(tau)"
        print(f"{'tau':>14} {'sigma2(tau)':>14} {header:>14}")
        for t, s, g in table:
            print(f"{t:14.6e} {s:14.6e} {g:14.6e}")
    out = _out_dir(cfg, args)
    if out:
        _write_json(os.path.join(out, "geman.json"), json.loads(json.dumps(payload, default=float)))
        _write_csv(
            os.path.join(out, "geman_table.csv"),
            ("tau", "sigma2", "numerator"),
            table,
        )
    return EXIT_INCONCLUSIVE if report.classification == "Inconclusive" else EXIT_OK


def cmd_moments(cfg, args) -> int:
    model, kind = _build_model(cfg)
    domain = cfg.get("domain", {})
    level = cfg.get("level", 0.0)
    mc = _mc_settings(cfg, args)
    seed = int(mc.get("seed", 0))
    if kind == "1d":
        if "T" not in domain:
            raise ConfigError("1D moments need domain.T")
        T = float(domain["T"])
        report = kacrice.second_factorial_moment_1d(
            model, float(level), T, quad=_quad_config(cfg)
        )
        trace = kacrice.integrand_trace_1d(model, float(level), T)
        trace_header = ("tau", "integrand")
    else:
        if "rect" not in domain:
            raise ConfigError("2D moments need domain.rect")
        rect = tuple(float(v) for v in domain["rect"])
        inner = kacrice.InnerMCConfig(
            target_rel_se=float(mc.get("target_rel_se", 0.01)),
            max_draws=int(mc.get("max_draws", 1_000_000)),
        )
        if kind == "roots2d":
            report, (nodes, vals) = kacrice.second_moment_2d_zero(
                model, level, rect, mc=inner, seed=seed, return_trace=True
            )
        else:
            report, (nodes, vals) = kacrice.length_second_moment_2d_to_1d(
                model, float(level), rect, mc=inner, seed=seed, return_trace=True
            )
        trace = (nodes, vals)
        trace_header = ("r", "integrand")
    payload = report.to_json_dict()
    if args.json:
        json.dump(payload, sys.stdout, sort_keys=True, indent=2)
        sys.stdout.write("\n")
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    out = _out_dir(cfg, args)
    if out:
        _write_json(os.path.join(out, "report.json"), payload)
        _write_csv(os.path.join(out, "integrand_trace.csv"), trace_header,
                   zip(trace[0], trace[1]))
    return EXIT_DIVERGENT if report.geman_class == "Diverges" else EXIT_OK


def cmd_simulate(cfg, args) -> int:
    model, kind = _build_model(cfg)
    domain = cfg.get("domain", {})
    level = cfg.get("level", 0.0)
    mc = _mc_settings(cfg, args)
    if "replicates" not in mc or "resolution" not in mc:
        raise ConfigError("simulate needs mc.replicates and mc.resolution")
    mode = "crossings" if kind == "1d" else kind
    if mode == "crossings":
        if "T" not in domain:
            raise ConfigError("1D simulation needs domain.T")
        dom = float(domain["T"])
        u = float(level)
    else:
        if "rect" not in domain:
            raise ConfigError("2D simulation needs domain.rect")
        dom = tuple(float(v) for v in domain["rect"])
        u = level if mode == "roots2d" else float(level)
    try:
        ens_cfg = simulate.EnsembleConfig(
            mode=mode,
            model=model,
            u=u,
            domain=dom,
            resolution=int(mc["resolution"]),
            replicates=int(mc["replicates"]),
            seed=int(mc.get("seed", 0)),
            richardson=bool(mc.get("richardson", True)),
            workers=mc.get("workers"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ens = simulate.run_ensemble(ens_cfg)
    print(ens.aggregate_json())
    out = _out_dir(cfg, args)
    if out:
        ens.to_csv(os.path.join(out, "ensemble.csv"))
        with open(os.path.join(out, "aggregate.json"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(ens.aggregate_json())
            fh.write("\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    results = validation.run_validation(
        name_filter=args.filter or "", tamper=args.tamper_tolerances
    )
    if not results:
        print(f"no checks match filter {args.filter!r}", file=sys.stderr)
        return EXIT_CONFIG
    width = max(len(r.name) for r in results)
    all_ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        all_ok &= r.passed
        print(f"{status}  {r.name:<{width}}  {r.seconds:7.1f}s  {r.detail}")
    print("overall:", "PASS" if all_ok else "FAIL")
    return EXIT_OK if all_ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossmoments",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("geman", True), ("moments", True), ("simulate", True), ("validate", False),
    ):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=int, default=None, help="override mc.seed")
        p.add_argument("--replicates", type=int, default=None, help="override mc.replicates")
        p.add_argument("--resolution", type=int, default=None, help="override mc.resolution")
        p.add_argument("--out", default=None, help="directory for machine-readable outputs")
        p.add_argument("--json", action="store_true", help="JSON to stdout")
        p.add_argument("--filter", default=None, help="run only checks whose name contains this")
        if name == "validate":
            p.add_argument("--tamper-tolerances", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        cfg = load_config(args.config)
        if args.command == "geman":
            return cmd_geman(cfg, args)
        if args.command == "moments":
            return cmd_moments(cfg, args)
        return cmd_simulate(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CrossmomentsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
