"""Command-line interface: ``covine {fit,predict,simulate,density,sim-study}``.

Exit codes: 0 success, 2 input validation, 3 numerical failure. Errors are
reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import families as fam
from .select import SelectionConfig
from .simstudy import ScenarioConfig, run_study
from .vine import VineModel, density, fit_sequential, simulate, validate_structure

log = logging.getLogger("covine")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
_MISSING = {"", "na", "nan", "null", "none"}
_U_COL = re.compile(r"^u(\d+)$")


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# CSV I/O


def read_csv(path, columns=None) -> dict[str, np.ndarray]:
    """Read named numeric columns; rows with missing values in them are rejected."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names")
    for i, r in enumerate(body, start=1):
        if len(r) != len(header):
            raise InputError(f"{path}: row {i} has {len(r)} fields, expected {len(header)}")
    used = header if columns is None else list(columns)
    for c in used:
        if c not in header:
            raise InputError(f"{path}: unknown column {c!r}")
    out, bad = {}, set()
    for c in used:
        j = header.index(c)
        vals = np.empty(len(body))
        for i, r in enumerate(body):
            s = r[j].strip()
            if s.lower() in _MISSING:
                bad.add(i + 1)
                vals[i] = np.nan
                continue
            try:
                vals[i] = float(s)
            except ValueError as exc:
                raise InputError(f"{path}: row {i + 1}, column {c!r}: not a number: {s!r}") from exc
        out[c] = vals
    if bad:
        raise InputError(f"{path}: missing values in rows {sorted(bad)}")
    return out


def write_csv(path, columns: dict):
    names = list(columns)
    n = len(next(iter(columns.values()))) if names else 0
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="", encoding="utf-8")
    try:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(names)
        for i in range(n):
            wr.writerow([format(float(columns[c][i]), ".17g") for c in names])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _response_columns(header) -> list[str]:
    cols = sorted((c for c in header if _U_COL.match(c)), key=lambda c: int(_U_COL.match(c).group(1)))
    expected = [f"u{j}" for j in range(1, len(cols) + 1)]
    if len(cols) < 2 or cols != expected:
        raise InputError("data must have response columns u1..ud with d >= 2")
    return cols


def _copula_scale(table, ucols, ranks: bool) -> np.ndarray:
    u = np.column_stack([table[c] for c in ucols])
    if ranks:
        return np.column_stack([stats.rankdata(u[:, j]) / (u.shape[0] + 1) for j in range(u.shape[1])])
    if np.any((u <= 0) | (u >= 1)):
        raise InputError("response values must lie in (0, 1); pass --ranks for raw data")
    return u


def _split(s):
    return [x.strip() for x in s.split(",") if x.strip()] if s else []


def _header(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [h.strip() for h in next(csv.reader(fh), [])]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _load_model(path) -> VineModel:
    try:
        return VineModel.load(path)
    except OSError as exc:
        raise InputError(f"cannot read model {path}: {exc.strerror}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"malformed model file {path}: {exc}") from exc


def _model_covariates(model: VineModel) -> list[str]:
    names = []
    for em in model.edges:
        for c in em.fit.spec.covariates:
            if c not in names:
                names.append(c)
    return names


def _read_covariates(path, model):
    need = _model_covariates(model)
    if path is None:
        if need:
            raise InputError(f"model needs covariates {need}; pass a covariates CSV")
        return {}
    return read_csv(path, need) if need else {}


# ---------------------------------------------------------------------------
# commands


def _selection_config(args) -> SelectionConfig:
    kw = dict(alpha=args.alpha, criterion=args.criterion, threads=args.threads,
              structure_reuse={"per-family": "per_family", "first-only": "first_family_only"}[args.structure_reuse])
    if args.families:
        kw["candidate_families"] = tuple(fam.parse_family(f).id for f in _split(args.families))
    return SelectionConfig(**kw)


def cmd_fit(args):
    header = _header(args.data)
    ucols = _response_columns(header)
    others = [c for c in header if c not in ucols]
    linear = _split(args.linear)
    smooth = _split(args.smooth) if args.smooth is not None else [c for c in others if c not in linear]
    for c in linear + smooth:
        if c not in others:
            raise InputError(f"unknown covariate {c!r}")
    table = read_csv(args.data, ucols + smooth + linear)
    u = _copula_scale(table, ucols, args.ranks)
    w = {c: table[c] for c in smooth + linear}
    if args.structure:
        try:
            with open(args.structure, encoding="utf-8") as fh:
                structure = validate_structure(json.load(fh))
        except OSError as exc:
            raise InputError(f"cannot read structure {args.structure}: {exc.strerror}") from exc
    else:
        structure = None
    model = fit_sequential(u, w, structure, _selection_config(args), candidates=smooth,
                           linear_candidates=linear, truncate=args.truncate, threads=args.threads)
    model.save(args.out)
    summary = {
        "model": str(args.out),
        "edges": [
            {"edge": em.edge.label, "tree": em.edge.tree, "family": em.family.id,
             "terms": em.fit.spec.term_names, "edf": em.fit.edf_total, "aic": em.fit.aic,
             "bic": em.fit.bic, "converged": em.fit.converged}
            for em in model.edges
        ],
    }
    report = Path(args.report) if args.report else Path(str(args.out) + ".report.json")
    with open(report, "w", encoding="utf-8") as fh:
        json.dump({**summary, "traces": model.traces}, fh, indent=1, default=_json_default)
    json.dump(summary, sys.stdout, indent=1, default=_json_default)
    sys.stdout.write("\n")


def cmd_predict(args):
    model = _load_model(args.model)
    w = _read_covariates(args.covariates, model)
    n = len(next(iter(w.values()))) if w else (args.n or 1)
    cols = {}
    for em in model.edges:
        tau = em.tau(w, n)
        cols[em.edge.label] = tau
        if args.bands:
            if em.family.family == "indep":
                lo = hi = tau
            else:
                eta, se = em.fit.predict_eta_se(w)
                eta, se = np.broadcast_to(eta, (n,)), np.broadcast_to(se, (n,))
                lo = fam.clip_tau(em.family, np.tanh((eta - 1.959963984540054 * se) / 2))
                hi = fam.clip_tau(em.family, np.tanh((eta + 1.959963984540054 * se) / 2))
            cols[em.edge.label + " lower"] = lo
            cols[em.edge.label + " upper"] = hi
    write_csv(args.out, cols)


def cmd_simulate(args):
    model = _load_model(args.model)
    w = _read_covariates(args.covariates, model)
    if w and args.n is not None and args.n != len(next(iter(w.values()))):
        raise InputError("--n must match the number of covariate rows")
    if not w and args.n is None:
        raise InputError("give --n or a covariates CSV")
    u = simulate(model, w, args.n, seed=args.seed)
    write_csv(args.out, {f"u{j + 1}": u[:, j] for j in range(u.shape[1])})


def cmd_density(args):
    model = _load_model(args.model)
    header = _header(args.data)
    ucols = _response_columns(header)
    if len(ucols) != model.structure.d:
        raise InputError(f"model has d={model.structure.d} but data has {len(ucols)} response columns")
    need = _model_covariates(model)
    table = read_csv(args.data, ucols + [c for c in need if c not in ucols])
    u = _copula_scale(table, ucols, args.ranks)
    _, logdens = density(model, u, {c: table[c] for c in need})
    write_csv(args.out, {"logdensity": logdens})


def cmd_sim_study(args):
    cfg = ScenarioConfig(n=args.n, reps=args.reps, seed=args.seed, estimator=args.estimator,
                         criterion=args.criterion, trees=args.trees, alpha=args.alpha,
                         structure_reuse={"per-family": "per_family",
                                          "first-only": "first_family_only"}[args.structure_reuse],
                         threads=args.threads,
                         **({"selection_families": tuple(_split(args.families))} if args.families else {}))
    report = run_study(cfg, out_dir=args.out, cache_dir=args.cache)
    json.dump(report.summary(), sys.stdout, indent=1, default=_json_default)
    sys.stdout.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    return str(o)


# ---------------------------------------------------------------------------
# argument parsing


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="random seed")
    g.add_argument("--threads", type=int, default=1, help="worker threads (edges within a tree, replicates)")
    g.add_argument("--criterion", choices=("aic", "bic"), default="aic", help="family selection criterion")
    g.add_argument("--alpha", type=float, default=0.05, help="significance level for covariate selection")
    g.add_argument("--families", default=None, help="comma-separated candidate families")
    g.add_argument("--ranks", action="store_true", help="convert responses to ranks/(n+1)")
    g.add_argument("--truncate", type=int, default=None, help="fit trees 1..q, independence above")
    g.add_argument("--structure-reuse", choices=("per-family", "first-only"), default="per-family",
                   help="select covariates per family, or once for the first family")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = argparse.ArgumentParser(prog="covine", description="Vine copulas with GAM-driven Kendall's tau. "
                                "Global options follow the subcommand.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[common], help="select and fit a vine model")
    f.add_argument("data", help="CSV with u1..ud and covariate columns")
    s = f.add_mutually_exclusive_group()
    s.add_argument("--structure", help="JSON vine structure")
    s.add_argument("--dvine", action="store_true", help="D-vine in column order (default)")
    f.add_argument("--smooth", default=None, help="smooth candidates (default: all non-response columns)")
    f.add_argument("--linear", default=None, help="linear candidates")
    f.add_argument("--out", required=True, help="model JSON path")
    f.add_argument("--report", default=None, help="fit report JSON path (default: <out>.report.json)")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", parents=[common], help="per-edge Kendall's tau at covariate rows")
    pr.add_argument("model")
    pr.add_argument("covariates", nargs="?", default=None)
    pr.add_argument("--n", type=int, default=None, help="rows for covariate-free models")
    pr.add_argument("--bands", action="store_true", help="add pointwise 95%% Wald bands")
    pr.add_argument("--out", default=None, help="output CSV (default: stdout)")
    pr.set_defaults(func=cmd_predict)

    sm = sub.add_parser("simulate", parents=[common], help="sample from a model")
    sm.add_argument("model")
    sm.add_argument("covariates", nargs="?", default=None)
    sm.add_argument("--n", type=int, default=None)
    sm.add_argument("--out", default=None)
    sm.set_defaults(func=cmd_simulate)

    de = sub.add_parser("density", parents=[common], help="log-density of data under a model")
    de.add_argument("model")
    de.add_argument("data")
    de.add_argument("--out", default=None)
    de.set_defaults(func=cmd_density)

    ss = sub.add_parser("sim-study", parents=[common], help="run the simulation study")
    ss.add_argument("--n", type=int, default=500)
    ss.add_argument("--reps", type=int, default=50)
    ss.add_argument("--estimator", choices=("oracle", "selection", "both"), default="both")
    ss.add_argument("--trees", type=int, default=4)
    ss.add_argument("--out", required=True, help="output directory")
    ss.add_argument("--cache", default=None, help="per-replicate cache directory")
    ss.set_defaults(func=cmd_sim_study)
    return p


def _fail(code, exc):
    json.dump({"error": type(exc).__name__, "message": str(exc), "exit_code": code}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv=None) -> int:
    level = os.environ.get("COVINE_LOG", "error").lower()
    logging.basicConfig(level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    if args.seed is None and args.command == "sim-study":
        args.seed = 42
    try:
        args.func(args)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (ValueError, KeyError) as exc:
        return _fail(EXIT_INPUT, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
