"""Command-line front end.

Subcommands::

    hetiv estimate DATA.csv --y Y --t T --z Z [--x X1 X2 ...]
    hetiv test     DATA.csv --y Y --t T --z Z [--x ...] [--split --seed N]
    hetiv simulate DGP [--estimators ...] [--n N] [--reps R] [--seed S]
    hetiv weights  DGP [--s 0 0.5 1]
    hetiv sample   DGP --n N --seed S [--output FILE.csv]

``DGP`` is a path to a ``hetiv-dgp/1`` document or the name of a bundled
design (``dgp_a``, ``dgp_b``, ...).  Exit codes: 0 success, 1 usage or data
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import library
from .config import document_hash, load_dgp
from .dgp import (
    STRATA,
    DgpSpec,
    WeightKind,
    check_assumptions,
    limit_decomposition,
    mc_study,
    population_params,
    sample,
    true_late,
    weight_profile,
)
from .errors import (
    DataError,
    HetivError,
    MissingColumn,
    NonBinaryColumn,
    NumericalError,
    ParseError,
)
from .estimators import Dataset, EstimatorKind, WeakInstrumentWarning, estimate
from .inference import (
    hausman_full,
    hausman_split,
    influence_augmented,
    influence_logit_iv,
    influence_tsls,
    variance_augmented,
    variance_logit_iv,
    variance_tsls,
)
from .numerics import LinkFunction

__all__ = ["main", "read_csv", "write_csv", "dumps_report", "REPORT_SCHEMA"]

REPORT_SCHEMA = "hetiv-report/1"
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    reason = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- CSV input


def read_csv(path, y: str, t: str, z: str, x: list[str] | None = None, add_intercept: bool = True) -> Dataset:
    """Load the bound columns of a CSV file with a header row.

    Errors name the 1-based file line and the column.
    """
    x = list(x or [])
    names = [y, t, z, *x]
    if len(set(names)) != len(names):
        raise UsageError("column bindings must be distinct")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, a header row is required") from None
        header = [h.strip() for h in header]
        index = {}
        for name in names:
            if name not in header:
                raise MissingColumn(f"column {name!r} not in header {header}")
            index[name] = header.index(name)
        columns = {name: [] for name in names}
        data_row = 0
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            data_row += 1
            where = f"line {line} (data row {data_row})"
            if len(row) != len(header):
                raise ParseError(f"{where}: expected {len(header)} fields, got {len(row)}")
            for name in names:
                cell = row[index[name]].strip()
                if cell == "":
                    raise ParseError(f"{where}, column {name!r}: missing value")
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"{where}, column {name!r}: cannot parse {cell!r} as a number") from None
                if not math.isfinite(value):
                    raise ParseError(f"{where}, column {name!r}: non-finite value {cell!r}")
                if name in (t, z) and value not in (0.0, 1.0):
                    raise NonBinaryColumn(f"{where}, column {name!r}: value {cell!r} is not 0 or 1")
                columns[name].append(value)
    cov = np.column_stack([columns[c] for c in x]) if x else None
    n = len(columns[y])
    if n == 0:
        raise ParseError(f"{path}: no data rows")
    return Dataset.from_arrays(columns[y], columns[t], columns[z], cov, add_intercept=add_intercept)


def write_csv(data: Dataset, covariate_names: list[str], fh) -> None:
    """Write ``y, t, z`` and covariates; floats use round-trip ``repr``."""
    x = data.x[:, 1:] if data.has_intercept else data.x
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["y", "t", "z", *covariate_names])
    for i in range(data.n):
        writer.writerow(
            [repr(float(data.y[i])), int(data.t[i]), int(data.z[i]), *(repr(float(v)) for v in x[i])]
        )


# ---------------------------------------------------------------- reports


def _clean(obj, path: str, reasons: dict):
    """Convert numpy values; replace non-finite floats by null with a reason."""
    if isinstance(obj, dict):
        return {k: _clean(v, f"{path}.{k}" if path else k, reasons) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v, f"{path}[{i}]", reasons) for i, v in enumerate(obj)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            reasons[path] = "NonFinite"
            return None
        return v
    return obj


def _encode(obj, level: int) -> str:
    pad = "  " * (level + 1)
    end = "  " * level
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, level + 1) for v in obj) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format(obj, ".17g")
    return json.dumps(obj)


def dumps_report(report: dict) -> str:
    """Serialize a report; floats carry 17 significant digits."""
    reasons: dict = {}
    clean = _clean(report, "", reasons)
    if reasons:
        clean.setdefault("null_reasons", {}).update(reasons)
    if "timing" in clean:
        clean["timing"] = clean.pop("timing")
    return _encode(clean, 0) + "\n"


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


def _error_block(exc: HetivError) -> dict:
    return {"status": "error", "reason": exc.reason, "message": str(exc)}


# ---------------------------------------------------------------- text output


def _fmt_num(v, digits: int = 6) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        return "null"
    return f"{v:.{digits}f}"


def _table(headers: list[str], rows: list[list], digits: int = 6) -> str:
    cells = [[c if isinstance(c, str) else _fmt_num(c, digits) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _render_estimators(blocks: dict) -> str:
    rows = []
    for name, b in blocks.items():
        if b.get("status") == "error":
            rows.append([name, "error: " + b["reason"], "", "", "", "", ""])
            continue
        rows.append(
            [name, b["beta"], b["std_error"], b["ci"][0], b["ci"][1], b["diagnostics"]["denominator_per_n"], b["diagnostics"]["weak_flag"]]
        )
    return _table(["estimator", "beta", "std_error", "ci_low", "ci_high", "denom/n", "weak"], rows)


def _render_hausman(blocks: dict) -> str:
    rows = []
    for name, b in blocks.items():
        if b.get("status") == "error":
            rows.append([name, "error: " + b["reason"], "", "", ""])
            continue
        rows.append([name, b["statistic"], math.sqrt(b["sigma_h2"]), b["critical_value"], "reject" if b["reject"] else "do not reject"])
    return _table(["variant", "statistic", "sigma_h", "critical", "decision"], rows)


def _render_weights(block: dict) -> str:
    headers = ["point", *block["covariates"], "prob"] + list(block["columns"])
    rows = []
    for k, point in enumerate(block["support"]):
        rows.append([str(k), *point, block["probabilities"][k], *(block["columns"][c][k] for c in block["columns"])])
    rows.append(["mean", *([""] * len(block["covariates"])), "", *(block["mean_weight"][c] for c in block["columns"])])
    return _table(headers, rows, digits=10)


def _render(report: dict) -> str:
    out = [f"{report['command']}  ({report['schema_version']})"]
    for w in report.get("warnings", []):
        out.append(f"WARNING: {w}")
    if "error" in report:
        out.append(f"error: {report['error']['reason']}: {report['error']['message']}")
    if "input" in report:
        inp = report["input"]
        out.append(f"input: {inp.get('path')}  n = {inp.get('n')}  intercept = {inp.get('intercept')}")
    if "population" in report:
        pop = report["population"]
        out.append("")
        out.append("population limits")
        rows = [[k, v] for k, v in pop["beta_limit"].items()]
        rows.append(["true_late", pop["true_late"]])
        out.append(_table(["quantity", "value"], rows, digits=10))
        out.append(f"kappa_bar0 = {_fmt_num(pop['kappa_bar0'], 10)}  augmented fallback = {_fmt_num(pop['augmented_fallback'])}")
    if "decomposition" in report:
        rows = []
        for kind, d in report["decomposition"].items():
            rows.append([kind, d["s"], d["complier"], d["always_taker"], d["never_taker"], d["non_causal"], d["total"]])
        out += ["", "limit decomposition", _table(["estimator", "s", "complier", "always", "never", "non_causal", "total"], rows, 8)]
    if "weights" in report:
        out += ["", "complier weights", _render_weights(report["weights"])]
    if "estimators" in report:
        out += ["", _render_estimators(report["estimators"])]
    if "hausman" in report:
        out += ["", _render_hausman(report["hausman"])]
    if "monte_carlo" in report:
        mc = report["monte_carlo"]
        out += ["", f"monte carlo: n = {mc['n']}  reps = {mc['reps']}  master_seed = {mc['master_seed']}"]
        rows = []
        for kind, b in mc["estimators"].items():
            rows.append([kind, b["mean"], b["beta_limit"], b["mc_se"], b["z_score"], b["n_times_variance"], len(b["failures"])])
        out.append(_table(["estimator", "mean", "limit", "mc_se", "z", "n*var", "failures"], rows))
    if "timing" in report:
        out += ["", f"elapsed {report['timing']['seconds']:.3f} s"]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- commands


def _kinds(names: list[str]) -> list[EstimatorKind]:
    if not names or "all" in names:
        return list(EstimatorKind)
    try:
        kinds = [EstimatorKind.parse(n) for n in names]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return list(dict.fromkeys(kinds))


def _alpha(value: str) -> float:
    a = float(value)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _unit(value: str) -> float:
    s = float(value)
    if not 0 <= s <= 1:
        raise argparse.ArgumentTypeError("s must lie in [0, 1]")
    return s


def _link(value: str) -> LinkFunction:
    try:
        return LinkFunction.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _load_data(args) -> tuple[Dataset, dict]:
    data = read_csv(args.data, args.y, args.t, args.z, args.x, add_intercept=not args.no_intercept)
    info = {
        "path": str(args.data),
        "sha256": _file_digest(args.data),
        "n": data.n,
        "p": data.p,
        "intercept": not args.no_intercept,
        "columns": {"y": args.y, "t": args.t, "z": args.z, "x": list(args.x or [])},
    }
    return data, info


def _estimator_block(data: Dataset, kind: EstimatorKind, alpha: float, link: LinkFunction, warn: list) -> dict:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", WeakInstrumentWarning)
        est = estimate(data, kind, link=link)
        if kind is EstimatorKind.LOGIT_IV:
            rep = variance_logit_iv(data, est, influence_logit_iv(data, est), alpha)
        elif kind is EstimatorKind.TSLS:
            rep = variance_tsls(data, est, influence_tsls(data, est), alpha)
        else:
            rep = variance_augmented(data, est, influence_augmented(data, est), alpha)
    warn += [f"{kind.value}: {w.message}" for w in caught if issubclass(w.category, WeakInstrumentWarning)]
    diag = est.diagnostics
    block = {
        "status": "ok",
        "beta": est.beta,
        "std_error": rep.std_error,
        "sigma2": rep.sigma2,
        "ci": [rep.ci_low, rep.ci_high],
        "alpha": alpha,
        "numerator": est.numerator,
        "denominator": est.denominator,
        "diagnostics": {
            "denominator_per_n": diag.denominator_abs / data.n,
            "arm_counts": {"z0": diag.min_arm_counts[0], "z1": diag.min_arm_counts[1]},
            "first_stage_condition": diag.first_stage_condition,
            "weak_flag": diag.weak_flag,
            "weak_threshold": diag.weak_threshold,
        },
    }
    if kind is EstimatorKind.TSLS:
        block["first_stage"] = {"gamma": est.first_stage}
    elif kind is EstimatorKind.LOGIT_IV:
        fit = est.first_stage
        block["first_stage"] = {"theta": fit.coefficients, "iterations": fit.iterations, "gradient_norm": fit.final_gradient_norm}
    else:
        block["first_stage"] = {
            "link": est.psi_fit.link.value,
            "psi": est.psi_fit.coefficients,
            "theta": est.theta,
            "kappa": est.kappa,
            "collinearity_fallback": est.collinearity_fallback,
        }
    return block


def _base_report(command: str, config: dict, seed) -> dict:
    return {
        "schema_version": REPORT_SCHEMA,
        "command": command,
        "seed": seed,
        "config_hash": _config_hash(config),
        "config": config,
        "warnings": [],
    }


def cmd_estimate(args) -> tuple[dict, int]:
    data, info = _load_data(args)
    kinds = _kinds(args.estimators)
    config = {
        "input_sha256": info["sha256"],
        "columns": info["columns"],
        "intercept": info["intercept"],
        "estimators": [k.value for k in kinds],
        "link": args.link.value,
        "alpha": args.alpha,
    }
    report = _base_report("estimate", config, None)
    report["input"] = info
    blocks, code = {}, EXIT_OK
    for kind in kinds:
        try:
            blocks[kind.value] = _estimator_block(data, kind, args.alpha, args.link, report["warnings"])
        except NumericalError as exc:
            blocks[kind.value] = _error_block(exc)
            code = EXIT_NUMERICAL
    report["estimators"] = blocks
    return report, code


def _hausman_block(res) -> dict:
    block = {
        "status": "ok",
        "statistic": res.statistic,
        "sigma_h2": res.sigma_h2,
        "critical_value": res.critical_value,
        "alpha": res.alpha,
        "reject": res.reject,
        "decision": "reject" if res.reject else "do_not_reject",
        "beta_logit_iv": res.beta_logit,
        "beta_augmented": res.beta_augmented,
    }
    if res.subsample_sizes is not None:
        block["split_seed"] = res.split_seed
        block["subsample_sizes"] = list(res.subsample_sizes)
    return block


def cmd_test(args) -> tuple[dict, int]:
    if args.split and args.seed is None:
        raise UsageError("--split requires --seed")
    data, info = _load_data(args)
    config = {
        "input_sha256": info["sha256"],
        "columns": info["columns"],
        "intercept": info["intercept"],
        "link": args.link.value,
        "alpha": args.alpha,
        "split": bool(args.split),
    }
    report = _base_report("test", config, args.seed)
    report["input"] = info
    blocks, code = {}, EXIT_OK
    runs = [("full", lambda: hausman_full(data, args.alpha, link=args.link))]
    if args.split:
        runs.append(("split", lambda: hausman_split(data, args.alpha, args.seed, link=args.link)))
    for name, run in runs:
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", WeakInstrumentWarning)
                blocks[name] = _hausman_block(run())
            report["warnings"] += [f"{name}: {w.message}" for w in caught if issubclass(w.category, WeakInstrumentWarning)]
        except NumericalError as exc:
            blocks[name] = _error_block(exc)
            code = EXIT_NUMERICAL
    report["hausman"] = blocks
    return report, code


def resolve_dgp(ref: str) -> tuple[DgpSpec, str]:
    """Load a DGP from a path or a bundled name; returns (dgp, document hash)."""
    path = Path(ref)
    if path.is_file():
        return load_dgp(path), _file_digest(path)
    name = path.name[:-5] if path.name.endswith(".toml") else path.name
    if name in library.BUNDLED:
        dgp = library.load_bundled(name)
        text = resources.files("hetiv.data").joinpath(f"{name}.toml").read_text(encoding="utf-8")
        return dgp, document_hash(text)
    raise DataError(f"no DGP document at {ref!r} and no bundled design of that name ({', '.join(library.BUNDLED)})")


def _weights_block(dgp: DgpSpec, lim, s_values: list[float]) -> tuple[dict, list[str]]:
    columns, means, effects, warn = {}, {}, {}, []
    for kind in WeightKind:
        if kind is WeightKind.W_LAMBDA_S:
            continue
        wp = weight_profile(dgp, kind, limits=lim)
        columns[kind.value], means[kind.value], effects[kind.value] = wp.values, wp.mean_weight, wp.effect
    for s in s_values:
        wp = weight_profile(dgp, WeightKind.W_LAMBDA_S, s=s, limits=lim)
        key = f"w_lambda_s={s:g}"
        columns[key], means[key], effects[key] = wp.values, wp.mean_weight, wp.effect
    negatives = {}
    for key, values in columns.items():
        idx = [int(i) for i in np.flatnonzero(np.asarray(values) < 0)]
        if idx:
            negatives[key] = idx
            for i in idx:
                warn.append(f"NEGATIVE WEIGHT: {key} = {values[i]:.6g} at support point {i} (x = {[float(v) for v in dgp.support[i]]})")
    names = list(dgp.covariate_names) if dgp.covariate_names else [f"x{j}" for j in range(dgp.p)]
    block = {
        "covariates": names,
        "support": dgp.support,
        "probabilities": dgp.probs,
        "complier_effect": dgp.effects[:, 1],
        "columns": columns,
        "mean_weight": means,
        "weighted_effect": effects,
        "negative": negatives,
    }
    return block, warn


def _population_block(dgp: DgpSpec, lim) -> dict:
    checked = check_assumptions(dgp)
    flags = ("linear_means", "linear_first_stage", "relaxed_linear", "logit_propensity", "index_first_stage")
    beta = {}
    for k in EstimatorKind:
        try:
            beta[k.value] = lim.beta_limit(k)
        except NumericalError:
            beta[k.value] = float("nan")
    try:
        late = true_late(dgp)
    except NumericalError:
        late = float("nan")
    return {
        "theta0": lim.theta0,
        "gamma0": lim.gamma0,
        "psi_bar0": lim.psi_bar0,
        "theta_bar0": lim.theta_bar0,
        "kappa_bar0": lim.kappa_bar0,
        "augmented_fallback": lim.augmented_fallback,
        "first_stage_link": lim.link.value,
        "beta_limit": beta,
        "denominator": {k.value: lim.denominator[k] for k in EstimatorKind},
        "true_late": late,
        "assumptions": {
            "declared": {f: getattr(dgp.assumptions, f) for f in flags},
            "checked": {f: getattr(checked, f) for f in flags},
            "s": checked.s,
        },
    }


def cmd_simulate(args) -> tuple[dict, int]:
    dgp, digest = resolve_dgp(args.dgp)
    kinds = _kinds(args.estimators)
    config = {
        "dgp_sha256": digest,
        "estimators": [k.value for k in kinds],
        "n": args.n,
        "reps": args.reps,
        "s": args.s,
        "link": args.link.value,
    }
    report = _base_report("simulate", config, args.seed)
    report["dgp"] = {"name": dgp.name, "description": dgp.description, "points": dgp.n_points, "strata": list(STRATA)}
    lim = population_params(dgp, args.link)
    report["population"] = _population_block(dgp, lim)
    decomposition = {}
    for k in kinds:
        d = limit_decomposition(dgp, k, args.s, limits=lim)
        decomposition[k.value] = {
            "s": d.s,
            "complier": d.complier,
            "always_taker": d.always_taker,
            "never_taker": d.never_taker,
            "non_causal": d.non_causal,
            "total": d.total,
            "beta_limit": d.beta_limit,
        }
    report["decomposition"] = decomposition
    report["weights"], warn = _weights_block(dgp, lim, [args.s])
    report["warnings"] += warn
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakInstrumentWarning)
        results = mc_study(dgp, kinds, args.n, args.reps, args.seed, link=args.link)
    mc = {"n": args.n, "reps": args.reps, "master_seed": args.seed, "estimators": {}}
    for k, res in results.items():
        limit = lim.beta_limit(k)
        mc["estimators"][k.value] = {
            "beta_limit": limit,
            "mean": res.mean,
            "variance": res.variance,
            "n_times_variance": args.n * res.variance,
            "mc_se": res.mc_se,
            "z_score": (res.mean - limit) / res.mc_se,
            "within_3_se": bool(abs(res.mean - limit) < 3 * res.mc_se),
            "failures": [{"rep": r, "reason": reason} for r, reason in res.failures],
        }
        if res.failures:
            report["warnings"].append(f"{k.value}: {len(res.failures)} of {args.reps} replications failed")
    report["monte_carlo"] = mc
    return report, EXIT_OK


def cmd_weights(args) -> tuple[dict, int]:
    dgp, digest = resolve_dgp(args.dgp)
    s_values = list(dict.fromkeys(args.s)) if args.s else [1.0]
    config = {"dgp_sha256": digest, "s": s_values, "link": args.link.value}
    report = _base_report("weights", config, None)
    report["dgp"] = {"name": dgp.name, "description": dgp.description, "points": dgp.n_points}
    true_late(dgp)  # surfaces NoCompliers before any normalization fails
    lim = population_params(dgp, args.link)
    report["true_late"] = true_late(dgp)
    report["weights"], warn = _weights_block(dgp, lim, s_values)
    report["warnings"] += warn
    return report, EXIT_OK


def cmd_sample(args) -> tuple[dict | None, int]:
    dgp, _ = resolve_dgp(args.dgp)
    data = sample(dgp, args.n, args.seed)
    names = list(dgp.covariate_names) if dgp.covariate_names else [f"x{j}" for j in range(dgp.p)]
    if data.has_intercept:
        names = names[1:]
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_csv(data, names, fh)
    else:
        buf = io.StringIO()
        write_csv(data, names, buf)
        sys.stdout.write(buf.getvalue())
    return None, EXIT_OK


# ---------------------------------------------------------------- entry point


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="CSV file with a header row")
    p.add_argument("--y", required=True, help="outcome column")
    p.add_argument("--t", required=True, help="binary treatment column")
    p.add_argument("--z", required=True, help="binary instrument column")
    p.add_argument("--x", nargs="*", default=[], help="covariate columns")
    p.add_argument("--no-intercept", action="store_true", help="do not prepend a constant column")
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--link", type=_link, default=LinkFunction.LOGIT, help="control-arm link: logit, probit, clamped")


def _output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--output", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hetiv", description="IV estimation with a binary treatment and a binary instrument")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="point estimates, standard errors and confidence intervals")
    _data_args(p)
    p.add_argument("--estimators", nargs="+", default=["all"], help="logit_iv, tsls, augmented or all")
    _output_args(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("test", help="Hausman tests of a logit instrument propensity")
    _data_args(p)
    p.add_argument("--split", action="store_true", help="also run the split-sample test")
    p.add_argument("--seed", type=int, help="seed for the random split")
    _output_args(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="population limits, weights and a Monte Carlo study for a DGP")
    p.add_argument("dgp", help="DGP document path or bundled name")
    p.add_argument("--estimators", nargs="+", default=["all"], help="logit_iv, tsls, augmented or all")
    p.add_argument("--n", type=int, default=10000, help="sample size per replication")
    p.add_argument("--reps", type=int, default=200, help="number of replications")
    p.add_argument("--seed", type=int, default=0, help="master seed; replication r uses (seed, r)")
    p.add_argument("--s", type=_unit, default=1.0, help="split parameter in [0, 1] for the decomposition")
    p.add_argument("--link", type=_link, default=LinkFunction.LOGIT, help="control-arm link: logit, probit, clamped")
    _output_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("weights", help="complier weight profiles of a DGP")
    p.add_argument("dgp", help="DGP document path or bundled name")
    p.add_argument("--s", type=_unit, nargs="+", help="values of s for the s-indexed logit weights")
    p.add_argument("--link", type=_link, default=LinkFunction.LOGIT, help="control-arm link: logit, probit, clamped")
    _output_args(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("sample", help="draw a dataset from a DGP as CSV")
    p.add_argument("dgp", help="DGP document path or bundled name")
    p.add_argument("--n", type=int, required=True, help="number of rows")
    p.add_argument("--seed", type=int, required=True, help="seed for the draw")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sample)
    return parser


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    fmt, output, command = "json", None, None
    started = time.perf_counter()
    try:
        args = parser.parse_args(argv)
        fmt = getattr(args, "format", "json")
        output = getattr(args, "output", None) if args.command != "sample" else None
        command = args.command
        for name in ("n", "reps"):
            if getattr(args, name, 1) is not None and getattr(args, name, 1) < 1:
                raise UsageError(f"--{name} must be at least 1")
        report, code = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NumericalError) as exc:
        code = EXIT_USAGE if isinstance(exc, DataError) else EXIT_NUMERICAL
        print(f"error: {exc.reason}: {exc}", file=sys.stderr)
        if command is None or command == "sample":
            return code
        report = {"schema_version": REPORT_SCHEMA, "command": command, "error": _error_block(exc)}
    if report is None:
        return code
    report["status"] = "ok" if code == EXIT_OK else "error"
    report["timing"] = {"seconds": time.perf_counter() - started}
    _emit(dumps_report(report) if fmt == "json" else _render(report), output)
    return code


if __name__ == "__main__":
    sys.exit(main())
