"""Reading and writing DGP documents (schema ``hetiv-dgp/1``).

A document is TOML with these tables (K support points, p covariates)::

    schema = "hetiv-dgp/1"
    name = "example"                     # optional
    description = "..."                  # optional

    [support]
    covariates = ["const", "x"]          # optional, p names
    points = [[1.0, 0.0], [1.0, 1.0]]    # K rows of p numbers
    probabilities = [0.4, 0.6]           # K numbers summing to 1

    [propensity]
    values = [0.3, 0.6]                  # E[Z | X] per point, in (0, 1)

    [strata]                             # shares per point, each row sums to 1
    never_taker = [0.3, 0.2]
    complier = [0.5, 0.5]
    always_taker = [0.2, 0.3]

    [outcomes]
    noise_sd = 1.0
    [outcomes.never_taker]               # likewise complier, always_taker
    y0 = [0.0, 1.0]                      # E[Y(0) | stratum, X] per point
    y1 = [0.5, 1.5]                      # E[Y(1) | stratum, X] per point

    [assumptions]                        # optional declared tags
    linear_means = true
    first_stage_link = "logit"
    s = 1.0
    eta0 = [0.5, 0.4]

Every validation failure raises :class:`~hetiv.errors.SchemaError` whose
message starts with the path of the offending field.
"""

from __future__ import annotations

import hashlib
import math
import sys

import numpy as np

from .dgp import AssumptionTags, DgpSpec
from .errors import InvalidDgp, SchemaError
from .numerics import LinkFunction

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["SCHEMA", "load_dgp", "loads_dgp", "dumps_dgp", "document_hash"]

SCHEMA = "hetiv-dgp/1"
SUM_TOLERANCE = 1e-12
_STRATA = ("never_taker", "complier", "always_taker")
_TAG_FLAGS = ("linear_means", "linear_first_stage", "relaxed_linear", "logit_propensity", "index_first_stage")


def _fail(path: str, message: str):
    raise SchemaError(f"{path}: {message}")


def _table(doc: dict, path: str, required: bool = True) -> dict:
    node = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                _fail(path, "missing table")
            return {}
        node = node[part]
    if not isinstance(node, dict):
        _fail(path, "expected a table")
    return node


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        _fail(path, "must be finite")
    return value


def _vector(table: dict, key: str, path: str, length: int | None = None) -> np.ndarray:
    full = f"{path}.{key}"
    if key not in table:
        _fail(full, "missing")
    raw = table[key]
    if not isinstance(raw, list):
        _fail(full, "expected an array of numbers")
    values = np.array([_number(v, f"{full}[{i}]") for i, v in enumerate(raw)], dtype=float)
    if length is not None and values.shape[0] != length:
        _fail(full, f"expected {length} entries, got {values.shape[0]}")
    return values


def _matrix(table: dict, key: str, path: str) -> np.ndarray:
    full = f"{path}.{key}"
    raw = table.get(key)
    if not isinstance(raw, list) or not raw:
        _fail(full, "expected a non-empty array of rows")
    rows = []
    for i, row in enumerate(raw):
        if not isinstance(row, list):
            _fail(f"{full}[{i}]", "expected an array of numbers")
        rows.append([_number(v, f"{full}[{i}][{j}]") for j, v in enumerate(row)])
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width or width == 0:
            _fail(f"{full}[{i}]", f"expected {width} entries, got {len(row)}")
    return np.array(rows, dtype=float)


def _parse_assumptions(table: dict, p: int) -> AssumptionTags:
    path = "assumptions"
    known = set(_TAG_FLAGS) | {"first_stage_link", "s", "eta0", "psi0"}
    for key in table:
        if key not in known:
            _fail(f"{path}.{key}", "unknown key")
    flags = {}
    for key in _TAG_FLAGS:
        value = table.get(key, False)
        if not isinstance(value, bool):
            _fail(f"{path}.{key}", "expected true or false")
        flags[key] = value
    try:
        link = LinkFunction.parse(table.get("first_stage_link", "logit"))
    except ValueError:
        _fail(f"{path}.first_stage_link", f"unknown link {table.get('first_stage_link')!r}")
    s = None
    if "s" in table:
        s = _number(table["s"], f"{path}.s")
        if not 0.0 <= s <= 1.0:
            _fail(f"{path}.s", "must lie in [0, 1]")
    eta0 = tuple(_vector(table, "eta0", path, p)) if "eta0" in table else None
    psi0 = tuple(_vector(table, "psi0", path, p)) if "psi0" in table else None
    return AssumptionTags(first_stage_link=link, s=s, eta0=eta0, psi0=psi0, **flags)


def _check_unit_interval(values: np.ndarray, path: str, open_interval: bool) -> None:
    for i, v in enumerate(values):
        bad = (v <= 0 or v >= 1) if open_interval else (v < 0 or v > 1)
        if bad:
            bounds = "(0, 1)" if open_interval else "[0, 1]"
            _fail(f"{path}[{i}]", f"value {float(v)!r} outside {bounds}")


def parse_document(doc: dict) -> DgpSpec:
    """Validate a parsed TOML mapping and build the DGP."""
    schema = doc.get("schema")
    if schema != SCHEMA:
        _fail("schema", f"expected {SCHEMA!r}, got {schema!r}")
    for key in doc:
        if key not in ("schema", "name", "description", "support", "propensity", "strata", "outcomes", "assumptions"):
            _fail(key, "unknown key")

    support = _table(doc, "support")
    points = _matrix(support, "points", "support")
    k, p = points.shape
    probs = _vector(support, "probabilities", "support", k)
    for i, v in enumerate(probs):
        if v <= 0:
            _fail(f"support.probabilities[{i}]", "must be positive")
    total = float(probs.sum())
    if abs(total - 1.0) > SUM_TOLERANCE:
        _fail("support.probabilities", f"sum to {total:.15g}, expected 1 within {SUM_TOLERANCE}")
    names = support.get("covariates")
    if names is not None:
        if not isinstance(names, list) or len(names) != p or not all(isinstance(v, str) for v in names):
            _fail("support.covariates", f"expected {p} strings")
        if len(set(names)) != p:
            _fail("support.covariates", "names must be distinct")
        names = tuple(names)

    propensity = _vector(_table(doc, "propensity"), "values", "propensity", k)
    _check_unit_interval(propensity, "propensity.values", open_interval=True)

    strata_table = _table(doc, "strata")
    shares = np.column_stack([_vector(strata_table, g, "strata", k) for g in _STRATA])
    for g, col in zip(_STRATA, shares.T):
        _check_unit_interval(col, f"strata.{g}", open_interval=False)
    for i, row in enumerate(shares):
        if abs(row.sum() - 1.0) > SUM_TOLERANCE:
            _fail(f"strata[{i}]", f"shares sum to {float(row.sum()):.15g}, expected 1 within {SUM_TOLERANCE}")

    outcomes = _table(doc, "outcomes")
    noise = _number(outcomes.get("noise_sd", 1.0), "outcomes.noise_sd")
    if noise < 0:
        _fail("outcomes.noise_sd", "must be non-negative")
    means = np.empty((k, 3, 2))
    for gi, g in enumerate(_STRATA):
        sub = _table(doc, f"outcomes.{g}")
        for d in (0, 1):
            means[:, gi, d] = _vector(sub, f"y{d}", f"outcomes.{g}", k)

    tags = _parse_assumptions(_table(doc, "assumptions", required=False), p)
    name = doc.get("name", "")
    description = doc.get("description", "")
    if not isinstance(name, str):
        _fail("name", "expected a string")
    if not isinstance(description, str):
        _fail("description", "expected a string")
    try:
        return DgpSpec(
            support=points,
            probs=probs,
            propensity=propensity,
            strata=shares,
            outcome_means=means,
            outcome_noise_sd=noise,
            assumptions=tags,
            name=name,
            covariate_names=names,
            description=description,
        )
    except InvalidDgp as exc:
        raise SchemaError(f"document: {exc}") from exc


def loads_dgp(text: str, source: str = "<string>") -> DgpSpec:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{source}: not valid TOML ({exc})") from exc
    return parse_document(doc)


def load_dgp(path) -> DgpSpec:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8 text") from exc
    return loads_dgp(text, source=str(path))


def document_hash(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()


def _fmt(v: float) -> str:
    # repr round-trips exactly and is valid TOML for finite floats
    return repr(float(v))


def _fmt_list(values) -> str:
    return "[" + ", ".join(_fmt(v) for v in values) + "]"


def _fmt_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def dumps_dgp(dgp: DgpSpec) -> str:
    """Serialize so that :func:`loads_dgp` rebuilds bit-identical arrays."""
    lines = [f"schema = {_fmt_str(SCHEMA)}"]
    if dgp.name:
        lines.append(f"name = {_fmt_str(dgp.name)}")
    if dgp.description:
        lines.append(f"description = {_fmt_str(dgp.description)}")
    lines += ["", "[support]"]
    if dgp.covariate_names is not None:
        lines.append("covariates = [" + ", ".join(_fmt_str(c) for c in dgp.covariate_names) + "]")
    lines.append("points = [")
    lines += [f"    {_fmt_list(row)}," for row in dgp.support]
    lines.append("]")
    lines.append(f"probabilities = {_fmt_list(dgp.probs)}")
    lines += ["", "[propensity]", f"values = {_fmt_list(dgp.propensity)}", "", "[strata]"]
    for gi, g in enumerate(_STRATA):
        lines.append(f"{g} = {_fmt_list(dgp.strata[:, gi])}")
    lines += ["", "[outcomes]", f"noise_sd = {_fmt(dgp.outcome_noise_sd)}"]
    for gi, g in enumerate(_STRATA):
        lines += ["", f"[outcomes.{g}]"]
        for d in (0, 1):
            lines.append(f"y{d} = {_fmt_list(dgp.outcome_means[:, gi, d])}")
    tags = dgp.assumptions
    lines += ["", "[assumptions]"]
    for key in _TAG_FLAGS:
        lines.append(f"{key} = {'true' if getattr(tags, key) else 'false'}")
    lines.append(f"first_stage_link = {_fmt_str(tags.first_stage_link.value)}")
    if tags.s is not None:
        lines.append(f"s = {_fmt(tags.s)}")
    if tags.eta0 is not None:
        lines.append(f"eta0 = {_fmt_list(tags.eta0)}")
    if tags.psi0 is not None:
        lines.append(f"psi0 = {_fmt_list(tags.psi0)}")
    return "\n".join(lines) + "\n"
