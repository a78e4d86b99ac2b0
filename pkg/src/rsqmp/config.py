"""Experiment configuration: YAML text -> validated, canonical dict.

Every key is checked against a fixed schema before any computation runs.
Errors carry the dotted field path and, when the input came from text, the
line number of the offending entry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ParseError

COMMANDS = ("approximate", "estimate", "usecase", "histogram", "resources")
TAGS = ("monomial", "exp", "inverse", "step")
USECASES = ("mcmc", "qite", "qlss_amplitude", "qlss_expectation", "gsee")

_FUNCTION_KEYS = {"tag", "t", "beta", "kappa", "xi", "y", "nu"}
_MATRIX_KEYS = {"kind", "path", "dim", "norm", "seed", "values", "kappa"}
_VECTOR_KEYS = {"kind", "seed", "index", "values", "overlap"}
_OBS_KEYS = {"kind", "values", "dim", "seed", "norm", "path"}
_NOISE_KEYS = {"kind", "p", "eps_be"}
_ISING_KEYS = {"n", "coupling", "field", "J", "h"}
_USECASE_KEYS = {"name", "beta", "eps_r", "epsilon", "delta", "ising", "y_init", "kappa", "eta", "xi", "n_draws"}
_TOP_KEYS = {
    "command", "seed", "function", "matrix", "algorithm", "phi", "psi", "b", "rho", "observable",
    "epsilon", "delta", "noise", "mode", "backend", "record_shots", "shots", "usecase", "femoco",
    "nu_rule", "toffoli_per_query",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; ``data`` holds the canonical nested dict."""

    data: dict
    base_dir: str = "."

    @property
    def command(self) -> str:
        return self.data["command"]

    def get(self, key, default=None):
        return self.data.get(key, default)

    def canonical_json(self) -> str:
        return canonical_json(self.data)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


# ------------------------------------------------------------------ parsing


def _line_map(text: str) -> dict:
    """Dotted key path -> one-based line of the key in the YAML text."""
    out: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[path] = k.start_mark.line + 1
                walk(v, path)

    if root is not None:
        walk(root, "")
    return out


class _Checker:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, field: str, msg: str):
        line = self.lines.get(field)
        if line is None and "." in field:
            line = self.lines.get(field.rsplit(".", 1)[0])
        raise ParseError(msg, field=field, line=line)

    def keys(self, obj, allowed: set, prefix: str):
        if not isinstance(obj, dict):
            self.fail(prefix, "expected a mapping")
        for k in obj:
            if k not in allowed:
                self.fail(f"{prefix}.{k}" if prefix else str(k), f"unknown key {k!r}")

    def need(self, obj: dict, key: str, prefix: str):
        if key not in obj or obj[key] is None:
            self.fail(f"{prefix}.{key}" if prefix else key, f"missing required field {key!r}")
        return obj[key]

    def num(self, obj, key, prefix, lo=None, hi=None, lo_open=False, hi_open=False, integer=False, required=True, default=None):
        path = f"{prefix}.{key}" if prefix else key
        if key not in obj or obj[key] is None:
            if required:
                self.fail(path, f"missing required field {key!r}")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            if isinstance(v, str):
                try:
                    v = float(v)
                except ValueError:
                    self.fail(path, f"{key} must be a number")
            else:
                self.fail(path, f"{key} must be a number")
        if not math.isfinite(v):
            self.fail(path, f"{key} must be finite")
        if integer:
            if float(v) != int(v):
                self.fail(path, f"{key} must be an integer")
            v = int(v)
        else:
            v = float(v)
        if lo is not None and (v < lo or (lo_open and v == lo)):
            self.fail(path, f"{key} must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and (v > hi or (hi_open and v == hi)):
            self.fail(path, f"{key} must be {'<' if hi_open else '<='} {hi}")
        return v

    def choice(self, obj, key, prefix, options, required=True, default=None):
        path = f"{prefix}.{key}" if prefix else key
        if key not in obj or obj[key] is None:
            if required:
                self.fail(path, f"missing required field {key!r}")
            return default
        v = obj[key]
        if v not in options:
            self.fail(path, f"{key} must be one of {list(options)}")
        return v

    def numlist(self, obj, key, prefix):
        path = f"{prefix}.{key}"
        v = self.need(obj, key, prefix)
        if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            self.fail(path, f"{key} must be a non-empty list of numbers")
        return [float(x) for x in v]


def _no_extra(c: _Checker, raw: dict, out: dict, prefix: str, label: str):
    for k in raw:
        if k not in out:
            c.fail(f"{prefix}.{k}", f"{k} does not apply to {label}")


def _function(c: _Checker, f) -> dict:
    c.keys(f, _FUNCTION_KEYS, "function")
    tag = c.choice(f, "tag", "function", TAGS)
    out = {"tag": tag}
    if tag == "monomial":
        out["t"] = c.num(f, "t", "function", lo=1, integer=True)
        out["nu"] = c.num(f, "nu", "function", lo=0, hi=1, lo_open=True, hi_open=True)
    elif tag == "exp":
        out["beta"] = c.num(f, "beta", "function", lo=0, lo_open=True)
        nu = c.num(f, "nu", "function", lo=0, lo_open=True)
        if nu > math.exp(out["beta"] / 2) / 2:
            c.fail("function.nu", "nu must not exceed e^(beta/2)/2 for the exponential model")
        out["nu"] = nu
    elif tag == "inverse":
        out["kappa"] = c.num(f, "kappa", "function", lo=1, lo_open=True)
        out["nu"] = c.num(f, "nu", "function", lo=0, lo_open=True)
    else:
        out["xi"] = c.num(f, "xi", "function", lo=0, hi=1, lo_open=True, hi_open=True)
        out["nu"] = c.num(f, "nu", "function", lo=0, hi=1, lo_open=True, hi_open=True)
        y = c.num(f, "y", "function", lo=-1, hi=1, required=False)
        if y is not None:
            out["y"] = y
    for k in f:
        if k not in out and k != "tag":
            c.fail(f"function.{k}", f"{k} does not apply to tag {tag!r}")
    return out


def _matrix(c: _Checker, m, prefix="matrix", base=".") -> dict:
    c.keys(m, _MATRIX_KEYS, prefix)
    kind = c.choice(m, "kind", prefix, ("file", "random_hermitian", "diagonal", "random_spectrum"))
    out = {"kind": kind}
    if kind == "file":
        p = c.need(m, "path", prefix)
        if not isinstance(p, str):
            c.fail(f"{prefix}.path", "path must be a string")
        if not (Path(base) / p).is_file():
            c.fail(f"{prefix}.path", f"file not found: {p}")
        out["path"] = p
    elif kind == "diagonal":
        out["values"] = c.numlist(m, "values", prefix)
    elif kind == "random_hermitian":
        out["dim"] = c.num(m, "dim", prefix, lo=1, hi=1024, integer=True)
        out["norm"] = c.num(m, "norm", prefix, lo=0, lo_open=True, default=1.0, required=False)
        out["seed"] = c.num(m, "seed", prefix, lo=0, integer=True, default=0, required=False)
    else:
        out["dim"] = c.num(m, "dim", prefix, lo=1, hi=1024, integer=True)
        out["kappa"] = c.num(m, "kappa", prefix, lo=1, lo_open=True)
        out["seed"] = c.num(m, "seed", prefix, lo=0, integer=True, default=0, required=False)
    _no_extra(c, m, out, prefix, f"kind {kind!r}")
    return out


def _vector(c: _Checker, v, prefix) -> dict:
    c.keys(v, _VECTOR_KEYS, prefix)
    kind = c.choice(v, "kind", prefix, ("random", "basis", "values", "ground_mix"))
    out = {"kind": kind}
    if kind == "random":
        out["seed"] = c.num(v, "seed", prefix, lo=0, integer=True, default=0, required=False)
    elif kind == "basis":
        out["index"] = c.num(v, "index", prefix, lo=0, integer=True)
    elif kind == "values":
        out["values"] = c.numlist(v, "values", prefix)
    else:
        out["overlap"] = c.num(v, "overlap", prefix, lo=0, hi=1, lo_open=True)
        out["seed"] = c.num(v, "seed", prefix, lo=0, integer=True, default=0, required=False)
    _no_extra(c, v, out, prefix, f"kind {kind!r}")
    return out


def _observable(c: _Checker, o, base) -> dict:
    c.keys(o, _OBS_KEYS, "observable")
    kind = c.choice(o, "kind", "observable", ("identity", "diagonal", "random_hermitian", "file"))
    out = {"kind": kind}
    if kind == "diagonal":
        out["values"] = c.numlist(o, "values", "observable")
    elif kind == "random_hermitian":
        out["seed"] = c.num(o, "seed", "observable", lo=0, integer=True, default=0, required=False)
        out["norm"] = c.num(o, "norm", "observable", lo=0, lo_open=True, default=1.0, required=False)
    elif kind == "file":
        p = c.need(o, "path", "observable")
        if not isinstance(p, str) or not (Path(base) / p).is_file():
            c.fail("observable.path", f"file not found: {p}")
        out["path"] = p
    _no_extra(c, o, out, "observable", f"kind {kind!r}")
    return out


def _noise(c: _Checker, n) -> dict:
    c.keys(n, _NOISE_KEYS, "noise")
    kind = c.choice(n, "kind", "noise", ("none", "depolarizing", "coherent"))
    out = {"kind": kind}
    if kind == "depolarizing":
        out["p"] = c.num(n, "p", "noise", lo=0, hi=1)
    elif kind == "coherent":
        out["eps_be"] = c.num(n, "eps_be", "noise", lo=0)
    _no_extra(c, n, out, "noise", f"kind {kind!r}")
    return out


def _eps_delta(c, raw, out, prefix=""):
    out["epsilon"] = c.num(raw, "epsilon", prefix, lo=0, lo_open=True)
    out["delta"] = c.num(raw, "delta", prefix, lo=0, hi=1, lo_open=True, hi_open=True)


def _usecase(c: _Checker, raw: dict, out: dict, base: str):
    u = c.need(raw, "usecase", "")
    c.keys(u, _USECASE_KEYS, "usecase")
    name = c.choice(u, "name", "usecase", USECASES)
    uc = {"name": name}
    uc["delta"] = c.num(u, "delta", "usecase", lo=0, hi=1, lo_open=True, hi_open=True)
    if name == "mcmc":
        uc["beta"] = c.num(u, "beta", "usecase", lo=0)
        uc["eps_r"] = c.num(u, "eps_r", "usecase", lo=0, hi=1, lo_open=True, hi_open=True)
        ising = c.need(u, "ising", "usecase")
        c.keys(ising, _ISING_KEYS, "usecase.ising")
        n = c.num(ising, "n", "usecase.ising", lo=1, hi=12, integer=True)
        iz = {"n": n}
        if "J" in ising:
            J = ising["J"]
            if not (isinstance(J, list) and len(J) == n and all(isinstance(r, list) and len(r) == n for r in J)):
                c.fail("usecase.ising.J", "J must be an n x n list of lists")
            iz["J"] = [[float(x) for x in r] for r in J]
            iz["h"] = c.numlist(ising, "h", "usecase.ising") if "h" in ising else [0.0] * n
            if len(iz["h"]) != n:
                c.fail("usecase.ising.h", "h must have n entries")
        else:
            iz["coupling"] = c.num(ising, "coupling", "usecase.ising", default=1.0, required=False)
            iz["field"] = c.num(ising, "field", "usecase.ising", default=0.0, required=False)
        uc["ising"] = iz
        y0 = c.num(u, "y_init", "usecase", lo=0, hi=2**n - 1, integer=True, required=False)
        if y0 is not None:
            uc["y_init"] = y0
        uc["n_draws"] = c.num(u, "n_draws", "usecase", lo=1, integer=True, default=16, required=False)
    elif name == "qite":
        uc["beta"] = c.num(u, "beta", "usecase", lo=0, lo_open=True)
        uc["eps_r"] = c.num(u, "eps_r", "usecase", lo=0, hi=1, lo_open=True, hi_open=True)
    elif name in ("qlss_amplitude", "qlss_expectation"):
        uc["epsilon"] = c.num(u, "epsilon", "usecase", lo=0, lo_open=True)
        k = c.num(u, "kappa", "usecase", lo=1, lo_open=True, required=False)
        if k is not None:
            uc["kappa"] = k
    else:
        uc["eta"] = c.num(u, "eta", "usecase", lo=0, hi=1, lo_open=True)
        uc["xi"] = c.num(u, "xi", "usecase", lo=0, hi=1, lo_open=True, hi_open=True)
    for k in u:
        if k not in uc:
            c.fail(f"usecase.{k}", f"{k} does not apply to use case {name!r}")
    out["usecase"] = uc
    if name != "mcmc":
        out["matrix"] = _matrix(c, c.need(raw, "matrix", ""), base=base)
    if name in ("qlss_amplitude", "qlss_expectation"):
        out["b"] = _vector(c, c.need(raw, "b", ""), "b")
    if name == "qlss_amplitude":
        out["phi"] = _vector(c, c.need(raw, "phi", ""), "phi")
    if name == "qlss_expectation":
        out["observable"] = _observable(c, raw.get("observable", {"kind": "identity"}), base)
    if name == "gsee":
        out["psi"] = _vector(c, c.need(raw, "psi", ""), "psi")


def validate_dict(raw, lines: dict | None = None, base_dir: str = ".") -> ExperimentConfig:
    """Validates an already-parsed config mapping."""
    c = _Checker(lines or {})
    if not isinstance(raw, dict):
        raise ParseError("config must be a mapping")
    c.keys(raw, _TOP_KEYS, "")
    out: dict = {"command": c.choice(raw, "command", "", COMMANDS)}
    out["seed"] = c.num(raw, "seed", "", lo=0, hi=2**63 - 1, integer=True, default=0, required=False)
    cmd = out["command"]
    used = {"command", "seed"}
    if cmd in ("approximate", "histogram", "estimate"):
        out["function"] = _function(c, c.need(raw, "function", ""))
        used.add("function")
    if cmd == "histogram":
        out["shots"] = c.num(raw, "shots", "", lo=1, hi=10**9, integer=True)
        used.add("shots")
    if cmd == "estimate":
        out["matrix"] = _matrix(c, c.need(raw, "matrix", ""), base=base_dir)
        alg = c.choice(raw, "algorithm", "", (1, 2), required=False, default=1)
        out["algorithm"] = alg
        _eps_delta(c, raw, out)
        out["noise"] = _noise(c, raw.get("noise") or {"kind": "none"})
        out["mode"] = c.choice(raw, "mode", "", ("shot", "mean"), required=False, default="shot")
        out["backend"] = c.choice(raw, "backend", "", ("spectral", "circuit"), required=False, default="spectral")
        rs = raw.get("record_shots", False)
        if not isinstance(rs, bool):
            c.fail("record_shots", "record_shots must be true or false")
        out["record_shots"] = rs
        used |= {"matrix", "algorithm", "epsilon", "delta", "noise", "mode", "backend", "record_shots"}
        if out["function"]["tag"] == "step":
            out["psi"] = _vector(c, c.need(raw, "psi", ""), "psi")
            used.add("psi")
            if alg != 1:
                c.fail("algorithm", "the step function is estimated with algorithm 1")
        elif alg == 1:
            out["phi"] = _vector(c, c.need(raw, "phi", ""), "phi")
            out["psi"] = _vector(c, c.need(raw, "psi", ""), "psi")
            used |= {"phi", "psi"}
        else:
            rho = raw.get("rho") or {"kind": "pure"}
            c.keys(rho, {"kind"}, "rho")
            out["rho"] = {"kind": c.choice(rho, "kind", "rho", ("pure", "maximally_mixed"))}
            if out["rho"]["kind"] == "pure":
                out["psi"] = _vector(c, c.need(raw, "psi", ""), "psi")
                used.add("psi")
            out["observable"] = _observable(c, c.need(raw, "observable", ""), base_dir)
            used |= {"rho", "observable"}
    if cmd == "usecase":
        _usecase(c, raw, out, base_dir)
        used |= set(out)
    if cmd == "resources":
        fem = raw.get("femoco", False)
        if not isinstance(fem, bool):
            c.fail("femoco", "femoco must be true or false")
        out["femoco"] = fem
        used.add("femoco")
        if fem:
            out["nu_rule"] = c.choice(raw, "nu_rule", "", ("eta_sq/4", "eta/4"), required=False, default="eta_sq/4")
            used.add("nu_rule")
        else:
            out["function"] = _function(c, c.need(raw, "function", ""))
            used.add("function")
            if "epsilon" in raw or "delta" in raw:
                _eps_delta(c, raw, out)
                used |= {"epsilon", "delta"}
            tpq = c.num(raw, "toffoli_per_query", "", lo=0, lo_open=True, required=False)
            if tpq is not None:
                out["toffoli_per_query"] = tpq
            used.add("toffoli_per_query")
    for k in raw:
        if k not in used:
            c.fail(k, f"{k} does not apply to command {cmd!r}")
    return ExperimentConfig(data=out, base_dir=base_dir)


def validate_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parses YAML (or JSON) text and validates it.

    Raises:
        ParseError: With the field path and line number of the problem.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"malformed YAML: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None) from exc
    if raw is None:
        raise ParseError("empty config")
    return validate_dict(raw, _line_map(text), base_dir)


def load_config(path) -> ExperimentConfig:
    """Reads and validates a config file; file paths inside resolve relative to it."""
    p = Path(path)
    return validate_config(p.read_text(), base_dir=str(p.parent))
