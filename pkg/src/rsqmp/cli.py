"""Command-line experiment runner.

Usage: rsqmp COMMAND [--config PATH] [shortcut flags] [--seed N] [--workers N]
[--out DIR] [--check]

Outputs in --out: report.json (deterministic for a fixed config and seed),
metadata.json (timestamp, worker count, versions), histogram.csv and, when
requested, shots.csv.

Exit codes: 0 ok, 2 invalid config or input, 3 numeric failure, 4 failed
--check, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .applications import (
    GseeProblem,
    filter_value,
    gsee,
    ising_ring,
    mcmc_partition,
    new_ising,
    partition_function,
    qite_partition,
    qlss_amplitude,
    qlss_expectation,
)
from .chebyshev import (
    Y_STAR,
    ChebyshevModel,
    degree_distribution,
    exp_model,
    expected_degree,
    grid_sup_error,
    inverse_model,
    monomial_model,
    query_depths,
    step_model,
    step_model_at,
)
from .config import COMMANDS, ExperimentConfig, canonical_json, load_config, validate_dict
from .errors import ConfigInvalid, NumericFailure, ParseError, ValidationError
from .estimator import (
    estimate_amplitude,
    estimate_expectation,
    estimate_step_amplitude,
    exact_amplitude,
    exact_expectation,
)
from .hadamard import NoiseModel
from .operators import load_matrix, new_hermitian, random_hermitian, random_state, random_unitary
from .resources import FEMOCO, femoco_report, resource_estimate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK, EXIT_IO = 0, 2, 3, 4, 5
SHOT_COLUMNS = ("alpha", "part", "j", "l", "b", "omega", "queries")


# ----------------------------------------------------------- materializing


def build_model(f: dict) -> ChebyshevModel:
    tag = f["tag"]
    if tag == "monomial":
        return monomial_model(f["t"], f["nu"])
    if tag == "exp":
        return exp_model(f["beta"], f["nu"])
    if tag == "inverse":
        return inverse_model(f["kappa"], f["nu"])
    return step_model(f["xi"], f["nu"], Y_STAR, y_range=_step_range(f))


def _step_range(f: dict):
    y = f.get("y", Y_STAR)
    return None if y == Y_STAR else (min(y, Y_STAR), max(y, Y_STAR))


def _rng(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def build_matrix(m: dict, base: str) -> np.ndarray:
    kind = m["kind"]
    if kind == "file":
        return load_matrix(Path(base) / m["path"])
    if kind == "diagonal":
        return np.diag(np.asarray(m["values"], dtype=complex))
    rng = _rng(m["seed"], 11)
    if kind == "random_hermitian":
        return random_hermitian(m["dim"], rng, m["norm"])
    D, kappa = m["dim"], m["kappa"]
    lam = rng.uniform(1 / kappa, 1, D)
    lam[0] = 1 / kappa
    if D > 1:
        lam[1] = 1.0
    lam *= rng.choice([-1.0, 1.0], D)
    U = random_unitary(D, rng)
    return (U * lam[None, :]) @ U.conj().T


def build_vector(v: dict, dim: int, H=None) -> np.ndarray:
    kind = v["kind"]
    if kind == "random":
        return random_state(dim, _rng(v["seed"], 13))
    if kind == "basis":
        if v["index"] >= dim:
            raise ValidationError(f"basis index {v['index']} out of range for dimension {dim}")
        e = np.zeros(dim, dtype=complex)
        e[v["index"]] = 1
        return e
    if kind == "values":
        x = np.asarray(v["values"], dtype=complex)
        if x.size != dim:
            raise ValidationError(f"vector has {x.size} entries, expected {dim}")
        n = np.linalg.norm(x)
        if n == 0:
            raise ValidationError("vector must be nonzero")
        return x / n
    if H is None:
        raise ValidationError("ground_mix vectors need a matrix")
    op = new_hermitian(H)
    g = op.eigenvectors[:, 0]
    r = random_state(dim, _rng(v["seed"], 17))
    r = r - g * np.vdot(g, r)
    r /= np.linalg.norm(r)
    return math.sqrt(v["overlap"]) * g + math.sqrt(1 - v["overlap"]) * r


def build_observable(o: dict, dim: int, base: str) -> np.ndarray:
    kind = o["kind"]
    if kind == "identity":
        return np.eye(dim, dtype=complex)
    if kind == "diagonal":
        if len(o["values"]) != dim:
            raise ValidationError(f"observable has {len(o['values'])} entries, expected {dim}")
        return np.diag(np.asarray(o["values"], dtype=complex))
    if kind == "file":
        return load_matrix(Path(base) / o["path"])
    return random_hermitian(dim, _rng(o["seed"], 19), o["norm"])


def build_noise(n: dict) -> NoiseModel:
    return NoiseModel(n["kind"], p=n.get("p", 0.0), eps_be=n.get("eps_be", 0.0))


def _model_summary(model: ChebyshevModel) -> dict:
    return {
        "tag": model.tag,
        "params": model.params,
        "nu": model.nu,
        "k": int(model.k),
        "max_degree": model.max_degree,
        "one_norm": model.one_norm,
        "second_one_norm": model.second_one_norm,
        "constant": model.constant,
        "expected_degree": expected_degree(model),
        "meta": json.loads(json.dumps(model.meta, default=float)),
    }


def _cjson(z) -> dict | float:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


# ---------------------------------------------------------------- commands


def cmd_approximate(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict]:
    model = build_model(cfg.data["function"])
    err = grid_sup_error(model)
    report = {
        "model": model.to_json(),
        "summary": _model_summary(model),
        "grid_sup_error": err,
        "grid_points": 10_000,
    }
    return report, {"passed": err <= model.nu, "histogram": None, "shots": None}


def cmd_histogram(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict]:
    model = build_model(cfg.data["function"])
    dist = degree_distribution(model)
    depths, probs = [], []
    for part, (d, _, p) in dist.parts.items():
        depths.append(query_depths(part, d))
        probs.append(p * dist.part_weights[part])
    depths = np.concatenate(depths)
    probs = np.concatenate(probs)
    probs = probs / probs.sum()
    N = cfg.data["shots"]
    counts = _rng(cfg.data["seed"], 23).multinomial(N, probs)
    hist: dict[int, int] = {}
    for d, c in zip(depths, counts):
        if c:
            hist[int(d)] = hist.get(int(d), 0) + int(c)
    mean = float(np.sum(depths * counts) / N)
    mu = float(np.sum(depths * probs))
    sd = float(math.sqrt(np.sum(probs * (depths - mu) ** 2)))
    z = (mean - mu) / (sd / math.sqrt(N)) if sd > 0 else 0.0
    report = {
        "summary": _model_summary(model),
        "shots": N,
        "mean_degree": mean,
        "expected_degree": mu,
        "degree_std": sd,
        "z_score": z,
        "within_3_sigma": abs(z) <= 3,
        "histogram": {str(k): v for k, v in sorted(hist.items())},
    }
    return report, {"passed": abs(z) <= 3, "histogram": hist, "shots": None}


def cmd_estimate(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict]:
    d = cfg.data
    model = build_model(d["function"])
    A = build_matrix(d["matrix"], cfg.base_dir)
    dim = A.shape[0]
    noise = build_noise(d["noise"])
    seed = d["seed"]
    if model.tag == "step":
        psi = build_vector(d["psi"], dim, A)
        y = d["function"].get("y", Y_STAR)
        reps = estimate_step_amplitude(
            model, A, psi, noise=noise, seed=seed, y_targets=[y],
            epsilon=d["epsilon"], delta=d["delta"], workers=workers, mode=d["mode"], backend=d["backend"],
        )
        rep = reps[y]
        exact = exact_amplitude(step_model_at(model, y), A, psi, psi).real
        err = abs(rep.estimate - exact)
        extra = {"exact": exact, "filter_exact": filter_value(new_hermitian(A), psi, y)}
    elif d["algorithm"] == 1:
        phi = build_vector(d["phi"], dim, A)
        psi = build_vector(d["psi"], dim, A)
        rep = estimate_amplitude(
            model, A, phi, psi, noise=noise, mode=d["mode"], seed=seed, epsilon=d["epsilon"],
            delta=d["delta"], workers=workers, backend=d["backend"], record_shots=d["record_shots"],
        )
        exact = exact_amplitude(model, A, phi, psi)
        err = abs(rep.estimate - exact)
        extra = {"exact": _cjson(exact)}
    else:
        if d["rho"]["kind"] == "pure":
            psi = build_vector(d["psi"], dim, A)
            rho = np.outer(psi, psi.conj())
        else:
            rho = np.eye(dim, dtype=complex) / dim
        O = build_observable(d["observable"], dim, cfg.base_dir)
        rep = estimate_expectation(
            model, A, rho, O, noise=noise, mode=d["mode"], seed=seed, epsilon=d["epsilon"],
            delta=d["delta"], workers=workers, backend=d["backend"], record_shots=d["record_shots"],
        )
        exact = exact_expectation(model, A, rho, O)
        err = abs(rep.estimate - exact)
        extra = {"exact": exact}
    body = rep.to_json()
    shots = body["extras"].pop("shots", None)
    report = {"summary": _model_summary(model), "result": body, "abs_error": err, **extra}
    report["within_epsilon"] = err <= d["epsilon"]
    return report, {"passed": err <= d["epsilon"], "histogram": rep.degree_histogram, "shots": shots}


def cmd_usecase(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict]:
    d = cfg.data
    u = d["usecase"]
    name = u["name"]
    seed = d["seed"]
    if name == "mcmc":
        iz = u["ising"]
        ising = new_ising(iz["n"], iz["J"], iz["h"]) if "J" in iz else ising_ring(iz["n"], iz["coupling"], iz["field"])
        res = mcmc_partition(
            ising, u["beta"], u.get("y_init"), u["eps_r"], u["delta"], seed, n_draws=u["n_draws"], workers=workers
        )
        exact = partition_function(ising, u["beta"])
        err = abs(res.value - exact) / exact
        tol = u["eps_r"]
        extra = {"exact": exact, "relative_error": err}
    else:
        A = build_matrix(d["matrix"], cfg.base_dir)
        dim = A.shape[0]
        if name == "qite":
            res = qite_partition(A, u["beta"], u["eps_r"], u["delta"], seed, workers=workers)
            exact = float(np.sum(np.exp(-u["beta"] * np.linalg.eigvalsh(A))))
            err = abs(res.value - exact) / exact
            tol = u["eps_r"]
            extra = {"exact": exact, "relative_error": err}
        elif name == "qlss_amplitude":
            b = build_vector(d["b"], dim, A)
            phi = build_vector(d["phi"], dim, A)
            res = qlss_amplitude(A, b, phi, u["epsilon"], u["delta"], seed, kappa=u.get("kappa"), workers=workers)
            exact = complex(np.vdot(phi, np.linalg.solve(A, b)))
            err = abs(res.value - exact)
            tol = u["epsilon"]
            extra = {"exact": _cjson(exact), "abs_error": err}
        elif name == "qlss_expectation":
            b = build_vector(d["b"], dim, A)
            O = build_observable(d["observable"], dim, cfg.base_dir)
            res = qlss_expectation(A, b, O, u["epsilon"], u["delta"], seed, kappa=u.get("kappa"), workers=workers)
            x = np.linalg.solve(A, b)
            exact = float(np.vdot(x, O @ x).real)
            err = abs(res.value - exact)
            tol = u["epsilon"]
            extra = {"exact": exact, "abs_error": err}
        else:
            psi = build_vector(d["psi"], dim, A)
            res = gsee(GseeProblem.new(A, psi, u["eta"], u["xi"]), u["delta"], seed, workers=workers)
            exact = float(np.linalg.eigvalsh(A)[0])
            err = abs(res.value - exact)
            tol = u["xi"]
            extra = {"exact": exact, "abs_error": err}
    report = {"usecase": name, **res.to_json(), **extra, "within_tolerance": err <= tol}
    return report, {"passed": err <= tol, "histogram": None, "shots": None}


def cmd_resources(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict]:
    d = cfg.data
    if d["femoco"]:
        rep = femoco_report(d["nu_rule"])
        comp = rep["comparison"]
        ratio = rep["computed"]["ratio_k_over_expected"]
        checks = {
            "k_same_order": abs(comp["k"]["log10_ratio"]) < 1,
            "expected_degree_same_order": abs(comp["expected_degree"]["log10_ratio"]) < 1,
            "ratio_in_range": 15 <= ratio <= 45,
        }
        rep["checks"] = checks
        rep["configuration"] = {"xi": FEMOCO["xi"], "eta_sq": FEMOCO["eta_sq"]}
        return rep, {"passed": all(checks.values()), "histogram": None, "shots": None}
    f = d["function"]
    params = {k: v for k, v in f.items() if k not in ("tag", "nu")}
    rep = resource_estimate(f["tag"], params, f["nu"], d.get("epsilon"), d.get("delta"), d.get("toffoli_per_query"))
    return rep, {"passed": True, "histogram": None, "shots": None}


HANDLERS = {
    "approximate": cmd_approximate,
    "estimate": cmd_estimate,
    "usecase": cmd_usecase,
    "histogram": cmd_histogram,
    "resources": cmd_resources,
}


def run(cfg: ExperimentConfig, out_dir, workers: int = 1, check: bool = False) -> int:
    """Executes a validated config and writes its artifacts.

    Returns:
        Process exit status.
    """
    report, aux = HANDLERS[cfg.command](cfg, workers)
    doc = {"command": cfg.command, "config": cfg.data, "report": report, "version": __version__}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=1, default=_default) + "\n")
    meta = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "workers": workers,
        "argv": sys.argv[1:],
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config_canonical": canonical_json(cfg.data),
    }
    (out / "metadata.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    if aux.get("histogram") is not None:
        with open(out / "histogram.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["degree", "count"])
            for k in sorted(aux["histogram"]):
                w.writerow([k, aux["histogram"][k]])
    if aux.get("shots") is not None:
        with open(out / "shots.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SHOT_COLUMNS)
            w.writerows(aux["shots"])
    if check and not aux["passed"]:
        return EXIT_CHECK
    return EXIT_OK


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"not serializable: {type(o)}")


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsqmp", description="Randomized Chebyshev matrix-function experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="rsqmp-out", help="output directory")
    p.add_argument("--check", action="store_true", help="exit 4 if the run's acceptance check fails")
    g = p.add_argument_group("shortcuts")
    g.add_argument("--function", choices=("monomial", "exp", "inverse", "step"))
    for name in ("t", "beta", "kappa", "xi", "y", "nu"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--shots", type=int)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--algorithm", type=int, choices=(1, 2))
    g.add_argument("--mode", choices=("shot", "mean"))
    g.add_argument("--backend", choices=("spectral", "circuit"))
    g.add_argument("--femoco", action="store_true")
    g.add_argument("--nu-rule", dest="nu_rule", choices=("eta_sq/4", "eta/4"))
    return p


def _merge(args) -> tuple[dict, dict, str]:
    import yaml

    from .config import _line_map

    raw, lines, base = {}, {}, "."
    if args.config:
        text = Path(args.config).read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ParseError(f"malformed YAML: {exc}", line=mark.line + 1 if mark else None) from exc
        if not isinstance(raw, dict):
            raise ParseError("config must be a mapping")
        lines = _line_map(text)
        base = str(Path(args.config).parent)
    if raw.get("command", args.command) != args.command:
        raise ParseError(f"config command {raw['command']!r} differs from {args.command!r}", field="command",
                         line=lines.get("command"))
    raw["command"] = args.command
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.function is not None:
        f = dict(raw.get("function") or {})
        f["tag"] = args.function
        raw["function"] = f
    for name in ("t", "beta", "kappa", "xi", "y", "nu"):
        v = getattr(args, name)
        if v is not None:
            f = dict(raw.get("function") or {})
            f[name] = int(v) if name == "t" and float(v).is_integer() else v
            raw["function"] = f
    for name in ("shots", "epsilon", "delta", "algorithm", "mode", "backend", "nu_rule"):
        v = getattr(args, name)
        if v is not None:
            raw[name] = v
    if args.femoco:
        raw["femoco"] = True
    return raw, lines, base


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        raw, lines, base = _merge(args)
        cfg = validate_dict(raw, lines, base)
        status = run(cfg, args.out, args.workers, args.check)
    except (ConfigInvalid, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{args.command}: wrote {Path(args.out) / 'report.json'}" + (" (check failed)" if status == EXIT_CHECK else ""))
    return status


if __name__ == "__main__":
    sys.exit(main())
