"""Command line runner: ``cocyclelab <experiment> [--config PATH] [--seed S] [--workers N] [--out PATH]``.

Every experiment reads one JSON config (unknown keys are rejected), writes a
CSV with a ``#`` provenance header and, where there is structured output, a
JSON report next to it.  Exit codes: 0 success, 1 internal error, 2
precondition or config error (with an error JSON on stderr).
"""

import argparse
import copy
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import _io, _parallel
from .cocycle import Cocycle, diagonal_cocycle, entry_perturbed, rotation_perturbed
from .errors import CocycleLabError, ConfigInvalid, ExperimentFailed

EXPERIMENTS = ("le", "ldt", "irred", "prison", "ap", "bridge", "transfer", "pressure", "ids",
               "thouless", "toy")
COMMON = {"experiment": None, "seed": 0, "workers": 1, "out": None}
DIAG_28 = {"diagonal": [2.0, 8.0], "probs": [0.5, 0.5]}
TOY_05 = {"toy": [2.0, 8.0], "probs": [0.5, 0.5], "E": 0.5}
FREE = {"free": True}

DEFAULTS = {
    "le": {"cocycle": DIAG_28, "n": 1000, "samples": 2000},
    "ldt": {"cocycle": DIAG_28, "n_list": [50, 100, 200, 400], "eps": 0.2, "samples": 10000,
            "reference": "asymptotic", "reference_n": None},
    "irred": {"cocycle": dict(DIAG_28, rotate=1e-3), "reference": DIAG_28, "with_N": False,
              "n_max": 512, "dir_grid_size": 256, "samples": 1000},
    "prison": {"cocycle": dict(DIAG_28, rotate=1e-4), "reference": DIAG_28, "samples": 10000},
    "ap": {"cocycle": TOY_05, "n": 100, "eps": None, "kappa": None},
    "bridge": {"cocycle": TOY_05, "n0": 20, "n_target": 200, "samples": 10000, "tail_eps": 0.05},
    "transfer": {"cocycle": TOY_05, "G": 512},
    "pressure": {"cocycle": TOY_05, "t_list": [-0.2, -0.1, 0.0, 0.1, 0.2], "G": 512},
    "ids": {"ensemble": FREE, "energies": {"start": -2.5, "stop": 2.5, "num": 101}, "n": 2000,
            "samples": 4},
    "thouless": {"ensemble": FREE, "energies": {"start": -2.5, "stop": 2.5, "num": 501},
                 "eval_energies": [0.0, 3.0], "n": 2000, "samples": 4, "n_le": 2000,
                 "le_samples": 200},
    "toy": {"mu_support": [2.0, 8.0], "mu_probs": [0.5, 0.5], "window": [-0.5, 0.5], "n": 1000,
            "samples": 100, "levels": 6, "n_le": 1000},
}

_COCYCLE_KEYS = {"mats", "probs", "diagonal", "toy", "E", "rotate", "rotate_index", "perturb",
                 "perturb_index", "perturb_entry"}
_ENSEMBLE_KEYS = {"free", "v_support", "v_probs", "w_support", "w_probs", "toy", "probs"}


# ---------------------------------------------------------------------------
# config


def resolve_config(name, raw=None, overrides=None):
    """Defaults merged with ``raw`` and ``overrides``; rejects unknown keys."""
    if name not in DEFAULTS:
        raise ConfigInvalid(f"unknown experiment {name!r}")
    cfg = dict(COMMON, **copy.deepcopy(DEFAULTS[name]))
    cfg["experiment"] = name
    for src in (raw or {}, overrides or {}):
        unknown = set(src) - set(cfg)
        if unknown:
            raise ConfigInvalid(f"unknown config fields for {name}: {sorted(unknown)}")
        if src.get("experiment", name) != name:
            raise ConfigInvalid(f"config is for {src['experiment']!r}, not {name!r}")
        cfg.update({k: v for k, v in src.items() if v is not None or k in ("out",)})
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigInvalid("seed must be a non-negative integer")
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigInvalid("workers must be a positive integer")
    return cfg


def build_cocycle(desc):
    if not isinstance(desc, dict):
        raise ConfigInvalid("cocycle description must be an object")
    unknown = set(desc) - _COCYCLE_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown cocycle fields: {sorted(unknown)}")
    kinds = [k for k in ("mats", "diagonal", "toy") if k in desc]
    if len(kinds) != 1:
        raise ConfigInvalid("cocycle needs exactly one of mats, diagonal, toy")
    kind = kinds[0]
    k = len(desc[kind])
    probs = desc.get("probs", [1.0 / k] * k)
    if kind == "mats":
        C = Cocycle(np.asarray(desc["mats"], dtype=float).reshape(-1, 2, 2), probs)
    elif kind == "diagonal":
        C = diagonal_cocycle(desc["diagonal"], probs)
    else:
        from .jacobi import ToyEnsemble
        C = ToyEnsemble(tuple(desc["toy"]), tuple(probs)).energy_cocycle(float(desc.get("E", 0.0)))
    if desc.get("rotate"):
        C = rotation_perturbed(C, float(desc["rotate"]), int(desc.get("rotate_index", 0)))
    if desc.get("perturb"):
        entry = tuple(desc.get("perturb_entry", (1, 0)))
        C = entry_perturbed(C, float(desc["perturb"]), int(desc.get("perturb_index", 0)), entry)
    return C


def build_ensemble(desc):
    from .jacobi import JacobiEnsemble, ToyEnsemble
    unknown = set(desc) - _ENSEMBLE_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown ensemble fields: {sorted(unknown)}")
    if desc.get("free"):
        return JacobiEnsemble.free()
    if "toy" in desc:
        return ToyEnsemble(tuple(desc["toy"]), tuple(desc.get("probs", [1.0 / len(desc["toy"])]
                                                               * len(desc["toy"]))))
    try:
        return JacobiEnsemble(tuple(desc["v_support"]), tuple(desc["v_probs"]),
                              tuple(desc["w_support"]), tuple(desc["w_probs"]))
    except KeyError as exc:
        raise ConfigInvalid(f"ensemble missing field {exc}") from None


def _energies(desc):
    if isinstance(desc, dict):
        return np.linspace(float(desc["start"]), float(desc["stop"]), int(desc["num"]))
    return np.asarray(desc, dtype=float)


# ---------------------------------------------------------------------------
# experiments; each returns (columns, rows, report or None)


def _exp_le(cfg):
    from .lyapunov import mc_le
    A = build_cocycle(cfg["cocycle"])
    est = mc_le(A, cfg["n"], cfg["samples"], cfg["seed"])
    cols = ["n", "samples", "seed", "mean", "std_err", "bottom", "bottom_std_err"]
    return cols, [[est.scale_n, est.samples, cfg["seed"], est.mean, est.std_err,
                   est.top_bottom[1], est.bottom_std_err]], None


def _exp_ldt(cfg):
    from .lyapunov import LdtCurve, ldt_curve
    A = build_cocycle(cfg["cocycle"])
    eps = cfg["eps"]
    if isinstance(eps, dict):
        eps = ("power", float(eps["power"]))
    curve = ldt_curve(A, cfg["n_list"], eps, cfg["samples"], cfg["seed"], cfg["reference"],
                      cfg["reference_n"])
    report = {"a": curve.a, "b": curve.b, "c": curve.c, "fit_status": curve.fit_status,
              "reference_L": curve.reference_L}
    return list(LdtCurve.COLUMNS), curve.table(), report


def _exp_irred(cfg):
    from . import irreducibility as ir
    A = build_cocycle(cfg["reference"])
    B = build_cocycle(cfg["cocycle"])
    diag, sigma_H = ir.reference_from(A)
    rep = ir.irreducibility_report(B, sigma_H, with_N=cfg["with_N"], n_max=cfg["n_max"],
                                   dir_grid_size=cfg["dir_grid_size"], samples=cfg["samples"],
                                   seed=cfg["seed"])
    ledger = ir.constant_ledger(A, diag, rep.rho, B=B)
    cols = ["rho_minus", "rho_plus", "rho", "N_B", "N_Binv", "diag_dist_upper"]
    row = [rep.rho_minus, rep.rho_plus, rep.rho, rep.N_B, rep.N_Binv, rep.diag_dist_upper]
    return cols, [row], {"irreducibility": rep.to_dict(), "ledger": ledger.to_dict()}


def _exp_prison(cfg):
    from . import irreducibility as ir
    from .prisonbreak import prison_break_experiment
    A = build_cocycle(cfg["reference"])
    B = build_cocycle(cfg["cocycle"])
    diag, sigma_H = ir.reference_from(A)
    rho = ir.rho_measure(B, sigma_H)[2]
    ledger = ir.constant_ledger(A, diag, rho, B=B)
    rep = prison_break_experiment(A, B, ledger, sigma_H, cfg["samples"], cfg["seed"])
    cols = ["c0", "n", "horizon", "worst_return_prob", "std_err"]
    return cols, [[s[c] for c in cols] for s in rep["c0_sweep"]], rep


def _exp_ap(cfg):
    from .avalanche import ap_estimate
    from .cocycle import sample_path
    A = build_cocycle(cfg["cocycle"])
    path = sample_path(A.k, A.probs, cfg["n"], cfg["seed"])
    rep = ap_estimate(A.mats[path], cfg["eps"], cfg["kappa"])
    ok = None if rep.conditions_ok is None else all(rep.conditions_ok)
    cols = ["n", "eps", "kappa_inv", "ap_value", "exact_value", "residual", "conditions_ok"]
    return cols, [[rep.n, rep.eps, rep.kappa_inv, rep.ap_value, rep.exact_value, rep.residual,
                   ok]], rep.to_dict()


def _exp_bridge(cfg):
    from .avalanche import bridging_experiment
    B = build_cocycle(cfg["cocycle"])
    row = bridging_experiment(B, cfg["n0"], cfg["n_target"], cfg["samples"], cfg["seed"],
                              tail_eps=cfg["tail_eps"])
    cols = ["n_target", "n0", "cond_fail_fraction", "ap_vs_direct_max_abs_diff", "tail_prob_ap",
            "tail_prob_direct"]
    return cols, [[row[c] for c in cols]], row


def _exp_transfer(cfg):
    from .transfer import discretize, furstenberg_le, stationary_measure
    B = build_cocycle(cfg["cocycle"])
    nu = stationary_measure(discretize(B, cfg["G"]))
    rep = {"furstenberg_le": furstenberg_le(B, nu), "residual": nu.residual,
           "iterations": nu.iterations, "non_unique": nu.non_unique,
           "second_eigenvalue": nu.second_eigenvalue}
    return ["theta", "nu"], [[t, w] for t, w in zip(nu.grid, nu.marginal)], rep


def _exp_pressure(cfg):
    from .transfer import pressure
    B = build_cocycle(cfg["cocycle"])
    curve = pressure(B, cfg["t_list"], cfg["G"])
    rep = {"h": curve.h, "c_prime0": curve.c_prime0, "t_max": curve.t_max}
    return ["t", "lambda", "c", "c_second_diff"], curve.table(), rep


def _exp_ids(cfg):
    from .jacobi import ids_curve
    ens = build_ensemble(cfg["ensemble"])
    ids = ids_curve(ens, _energies(cfg["energies"]), cfg["n"], cfg["samples"], cfg["seed"])
    return ["E", "N", "std_err"], ids.table(), None


def _exp_thouless(cfg):
    from .jacobi import ids_curve, thouless_check
    ens = build_ensemble(cfg["ensemble"])
    ids = ids_curve(ens, _energies(cfg["energies"]), cfg["n"], cfg["samples"], cfg["seed"])
    rows = thouless_check(ids, ens, cfg["eval_energies"], cfg["n_le"], cfg["le_samples"],
                          cfg["seed"])
    cols = ["E", "thouless", "L_mc", "std_err", "residual"]
    return cols, [[r[c] for c in cols] for r in rows], None


def _exp_toy(cfg):
    from .jacobi import toy_ids_localization_diag
    rep = toy_ids_localization_diag(cfg["mu_support"], cfg["mu_probs"], tuple(cfg["window"]),
                                    cfg["n"], cfg["samples"], cfg["seed"], levels=cfg["levels"],
                                    n_le=cfg["n_le"])
    cols = ["E", "L_two_step", "L_site", "std_err"]
    return cols, [[r[c] for c in cols] for r in rep["le"]], rep


RUNNERS = {name: globals()["_exp_" + name] for name in EXPERIMENTS}


# ---------------------------------------------------------------------------
# running and writing


def run_config(cfg):
    """Run a resolved config; returns ``(columns, rows, report)``."""
    _parallel.set_workers(cfg["workers"])
    try:
        return RUNNERS[cfg["experiment"]](cfg)
    except (CocycleLabError, KeyError, TypeError) as exc:
        if isinstance(exc, CocycleLabError):
            raise
        raise ConfigInvalid(f"{type(exc).__name__}: {exc}") from exc


def sub_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0] >> 1)


def _set_path(cfg, path, value):
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigInvalid(f"sweep parameter {path!r} not in config")
        node[k] = dict(node[k]) if isinstance(node[k], dict) else node[k]
        node = node[k]
    if not isinstance(node, dict):
        raise ConfigInvalid(f"sweep parameter {path!r} not in config")
    if keys[-1] not in node and not (len(keys) > 1 and keys[-1] in _COCYCLE_KEYS):
        raise ConfigInvalid(f"sweep parameter {path!r} not in config")
    node[keys[-1]] = value


def sweep(cfg, parameter, values):
    """One row block per value with seeds derived from ``(seed, value index)``."""
    if not values:
        raise ConfigInvalid("sweep needs at least one value")
    columns, rows, reports = None, [], []
    for idx, value in enumerate(values):
        sub = copy.deepcopy(cfg)
        _set_path(sub, parameter, value)
        sub["seed"] = sub_seed(cfg["seed"], idx)
        cols, block, rep = run_config(sub)
        columns = [parameter] + cols
        rows += [[value] + r for r in block]
        reports.append({"value": value, "seed": sub["seed"], "report": rep})
    return columns, rows, {"parameter": parameter, "values": values, "runs": reports}


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser():
    p = argparse.ArgumentParser(prog="cocyclelab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--seed", type=int, help="base seed (u64)")
        sp.add_argument("--workers", type=int, help="worker threads")
        sp.add_argument("--out", type=Path, help="CSV output path (JSON report alongside)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a top-level config field (JSON value)")

    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        common(sp)
        if name == "ids":
            sp.add_argument("--free", action="store_true", help="free Laplacian ensemble")
    sp = sub.add_parser("sweep", help="run one experiment over a list of parameter values")
    sp.add_argument("experiment", choices=EXPERIMENTS)
    sp.add_argument("--param", required=True, help="dotted config path, e.g. cocycle.rotate")
    sp.add_argument("--values", nargs="+", required=True, type=_parse_value)
    common(sp)
    return p


def _load_config(args, name):
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigInvalid("config must be a JSON object")
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigInvalid(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key] = _parse_value(value)
    for flag in ("seed", "workers"):
        if getattr(args, flag) is not None:
            overrides[flag] = getattr(args, flag)
    if args.out is not None:
        overrides["out"] = str(args.out)
    if getattr(args, "free", False):
        overrides["ensemble"] = FREE
    return resolve_config(name, raw, overrides)


def _emit(cfg, columns, rows, report, started, stdout):
    meta = _io.metadata(cfg, cfg["seed"], started)
    text = _io.csv_text(columns, rows, meta)
    if cfg["out"]:
        out = Path(cfg["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        if report is not None:
            out.with_suffix(".json").write_text(_io.json_text(report, meta))
    else:
        stdout.write(text)


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    started = time.time()
    name = args.experiment if args.command == "sweep" else args.command
    try:
        cfg = _load_config(args, name)
        if args.command == "sweep":
            columns, rows, report = sweep(cfg, args.param, args.values)
        else:
            columns, rows, report = run_config(cfg)
        _emit(cfg, columns, rows, report, started, stdout)
        return 0
    except (CocycleLabError, ExperimentFailed) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": 2}
        stderr.write(json.dumps(err) + "\n")
        out = getattr(args, "out", None)
        if out is not None:
            Path(str(out) + ".error.json").write_text(json.dumps(err, indent=2) + "\n")
        return 2
    except Exception as exc:  # internal error
        stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": 1}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
