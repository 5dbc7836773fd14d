"""Command-line harness: ``simulate``, ``filter``, ``batch`` and ``verify``.

Exit codes: 0 success, 1 verification failure, 2 input/validation error,
3 numerical failure (e.g. a covariance lost positive definiteness).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import batch_estimators as be
from .config import ConfigError, ScenarioConfig, load_config, load_matrix, read_yaml
from .consistency import run_consistency
from .core_linalg import DimensionMismatch, LinAlgError, relative_deviation
from .kalman_bayes import bayes_filter_run
from .kalman_projection import projection_filter_run
from .simulator import GENERATOR_ID, ScheduleError, sample_ensemble
from .verification import TOLERANCES, identity_suite, trace_deviation

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(Exception):
    pass


def fmt(x) -> str:
    """Shortest decimal string that round-trips the double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_outputs(files: dict[Path, str]) -> None:
    """Write every file through a temp file + rename; nothing is written before all content exists."""
    for path, text in files.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)


def _out_dir(args, cfg: ScenarioConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None:
        return cfg.output_path
    return Path("out")


def _config(args) -> ScenarioConfig:
    if not args.config:
        raise InputError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise InputError("--seed must be an unsigned 64-bit integer")
        cfg = ScenarioConfig(**{**cfg.__dict__, "master_seed": args.seed})
    return cfg


def trajectory_header(n: int, m: int) -> list[str]:
    return ["k"] + [f"x_{i}" for i in range(n)] + [f"z_{j}" for j in range(m)]


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    X, Z, seeds = sample_ensemble(cfg.model, cfg.x0_mean, cfg.P0, cfg.horizon,
                                  cfg.master_seed, cfg.monte_carlo_runs)
    header = trajectory_header(cfg.model.n, cfg.model.m)
    files = {}
    for i in range(cfg.monte_carlo_runs):
        rows = ([k, *X[i, k], *Z[i, k]] for k in range(cfg.horizon + 1))
        files[out / f"trajectory_{i:04d}.csv"] = _csv_text(header, rows)
    files[out / "simulate_meta.json"] = _json_text({
        "generator": GENERATOR_ID,
        "master_seed": cfg.master_seed,
        "run_seeds": seeds,
        "model_sha256": cfg.model.digest(),
        "config_sha256": cfg.digest,
        "horizon": cfg.horizon,
        "runs": cfg.monte_carlo_runs,
        "columns": header,
    })
    write_outputs(files)
    return EXIT_OK


def read_measurements(path: Path, m: int) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read trajectory {path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path}: empty trajectory file")
    header = rows[0]
    zcols = [i for i, name in enumerate(header) if name.startswith("z_")]
    if len(zcols) != m:
        raise DimensionMismatch(f"{path}: trajectory has {len(zcols)} measurement columns, model expects {m}")
    try:
        Z = np.array([[float(r[i]) for i in zcols] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed row: {exc}") from None
    if Z.shape[0] == 0:
        raise InputError(f"{path}: no data rows")
    return Z.reshape(-1, m)


def filter_header(n: int, m: int, both: bool) -> list[str]:
    cols = ["k"]
    cols += [f"xhat_pred_{i}" for i in range(n)]
    cols += [f"P_pred_diag_{i}" for i in range(n)]
    cols += [f"xhat_post_{i}" for i in range(n)]
    cols += [f"P_post_diag_{i}" for i in range(n)]
    cols += [f"innov_{j}" for j in range(m)]
    cols += [f"S_diag_{j}" for j in range(m)]
    cols += ["gain_frobenius", "log_predictive"]
    if both:
        cols.append("variant_max_rel_dev")
    return cols


def cmd_filter(args) -> int:
    cfg = _config(args)
    traj = Path(args.trajectory)
    out = _out_dir(args, cfg)
    Z = read_measurements(traj, cfg.model.m)
    model = cfg.filter_model()
    try:
        model.check_horizon(Z.shape[0] - 1, filtering=True)
    except ScheduleError as exc:
        raise InputError(str(exc)) from None
    variant = cfg.filter_variant
    if variant == "bayes":
        tr = bayes_filter_run(model, Z, cfg.x0_mean, cfg.P0, joseph=cfg.joseph)
    else:
        tr = projection_filter_run(model, Z, cfg.x0_mean, cfg.P0)
    dev = None
    if variant == "both":
        dev = trace_deviation(tr, bayes_filter_run(model, Z, cfg.x0_mean, cfg.P0, joseph=cfg.joseph))
    rows = []
    for k in range(len(tr)):
        row = [k, *tr.x_pred[k], *np.diag(tr.P_pred[k]), *tr.x_post[k], *np.diag(tr.P_post[k]),
               *tr.innovations[k], *np.diag(tr.innovation_covs[k]),
               float(np.linalg.norm(tr.gains[k])), tr.log_predictive[k]]
        if dev is not None:
            row.append(dev[k])
        rows.append(row)
    header = filter_header(cfg.model.n, cfg.model.m, dev is not None)
    write_outputs({out / f"{traj.stem}_filter.csv": _csv_text(header, rows)})
    if dev is not None:
        print(f"max deviation between projection and bayes variants: {fmt(dev.max())}")
    return EXIT_OK


def load_problem(path: Path) -> be.BatchProblem:
    data, lines = read_yaml(path)

    def err(field, message):
        return ConfigError(field, message, lines.get(field), str(path))

    for key in data:
        if key not in ("W", "Q", "y", "R"):
            raise err(key, "unknown field (expected W, Q, y and optional R)")
    arrays = {}
    for key in ("W", "Q", "y", "R"):
        if key not in data:
            if key == "R":
                continue
            raise err(key, "missing")
        value = data[key]
        if key == "y" and isinstance(value, list) and all(not isinstance(v, list) for v in value):
            value = [[v] for v in value]
        arrays[key] = load_matrix(value, path.parent, key, err)
    y = arrays["y"]
    if y.ndim != 2 or 1 not in y.shape:
        raise err("y", "expected a vector (one row or one column)")
    return be.BatchProblem(W=arrays["W"], Q=arrays["Q"], y=y.reshape(-1), prior_R=arrays.get("R"))


def cmd_batch(args) -> int:
    path = Path(args.problem)
    out = _out_dir(args, None)
    try:
        p = load_problem(path)
    except (LinAlgError, ValueError) as exc:
        raise InputError(f"invalid problem: {exc}") from None
    report = {"n": p.n, "m": p.m}
    if p.prior_R is None:
        est = be.gauss_markov(p)
        report["method"] = "gauss_markov"
    else:
        est = be.min_variance_prior_gain(p)
        info = be.min_variance_prior_info(p)
        report["method"] = "min_variance_prior"
        report["two_form_residual"] = max(relative_deviation(info.beta_hat, est.beta_hat),
                                          relative_deviation(info.error_cov.matrix, est.error_cov.matrix))
        try:
            gm = be.gauss_markov(be.BatchProblem(W=p.W, Q=p.Q, y=p.y))
        except be.RankDeficient:
            report["gauss_markov_rel_dev"] = None
        else:
            report["gauss_markov_beta_hat"] = gm.beta_hat.tolist()
            report["gauss_markov_rel_dev"] = relative_deviation(info.beta_hat, gm.beta_hat)
    report["beta_hat"] = est.beta_hat.tolist()
    report["error_cov"] = est.error_cov.matrix.tolist()
    write_outputs({out / f"{path.stem}_estimate.json": _json_text(report)})
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    scale = args.tol_scale
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.master_seed, spawn_key=(1,))))
    residuals = identity_suite(rng, cfg.verify_instances)
    variant = "projection" if cfg.filter_variant == "projection" else "bayes"
    cons = run_consistency(cfg.model, cfg.x0_mean, cfg.P0, cfg.horizon, cfg.monte_carlo_runs,
                           cfg.master_seed, filter_model=cfg.filter_model(), variant=variant,
                           joseph=cfg.joseph, confidence=cfg.confidence)
    cons.identity_residuals = residuals
    checks = []
    for name, value in residuals.items():
        tol = TOLERANCES[name] * scale
        checks.append({"name": name, "value": value, "tolerance": tol, "passed": bool(value <= tol)})
    checks.append({"name": "nees", "value": cons.mean_nees, "bounds": list(cons.nees_bounds),
                   "passed": cons.nees_ok})
    checks.append({"name": "nis", "value": cons.mean_nis, "bounds": list(cons.nis_bounds),
                   "passed": cons.nis_ok})
    passed = all(c["passed"] for c in checks)
    report = {
        "passed": passed,
        "checks": checks,
        "master_seed": cfg.master_seed,
        "config_sha256": cfg.digest,
        "generator": GENERATOR_ID,
        "tol_scale": scale,
        "consistency": {
            "rmse_per_component": cons.rmse_per_component,
            "mean_nees": cons.mean_nees,
            "nees_bounds": list(cons.nees_bounds),
            "nees_dof": cons.nees_dof,
            "mean_nis": cons.mean_nis,
            "nis_bounds": list(cons.nis_bounds),
            "nis_dof": cons.nis_dof,
            "confidence": cons.confidence,
            "aggregation": ("mean over runs and time steps; NEES interval from the per-step "
                            "run average, dof = runs * n; NIS dof = runs * (horizon + 1) * m"),
            "runs": cfg.monte_carlo_runs,
            "r_scale": cfg.r_scale,
        },
        "identity_residuals": residuals,
    }
    write_outputs({out / "verify_report.json": _json_text(report)})
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} {fmt(c['value'])}")
    return EXIT_OK if passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario YAML file")
    common.add_argument("--out", help="output directory (overrides output.path)")
    common.add_argument("--seed", type=int, help="override run.master_seed (unsigned 64-bit)")
    common.add_argument("--tol-scale", type=float, default=1.0, help="multiply every verification tolerance")
    parser = argparse.ArgumentParser(prog="kalmanest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write one trajectory CSV per Monte-Carlo run")
    f = sub.add_parser("filter", parents=[common], help="filter a trajectory CSV")
    f.add_argument("trajectory")
    b = sub.add_parser("batch", parents=[common], help="batch estimate from a problem manifest")
    b.add_argument("problem")
    sub.add_parser("verify", parents=[common], help="identity suite + NEES/NIS consistency")
    return parser


COMMANDS = {"simulate": cmd_simulate, "filter": cmd_filter, "batch": cmd_batch, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InputError, DimensionMismatch, ScheduleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except be.RankDeficient as exc:
        print(f"rank deficient: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
