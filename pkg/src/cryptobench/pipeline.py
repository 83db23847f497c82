"""Pipeline stages behind the CLI: prepare, per-model runs, comparison.

Artifact layout under ``out_dir``:

    prepared.csv          index,date,normalized_close (train scaler applied)
    prepare_meta.json     scaler min/max, split boundary, fingerprint
    lstm_epochs.csv       epoch,mse              (normalized test MSE)
    lstm_history.csv      epoch,train_mse,test_mse
    {model}_model.json    bit-exact serialized winning model
    {model}_result.json   scores + winning config + prediction dump
    svr_grid.csv          kernel,gamma,c,mse     (cross-validation MSE)
    svr_best.json         winning grid cell
    poly_degrees.csv      degree,mse             (test MSE)
    comparison.csv        model,mse_normalized,mse_raw
    report.json / report.txt
    predictions_{model}.csv   date,actual,predicted  (raw prices)

Every file embeds the config hash and seed; floats are written with
``repr`` so reruns with the same config are byte-identical.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import sample_data_path
from .config import RunConfig, config_hash
from . import dataset as ds
from . import evaluation
from . import lstm as lstm_mod
from . import polyreg
from . import svr as svr_mod

__all__ = [
    "PipelineError",
    "MissingArtifactError",
    "PreparedData",
    "prepare",
    "run_model",
    "run_compare",
    "load_prepared",
    "load_lstm_checkpoint",
    "load_svr_model",
    "load_poly_model",
    "MODEL_NAMES",
]

MODEL_NAMES = ("lstm", "svr", "poly")

FORMAT_VERSION = 1


class PipelineError(RuntimeError):
    pass


class MissingArtifactError(PipelineError):
    pass


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))  # builtin repr: shortest exact round-trip
    return str(value)


def _write_table(path: Path, header: list[str], rows, cfg_hash: str, seed: int):
    lines = [f"# config_hash={cfg_hash}", f"# seed={seed}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise MissingArtifactError(f"missing artifact: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _input_path(cfg: RunConfig) -> Path:
    return Path(cfg.input_path) if cfg.input_path else sample_data_path()


# --- prepare -----------------------------------------------------------

@dataclass
class PreparedData:
    dates: list[dt.date]
    normalized: np.ndarray
    scaler: ds.ScalerParams
    split_index: int
    fingerprint: str

    @property
    def train_values(self) -> np.ndarray:
        return self.normalized[: self.split_index]

    @property
    def test_values(self) -> np.ndarray:
        return self.normalized[self.split_index:]


def prepare(cfg: RunConfig) -> dict:
    """Parse, clean, split, fit the scaler on train, normalize, persist."""
    path = _input_path(cfg)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    raw_bytes = path.read_bytes()
    series = ds.parse_csv(raw_bytes.decode("utf-8"))
    cleaned = ds.clean(series)
    train, test = ds.chronological_split(cleaned, cfg.train_fraction)
    split_index = len(train)

    values = ds.column_values(cleaned, cfg.target_column)
    scaler = ds.fit_scaler(values[:split_index])
    normalized = ds.scale(values, scaler)

    digest = hashlib.sha256()
    digest.update(raw_bytes)
    digest.update(f"|split={split_index}".encode())
    fingerprint = digest.hexdigest()[:16]

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)
    rows = [(i, rec.date.isoformat(), float(normalized[i]))
            for i, rec in enumerate(cleaned)]
    _write_table(out / "prepared.csv", ["index", "date", "normalized_close"],
                 rows, cfg_hash, cfg.seed)
    meta = {
        "format_version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "seed": cfg.seed,
        "target_column": cfg.target_column,
        "train_fraction": cfg.train_fraction,
        "window": cfg.window,
        "n_records": len(cleaned),
        "n_parsed": len(series),
        "n_dropped": len(series) - len(cleaned),
        "split_index": split_index,
        "scaler": {"min": scaler.min, "max": scaler.max},
        "dataset_fingerprint": fingerprint,
    }
    _write_json(out / "prepare_meta.json", meta)
    return {
        "n_parsed": len(series),
        "n_records": len(cleaned),
        "n_train": len(train),
        "n_test": len(test),
        "paths": [out / "prepared.csv", out / "prepare_meta.json"],
    }


def load_prepared(out_dir: str | Path) -> PreparedData:
    out = Path(out_dir)
    meta = _read_json(out / "prepare_meta.json")
    csv_path = out / "prepared.csv"
    if not csv_path.exists():
        raise MissingArtifactError(f"missing artifact: {csv_path}")
    dates = []
    values = []
    for line in csv_path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#") or line.startswith("index,"):
            continue
        _, date_text, value_text = line.split(",")
        dates.append(dt.date.fromisoformat(date_text))
        values.append(float(value_text))
    scaler = ds.ScalerParams(**meta["scaler"])
    return PreparedData(
        dates=dates,
        normalized=np.array(values, dtype=np.float64),
        scaler=scaler,
        split_index=int(meta["split_index"]),
        fingerprint=meta["dataset_fingerprint"],
    )


def _check_prepare_consistency(cfg: RunConfig, out: Path):
    meta = _read_json(out / "prepare_meta.json")
    for key, value in (("target_column", cfg.target_column),
                       ("train_fraction", cfg.train_fraction),
                       ("window", cfg.window)):
        if meta.get(key) != value:
            raise PipelineError(
                f"prepared artifacts used {key}={meta.get(key)!r} but the current "
                f"config says {value!r}; rerun prepare")


# --- shared model plumbing ---------------------------------------------

def _boundary_windows(prepared: PreparedData, window: int) -> tuple:
    """Train windows from the train slice; test windows prepend the last
    ``window`` train values so every test record yields one sample."""
    train_ds = ds.make_windows(prepared.train_values, window)
    tail = np.concatenate([prepared.train_values[-window:], prepared.test_values])
    test_ds = ds.make_windows(tail, window)
    return train_ds, test_ds


def _prediction_rows(prepared: PreparedData, preds_norm: np.ndarray):
    """(date, actual, predicted) rows in raw price units for the test slice."""
    test_dates = prepared.dates[prepared.split_index:]
    actual_raw = ds.inverse_scale(prepared.test_values, prepared.scaler)
    preds_raw = ds.inverse_scale(preds_norm, prepared.scaler)
    return [
        (date.isoformat(), float(a), float(p))
        for date, a, p in zip(test_dates, actual_raw, preds_raw)
    ]


def _both_scale_mses(targets_norm, preds_norm, scaler) -> tuple[float, float]:
    m_norm = evaluation.mse(targets_norm, preds_norm)
    m_raw = evaluation.mse(ds.inverse_scale(targets_norm, scaler),
                           ds.inverse_scale(preds_norm, scaler))
    return m_norm, m_raw


def _result_payload(cfg, name, m_norm, m_raw, summary, prediction_rows, fingerprint):
    return {
        "format_version": FORMAT_VERSION,
        "model": name,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "dataset_fingerprint": fingerprint,
        "mse_normalized": m_norm,
        "mse_raw": m_raw,
        "config_summary": summary,
        "predictions": [
            {"date": d, "actual": a, "predicted": p} for d, a, p in prediction_rows
        ],
    }


# --- model runs --------------------------------------------------------

def _run_lstm(cfg: RunConfig, out: Path, prepared: PreparedData) -> dict:
    train_ds, test_ds = _boundary_windows(prepared, cfg.window)
    hyper = lstm_mod.LstmConfig(
        hidden_size=cfg.lstm_hidden_size,
        learning_rate=cfg.lstm_learning_rate,
        beta1=cfg.lstm_beta1,
        beta2=cfg.lstm_beta2,
        adam_eps=cfg.lstm_adam_eps,
        batch_size=cfg.lstm_batch_size,
    )
    rows, snapshots, history = lstm_mod.epoch_grid(
        train_ds, test_ds, cfg.lstm_epochs, cfg.seed, hyper)
    cfg_hash = config_hash(cfg)
    _write_table(out / "lstm_epochs.csv", ["epoch", "mse"], rows, cfg_hash, cfg.seed)
    _write_table(out / "lstm_history.csv", ["epoch", "train_mse", "test_mse"],
                 [(r.epoch, r.train_mse, r.test_mse) for r in history],
                 cfg_hash, cfg.seed)

    best_epoch = min(rows, key=lambda r: (r[1], r[0]))[0]
    best = snapshots[best_epoch]
    preds_norm = lstm_mod.predict_batch(best, test_ds.inputs)
    m_norm, m_raw = _both_scale_mses(test_ds.targets, preds_norm, prepared.scaler)

    checkpoint = {
        "format_version": FORMAT_VERSION,
        "kind": "lstm",
        "config_hash": cfg_hash,
        "seed": cfg.seed,
        "window": cfg.window,
        "input_dim": best.input_dim,
        "hidden_size": best.hidden_size,
        "epochs": best_epoch,
        "scaler": {"min": prepared.scaler.min, "max": prepared.scaler.max},
        "params": {
            name: getattr(best, name).tolist() for name in lstm_mod._WEIGHT_FIELDS
        } | {"b_y": best.b_y},
    }
    _write_json(out / "lstm_model.json", checkpoint)

    summary = {
        "epochs": best_epoch,
        "hidden_size": cfg.lstm_hidden_size,
        "learning_rate": cfg.lstm_learning_rate,
        "batch_size": cfg.lstm_batch_size,
        "window": cfg.window,
    }
    payload = _result_payload(cfg, "lstm", m_norm, m_raw, summary,
                              _prediction_rows(prepared, preds_norm),
                              prepared.fingerprint)
    _write_json(out / "lstm_result.json", payload)
    return payload


def _time_features(n: int) -> np.ndarray:
    """Scalar time index normalized onto [0, 1] over the full series."""
    return (np.arange(n, dtype=np.float64) / (n - 1)).reshape(-1, 1)


def _run_svr(cfg: RunConfig, out: Path, prepared: PreparedData) -> dict:
    split = prepared.split_index
    if cfg.svr_features == "time":
        t = _time_features(len(prepared.normalized))
        x_train, y_train = t[:split], prepared.train_values
        x_test, y_test = t[split:], prepared.test_values
    else:
        train_ds, test_ds = _boundary_windows(prepared, cfg.window)
        x_train, y_train = train_ds.inputs, train_ds.targets
        x_test, y_test = test_ds.inputs, test_ds.targets

    grid = svr_mod.grid_search(
        x_train, y_train,
        kernels=cfg.svr_kernels, gammas=cfg.svr_gammas, cs=cfg.svr_cs,
        k=cfg.svr_cv_folds, epsilon=cfg.svr_epsilon, tol=cfg.svr_tol,
        coef0=cfg.svr_coef0)
    cfg_hash = config_hash(cfg)
    _write_table(out / "svr_grid.csv", ["kernel", "gamma", "c", "mse"],
                 [(c.kernel, c.gamma, c.c, c.cv_mse) for c in grid.cells],
                 cfg_hash, cfg.seed)
    best_cell = grid.best
    _write_json(out / "svr_best.json", {
        "format_version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "seed": cfg.seed,
        "kernel": best_cell.kernel,
        "gamma": best_cell.gamma,
        "c": best_cell.c,
        "cv_mse": best_cell.cv_mse,
    })

    spec = svr_mod.KernelSpec(kind=best_cell.kernel, gamma=best_cell.gamma,
                              coef0=cfg.svr_coef0)
    # grid cells keep the stock iteration budget (non-convergence there is
    # a warning by design); the single winning refit gets a roomy cap
    refit_iters = max(100 * len(y_train), 1_000_000)
    model = svr_mod.fit(x_train, y_train, svr_mod.SvrConfig(
        kernel=spec, c=best_cell.c, epsilon=cfg.svr_epsilon, tol=cfg.svr_tol,
        max_iter=refit_iters))
    preds_norm = svr_mod.predict_batch(model, x_test)
    m_norm, m_raw = _both_scale_mses(y_test, preds_norm, prepared.scaler)

    _write_json(out / "svr_model.json", {
        "format_version": FORMAT_VERSION,
        "kind": "svr",
        "config_hash": cfg_hash,
        "seed": cfg.seed,
        "features": cfg.svr_features,
        "kernel": {"kind": spec.kind, "gamma": spec.gamma, "coef0": spec.coef0},
        "c": best_cell.c,
        "epsilon": cfg.svr_epsilon,
        "bias": model.bias,
        "n_features": int(x_train.shape[1]) if x_train.ndim == 2 else 1,
        "support_vectors": model.support_vectors.tolist(),
        "dual_coefs": model.dual_coefs.tolist(),
        "scaler": {"min": prepared.scaler.min, "max": prepared.scaler.max},
        "converged": model.converged,
    })

    summary = {
        "kernel": best_cell.kernel,
        "gamma": best_cell.gamma,
        "c": best_cell.c,
        "epsilon": cfg.svr_epsilon,
        "features": cfg.svr_features,
        "cv_folds": cfg.svr_cv_folds,
    }
    payload = _result_payload(cfg, "svr", m_norm, m_raw, summary,
                              _prediction_rows(prepared, preds_norm),
                              prepared.fingerprint)
    _write_json(out / "svr_result.json", payload)
    return payload


def _run_poly(cfg: RunConfig, out: Path, prepared: PreparedData) -> dict:
    split = prepared.split_index
    xs = np.arange(len(prepared.normalized), dtype=np.float64)
    sweep = polyreg.degree_sweep(
        (xs[:split], prepared.train_values),
        (xs[split:], prepared.test_values),
        cfg.poly_degrees)
    cfg_hash = config_hash(cfg)
    _write_table(out / "poly_degrees.csv", ["degree", "mse"], sweep.rows,
                 cfg_hash, cfg.seed)

    best_degree = sweep.best[0]
    model = polyreg.fit(xs[:split], prepared.train_values, best_degree)
    preds_norm = np.asarray(polyreg.predict(model, xs[split:]))
    m_norm, m_raw = _both_scale_mses(prepared.test_values, preds_norm,
                                     prepared.scaler)

    _write_json(out / "poly_model.json", {
        "format_version": FORMAT_VERSION,
        "kind": "poly",
        "config_hash": cfg_hash,
        "seed": cfg.seed,
        "degree": model.degree,
        "intercept": model.intercept,
        "coefficients": model.coefficients.tolist(),
        "feature_scale": list(model.feature_scale),
        "scaler": {"min": prepared.scaler.min, "max": prepared.scaler.max},
    })

    summary = {"degree": best_degree, "include_bias": False}
    payload = _result_payload(cfg, "poly", m_norm, m_raw, summary,
                              _prediction_rows(prepared, preds_norm),
                              prepared.fingerprint)
    _write_json(out / "poly_result.json", payload)
    return payload


_RUNNERS = {"lstm": _run_lstm, "svr": _run_svr, "poly": _run_poly}


def run_model(cfg: RunConfig, name: str) -> dict:
    """Run one model family's sweep against the prepared artifacts."""
    if name not in _RUNNERS:
        raise ValueError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    out = Path(cfg.out_dir)
    _check_prepare_consistency(cfg, out)
    prepared = load_prepared(out)
    return _RUNNERS[name](cfg, out, prepared)


# --- comparison --------------------------------------------------------

def run_compare(cfg: RunConfig, models=MODEL_NAMES, subset_ok: bool = False) -> evaluation.EvalReport:
    """Assemble the cross-model report from the per-model result files."""
    out = Path(cfg.out_dir)
    available = {}
    missing = []
    for name in models:
        path = out / f"{name}_result.json"
        if path.exists():
            available[name] = _read_json(path)
        else:
            missing.append(str(path))
    if missing and not subset_ok:
        raise MissingArtifactError(
            "missing model results: " + ", ".join(missing)
            + " (pass --subset-ok to compare what exists)")
    if not available:
        raise MissingArtifactError("no model results found to compare")

    results = [
        evaluation.ModelResult(
            model_name=name,
            mse_normalized=payload["mse_normalized"],
            mse_raw=payload["mse_raw"],
            config_summary=payload["config_summary"],
        )
        for name, payload in available.items()
    ]
    fingerprint = next(iter(available.values()))["dataset_fingerprint"]
    report = evaluation.compare(results, dataset_fingerprint=fingerprint)

    cfg_hash = config_hash(cfg)
    _write_table(out / "comparison.csv", ["model", "mse_normalized", "mse_raw"],
                 [(r.model_name, r.mse_normalized, r.mse_raw) for r in report.results],
                 cfg_hash, cfg.seed)
    _write_json(out / "report.json", {
        "format_version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "seed": cfg.seed,
        "dataset_fingerprint": report.dataset_fingerprint,
        "winner": report.winner,
        "results": [
            {
                "model": r.model_name,
                "mse_normalized": r.mse_normalized,
                "mse_raw": r.mse_raw,
                "config_summary": dict(r.config_summary),
            }
            for r in report.results
        ],
    })

    lines = [
        f"model comparison (config {cfg_hash}, seed {cfg.seed})",
        f"dataset fingerprint: {report.dataset_fingerprint}",
        "",
        f"{'model':<12} {'mse (normalized)':>20} {'mse (raw)':>20}",
    ]
    for r in report.results:
        lines.append(f"{r.model_name:<12} {r.mse_normalized:>20.10g} {r.mse_raw:>20.10g}")
    lines += ["", f"winner: {report.winner}"]
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    for name, payload in available.items():
        rows = [(p["date"], p["actual"], p["predicted"])
                for p in payload["predictions"]]
        _write_table(out / f"predictions_{name}.csv",
                     ["date", "actual", "predicted"], rows, cfg_hash, cfg.seed)
    return report


# --- checkpoint loaders (round-trip of the serialized models) ----------

def load_lstm_checkpoint(path: str | Path):
    """Rebuild (LstmParams, metadata) from a checkpoint file, bit-exact."""
    payload = _read_json(Path(path))
    if payload.get("kind") != "lstm":
        raise PipelineError(f"{path} is not an LSTM checkpoint")
    params_raw = payload["params"]
    fields = {
        name: np.array(params_raw[name], dtype=np.float64)
        for name in lstm_mod._WEIGHT_FIELDS
    }
    params = lstm_mod.LstmParams(**fields, b_y=float(params_raw["b_y"]))
    return params, payload


def load_svr_model(path: str | Path):
    payload = _read_json(Path(path))
    if payload.get("kind") != "svr":
        raise PipelineError(f"{path} is not an SVR model file")
    spec = svr_mod.KernelSpec(**payload["kernel"])
    n_features = int(payload.get("n_features", 1))
    sv = np.array(payload["support_vectors"], dtype=np.float64)
    sv = sv.reshape(len(payload["dual_coefs"]), n_features)
    model = svr_mod.SvrModel(
        support_vectors=sv,
        dual_coefs=np.array(payload["dual_coefs"], dtype=np.float64),
        bias=float(payload["bias"]),
        kernel=spec,
        converged=bool(payload.get("converged", True)),
    )
    return model, payload


def load_poly_model(path: str | Path):
    payload = _read_json(Path(path))
    if payload.get("kind") != "poly":
        raise PipelineError(f"{path} is not a polynomial model file")
    model = polyreg.PolyModel(
        degree=int(payload["degree"]),
        intercept=float(payload["intercept"]),
        coefficients=np.array(payload["coefficients"], dtype=np.float64),
        feature_scale=tuple(payload["feature_scale"]),
    )
    return model, payload
