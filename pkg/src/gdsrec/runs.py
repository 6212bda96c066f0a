"""Run orchestration: content-hashed caches, run manifests, and the metric,
history, checkpoint, and sweep writers shared by the CLI commands.

Caches are layered so a configuration change invalidates only what it must:
the parsed tables depend on the input file bytes alone; interaction graphs
add (fraction, seed, rating-difference flag); social graphs add (delta,
uniform). Changing delta therefore rebuilds only the social cache.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import pickle
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import MFConfig, MFParams, train_mf
from .config import ALPHA_GRID, DELTA_GRID, RESERVATION_GRIDS, RunConfig
from .data import RatingTable, TrustEdges, compute_stats, load_ratings, load_trust, split_dataset
from .errors import ConfigError, DataError, DivergenceError
from .graphs import SampleSet, build_interaction_graph, compute_relationship_coefficients
from .metrics import MetricsReport, report_from_predictions
from .model import GDSRec
from .params import ParamStore
from .training import evaluate_model, train

log = logging.getLogger(__name__)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class Workspace:
    """One output directory: cache/, manifest, metrics, checkpoints."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.cache = Path(cfg.cache_dir)

    # -- caches ---------------------------------------------------------------

    def _input_digests(self) -> dict:
        out = {"ratings": _digest(self.cfg.ratings)}
        if self.cfg.trust:
            out["trust"] = _digest(self.cfg.trust)
        return out

    def _table_key(self) -> str:
        digests = self._input_digests()
        blob = digests["ratings"] + digests.get("trust", "-")
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def prepare(self) -> dict:
        """Parse inputs, cache the tables, and export the id maps."""
        if not self.cfg.ratings:
            raise ConfigError("config must set 'ratings' (path to the ratings CSV)")
        self.cache.mkdir(parents=True, exist_ok=True)
        self.out.mkdir(parents=True, exist_ok=True)
        table = load_ratings(self.cfg.ratings)
        trust = None
        if self.cfg.trust:
            trust = load_trust(self.cfg.trust, table.user_ids)
        payload = {
            "users": table.users, "items": table.items, "ratings": table.ratings,
            "user_ids": table.user_ids, "item_ids": table.item_ids,
            "trust_pairs": None if trust is None else trust.pairs,
        }
        with open(self.cache / f"tables_{self._table_key()}.pkl", "wb") as fh:
            pickle.dump(payload, fh, protocol=4)
        _dump_json(self.out / "id_maps.json", {
            "users": table.user_ids.to_dict(), "items": table.item_ids.to_dict()})
        summary = {
            "n_users": table.n_users, "n_items": table.n_items, "n_ratings": len(table),
            "n_trust": 0 if trust is None else len(trust),
        }
        # warm the graph caches for the configured variant and seed
        mcfg = self.cfg.model_config()
        self.structures(mcfg, self.cfg.seed)
        return summary

    def load_tables(self) -> tuple[RatingTable, TrustEdges | None]:
        path = self.cache / f"tables_{self._table_key()}.pkl"
        if not path.exists():
            raise DataError(
                f"no prepared cache for these inputs under {self.cache}; "
                f"run 'gdsrec prepare' with the same config first")
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        table = RatingTable(payload["users"], payload["items"], payload["ratings"],
                            user_ids=payload["user_ids"], item_ids=payload["item_ids"])
        trust = None
        if payload["trust_pairs"] is not None:
            trust = TrustEdges(payload["trust_pairs"])
        return table, trust

    def _cached(self, name: str, build):
        path = self.cache / f"{name}.pkl"
        if path.exists():
            with open(path, "rb") as fh:
                return pickle.load(fh)
        value = build()
        with open(path, "wb") as fh:
            pickle.dump(value, fh, protocol=4)
        return value

    def structures(self, mcfg, seed: int):
        """(split, stats, interaction graph, social graph) for one run."""
        table, trust = self.load_tables()
        split = split_dataset(table, self.cfg.train_fraction, seed)
        stats = compute_stats(split.train)
        base = f"{self._table_key()}_f{self.cfg.train_fraction:g}_s{seed}"
        graph = self._cached(
            f"graph_{base}_rd{int(mcfg.use_rating_difference)}",
            lambda: build_interaction_graph(split.train, stats, mcfg.use_rating_difference))
        social = None
        if mcfg.use_social:
            if trust is None:
                raise ConfigError("the social channel is enabled but no trust file was configured")
            social = self._cached(
                f"social_{base}_d{mcfg.delta}_u{int(not mcfg.use_relationship_coeff)}",
                lambda: compute_relationship_coefficients(
                    split.train, trust, mcfg.delta, uniform=not mcfg.use_relationship_coeff))
        return split, stats, graph, social

    # -- output files ----------------------------------------------------------

    def write_manifest(self, command: str, extra: dict | None = None):
        self.out.mkdir(parents=True, exist_ok=True)
        payload = {
            "command": command,
            "config": self.cfg.to_dict(),
            "inputs": self._input_digests() if self.cfg.ratings else {},
            "package_version": __version__,
        }
        if extra:
            payload.update(extra)
        _dump_json(self.out / "manifest.json", payload)

    def write_report(self, report: MetricsReport, stem: str = "metrics"):
        self.out.mkdir(parents=True, exist_ok=True)
        _dump_json(self.out / f"{stem}.json", report.to_dict())
        lines = ["metric,threshold,value"]
        lines += [",".join(row) for row in report.csv_rows()]
        (self.out / f"{stem}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    def write_history(self, history, stem: str = "history"):
        self.out.mkdir(parents=True, exist_ok=True)
        lines = ["epoch,train_loss,val_mae,val_rmse"]
        for row in history:
            lines.append(f"{row['epoch']},{row['train_loss']!r},{row['val_mae']!r},{row['val_rmse']!r}")
        (self.out / f"{stem}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# command drivers


def _build_model(cfg: RunConfig, ws: Workspace, seed: int):
    mcfg = cfg.model_config()
    split, stats, graph, social = ws.structures(mcfg, seed)
    model = GDSRec(mcfg, split.train.n_users, split.train.n_items, stats, social, seed=seed)
    return model, split, graph


def run_train(cfg: RunConfig, ws: Workspace, command: str = "train") -> MetricsReport:
    model, split, graph = _build_model(cfg, ws, cfg.seed)
    result = train(model, split, graph, cfg.train_config())
    model.params.save(ws.out / "params")
    ws.write_history(result.history)
    report = evaluate_model(model, split.test, graph, cfg.seed, clip=cfg.clip)
    ws.write_report(report)
    ws.write_manifest(command, {
        "best_epoch": result.best_epoch,
        "stopped_early": result.stopped_early,
        "diverged": result.diverged,
    })
    if result.diverged:
        raise DivergenceError("training loss became non-finite; "
                              "the last finite checkpoint was saved")
    return report


def run_eval(cfg: RunConfig, ws: Workspace, checkpoint: str) -> MetricsReport:
    model, split, graph = _build_model(cfg, ws, cfg.seed)
    loaded = ParamStore.load(Path(checkpoint))
    try:
        model.params.restore(loaded.snapshot())
    except ValueError as e:
        raise ConfigError(f"checkpoint does not match this configuration: {e}") from None
    report = evaluate_model(model, split.test, graph, cfg.seed, clip=cfg.clip)
    ws.write_report(report)
    ws.write_manifest("eval", {"checkpoint": str(checkpoint)})
    return report


def run_ablate(cfg: RunConfig, ws: Workspace, variant: str) -> MetricsReport:
    cfg = dataclasses.replace(cfg, variant=variant)
    return run_train(cfg, Workspace(cfg), command="ablate")


def _aggregate(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def sweep_values(cfg: RunConfig, param: str):
    if param == "delta":
        return list(DELTA_GRID)
    if param == "k":
        return list(RESERVATION_GRIDS[cfg.dataset_grid])
    if param == "alpha":
        return list(ALPHA_GRID)
    raise ConfigError(f"sweep parameter must be delta, k, or alpha, got {param!r}")


def run_sweep(cfg: RunConfig, ws: Workspace, param: str) -> dict:
    """Train/evaluate every grid value with ``repeats`` seeds and pick the
    best value by mean validation MAE+RMSE."""
    rows = []
    for value in sweep_values(cfg, param):
        if param == "delta":
            run_cfg = dataclasses.replace(cfg, delta=int(value))
        elif param == "k":
            run_cfg = dataclasses.replace(cfg, reservation=int(value))
        else:
            run_cfg = dataclasses.replace(cfg, alpha=float(value))
        val_sums, maes, rmses = [], [], []
        for rep in range(cfg.repeats):
            seed = cfg.seed + rep
            model, split, graph = _build_model(run_cfg, ws, seed)
            result = train(model, split, graph, run_cfg.train_config(seed=seed))
            if result.diverged:
                raise DivergenceError(f"sweep run {param}={value} seed={seed} diverged")
            report = evaluate_model(model, split.test, graph, seed, clip=cfg.clip)
            val_sums.append(result.best_val_sum)
            maes.append(report.mae)
            rmses.append(report.rmse)
            log.info("sweep %s=%s seed=%d: test mae %.4f rmse %.4f",
                     param, value, seed, report.mae, report.rmse)
        mae_mean, mae_std = _aggregate(maes)
        rmse_mean, rmse_std = _aggregate(rmses)
        rows.append({
            "param": param, "value": value, "repeats": cfg.repeats,
            "val_sum_mean": float(np.mean(val_sums)),
            "mae_mean": mae_mean, "mae_std": mae_std,
            "rmse_mean": rmse_mean, "rmse_std": rmse_std,
        })
    best = min(rows, key=lambda r: r["val_sum_mean"])
    ws.out.mkdir(parents=True, exist_ok=True)
    header = "param,value,repeats,val_sum_mean,mae_mean,mae_std,rmse_mean,rmse_std"
    lines = [header]
    for r in rows:
        lines.append(f"{r['param']},{r['value']},{r['repeats']},{r['val_sum_mean']:.4f},"
                     f"{r['mae_mean']:.4f},{r['mae_std']:.4f},{r['rmse_mean']:.4f},{r['rmse_std']:.4f}")
    (ws.out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    payload = {"param": param, "rows": rows, "best_value": best["value"]}
    _dump_json(ws.out / "sweep.json", payload)
    ws.write_manifest("sweep", {"param": param, "best_value": best["value"]})
    return payload


def _mf_to_store(params: MFParams) -> ParamStore:
    store = ParamStore()
    store.add("user_factors", params.user_factors)
    store.add("item_factors", params.item_factors)
    if params.model == "funksvd":
        store.add("global_mean", np.array([params.global_mean]))
        store.add("user_bias", params.user_bias)
        store.add("item_bias", params.item_bias)
    return store


def run_baseline(cfg: RunConfig, ws: Workspace, mf_model: str) -> MetricsReport:
    table, _ = ws.load_tables()
    split = split_dataset(table, cfg.train_fraction, cfg.seed)
    mf_cfg = MFConfig(n_factors=cfg.mf_factors, learning_rate=cfg.mf_learning_rate,
                      reg=cfg.mf_reg, max_epochs=cfg.max_epochs,
                      patience=cfg.patience, seed=cfg.seed)
    params, result = train_mf(mf_model, split, mf_cfg)
    preds = params.predict(split.test.users, split.test.items)
    report = report_from_predictions(split.test.users, split.test.items,
                                     split.test.ratings, preds, clip=cfg.clip)
    _mf_to_store(params).save(ws.out / "params")
    ws.write_history(result.history)
    ws.write_report(report)
    ws.write_manifest("baseline", {
        "model": mf_model,
        "best_epoch": result.best_epoch,
        "diverged": result.diverged,
    })
    if result.diverged:
        raise DivergenceError(f"baseline {mf_model} diverged")
    return report


def run_score(cfg: RunConfig, ws: Workspace, checkpoint: str, pairs_path: str,
              out_file: str) -> int:
    """Predict raw (user, item) pairs from a CSV using a trained checkpoint."""
    model, _, graph = _build_model(cfg, ws, cfg.seed)
    loaded = ParamStore.load(Path(checkpoint))
    try:
        model.params.restore(loaded.snapshot())
    except ValueError as e:
        raise ConfigError(f"checkpoint does not match this configuration: {e}") from None
    table, _ = ws.load_tables()

    pairs_path = Path(pairs_path)
    if not pairs_path.exists():
        raise DataError(f"pairs file not found: {pairs_path}")
    raw_pairs = []
    with open(pairs_path, encoding="utf-8-sig") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if lineno == 1 and any(not f.strip().lstrip("+-").isdigit() for f in fields):
                continue
            if len(fields) != 2:
                raise DataError(f"{pairs_path}:{lineno}: expected 2 fields")
            try:
                raw_u, raw_v = int(fields[0]), int(fields[1])
            except ValueError:
                raise DataError(f"{pairs_path}:{lineno}: malformed pair") from None
            u = table.user_ids.get(raw_u)
            v = table.item_ids.get(raw_v)
            if u is None:
                raise DataError(f"{pairs_path}:{lineno}: unknown user id {raw_u}")
            if v is None:
                raise DataError(f"{pairs_path}:{lineno}: unknown item id {raw_v}")
            raw_pairs.append((raw_u, raw_v, u, v))
    if not raw_pairs:
        raise DataError(f"{pairs_path}: no pairs to score")

    samples = SampleSet(graph, model.config.reservation, cfg.seed, epoch=0)
    preds = model.predict_many([p[2] for p in raw_pairs], [p[3] for p in raw_pairs], samples)
    if cfg.clip:
        preds = np.clip(preds, 1.0, 5.0)
    lines = ["user_id,item_id,prediction"]
    for (raw_u, raw_v, _, _), pred in zip(raw_pairs, preds):
        lines.append(f"{raw_u},{raw_v},{float(pred)!r}")
    Path(out_file).write_text("\n".join(lines) + "\n", encoding="utf-8")
    ws.write_manifest("score", {"checkpoint": str(checkpoint), "pairs": str(pairs_path),
                                "scored": len(raw_pairs)})
    return len(raw_pairs)
