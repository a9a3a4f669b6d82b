"""HTTP decision-support service: herd risk, cow detail, counterfactual
explanations, what-if scoring, and atomic model hot reload.

All mutable state lives in one immutable bundle swapped atomically on
reload; every handler snapshots the bundle reference once, so a response
is always internally consistent (its scores match its reported model
hash). The audit log is an append-only JSONL file.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import cfx, dataset, gbm, narrate
from .features import FeatureCatalog, default_catalog, load_catalog


class ApiError(Exception):
    def __init__(self, status_code: int, code: str, message: str, details=None):
        self.status_code = status_code
        self.code = code
        self.message = message
        self.details = details or {}


@dataclass(frozen=True)
class AppBundle:
    """Immutable snapshot served by all handlers."""
    catalog: FeatureCatalog
    model: gbm.Ensemble
    model_hash: str
    weights: cfx.DistanceWeights
    cows: dict
    milk_by_cow: dict
    table: dataset.InstanceTable
    latest_index: dict      # cow_id -> row in table (most recent day)
    cfx_config: cfx.CfxConfig


class BundleHolder:
    def __init__(self, bundle: AppBundle | None = None):
        self._bundle = bundle
        self._lock = threading.Lock()

    def get(self) -> AppBundle | None:
        return self._bundle

    def swap(self, bundle: AppBundle) -> None:
        with self._lock:
            self._bundle = bundle


class AuditLog:
    """Append-only JSONL log; appends serialized through one lock."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with open(self.path, "a") as fh:
                fh.write(line + "\n")


def build_bundle(data_dir: str | Path, model_path: str | Path,
                 catalog: FeatureCatalog | None = None,
                 cfx_config: cfx.CfxConfig | None = None) -> AppBundle:
    catalog = catalog or default_catalog()
    model = gbm.load_model(model_path, expected_catalog_version=catalog.version)
    cows, milk = dataset.load_csv(data_dir)
    table = dataset.build_instance_table(cows, milk, catalog)
    weights = cfx.mad_weights(table.X, catalog)
    latest: dict[str, int] = {}
    for i in range(len(table)):
        cid = table.cow_ids[i]
        if cid not in latest or table.day_ordinals[i] > table.day_ordinals[latest[cid]]:
            latest[cid] = i
    milk_by_cow: dict[str, list] = {}
    for rec in milk:
        milk_by_cow.setdefault(rec.cow_id, []).append(rec)
    model_hash = model.model_hash()
    return AppBundle(catalog=catalog, model=model, model_hash=model_hash,
                     weights=weights, cows={c.cow_id: c for c in cows},
                     milk_by_cow=milk_by_cow, table=table, latest_index=latest,
                     cfx_config=cfx_config or cfx.CfxConfig())


def _cow_entry(bundle: AppBundle, cow_id: str, score: float) -> dict:
    i = bundle.latest_index[cow_id]
    x = bundle.table.X[i]
    top = {spec.name: float(v) for spec, v in list(zip(bundle.catalog, x))[:8]}
    return {
        "cow_id": cow_id,
        "as_of_date": bundle.table.date_of(i).isoformat(),
        "score": score,
        "class": gbm.POS_LABEL if score >= bundle.cfx_config.flip_threshold
                 else gbm.NEG_LABEL,
        "top_feature_values": top,
    }


def create_app(data_dir: str | Path, model_path: str | Path,
               policy_file: str | Path | None = None,
               static_dir: str | Path | None = None,
               cfx_config: cfx.CfxConfig | None = None) -> FastAPI:
    data_dir = Path(data_dir)
    catalog = load_catalog(policy_file) if policy_file else default_catalog()
    holder = BundleHolder(build_bundle(data_dir, model_path, catalog, cfx_config))
    audit = AuditLog(data_dir / "audit.log")

    app = FastAPI(title="herdcfx")
    app.state.holder = holder
    app.state.audit = audit

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status_code,
                            content={"code": exc.code, "message": exc.message,
                                     "details": exc.details})

    def _bundle() -> AppBundle:
        bundle = holder.get()
        if bundle is None:
            raise ApiError(503, "model_not_loaded", "no model is loaded")
        return bundle

    def _cow_or_404(bundle: AppBundle, cow_id: str):
        if cow_id not in bundle.latest_index:
            raise ApiError(404, "unknown_cow", f"unknown cow {cow_id!r}")

    @app.get("/api/herd")
    def herd():
        bundle = _bundle()
        entries = []
        for cow_id, i in bundle.latest_index.items():
            score = gbm.predict_score(bundle.model, bundle.table.X[i])
            entries.append(_cow_entry(bundle, cow_id, score))
        entries.sort(key=lambda e: (-e["score"], e["cow_id"]))
        return {"model_hash": bundle.model_hash, "cows": entries}

    @app.get("/api/cows/{cow_id}")
    def cow_detail(cow_id: str):
        bundle = _bundle()
        _cow_or_404(bundle, cow_id)
        i = bundle.latest_index[cow_id]
        x = bundle.table.X[i]
        score = gbm.predict_score(bundle.model, x)
        as_of = bundle.table.date_of(i)
        cutoff = as_of - dt.timedelta(days=29)
        history = []
        for rec in bundle.milk_by_cow.get(cow_id, []):
            if cutoff <= rec.date <= as_of:
                history.append({
                    "date": rec.date.isoformat(),
                    "yield": dataset._daily_yield(rec),
                    "fat_pct": rec.fat_pct,
                    "protein_pct": rec.protein_pct,
                    "lactose_pct": rec.lactose_pct,
                    "scc": rec.scc,
                    "urea": rec.urea,
                })
        history.sort(key=lambda h: h["date"])
        eligible = set(cfx._perturbable(bundle.catalog, bundle.cfx_config))
        features = [
            {"name": spec.name, "value": float(v), "unit": spec.unit,
             "actionable": spec.actionable, "eligible": j in eligible,
             "min_change": spec.min_change,
             "lower_bound": spec.lower_bound, "upper_bound": spec.upper_bound}
            for j, (spec, v) in enumerate(zip(bundle.catalog, x))
        ]
        return {
            "model_hash": bundle.model_hash,
            "cow_id": cow_id,
            "as_of_date": as_of.isoformat(),
            "score": score,
            "class": gbm.POS_LABEL if score >= bundle.cfx_config.flip_threshold
                     else gbm.NEG_LABEL,
            "features": features,
            "history": history,
        }

    @app.post("/api/explain")
    async def explain(request: Request):
        body = await request.json()
        bundle = _bundle()
        cow_id = body.get("cow_id")
        if not cow_id:
            raise ApiError(422, "missing_field", "cow_id is required")
        _cow_or_404(bundle, cow_id)
        config = bundle.cfx_config
        overrides = body.get("config") or {}
        if overrides:
            try:
                config = cfx.CfxConfig(**{**config.__dict__, **overrides})
            except (TypeError, cfx.CfxError) as exc:
                raise ApiError(422, "invalid_config", str(exc))
        i = bundle.latest_index[cow_id]
        x = bundle.table.X[i]
        score = gbm.predict_score(bundle.model, x)
        if score >= config.flip_threshold:
            raise ApiError(409, "already_sick",
                           f"cow {cow_id} is already classified "
                           f"{gbm.POS_LABEL}", {"score": score})
        result = cfx.find_counterfactual(bundle.model, x, bundle.catalog,
                                         bundle.weights, config)
        doc = cfx.result_document(result, bundle.catalog)
        narration = None
        if result.status == cfx.CfxStatus.Found:
            narration = narrate.render(cow_id.lstrip("cow0") or cow_id, result,
                                       bundle.catalog, narrate.DIGITS_STYLE,
                                       bundle.weights)
        result_hash = hashlib.sha256(
            json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
        app.state.audit.append({
            "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(),
            "cow_id": cow_id,
            "model_hash": bundle.model_hash,
            "result_hash": result_hash,
        })
        return {"model_hash": bundle.model_hash, "cow_id": cow_id,
                "result": doc, "narration": narration}

    @app.post("/api/whatif")
    async def whatif(request: Request):
        body = await request.json()
        bundle = _bundle()
        cow_id = body.get("cow_id")
        if not cow_id:
            raise ApiError(422, "missing_field", "cow_id is required")
        _cow_or_404(bundle, cow_id)
        i = bundle.latest_index[cow_id]
        x = bundle.table.X[i].copy()
        for name, spec_override in (body.get("overrides") or {}).items():
            try:
                j = bundle.catalog.index(name)
            except Exception:
                raise ApiError(422, "unknown_feature",
                               f"unknown feature {name!r}")
            spec = bundle.catalog.specs[j]
            if not isinstance(spec_override, dict):
                raise ApiError(422, "invalid_override",
                               f"{name}: expected {{'value': v}} or "
                               f"{{'delta': d}}")
            has_value = "value" in spec_override
            has_delta = "delta" in spec_override
            if has_value == has_delta:
                raise ApiError(422, "invalid_override",
                               f"{name}: exactly one of value/delta required")
            new = (float(spec_override["value"]) if has_value
                   else x[j] + float(spec_override["delta"]))
            if not spec.lower_bound <= new <= spec.upper_bound:
                raise ApiError(422, "out_of_bounds",
                               f"{name}: {new} outside "
                               f"[{spec.lower_bound}, {spec.upper_bound}]")
            x[j] = new
        score = gbm.predict_score(bundle.model, x)
        return {
            "model_hash": bundle.model_hash,
            "cow_id": cow_id,
            "score": score,
            "class": gbm.POS_LABEL if score >= bundle.cfx_config.flip_threshold
                     else gbm.NEG_LABEL,
            "vector": {spec.name: float(v)
                       for spec, v in zip(bundle.catalog, x)},
        }

    @app.post("/api/model/reload")
    async def reload_model(request: Request):
        body = await request.json()
        path = body.get("model_path")
        if not path:
            raise ApiError(422, "missing_field", "model_path is required")
        bundle = _bundle()
        try:
            model = gbm.load_model(path)
        except gbm.ModelError as exc:
            if "catalog_version" in str(exc):
                raise ApiError(422, "catalog_mismatch", str(exc))
            raise ApiError(500, "model_load_failed", str(exc))
        if model.catalog_version != bundle.catalog.version:
            raise ApiError(422, "catalog_mismatch",
                           f"model catalog_version {model.catalog_version!r} "
                           f"!= {bundle.catalog.version!r}")
        new_bundle = AppBundle(
            catalog=bundle.catalog, model=model, model_hash=model.model_hash(),
            weights=bundle.weights, cows=bundle.cows,
            milk_by_cow=bundle.milk_by_cow, table=bundle.table,
            latest_index=bundle.latest_index, cfx_config=bundle.cfx_config)
        holder.swap(new_bundle)
        return {"model_hash": new_bundle.model_hash,
                "catalog_version": model.catalog_version,
                "n_trees": len(model.trees)}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app
