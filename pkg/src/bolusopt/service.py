"""HTTP service exposing the advisor to the what-if UI.

v1 endpoints: POST /predict (trajectory for a window/bolus/carbs), POST
/recommend (full recommendation), GET /config, GET /model. Models are
loaded once and shared immutably; each request derives its own random
stream from the request seed or the server seed, so identical requests get
byte-identical responses. Validation failures return 400 with per-field
errors; meal-awareness mismatches return 409.
"""

from __future__ import annotations

import json

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import Response
from pydantic import BaseModel, Field

from .advisor import DoseRecord, recommendation_to_dict, recommend_bolus
from .config import AppConfig, config_to_dict
from .pg import N_WINDOW, PgPredictor, predict_trajectory

__all__ = ["create_app"]


class DoseIn(BaseModel):
    time: float
    units: float = Field(ge=0)


class PredictIn(BaseModel):
    window: list[float] = Field(min_length=N_WINDOW, max_length=N_WINDOW)
    bolus: float = Field(ge=0)
    carbs: float | None = Field(default=None, ge=0)


class RecommendIn(BaseModel):
    window: list[float] = Field(min_length=N_WINDOW, max_length=N_WINDOW)
    carbs: float | None = Field(default=None, ge=0)
    history: list[DoseIn] = Field(default_factory=list)
    seed: int | None = None
    now: float | None = None


def _json_response(payload: dict, status_code: int = 200) -> Response:
    # canonical serialization keeps equal requests byte-identical
    body = json.dumps(payload, indent=2, sort_keys=True)
    return Response(content=body, status_code=status_code, media_type="application/json")


def _meal_mismatch(predictor: PgPredictor, carbs) -> str | None:
    if predictor.meal_aware and carbs is None:
        return "model is meal-aware: carbs required"
    if not predictor.meal_aware and carbs is not None:
        return "model is meal-free: carbs must be omitted"
    return None


def create_app(predictor: PgPredictor, config: AppConfig | None = None, ui_dir=None) -> FastAPI:
    cfg = config or AppConfig()
    app = FastAPI(title="bolusopt advisor", version="v1")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(p) for p in e["loc"] if p != "body"), "message": e["msg"]}
            for e in exc.errors()
        ]
        return _json_response({"schema": "error/v1", "errors": errors}, status_code=400)

    @app.get("/config")
    def get_config():
        return _json_response(config_to_dict(cfg))

    @app.get("/model")
    def get_model():
        return _json_response(
            {
                "schema": "model/v1",
                "meal_aware": predictor.meal_aware,
                "meal_class": predictor.meal_class,
                "input_dim": predictor.input_dim,
                "n_training_samples": predictor.step_models[0].dataset.n,
                "steps": len(predictor.step_models),
            }
        )

    @app.post("/predict")
    def post_predict(body: PredictIn):
        bad = [
            {"field": f"window.{i}", "message": "glucose reading must be finite"}
            for i, v in enumerate(body.window)
            if not np.isfinite(v)
        ]
        if body.bolus > cfg.advisor.cost.u_max:
            bad.append({"field": "bolus", "message": f"bolus above u_max {cfg.advisor.cost.u_max}"})
        if bad:
            return _json_response({"schema": "error/v1", "errors": bad}, status_code=400)
        mismatch = _meal_mismatch(predictor, body.carbs)
        if mismatch:
            return _json_response(
                {"schema": "error/v1", "errors": [{"field": "carbs", "message": mismatch}]},
                status_code=409,
            )
        traj = predict_trajectory(predictor, np.asarray(body.window), body.bolus, body.carbs)
        return _json_response(
            {
                "schema": "trajectory/v1",
                "means": [float(v) for v in traj.means],
                "variances": [float(v) for v in traj.variances],
                "spacing_minutes": traj.spacing_minutes,
            }
        )

    @app.post("/recommend")
    def post_recommend(body: RecommendIn):
        bad = [
            {"field": f"window.{i}", "message": "glucose reading must be finite"}
            for i, v in enumerate(body.window)
            if not np.isfinite(v)
        ]
        if bad:
            return _json_response({"schema": "error/v1", "errors": bad}, status_code=400)
        mismatch = _meal_mismatch(predictor, body.carbs)
        if mismatch:
            return _json_response(
                {"schema": "error/v1", "errors": [{"field": "carbs", "message": mismatch}]},
                status_code=409,
            )
        now = body.now if body.now is not None else max((d.time for d in body.history), default=0.0)
        history = [DoseRecord(time=d.time, units=d.units) for d in body.history]
        if any(d.time > now for d in history):
            return _json_response(
                {
                    "schema": "error/v1",
                    "errors": [{"field": "history", "message": "dose after 'now'"}],
                },
                status_code=400,
            )
        seed = body.seed if body.seed is not None else cfg.seed
        rec = recommend_bolus(
            predictor, np.asarray(body.window), body.carbs, cfg.advisor, history, now, seed
        )
        return _json_response(recommendation_to_dict(rec, body.window, body.carbs))

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
