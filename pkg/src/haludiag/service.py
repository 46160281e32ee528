"""HTTP reward endpoint for external RL trainers.

Stateless and fully concurrent: every response is a pure function of the
request body and the static config, and the numerics are bit-equal to an
in-process ``compute_reward`` call (full double precision on the wire, no
rounding).  Schema violations return 400 with the offending field paths;
oversized bodies return 413; hostile completion text can never 500.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from typing import Literal

from . import __version__
from .config import env_float, env_int, fingerprint
from .reward import GroundTruth, Label, RewardWeights, compute_reward

logger = logging.getLogger("haludiag.service")

DEFAULT_BATCH_MAX = 512
DEFAULT_BODY_LIMIT = 8 * 1024 * 1024


@dataclass(frozen=True)
class ServiceConfig:
    weights: RewardWeights = field(default_factory=RewardWeights)
    clamp_loc: bool = True
    dedup_pred: bool = True
    batch_max: int = DEFAULT_BATCH_MAX
    body_limit_bytes: int = DEFAULT_BODY_LIMIT
    host: str = "127.0.0.1"
    port: int = 8080

    @classmethod
    def from_dict(cls, obj: dict) -> "ServiceConfig":
        """Build from the ``service``/``reward`` config sections with
        environment overrides (HALUDIAG_PORT, HALUDIAG_BATCH_MAX,
        HALUDIAG_BODY_LIMIT_BYTES, HALUDIAG_W_STRUCT/W_ACC/W_LOC)."""
        reward_cfg = obj.get("reward", {})
        service_cfg = obj.get("service", {})
        weights = RewardWeights(
            w_struct=env_float("HALUDIAG_W_STRUCT", reward_cfg.get("w_struct", 1.0)),
            w_acc=env_float("HALUDIAG_W_ACC", reward_cfg.get("w_acc", 0.5)),
            w_loc=env_float("HALUDIAG_W_LOC", reward_cfg.get("w_loc", 0.5)),
        )
        return cls(
            weights=weights,
            clamp_loc=bool(reward_cfg.get("clamp_loc", True)),
            dedup_pred=bool(reward_cfg.get("dedup_pred", True)),
            batch_max=env_int("HALUDIAG_BATCH_MAX", service_cfg.get("batch_max", DEFAULT_BATCH_MAX)),
            body_limit_bytes=env_int(
                "HALUDIAG_BODY_LIMIT_BYTES",
                service_cfg.get("body_limit_bytes", DEFAULT_BODY_LIMIT),
            ),
            host=service_cfg.get("host", "127.0.0.1"),
            port=env_int("HALUDIAG_PORT", service_cfg.get("port", 8080)),
        )

    def fingerprint(self) -> str:
        return fingerprint(
            {
                "w_struct": self.weights.w_struct,
                "w_acc": self.weights.w_acc,
                "w_loc": self.weights.w_loc,
                "clamp_loc": self.clamp_loc,
                "dedup_pred": self.dedup_pred,
                "batch_max": self.batch_max,
                "body_limit_bytes": self.body_limit_bytes,
            }
        )


class GroundTruthModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    label: Literal["Halu", "NonHalu"]
    gt_sentences: list[str] = []
    reference_answer: str = ""


class WeightsModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    w_struct: float = Field(default=1.0, ge=0)
    w_acc: float = Field(default=0.5, ge=0)
    w_loc: float = Field(default=0.5, ge=0)


class RewardRequestModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    completion: str
    ground_truth: GroundTruthModel
    weights: WeightsModel | None = None


def _validation_response(errors: list[dict], status: int = 400) -> JSONResponse:
    fields = [".".join(str(p) for p in err.get("loc", ()) if p != "body") for err in errors]
    message = "; ".join(
        f"{field_path or 'body'}: {err.get('msg', 'invalid')}"
        for field_path, err in zip(fields, errors)
    )
    return JSONResponse({"error": {"fields": fields, "message": message}}, status_code=status)


def create_app(cfg: ServiceConfig | None = None) -> FastAPI:
    cfg = cfg or ServiceConfig()
    config_fp = cfg.fingerprint()
    app = FastAPI(title="haludiag-reward-service", version=__version__)

    def score(request: RewardRequestModel) -> dict:
        # GroundTruth enforces the label/sentence consistency invariant.
        gt = GroundTruth(
            label=Label(request.ground_truth.label),
            gt_sentences=tuple(request.ground_truth.gt_sentences),
            reference_answer=request.ground_truth.reference_answer,
        )
        weights = (
            RewardWeights(
                w_struct=request.weights.w_struct,
                w_acc=request.weights.w_acc,
                w_loc=request.weights.w_loc,
            )
            if request.weights is not None
            else cfg.weights
        )
        breakdown = compute_reward(
            request.completion, gt, weights, clamp_loc=cfg.clamp_loc, dedup_pred=cfg.dedup_pred
        )
        payload = breakdown.to_dict()
        payload["version"] = __version__
        payload["config_fingerprint"] = config_fp
        return payload

    @app.middleware("http")
    async def guard_and_log(request: Request, call_next):
        started = time.monotonic()
        content_length = request.headers.get("content-length")
        if content_length is not None:
            try:
                if int(content_length) > cfg.body_limit_bytes:
                    return JSONResponse(
                        {"error": {"message": "request body exceeds size limit"}},
                        status_code=413,
                    )
            except ValueError:
                pass
        response = await call_next(request)
        elapsed_ms = (time.monotonic() - started) * 1000
        logger.info(
            "%s %s -> %d (%.1f ms)", request.method, request.url.path, response.status_code, elapsed_ms
        )
        return response

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _validation_response(exc.errors())

    @app.post("/v1/reward")
    def reward_endpoint(request: RewardRequestModel):
        try:
            return score(request)
        except ValueError as exc:
            return JSONResponse(
                {"error": {"fields": ["ground_truth"], "message": str(exc)}}, status_code=400
            )

    @app.post("/v1/reward/batch")
    def reward_batch(items: list[Any]):
        if not 1 <= len(items) <= cfg.batch_max:
            return JSONResponse(
                {
                    "error": {
                        "message": f"batch size must be between 1 and {cfg.batch_max}, got {len(items)}"
                    }
                },
                status_code=400,
            )
        results = []
        for index, item in enumerate(items):
            try:
                request = RewardRequestModel.model_validate(item)
                results.append(score(request))
            except (ValidationError, ValueError) as exc:
                results.append({"error": {"index": index, "message": str(exc)[:400]}})
        return results

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__, "config_fingerprint": config_fp}

    return app
