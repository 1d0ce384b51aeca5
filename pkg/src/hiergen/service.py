"""HTTP inference service consumed by the steering UI.

Stateless between requests; the model is loaded once and never mutated.
Errors: malformed body -> 400 with field-level messages, invalid expert
prefix -> 422, model missing -> 503.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .corpus import Document, Proposal
from .model import ProposalClassifier


class DocumentIn(BaseModel):
    type: str = Field(min_length=1)
    text: str


class PredictRequest(BaseModel):
    documents: list[DocumentIn] = Field(min_length=1)
    expert_prefix: list[str] = Field(default_factory=list)
    mode: str = "greedy"
    top_k: int = Field(default=5, ge=1, le=50)


def create_app(model: ProposalClassifier | None) -> FastAPI:
    app = FastAPI(title="hiergen inference service")
    app.state.model = model

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        details = [
            {"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": details})

    def _model() -> ProposalClassifier | None:
        return app.state.model

    @app.get("/health")
    def health():
        m = _model()
        if m is None:
            return JSONResponse(status_code=503, content={"status": "no model loaded"})
        return {"status": "ok", "model_fingerprint": m.fingerprint()}

    @app.get("/taxonomy")
    def taxonomy():
        m = _model()
        if m is None:
            return JSONResponse(status_code=503, content={"status": "no model loaded"})
        t = m.taxonomy
        nodes = [
            {
                "code": n.code,
                "level": n.level,
                "parent": None if n.parent_id == 0 else t.nodes[n.parent_id].code,
            }
            for n in sorted(
                (n for n in t.nodes.values() if n.level > 0),
                key=lambda n: (n.level, n.code),
            )
        ]
        return {"max_depth": t.max_depth, "nodes": nodes}

    @app.post("/predict")
    def predict(req: PredictRequest):
        m = _model()
        if m is None:
            return JSONResponse(status_code=503, content={"status": "no model loaded"})
        if req.mode not in ("greedy", "constrained"):
            return JSONResponse(
                status_code=400,
                content={"errors": [{"field": "mode", "message": f"unknown mode '{req.mode}'"}]},
            )
        try:
            prefix = [m.taxonomy.by_code(c).id for c in req.expert_prefix]
            proposal = Proposal(
                [Document.from_text(d.type, d.text) for d in req.documents]
            )
            pred = m.predict(proposal, expert_prefix=prefix, mode=req.mode, top_k=req.top_k)
        except (KeyError, ValueError) as e:
            return JSONResponse(status_code=422, content={"detail": str(e)})
        t = m.taxonomy
        return {
            "path": [
                {
                    "level": s.level,
                    "code": s.code,
                    "prob": s.prob,
                    "alternatives": [{"code": c, "prob": q} for c, q in s.alternatives],
                }
                for s in pred.steps
            ],
            "prefix": [t.nodes[i].code for i in prefix],
            "labels": t.codes(pred.path),
            "terminated": pred.path.terminated,
            "valid_path": t.validate_path(pred.path),
            "score": pred.score,
        }

    return app
