"""HTTP service exposing the serving-side surface: dictionary validation,
event extraction, and checkpoint-backed movement prediction with the
covered/uncovered ensemble routing.

Batch work (synthesis, training, full evaluation) lives in the CLI; this
service wraps the operations that make sense per-request once a dictionary
and checkpoints are loaded.
"""

from __future__ import annotations

import io
from datetime import datetime

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .corpus import AnnotatedNews, CorpusError, check_news, parse_corpus
from .dictionary import DictionaryError, EventDictionary, load_dictionary, validate_dictionary
from .extraction import extract_detailed, extract_spo
from .market import STEP_WIDTH, MarketDataError, TradeWindowTensor
from .models import ModelBundle, ensemble_predict


class ValidateDictRequest(BaseModel):
    dictionary_text: str


class ValidateDictResponse(BaseModel):
    ok: bool
    issues: list[str]
    n_types: int = 0
    n_labels: int = 0


class ExtractRequest(BaseModel):
    corpus_text: str
    dictionary_text: str | None = None  # falls back to the loaded dictionary


class ExtractResult(BaseModel):
    doc_id: str
    covered: bool
    labels: list[str]
    event_type: str | None = None


class ExtractResponse(BaseModel):
    results: list[ExtractResult]
    coverage: float


class PredictRequest(BaseModel):
    tokens: list[str]
    pos: list[str]
    dep_head: list[int]
    dep_label: list[str]
    stock_id: str = "unknown"
    time: str = "2024-01-01 00:00"
    window: list[list[float]] = Field(description="T x 120 unscaled feature rows")
    model: str = "auto"  # auto routes covered->sspm, uncovered->msspm


class PredictResponse(BaseModel):
    model: str
    covered: bool
    labels: list[str]
    prob_down: float
    prob_up: float
    label: int


class HealthResponse(BaseModel):
    status: str
    dictionary_types: int
    sspm_loaded: bool
    msspm_loaded: bool


class ServiceState:
    def __init__(self):
        self.dictionary: EventDictionary | None = None
        self.sspm: ModelBundle | None = None
        self.msspm: ModelBundle | None = None


def _news_from_request(req: PredictRequest) -> AnnotatedNews:
    try:
        ts = datetime.strptime(req.time, "%Y-%m-%d %H:%M")
    except ValueError:
        raise HTTPException(422, f"bad time {req.time!r}; expected YYYY-MM-DD HH:MM") from None
    news = AnnotatedNews(
        doc_id="request",
        stock_id=req.stock_id,
        timestamp=ts,
        tokens=tuple(req.tokens),
        pos=tuple(req.pos),
        dep_head=tuple(req.dep_head),
        dep_label=tuple(req.dep_label),
    )
    try:
        check_news(news)
    except CorpusError as exc:
        raise HTTPException(422, str(exc)) from None
    return news


def create_app(
    dictionary_path: str | None = None,
    sspm_path: str | None = None,
    msspm_path: str | None = None,
) -> FastAPI:
    app = FastAPI(title="finevent", version="0.1.0")
    state = ServiceState()
    if dictionary_path:
        with open(dictionary_path, encoding="utf-8") as f:
            state.dictionary = load_dictionary(f)
    if sspm_path:
        state.sspm = ModelBundle.load(sspm_path)
    if msspm_path:
        state.msspm = ModelBundle.load(msspm_path)
    app.state.finevent = state

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            dictionary_types=len(state.dictionary.types) if state.dictionary else 0,
            sspm_loaded=state.sspm is not None,
            msspm_loaded=state.msspm is not None,
        )

    @app.post("/dictionary/validate", response_model=ValidateDictResponse)
    def validate(req: ValidateDictRequest) -> ValidateDictResponse:
        try:
            d = load_dictionary(io.StringIO(req.dictionary_text))
        except DictionaryError as exc:
            return ValidateDictResponse(ok=False, issues=[str(exc)])
        issues = validate_dictionary(d)
        return ValidateDictResponse(
            ok=not issues, issues=issues,
            n_types=len(d.types), n_labels=len(d.label_alphabet),
        )

    @app.post("/extraction/run", response_model=ExtractResponse)
    def extraction(req: ExtractRequest) -> ExtractResponse:
        if req.dictionary_text is not None:
            try:
                d = load_dictionary(io.StringIO(req.dictionary_text))
            except DictionaryError as exc:
                raise HTTPException(422, f"bad dictionary: {exc}") from None
        elif state.dictionary is not None:
            d = state.dictionary
        else:
            raise HTTPException(409, "no dictionary loaded; supply dictionary_text")
        try:
            records = parse_corpus(io.StringIO(req.corpus_text))
        except CorpusError as exc:
            raise HTTPException(422, f"bad corpus: {exc}") from None
        results = []
        covered_n = 0
        for news in records:
            res = extract_detailed(news, d)
            covered_n += int(res.sequence.covered)
            results.append(ExtractResult(
                doc_id=news.doc_id,
                covered=res.sequence.covered,
                labels=list(res.sequence.as_strings(d)),
                event_type=res.frame.type_id if res.frame else None,
            ))
        coverage = covered_n / len(records) if records else 0.0
        return ExtractResponse(results=results, coverage=coverage)

    @app.post("/prediction/run", response_model=PredictResponse)
    def prediction(req: PredictRequest) -> PredictResponse:
        if state.dictionary is None:
            raise HTTPException(409, "no dictionary loaded")
        news = _news_from_request(req)
        window = np.asarray(req.window, dtype=np.float64)
        if window.ndim != 2 or window.shape[1] != STEP_WIDTH:
            raise HTTPException(422, f"window must be T x {STEP_WIDTH}")
        d = state.dictionary
        roles = extract_detailed(news, d).sequence
        spo = roles if not roles.covered else extract_spo(news, d)
        from .market import MovementSample  # local import avoids a cycle at module load

        try:
            sample = MovementSample(
                news=news,
                window=TradeWindowTensor(window, scaled=False),
                roles=roles,
                label=0,
                time_bucket="trade_time",
                spo=spo,
            )
        except MarketDataError as exc:
            raise HTTPException(422, str(exc)) from None

        choice = req.model
        if choice == "auto":
            choice = "sspm" if roles.covered else "msspm"
        if choice == "sspm":
            if state.sspm is None:
                raise HTTPException(409, "no SSPM checkpoint loaded")
            if state.msspm is not None and req.model == "auto":
                probs = ensemble_predict(sample, state.sspm, state.msspm)
            else:
                probs = state.sspm.forward_sample(sample)[0].data
            labels = list(roles.as_strings(d))
        elif choice == "msspm":
            if state.msspm is None:
                raise HTTPException(409, "no MSSPM checkpoint loaded")
            out = state.msspm.forward_sample(sample)
            probs = out.probs.data
            labels = [state.msspm.labels[i] for i in out.pred_labels]
        else:
            raise HTTPException(422, f"unknown model {choice!r}")
        return PredictResponse(
            model=choice,
            covered=roles.covered,
            labels=labels,
            prob_down=float(probs[0]),
            prob_up=float(probs[1]),
            label=int(probs.argmax()),
        )

    return app


app = create_app()
