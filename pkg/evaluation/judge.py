# evaluation/judge.py
"""Output-quality judging on five 0-10 dimensions."""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from typing import Protocol

import requests

from agent.retrieval import STOPWORDS
from core.errors import ProviderError
from evaluation.metrics import CRCFF_DIMENSIONS, longest_in_order_match

logger = logging.getLogger(__name__)

_TERMS = re.compile(r"\w+")


@dataclass(frozen=True)
class JudgeScore:
    correctness: int
    relevance: int
    completeness: int
    fluency: int
    faithfulness: int
    rationale: str = ""

    def __post_init__(self):
        for dim in CRCFF_DIMENSIONS:
            value = getattr(self, dim)
            if not isinstance(value, int) or not 0 <= value <= 10:
                raise ValueError(f"{dim} must be an integer in 0..10, got {value!r}")

    def to_record(self) -> dict:
        rec = {dim: getattr(self, dim) for dim in CRCFF_DIMENSIONS}
        rec["rationale"] = self.rationale
        return rec


@dataclass(frozen=True)
class JudgeContext:
    query: str = ""
    task_id: str = ""


class Judge(Protocol):
    def score(self, response: str, reference: str, context: JudgeContext) -> JudgeScore: ...


def _terms(text: str) -> list[str]:
    return _TERMS.findall(text.lower())


def _scale(fraction: float) -> int:
    return min(10, max(0, math.floor(10 * fraction + 0.5)))


def _coverage(needles: set[str], haystack: set[str]) -> float:
    return len(needles & haystack) / len(needles) if needles else 1.0


class StubJudge:
    """
    Token-overlap rubric for offline runs:
    correctness = common in-order tokens / longer text, faithfulness = common
    in-order tokens / response length, completeness = reference term
    coverage, relevance = query term coverage with stopwords dropped,
    fluency = 10 for nonempty text.
    """

    name = "stub"

    def score(self, response: str, reference: str, context: JudgeContext = JudgeContext()) -> JudgeScore:
        resp, ref = _terms(response), _terms(reference)
        if not resp:
            return JudgeScore(0, 0, 0, 0, 0, "empty response")
        common = longest_in_order_match(ref, resp)
        resp_set = set(resp)
        query_terms = {t for t in _terms(context.query) if t not in STOPWORDS}
        return JudgeScore(
            correctness=_scale(common / max(len(resp), len(ref))),
            relevance=_scale(_coverage(query_terms, resp_set)),
            completeness=_scale(_coverage(set(ref), resp_set)),
            fluency=10 if response.strip() else 0,
            faithfulness=_scale(common / len(resp)),
            rationale=f"{common} shared tokens in order",
        )


class RemoteJudge:
    """Asks a chat endpoint for a JSON object with the five scores."""

    name = "remote"

    def __init__(self, url: str, api_key: str | None = None, model: str = "default", timeout: float = 60.0):
        self.url = url
        self.api_key = api_key
        self.model = model
        self.timeout = timeout

    def score(self, response: str, reference: str, context: JudgeContext = JudgeContext()) -> JudgeScore:
        instructions = (
            "Rate the response against the reference on correctness, relevance, completeness, "
            "fluency and faithfulness, each an integer 0-10. Reply with a JSON object holding "
            "those five keys and a short 'rationale'."
        )
        content = json.dumps({"query": context.query, "response": response, "reference": reference})
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        payload = {"model": self.model, "messages": [
            {"role": "system", "content": instructions}, {"role": "user", "content": content}]}
        try:
            resp = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            text = resp.json()["choices"][0]["message"]["content"]
            rec = json.loads(text[text.index("{"): text.rindex("}") + 1])
            return JudgeScore(**{d: int(rec[d]) for d in CRCFF_DIMENSIONS}, rationale=str(rec.get("rationale", "")))
        except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"judge at {self.url} failed: {exc}") from exc


def judge_crcff(response: str | None, reference: str, context: JudgeContext, judge: Judge) -> JudgeScore | None:
    """Score one answer; a judge failure leaves the task unjudged instead of stopping the run."""
    try:
        return judge.score(response or "", reference, context)
    except ProviderError as exc:
        logger.warning("%s left unjudged: %s", context.task_id or "task", exc)
        return None
