"""Evaluation harness: a simulated domain expert drives a system under
test toward a latent question; the harness measures convergence,
turns-to-convergence, answer accuracy, and token cost.

The simulated user only ever sees system outputs. Convergence is decided
by a judge completion comparing the simulator's latest articulated request
against the latent question (with an exact-match fast path), so fully
scripted runs are deterministic end to end.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

from seeker.backend import (
    BackendError,
    CompletionRequest,
    PriceSheet,
    Usage,
    cost,
)
from seeker.conductor import Conductor, ConductorConfig
from seeker.ir import IndexStore
from seeker.model import DocKind, Relation
from seeker.session import Session

SIM_PROMPT_TEMPLATE = """\
You are simulating {domain_expert_desc}, who is interacting with a data \
discovery system to explore insights from an enterprise dataset.

{system_description}

Scenario:
- The system already has access to internal datasets.
- You (the simulated user) are familiar with the domain and have seen similar datasets before.
- You are not uploading new datasets or asking if they exist - you assume they do.

Possible eventual goal (unknown at start):
{question}

Behavior:
- Explore and refine your question step-by-step depending on the system's responses.
- Be vague or explore tangents, just as a curious analyst would.
- Only arrive at the specific question above if the system's output correctly leads you there.

Continue your role as the domain expert. This is the conversation so far \
(respond as if prompting the system directly):
{conversation}"""

SYSTEM_DESCRIPTIONS = {
    "seeker": (
        "The system represents your information need as a set of target "
        "schemas and SQL statements that, if executed, will provide the "
        "answer. It can combine, transform, and reason over data to assist "
        "your exploration."
    ),
    "fts": (
        "The system only returns relevant tables based on your description. "
        "It does not infer your deeper intent, combine, or analyze data."
    ),
    "retriever": (
        "The system only returns relevant tables based on your description. "
        "It does not infer your deeper intent, combine, or analyze data."
    ),
    "rag-topk": (
        "The system retrieves the most relevant data for your description "
        "and adds a short interpretation of it. It does not maintain state "
        "or transform data."
    ),
}

JUDGE_CONVERGENCE_PROMPT = """\
Decide whether the analyst's current request asks for the same information \
as the latent question. Answer with exactly "yes" or "no".

Latent question:
{latent}

Current request:
{request}"""

JUDGE_ACCURACY_PROMPT = """\
Decide whether the system's answer matches the expected answer in \
substance. Answer with exactly "yes" or "no".

Expected answer:
{expected}

System answer:
{answer}"""

RAG_INTERPRET_PROMPT = """\
Using only the retrieved context below, answer or contextualize the user's \
request in a few sentences.

Context:
{context}

Request:
{request}"""


@dataclass(frozen=True)
class AnswerSpec:
    kind: str  # numeric | text
    value: object
    decimals: Optional[int] = None  # rounding spec for numeric answers

    def __post_init__(self) -> None:
        if self.kind not in ("numeric", "text"):
            raise ValueError(f"unknown answer kind {self.kind!r}")
        if self.kind == "numeric" and self.decimals is None:
            object.__setattr__(self, "decimals", 4)


@dataclass(frozen=True)
class BenchmarkQuestion:
    id: str
    question: str
    answer: AnswerSpec
    domain_expert_desc: str = "a domain expert"
    initial_broad_prompt: Optional[str] = None

    @classmethod
    def from_json_dict(cls, d: dict) -> "BenchmarkQuestion":
        a = d["answer"]
        return cls(
            id=d["id"],
            question=d["question"],
            answer=AnswerSpec(a["type"], a["value"], a.get("decimals")),
            domain_expert_desc=d.get("domain_expert_desc", "a domain expert"),
            initial_broad_prompt=d.get("initial_broad_prompt"),
        )


@dataclass(frozen=True)
class SimConfig:
    turn_limit: int = 15
    adapter: str = "seeker"
    prompt_template: str = SIM_PROMPT_TEMPLATE

    def __post_init__(self) -> None:
        if self.turn_limit < 1:
            raise ValueError("turn limit must be >= 1")
        if self.adapter not in SYSTEM_DESCRIPTIONS:
            raise ValueError(f"unknown adapter {self.adapter!r}")


@dataclass
class QuestionRecord:
    question_id: str
    converged: bool
    turns_to_convergence: Optional[int]
    answer_correct: Optional[bool]
    final_answer: Optional[str]
    usage: Usage
    error: Optional[str] = None
    dialogue: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "converged": self.converged,
            "turns_to_convergence": self.turns_to_convergence,
            "answer_correct": self.answer_correct,
            "final_answer": self.final_answer,
            "usage": {
                "input_tokens": self.usage.input_tokens,
                "output_tokens": self.usage.output_tokens,
            },
            "error": self.error,
            "dialogue": self.dialogue,
        }


# -- system-under-test adapters ---------------------------------------------------


class SystemAdapter(Protocol):
    name: str

    def respond(self, user_text: str) -> str: ...


class FtsAdapter:
    """BM25-only table search; replies are raw table listings."""

    name = "fts"

    def __init__(self, store: IndexStore, k: int = 5):
        self.store = store
        self.k = k

    def respond(self, user_text: str) -> str:
        ranked = self.store.bm25_search(user_text, self.k, kinds={DocKind.TABLE})
        if not ranked:
            return "(no tables matched)"
        return "\n\n".join(doc.body for doc, _ in ranked)


class RetrieverAdapter:
    """Hybrid lexical+vector table search; replies are raw table listings."""

    name = "retriever"

    def __init__(self, store: IndexStore, k: int = 5):
        self.store = store
        self.k = k

    def respond(self, user_text: str) -> str:
        ranked = self.store.hybrid_search(user_text, self.k, kinds={DocKind.TABLE})
        if not ranked:
            return "(no tables matched)"
        return "\n\n".join(doc.body for doc, _ in ranked)


class RagTopKAdapter:
    """Hybrid top-k retrieval plus one interpretation completion."""

    name = "rag-topk"

    def __init__(self, store: IndexStore, backend, k: int = 5, ledger=None):
        self.store = store
        self.backend = backend
        self.k = k
        self.ledger = ledger

    def respond(self, user_text: str) -> str:
        ranked = self.store.hybrid_search(user_text, self.k, kinds={DocKind.TABLE})
        context = "\n\n".join(doc.body for doc, _ in ranked) or "(nothing retrieved)"
        text, usage = self.backend.complete(
            CompletionRequest(
                role="conductor",
                prompt=RAG_INTERPRET_PROMPT.format(context=context, request=user_text),
            )
        )
        if self.ledger is not None:
            self.ledger.append(usage)
        return text


class SeekerAdapter:
    """The full conductor loop over a dedicated session."""

    name = "seeker"

    def __init__(
        self,
        store: IndexStore,
        backend,
        base_catalog: Optional[dict[str, Relation]] = None,
        config: Optional[ConductorConfig] = None,
        ledger=None,
    ):
        self.conductor = Conductor(backend, store, config or ConductorConfig())
        self.session = Session(base_catalog=base_catalog)
        self.ledger = ledger

    def respond(self, user_text: str) -> str:
        result = self.conductor.run_turn(self.session, user_text)
        if self.ledger is not None:
            self.ledger.append(result.usage)
        return result.final_message


# -- convergence and accuracy --------------------------------------------------------


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower())


def detect_convergence(request: str, latent_question: str, backend, usage_sink=None) -> bool:
    """Judge whether the articulated request matches the latent question.
    Identical text short-circuits to True without a judge call; judge
    failures count as not converged."""
    if _normalize(request) == _normalize(latent_question):
        return True
    prompt = JUDGE_CONVERGENCE_PROMPT.format(latent=latent_question, request=request)
    try:
        text, usage = backend.complete(CompletionRequest(role="judge", prompt=prompt))
    except BackendError:
        return False
    if usage_sink is not None:
        usage_sink.append(usage)
    return text.strip().lower().startswith("yes")


_NUMBER_RE = re.compile(r"-?\d+(?:,\d{3})*(?:\.\d+)?(?:[eE][+-]?\d+)?")


def parse_numeric(text: str) -> Optional[float]:
    """Last number mentioned in the text, or None."""
    matches = _NUMBER_RE.findall(text.replace("$", ""))
    if not matches:
        return None
    try:
        return float(matches[-1].replace(",", ""))
    except ValueError:
        return None


def check_accuracy(
    final_answer: Optional[str], question: BenchmarkQuestion, backend=None, usage_sink=None
) -> bool:
    """Numeric answers: round both sides per the question's rounding spec
    and compare exactly. Text answers: judge verdict."""
    if final_answer is None:
        return False
    spec = question.answer
    if spec.kind == "numeric":
        got = parse_numeric(final_answer)
        if got is None:
            return False
        nd = spec.decimals
        return round(got, nd) == round(float(spec.value), nd)
    if backend is None:
        return _normalize(final_answer) == _normalize(str(spec.value))
    prompt = JUDGE_ACCURACY_PROMPT.format(expected=spec.value, answer=final_answer)
    try:
        text, usage = backend.complete(CompletionRequest(role="judge", prompt=prompt))
    except BackendError:
        return False
    if usage_sink is not None:
        usage_sink.append(usage)
    return text.strip().lower().startswith("yes")


# -- the simulation loop ------------------------------------------------------------


def run_simulation(
    question: BenchmarkQuestion,
    cfg: SimConfig,
    adapter: SystemAdapter,
    simulator_backend,
    judge_backend,
) -> QuestionRecord:
    """Alternate simulator completions and system responses until the
    simulator's request converges on the latent question or the turn limit
    is reached. Turns count simulator prompts issued, converging turn
    included."""
    usages: list[Usage] = []
    dialogue: list[dict] = []
    system_description = SYSTEM_DESCRIPTIONS[cfg.adapter]

    def conversation_text() -> str:
        lines = []
        for entry in dialogue:
            speaker = "YOU" if entry["speaker"] == "user" else "SYSTEM"
            lines.append(f"{speaker}: {entry['text']}")
        return "\n".join(lines) if lines else "(conversation starts now)"

    converged = False
    turns: Optional[int] = None
    final_answer: Optional[str] = None
    error: Optional[str] = None

    try:
        for turn in range(1, cfg.turn_limit + 1):
            if turn == 1 and question.initial_broad_prompt:
                sim_text = question.initial_broad_prompt
            else:
                prompt = cfg.prompt_template.format(
                    domain_expert_desc=question.domain_expert_desc,
                    system_description=system_description,
                    question=question.question,
                    conversation=conversation_text(),
                )
                sim_text, usage = simulator_backend.complete(
                    CompletionRequest(role="simulator", prompt=prompt)
                )
                usages.append(usage)
            dialogue.append({"speaker": "user", "turn": turn, "text": sim_text})

            system_reply = adapter.respond(sim_text)
            dialogue.append({"speaker": "system", "turn": turn, "text": system_reply})

            if detect_convergence(sim_text, question.question, judge_backend, usages):
                converged = True
                turns = turn
                final_answer = system_reply
                break
    except BackendError as exc:
        error = str(exc)
        converged = False
        turns = None

    total = Usage()
    for u in usages:
        total = total + u
    adapter_ledger = getattr(adapter, "ledger", None)
    if adapter_ledger:
        for u in adapter_ledger:
            total = total + u

    # errored questions leave accuracy unknown; non-converged ones never
    # produced an answer, which counts as incorrect in the aggregate
    if error is not None:
        answer_correct: Optional[bool] = None
    elif not converged:
        answer_correct = False
    else:
        answer_correct = check_accuracy(final_answer, question, judge_backend, usages)
        total = Usage()
        for u in usages:
            total = total + u
        if adapter_ledger:
            for u in adapter_ledger:
                total = total + u
    return QuestionRecord(
        question_id=question.id,
        converged=converged,
        turns_to_convergence=turns,
        answer_correct=answer_correct,
        final_answer=final_answer,
        usage=total,
        error=error,
        dialogue=dialogue,
    )


# -- aggregation ----------------------------------------------------------------------


@dataclass
class RunReport:
    adapter: str
    records: list[QuestionRecord]
    convergence_pct: float
    median_turns: Optional[int]
    accuracy_pct: float
    avg_input_tokens: float
    avg_output_tokens: float
    cost_model: Optional[str] = None
    input_cost: Optional[float] = None
    output_cost: Optional[float] = None

    def to_json_dict(self) -> dict:
        return {
            "adapter": self.adapter,
            "n_questions": len(self.records),
            "convergence_pct": self.convergence_pct,
            "median_turns": self.median_turns,
            "accuracy_pct": self.accuracy_pct,
            "avg_input_tokens": self.avg_input_tokens,
            "avg_output_tokens": self.avg_output_tokens,
            "cost_model": self.cost_model,
            "input_cost": self.input_cost,
            "output_cost": self.output_cost,
            "records": [r.to_json_dict() for r in self.records],
        }


def median_lower(values: list[int]) -> Optional[int]:
    """Lower-middle median: integer turns stay integers."""
    if not values:
        return None
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def aggregate(
    records: list[QuestionRecord],
    adapter: str = "seeker",
    price_sheet: Optional[PriceSheet] = None,
    model: Optional[str] = None,
) -> RunReport:
    if not records:
        raise ValueError("aggregate needs at least one record")
    n = len(records)
    converged = [r for r in records if r.converged]
    correct = sum(1 for r in records if r.answer_correct)
    avg_in = sum(r.usage.input_tokens for r in records) / n
    avg_out = sum(r.usage.output_tokens for r in records) / n
    report = RunReport(
        adapter=adapter,
        records=list(records),
        convergence_pct=round(100.0 * len(converged) / n, 2),
        median_turns=median_lower(
            [r.turns_to_convergence for r in converged if r.turns_to_convergence]
        ),
        accuracy_pct=round(100.0 * correct / n, 2),
        avg_input_tokens=round(avg_in, 2),
        avg_output_tokens=round(avg_out, 2),
    )
    if price_sheet is not None and model is not None:
        avg_usage = Usage(int(round(avg_in)), int(round(avg_out)))
        in_cost, out_cost = cost(avg_usage, price_sheet, model)
        report.cost_model = model
        report.input_cost = in_cost
        report.output_cost = out_cost
    return report


def render_markdown(reports: list[RunReport]) -> str:
    """One row per adapter run, columns shaped like the cost/accuracy tables."""
    header = (
        "| System | Questions | Convergence % | Median Turns | Accuracy % "
        "| Avg In Tokens | Avg Out Tokens | In Cost | Out Cost |"
    )
    sep = "|---|---|---|---|---|---|---|---|---|"
    rows = []
    for r in reports:
        rows.append(
            "| {adapter} | {n} | {conv:.2f}% | {med} | {acc:.2f}% | {ain:.0f} "
            "| {aout:.0f} | {ic} | {oc} |".format(
                adapter=r.adapter,
                n=len(r.records),
                conv=r.convergence_pct,
                med=r.median_turns if r.median_turns is not None else "-",
                acc=r.accuracy_pct,
                ain=r.avg_input_tokens,
                aout=r.avg_output_tokens,
                ic=f"${r.input_cost:.2f}" if r.input_cost is not None else "-",
                oc=f"${r.output_cost:.2f}" if r.output_cost is not None else "-",
            )
        )
    return "\n".join([header, sep] + rows) + "\n"


def load_benchmark(path: str | Path) -> list[BenchmarkQuestion]:
    questions = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            questions.append(BenchmarkQuestion.from_json_dict(json.loads(line)))
    return questions
