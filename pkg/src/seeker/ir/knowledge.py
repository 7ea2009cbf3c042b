"""Knowledge capture: distill user clarifications out of finished sessions
into searchable knowledge documents, so later sessions benefit from
insights earlier users had to spell out."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from seeker.backend import BackendError, CompletionRequest
from seeker.model import DocKind, Document, SessionTranscript

from .store import IndexStore

EXTRACTION_PROMPT = """\
You distill durable domain insights from a data-exploration dialogue.
An insight is a definition, constraint, or calculation rule the user \
stated or confirmed, phrased so it is useful to future sessions.
Return ONLY a JSON array of strings, one per insight. Return [] when the \
dialogue contains no durable insight.

Dialogue:
{dialogue}
"""


class ExtractionError(BackendError):
    pass


@dataclass
class KnowledgeEntry:
    insight: str
    session_id: str
    timestamp: str
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.insight.strip():
            raise ValueError("insight must be non-empty")
        self.tags = tuple(self.tags)

    @property
    def doc_id(self) -> str:
        digest = hashlib.sha256(self.insight.strip().encode()).hexdigest()[:12]
        return f"knowledge:{self.session_id}:{digest}"

    def to_document(self) -> Document:
        title = self.insight if len(self.insight) <= 80 else self.insight[:77] + "..."
        body = self.insight
        if self.tags:
            body += "\ntags: " + ", ".join(self.tags)
        return Document(
            id=self.doc_id,
            kind=DocKind.KNOWLEDGE,
            title=title,
            body=body,
            source=f"session:{self.session_id}",
        )


def _render_dialogue(transcript: SessionTranscript) -> str:
    lines = []
    for i, turn in enumerate(transcript.turns, start=1):
        lines.append(f"USER ({i}): {turn.user_text}")
        lines.append(f"SYSTEM ({i}): {turn.final_user_message}")
    return "\n".join(lines)


def capture_knowledge(
    transcript: SessionTranscript,
    backend,
    store: IndexStore,
    timestamp: str = "1970-01-01T00:00:00Z",
) -> list[KnowledgeEntry]:
    """Extract user clarifications from a completed transcript and index
    them. Idempotent per session: entry ids are content-addressed, and
    already-indexed ids are skipped rather than duplicated."""
    if not transcript.turns:
        return []
    prompt = EXTRACTION_PROMPT.format(dialogue=_render_dialogue(transcript))
    text, _usage = backend.complete(
        CompletionRequest(role="extractor", prompt=prompt)
    )
    try:
        insights = json.loads(text)
        if not isinstance(insights, list) or not all(
            isinstance(s, str) for s in insights
        ):
            raise ValueError("expected a JSON array of strings")
    except ValueError as exc:
        raise ExtractionError(f"malformed extraction output: {exc}") from exc

    entries = []
    for insight in insights:
        if not insight.strip():
            continue
        entry = KnowledgeEntry(
            insight=insight.strip(),
            session_id=transcript.session_id,
            timestamp=timestamp,
        )
        if entry.doc_id not in store:
            store.index_document(entry.to_document())
        entries.append(entry)
    return entries
