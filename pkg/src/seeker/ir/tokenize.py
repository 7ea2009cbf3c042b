"""Shared tokenizer: lowercase, split on non-alphanumerics, drop tokens
shorter than 2 characters. No stemming; changing any of this bumps
TOKENIZER_VERSION so stale indexes are detected on load."""

from __future__ import annotations

import re

TOKENIZER_VERSION = 1

_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _SPLIT.split(text.lower()) if len(t) >= 2]
