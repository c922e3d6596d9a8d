"""Prompt template and chat-completion response parsing."""

from __future__ import annotations

import json
import logging
import re
from typing import Any

from ..corpus import Document

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE = (
    "You must write questions for a news quiz to appear in the newspaper. "
    "A news quiz asks about events in the news, NOT about news articles. "
    "Here are two articles that appeared in this week's news: <<{first}>> <<{second}>> "
    "For each article give five factual news quiz English questions, one per line with no "
    "extraneous words, that are answered by the events described in that document and are "
    "not answered by the events described in the other document. The quiz questions must "
    "never refer to individual news articles, or assume the quiz-taker has seen those "
    "articles. Precede the first five with DOCA: and the second with DOCB:"
)

QUERIES_PER_DOC = 5

_NUMBERED = re.compile(r"^\s*\d+\s*[.)]\s*(.*?)\s*$")


class ResponseParseError(ValueError):
    pass


def build_prompt(first: Document | str, second: Document | str) -> str:
    a = first.text if isinstance(first, Document) else first
    b = second.text if isinstance(second, Document) else second
    # plain replacement: document text may itself contain braces
    head, _, rest = PROMPT_TEMPLATE.partition("{first}")
    middle, _, tail = rest.partition("{second}")
    return head + a + middle + b + tail


def response_content(body: str | dict[str, Any]) -> str:
    """Pull ``choices[0].message.content`` out of a chat-completion body."""
    try:
        data = json.loads(body) if isinstance(body, (str, bytes)) else body
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ResponseParseError(f"not a chat-completion body: {exc}") from exc
    if not isinstance(content, str):
        raise ResponseParseError("message content is not a string")
    return content


def _block_queries(block: str, label: str) -> list[str]:
    queries = []
    for line in block.splitlines():
        m = _NUMBERED.match(line)
        if m and m.group(1):
            queries.append(m.group(1))
    if not queries:
        raise ResponseParseError(f"{label} block has no numbered queries")
    if len(queries) > QUERIES_PER_DOC:
        logger.warning("%s block has %d queries; keeping the first %d", label, len(queries), QUERIES_PER_DOC)
        queries = queries[:QUERIES_PER_DOC]
    return queries


def split_content(content: str) -> tuple[list[str], list[str]]:
    ia, ib = content.find("DOCA:"), content.find("DOCB:")
    if ia < 0 or ib < 0:
        missing = "DOCA:" if ia < 0 else "DOCB:"
        raise ResponseParseError(f"response lacks the {missing} marker")
    if ia < ib:
        block_a, block_b = content[ia + 5 : ib], content[ib + 5 :]
    else:
        block_b, block_a = content[ib + 5 : ia], content[ia + 5 :]
    return _block_queries(block_a, "DOCA"), _block_queries(block_b, "DOCB")


def parse_response(body: str | dict[str, Any]) -> tuple[list[str], list[str]]:
    """Queries for which the first and the second document are relevant, respectively."""
    return split_content(response_content(body))
