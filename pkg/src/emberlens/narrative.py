"""Prompt assembly, reference explanations, and the chat transcript format.

Transcripts are line oriented.  A message is a header line (``<|system|>``,
``<|user|>``, or ``<|assistant|>``), zero or more content lines, and an
``<|end|>`` line.  A transcript that ends with a bare assistant header is a
generation prompt: the assistant turn is open and empty.  Content lines that
could be mistaken for markers (any run of backslashes followed by ``<|``)
gain one leading backslash on render and lose one on parse, so arbitrary
text round-trips.

Reference explanations are deterministic functions of the verdict, the
confidence band, and the top feature groups; the raw score is deliberately
left out so distinct summaries produce distinct text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .grouping import GroupShare, top_k

ROLES = ("system", "user", "assistant")

_HEADERS = {f"<|{role}|>": role for role in ROLES}
_END = "<|end|>"
_MARKER_LIKE = re.compile(r"\\*<\|")

SYSTEM_INSTRUCTION = (
    "You are a malware analysis assistant. You are given a classifier's "
    "score for a Windows executable and the feature groups that most "
    "influenced it. Explain the verdict in plain language for a security "
    "analyst. Mention each listed feature group exactly once, state the "
    "direction of its influence and its impact level, and do not invent "
    "evidence beyond what is listed."
)


def verdict(score: float) -> str:
    """Classifier verdict implied by a malware score."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    return "malicious" if score > 0.5 else "benign"


def confidence_band(score: float) -> str:
    """Wording for how far a score sits from the decision boundary."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    if score >= 0.9 or score <= 0.1:
        return "high confidence"
    if score >= 0.7 or score <= 0.3:
        return "moderate confidence"
    return "low confidence"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


class ChatFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def render_chat(messages: list[ChatMessage]) -> str:
    """Serialize messages to transcript text.

    A trailing assistant message with empty content is rendered open (header
    only), which is the generation-prompt form.
    """
    if not messages:
        raise ValueError("cannot render an empty message list")
    lines: list[str] = []
    last = len(messages) - 1
    for i, message in enumerate(messages):
        if message.role not in ROLES:
            raise ValueError(f"unknown role {message.role!r}")
        lines.append(f"<|{message.role}|>")
        if i == last and message.role == "assistant" and message.content == "":
            break
        if message.content:
            for line in message.content.split("\n"):
                if _MARKER_LIKE.match(line):
                    line = "\\" + line
                lines.append(line)
        lines.append(_END)
    return "\n".join(lines)


def parse_chat(text: str) -> list[ChatMessage]:
    """Parse transcript text back into messages; inverse of render_chat."""
    messages: list[ChatMessage] = []
    role: str | None = None
    content: list[str] = []
    line_no = 0

    for line_no, line in enumerate(text.split("\n"), start=1):
        if role is None:
            if line in _HEADERS:
                role = _HEADERS[line]
                content = []
            elif line == _END:
                raise ChatFormatError("end marker outside a message", line_no)
            else:
                raise ChatFormatError(f"expected a role header, got {line!r}", line_no)
        elif line == _END:
            messages.append(ChatMessage(role, "\n".join(content)))
            role = None
        else:
            if _MARKER_LIKE.match(line) and line.startswith("\\"):
                line = line[1:]
            content.append(line)

    if role is not None:
        if role == "assistant" and not content:
            messages.append(ChatMessage("assistant", ""))
        else:
            raise ChatFormatError(f"unterminated {role} message", line_no)
    if not messages:
        raise ChatFormatError("transcript has no messages", max(line_no, 1))
    return messages


def estimate_tokens(text: str) -> int:
    """Budget heuristic: four characters per token, rounded up."""
    return (len(text) + 3) // 4


class PromptBudgetError(ValueError):
    def __init__(self, needed: int, budget: int):
        super().__init__(f"prompt needs about {needed} tokens, budget is {budget}")
        self.needed = needed
        self.budget = budget


def _group_line(share: GroupShare) -> str:
    return f"- {share.display_name}: pushes toward {share.direction}, {share.impact} impact"


def build_prompt(
    sample_id: str,
    score: float,
    shares: list[GroupShare],
    k: int = 5,
    budget: int | None = None,
) -> list[ChatMessage]:
    """Chat messages asking for an explanation of one scored sample.

    With a token budget, the lowest-impact group lines are dropped first;
    a prompt that cannot fit even with no group lines is an error.
    """
    groups = top_k(shares, k)
    while True:
        user_lines = [
            f"Sample: {sample_id}",
            f"Classifier score: {score:.6f}",
            f"Verdict: {verdict(score)} ({confidence_band(score)})",
        ]
        if groups:
            user_lines.append("Most influential feature groups:")
            user_lines.extend(_group_line(share) for share in groups)
        user_lines.append("Explain this verdict.")
        messages = [
            ChatMessage("system", SYSTEM_INSTRUCTION),
            ChatMessage("user", "\n".join(user_lines)),
            ChatMessage("assistant", ""),
        ]
        if budget is None:
            return messages
        needed = estimate_tokens(render_chat(messages))
        if needed <= budget:
            return messages
        if not groups:
            raise PromptBudgetError(needed, budget)
        groups = groups[:-1]


def verdict_sentence(verdict_word: str, band: str) -> str:
    return f"The file is assessed as {verdict_word} with {band}."


def group_sentence(display_name: str, direction: str, impact: str) -> str:
    if direction == "neither":
        return f"The {display_name} had no measurable effect on the assessment."
    return f"The {display_name} pushed the assessment toward {direction} with {impact} impact."


def compose_reference(verdict_word: str, band: str, groups: list[tuple[str, str, str]]) -> str:
    """Reference text from already-worded parts: verdict, band, and
    (display name, direction, impact) triples in rank order."""
    sentences = [verdict_sentence(verdict_word, band)]
    sentences.extend(group_sentence(*triple) for triple in groups)
    return " ".join(sentences)


def build_reference(score: float, shares: list[GroupShare], k: int = 5) -> str:
    """Deterministic gold explanation for a scored sample.

    Two summaries that differ in verdict, band, or any top group's identity,
    direction, or impact always produce different text.
    """
    triples = [(s.display_name, s.direction, s.impact) for s in top_k(shares, k)]
    return compose_reference(verdict(score), confidence_band(score), triples)
