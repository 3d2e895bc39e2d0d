"""ChatML rendering with role markers, bot-only loss masks, and injection-safe
content handling.

Wire format per turn: "<|im_start|>" + role name + "\\n" + content +
"\\n<|im_end|>\\n". An open generation prompt ends with the bot header and
nothing after. Rendering and parsing are exact inverses for sanitized
content, and the loss mask marks exactly the bot content spans (plus each
bot turn's end marker when configured, so a model learns to stop).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

logger = logging.getLogger(__name__)

IM_START = "<|im_start|>"
IM_END = "<|im_end|>"

ROLE_SYSTEM = "system"
ROLE_HUMAN = "human"
ROLE_BOT = "bot"
ROLES = (ROLE_SYSTEM, ROLE_HUMAN, ROLE_BOT)

# Rendered role names follow the common chat wire format; prose-style
# aliases are accepted when parsing.
DEFAULT_ROLE_NAMES: dict[str, str] = {
    ROLE_SYSTEM: "system",
    ROLE_HUMAN: "user",
    ROLE_BOT: "assistant",
}
_PARSE_ALIASES = {"human": ROLE_HUMAN, "bot": ROLE_BOT}

_ZWSP = "​"
_ESCAPES = {
    IM_START: f"<{_ZWSP}|im_start|>",
    IM_END: f"<{_ZWSP}|im_end|>",
}

DEFAULT_SYSTEM_PROMPT = "You are a helpful coding assistant."


class ChatMLError(ValueError):
    """Structured render/parse failure with the offending offset."""

    def __init__(self, message: str, offset: int = 0, text: str = ""):
        self.offset = offset
        self.byte_offset = len(text[:offset].encode("utf-8")) if text else offset
        super().__init__(f"{message} (at char {offset})")


class SchemaError(ValueError):
    """Input record does not match the expected task schema."""

    def __init__(self, message: str, fld: str):
        self.field = fld
        super().__init__(f"{message}: field '{fld}'")


@dataclass(frozen=True)
class Turn:
    role: str
    content: str = ""
    open: bool = False  # trailing bot header awaiting generation

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ChatMLError(f"unknown role: {self.role!r}")


@dataclass
class ChatSample:
    turns: list[Turn]
    rendered: str
    mask_spans: list[tuple[int, int]]  # char offsets into rendered, one per bot turn

    def to_json(self) -> dict[str, Any]:
        return {
            "rendered": self.rendered,
            "mask_spans": [list(span) for span in self.mask_spans],
            "meta": {
                "turns": len(self.turns),
                "roles": [t.role for t in self.turns],
            },
        }


def sanitize(content: str) -> str:
    """Neutralize literal chat markers in user-supplied content.

    Inserts a zero-width space after '<' in each marker so the text survives
    visually but can no longer terminate or forge a turn. Idempotent;
    reversible with desanitize for content that did not already contain the
    escaped form.
    """
    for literal, escaped in _ESCAPES.items():
        content = content.replace(literal, escaped)
    return content


def desanitize(content: str) -> str:
    for literal, escaped in _ESCAPES.items():
        content = content.replace(escaped, literal)
    return content


def render_chatml(
    turns: Iterable[Turn],
    role_names: Mapping[str, str] | None = None,
) -> str:
    """Render turns to ChatML text; an open final bot turn renders as a bare
    generation header."""
    role_names = dict(role_names or DEFAULT_ROLE_NAMES)
    turns = list(turns)
    if not turns:
        raise ChatMLError("cannot render an empty turn list")
    parts: list[str] = []
    for i, turn in enumerate(turns):
        name = role_names.get(turn.role)
        if name is None:
            raise ChatMLError(f"no rendered name for role {turn.role!r}")
        if turn.open:
            if i != len(turns) - 1 or turn.role != ROLE_BOT:
                raise ChatMLError("only the final bot turn may be open")
            parts.append(f"{IM_START}{name}\n")
        else:
            parts.append(f"{IM_START}{name}\n{turn.content}\n{IM_END}\n")
    return "".join(parts)


def parse_chatml(
    text: str,
    role_names: Mapping[str, str] | None = None,
) -> list[Turn]:
    """Exact inverse of render_chatml.

    A trailing bare bot header parses as a final open bot turn. Marker
    imbalance or an unknown role raises ChatMLError with the offset.
    """
    role_names = dict(role_names or DEFAULT_ROLE_NAMES)
    name_to_role = {v: k for k, v in role_names.items()}
    name_to_role.update(_PARSE_ALIASES)
    turns: list[Turn] = []
    pos = 0
    n = len(text)
    while pos < n:
        if not text.startswith(IM_START, pos):
            raise ChatMLError("expected turn start marker", pos, text)
        role_start = pos + len(IM_START)
        newline = text.find("\n", role_start)
        if newline == -1:
            raise ChatMLError("turn header missing newline", role_start, text)
        name = text[role_start:newline]
        role = name_to_role.get(name)
        if role is None:
            raise ChatMLError(f"unknown role name {name!r}", role_start, text)
        body_start = newline + 1
        if body_start >= n:
            if role != ROLE_BOT:
                raise ChatMLError("only a bot header may be left open", pos, text)
            turns.append(Turn(role=role, content="", open=True))
            return turns
        end = text.find(f"\n{IM_END}\n", body_start)
        if end == -1:
            raise ChatMLError("missing turn end marker", body_start, text)
        turns.append(Turn(role=role, content=text[body_start:end]))
        pos = end + 1 + len(IM_END) + 1
    if not turns:
        raise ChatMLError("empty input", 0, text)
    return turns


def make_sample(
    turns: Iterable[Turn],
    role_names: Mapping[str, str] | None = None,
    include_end_marker: bool = True,
) -> ChatSample:
    """Render turns and compute the bot-only mask spans in one pass.

    Each closed bot turn contributes one span covering its content, extended
    through "\\n<|im_end|>" when include_end_marker is on (default), so the
    stop marker is learned too. System/human content and all other structure
    stay unmasked.
    """
    role_names = dict(role_names or DEFAULT_ROLE_NAMES)
    turns = list(turns)
    rendered_parts: list[str] = []
    mask_spans: list[tuple[int, int]] = []
    offset = 0
    for i, turn in enumerate(turns):
        name = role_names.get(turn.role)
        if name is None:
            raise ChatMLError(f"no rendered name for role {turn.role!r}")
        if turn.open:
            if i != len(turns) - 1 or turn.role != ROLE_BOT:
                raise ChatMLError("only the final bot turn may be open")
            piece = f"{IM_START}{name}\n"
            rendered_parts.append(piece)
            offset += len(piece)
            continue
        header = f"{IM_START}{name}\n"
        footer = f"\n{IM_END}\n"
        piece = f"{header}{turn.content}{footer}"
        if turn.role == ROLE_BOT:
            start = offset + len(header)
            end = start + len(turn.content)
            if include_end_marker:
                end += 1 + len(IM_END)  # "\n<|im_end|>"
            mask_spans.append((start, end))
        rendered_parts.append(piece)
        offset += len(piece)
    if not rendered_parts:
        raise ChatMLError("cannot render an empty turn list")
    return ChatSample(turns=turns, rendered="".join(rendered_parts), mask_spans=mask_spans)


def loss_mask(sample: ChatSample) -> list[bool]:
    """Character-level boolean mask over the rendered text."""
    mask = [False] * len(sample.rendered)
    for start, end in sample.mask_spans:
        if not 0 <= start <= end <= len(sample.rendered):
            raise ChatMLError(f"mask span {(start, end)} out of bounds")
        for i in range(start, end):
            mask[i] = True
    return mask


def project_mask_to_tokens(
    sample: ChatSample,
    token_offsets: Iterable[tuple[int, int]],
) -> list[bool]:
    """Bridge a char-level mask onto any tokenizer's (start, end) offsets.

    A token is masked iff it overlaps a masked region; tokenizer-agnostic by
    design.
    """
    spans = sample.mask_spans
    out: list[bool] = []
    for t_start, t_end in token_offsets:
        out.append(any(t_start < end and start < t_end for start, end in spans))
    return out


def extract_masked_regions(sample: ChatSample) -> list[str]:
    return [sample.rendered[start:end] for start, end in sample.mask_spans]


# ---------------------------------------------------------------------------
# JSON task schemas -> turns
# ---------------------------------------------------------------------------

TASK_INSTRUCTION = "instruction"
TASK_CHAT = "chat"
TASK_FEWSHOT = "fewshot"
TASK_TYPES = (TASK_INSTRUCTION, TASK_CHAT, TASK_FEWSHOT)

_CHAT_ROLE_MAP = {
    "system": ROLE_SYSTEM,
    "human": ROLE_HUMAN, "user": ROLE_HUMAN,
    "bot": ROLE_BOT, "assistant": ROLE_BOT,
}


def _require(record: Mapping[str, Any], fld: str, kind: type) -> Any:
    if fld not in record:
        raise SchemaError("missing required field", fld)
    value = record[fld]
    if not isinstance(value, kind):
        raise SchemaError(f"expected {kind.__name__}", fld)
    return value


def from_json_record(
    record: Mapping[str, Any],
    task_type: str = TASK_INSTRUCTION,
    system_prompt: str = DEFAULT_SYSTEM_PROMPT,
    fold_examples_into_system: bool = True,
) -> list[Turn]:
    """Deterministic mapping from a task JSON record to sanitized turns.

    Schemas: instruction {instruction, output, system?}; chat {messages:
    [{role, content}, ...], system?}; fewshot adds examples: [{input,
    output}, ...] folded into the system prompt (or the first human turn).
    """
    if task_type not in TASK_TYPES:
        raise SchemaError(f"unknown task type {task_type!r}", "task_type")
    system_text = record.get("system") or system_prompt

    if task_type == TASK_CHAT:
        messages = _require(record, "messages", list)
        turns = []
        for i, message in enumerate(messages):
            if not isinstance(message, dict):
                raise SchemaError("message must be an object", f"messages[{i}]")
            role_raw = message.get("role")
            role = _CHAT_ROLE_MAP.get(str(role_raw).lower()) if role_raw else None
            if role is None:
                raise SchemaError(f"unknown role {role_raw!r}", f"messages[{i}].role")
            if "content" not in message:
                raise SchemaError("missing required field", f"messages[{i}].content")
            turns.append(Turn(role=role, content=sanitize(str(message["content"]))))
        if not turns:
            raise SchemaError("messages must be non-empty", "messages")
        if turns[0].role != ROLE_SYSTEM:
            turns.insert(0, Turn(role=ROLE_SYSTEM, content=sanitize(system_text)))
        return turns

    instruction = _require(record, "instruction", str)
    output = _require(record, "output", str)
    if task_type == TASK_FEWSHOT:
        examples = _require(record, "examples", list)
        shots: list[str] = []
        for i, example in enumerate(examples):
            if not isinstance(example, dict) or "input" not in example or "output" not in example:
                raise SchemaError("example needs input and output", f"examples[{i}]")
            shots.append(f"Input: {example['input']}\nOutput: {example['output']}")
        shot_text = "\n\n".join(shots)
        if fold_examples_into_system:
            system_text = f"{system_text}\n\nExamples:\n{shot_text}"
        else:
            instruction = f"Examples:\n{shot_text}\n\n{instruction}"
    return [
        Turn(role=ROLE_SYSTEM, content=sanitize(system_text)),
        Turn(role=ROLE_HUMAN, content=sanitize(instruction)),
        Turn(role=ROLE_BOT, content=sanitize(output)),
    ]


def pair_to_record(pair_row: Mapping[str, Any], flip: bool = False) -> dict[str, Any]:
    """Instruction record from a mined code/comment pair row.

    Default direction asks for a comment given code (code-comment task);
    flipped asks for code given the comment (code-generation seed).
    """
    code = f"{pair_row['signature']}\n{pair_row['body']}" if pair_row.get("signature") \
        else pair_row["body"]
    if flip:
        return {
            "instruction": f"Write a {pair_row['language']} function that does the "
                           f"following:\n{pair_row['comment']}",
            "output": code,
        }
    return {
        "instruction": f"Write a documentation comment for this {pair_row['language']} "
                       f"function:\n{code}",
        "output": pair_row["comment"],
    }
