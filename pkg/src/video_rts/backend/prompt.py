"""Chat prompt for lettered multiple-choice video questions."""

from __future__ import annotations

import json
from typing import Any

from ..core import McqaSample

PREAMBLE = (
    "A conversation between User and Assistant. The user asks a question, and the Assistant "
    "solves it. The assistant first thinks about the reasoning process in the mind and then "
    "provides the user with the answer. The reasoning process and answer are enclosed within "
    "<think> </think> and <answer> </answer> tags, respectively, i.e., "
    "<think> reasoning process here </think><answer> answer here </answer>."
)
CLOSING = (
    "Please provide only the single option letter (e.g., A, B, C, D, etc.) "
    "within the <answer> </answer> tags."
)
VIDEO_PART = {"type": "video"}  # expanded into image parts, one per frame, by the client


def build_prompt(sample: McqaSample) -> list[dict[str, Any]]:
    options = "\n".join(f"{letter}: {text}" for letter, text in sample.options)
    head = f"{PREAMBLE}\nVideo: "
    tail = f"\nQuestion: {sample.question}\nOptions:\n{options}\n{CLOSING}"
    return [
        {
            "role": "user",
            "content": [
                {"type": "text", "text": head},
                dict(VIDEO_PART),
                {"type": "text", "text": tail},
            ],
        }
    ]


def prompt_bytes(messages: list[dict[str, Any]]) -> bytes:
    return json.dumps(messages, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode()


def expand_frames(messages: list[dict[str, Any]], frame_refs: list[str]) -> list[dict[str, Any]]:
    """Replaces the video placeholder with image-reference parts in frame order."""
    out = []
    for msg in messages:
        content = msg["content"]
        if isinstance(content, list):
            parts = []
            for part in content:
                if part.get("type") == "video":
                    parts += [{"type": "image_url", "image_url": {"url": ref}} for ref in frame_refs]
                else:
                    parts.append(dict(part))
            msg = {**msg, "content": parts}
        out.append(msg)
    return out
