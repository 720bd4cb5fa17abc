"""Shared types, response parsing, frame selection and dataset files."""

from __future__ import annotations

import hashlib
import json
import os
import re
import string
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

LETTERS = string.ascii_uppercase

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"

_WELL_FORMED = re.compile(
    r"\A\s*<think>(?P<think>.*?)</think>\s*<answer>(?P<answer>.*?)</answer>\s*\Z",
    re.DOTALL,
)
_ANSWER_BLOCK = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_STRIP_CHARS = set(string.whitespace) | set(string.punctuation)


class DatasetError(ValueError):
    """A dataset file could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


# --------------------------------------------------------------------------- videos


@dataclass(frozen=True)
class SyntheticVideo:
    """A synthetic video: one evidence label (or None) per frame."""

    video_id: str
    frame_evidence: tuple[Optional[str], ...]
    difficulty: str = "easy"
    evidence_window: Optional[tuple[int, int]] = None
    resolve_budget: Optional[int] = None
    kind: str = field(default="synthetic", init=False)

    @property
    def total_frames(self) -> int:
        return len(self.frame_evidence)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "synthetic",
            "video_id": self.video_id,
            "difficulty": self.difficulty,
            "evidence_window": list(self.evidence_window) if self.evidence_window else None,
            "resolve_budget": self.resolve_budget,
            "frame_evidence": list(self.frame_evidence),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SyntheticVideo":
        window = d.get("evidence_window")
        return cls(
            video_id=str(d["video_id"]),
            frame_evidence=tuple(d["frame_evidence"]),
            difficulty=d.get("difficulty", "easy"),
            evidence_window=tuple(window) if window else None,
            resolve_budget=d.get("resolve_budget"),
        )


@dataclass(frozen=True)
class ExternalVideo:
    """A real video addressed by URI. Frames are pre-extracted image references.

    Either ``frames`` lists one image URI per frame, or ``frame_template`` is a
    ``str.format`` pattern taking the frame index.
    """

    uri: str
    total_frames: int
    frames: Optional[tuple[str, ...]] = None
    frame_template: Optional[str] = None
    kind: str = field(default="external", init=False)

    def __post_init__(self):
        if self.total_frames < 1:
            raise ValueError("total_frames must be positive")
        if self.frames is not None and len(self.frames) != self.total_frames:
            raise ValueError("frames must list exactly total_frames references")

    @property
    def video_id(self) -> str:
        return self.uri

    @property
    def difficulty(self) -> Optional[str]:
        return None

    def frame_ref(self, index: int) -> str:
        if self.frames is not None:
            return self.frames[index]
        if self.frame_template is not None:
            return self.frame_template.format(index)
        return f"{self.uri}#frame={index}"

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": "external", "uri": self.uri, "total_frames": self.total_frames}
        if self.frames is not None:
            d["frames"] = list(self.frames)
        if self.frame_template is not None:
            d["frame_template"] = self.frame_template
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExternalVideo":
        frames = d.get("frames")
        return cls(
            uri=str(d["uri"]),
            total_frames=int(d["total_frames"]),
            frames=tuple(frames) if frames is not None else None,
            frame_template=d.get("frame_template"),
        )


VideoRef = Union[SyntheticVideo, ExternalVideo]


def video_from_dict(d: dict[str, Any]) -> VideoRef:
    kind = d.get("kind")
    if kind == "synthetic":
        return SyntheticVideo.from_dict(d)
    if kind == "external":
        return ExternalVideo.from_dict(d)
    raise ValueError(f"unknown video kind {kind!r}")


# --------------------------------------------------------------------------- samples


@dataclass(frozen=True)
class McqaSample:
    id: str
    video: VideoRef
    question: str
    options: tuple[tuple[str, str], ...]
    gt_answer: str

    def __post_init__(self):
        n = len(self.options)
        if not 2 <= n <= 26:
            raise ValueError(f"sample {self.id}: need 2..26 options, got {n}")
        letters = tuple(letter for letter, _ in self.options)
        if letters != tuple(LETTERS[:n]):
            raise ValueError(f"sample {self.id}: option letters must be A.. in order, got {letters}")
        if self.gt_answer not in letters:
            raise ValueError(f"sample {self.id}: gt_answer {self.gt_answer!r} is not an option letter")

    @property
    def n_options(self) -> int:
        return len(self.options)

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(letter for letter, _ in self.options)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "video": self.video.to_dict(),
            "question": self.question,
            "options": [{"letter": l, "text": t} for l, t in self.options],
            "gt_answer": self.gt_answer,
        }


@dataclass(frozen=True)
class ParsedResponse:
    raw: str
    well_formed_format: bool
    think: Optional[str] = None
    answer: Optional[str] = None


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 1.0
    top_p: float = 1.0
    max_tokens: int = 1024
    stop_sentinel: str = ANSWER_CLOSE

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class FrameBudget:
    frames: int
    n_init: int
    n_max: int

    def __post_init__(self):
        if not (0 < self.n_init <= self.frames <= self.n_max):
            raise ValueError(f"need 0 < n_init <= frames <= n_max, got {self}")


# --------------------------------------------------------------------------- parsing


def extract_answer(answer_block: str, n_options: int) -> Optional[str]:
    """Normalize an answer block to a single option letter, or None."""
    if n_options < 2:
        raise ValueError("n_options must be >= 2")
    kept = "".join(ch for ch in answer_block if ch not in _STRIP_CHARS).upper()
    if len(kept) == 1 and kept in LETTERS[:n_options]:
        return kept
    return None


@lru_cache(maxsize=1 << 16)  # sampled replies repeat a lot; results are immutable
def parse_response(raw: str, n_options: int = 26) -> ParsedResponse:
    well_formed = False
    think = None
    m = _WELL_FORMED.match(raw)
    if m and all(raw.count(tag) == 1 for tag in (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)):
        well_formed = True
        think = m.group("think").strip()

    answer = None
    blocks = _ANSWER_BLOCK.findall(raw)
    if len(blocks) == 1:
        answer = extract_answer(blocks[0], n_options)
    return ParsedResponse(raw=raw, well_formed_format=well_formed, think=think, answer=answer)


def render_response(think: str, answer: str) -> str:
    return f"{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"


# --------------------------------------------------------------------------- frames


def frame_indices(total_frames: int, budget: int, rule: str = "uniform") -> list[int]:
    """Frame indices observed when ``budget`` frames are requested.

    ``uniform`` takes ``floor(k * total_frames / budget)`` for k < budget, deduplicated;
    ``first`` takes the leading ``budget`` frames.
    """
    return list(_frame_indices(total_frames, budget, rule))


@lru_cache(maxsize=1024)
def _frame_indices(total_frames: int, budget: int, rule: str) -> tuple[int, ...]:
    if total_frames < 1 or budget < 1:
        raise ValueError("total_frames and budget must be positive")
    if rule == "first":
        return tuple(range(min(budget, total_frames)))
    if rule != "uniform":
        raise ValueError(f"unknown frame rule {rule!r}")
    if budget >= total_frames:
        return tuple(range(total_frames))
    return tuple(k * total_frames // budget for k in range(budget))


# --------------------------------------------------------------------------- seeds


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from arbitrary parts; independent of PYTHONHASHSEED."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big") >> 1


_MASK63 = (1 << 63) - 1


def mix_seed(base: int, offset: int) -> int:
    """Cheap child seed for hot loops: one Weyl step from ``base``.

    Only meant for seeding numpy generators or endpoints, which hash the seed again.
    """
    return (base + 0x9E3779B97F4A7C15 * (offset + 1)) & _MASK63


# --------------------------------------------------------------------------- dataset io


def _sample_from_dict(d: Any, line: int) -> McqaSample:
    if not isinstance(d, dict):
        raise DatasetError("record is not an object", line)
    for key in ("id", "video", "question", "options", "gt_answer"):
        if key not in d:
            raise DatasetError(f"missing field {key!r}", line, key)
    try:
        video = video_from_dict(d["video"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"invalid field 'video': {exc}", line, "video") from exc
    try:
        options = tuple((str(o["letter"]), str(o["text"])) for o in d["options"])
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"invalid field 'options': {exc}", line, "options") from exc
    try:
        return McqaSample(
            id=str(d["id"]),
            video=video,
            question=str(d["question"]),
            options=options,
            gt_answer=str(d["gt_answer"]),
        )
    except ValueError as exc:
        fld = "gt_answer" if "gt_answer" in str(exc) else "options"
        raise DatasetError(str(exc), line, fld) from exc


def dumps_record(record: dict[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def load_dataset(path: Union[str, Path]) -> list[McqaSample]:
    samples: list[McqaSample] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", lineno) from exc
            sample = _sample_from_dict(d, lineno)
            if sample.id in seen:
                raise DatasetError(
                    f"duplicate id {sample.id!r} (first seen on line {seen[sample.id]})", lineno, "id"
                )
            seen[sample.id] = lineno
            samples.append(sample)
    return samples


def write_atomic(path: Union[str, Path], text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: Union[str, Path], records: Iterable[dict[str, Any]]) -> None:
    write_atomic(path, "".join(dumps_record(r) + "\n" for r in records))


def read_jsonl(path: Union[str, Path]) -> list[dict[str, Any]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DatasetError(f"invalid JSON: {exc.msg}", lineno) from exc
    return out


def save_dataset(samples: Sequence[McqaSample], path: Union[str, Path]) -> None:
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DatasetError(f"duplicate id {dup!r}", field="id")
    write_jsonl(path, (s.to_dict() for s in samples))
