"""Desk-scale interleaved-data assembly.

Aligned (text, audio-token) pairs become INTLV or ITTS records: INTLV
alternates whole utterances across modalities, ITTS emits each pair as
text followed by its audio. Text segmentation is rule-based splitting
on sentence-ending punctuation; upstream LLM-driven normalization is
out of scope. A provenance tag (crawl or synthetic) rides along
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .errors import InsufficientData, InvalidConfig, InvalidStream
from .seeding import make_rng
from .streams import (
    InterleavedStream,
    Segment,
    TokenFrame,
    audio_segment,
    text_segment,
)

# English and Chinese sentence enders.
DEFAULT_PUNCTUATION = frozenset({".", "!", "?", ";", "。", "！", "？", "；"})

PROVENANCE_TAGS = ("crawl", "synthetic")

Tokenizer = Callable[[str], list[int]]


def byte_tokenizer(text: str) -> list[int]:
    """UTF-8 bytes as token ids (0..255); a stand-in, not a tokenizer."""
    return list(text.encode("utf-8"))


@dataclass(frozen=True)
class AlignedPair:
    """One utterance with its transcript, token frames, and provenance."""

    text: str
    frames: tuple[TokenFrame, ...]
    duration_s: float
    provenance: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.duration_s <= 0:
            raise InvalidConfig(f"duration must be positive, got {self.duration_s}")
        if self.provenance not in PROVENANCE_TAGS:
            raise InvalidConfig(f"provenance must be one of {PROVENANCE_TAGS}")
        if not self.text and not self.frames:
            raise InvalidConfig("a pair needs text or frames")


def segment_text(text: str, rules=DEFAULT_PUNCTUATION) -> list[str]:
    """Split after every rule character; lossless, empty pieces dropped.

    join(segments) == text always holds, since each delimiter stays
    attached to the piece it ends.
    """
    if not rules:
        raise InvalidConfig("punctuation rule set must be non-empty")
    rule_set = set(rules)
    pieces: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch in rule_set:
            pieces.append(text[start : i + 1])
            start = i + 1
    if start < len(text):
        pieces.append(text[start:])
    return pieces


def build_intlv(
    pairs: list[AlignedPair],
    alternation_seed: int = 0,
    *,
    tokenize: Tokenizer = byte_tokenizer,
    start_with_text: bool | None = False,
) -> InterleavedStream:
    """Interleave consecutive pairs into an INTLV record.

    Default layout starts with audio: pair 0 contributes its frames,
    pair 1 its text, and so on. start_with_text=True flips the roles;
    None picks the leading modality by coin flip from alternation_seed
    (the seed has no effect otherwise, since the layout is pinned).
    """
    if len(pairs) < 2:
        raise InsufficientData(f"INTLV needs at least 2 pairs, got {len(pairs)}")
    if start_with_text is None:
        start_with_text = bool(make_rng(alternation_seed, "intlv-start").integers(0, 2))

    segments: list[Segment] = []
    for i, pair in enumerate(pairs):
        wants_text = (i % 2 == 0) == start_with_text
        if wants_text:
            ids = tokenize(pair.text)
            if not ids:
                raise InvalidStream(f"pair {i} supplies no text tokens")
            segments.append(text_segment(ids))
        else:
            if not pair.frames:
                raise InvalidStream(f"pair {i} supplies no frames")
            segments.append(audio_segment(pair.frames))
    return InterleavedStream(format_tag="INTLV", segments=tuple(segments))


def build_itts(
    pairs: list[AlignedPair], *, tokenize: Tokenizer = byte_tokenizer
) -> InterleavedStream:
    """Emit each pair as text followed by its frames; format ITTS."""
    if not pairs:
        raise InsufficientData("ITTS needs at least 1 pair")
    segments: list[Segment] = []
    for i, pair in enumerate(pairs):
        ids = tokenize(pair.text)
        if not ids or not pair.frames:
            raise InvalidStream(f"pair {i} must carry both text and frames")
        segments.append(text_segment(ids))
        segments.append(audio_segment(pair.frames))
    return InterleavedStream(format_tag="ITTS", segments=tuple(segments))


@dataclass
class CorpusStats:
    """Per-format record counts plus corpus-level totals."""

    records_per_format: dict[str, int] = field(default_factory=dict)
    audio_hours: float = 0.0
    text_tokens: int = 0
    audio_frames: int = 0

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        counts = dict(self.records_per_format)
        for tag, n in other.records_per_format.items():
            counts[tag] = counts.get(tag, 0) + n
        return CorpusStats(
            records_per_format=counts,
            audio_hours=self.audio_hours + other.audio_hours,
            text_tokens=self.text_tokens + other.text_tokens,
            audio_frames=self.audio_frames + other.audio_frames,
        )

    def to_dict(self) -> dict:
        return {
            "records_per_format": {
                tag: self.records_per_format[tag]
                for tag in sorted(self.records_per_format)
            },
            "audio_hours": self.audio_hours,
            "text_tokens": self.text_tokens,
            "audio_frames": self.audio_frames,
        }


def corpus_stats(records: list[tuple[InterleavedStream, float]]) -> CorpusStats:
    """Single-pass totals over (stream, duration_s) records."""
    counts: dict[str, int] = {}
    hours = 0.0
    text_tokens = 0
    audio_frames = 0
    for stream, duration_s in records:
        if duration_s < 0:
            raise InvalidConfig("record duration must be >= 0")
        counts[stream.format_tag] = counts.get(stream.format_tag, 0) + 1
        hours += duration_s / 3600.0
        text_tokens += stream.n_text_tokens()
        audio_frames += stream.n_audio_frames()
    return CorpusStats(
        records_per_format=counts,
        audio_hours=hours,
        text_tokens=text_tokens,
        audio_frames=audio_frames,
    )
