"""Interleaved text/audio token streams.

Audio arrives as frames of L codeword indices (one per quantizer
layer). Text tokens are opaque integer ids from an external tokenizer.
A stream is an alternating run of text and audio segments whose layout
is fixed by its format tag; on the wire, modality boundaries are marked
by switch tokens and every audio run ends with one end-of-audio frame.

The end-of-audio marker is frame-shaped: layer l uses the special index
K_l, one past its codebook, so each layer's embedding vocabulary is
K_l + 1 and the terminator embeds like any other frame.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidConfig,
    InvalidStream,
    IndexOutOfRange,
    MalformedWire,
    ShapeMismatch,
)

FORMAT_TAGS = ("ASR", "AQA", "S2TT", "INTLV", "TTS", "ITTS", "PURE_AUDIO")


class SegmentKind(enum.Enum):
    TEXT = "text"
    AUDIO = "audio"


@dataclass(frozen=True)
class TokenFrame:
    """One audio frame: a tuple of per-layer codeword indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if not self.indices:
            raise InvalidStream("a frame needs at least one layer index")
        if any(i < 0 for i in self.indices):
            raise InvalidStream(f"negative index in frame {self.indices}")

    @property
    def n_layers(self) -> int:
        return len(self.indices)


def eoa_frame(layer_sizes) -> TokenFrame:
    """The end-of-audio frame: index K_l in every layer."""
    return TokenFrame(tuple(int(k) for k in layer_sizes))


def is_eoa(frame: TokenFrame, layer_sizes) -> bool:
    sizes = tuple(int(k) for k in layer_sizes)
    if len(frame.indices) != len(sizes):
        raise ShapeMismatch(
            f"frame has {len(frame.indices)} layers, expected {len(sizes)}"
        )
    return frame.indices == sizes


def validate_frame(frame: TokenFrame, layer_sizes) -> None:
    """Check layer count, index ranges, and the all-or-none EOA rule."""
    sizes = tuple(int(k) for k in layer_sizes)
    if len(frame.indices) != len(sizes):
        raise InvalidStream(
            f"frame has {len(frame.indices)} layers, expected {len(sizes)}"
        )
    at_eoa = [i == k for i, k in zip(frame.indices, sizes)]
    for i, k in zip(frame.indices, sizes):
        if i > k:
            raise InvalidStream(f"index {i} exceeds end-of-audio value {k}")
    if any(at_eoa) and not all(at_eoa):
        raise InvalidStream(
            f"end-of-audio value in some layers but not all: {frame.indices}"
        )


@dataclass(frozen=True)
class Segment:
    """A maximal run of one modality; payload must be non-empty."""

    kind: SegmentKind
    tokens: tuple[int, ...] = ()
    frames: tuple[TokenFrame, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.kind is SegmentKind.TEXT:
            if not self.tokens or self.frames:
                raise InvalidStream("text segment needs tokens and no frames")
            if any(t < 0 for t in self.tokens):
                raise InvalidStream("text token ids must be non-negative")
        else:
            if not self.frames or self.tokens:
                raise InvalidStream("audio segment needs frames and no tokens")

    def __len__(self) -> int:
        return len(self.tokens) if self.kind is SegmentKind.TEXT else len(self.frames)


def text_segment(tokens) -> Segment:
    return Segment(kind=SegmentKind.TEXT, tokens=tuple(tokens))


def audio_segment(frames) -> Segment:
    return Segment(kind=SegmentKind.AUDIO, frames=tuple(frames))


def _check_grammar(tag: str, kinds: list[SegmentKind]) -> None:
    T, A = SegmentKind.TEXT, SegmentKind.AUDIO
    if not kinds:
        return  # the empty stream is a degenerate member of every format
    if tag in ("ASR", "AQA", "S2TT"):
        if kinds != [T, A, T]:
            raise InvalidStream(f"{tag} layout must be text, audio, text")
    elif tag == "TTS":
        if kinds != [T, A]:
            raise InvalidStream("TTS layout must be text, audio")
    elif tag == "PURE_AUDIO":
        if kinds != [A]:
            raise InvalidStream("PURE_AUDIO layout must be a single audio segment")
    elif tag == "ITTS":
        # one or more (text, audio) pairs
        if len(kinds) % 2 != 0 or any(
            k is not (T if i % 2 == 0 else A) for i, k in enumerate(kinds)
        ):
            raise InvalidStream("ITTS layout must be text-audio pairs")
    elif tag == "INTLV":
        # strict alternation with >= 2 segments; either modality may lead
        if len(kinds) < 2:
            raise InvalidStream("INTLV needs at least two segments")


@dataclass(frozen=True)
class InterleavedStream:
    """Alternating text/audio segments under a Table-style format tag."""

    format_tag: str
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.format_tag not in FORMAT_TAGS:
            raise InvalidConfig(f"unknown format tag {self.format_tag!r}")
        for prev, cur in zip(self.segments, self.segments[1:]):
            if prev.kind is cur.kind:
                raise InvalidStream("adjacent segments share a modality")
        _check_grammar(self.format_tag, [s.kind for s in self.segments])

    def n_audio_frames(self) -> int:
        return sum(
            len(s.frames) for s in self.segments if s.kind is SegmentKind.AUDIO
        )

    def n_text_tokens(self) -> int:
        return sum(
            len(s.tokens) for s in self.segments if s.kind is SegmentKind.TEXT
        )


@dataclass(frozen=True)
class SpecialTokens:
    """Modality-switch ids, distinct and in the text-id space.

    switch_ta opens an audio run (text-to-audio), switch_at opens a
    text run (audio-to-text). Two tokens keep deserialization free of
    lookahead.
    """

    switch_ta: int
    switch_at: int

    def __post_init__(self):
        if self.switch_ta < 0 or self.switch_at < 0:
            raise InvalidConfig("switch token ids must be non-negative")
        if self.switch_ta == self.switch_at:
            raise InvalidConfig("switch tokens must be distinct")

    @property
    def ids(self) -> frozenset[int]:
        return frozenset((self.switch_ta, self.switch_at))


@dataclass(frozen=True)
class LossMask:
    """One flag per wire position; true = position contributes to loss."""

    flags: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "flags", tuple(bool(f) for f in self.flags))

    def __len__(self) -> int:
        return len(self.flags)


def serialize(
    stream: InterleavedStream,
    special: SpecialTokens,
    layer_sizes,
    *,
    edge_switches: bool = False,
) -> list:
    """Flatten a stream to wire tokens: ints for text, TokenFrames for audio.

    Each interior modality boundary emits its switch token and every
    audio run is closed by one end-of-audio frame. edge_switches adds
    an opening switch before the first segment and a closing one after
    the last; the default wire has no switches at the edges.
    """
    sizes = tuple(int(k) for k in layer_sizes)
    eoa = eoa_frame(sizes)
    wire: list = []

    def opening_switch(kind: SegmentKind) -> int:
        return special.switch_ta if kind is SegmentKind.AUDIO else special.switch_at

    for pos, seg in enumerate(stream.segments):
        if pos > 0 or edge_switches:
            wire.append(opening_switch(seg.kind))
        if seg.kind is SegmentKind.TEXT:
            for t in seg.tokens:
                if t in special.ids:
                    raise InvalidStream(
                        f"text payload contains switch token id {t}"
                    )
                wire.append(t)
        else:
            for frame in seg.frames:
                validate_frame(frame, sizes)
                if is_eoa(frame, sizes):
                    raise InvalidStream("end-of-audio frame inside an audio run")
                wire.append(frame)
            wire.append(eoa)
    if edge_switches and stream.segments:
        last = stream.segments[-1].kind
        # the switch that would transition out of the final modality
        wire.append(
            special.switch_ta if last is SegmentKind.TEXT else special.switch_at
        )
    return wire


def deserialize(
    wire: list,
    format_tag: str,
    special: SpecialTokens,
    layer_sizes,
    *,
    edge_switches: bool = False,
) -> InterleavedStream:
    """Parse wire tokens back into a stream; inverse of serialize.

    The tag is supplied by the caller since the wire does not carry it.
    Raises MalformedWire on framing violations: a switch with nothing
    after it, an audio run without its end-of-audio frame, a frame in
    text position, or a switch pointing the wrong way.
    """
    sizes = tuple(int(k) for k in layer_sizes)
    tokens = list(wire)
    if edge_switches and tokens:
        first, last = tokens[0], tokens[-1]
        if isinstance(first, int) and first in special.ids:
            tokens = tokens[1:]
        if tokens and isinstance(last, int) and last in special.ids:
            tokens = tokens[:-1]

    segments: list[Segment] = []
    text_run: list[int] = []
    frame_run: list[TokenFrame] = []
    mode: SegmentKind | None = None  # set by the first payload token
    run_closed = False  # audio mode only: saw EOA, awaiting switch or end

    def flush_text():
        if not text_run:
            raise MalformedWire("empty text run")
        segments.append(text_segment(text_run))
        text_run.clear()

    def flush_audio():
        if not frame_run:
            raise MalformedWire("empty audio run")
        segments.append(audio_segment(frame_run))
        frame_run.clear()

    for item in tokens:
        if isinstance(item, TokenFrame):
            try:
                validate_frame(item, sizes)
            except InvalidStream as exc:
                raise MalformedWire(str(exc)) from exc
            if mode is SegmentKind.TEXT:
                raise MalformedWire("audio frame inside a text run")
            if run_closed:
                raise MalformedWire("audio frame after end-of-audio")
            mode = SegmentKind.AUDIO
            if is_eoa(item, sizes):
                flush_audio()
                run_closed = True
            else:
                frame_run.append(item)
        elif isinstance(item, (int, np.integer)):
            item = int(item)
            if item == special.switch_ta:
                if mode is not SegmentKind.TEXT:
                    raise MalformedWire("text-to-audio switch outside a text run")
                flush_text()
                mode = SegmentKind.AUDIO
                run_closed = False
            elif item == special.switch_at:
                if mode is not SegmentKind.AUDIO or not run_closed:
                    raise MalformedWire("audio-to-text switch outside a closed audio run")
                mode = SegmentKind.TEXT
                run_closed = False
            else:
                if mode is SegmentKind.AUDIO:
                    if not run_closed:
                        raise MalformedWire("text token inside an audio run")
                    raise MalformedWire("text token after audio without a switch")
                mode = SegmentKind.TEXT
                text_run.append(item)
        else:
            raise MalformedWire(f"unrecognized wire item {item!r}")

    # a dangling trailing switch dies here: switch_ta leaves an open audio
    # run, switch_at leaves an empty text run
    if mode is SegmentKind.TEXT:
        flush_text()
    elif mode is SegmentKind.AUDIO and not run_closed:
        raise MalformedWire("wire ends mid-audio-run without end-of-audio")

    return InterleavedStream(format_tag=format_tag, segments=tuple(segments))


def _segment_flags(stream: InterleavedStream) -> list[bool]:
    tag = stream.format_tag
    flags = []
    for pos, seg in enumerate(stream.segments):
        if tag == "INTLV":
            flags.append(seg.kind is SegmentKind.TEXT)
        elif tag == "ITTS":
            flags.append(pos > 0)
        elif tag in ("ASR", "AQA", "S2TT"):
            flags.append(pos == 2)
        elif tag == "TTS":
            flags.append(seg.kind is SegmentKind.AUDIO)
        else:  # PURE_AUDIO
            flags.append(True)
    return flags


def build_loss_mask(stream: InterleavedStream) -> LossMask:
    """Per-wire-position loss flags following the format's masking rule.

    INTLV trains on text only; ITTS on everything after the first text
    segment; ASR/AQA/S2TT on the final (response) text; TTS on audio;
    PURE_AUDIO on all positions. A switch token inherits the flag of
    the segment it opens, and an end-of-audio frame the flag of its
    run. Mask length equals the default serialized length.
    """
    seg_flags = _segment_flags(stream)
    flags: list[bool] = []
    for pos, (seg, flag) in enumerate(zip(stream.segments, seg_flags)):
        if pos > 0:
            flags.append(flag)  # the switch opening this segment
        flags.extend([flag] * len(seg))
        if seg.kind is SegmentKind.AUDIO:
            flags.append(flag)  # the end-of-audio frame
    return LossMask(flags=tuple(flags))


@dataclass(frozen=True)
class EmbeddingSpec:
    """Per-layer embedding vocabularies: K_l + 1 rows each.

    The extra row embeds the end-of-audio index. A frame embeds as the
    sum of its per-layer lookups.
    """

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "layer_sizes", tuple(int(k) for k in self.layer_sizes)
        )
        if not self.layer_sizes or any(k <= 0 for k in self.layer_sizes):
            raise InvalidConfig("layer sizes must be positive")

    @property
    def vocab_sizes(self) -> tuple[int, ...]:
        return tuple(k + 1 for k in self.layer_sizes)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes)


def sum_embeddings(
    frame: TokenFrame, tables: list[np.ndarray], spec: EmbeddingSpec | None = None
) -> np.ndarray:
    """Sum of per-layer table rows selected by the frame's indices."""
    if frame.n_layers != len(tables):
        raise ShapeMismatch(
            f"frame has {frame.n_layers} layers but {len(tables)} tables given"
        )
    arrays = [np.asarray(t, dtype=np.float64) for t in tables]
    dims = {a.shape[1] for a in arrays}
    if any(a.ndim != 2 for a in arrays) or len(dims) != 1:
        raise ShapeMismatch("embedding tables must be 2-D with a shared width")
    if spec is not None:
        if spec.n_layers != len(arrays):
            raise ShapeMismatch("spec layer count does not match tables")
        for layer, (a, want) in enumerate(zip(arrays, spec.vocab_sizes)):
            if a.shape[0] != want:
                raise ShapeMismatch(
                    f"table {layer} has {a.shape[0]} rows, spec wants {want}"
                )
    out = np.zeros(arrays[0].shape[1])
    for layer, (a, idx) in enumerate(zip(arrays, frame.indices)):
        if idx >= a.shape[0]:
            raise IndexOutOfRange(
                f"index {idx} outside table {layer} with {a.shape[0]} rows"
            )
        out += a[idx]
    return out


def frames_per_second_check(
    stream: InterleavedStream, audio_duration_s: float
) -> float:
    """Audio frame count over duration; the framing-rate diagnostic."""
    if audio_duration_s <= 0:
        raise InvalidConfig("audio duration must be positive")
    return stream.n_audio_frames() / float(audio_duration_s)
