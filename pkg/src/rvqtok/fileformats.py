"""Binary and JSON artifact formats.

All binary formats are little-endian with a 4-byte magic:

  AFV1  feature matrices: u32 T, u32 D, f64 frame_rate, T*D float32 rows
  ATK1  token streams: u32 L, L per-layer u32 K, u32 frame count,
        then each frame as L u32 indices
  RVQ1  codebook stacks: u32 n_layers, then per layer u32 K, u32 D,
        f64 ema_decay, f64 norm_beta, K*D float32 codewords,
        K u64 usage counters

Writers are bit-deterministic: the same in-memory values always give
the same bytes. JSON sidecars: interleaved records, eval records, and
manifests as JSON-lines; special tokens and stats as single objects.
"""

from __future__ import annotations

import json
import struct
import wave
from pathlib import Path

import numpy as np

from .errors import EmptyInput, InvalidConfig, MalformedWire, ShapeMismatch
from .mel import AudioBuffer
from .rvq import Codebook, RvqStack
from .streams import (
    InterleavedStream,
    LossMask,
    Segment,
    SegmentKind,
    SpecialTokens,
    TokenFrame,
    audio_segment,
    text_segment,
)
from .metrics import EvalRecord

AFV1_MAGIC = b"AFV1"
ATK1_MAGIC = b"ATK1"
RVQ1_MAGIC = b"RVQ1"

_AFV1_HEADER = struct.Struct("<4sIId")
_RVQ1_LAYER_HEADER = struct.Struct("<IIdd")


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise MalformedWire(f"truncated file while reading {what}")
    return data


# ---------------------------------------------------------------- AFV1

def write_afv1(path, vectors: np.ndarray, frame_rate: float) -> None:
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2:
        raise ShapeMismatch(f"feature matrix must be T x D, got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_AFV1_HEADER.pack(AFV1_MAGIC, arr.shape[0], arr.shape[1], frame_rate))
        fh.write(arr.tobytes())


def read_afv1(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        magic, t, d, frame_rate = _AFV1_HEADER.unpack(
            _read_exact(fh, _AFV1_HEADER.size, "AFV1 header")
        )
        if magic != AFV1_MAGIC:
            raise MalformedWire(f"bad magic {magic!r}, expected AFV1")
        body = _read_exact(fh, 4 * t * d, "AFV1 body")
        if fh.read(1):
            raise MalformedWire("trailing bytes after AFV1 body")
    vectors = np.frombuffer(body, dtype="<f4").reshape(t, d).astype(np.float64)
    return vectors, frame_rate


# ---------------------------------------------------------------- ATK1

def write_atk1(path, frames: list[TokenFrame], layer_sizes) -> None:
    sizes = tuple(int(k) for k in layer_sizes)
    if not sizes:
        raise InvalidConfig("layer sizes must be non-empty")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", ATK1_MAGIC, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack("<I", len(frames)))
        for frame in frames:
            if frame.n_layers != len(sizes):
                raise ShapeMismatch(
                    f"frame has {frame.n_layers} layers, file has {len(sizes)}"
                )
            fh.write(struct.pack(f"<{len(sizes)}I", *frame.indices))


def read_atk1(path) -> tuple[list[TokenFrame], tuple[int, ...]]:
    with open(path, "rb") as fh:
        magic, n_layers = struct.unpack("<4sI", _read_exact(fh, 8, "ATK1 header"))
        if magic != ATK1_MAGIC:
            raise MalformedWire(f"bad magic {magic!r}, expected ATK1")
        if n_layers == 0:
            raise MalformedWire("ATK1 with zero layers")
        sizes = struct.unpack(
            f"<{n_layers}I", _read_exact(fh, 4 * n_layers, "ATK1 layer sizes")
        )
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "ATK1 frame count"))
        frames = []
        for _ in range(count):
            idx = struct.unpack(
                f"<{n_layers}I", _read_exact(fh, 4 * n_layers, "ATK1 frame")
            )
            frames.append(TokenFrame(indices=idx))
        if fh.read(1):
            raise MalformedWire("trailing bytes after ATK1 frames")
    return frames, sizes


# ---------------------------------------------------------------- RVQ1

def write_rvq1(path, stack: RvqStack) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", RVQ1_MAGIC, stack.n_layers))
        for book in stack.layers:
            fh.write(
                _RVQ1_LAYER_HEADER.pack(
                    book.size, book.dim, book.ema_decay, book.norm_beta
                )
            )
            fh.write(np.ascontiguousarray(book.vectors, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(book.usage_counts, dtype="<u8").tobytes())


def read_rvq1(path) -> RvqStack:
    layers = []
    with open(path, "rb") as fh:
        magic, n_layers = struct.unpack("<4sI", _read_exact(fh, 8, "RVQ1 header"))
        if magic != RVQ1_MAGIC:
            raise MalformedWire(f"bad magic {magic!r}, expected RVQ1")
        if n_layers == 0:
            raise MalformedWire("RVQ1 with zero layers")
        for _ in range(n_layers):
            k, d, alpha, beta = _RVQ1_LAYER_HEADER.unpack(
                _read_exact(fh, _RVQ1_LAYER_HEADER.size, "RVQ1 layer header")
            )
            vec = np.frombuffer(
                _read_exact(fh, 4 * k * d, "RVQ1 codewords"), dtype="<f4"
            ).reshape(k, d)
            usage = np.frombuffer(
                _read_exact(fh, 8 * k, "RVQ1 usage counters"), dtype="<u8"
            )
            layers.append(
                Codebook(
                    vectors=vec.astype(np.float64),
                    ema_decay=alpha,
                    norm_beta=beta,
                    usage_counts=usage.astype(np.int64),
                )
            )
        if fh.read(1):
            raise MalformedWire("trailing bytes after RVQ1 layers")
    return RvqStack(layers)


# ----------------------------------------------------------- audio I/O

def read_wav(path) -> AudioBuffer:
    """16-bit LE mono WAV to samples scaled into [-1, 1]."""
    with wave.open(str(path), "rb") as wav:
        if wav.getnchannels() != 1:
            raise InvalidConfig("only mono WAV is supported")
        if wav.getsampwidth() != 2:
            raise InvalidConfig("only 16-bit WAV is supported")
        rate = wav.getframerate()
        raw = wav.readframes(wav.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples=samples, sample_rate=rate)


def write_wav(path, audio: AudioBuffer) -> None:
    clipped = np.clip(audio.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(audio.sample_rate)
        wav.writeframes(pcm.tobytes())


def read_raw_f32(path, sample_rate: int) -> AudioBuffer:
    samples = np.fromfile(path, dtype="<f4").astype(np.float64)
    return AudioBuffer(samples=samples, sample_rate=sample_rate)


# ------------------------------------------------------------- JSONL

def write_special_tokens(path, special: SpecialTokens) -> None:
    Path(path).write_text(
        json.dumps({"switch_ta": special.switch_ta, "switch_at": special.switch_at})
        + "\n"
    )


def read_special_tokens(path) -> SpecialTokens:
    obj = json.loads(Path(path).read_text())
    return SpecialTokens(switch_ta=int(obj["switch_ta"]), switch_at=int(obj["switch_at"]))


def stream_record(
    stream: InterleavedStream,
    mask: LossMask,
    audio_refs: list[dict],
) -> dict:
    """One interleaved record as a JSON-able dict.

    Audio segments are stored by reference: audio_refs carries one
    {path, start, end} per audio segment, in stream order, indexing the
    named ATK1 file's frame array.
    """
    n_audio = sum(1 for s in stream.segments if s.kind is SegmentKind.AUDIO)
    if n_audio != len(audio_refs):
        raise ShapeMismatch(
            f"{n_audio} audio segments but {len(audio_refs)} frame refs"
        )
    refs = iter(audio_refs)
    segments = []
    for seg in stream.segments:
        if seg.kind is SegmentKind.TEXT:
            segments.append({"kind": "text", "tokens": list(seg.tokens)})
        else:
            ref = next(refs)
            if int(ref["end"]) - int(ref["start"]) != len(seg.frames):
                raise ShapeMismatch(
                    f"frame ref {ref} does not cover {len(seg.frames)} frames"
                )
            segments.append(
                {
                    "kind": "audio",
                    "frames_ref": {
                        "path": str(ref["path"]),
                        "start": int(ref["start"]),
                        "end": int(ref["end"]),
                    },
                }
            )
    return {
        "format": stream.format_tag,
        "segments": segments,
        "mask": [bool(f) for f in mask.flags],
    }


def load_stream_record(obj: dict, frames_by_path) -> tuple[InterleavedStream, LossMask]:
    """Rebuild a stream from a record dict and loaded ATK1 frame lists."""
    segments: list[Segment] = []
    for seg in obj["segments"]:
        if seg["kind"] == "text":
            segments.append(text_segment(seg["tokens"]))
        elif seg["kind"] == "audio":
            ref = seg["frames_ref"]
            frames = frames_by_path[ref["path"]]
            start, end = int(ref["start"]), int(ref["end"])
            if not 0 <= start <= end <= len(frames):
                raise MalformedWire(
                    f"frame range [{start}, {end}) outside ATK1 of {len(frames)}"
                )
            segments.append(audio_segment(frames[start:end]))
        else:
            raise MalformedWire(f"unknown segment kind {seg['kind']!r}")
    stream = InterleavedStream(format_tag=obj["format"], segments=tuple(segments))
    return stream, LossMask(flags=tuple(bool(f) for f in obj["mask"]))


def write_eval_records(path, records: list[EvalRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "prefix": list(rec.prefix),
                        "candidates": [list(c) for c in rec.candidates],
                        "positive": rec.positive_index,
                    }
                )
                + "\n"
            )


def read_eval_records(path) -> list[EvalRecord]:
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    EvalRecord(
                        prefix=tuple(obj["prefix"]),
                        candidates=tuple(tuple(c) for c in obj["candidates"]),
                        positive_index=int(obj["positive"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedWire(f"eval record line {line_no}: {exc}") from exc
    if not records:
        raise EmptyInput("no eval records in file")
    return records


def read_manifest(path) -> list[dict]:
    """Pack-manifest lines {text, atk1_path, frame_range, duration_s, provenance}."""
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedWire(f"manifest line {line_no}: {exc}") from exc
            missing = {"text", "atk1_path", "frame_range", "duration_s"} - set(obj)
            if missing:
                raise MalformedWire(
                    f"manifest line {line_no}: missing {sorted(missing)}"
                )
            obj.setdefault("provenance", "synthetic")
            obj["line_no"] = line_no
            rows.append(obj)
    return rows
