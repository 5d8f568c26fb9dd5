"""On-disk parallel audio/ultrasound utterances and corpus partitioning.

An utterance is a pair of sibling files sharing a stem: ``<stem>.utr``
(raw scanline frames) and ``<stem>.wav`` (16-bit mono PCM).

``.utr`` layout, all little-endian::

    b"UTIR"  u16 version  u16 width  u16 height  f64 fps  u32 frame_count
    u16 id_length  id bytes (UTF-8)
    [version 2 only: f64 sync_offset]
    frame_count * height * width u8 pixels (frame-major, row-major)
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    FrameIndexError,
    PairingError,
    SizeError,
    ValidationError,
)

UTR_MAGIC = b"UTIR"
UTR_VERSION = 1
UTR_VERSION_SYNC = 2
_UTR_HEAD = struct.Struct("<4sHHHdI")

NATIVE_WIDTH = 842
NATIVE_HEIGHT = 64
ULTRASOUND_FPS = 82.0
SAMPLE_RATE = 22050
PARTITIONS = ("train", "validation", "test")


def _check_id(uid):
    # ids become file stems, TSV fields and a NUL-terminated WAV tag
    if not isinstance(uid, str) or any(c in uid for c in "/\\") or any(ord(c) < 32 for c in uid):
        raise ValidationError(f"utterance id {uid!r} contains control characters or path separators")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UltrasoundRecording:
    frames: np.ndarray  # (n_frames, height, width) uint8
    fps: float = ULTRASOUND_FPS
    utterance_id: str = ""

    def __post_init__(self):
        raw = np.asarray(self.frames)
        if raw.ndim != 3:
            raise ValidationError(f"frames must be (n, height, width), got shape {raw.shape}")
        if raw.shape[0] < 1:
            raise ValidationError("recording needs at least one frame")
        if raw.dtype != np.uint8:
            if np.any(raw < 0) or np.any(raw > 255) or np.any(raw != np.round(raw)):
                raise ValidationError("pixel intensities must be integers in [0, 255]")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ValidationError(f"fps must be positive, got {self.fps}")
        _check_id(self.utterance_id)
        object.__setattr__(self, "frames", _frozen(raw, np.uint8))
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]

    def __eq__(self, other):
        if not isinstance(other, UltrasoundRecording):
            return NotImplemented
        return (self.utterance_id == other.utterance_id and self.fps == other.fps
                and np.array_equal(self.frames, other.frames))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AudioTrack:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int = SAMPLE_RATE
    utterance_id: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValidationError("audio must be mono")
        if not np.all(np.isfinite(s)) or (s.size and np.max(np.abs(s)) > 1.0):
            raise ValidationError("audio samples must be finite and within [-1, 1]")
        if self.sample_rate <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        _check_id(self.utterance_id)
        object.__setattr__(self, "samples", _frozen(s, np.float64))
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, AudioTrack):
            return NotImplemented
        return (self.utterance_id == other.utterance_id and self.sample_rate == other.sample_rate
                and np.array_equal(self.samples, other.samples))

    __hash__ = None


@dataclass(frozen=True)
class ParallelUtterance:
    ultrasound: UltrasoundRecording
    audio: AudioTrack
    sync_offset: float = 0.0

    def __post_init__(self):
        if self.ultrasound.utterance_id != self.audio.utterance_id:
            raise PairingError(
                f"utterance ids differ: {self.ultrasound.utterance_id!r} vs {self.audio.utterance_id!r}")
        if not (self.sync_offset >= 0 and math.isfinite(self.sync_offset)):
            raise ValidationError(f"sync_offset must be >= 0, got {self.sync_offset}")
        needed = (self.ultrasound.n_frames - 1) / self.ultrasound.fps
        if self.audio.duration + 1e-9 < needed:
            raise ValidationError(
                f"audio lasts {self.audio.duration:.4f} s but the frames span {needed:.4f} s")

    @property
    def utterance_id(self):
        return self.ultrasound.utterance_id

    @property
    def n_frames(self):
        return self.ultrasound.n_frames


@dataclass(frozen=True)
class CorpusManifest:
    train_ids: tuple
    validation_ids: tuple = ()
    test_ids: tuple = ()
    root_path: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        for name in ("train_ids", "validation_ids", "test_ids"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "root_path", Path(self.root_path))
        seen = set()
        for part in (self.train_ids, self.validation_ids, self.test_ids):
            if len(set(part)) != len(part) or seen & set(part):
                raise ValidationError("manifest partitions must be disjoint and duplicate-free")
            seen |= set(part)

    def partition(self, name):
        return {"train": self.train_ids, "validation": self.validation_ids, "test": self.test_ids}[name]

    @property
    def all_ids(self):
        return self.train_ids + self.validation_ids + self.test_ids

    def path_of(self, utterance_id):
        return self.root_path / f"{utterance_id}.utr"


# ---------------------------------------------------------------------------
# .utr container
# ---------------------------------------------------------------------------

def encode_utr(rec, sync_offset=0.0):
    uid = rec.utterance_id.encode("utf-8")
    if len(uid) > 0xFFFF:
        raise ValidationError("utterance id too long")
    if rec.width > 0xFFFF or rec.height > 0xFFFF:
        raise ValidationError("frame dimensions exceed u16")
    version = UTR_VERSION if sync_offset == 0 else UTR_VERSION_SYNC
    parts = [
        _UTR_HEAD.pack(UTR_MAGIC, version, rec.width, rec.height, rec.fps, rec.n_frames),
        struct.pack("<H", len(uid)), uid,
    ]
    if version == UTR_VERSION_SYNC:
        parts.append(struct.pack("<d", sync_offset))
    parts.append(rec.frames.tobytes(order="C"))
    return b"".join(parts)


def decode_utr(data, source="<bytes>"):
    """Parse ``.utr`` bytes into ``(UltrasoundRecording, sync_offset)``."""
    if len(data) < _UTR_HEAD.size + 2:
        raise FormatError(f"{source}: header truncated")
    magic, version, width, height, fps, count = _UTR_HEAD.unpack_from(data, 0)
    if magic != UTR_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version not in (UTR_VERSION, UTR_VERSION_SYNC):
        raise FormatError(f"{source}: unsupported version {version}")
    if width == 0 or height == 0 or count == 0 or not (fps > 0 and math.isfinite(fps)):
        raise FormatError(f"{source}: invalid header ({width}x{height}, {fps} fps, {count} frames)")
    pos = _UTR_HEAD.size
    (n_id,) = struct.unpack_from("<H", data, pos)
    pos += 2
    if len(data) < pos + n_id:
        raise FormatError(f"{source}: utterance id truncated")
    try:
        uid = data[pos:pos + n_id].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{source}: utterance id is not UTF-8") from exc
    pos += n_id
    sync = 0.0
    if version == UTR_VERSION_SYNC:
        if len(data) < pos + 8:
            raise FormatError(f"{source}: sync offset truncated")
        (sync,) = struct.unpack_from("<d", data, pos)
        pos += 8
    expected = count * width * height
    payload = len(data) - pos
    if payload < expected:
        raise CorruptionError(f"{source}: payload has {payload} bytes, header promises {expected}")
    if payload > expected:
        raise CorruptionError(f"{source}: {payload - expected} trailing bytes after payload")
    frames = np.frombuffer(data, dtype=np.uint8, count=expected, offset=pos)
    rec = UltrasoundRecording(frames.reshape(count, height, width), fps, uid)
    return rec, sync


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def quantize_pcm16(samples):
    """Map [-1, 1] floats onto the 16-bit grid used by the WAV files."""
    ints = np.clip(np.rint(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767)
    return ints.astype(np.int16)


def _chunk(tag, body):
    pad = b"\0" if len(body) % 2 else b""
    return tag + struct.pack("<I", len(body)) + body + pad


def encode_wav(track):
    """RIFF/WAVE bytes: ``fmt``, a ``LIST/INFO/INAM`` chunk naming the utterance, ``data``."""
    fmt = struct.pack("<HHIIHH", 1, 1, track.sample_rate, 2 * track.sample_rate, 2, 16)
    chunks = [_chunk(b"fmt ", fmt)]
    if track.utterance_id:
        name = track.utterance_id.encode("utf-8") + b"\0"
        chunks.append(_chunk(b"LIST", b"INFO" + _chunk(b"INAM", name)))
    chunks.append(_chunk(b"data", quantize_pcm16(track.samples).astype("<i2").tobytes()))
    body = b"WAVE" + b"".join(chunks)
    return b"RIFF" + struct.pack("<I", len(body)) + body


def _info_name(body):
    if body[:4] != b"INFO":
        return None
    pos = 4
    while pos + 8 <= len(body):
        tag, size = body[pos:pos + 4], struct.unpack_from("<I", body, pos + 4)[0]
        if tag == b"INAM":
            return body[pos + 8:pos + 8 + size].rstrip(b"\0").decode("utf-8", "replace")
        pos += 8 + size + (size & 1)
    return None


def decode_wav(data, source="<bytes>", default_id=""):
    """Parse 16-bit mono PCM RIFF/WAVE bytes; the id comes from INAM or ``default_id``."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{source}: not a RIFF/WAVE file")
    fmt = samples = None
    name = None
    pos = 12
    while pos + 8 <= len(data):
        tag = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if tag == b"data" and len(body) < size:
            raise CorruptionError(f"{source}: data chunk holds {len(body)} bytes, header promises {size}")
        if tag == b"fmt ":
            if size < 16:
                raise FormatError(f"{source}: short fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif tag == b"LIST":
            name = _info_name(body) or name
        elif tag == b"data":
            samples = body
        pos += 8 + size + (size & 1)
    if fmt is None or samples is None:
        raise FormatError(f"{source}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format != 1 or channels != 1 or bits != 16:
        raise FormatError(f"{source}: expected mono 16-bit PCM, got format={audio_format} "
                          f"channels={channels} bits={bits}")
    if len(samples) % 2:
        raise CorruptionError(f"{source}: odd byte count in data chunk")
    x = np.frombuffer(samples, dtype="<i2").astype(np.float64) / 32768.0
    return AudioTrack(x, rate, default_id if name is None else name)


def write_wav(path, track):
    Path(path).write_bytes(encode_wav(track))


def read_wav(path):
    path = Path(path)
    return decode_wav(path.read_bytes(), str(path), default_id=path.stem)


# ---------------------------------------------------------------------------
# utterances
# ---------------------------------------------------------------------------

def _pair_paths(path):
    path = Path(path)
    if path.suffix in (".utr", ".wav"):
        path = path.with_suffix("")
    return path.with_suffix(".utr"), path.with_suffix(".wav")


def load_utterance(path):
    utr_path, wav_path = _pair_paths(path)
    if not utr_path.exists():
        raise FileNotFoundError(f"no ultrasound container at {utr_path}")
    rec, sync = decode_utr(utr_path.read_bytes(), str(utr_path))
    audio = read_wav(wav_path)
    return ParallelUtterance(rec, audio, sync)


def save_utterance(u, path):
    if not isinstance(u, ParallelUtterance):
        raise ValidationError("save_utterance expects a ParallelUtterance")
    # re-run every invariant: frozen dataclasses can still be mutated via object.__setattr__
    UltrasoundRecording(u.ultrasound.frames, u.ultrasound.fps, u.ultrasound.utterance_id)
    AudioTrack(u.audio.samples, u.audio.sample_rate, u.audio.utterance_id)
    ParallelUtterance(u.ultrasound, u.audio, u.sync_offset)
    utr_path, wav_path = _pair_paths(path)
    utr_path.write_bytes(encode_utr(u.ultrasound, u.sync_offset))
    write_wav(wav_path, u.audio)


# ---------------------------------------------------------------------------
# audio windows
# ---------------------------------------------------------------------------

def frame_center_time(u, frame_index):
    return u.sync_offset + frame_index / u.ultrasound.fps


def window_start(center_time, window_samples, sample_rate):
    """First sample of a window centred at ``center_time`` (rounded half up)."""
    return math.floor(center_time * sample_rate - window_samples / 2.0 + 0.5)


def window_samples(window_length, sample_rate):
    return int(math.floor(window_length * sample_rate + 0.5))


def frame_audio_window(u, frame_index, window_length=0.012):
    """Audio samples centred on ultrasound frame ``frame_index``, zero-padded at the edges."""
    if not 0 <= frame_index < u.n_frames:
        raise FrameIndexError(f"frame {frame_index} outside [0, {u.n_frames})")
    sr = u.audio.sample_rate
    n = window_samples(window_length, sr)
    start = window_start(frame_center_time(u, frame_index), n, sr)
    return _slice_padded(u.audio.samples, start, n)


def _slice_padded(samples, start, n):
    out = np.zeros(n)
    lo, hi = max(start, 0), min(start + n, samples.size)
    if hi > lo:
        out[lo - start:hi - start] = samples[lo:hi]
    return out


def frame_audio_windows(u, window_length=0.012):
    """All frame windows stacked into an ``(n_frames, window_samples)`` array."""
    return np.stack([frame_audio_window(u, i, window_length) for i in range(u.n_frames)])


# ---------------------------------------------------------------------------
# corpus partitioning
# ---------------------------------------------------------------------------

def split_corpus(ids, validation_fraction=0.10, test_count=9, seed=0, validation_level="frame",
                 root_path="."):
    """Seeded utterance-level split into train/validation/test.

    With ``validation_level="frame"`` (the default) no utterances are held out
    for validation here; the fraction is applied later as per-utterance tail
    blocks of frames (:func:`validation_tail`).
    """
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate utterance ids")
    if not 0 < validation_fraction < 1:
        raise ValidationError("validation_fraction must lie in (0, 1)")
    if test_count < 0 or test_count >= len(ids):
        raise SizeError(f"cannot hold out {test_count} test utterances from {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    test = sorted(ids[i] for i in order[:test_count])
    rest = [ids[i] for i in order[test_count:]]
    if validation_level == "frame":
        train, val = sorted(rest), []
    elif validation_level == "utterance":
        n_val = int(round(validation_fraction * len(rest)))
        if n_val >= len(rest):
            raise SizeError("no training utterances left after validation split")
        val, train = sorted(rest[:n_val]), sorted(rest[n_val:])
    else:
        raise ValidationError(f"unknown validation level {validation_level!r}")
    return CorpusManifest(train, val, test, Path(root_path))


def validation_tail(n_frames, fraction=0.10):
    """Number of trailing frames of one training utterance reserved for validation."""
    n_val = int(math.floor(fraction * n_frames + 0.5))
    return min(max(n_val, 0), max(n_frames - 1, 0))


def write_manifest(path, manifest):
    lines = [f"{part}\t{uid}\n" for part in PARTITIONS for uid in manifest.partition(part)]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_manifest(path):
    path = Path(path)
    parts = {p: [] for p in PARTITIONS}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            part, uid = line.split("\t")
        except ValueError:
            raise FormatError(f"{path}:{n}: expected '<partition>\\t<utterance_id>'") from None
        if part not in parts:
            raise FormatError(f"{path}:{n}: unknown partition {part!r}")
        parts[part].append(uid)
    return CorpusManifest(parts["train"], parts["validation"], parts["test"], path.parent)
