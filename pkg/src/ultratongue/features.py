"""MFCC + delta acoustic features, one 50-dim vector per ultrasound frame."""

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import SAMPLE_RATE, frame_audio_windows, window_samples
from .errors import CorruptionError, FormatError, InputError, SizeError, ValidationError

FEAT_MAGIC = b"FEAT"
_FEAT_HEAD = struct.Struct("<4sII")


@dataclass(frozen=True)
class MfccConfig:
    n_mfcc: int = 25
    n_mels: int = 26
    fft_size: int = 512
    window_length: float = 0.012
    preemphasis: float = 0.97
    mel_fmin: float = 0.0
    mel_fmax: float = None  # None -> Nyquist
    floor: float = 1e-10
    sample_rate: int = SAMPLE_RATE
    delta_width: int = 2

    def __post_init__(self):
        if not (1 <= self.n_mfcc <= self.n_mels <= self.fft_size // 2 + 1):
            raise ValidationError("need 1 <= n_mfcc <= n_mels <= fft_size/2 + 1")
        if self.floor <= 0:
            raise ValidationError("floor must be positive")
        if self.window_samples > self.fft_size:
            raise ValidationError("analysis window longer than the FFT")
        if self.delta_width < 1:
            raise ValidationError("delta_width must be >= 1")
        if not 0 <= self.mel_fmin < self.fmax <= self.sample_rate / 2:
            raise ValidationError("mel band edges must satisfy 0 <= fmin < fmax <= Nyquist")

    @property
    def fmax(self):
        return self.sample_rate / 2 if self.mel_fmax is None else self.mel_fmax

    @property
    def window_samples(self):
        return window_samples(self.window_length, self.sample_rate)

    @property
    def feature_dim(self):
        return 2 * self.n_mfcc


@dataclass(frozen=True, eq=False)
class AcousticFeatureVector:
    mfcc: np.ndarray
    delta: np.ndarray
    frame_index: int

    def __post_init__(self):
        if not (np.all(np.isfinite(self.mfcc)) and np.all(np.isfinite(self.delta))):
            raise ValidationError("feature values must be finite")

    @property
    def values(self):
        return np.concatenate([self.mfcc, self.delta])


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg):
    """Triangular HTK-mel filters over rfft bins, each row summing to one.

    Returns ``(weights, centers_hz)`` with weights of shape ``(n_mels, fft_size//2 + 1)``.
    """
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs[None, :] - lo) / (mid - lo)
    fall = (hi - freqs[None, :]) / (hi - mid)
    w = np.maximum(0.0, np.minimum(rise, fall))
    sums = w.sum(axis=1, keepdims=True)
    if np.any(sums == 0):
        raise ValidationError("a mel filter covers no FFT bin; lower n_mels or raise fft_size")
    return w / sums, edges[1:-1]


def dct_matrix(n_out, n_in):
    """Rows of the orthonormal DCT-II."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    m = np.sqrt(2.0 / n_in) * np.cos(np.pi * k * (2 * n + 1) / (2 * n_in))
    m[0] /= np.sqrt(2.0)
    return m


def power_spectrum(windows, cfg):
    x = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    y = x.copy()
    y[:, 1:] -= cfg.preemphasis * x[:, :-1]
    y *= np.hanning(x.shape[1])
    return np.abs(np.fft.rfft(y, n=cfg.fft_size, axis=1)) ** 2


def mel_energies(windows, cfg):
    fb, _ = mel_filterbank(cfg)
    return power_spectrum(windows, cfg) @ fb.T


def mfcc_batch(windows, cfg=MfccConfig()):
    """MFCCs for a stack of windows, shape ``(n, window_samples)`` -> ``(n, n_mfcc)``."""
    x = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    if x.shape[1] != cfg.window_samples:
        raise SizeError(f"window has {x.shape[1]} samples, expected {cfg.window_samples}")
    if not np.all(np.isfinite(x)):
        raise InputError("window contains non-finite samples")
    logmel = np.log(np.maximum(mel_energies(x, cfg), cfg.floor))
    return logmel @ dct_matrix(cfg.n_mfcc, cfg.n_mels).T


def compute_mfcc(window, cfg=MfccConfig()):
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1:
        raise SizeError("compute_mfcc expects a single 1-D window")
    return mfcc_batch(window[None], cfg)[0]


def delta_sequence(seq, width=2):
    """Regression deltas for every frame, replicating the first/last frame at the edges."""
    c = np.asarray(seq, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] == 0:
        raise SizeError("delta needs a non-empty (frames, dims) sequence")
    t = c.shape[0]
    padded = np.concatenate([np.repeat(c[:1], width, 0), c, np.repeat(c[-1:], width, 0)])
    num = np.zeros_like(c)
    for n in range(1, width + 1):
        num += n * (padded[width + n:width + n + t] - padded[width - n:width - n + t])
    return num / (2.0 * sum(n * n for n in range(1, width + 1)))


def compute_delta(seq, frame_index, width=2):
    c = np.asarray(seq, dtype=np.float64)
    if not 0 <= frame_index < len(c):
        raise IndexError(f"frame {frame_index} outside [0, {len(c)})")
    return delta_sequence(c, width)[frame_index]


def utterance_feature_matrix(u, cfg=MfccConfig()):
    """``(n_frames, 2 * n_mfcc)`` matrix of MFCCs followed by their deltas."""
    if u.audio.sample_rate != cfg.sample_rate:
        raise InputError(f"audio is {u.audio.sample_rate} Hz, features expect {cfg.sample_rate} Hz")
    mf = mfcc_batch(frame_audio_windows(u, cfg.window_length), cfg)
    return np.hstack([mf, delta_sequence(mf, cfg.delta_width)])


def extract_utterance_features(u, cfg=MfccConfig()):
    m = utterance_feature_matrix(u, cfg)
    k = cfg.n_mfcc
    return [AcousticFeatureVector(row[:k].copy(), row[k:].copy(), i) for i, row in enumerate(m)]


# ---------------------------------------------------------------------------
# matrix files
# ---------------------------------------------------------------------------

def encode_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise SizeError("feature dump expects a 2-D matrix")
    return _FEAT_HEAD.pack(FEAT_MAGIC, *m.shape) + m.astype("<f8").tobytes(order="C")


def decode_matrix(data, source="<bytes>"):
    if len(data) < _FEAT_HEAD.size:
        raise FormatError(f"{source}: header truncated")
    magic, rows, cols = _FEAT_HEAD.unpack_from(data)
    if magic != FEAT_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    expected = rows * cols * 8
    if len(data) - _FEAT_HEAD.size != expected:
        raise CorruptionError(f"{source}: payload has {len(data) - _FEAT_HEAD.size} bytes, expected {expected}")
    return np.frombuffer(data, dtype="<f8", offset=_FEAT_HEAD.size).reshape(rows, cols).astype(np.float64)


def write_matrix(path, m):
    Path(path).write_bytes(encode_matrix(m))


def read_matrix(path):
    path = Path(path)
    return decode_matrix(path.read_bytes(), str(path))


def write_features_csv(path, m, n_mfcc=25):
    m = np.asarray(m)
    header = ["frame"] + [f"mfcc{i}" for i in range(n_mfcc)] + [f"delta{i}" for i in range(m.shape[1] - n_mfcc)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(m):
            w.writerow([i] + [repr(float(v)) for v in row])
