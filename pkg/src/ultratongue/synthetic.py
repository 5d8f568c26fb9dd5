"""Synthetic parallel corpus with a known articulatory latent.

A scalar latent ``g(t)`` in [0, 1] (a tongue-height proxy) drives both
modalities: the depth and curvature of a bright ridge in the raw 64x842
scanline frames, and the fundamental ``f0 = 100 + 150 g`` Hz of a harmonic
tone. The latent is a mean-reverting Gaussian random walk (AR(1)) followed
by a one-pole low-pass, started in its stationary distribution.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import (
    NATIVE_HEIGHT,
    NATIVE_WIDTH,
    SAMPLE_RATE,
    ULTRASOUND_FPS,
    AudioTrack,
    ParallelUtterance,
    UltrasoundRecording,
    quantize_pcm16,
    save_utterance,
    split_corpus,
    write_manifest,
)
from .errors import SizeError, ValidationError

MIN_FRAMES = 16
MIN_UTTERANCES = 12
TEST_COUNT = 9

N_HARMONICS = 10
TONE_AMPLITUDE = 0.5
F0_BASE = 100.0
F0_SPAN = 150.0


@dataclass(frozen=True)
class LatentParams:
    """Walk step std, AR(1) reversion pole and low-pass (smoothness) pole."""

    step: float = 0.07
    reversion: float = 0.9
    smoothness: float = 0.5

    def __post_init__(self):
        if not (0 <= self.reversion < 1 and 0 <= self.smoothness < 1 and self.step >= 0):
            raise ValidationError("latent poles must lie in [0, 1) and step >= 0")


@dataclass(frozen=True, eq=False)
class LatentTrajectory:
    values: np.ndarray
    fps: float = ULTRASOUND_FPS
    smoothness: float = 0.5

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValidationError("latent values must be finite and within [0, 1]")


def latent_stationary_variance(params=LatentParams()):
    """Closed-form variance of the smoothed walk, before clipping to [0, 1].

    With walk pole r and smoother pole a the smoother scales the AR(1)
    variance ``step**2 / (1 - r**2)`` by ``(1-a)**2 (1+ar) / ((1-a**2)(1-ar))``.
    """
    a, r = params.smoothness, params.reversion
    walk_var = params.step ** 2 / (1 - r * r)
    return walk_var * (1 - a) ** 2 * (1 + a * r) / ((1 - a * a) * (1 - a * r))


def raw_latent(rng, n_frames, params=LatentParams(), burn_in=256):
    """Unclipped, zero-mean smoothed walk; the burn-in makes the start stationary."""
    a, r = params.smoothness, params.reversion
    eps = params.step * rng.standard_normal(burn_in + n_frames)
    x = y = 0.0
    out = np.empty(burn_in + n_frames)
    for t, e in enumerate(eps):
        x = r * x + e
        y = a * y + (1 - a) * x
        out[t] = y
    return out[burn_in:]


def generate_latent(seed, n_frames, params=LatentParams()):
    rng = np.random.default_rng(seed)
    g = np.clip(0.5 + raw_latent(rng, n_frames, params), 0.0, 1.0)
    return LatentTrajectory(g, ULTRASOUND_FPS, params.smoothness)


# ---------------------------------------------------------------------------
# ultrasound
# ---------------------------------------------------------------------------

def ridge_depth(g, height=NATIVE_HEIGHT, width=NATIVE_WIDTH):
    """Depth (column) of the ridge on every scanline for latent value(s) ``g``.

    Returns shape ``(len(g), height)``; always within the frame for g in [0, 1].
    """
    g = np.atleast_1d(np.asarray(g, dtype=np.float64))[:, None]
    u = np.linspace(-1.0, 1.0, height)[None, :]
    center = width * (0.30 + 0.40 * g)
    bend = width * (0.07 + 0.14 * g)
    return center - bend * u * u


def clean_frames(g, height=NATIVE_HEIGHT, width=NATIVE_WIDTH, ridge_width=30.0):
    """Noise-free frames: dim depth-decaying tissue plus a Gaussian ridge."""
    depth = np.arange(width, dtype=np.float64)
    p = ridge_depth(g, height, width)[:, :, None]
    ridge = 170.0 * np.exp(-0.5 * ((depth[None, None, :] - p) / ridge_width) ** 2)
    tissue = 20.0 + 25.0 * np.exp(-depth / (0.4 * width))
    return tissue[None, None, :] + ridge


def add_speckle(frames, rng, noise=0.6):
    """Multiplicative Rayleigh speckle with unit mean; ``noise`` blends it in."""
    sigma = 1.0 / np.sqrt(np.pi / 2.0)
    r = rng.rayleigh(sigma, size=frames.shape)
    return frames * ((1.0 - noise) + noise * r)


def latent_frames(g, rng, noise=0.6):
    x = add_speckle(clean_frames(g), rng, noise)
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# audio
# ---------------------------------------------------------------------------

def f0_of(g):
    return F0_BASE + F0_SPAN * np.asarray(g, dtype=np.float64)


def harmonic_tone(g, fps=ULTRASOUND_FPS, sample_rate=SAMPLE_RATE, sync_offset=0.0):
    """Phase-continuous harmonic tone following ``f0(g)``, peak amplitude <= 0.5."""
    g = np.asarray(g, dtype=np.float64)
    n = int(np.ceil((sync_offset + len(g) / fps) * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = f0_of(np.interp(t, sync_offset + np.arange(len(g)) / fps, g))
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
    amps = 1.0 / np.arange(1, N_HARMONICS + 1)
    tone = sum(a * np.sin(k * phase) for k, a in enumerate(amps, 1))
    return TONE_AMPLITUDE * tone / amps.sum()


# ---------------------------------------------------------------------------
# utterances and corpora
# ---------------------------------------------------------------------------

def generate_utterance(seed, n_frames, noise=0.6, params=LatentParams(), utterance_id=None, latent=None):
    """Deterministic synthetic utterance; ``latent`` overrides the random walk."""
    if n_frames < MIN_FRAMES:
        raise SizeError(f"need at least {MIN_FRAMES} frames, got {n_frames}")
    rng = np.random.default_rng([seed, 1])
    if latent is None:
        g = generate_latent(seed, n_frames, params).values
    else:
        g = np.broadcast_to(np.asarray(latent, dtype=np.float64), (n_frames,)).copy()
        LatentTrajectory(g)
    uid = f"utt{seed:05d}" if utterance_id is None else utterance_id
    rec = UltrasoundRecording(latent_frames(g, rng, noise), ULTRASOUND_FPS, uid)
    pcm = quantize_pcm16(harmonic_tone(g)).astype(np.float64) / 32768.0
    return ParallelUtterance(rec, AudioTrack(pcm, SAMPLE_RATE, uid), 0.0)


def corpus_plan(seed, n_utterances, frames_per_utterance=(60, 120)):
    """Utterance ids, per-utterance seeds and frame counts for a corpus."""
    if n_utterances < MIN_UTTERANCES:
        raise SizeError(f"need at least {MIN_UTTERANCES} utterances, got {n_utterances}")
    lo, hi = frames_per_utterance
    if lo < MIN_FRAMES or hi < lo:
        raise SizeError(f"bad frame range {frames_per_utterance}")
    rng = np.random.default_rng(seed)
    counts = rng.integers(lo, hi + 1, size=n_utterances)
    seeds = rng.integers(0, 2**31 - 1, size=n_utterances)
    ids = [f"utt{i:03d}" for i in range(n_utterances)]
    return list(zip(ids, seeds.tolist(), counts.tolist()))


def generate_corpus(out_dir, seed=0, n_utterances=30, frames_per_utterance=(60, 120), noise=0.6,
                    params=LatentParams()):
    """Write ``.utr``/``.wav`` pairs and ``manifest.tsv`` (seeded split, nine test utterances)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = corpus_plan(seed, n_utterances, frames_per_utterance)
    for uid, useed, n in plan:
        u = generate_utterance(useed, n, noise, params, utterance_id=uid)
        save_utterance(u, out / f"{uid}.utr")
    ids = [uid for uid, _, _ in plan]
    manifest = split_corpus(ids, test_count=TEST_COUNT, seed=seed, root_path=out)
    write_manifest(out / "manifest.tsv", manifest)
    return manifest
