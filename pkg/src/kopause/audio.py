"""Waveform <-> log-mel conversion, Griffin-Lim inversion, and pause detection."""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.io import wavfile

from kopause import kernels
from kopause.errors import AudioError, RateMismatchError

SAMPLE_RATE = 22050


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = SAMPLE_RATE
    n_fft: int = 1024
    hop_length: int = 256
    win_length: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not self.hop_length <= self.win_length <= self.n_fft:
            raise ValueError("need hop_length <= win_length <= n_fft")
        if self.fmax > self.sample_rate / 2 or self.fmin < 0 or self.fmin >= self.fmax:
            raise ValueError("invalid mel frequency range")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()

    @property
    def frame_seconds(self) -> float:
        return self.hop_length / self.sample_rate


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels), natural-log amplitude
    config: MelConfig = field(default_factory=MelConfig)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def load_wav(path: str | Path, expected_rate: int = SAMPLE_RATE) -> Waveform:
    """Read a PCM WAV as mono float64 in [-1, 1]. No resampling."""
    path = Path(path)
    if not path.exists():
        raise AudioError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise AudioError(f"{path}: non-PCM sample format {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise AudioError(f"{path}: zero-length audio")
    if rate != expected_rate:
        raise RateMismatchError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return Waveform(np.asarray(x, dtype=np.float64), rate)


def save_wav(path: str | Path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, w.sample_rate, pcm)


def _hz_to_mel(f):
    # Slaney scale: linear below 1 kHz, logarithmic above
    f = np.asarray(f, dtype=np.float64)
    mel = f / (200.0 / 3)
    log_region = f >= 1000.0
    return np.where(log_region, 15.0 + np.log(np.maximum(f, 1e-12) / 1000.0) / (np.log(6.4) / 27.0), mel)


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = m * (200.0 / 3)
    log_region = m >= 15.0
    return np.where(log_region, 1000.0 * np.exp((np.log(6.4) / 27.0) * (m - 15.0)), f)


@lru_cache(maxsize=8)
def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Area-normalized triangular filters, shape (n_mels, n_fft // 2 + 1)."""
    fft_freqs = np.linspace(0, cfg.sample_rate / 2, cfg.n_fft // 2 + 1)
    mel_pts = np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fdiff = np.diff(hz_pts)
    ramps = hz_pts[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    fb = np.maximum(0.0, np.minimum(lower, upper))
    fb *= (2.0 / (hz_pts[2:] - hz_pts[:-2]))[:, None]
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=8)
def _window(cfg: MelConfig) -> np.ndarray:
    win = np.hanning(cfg.win_length + 1)[:-1]  # periodic Hann
    pad = cfg.n_fft - cfg.win_length
    win = np.pad(win, (pad // 2, pad - pad // 2))
    win.setflags(write=False)
    return win


def stft(x: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Centered STFT with reflect padding, shape (T, n_fft // 2 + 1)."""
    pad = cfg.n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = 1 + (len(xp) - cfg.n_fft) // cfg.hop_length
    frames = np.lib.stride_tricks.sliding_window_view(xp, cfg.n_fft)[:: cfg.hop_length][:n_frames]
    return np.fft.rfft(frames * _window(cfg), axis=1)


def istft(spec: np.ndarray, cfg: MelConfig, length: int | None = None) -> np.ndarray:
    win = _window(cfg)
    frames = np.fft.irfft(spec, n=cfg.n_fft, axis=1) * win
    n = cfg.n_fft + cfg.hop_length * (len(spec) - 1)
    out = np.zeros(n)
    norm = np.zeros(n)
    wsq = win**2
    for t, fr in enumerate(frames):
        s = t * cfg.hop_length
        out[s : s + cfg.n_fft] += fr
        norm[s : s + cfg.n_fft] += wsq
    out /= np.where(norm > 1e-11, norm, 1.0)
    pad = cfg.n_fft // 2
    out = out[pad : n - pad]
    if length is not None:
        out = np.pad(out, (0, max(0, length - len(out))))[:length]
    return out


def mel_spectrogram(w: Waveform, cfg: MelConfig | None = None) -> MelSpectrogram:
    cfg = cfg or MelConfig()
    if w.sample_rate != cfg.sample_rate:
        raise RateMismatchError(f"waveform at {w.sample_rate} Hz, config expects {cfg.sample_rate} Hz")
    x = np.asarray(w.samples, dtype=np.float64)
    if len(x) < cfg.win_length:
        raise AudioError(f"waveform of {len(x)} samples is shorter than one window ({cfg.win_length})")
    mag = np.abs(stft(x, cfg))
    mel = mag @ mel_filterbank(cfg).T
    return MelSpectrogram(np.log(np.maximum(mel, cfg.log_floor)), cfg)


def griffin_lim_invert(m: MelSpectrogram, iterations: int = 60, seed: int = 0) -> Waveform:
    """Approximate waveform from a log-mel via pseudo-inverse filterbank and Griffin-Lim."""
    cfg = m.config
    if not np.all(np.isfinite(m.frames)):
        raise AudioError("mel spectrogram contains non-finite values")
    fb = mel_filterbank(cfg)
    mel_amp = np.exp(m.frames)
    mel_amp = np.where(m.frames <= np.log(cfg.log_floor) + 1e-9, 0.0, mel_amp)
    mag = np.maximum(0.0, mel_amp @ np.linalg.pinv(fb).T)
    length = (len(mag) - 1) * cfg.hop_length
    rng = np.random.default_rng(seed)
    angles = np.exp(2j * np.pi * rng.random(mag.shape))
    x = istft(mag * angles, cfg, length)
    for _ in range(iterations):
        rebuilt = stft(x, cfg)[: len(mag)]
        angles = np.exp(1j * np.angle(rebuilt))
        x = istft(mag * angles, cfg, length)
    return Waveform(np.clip(x, -1.0, 1.0), cfg.sample_rate)


# --- pause detection -------------------------------------------------------


@dataclass(frozen=True)
class PauseSegment:
    start: int
    end: int  # exclusive
    seconds: float
    position: str = "internal"  # "leading", "trailing" or "internal"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PauseStats:
    count: int
    mean_duration: float
    total_pause_time: float
    pause_rate: float  # pauses per second of speech
    speech_seconds: float
    leading_silence: float = 0.0
    trailing_silence: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def frame_energy(m: MelSpectrogram | np.ndarray) -> np.ndarray:
    frames = m.frames if isinstance(m, MelSpectrogram) else np.asarray(m)
    return np.ascontiguousarray(frames.mean(axis=1), dtype=np.float64)


def default_threshold(m: MelSpectrogram | np.ndarray, percentile: float = 20.0) -> float:
    """Smallest float above the given energy percentile, so frames tied at it (digital silence) count."""
    return float(np.nextafter(np.percentile(frame_energy(m), percentile), np.inf))


def detect_pauses(
    m: MelSpectrogram | np.ndarray,
    threshold: float | None = None,
    min_frames: int = 5,
    cfg: MelConfig | None = None,
) -> list[PauseSegment]:
    """Maximal runs of low-energy frames of at least ``min_frames``.

    Runs touching the first or last frame are returned with position
    "leading"/"trailing"; :func:`pause_statistics` leaves them out.
    """
    if min_frames < 1:
        raise ValueError("min_frames must be >= 1")
    if cfg is None:
        cfg = m.config if isinstance(m, MelSpectrogram) else MelConfig()
    energy = frame_energy(m)
    if threshold is None:
        threshold = default_threshold(m)
    n = len(energy)
    segs = []
    for start, end in kernels.silent_runs(energy, float(threshold)):
        if end - start < min_frames:
            continue
        pos = "leading" if start == 0 else "trailing" if end == n else "internal"
        segs.append(PauseSegment(start, end, (end - start) * cfg.frame_seconds, pos))
    return segs


def pause_statistics(segments: Sequence[PauseSegment], total_frames: int, cfg: MelConfig | None = None) -> PauseStats:
    cfg = cfg or MelConfig()
    prev_end = -1
    for s in segments:
        if s.end <= s.start:
            raise ValueError(f"empty segment {s}")
        if s.start < prev_end:
            raise ValueError("pause segments overlap or are unsorted")
        prev_end = s.end
    internal = [s for s in segments if s.position == "internal"]
    lead = sum(s.seconds for s in segments if s.position == "leading")
    trail = sum(s.seconds for s in segments if s.position == "trailing")
    durations = [s.seconds for s in internal]
    total = float(sum(durations))
    speech = max(0.0, total_frames * cfg.frame_seconds - lead - trail)
    return PauseStats(
        count=len(internal),
        mean_duration=total / len(internal) if internal else 0.0,
        total_pause_time=total,
        pause_rate=len(internal) / speech if speech > 0 else 0.0,
        speech_seconds=speech,
        leading_silence=lead,
        trailing_silence=trail,
    )


# --- portable mel file ----------------------------------------------------

_MEL_MAGIC = b"KPMEL\x00\x01\x00"


def save_mel(path: str | Path, frames: np.ndarray, config_hash: str) -> None:
    """Write ``frames`` as little-endian float32 after a header with dims and config hash."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    t, b = frames.shape
    header = _MEL_MAGIC + struct.pack("<II", t, b) + config_hash.encode("ascii").ljust(64, b"\0")[:64]
    Path(path).write_bytes(header + frames.tobytes())


def load_mel(path: str | Path) -> tuple[np.ndarray, str]:
    raw = Path(path).read_bytes()
    if raw[:8] != _MEL_MAGIC:
        raise AudioError(f"{path}: not a mel file")
    t, b = struct.unpack("<II", raw[8:16])
    config_hash = raw[16:80].rstrip(b"\0").decode("ascii")
    body = raw[80:]
    if len(body) != 4 * t * b:
        raise AudioError(f"{path}: truncated mel file")
    return np.frombuffer(body, dtype="<f4").reshape(t, b).astype(np.float64), config_hash
