"""Audio standardization: 16 kHz / 16-bit / mono conversion and loudness.

Buffers are real-valued in [-1, 1] internally; quantization to signed
16-bit happens only at WAV write time (round half away from zero).
Loudness is RMS dBFS with full scale at amplitude 1.0, and normalization
targets -20 dBFS by default. Gain that would clip is hard-clipped and
counted, never silently rescaled.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import resample_poly

from duplexprep.timeline import TimeInterval

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_TARGET_DBFS = -20.0
PCM16_FULL_SCALE = 32767


class SilentAudioError(ValueError):
    """Raised when an operation needs a non-silent signal (log of zero)."""


@dataclass
class AudioBuffer:
    """Interleaved PCM samples with rate and channel count.

    samples is a 1-D float64 array; for channel_count > 1 the channels are
    interleaved frame by frame and the length is divisible by the count.
    """

    samples: np.ndarray
    sample_rate_hz: int
    channel_count: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be 1-D (interleaved)")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.channel_count < 1:
            raise ValueError("channel_count must be >= 1")
        if len(self.samples) % self.channel_count != 0:
            raise ValueError("sample count not divisible by channel_count")

    @property
    def frame_count(self) -> int:
        return len(self.samples) // self.channel_count

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.sample_rate_hz

    def slice_interval(self, interval: TimeInterval, origin_s: float = 0.0) -> "AudioBuffer":
        """Mono slice covering `interval`, with `origin_s` mapped to sample 0."""
        if self.channel_count != 1:
            raise ValueError("slice_interval expects mono audio")
        i0 = int(round((interval.start_s - origin_s) * self.sample_rate_hz))
        i1 = int(round((interval.end_s - origin_s) * self.sample_rate_hz))
        i0 = max(i0, 0)
        i1 = min(max(i1, i0), len(self.samples))
        return AudioBuffer(self.samples[i0:i1].copy(), self.sample_rate_hz, 1)

    def copy(self) -> "AudioBuffer":
        return AudioBuffer(self.samples.copy(), self.sample_rate_hz, self.channel_count)


@dataclass
class LoudnessReport:
    dbfs: float
    clipped_sample_count: int = 0
    flags: list = field(default_factory=list)


def to_mono(buf: AudioBuffer) -> AudioBuffer:
    """Downmix to mono by the arithmetic mean across channels."""
    if buf.channel_count == 1:
        return buf
    frames = buf.samples.reshape(buf.frame_count, buf.channel_count)
    return AudioBuffer(frames.mean(axis=1), buf.sample_rate_hz, 1)


def resample(buf: AudioBuffer, target_hz: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Polyphase windowed-sinc resampling of a mono buffer to target_hz."""
    if buf.channel_count != 1:
        raise ValueError("resample expects mono audio; call to_mono first")
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    if target_hz == buf.sample_rate_hz:
        return buf
    g = math.gcd(target_hz, buf.sample_rate_hz)
    up, down = target_hz // g, buf.sample_rate_hz // g
    out = resample_poly(buf.samples, up, down)
    return AudioBuffer(out, target_hz, 1)


def measure_dbfs(buf: AudioBuffer) -> LoudnessReport:
    """RMS loudness in dBFS (full-scale amplitude 1.0)."""
    if len(buf.samples) == 0:
        raise SilentAudioError("empty buffer")
    # Extended-precision accumulation: keeps constant signals bit-exact
    # (e.g. a -40 dBFS constant gains exactly 20 dB to a 0.1 constant).
    energy = np.sum(np.square(buf.samples), dtype=np.longdouble)
    rms = math.sqrt(float(energy / len(buf.samples)))
    if rms == 0.0:
        raise SilentAudioError("all-zero buffer has no finite loudness")
    return LoudnessReport(dbfs=20.0 * math.log10(rms))


def normalize_loudness(
    buf: AudioBuffer, target_dbfs: float = DEFAULT_TARGET_DBFS
) -> tuple[AudioBuffer, LoudnessReport]:
    """Apply the gain that moves RMS loudness to target_dbfs.

    Samples pushed beyond +-1 are hard-clipped and counted in the report;
    the reported dbfs is measured on the returned audio.
    """
    current = measure_dbfs(buf).dbfs
    gain = 10.0 ** ((target_dbfs - current) / 20.0)
    out = buf.samples * gain
    clipped = int(np.count_nonzero(np.abs(out) > 1.0))
    if clipped:
        out = np.clip(out, -1.0, 1.0)
    result = AudioBuffer(out, buf.sample_rate_hz, buf.channel_count)
    report = measure_dbfs(result)
    report.clipped_sample_count = clipped
    if clipped:
        report.flags.append("clipped")
    return result, report


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Round half away from zero to signed 16-bit, clamping to range."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    q = np.sign(x) * np.floor(np.abs(x) * PCM16_FULL_SCALE + 0.5)
    return q.astype(np.int16)


def dequantize_pcm16(pcm: np.ndarray) -> np.ndarray:
    x = pcm.astype(np.float64) / PCM16_FULL_SCALE
    return np.clip(x, -1.0, 1.0)


def write_wav(path, buf: AudioBuffer) -> None:
    """Write little-endian signed 16-bit PCM RIFF WAV."""
    pcm = quantize_pcm16(buf.samples)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(buf.channel_count)
        w.setsampwidth(2)
        w.setframerate(buf.sample_rate_hz)
        w.writeframes(pcm.tobytes())


def read_wav(path) -> AudioBuffer:
    """Read a 16-bit PCM RIFF WAV into an AudioBuffer."""
    with wave.open(str(path), "rb") as w:
        if w.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM WAV is supported")
        raw = w.readframes(w.getnframes())
        pcm = np.frombuffer(raw, dtype="<i2")
        return AudioBuffer(dequantize_pcm16(pcm), w.getframerate(), w.getnchannels())


def standardize(
    buf: AudioBuffer,
    target_hz: int = DEFAULT_SAMPLE_RATE,
    target_dbfs: float = DEFAULT_TARGET_DBFS,
) -> tuple[AudioBuffer, LoudnessReport]:
    """Mono + resample + loudness normalization, in that order."""
    mono = to_mono(buf)
    resampled = resample(mono, target_hz)
    return normalize_loudness(resampled, target_dbfs)
