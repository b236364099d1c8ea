"""Frame-level F0 estimation and the two scalar prosodic features consumed by
probe baselines and region statistics: pitch range in semitones and duration
in voiced frames.

The estimator is a self-contained normalized-autocorrelation tracker (40 ms
window, 10 ms hop, 100 Hz frame rate). Feature definitions, not tracker
identity, are what downstream math consumes; the estimator is validated on
synthetic signals only.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, EmptySignal

FRAME_RATE_HZ = 100          # one frame per 10 ms
WINDOW_S = 0.040
F0_MIN_HZ = 50.0
F0_MAX_HZ = 500.0
NACF_VOICING_THRESHOLD = 0.45
RMS_GATE_FRACTION = 0.01     # frame RMS must reach 1% of whole-signal RMS


@dataclass(frozen=True)
class F0Track:
    frame_rate_hz: int
    f0_hz: np.ndarray       # per-frame F0, 0.0 where unvoiced
    voicing: np.ndarray     # per-frame bool

    def __post_init__(self):
        if self.f0_hz.shape != self.voicing.shape:
            raise DimensionMismatch("f0 and voicing tracks differ in length")


@dataclass(frozen=True)
class ProsodicFeatures:
    pitch_range_semitones: float
    duration_voiced_frames: int


def estimate_f0(waveform: np.ndarray, sample_rate: int) -> F0Track:
    """Track F0 at 100 Hz via normalized autocorrelation peaks in [50, 500] Hz.

    A frame is voiced when its peak NACF reaches 0.45 and its RMS reaches 1%
    of the whole-signal RMS. Among near-maximal NACF peaks the shortest lag
    wins, which suppresses sub-octave errors on periodic signals.
    """
    x = np.asarray(waveform, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySignal("waveform contains no samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("waveform contains non-finite samples")
    if sample_rate < 8000:
        raise ValueError(f"sample_rate must be >= 8000, got {sample_rate}")

    window = int(round(WINDOW_S * sample_rate))
    hop = int(round(sample_rate / FRAME_RATE_HZ))
    lag_min = int(np.floor(sample_rate / F0_MAX_HZ))
    lag_max = int(np.ceil(sample_rate / F0_MIN_HZ))

    signal_rms = float(np.sqrt(np.mean(x**2)))
    rms_gate = RMS_GATE_FRACTION * signal_rms

    f0 = []
    voiced = []
    start = 0
    while start + window <= x.size:
        frame = x[start : start + window]
        start += hop
        frame = frame - frame.mean()
        rms = float(np.sqrt(np.mean(frame**2)))
        if signal_rms == 0.0 or rms < rms_gate:
            f0.append(0.0)
            voiced.append(False)
            continue
        lag, nacf = _best_lag(frame, lag_min, min(lag_max, window - 1))
        if nacf >= NACF_VOICING_THRESHOLD and lag > 0:
            hz = sample_rate / lag
            hz = min(max(hz, F0_MIN_HZ), F0_MAX_HZ)
            f0.append(hz)
            voiced.append(True)
        else:
            f0.append(0.0)
            voiced.append(False)
    return F0Track(FRAME_RATE_HZ, np.asarray(f0), np.asarray(voiced, dtype=bool))


def _best_lag(frame: np.ndarray, lag_min: int, lag_max: int) -> tuple[float, float]:
    """Shortest near-maximal normalized-autocorrelation lag, refined parabolically."""
    n = frame.size
    lags = np.arange(lag_min, lag_max + 1)
    nacf = np.empty(lags.size)
    for i, lag in enumerate(lags):
        a = frame[: n - lag]
        b = frame[lag:]
        denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
        nacf[i] = np.dot(a, b) / denom if denom > 0 else 0.0
    best = float(np.max(nacf))
    if best <= 0:
        return 0.0, best
    # local maxima within 95% of the global peak; earliest = fundamental
    candidates = []
    for i in range(nacf.size):
        left = nacf[i - 1] if i > 0 else -np.inf
        right = nacf[i + 1] if i + 1 < nacf.size else -np.inf
        if nacf[i] >= left and nacf[i] >= right and nacf[i] >= 0.95 * best:
            candidates.append(i)
    i = candidates[0] if candidates else int(np.argmax(nacf))
    lag = float(lags[i])
    if 0 < i < nacf.size - 1:
        y0, y1, y2 = nacf[i - 1], nacf[i], nacf[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            lag += 0.5 * (y0 - y2) / denom
    return lag, float(nacf[i])


def pitch_range_semitones(track: F0Track) -> float:
    """12*log2(max voiced F0 / min voiced F0); 0 with fewer than 2 voiced frames."""
    voiced = track.f0_hz[track.voicing]
    if voiced.size < 2:
        return 0.0
    return float(12.0 * np.log2(voiced.max() / voiced.min()))


def voiced_duration_frames(track: F0Track) -> int:
    return int(np.count_nonzero(track.voicing))


def prosodic_features(track: F0Track) -> ProsodicFeatures:
    return ProsodicFeatures(pitch_range_semitones(track), voiced_duration_frames(track))


def mean_pool(frames) -> np.ndarray:
    """Per-dimension arithmetic mean over a sequence of equal-length vectors."""
    arrs = [np.asarray(f, dtype=np.float64) for f in frames]
    if not arrs:
        raise EmptyInput("mean_pool needs at least one frame")
    dim = arrs[0].shape
    for a in arrs[1:]:
        if a.shape != dim:
            raise DimensionMismatch(f"frame shape {a.shape} != {dim}")
    return np.mean(np.stack(arrs), axis=0)


def read_wav(path, channel: int = 0) -> tuple[np.ndarray, int]:
    """Read 16-bit PCM WAV; returns (float samples in [-1, 1], sample_rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM WAV is supported")
        n_channels = wf.getnchannels()
        if not 0 <= channel < n_channels:
            raise ValueError(f"{path}: channel {channel} outside 0..{n_channels - 1}")
        raw = wf.readframes(wf.getnframes())
        rate = wf.getframerate()
    data = np.frombuffer(raw, dtype="<i2").reshape(-1, n_channels)
    return data[:, channel].astype(np.float64) / 32768.0, rate


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono float samples in [-1, 1] as 16-bit PCM WAV."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())
