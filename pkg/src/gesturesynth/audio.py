"""Speech feature extraction: STFT, log-Mel spectrograms, clip segmentation.

Audio enters as 16 kHz mono PCM and leaves as a 64-band log-Mel image the
generator consumes. Analysis parameters follow common speech practice:
25 ms Hann frames, 10 ms hop, 512-point FFT, HTK Mel scale over 0-8 kHz.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientAudioError, InvalidInputError, ShapeError
from .validation import freeze

SAMPLE_RATE = 16_000

DEFAULT_FRAME_LENGTH = 400  # 25 ms
DEFAULT_HOP = 160  # 10 ms
DEFAULT_FFT_SIZE = 512
DEFAULT_MEL_BINS = 64
MEL_FMIN = 0.0
MEL_FMAX = 8_000.0
LOG_FLOOR_POWER = 1e-10
LOG_FLOOR = float(np.log(LOG_FLOOR_POWER))

SEGMENT_SECONDS = 4.0
SEGMENT_SAMPLES = int(SEGMENT_SECONDS * SAMPLE_RATE)

# The conditioning image is edge-replicated to a power-of-two frame count so
# the generator's stride-2 stack divides evenly.
NETWORK_AUDIO_FRAMES = 512


@dataclass(frozen=True)
class AudioClip:
    """Mono 16 kHz samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"samples: expected 1-D array, got shape {samples.shape}")
        if self.sample_rate != SAMPLE_RATE:
            raise InvalidInputError(
                f"sample_rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("samples contain non-finite values")
        if samples.size and (samples.min() < -1.0 or samples.max() > 1.0):
            raise InvalidInputError("samples must lie within [-1, 1]")
        object.__setattr__(self, "samples", freeze(samples))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-power Mel features, shape (mel_bins, frames), natural log, floored."""

    values: np.ndarray
    frame_hop: int = DEFAULT_HOP
    frame_length: int = DEFAULT_FRAME_LENGTH

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeError(f"values: expected (F>=1, T>=1), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("mel values contain non-finite entries")
        if values.min() < LOG_FLOOR - 1e-12:
            raise InvalidInputError("mel values fall below the log floor")
        object.__setattr__(self, "values", freeze(values))

    @property
    def mel_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def stft(
    clip: AudioClip,
    frame_length: int = DEFAULT_FRAME_LENGTH,
    hop: int = DEFAULT_HOP,
    fft_size: int = DEFAULT_FFT_SIZE,
) -> np.ndarray:
    """Short-time Fourier transform, shape (fft_size // 2 + 1, frames).

    Column ``t`` is the FFT of the Hann-windowed frame starting at sample
    ``t * hop``, zero-padded to ``fft_size``. No centering: only frames fully
    inside the clip are produced.
    """
    if frame_length > fft_size:
        raise InvalidInputError(
            f"frame_length {frame_length} exceeds fft_size {fft_size}"
        )
    if hop < 1:
        raise InvalidInputError(f"hop must be >= 1, got {hop}")
    samples = clip.samples
    if samples.size < frame_length:
        raise InsufficientAudioError(
            f"clip has {samples.size} samples, need at least {frame_length}"
        )
    n_frames = (samples.size - frame_length) // hop + 1
    window = hann_window(frame_length)
    idx = np.arange(frame_length)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = samples[idx] * window
    return np.fft.rfft(frames, n=fft_size, axis=1).T


def hz_to_mel(f):
    """HTK Mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    mel_bins: int = DEFAULT_MEL_BINS,
    fft_size: int = DEFAULT_FFT_SIZE,
    sample_rate: int = SAMPLE_RATE,
    fmin: float = MEL_FMIN,
    fmax: float = MEL_FMAX,
) -> np.ndarray:
    """Triangular filters on FFT power bins, shape (mel_bins, fft_size//2+1).

    Peaks are Mel-uniform with the top peak exactly at ``fmax``; the final
    falling edge extends one Mel step past ``fmax`` so every bin in
    (0, fmax] receives positive weight.
    """
    peaks_mel = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), mel_bins + 1)
    step = peaks_mel[1] - peaks_mel[0]
    edges_hz = mel_to_hz(np.concatenate([peaks_mel, [peaks_mel[-1] + step]]))
    bin_freqs = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    bank = np.zeros((mel_bins, bin_freqs.size))
    for i in range(mel_bins):
        left, center, right = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def mel_spectrogram(
    clip: AudioClip,
    mel_bins: int = DEFAULT_MEL_BINS,
    frame_length: int = DEFAULT_FRAME_LENGTH,
    hop: int = DEFAULT_HOP,
    fft_size: int = DEFAULT_FFT_SIZE,
) -> MelSpectrogram:
    """Log Mel-filterbank energies of the clip (natural log, floored)."""
    spectrum = stft(clip, frame_length=frame_length, hop=hop, fft_size=fft_size)
    power = np.abs(spectrum) ** 2
    bank = mel_filterbank(mel_bins=mel_bins, fft_size=fft_size)
    mel_power = bank @ power
    values = np.log(np.maximum(mel_power, LOG_FLOOR_POWER))
    return MelSpectrogram(values, frame_hop=hop, frame_length=frame_length)


def pad_frames(mel: MelSpectrogram, target_frames: int = NETWORK_AUDIO_FRAMES) -> MelSpectrogram:
    """Edge-replicate (repeat the last column) up to ``target_frames``."""
    if mel.n_frames > target_frames:
        raise InvalidInputError(
            f"mel has {mel.n_frames} frames, more than target {target_frames}"
        )
    if mel.n_frames == target_frames:
        return mel
    pad = np.repeat(mel.values[:, -1:], target_frames - mel.n_frames, axis=1)
    return MelSpectrogram(
        np.concatenate([mel.values, pad], axis=1),
        frame_hop=mel.frame_hop,
        frame_length=mel.frame_length,
    )


def network_mel(clip: AudioClip, mel_bins: int = DEFAULT_MEL_BINS) -> MelSpectrogram:
    """The (mel_bins, 512) conditioning image for one 4-second segment."""
    return pad_frames(mel_spectrogram(clip, mel_bins=mel_bins))


def segment_clips(clip: AudioClip, interval_seconds: float = SEGMENT_SECONDS) -> list[AudioClip]:
    """Non-overlapping consecutive windows; a trailing remainder is dropped."""
    if interval_seconds <= 0:
        raise InvalidInputError(f"interval_seconds must be > 0, got {interval_seconds}")
    window = int(round(interval_seconds * clip.sample_rate))
    n = clip.samples.size // window
    return [
        AudioClip(clip.samples[i * window : (i + 1) * window], clip.sample_rate)
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# WAV ingest/emit: PCM 16-bit, mono, 16 kHz only. No resampling.
# ---------------------------------------------------------------------------


def load_wav(path) -> AudioClip:
    path = Path(path)
    with wave.open(str(path), "rb") as wav:
        if wav.getnchannels() != 1:
            raise InvalidInputError(f"{path}: expected mono WAV, got {wav.getnchannels()} channels")
        if wav.getsampwidth() != 2:
            raise InvalidInputError(f"{path}: expected 16-bit PCM, got {8 * wav.getsampwidth()}-bit")
        if wav.getframerate() != SAMPLE_RATE:
            raise InvalidInputError(
                f"{path}: expected {SAMPLE_RATE} Hz, got {wav.getframerate()} Hz (no resampling)"
            )
        raw = wav.readframes(wav.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples)


def save_wav(clip: AudioClip, path) -> None:
    quantized = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(clip.sample_rate)
        wav.writeframes(quantized.tobytes())
