"""
Mel-spectrogram extraction.

Magnitude STFT (Hann window, no centering, so a waveform exactly one window
long yields one frame) projected on triangular mel filters and clamped at the
configured floor.
"""
import numpy as np
import librosa

from ..errors import InvalidInputError
from ..utils.config import MelConfig
from ..utils.logging import setup_logger
from .schemas import MelSpectrogram

logger = setup_logger(__name__)

_FILTER_CACHE: dict = {}


def mel_filter_bank(cfg: MelConfig) -> np.ndarray:
    """n_mels × (n_fft/2 + 1) triangular filter matrix (cached per config)."""
    key = (cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax)
    if key not in _FILTER_CACHE:
        _FILTER_CACHE[key] = librosa.filters.mel(
            sr=cfg.sample_rate,
            n_fft=cfg.n_fft,
            n_mels=cfg.n_mels,
            fmin=cfg.fmin,
            fmax=cfg.fmax,
        )
    return _FILTER_CACHE[key]


def mel_band_centers(cfg: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of every mel band."""
    edges = librosa.mel_frequencies(
        n_mels=cfg.n_mels + 2,
        fmin=cfg.fmin,
        fmax=cfg.fmax if cfg.fmax is not None else cfg.sample_rate / 2.0,
    )
    return edges[1:-1]


def compute_mel(waveform: np.ndarray, sample_rate: int, cfg: MelConfig) -> MelSpectrogram:
    """
    Compute a clamped magnitude mel-spectrogram.

    Args:
        waveform: 1-D PCM samples (float)
        sample_rate: Waveform sample rate; must equal cfg.sample_rate
        cfg: Mel configuration

    Returns:
        MelSpectrogram with T = 1 + (len − n_fft) // hop frames
    """
    y = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise InvalidInputError("empty waveform")
    if y.size < cfg.n_fft:
        raise InvalidInputError(f"waveform has {y.size} samples, fewer than window {cfg.n_fft}")
    if sample_rate != cfg.sample_rate:
        raise InvalidInputError(
            f"waveform rate {sample_rate} Hz differs from configured {cfg.sample_rate} Hz; resample first"
        )

    spec = librosa.stft(
        y,
        n_fft=cfg.n_fft,
        hop_length=cfg.hop,
        win_length=cfg.n_fft,
        window="hann",
        center=False,
    )
    mel = mel_filter_bank(cfg) @ np.abs(spec)
    frames = np.maximum(mel.T, cfg.floor)
    return MelSpectrogram(frames=frames, sample_rate=cfg.sample_rate, hop=cfg.hop)


def resample_linear(waveform: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """Linear-interpolation resampler."""
    y = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if source_rate == target_rate or y.size == 0:
        return y
    duration = y.size / source_rate
    n_out = max(1, int(round(duration * target_rate)))
    src_t = np.arange(y.size) / source_rate
    dst_t = np.arange(n_out) / target_rate
    return np.interp(dst_t, src_t, y)
