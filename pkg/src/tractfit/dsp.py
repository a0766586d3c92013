"""Shared signal-processing primitives: LPC, filtering, spectra, smoothing."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter, savgol_filter

from .errors import SilentFrameError, SmoothingWindowWarning, UnstableLpcError

# Magnitude floor applied before any log; near-zero responses are legal inputs.
MAGNITUDE_FLOOR = 1e-12

# Analysis defaults: 4096-point FFT at 48 kHz gives ~11.7 Hz bins, enough to
# separate the first two harmonics of any F0 >= 80 Hz.
DEFAULT_FFT_SIZE = 4096


@dataclass(frozen=True)
class AudioBuffer:
    """A mono signal with its sample rate. Samples are dimensionless floats."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class AllPoleFilter:
    """Denominator coefficients a_0..a_N of an all-pole filter, a_0 = 1."""

    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=np.float64)
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("need at least one coefficient")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        if coeffs[0] != 0:
            coeffs = coeffs / coeffs[0]
        else:
            raise ValueError("a_0 must be nonzero")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def order(self) -> int:
        return self.coefficients.size - 1


@dataclass(frozen=True)
class Spectrum:
    """Non-negative magnitudes sampled on strictly increasing frequencies."""

    magnitudes: np.ndarray
    bin_frequencies: np.ndarray

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64)
        freqs = np.asarray(self.bin_frequencies, dtype=np.float64)
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "bin_frequencies", freqs)
        if mags.shape != freqs.shape:
            raise ValueError("magnitudes and bin_frequencies must match in length")
        if np.any(mags < 0):
            raise ValueError("magnitudes must be non-negative")
        if freqs.size > 1 and not np.all(np.diff(freqs) > 0):
            raise ValueError("bin_frequencies must be strictly increasing")


@dataclass(frozen=True)
class MelConfig:
    """Mel-spectrogram settings. Defaults are a standard speech configuration."""

    num_bands: int = 64
    fft_size: int = 1024
    hop: int = 256
    log_floor: float = 1e-10
    fmin_hz: float = 0.0
    fmax_hz: float | None = None


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation r[0..max_lag] computed via FFT."""
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    spec = np.fft.rfft(x, nfft)
    r = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1]
    return r


def levinson_durbin(r: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve the Toeplitz normal equations; returns (a, reflection, error).

    Raises UnstableLpcError if the prediction error is non-positive or a
    reflection coefficient reaches unit magnitude at any step.
    """
    a = np.zeros(order + 1)
    a[0] = 1.0
    refl = np.zeros(order)
    err = r[0]
    if err <= 0:
        raise UnstableLpcError("unstable LPC: non-positive zero-lag autocorrelation")
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1 : 0 : -1])
        k = -acc / err
        if not np.isfinite(k) or abs(k) >= 1.0:
            raise UnstableLpcError("unstable LPC: reflection coefficient out of range")
        refl[i - 1] = k
        a[1 : i + 1] = a[1 : i + 1] + k * a[i - 1 :: -1][: i]
        err *= 1.0 - k * k
        if err <= 0:
            raise UnstableLpcError("unstable LPC: prediction error collapsed")
    return a, refl, err


def lpc(frame: AudioBuffer, order: int) -> AllPoleFilter:
    """Fit an all-pole filter by the autocorrelation method (Levinson-Durbin).

    The caller windows the frame. The autocorrelation method keeps all poles
    strictly inside the unit circle whenever the recursion completes.
    """
    x = frame.samples
    if x.size <= order:
        raise ValueError("frame must be longer than the LPC order")
    if not np.any(x):
        raise SilentFrameError("silent frame")
    r = autocorrelation(x, order)
    a, _, _ = levinson_durbin(r, order)
    return AllPoleFilter(a)


def filter_magnitude(filt: AllPoleFilter, omega) -> np.ndarray | float:
    """|1 / A(e^{i omega})| with the denominator floored at MAGNITUDE_FLOOR."""
    omega_arr = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    i_vec = np.arange(filt.coefficients.size)
    denom = np.exp(-1j * np.outer(omega_arr, i_vec)) @ filt.coefficients
    mag = 1.0 / np.maximum(np.abs(denom), MAGNITUDE_FLOOR)
    return float(mag[0]) if np.isscalar(omega) or np.ndim(omega) == 0 else mag


def inverse_filter(signal: AudioBuffer, filt: AllPoleFilter) -> AudioBuffer:
    """Apply the FIR inverse y[n] = sum_i a_i x[n-i]; length is preserved."""
    y = lfilter(filt.coefficients, [1.0], signal.samples)
    return AudioBuffer(y, signal.sample_rate)


def apply_all_pole(signal: AudioBuffer, filt: AllPoleFilter) -> AudioBuffer:
    """Run the signal through 1 / A(z); the exact inverse of inverse_filter."""
    y = lfilter([1.0], filt.coefficients, signal.samples)
    return AudioBuffer(y, signal.sample_rate)


def magnitude_spectrum(frame: AudioBuffer, fft_size: int = DEFAULT_FFT_SIZE) -> Spectrum:
    """One-sided magnitude spectrum with linearly spaced bins up to Nyquist."""
    if fft_size < frame.samples.size:
        raise ValueError("fft_size must cover the frame")
    if fft_size & (fft_size - 1):
        raise ValueError("fft_size must be a power of two")
    mags = np.abs(np.fft.rfft(frame.samples, fft_size))
    freqs = np.fft.rfftfreq(fft_size, 1.0 / frame.sample_rate)
    return Spectrum(mags, freqs)


def _mel_from_hz(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _hz_from_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(num_bands: int, fft_size: int, sample_rate: float,
                   fmin_hz: float = 0.0, fmax_hz: float | None = None) -> np.ndarray:
    """Triangular mel filterbank, shape (num_bands, fft_size // 2 + 1)."""
    fmax_hz = sample_rate / 2.0 if fmax_hz is None else fmax_hz
    edges = _hz_from_mel(np.linspace(_mel_from_hz(fmin_hz), _mel_from_hz(fmax_hz),
                                     num_bands + 2))
    bins = np.fft.rfftfreq(fft_size, 1.0 / sample_rate)
    bank = np.zeros((num_bands, bins.size))
    for b in range(num_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        rising = (bins - lo) / max(mid - lo, 1e-9)
        falling = (hi - bins) / max(hi - mid, 1e-9)
        bank[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def mel_spectrogram(signal: AudioBuffer, config: MelConfig = MelConfig()) -> np.ndarray:
    """Log mel-band energies, shape (frames, bands). Deterministic per config."""
    x = signal.samples
    if x.size == 0:
        raise ValueError("signal must be non-empty")
    n, hop = config.fft_size, config.hop
    if x.size < n:
        x = np.pad(x, (0, n - x.size))
    window = np.hanning(n)
    num_frames = 1 + (x.size - n) // hop
    bank = mel_filterbank(config.num_bands, n, signal.sample_rate,
                          config.fmin_hz, config.fmax_hz)
    out = np.empty((num_frames, config.num_bands))
    for i in range(num_frames):
        seg = x[i * hop : i * hop + n] * window
        power = np.abs(np.fft.rfft(seg)) ** 2
        out[i] = np.log10(np.maximum(bank @ power, config.log_floor))
    return out


def mel_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error between two equal-shape mel-spectrograms."""
    frames = min(a.shape[0], b.shape[0])
    return float(np.mean((a[:frames] - b[:frames]) ** 2))


def savitzky_golay(series, window: int, poly_order: int) -> np.ndarray:
    """Least-squares polynomial smoothing; edges use truncated-window fits.

    A window that does not fit the series returns it unchanged and emits
    SmoothingWindowWarning.
    """
    x = np.asarray(series, dtype=np.float64)
    if window % 2 == 0:
        raise ValueError("window must be odd")
    if poly_order >= window:
        raise ValueError("poly_order must be smaller than window")
    if window >= x.size:
        warnings.warn("smoothing window exceeds series length; returning input",
                      SmoothingWindowWarning)
        return x.copy()
    return savgol_filter(x, window, poly_order, mode="interp")
