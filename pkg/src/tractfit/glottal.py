"""LF-model glottal flow derivative synthesis and (F0, tenseness) estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt, lfilter

from .dsp import AudioBuffer, magnitude_spectrum
from .errors import HarmonicsNotFoundError, RdRangeError, UnvoicedFrameError

# H1-H2 regression: H1 - H2 = -7.6 + 11.1 * Rd (dB).
H1H2_INTERCEPT = -7.6
H1H2_SLOPE = 11.1

# Rd image of clamping tenseness to [0, 1], plus a strictly positive floor.
RD_MIN = 0.01
RD_MAX = 3.0

# The Ra/Rk regression yields valid pulse timing only for Rd above ~0.21;
# synthesis clamps into this interior range so every tenseness is renderable.
LF_RD_MIN = 0.3
LF_RD_MAX = 3.0

# Aspiration noise: gentle band-pass, base gain relative to the unit LF peak.
NOISE_BAND_HZ = (500.0, 8000.0)
NOISE_BASE_GAIN = 0.2

# YIN defaults: canonical threshold and integration window, male-speech range.
# When nothing dips below the threshold the global minimum is used instead,
# as long as it stays below the aperiodicity ceiling.
YIN_THRESHOLD = 0.1
YIN_APERIODICITY_MAX = 0.5
YIN_WINDOW_S = 0.025
F0_SEARCH_HZ = (60.0, 500.0)


@dataclass(frozen=True)
class GlottalParams:
    """Fundamental frequency in Hz and tenseness in [0, 1] (clamped)."""

    f0: float
    tenseness: float

    def __post_init__(self):
        if not (self.f0 > 0 and np.isfinite(self.f0)):
            raise ValueError("f0 must be positive and finite")
        object.__setattr__(self, "tenseness", float(np.clip(self.tenseness, 0.0, 1.0)))

    @property
    def rd(self) -> float:
        return rd_from_tenseness(self.tenseness)


def rd_from_tenseness(tenseness: float) -> float:
    """Rd = 3 (1 - T)."""
    return 3.0 * (1.0 - float(np.clip(tenseness, 0.0, 1.0)))


def tenseness_from_rd(rd: float) -> float:
    """T = 1 - Rd / 3, clamped to [0, 1]."""
    return float(np.clip(1.0 - rd / 3.0, 0.0, 1.0))


def rd_from_h1h2(h1h2_db: float) -> float:
    """Invert the linear H1-H2 regression; result clamped to [RD_MIN, RD_MAX]."""
    rd = (h1h2_db - H1H2_INTERCEPT) / H1H2_SLOPE
    return float(np.clip(rd, RD_MIN, RD_MAX))


@dataclass(frozen=True)
class LFShape:
    """Derived LF pulse parameters for one period normalized to t in [0, 1).

    The pulse peaks at -1 (the glottal closure instant at t = te) and its
    integral over one period is zero.
    """

    rd: float
    tp: float       # instant of maximum flow (opening-phase peak)
    te: float       # glottal closure instant (main negative excursion)
    ta: float       # effective return-phase duration
    alpha: float    # open-phase exponential growth rate
    epsilon: float  # return-phase decay rate
    e0: float       # open-phase amplitude factor
    omega: float    # open-phase angular frequency, pi / tp

    def waveform(self, phase: np.ndarray) -> np.ndarray:
        """Evaluate the pulse at phases in [0, 1)."""
        t = np.asarray(phase, dtype=np.float64)
        out = np.empty_like(t)
        open_mask = t <= self.te
        to = t[open_mask]
        out[open_mask] = self.e0 * np.exp(self.alpha * to) * np.sin(self.omega * to)
        tr = t[~open_mask]
        shift = np.exp(-self.epsilon * (1.0 - self.te))
        out[~open_mask] = -(np.exp(-self.epsilon * (tr - self.te)) - shift) / (
            self.epsilon * self.ta
        )
        return out


def _bisect(f, lo: float, hi: float, tol: float = 1e-9, max_iter: int = 200) -> float:
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def lf_shape(rd: float) -> LFShape:
    """Construct LF pulse parameters from Rd via the published regression.

    Ra and Rk are affine in Rd; Rg follows from the Rd definition. The
    return-phase rate and the open-phase growth rate are solved by bisection
    so the pulse ends at zero and integrates to zero over the period.
    """
    if not (RD_MIN <= rd <= RD_MAX):
        raise ValueError(f"rd must lie in [{RD_MIN}, {RD_MAX}]")
    ra = -0.01 + 0.048 * rd
    rk = 0.224 + 0.118 * rd
    if ra <= 0:
        raise RdRangeError("Rd out of model range: non-positive return phase")
    rg_denom = 0.11 * rd - ra * (0.5 + 1.2 * rk)
    if rg_denom <= 0:
        raise RdRangeError("Rd out of model range: Rg has no positive solution")
    rg = (rk / 4.0) * (0.5 + 1.2 * rk) / rg_denom
    ta = ra
    tp = 1.0 / (2.0 * rg)
    te = tp * (1.0 + rk)
    if not (0.0 < tp < te < 1.0 and te + ta < 1.0):
        raise RdRangeError("Rd out of model range: pulse timing exceeds the period")

    # Return-phase rate: epsilon * ta = 1 - exp(-epsilon (1 - te)).
    def eps_eq(e):
        return e * ta - 1.0 + np.exp(-e * (1.0 - te))

    hi = 2.0 / ta
    while eps_eq(hi) < 0:
        hi *= 2.0
    epsilon = _bisect(eps_eq, 1e-6 / ta, hi)

    # Return-phase integral with unit peak (Ee = 1).
    tail = 1.0 - te
    shift = np.exp(-epsilon * tail)
    ret_integral = -((1.0 - shift) / epsilon - tail * shift) / (epsilon * ta)

    omega = np.pi / tp
    sin_e = np.sin(omega * te)

    # Open-phase growth rate: total pulse integral must vanish.
    def balance(alpha):
        e0 = -1.0 / (np.exp(alpha * te) * sin_e)
        num = np.exp(alpha * te) * (alpha * sin_e - omega * np.cos(omega * te)) + omega
        return e0 * num / (alpha * alpha + omega * omega) + ret_integral

    alpha = _bisect(balance, -100.0, 1000.0)
    e0 = -1.0 / (np.exp(alpha * te) * sin_e)
    return LFShape(rd=rd, tp=tp, te=te, ta=ta, alpha=alpha, epsilon=epsilon,
                   e0=e0, omega=omega)


def aspiration_noise(n: int, sample_rate: float, seed) -> np.ndarray:
    """Band-passed unit-scale white noise; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n)
    b, a = butter(1, NOISE_BAND_HZ, btype="bandpass", fs=sample_rate)
    return lfilter(b, a, white)


def synthesize_gfd(params: GlottalParams, duration_samples: int,
                   sample_rate: float = 48000.0, noise_seed=0) -> AudioBuffer:
    """Periodic LF pulses at F0 plus aspiration noise scaled by 1 - sqrt(T)."""
    shape = lf_shape(float(np.clip(params.rd, LF_RD_MIN, LF_RD_MAX)))
    phase = (np.arange(duration_samples) * (params.f0 / sample_rate)) % 1.0
    voiced = shape.waveform(phase)
    gain = NOISE_BASE_GAIN * (1.0 - np.sqrt(params.tenseness))
    if gain > 0:
        voiced = voiced + gain * aspiration_noise(duration_samples, sample_rate,
                                                  noise_seed)
    return AudioBuffer(voiced, sample_rate)


def synthesize_gfd_track(f0: np.ndarray, tenseness: np.ndarray,
                         sample_rate: float = 48000.0, noise_seed=0) -> AudioBuffer:
    """Per-sample (F0, tenseness) tracks to a GFD signal via phase accumulation.

    Pulse shape follows tenseness at pitch-period granularity: each period is
    rendered with the shape at its starting sample, so a pulse is never
    deformed mid-cycle.
    """
    f0 = np.asarray(f0, dtype=np.float64)
    tens = np.asarray(tenseness, dtype=np.float64)
    if f0.shape != tens.shape:
        raise ValueError("f0 and tenseness tracks must have equal length")
    n = f0.size
    cum = np.concatenate([[0.0], np.cumsum(f0[:-1] / sample_rate)])
    phase = np.mod(cum, 1.0)
    period_id = np.floor(cum).astype(np.int64)
    starts = np.concatenate([[0], 1 + np.nonzero(np.diff(period_id))[0], [n]])

    out = np.empty(n)
    shape_cache: dict[float, LFShape] = {}
    for a, b in zip(starts[:-1], starts[1:]):
        rd = float(np.clip(rd_from_tenseness(tens[a]), LF_RD_MIN, LF_RD_MAX))
        key = round(rd, 6)
        if key not in shape_cache:
            shape_cache[key] = lf_shape(rd)
        out[a:b] = shape_cache[key].waveform(phase[a:b])

    gain = NOISE_BASE_GAIN * (1.0 - np.sqrt(np.clip(tens, 0.0, 1.0)))
    out = out + gain * aspiration_noise(n, sample_rate, noise_seed)
    return AudioBuffer(out, sample_rate)


def estimate_f0(signal: AudioBuffer, fmin: float = F0_SEARCH_HZ[0],
                fmax: float = F0_SEARCH_HZ[1], threshold: float = YIN_THRESHOLD,
                window_s: float = YIN_WINDOW_S) -> float:
    """YIN pitch estimate: CMNDF, absolute threshold, parabolic interpolation.

    The signal is low-passed at twice the upper search frequency first, which
    keeps the difference function clean when high-frequency noise dominates.
    Raises UnvoicedFrameError when the segment shows no usable periodicity.
    """
    fs = signal.sample_rate
    x = signal.samples
    tau_min = max(2, int(fs / fmax))
    tau_max = int(np.ceil(fs / fmin))
    min_len = tau_max + tau_min
    if x.size < min_len:
        raise ValueError("signal too short for the pitch search range")
    if 2.0 * fmax < fs / 2.0:
        b, a = butter(4, 2.0 * fmax, fs=fs)
        x = filtfilt(b, a, x)
    w = min(int(round(window_s * fs)), x.size - tau_max)

    # Centre the analysis start to skip onset transients in longer buffers.
    start = max(0, (x.size - (w + tau_max)) // 2)
    seg = x[start : start + w + tau_max]
    if not np.any(seg):
        raise UnvoicedFrameError("unvoiced frame")

    head = seg[:w]
    corr = np.correlate(seg, head, mode="valid")  # corr[tau] = sum x[n] x[n+tau]
    sq = np.concatenate([[0.0], np.cumsum(seg * seg)])
    energy_0 = sq[w]
    energy_tau = sq[np.arange(tau_max + 1) + w] - sq[np.arange(tau_max + 1)]
    diff = energy_0 + energy_tau - 2.0 * corr
    diff = np.maximum(diff, 0.0)

    cmndf = np.ones(tau_max + 1)
    cum = np.cumsum(diff[1:])
    nonzero = cum > 0
    cmndf[1:][nonzero] = diff[1:][nonzero] * np.arange(1, tau_max + 1)[nonzero] / cum[nonzero]

    tau = None
    for t in range(tau_min, tau_max):
        if cmndf[t] < threshold:
            while t + 1 <= tau_max and cmndf[t + 1] < cmndf[t]:
                t += 1
            tau = t
            break
    if tau is None:
        # canonical fallback: take the global minimum unless it is so shallow
        # that the segment has no usable periodicity
        t = tau_min + int(np.argmin(cmndf[tau_min : tau_max + 1]))
        if cmndf[t] >= YIN_APERIODICITY_MAX:
            raise UnvoicedFrameError("unvoiced frame")
        tau = t

    if 1 <= tau < tau_max:
        a, b, c = cmndf[tau - 1], cmndf[tau], cmndf[tau + 1]
        denom = a - 2.0 * b + c
        offset = 0.5 * (a - c) / denom if abs(denom) > 1e-18 else 0.0
        tau = tau + float(np.clip(offset, -1.0, 1.0))
    return fs / tau


def _harmonic_peak_db(spectrum, center_hz: float, half_width_hz: float) -> float:
    """Magnitude (dB) of the interior spectral peak nearest the harmonic."""
    freqs = spectrum.bin_frequencies
    mags = spectrum.magnitudes
    lo = np.searchsorted(freqs, center_hz - half_width_hz)
    hi = np.searchsorted(freqs, center_hz + half_width_hz)
    lo = max(lo, 1)
    hi = min(hi, freqs.size - 1)
    if hi - lo < 1:
        raise HarmonicsNotFoundError("harmonics not found: search window empty")
    window = mags[lo:hi]
    local = (window > mags[lo - 1 : hi - 1]) & (window >= mags[lo + 1 : hi + 1])
    local &= window > 0
    if not np.any(local):
        raise HarmonicsNotFoundError("harmonics not found: no local maximum")
    candidates = np.nonzero(local)[0]
    idx = lo + candidates[np.argmax(window[candidates])]
    with np.errstate(divide="ignore"):
        a, b, c = 20.0 * np.log10(np.maximum(mags[idx - 1 : idx + 2], 1e-300))
    denom = a - 2.0 * b + c
    if abs(denom) < 1e-18:
        return b
    p = 0.5 * (a - c) / denom
    return b - 0.25 * (a - c) * p


def estimate_tenseness(gfd: AudioBuffer, f0: float) -> float:
    """Tenseness from the H1-H2 level difference of the GFD spectrum.

    Peaks are searched within +/- F0/4 of F0 and 2 F0; the regression maps
    H1-H2 to Rd, then T = 1 - Rd/3 clamped to [0, 1].
    """
    x = gfd.samples
    if x.size < 8:
        raise ValueError("GFD buffer too short for spectral analysis")
    windowed = AudioBuffer(x * np.hanning(x.size), gfd.sample_rate)
    nfft = 1 << int(np.ceil(np.log2(4 * x.size)))
    spectrum = magnitude_spectrum(windowed, nfft)
    h1 = _harmonic_peak_db(spectrum, f0, f0 / 4.0)
    h2 = _harmonic_peak_db(spectrum, 2.0 * f0, f0 / 4.0)
    return tenseness_from_rd(rd_from_h1h2(h1 - h2))
