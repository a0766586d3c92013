"""Glottal-flow-model iterative adaptive inverse filtering (source-filter split).

Separates a speech frame into a glottal flow derivative and an all-pole vocal
tract filter: a 3rd-order glottal spectral model is built from cascaded
order-1 fits, glottis and lip radiation are cancelled, and the tract is fitted
at full order. All fits use the autocorrelation method so inverses stay stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .dsp import AllPoleFilter, AudioBuffer, Spectrum, filter_magnitude, lpc
from .transfer import FrequencyGrid

GLOTTAL_ORDER = 3

# Leaky integrator 1/(1 - LIP_LEAK z^-1) cancels the lip radiation differentiator;
# a pole exactly at 1 would be numerically unsafe.
LIP_LEAK = 0.99

# High-order fits on strongly voiced frames can park a razor-thin pole on an
# individual harmonic; widening every pole by this factor when recovering the
# source keeps single harmonics from being notched out of the GFD estimate.
SOURCE_BANDWIDTH_EXPANSION = 0.99


def default_tract_order(sample_rate: float) -> int:
    """One pole pair per kHz of bandwidth plus two poles of headroom."""
    return int(round(sample_rate / 1000.0)) + 2


@dataclass(frozen=True)
class IaifResult:
    """Vocal tract filter, 3rd-order glottal filter, and the GFD estimate."""

    tract_filter: AllPoleFilter
    glottal_filter: AllPoleFilter
    gfd: AudioBuffer


def _stabilized(coeffs: np.ndarray) -> np.ndarray:
    """Reflect any pole outside the unit circle back inside (radius -> 1/radius)."""
    roots = np.roots(coeffs)
    outside = np.abs(roots) > 1.0
    if not np.any(outside):
        return coeffs
    roots[outside] = 1.0 / np.conj(roots[outside])
    return np.real(np.poly(roots))


def gfm_iaif(frame: AudioBuffer, tract_order: int | None = None,
             glottal_order: int = GLOTTAL_ORDER) -> IaifResult:
    """Split a frame into GFD source and vocal tract filter.

    The frame is Hann-windowed internally for every fit; a short mirrored
    pre-frame ramp suppresses filter onset transients.
    """
    fs = frame.sample_rate
    if tract_order is None:
        tract_order = default_tract_order(fs)
    x = frame.samples
    if x.size < 4 * tract_order:
        raise ValueError("frame must be at least four times the tract order")
    win = np.hanning(x.size)

    pre = tract_order + 1
    x_pre = np.concatenate([np.linspace(-x[0], x[0], pre), x])
    lip = np.array([1.0, -LIP_LEAK])

    def fit(signal: np.ndarray, order: int) -> np.ndarray:
        return lpc(AudioBuffer(signal * win, fs), order).coefficients

    # Cancel lip radiation, then build the glottal model from order-1 passes.
    gv_pre = lfilter([1.0], lip, x_pre)
    gv = lfilter([1.0], lip, x)
    glottis_gross = fit(gv, 1)
    for _ in range(glottal_order - 1):
        residual = lfilter(glottis_gross, [1.0], gv_pre)[pre:]
        glottis_gross = np.convolve(glottis_gross, fit(residual, 1))

    # Gross tract: fit after removing the gross glottal contribution.
    v1 = lfilter(glottis_gross, [1.0], gv_pre)[pre:]
    tract_gross = fit(v1, tract_order)

    # Fine glottis: remove the gross tract, fit the 3rd-order glottal filter.
    g1 = lfilter(tract_gross, [1.0], gv_pre)[pre:]
    glottis_fine = fit(g1, glottal_order)

    # Fine tract: remove the fine glottis, fit the tract at full order.
    v2 = lfilter(glottis_fine, [1.0], gv_pre)[pre:]
    tract_fine = _stabilized(fit(v2, tract_order))

    tract_filter = AllPoleFilter(tract_fine)
    gfd = AudioBuffer(lfilter(tract_fine, [1.0], x * win), fs)
    return IaifResult(tract_filter=tract_filter,
                      glottal_filter=AllPoleFilter(glottis_fine),
                      gfd=gfd)


def tract_response_from_iaif(result: IaifResult, num_freqs: int) -> Spectrum:
    """|V| sampled at omega_f = f pi / F; the inverse-filtered fit target."""
    grid = FrequencyGrid(num_freqs)
    magnitudes = filter_magnitude(result.tract_filter, grid.omegas)
    return Spectrum(magnitudes, grid.frequencies_hz(result.gfd.sample_rate))


def recover_gfd(signal: AudioBuffer, result: IaifResult,
                bandwidth_expansion: float = SOURCE_BANDWIDTH_EXPANSION) -> AudioBuffer:
    """Inverse-filter a full signal to a GFD estimate for source analysis.

    The tract inverse is bandwidth-expanded so that an over-sharp pole cannot
    notch a harmonic; the unexpanded filter in the result stays the spectral
    fit target.
    """
    a = result.tract_filter.coefficients
    a_soft = a * bandwidth_expansion ** np.arange(a.size)
    return AudioBuffer(lfilter(a_soft, [1.0], signal.samples), signal.sample_rate)
