"""Analytic transfer function of the piecewise-cylindrical tract, loss, gradients.

The magnitude response comes from the ordered chain product of per-junction
2x2 matrices. The spectral loss compares log10 magnitudes on a linear grid;
its gradient with respect to the controls is computed by reverse accumulation
through the chain (prefix/suffix products), the scattering map, and the
control model. Central finite differences are the independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .dsp import MAGNITUDE_FLOOR, Spectrum
from .tract import (
    GLOTTAL_REFLECTION,
    LIP_REFLECTION,
    ReflectionModel,
    SimulationConfig,
    TractControls,
    controls_to_normalized,
    diameters_backward,
    diameters_from_normalized,
    scattering_backward,
    scattering_coefficients,
)

DEFAULT_GRID_SIZE = 512

# The reported step size pairs with spectral error measured in decibels;
# (20 log10 x)^2 = 400 (log10 x)^2 converts between the conventions.
DB_PER_LOG10_SQ = 400.0


@dataclass(frozen=True)
class FrequencyGrid:
    """F angular frequencies, linear from 0 inclusive to pi exclusive."""

    size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("grid needs at least one point")

    @property
    def omegas(self) -> np.ndarray:
        return np.arange(self.size) * np.pi / self.size

    def frequencies_hz(self, sample_rate: float) -> np.ndarray:
        return self.omegas * sample_rate / (2.0 * np.pi)


@dataclass(frozen=True)
class LossGradient:
    """Loss value and its partials in normalized-parameter units."""

    loss: float
    tongue_position: float
    tongue_diameter: float
    constrictions: tuple  # (d/d position, d/d diameter) per constriction

    def as_array(self) -> np.ndarray:
        flat = [self.tongue_position, self.tongue_diameter]
        for gp, gd in self.constrictions:
            flat.extend([gp, gd])
        return np.asarray(flat)


@njit(cache=True)
def _response_kernel(k, omega, r0, rl):
    """Complex H at each omega; denominators below the floor are rescaled."""
    M = k.size
    F = omega.size
    out = np.empty(F, dtype=np.complex128)
    prod = 1.0
    for m in range(M):
        prod *= 1.0 + k[m]
    for f in range(F):
        z = np.exp(-1j * omega[f])
        k00 = 1.0 + 0.0j
        k01 = 0.0 + 0.0j
        k10 = 0.0 + 0.0j
        k11 = 1.0 + 0.0j
        for m in range(M):
            m01 = k[m] * z
            n00 = k00 + k01 * k[m]
            n01 = k00 * m01 + k01 * z
            n10 = k10 + k11 * k[m]
            n11 = k10 * m01 + k11 * z
            k00, k01, k10, k11 = n00, n01, n10, n11
        delay = np.exp(-1j * omega[f] * (M + 1) / 2.0)
        numerator = (1.0 + z) * delay * prod
        denominator = k00 + k01 * rl - r0 * (k10 + k11 * rl) * z
        mag = np.abs(denominator)
        if mag < MAGNITUDE_FLOOR:
            if mag == 0.0:
                denominator = MAGNITUDE_FLOOR + 0.0j
            else:
                denominator = denominator * (MAGNITUDE_FLOOR / mag)
        out[f] = numerator / denominator
    return out


@njit(cache=True)
def _loss_kernel(k, omega, target_log10, r0, rl, need_grad):
    """Mean squared log10-magnitude error, its gradient in k, and log10 |H|."""
    M = k.size
    F = omega.size
    ln10 = np.log(10.0)
    logmag = np.empty(F)
    g_k = np.zeros(M)
    prefix = np.empty((M + 1, 2, 2), dtype=np.complex128)
    suffix = np.empty((M + 2, 2, 2), dtype=np.complex128)
    loss = 0.0

    abs_prod = 1.0
    for m in range(M):
        abs_prod *= 1.0 + k[m]

    for f in range(F):
        z = np.exp(-1j * omega[f])
        prefix[0, 0, 0] = 1.0
        prefix[0, 0, 1] = 0.0
        prefix[0, 1, 0] = 0.0
        prefix[0, 1, 1] = 1.0
        for m in range(M):
            a00 = prefix[m, 0, 0]
            a01 = prefix[m, 0, 1]
            a10 = prefix[m, 1, 0]
            a11 = prefix[m, 1, 1]
            m01 = k[m] * z
            prefix[m + 1, 0, 0] = a00 + a01 * k[m]
            prefix[m + 1, 0, 1] = a00 * m01 + a01 * z
            prefix[m + 1, 1, 0] = a10 + a11 * k[m]
            prefix[m + 1, 1, 1] = a10 * m01 + a11 * z

        K00 = prefix[M, 0, 0]
        K01 = prefix[M, 0, 1]
        K10 = prefix[M, 1, 0]
        K11 = prefix[M, 1, 1]
        denominator = K00 + K01 * rl - r0 * (K10 + K11 * rl) * z
        abs_den = np.abs(denominator)
        abs_den_eff = abs_den if abs_den > MAGNITUDE_FLOOR else MAGNITUDE_FLOOR
        abs_num = np.abs(1.0 + z) * abs_prod
        mag = abs_num / abs_den_eff
        mag_eff = mag if mag > MAGNITUDE_FLOOR else MAGNITUDE_FLOOR
        lm = np.log10(mag_eff)
        logmag[f] = lm
        err = lm - target_log10[f]
        loss += err * err

        if not need_grad:
            continue
        g_lm = 2.0 * err / F
        if mag <= MAGNITUDE_FLOOR:
            continue
        g_mag = g_lm / (mag_eff * ln10)
        g_abs_num = g_mag / abs_den_eff
        g_abs_den = -g_mag * abs_num / (abs_den_eff * abs_den_eff) \
            if abs_den > MAGNITUDE_FLOOR else 0.0

        for m in range(M):
            g_k[m] += g_abs_num * abs_num / (1.0 + k[m])

        if g_abs_den != 0.0 and abs_den > 0.0:
            suffix[M + 1, 0, 0] = 1.0
            suffix[M + 1, 0, 1] = 0.0
            suffix[M + 1, 1, 0] = 0.0
            suffix[M + 1, 1, 1] = 1.0
            for m in range(M, 0, -1):
                b00 = suffix[m + 1, 0, 0]
                b01 = suffix[m + 1, 0, 1]
                b10 = suffix[m + 1, 1, 0]
                b11 = suffix[m + 1, 1, 1]
                km = k[m - 1]
                suffix[m, 0, 0] = b00 + km * z * b10
                suffix[m, 0, 1] = b01 + km * z * b11
                suffix[m, 1, 0] = km * b00 + z * b10
                suffix[m, 1, 1] = km * b01 + z * b11
            d_conj = np.conj(denominator)
            for m in range(1, M + 1):
                a00 = prefix[m - 1, 0, 0]
                a01 = prefix[m - 1, 0, 1]
                a10 = prefix[m - 1, 1, 0]
                a11 = prefix[m - 1, 1, 1]
                # dM/dk = [[0, z], [1, 0]]: (prefix @ dM) swaps columns with a z
                c00 = a01
                c01 = a00 * z
                c10 = a11
                c11 = a10 * z
                b = suffix[m + 1]
                g00 = c00 * b[0, 0] + c01 * b[1, 0]
                g01 = c00 * b[0, 1] + c01 * b[1, 1]
                g10 = c10 * b[0, 0] + c11 * b[1, 0]
                g11 = c10 * b[0, 1] + c11 * b[1, 1]
                d_dk = g00 + g01 * rl - r0 * (g10 + g11 * rl) * z
                g_k[m - 1] += g_abs_den * (d_conj * d_dk).real / abs_den

    return loss / F, g_k, logmag


def evaluate_hkl(reflections: ReflectionModel, omega) -> np.ndarray | complex:
    """Complex transfer-function value(s) at omega in [0, pi)."""
    omega_arr = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    values = _response_kernel(np.ascontiguousarray(reflections.k, dtype=np.float64),
                              omega_arr, reflections.glottal_reflection,
                              reflections.lip_reflection)
    return complex(values[0]) if np.ndim(omega) == 0 else values


def hkl_magnitude(reflections: ReflectionModel, grid: FrequencyGrid,
                  config: SimulationConfig = SimulationConfig()) -> Spectrum:
    """|H_KL| sampled on the grid, as a Spectrum in Hz."""
    values = np.abs(evaluate_hkl(reflections, grid.omegas))
    return Spectrum(values, grid.frequencies_hz(config.sample_rate))


def _target_log10(target: Spectrum, grid: FrequencyGrid) -> np.ndarray:
    if target.magnitudes.size != grid.size:
        raise ValueError("target spectrum is not sampled on the frequency grid")
    return np.log10(np.maximum(target.magnitudes, MAGNITUDE_FLOOR))


def loss_from_normalized(u: np.ndarray, target_log10: np.ndarray,
                         omega: np.ndarray) -> float:
    """Forward loss for a normalized parameter vector."""
    diameters, _ = diameters_from_normalized(u)
    k = scattering_coefficients(diameters)
    loss, _, _ = _loss_kernel(k, omega, target_log10, GLOTTAL_REFLECTION,
                              LIP_REFLECTION, False)
    return float(loss)


def loss_and_gradient_from_normalized(u: np.ndarray, target_log10: np.ndarray,
                                      omega: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and d(loss)/du through the full chain, normalized units."""
    diameters, cache = diameters_from_normalized(u)
    k = scattering_coefficients(diameters)
    loss, g_k, _ = _loss_kernel(k, omega, target_log10, GLOTTAL_REFLECTION,
                                LIP_REFLECTION, True)
    g_d = scattering_backward(diameters, g_k)
    return float(loss), diameters_backward(cache, g_d)


def logmag_from_normalized(u: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """log10 |H| for a normalized parameter vector."""
    diameters, _ = diameters_from_normalized(u)
    k = scattering_coefficients(diameters)
    _, _, logmag = _loss_kernel(k, omega, np.zeros(omega.size),
                                GLOTTAL_REFLECTION, LIP_REFLECTION, False)
    return logmag


def controls_response(controls: TractControls, grid: FrequencyGrid = FrequencyGrid(),
                      config: SimulationConfig = SimulationConfig()) -> Spectrum:
    """|H_KL| for a set of controls; the given-response experiment target."""
    u = controls_to_normalized(controls, len(controls.constrictions))
    logmag = logmag_from_normalized(u, grid.omegas)
    return Spectrum(10.0 ** logmag, grid.frequencies_hz(config.sample_rate))


def spectral_loss(controls: TractControls, target: Spectrum,
                  grid: FrequencyGrid = FrequencyGrid()) -> float:
    """Mean squared log10-magnitude error between the controls and a target."""
    u = controls_to_normalized(controls, len(controls.constrictions))
    return loss_from_normalized(u, _target_log10(target, grid), grid.omegas)


def loss_gradient(controls: TractControls, target: Spectrum,
                  grid: FrequencyGrid = FrequencyGrid()) -> LossGradient:
    """Exact partials of spectral_loss for every control, normalized units."""
    u = controls_to_normalized(controls, len(controls.constrictions))
    loss, g = loss_and_gradient_from_normalized(u, _target_log10(target, grid),
                                                grid.omegas)
    cons = tuple((float(g[i]), float(g[i + 1])) for i in range(2, g.size, 2))
    return LossGradient(loss=loss, tongue_position=float(g[0]),
                        tongue_diameter=float(g[1]), constrictions=cons)
