"""Articulatory control model: base diameter, tongue, constrictions, areas.

The control-to-diameter chain is smooth in every control so the spectral loss
can be differentiated through it; forward evaluation and hand-derived partials
live side by side here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NUM_SEGMENTS = 44          # M + 1 cylindrical segments
NUM_JUNCTIONS = 43         # M inner scattering junctions

# Reflection at the tract ends.
GLOTTAL_REFLECTION = 0.75
LIP_REFLECTION = -0.85

# Control parameter ranges (position unit: segments along the tract).
TONGUE_POSITION_RANGE = (12.0, 29.0)
TONGUE_DIAMETER_RANGE = (2.05, 3.5)   # cm
CONSTRICTION_POSITION_RANGE = (0.0, 43.0)
CONSTRICTION_DIAMETER_RANGE = (0.3, 2.0)  # cm

# Open-tract regime: constrictions never narrow below this diameter.
DIAMETER_FLOOR = 0.3

# Tongue region boundaries and the neutral profile it modifies (glottis -> lips).
BLADE_START = 10
TIP_START = 32
LIP_START = 39
_SEG_INDEX = np.arange(NUM_SEGMENTS, dtype=np.float64)
_BASE_DIAMETER = np.concatenate([
    np.full(7, 0.6), np.full(5, 1.1), np.full(NUM_SEGMENTS - 12, 1.5),
])
_TONGUE_MASK = (_SEG_INDEX >= BLADE_START) & (_SEG_INDEX < LIP_START)
# Edge tapers soften the bump where the tongue region meets the neutral profile.
_TAPER = np.ones(NUM_SEGMENTS)
_TAPER[BLADE_START] = 0.94
_TAPER[LIP_START - 2] = 0.94
_TAPER[LIP_START - 1] = 0.8


@dataclass(frozen=True)
class SimulationConfig:
    """Waveguide geometry and rate; tract length follows from these."""

    sample_rate: float = 48000.0
    speed_of_sound: float = 350.0
    segments: int = NUM_SEGMENTS

    @property
    def tract_length_m(self) -> float:
        return self.segments * self.speed_of_sound / (2.0 * self.sample_rate)


@dataclass(frozen=True)
class TractControls:
    """Tongue position/diameter plus optional constrictions; the fit variables."""

    tongue_position: float
    tongue_diameter: float
    constrictions: tuple = ()

    def __post_init__(self):
        _check_range("tongue_position", self.tongue_position, TONGUE_POSITION_RANGE)
        _check_range("tongue_diameter", self.tongue_diameter, TONGUE_DIAMETER_RANGE)
        cons = tuple((float(p), float(d)) for p, d in self.constrictions)
        for p, d in cons:
            _check_range("constriction position", p, CONSTRICTION_POSITION_RANGE)
            _check_range("constriction diameter", d, CONSTRICTION_DIAMETER_RANGE)
        object.__setattr__(self, "constrictions", cons)


def _check_range(name: str, value: float, rng: tuple[float, float]):
    if not (rng[0] <= value <= rng[1]):
        raise ValueError(f"{name} {value} outside [{rng[0]}, {rng[1]}]")


@dataclass(frozen=True)
class AreaFunction:
    """44 segment diameters (cm) and the cross-sectional areas they imply."""

    diameters: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diameters, dtype=np.float64)
        object.__setattr__(self, "diameters", d)
        if d.shape != (NUM_SEGMENTS,):
            raise ValueError(f"need exactly {NUM_SEGMENTS} diameters")
        if np.any(d < DIAMETER_FLOOR - 1e-9):
            raise ValueError("diameter below the open-tract floor")

    @property
    def areas(self) -> np.ndarray:
        return np.pi * (self.diameters / 2.0) ** 2


@dataclass(frozen=True)
class ReflectionModel:
    """Junction scattering coefficients plus end reflections."""

    k: np.ndarray
    glottal_reflection: float = GLOTTAL_REFLECTION
    lip_reflection: float = LIP_REFLECTION

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.float64)
        object.__setattr__(self, "k", k)
        if np.any(np.abs(k) >= 1.0):
            raise ValueError("scattering coefficients must have magnitude < 1")


# ---------------------------------------------------------------------------
# Control chain: forward evaluation
# ---------------------------------------------------------------------------

def rest_diameter_values(tongue_position: float, tongue_diameter: float) -> np.ndarray:
    """Neutral profile with the sinusoidal tongue deformation applied."""
    fixed = 2.0 + (tongue_diameter - 2.0) / 1.5
    phase = 1.1 * np.pi * (tongue_position - _SEG_INDEX) / (TIP_START - BLADE_START)
    curve = (1.5 - fixed + 1.7) * np.cos(phase) * _TAPER
    return np.where(_TONGUE_MASK, 1.5 - curve, _BASE_DIAMETER)


def constriction_half_width(position: float) -> float:
    """Half-width in segments: 10 toward the glottis, 5 toward the lips."""
    return float(np.clip(10.0 - 5.0 * (position - 25.0) / 7.0, 5.0, 10.0))


def _blend_constriction(d: np.ndarray, position: float, con_diameter: float):
    """One raised-cosine dip, min-blended. Returns (d_new, cache for backward)."""
    width = constriction_half_width(position)
    rel = np.abs(_SEG_INDEX - position) - 0.5
    ramp = rel / width
    interior = (ramp > 0.0) & (ramp < 1.0)
    ramp_c = np.clip(ramp, 0.0, 1.0)
    shrink = 0.5 * (1.0 - np.cos(np.pi * ramp_c))
    candidate = con_diameter + (d - con_diameter) * shrink
    takes = candidate < d
    d_new = np.where(takes, candidate, d)
    cache = {
        "d_prev": d, "position": position, "con_diameter": con_diameter,
        "width": width, "rel": rel, "ramp": ramp_c, "interior": interior,
        "shrink": shrink, "takes": takes,
    }
    return d_new, cache


def apply_constrictions_values(rest: np.ndarray, constrictions) -> np.ndarray:
    d = rest
    for position, con_diameter in constrictions:
        d, _ = _blend_constriction(d, position, con_diameter)
    return np.maximum(d, DIAMETER_FLOOR)


def rest_diameter(tongue_position: float, tongue_diameter: float) -> AreaFunction:
    """Area function before constrictions."""
    _check_range("tongue_position", tongue_position, TONGUE_POSITION_RANGE)
    _check_range("tongue_diameter", tongue_diameter, TONGUE_DIAMETER_RANGE)
    return AreaFunction(rest_diameter_values(tongue_position, tongue_diameter))


def apply_constrictions(rest: AreaFunction, constrictions) -> AreaFunction:
    """Narrow the rest profile; an empty constriction list is the identity."""
    return AreaFunction(apply_constrictions_values(rest.diameters, constrictions))


def area_function(controls: TractControls) -> AreaFunction:
    """Area function for a full set of controls."""
    return apply_constrictions(
        rest_diameter(controls.tongue_position, controls.tongue_diameter),
        controls.constrictions,
    )


def scattering_coefficients(diameters: np.ndarray) -> np.ndarray:
    """k_m = (A_m - A_{m-1}) / (A_m + A_{m-1}) from the segment diameters."""
    areas = np.pi * (diameters / 2.0) ** 2
    return (areas[1:] - areas[:-1]) / (areas[1:] + areas[:-1])


def reflection_coefficients(area: AreaFunction,
                            glottal_reflection: float = GLOTTAL_REFLECTION,
                            lip_reflection: float = LIP_REFLECTION) -> ReflectionModel:
    """Scattering coefficients of the 43 inner junctions."""
    return ReflectionModel(scattering_coefficients(area.diameters),
                           glottal_reflection, lip_reflection)


# ---------------------------------------------------------------------------
# Normalized-parameter mapping and the differentiable chain used by the fit
# ---------------------------------------------------------------------------

def controls_to_normalized(controls: TractControls, num_constrictions: int) -> np.ndarray:
    """Map controls into [0, 1]^(2 + 2c); absent constrictions sit fully open."""
    u = [
        _normalize(controls.tongue_position, TONGUE_POSITION_RANGE),
        _normalize(controls.tongue_diameter, TONGUE_DIAMETER_RANGE),
    ]
    for i in range(num_constrictions):
        if i < len(controls.constrictions):
            p, d = controls.constrictions[i]
            u.append(_normalize(p, CONSTRICTION_POSITION_RANGE))
            u.append(_normalize(d, CONSTRICTION_DIAMETER_RANGE))
        else:
            u.extend([0.5, 1.0])
    return np.asarray(u)


def controls_from_normalized(u: np.ndarray) -> TractControls:
    """Inverse of controls_to_normalized."""
    u = np.asarray(u, dtype=np.float64)
    if u.size < 2 or u.size % 2:
        raise ValueError("normalized vector must have even length >= 2")
    cons = []
    for i in range(2, u.size, 2):
        cons.append((
            _denormalize(u[i], CONSTRICTION_POSITION_RANGE),
            _denormalize(u[i + 1], CONSTRICTION_DIAMETER_RANGE),
        ))
    return TractControls(
        tongue_position=_denormalize(u[0], TONGUE_POSITION_RANGE),
        tongue_diameter=_denormalize(u[1], TONGUE_DIAMETER_RANGE),
        constrictions=tuple(cons),
    )


def diameters_from_normalized(u: np.ndarray):
    """Forward chain u -> diameters, retaining what the backward pass needs."""
    u = np.asarray(u, dtype=np.float64)
    tp = _lerp(u[0], TONGUE_POSITION_RANGE)
    td = _lerp(u[1], TONGUE_DIAMETER_RANGE)
    d = rest_diameter_values(tp, td)
    caches = []
    for i in range(2, u.size, 2):
        d, cache = _blend_constriction(
            d,
            _lerp(u[i], CONSTRICTION_POSITION_RANGE),
            _lerp(u[i + 1], CONSTRICTION_DIAMETER_RANGE),
        )
        caches.append(cache)
    floored = d < DIAMETER_FLOOR
    out = np.where(floored, DIAMETER_FLOOR, d)
    return out, {"tp": tp, "td": td, "caches": caches, "floored": floored,
                 "num_params": u.size}


def diameters_backward(cache: dict, g_d: np.ndarray) -> np.ndarray:
    """Accumulate d(loss)/d(normalized controls) from d(loss)/d(diameters)."""
    g = np.where(cache["floored"], 0.0, g_d)
    g_u = np.zeros(cache["num_params"])

    for slot, c in reversed(list(enumerate(cache["caches"]))):
        takes, shrink = c["takes"], c["shrink"]
        d_prev, cd = c["d_prev"], c["con_diameter"]
        g_taken = np.where(takes, g, 0.0)
        g_shrink = g_taken * (d_prev - cd)
        g_cd = np.sum(g_taken * (1.0 - shrink))
        # shrink = (1 - cos(pi ramp))/2, ramp = clip(rel / width)
        g_ramp = np.where(c["interior"], g_shrink * 0.5 * np.pi
                          * np.sin(np.pi * c["ramp"]), 0.0)
        g_rel = g_ramp / c["width"]
        g_width = -np.sum(g_ramp * c["rel"]) / c["width"] ** 2
        g_pos = -np.sum(g_rel * np.sign(_SEG_INDEX - c["position"]))
        if 5.0 < c["width"] < 10.0:
            g_pos += g_width * (-5.0 / 7.0)
        g_u[2 + 2 * slot] = g_pos * _span(CONSTRICTION_POSITION_RANGE)
        g_u[3 + 2 * slot] = g_cd * _span(CONSTRICTION_DIAMETER_RANGE)
        g = np.where(takes, g * shrink, g)

    phase = 1.1 * np.pi * (cache["tp"] - _SEG_INDEX) / (TIP_START - BLADE_START)
    fixed = 2.0 + (cache["td"] - 2.0) / 1.5
    amp = (1.5 - fixed + 1.7) * _TAPER
    in_region = _TONGUE_MASK
    # d = 1.5 - amp cos(phase) inside the tongue region
    dd_dtp = np.where(in_region,
                      amp * np.sin(phase) * (1.1 * np.pi / (TIP_START - BLADE_START)),
                      0.0)
    dd_dtd = np.where(in_region, np.cos(phase) * _TAPER / 1.5, 0.0)
    g_u[0] = np.sum(g * dd_dtp) * _span(TONGUE_POSITION_RANGE)
    g_u[1] = np.sum(g * dd_dtd) * _span(TONGUE_DIAMETER_RANGE)
    return g_u


def scattering_backward(diameters: np.ndarray, g_k: np.ndarray) -> np.ndarray:
    """d(loss)/d(diameters) from d(loss)/d(scattering coefficients)."""
    areas = np.pi * (diameters / 2.0) ** 2
    total = areas[1:] + areas[:-1]
    g_area = np.zeros(diameters.size)
    g_area[1:] += g_k * 2.0 * areas[:-1] / total ** 2
    g_area[:-1] += g_k * (-2.0 * areas[1:] / total ** 2)
    return g_area * np.pi * diameters / 2.0


def _normalize(value: float, rng: tuple[float, float]) -> float:
    return (value - rng[0]) / (rng[1] - rng[0])


def _denormalize(u: float, rng: tuple[float, float]) -> float:
    return rng[0] + float(np.clip(u, 0.0, 1.0)) * (rng[1] - rng[0])


def _lerp(u: float, rng: tuple[float, float]) -> float:
    return rng[0] + u * (rng[1] - rng[0])


def _span(rng: tuple[float, float]) -> float:
    return rng[1] - rng[0]
