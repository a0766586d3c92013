"""Time-domain Kelly-Lochbaum waveguide synthesis.

Each segment is a bidirectional half-sample delay: the lattice runs at twice
the audio rate, every source sample is fed to two consecutive ticks, and the
two lip outputs are summed back to one audio sample. With this scheme the
impulse response matches the analytic transfer function exactly.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .dsp import AudioBuffer
from .glottal import GlottalParams, synthesize_gfd_track
from .tract import (
    AreaFunction,
    GLOTTAL_REFLECTION,
    LIP_REFLECTION,
    SimulationConfig,
    TractControls,
    area_function,
)


@njit(cache=True)
def _run_lattice(source, area_frames, hop, r_glottis, r_lip):
    n = source.size
    n_frames, nseg = area_frames.shape
    njunc = nseg - 1
    right = np.zeros(nseg)
    left = np.zeros(nseg)
    right_new = np.zeros(nseg)
    left_new = np.zeros(nseg)
    areas = np.empty(nseg)
    k = np.empty(njunc)
    out = np.empty(n)
    ticks_per_frame = 2.0 * hop
    for i in range(n):
        acc = 0.0
        for half in range(2):
            tick = 2 * i + half
            # linear area interpolation between frame anchors, per tick
            pos = tick / ticks_per_frame
            j = int(pos)
            if j >= n_frames - 1:
                for m in range(nseg):
                    areas[m] = area_frames[n_frames - 1, m]
            else:
                w = pos - j
                for m in range(nseg):
                    areas[m] = (1.0 - w) * area_frames[j, m] + w * area_frames[j + 1, m]
            for m in range(njunc):
                k[m] = (areas[m + 1] - areas[m]) / (areas[m + 1] + areas[m])

            right_new[0] = r_glottis * left[0] + source[i]
            for m in range(1, nseg):
                w_j = k[m - 1] * (right[m - 1] - left[m])
                right_new[m] = right[m - 1] + w_j
                left_new[m - 1] = left[m] + w_j
            left_new[nseg - 1] = r_lip * right[nseg - 1]

            right, right_new = right_new, right
            left, left_new = left_new, left
            acc += right[nseg - 1]
        out[i] = acc
    return out


def _area_frames(controls_track, config: SimulationConfig) -> np.ndarray:
    if isinstance(controls_track, (TractControls, AreaFunction)):
        controls_track = [controls_track]
    frames = []
    for item in controls_track:
        area = item if isinstance(item, AreaFunction) else area_function(item)
        frames.append(area.areas)
    return np.asarray(frames, dtype=np.float64)


def kl_synthesize(source: AudioBuffer, controls_track,
                  config: SimulationConfig = SimulationConfig(),
                  hop_samples: int | None = None) -> AudioBuffer:
    """Filter a source through the waveguide.

    controls_track is a TractControls/AreaFunction or a sequence of them; with
    several frames the area function is interpolated linearly per lattice tick
    across hops of hop_samples (default: source length divided evenly).
    """
    areas = _area_frames(controls_track, config)
    n = len(source)
    if hop_samples is None:
        hop_samples = max(1, n // max(1, areas.shape[0]))
    out = _run_lattice(source.samples, areas, float(hop_samples),
                       GLOTTAL_REFLECTION, LIP_REFLECTION)
    return AudioBuffer(out, source.sample_rate)


def waveguide_impulse_response(area: AreaFunction, n_samples: int,
                               config: SimulationConfig = SimulationConfig()) -> np.ndarray:
    """Impulse response of a fixed tract; the oracle counterpart lives in transfer."""
    impulse = np.zeros(n_samples)
    impulse[0] = 1.0
    return kl_synthesize(AudioBuffer(impulse, config.sample_rate), area, config).samples


def synthesize_voice(glottal_track, controls_track,
                     config: SimulationConfig = SimulationConfig(),
                     seed=0, hop_samples: int = 480,
                     duration_samples: int | None = None) -> AudioBuffer:
    """Render a voiced sound: GFD source into the waveguide, peak-normalized.

    Tracks are one value per frame (scalars allowed); glottal parameters are
    interpolated linearly per sample, areas per lattice tick.
    """
    if isinstance(glottal_track, GlottalParams):
        glottal_track = [glottal_track]
    if isinstance(controls_track, (TractControls, AreaFunction)):
        controls_track = [controls_track]
    n_frames = max(len(glottal_track), len(controls_track))
    if duration_samples is None:
        duration_samples = n_frames * hop_samples

    anchors = np.arange(len(glottal_track)) * hop_samples
    sample_t = np.arange(duration_samples)
    f0 = np.interp(sample_t, anchors, [g.f0 for g in glottal_track])
    tenseness = np.interp(sample_t, anchors, [g.tenseness for g in glottal_track])
    source = synthesize_gfd_track(f0, tenseness, config.sample_rate, noise_seed=seed)

    voiced = kl_synthesize(source, controls_track, config, hop_samples=hop_samples)
    peak = np.max(np.abs(voiced.samples))
    if peak > 0:
        return AudioBuffer(0.9 * voiced.samples / peak, config.sample_rate)
    return voiced
