"""Optimizers that fit tract controls to a target, plus the recovery experiment.

Gradient descent with momentum is the primary method; a genetic algorithm and
particle-swarm optimization serve as derivative-free baselines scored by
mel-spectrogram error on resynthesized audio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import AudioBuffer, MelConfig, Spectrum, mel_mse, mel_spectrogram
from .errors import InvalidTargetError, TractfitError
from .glottal import GlottalParams, estimate_f0, estimate_tenseness, synthesize_gfd
from .iaif import gfm_iaif, recover_gfd, tract_response_from_iaif
from .tract import (
    SimulationConfig,
    TractControls,
    area_function,
    controls_from_normalized,
    controls_to_normalized,
)
from .transfer import (
    DB_PER_LOG10_SQ,
    FrequencyGrid,
    controls_response,
    loss_and_gradient_from_normalized,
    loss_from_normalized,
    logmag_from_normalized,
    _target_log10,
)
from .waveguide import kl_synthesize, synthesize_voice

# Free constrictions start staggered along the tract (positions i+1 over c+1)
# and nearly open: just active enough that their gradients are alive, shallow
# enough not to disturb targets that used fewer constrictions.
INIT_CONSTRICTION_DIAMETER = 0.7


@dataclass(frozen=True)
class GdSettings:
    """Gradient-descent hyperparameters; defaults reproduce the experiments."""

    steps: int = 100
    step_size: float = 1e-4
    momentum: float = 0.9
    num_free_constrictions: int = 2
    grid_size: int = 512

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must lie in [0, 1)")
        if self.num_free_constrictions < 0:
            raise ValueError("num_free_constrictions must be non-negative")


@dataclass(frozen=True)
class EvolutionSettings:
    """Shared settings for the GA and PSO baselines."""

    population: int = 64
    iterations: int = 100
    num_free_constrictions: int = 2
    # GA operators
    tournament: int = 4
    mutation_sigma: float = 0.05
    elitism: int = 1
    # PSO coefficients
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not (0 < self.mutation_sigma < 1):
            raise ValueError("mutation_sigma must lie in (0, 1)")
        if self.tournament < 1 or self.elitism < 0:
            raise ValueError("invalid selection settings")


def default_init(num_free_constrictions: int) -> np.ndarray:
    """Midpoint tongue; constrictions staggered and nearly open."""
    u = [0.5, 0.5]
    for i in range(num_free_constrictions):
        u.append((i + 1) / (num_free_constrictions + 1))
        u.append(INIT_CONSTRICTION_DIAMETER)
    return np.asarray(u)


def fit_controls_gd(target: Spectrum, settings: GdSettings = GdSettings(),
                    init: TractControls | np.ndarray | None = None,
                    ) -> tuple[TractControls, np.ndarray]:
    """Projected gradient descent with momentum in normalized space.

    Returns the best-loss iterate and the loss value of every visited iterate
    (steps + 1 entries). The step size applies to gradients of the error
    measured in decibels.
    """
    grid = FrequencyGrid(settings.grid_size)
    omega = grid.omegas
    target_log = _target_log10(target, grid)

    if init is None:
        u = default_init(settings.num_free_constrictions)
    elif isinstance(init, TractControls):
        u = controls_to_normalized(init, settings.num_free_constrictions)
    else:
        u = np.asarray(init, dtype=np.float64).copy()

    velocity = np.zeros_like(u)
    trace = np.empty(settings.steps + 1)
    best_loss = np.inf
    best_u = u.copy()

    for step in range(settings.steps):
        loss, grad = loss_and_gradient_from_normalized(u, target_log, omega)
        if step == 0 and not np.isfinite(loss):
            raise InvalidTargetError("invalid target")
        trace[step] = loss
        if loss < best_loss:
            best_loss, best_u = loss, u.copy()
        velocity = settings.momentum * velocity \
            - settings.step_size * DB_PER_LOG10_SQ * grad
        u = np.clip(u + velocity, 0.0, 1.0)

    final = loss_from_normalized(u, target_log, omega)
    if settings.steps == 0 and not np.isfinite(final):
        raise InvalidTargetError("invalid target")
    trace[settings.steps] = final
    if final < best_loss:
        best_loss, best_u = final, u

    return controls_from_normalized(best_u), trace


class _AudioFitness:
    """Mel-spectrogram MSE between target audio and resynthesized candidates."""

    def __init__(self, target_audio: AudioBuffer, glottal: GlottalParams,
                 config: SimulationConfig, mel_config: MelConfig, synth_seed: int):
        self.target_mel = mel_spectrogram(target_audio, mel_config)
        self.duration = len(target_audio)
        self.glottal = glottal
        self.config = config
        self.mel_config = mel_config
        self.synth_seed = synth_seed

    def __call__(self, u: np.ndarray) -> float:
        controls = controls_from_normalized(u)
        audio = synthesize_voice(self.glottal, controls, self.config,
                                 seed=self.synth_seed,
                                 duration_samples=self.duration)
        return mel_mse(self.target_mel, mel_spectrogram(audio, self.mel_config))


def fit_controls_ga(target_audio: AudioBuffer, settings: EvolutionSettings,
                    seed, glottal: GlottalParams,
                    config: SimulationConfig = SimulationConfig(),
                    mel_config: MelConfig = MelConfig(),
                    ) -> tuple[TractControls, np.ndarray]:
    """Genetic algorithm over normalized controls; deterministic per seed.

    Returns the fittest individual ever seen and the best fitness per
    generation (including generation 0).
    """
    rng = np.random.default_rng(seed)
    fitness = _AudioFitness(target_audio, glottal, config, mel_config, 0)
    dims = 2 + 2 * settings.num_free_constrictions

    pop = rng.uniform(0.0, 1.0, (settings.population, dims))
    scores = np.array([fitness(ind) for ind in pop])
    history = [scores.min()]
    best_u = pop[np.argmin(scores)].copy()
    best_score = scores.min()

    for _ in range(settings.iterations):
        order = np.argsort(scores)
        elite = pop[order[: settings.elitism]].copy()
        children = list(elite)
        while len(children) < settings.population:
            parents = []
            for _ in range(2):
                contenders = rng.integers(0, settings.population, settings.tournament)
                parents.append(pop[contenders[np.argmin(scores[contenders])]])
            mask = rng.random(dims) < 0.5
            child = np.where(mask, parents[0], parents[1])
            child = child + rng.normal(0.0, settings.mutation_sigma, dims)
            children.append(np.clip(child, 0.0, 1.0))
        pop = np.asarray(children)
        scores = np.array([fitness(ind) for ind in pop])
        gen_best = int(np.argmin(scores))
        if scores[gen_best] < best_score:
            best_score = float(scores[gen_best])
            best_u = pop[gen_best].copy()
        history.append(best_score)

    return controls_from_normalized(best_u), np.asarray(history)


def fit_controls_pso(target_audio: AudioBuffer, settings: EvolutionSettings,
                     seed, glottal: GlottalParams,
                     config: SimulationConfig = SimulationConfig(),
                     mel_config: MelConfig = MelConfig(),
                     ) -> tuple[TractControls, np.ndarray]:
    """Global-best particle swarm; positions clipped to the unit box.

    Returns the global best and its fitness after every iteration (including
    the initial evaluation).
    """
    rng = np.random.default_rng(seed)
    fitness = _AudioFitness(target_audio, glottal, config, mel_config, 0)
    dims = 2 + 2 * settings.num_free_constrictions

    pos = rng.uniform(0.0, 1.0, (settings.population, dims))
    vel = np.zeros_like(pos)
    scores = np.array([fitness(p) for p in pos])
    pbest = pos.copy()
    pbest_scores = scores.copy()
    g = int(np.argmin(scores))
    gbest, gbest_score = pos[g].copy(), float(scores[g])
    history = [gbest_score]

    for _ in range(settings.iterations):
        r1 = rng.random((settings.population, dims))
        r2 = rng.random((settings.population, dims))
        vel = (settings.inertia * vel
               + settings.cognitive * r1 * (pbest - pos)
               + settings.social * r2 * (gbest - pos))
        pos = np.clip(pos + vel, 0.0, 1.0)
        scores = np.array([fitness(p) for p in pos])
        improved = scores < pbest_scores
        pbest[improved] = pos[improved]
        pbest_scores[improved] = scores[improved]
        g = int(np.argmin(pbest_scores))
        if pbest_scores[g] < gbest_score:
            gbest, gbest_score = pbest[g].copy(), float(pbest_scores[g])
        history.append(gbest_score)

    return controls_from_normalized(gbest), np.asarray(history)


# ---------------------------------------------------------------------------
# In-domain recovery experiment
# ---------------------------------------------------------------------------

F0_SAMPLING_HZ = (80.0, 200.0)
TRIAL_DURATION_S = 0.6
ANALYSIS_FRAME_S = 0.04

TARGET_KINDS = ("given", "if")
CONSTRICTION_COUNTS = (0, 1, 2)


@dataclass(frozen=True)
class ConditionMetrics:
    """Mean absolute recovery errors for one (constrictions, target) condition."""

    tongue_position_mae: float   # segments
    tongue_diameter_mae: float   # cm
    total_diameter_mae: float    # cm, averaged over all 44 segments
    fr_mae_db: float             # dB, against the true tract response

    def to_dict(self) -> dict:
        return {
            "tongue_position_mae": self.tongue_position_mae,
            "tongue_diameter_mae": self.tongue_diameter_mae,
            "total_diameter_mae": self.total_diameter_mae,
            "fr_mae_db": self.fr_mae_db,
        }


@dataclass(frozen=True)
class GlottalMetrics:
    """Glottal estimation errors on the original and recovered source."""

    tenseness_mae_original: float
    f0_mae_original: float
    tenseness_mae_recovered: float
    f0_mae_recovered: float

    def to_dict(self) -> dict:
        return {
            "tenseness_mae_original": self.tenseness_mae_original,
            "f0_mae_original": self.f0_mae_original,
            "tenseness_mae_recovered": self.tenseness_mae_recovered,
            "f0_mae_recovered": self.f0_mae_recovered,
        }


@dataclass(frozen=True)
class ExperimentReport:
    """Recovery-error table plus glottal estimation summary."""

    seed: int
    trials_per_condition: int
    failures: int
    conditions: dict        # {"<ncon>_<kind>": ConditionMetrics}
    glottal: GlottalMetrics
    glottal_by_constrictions: dict  # {ncon: GlottalMetrics}
    schema_version: int = 1

    def metric(self, ncon: int, kind: str, name: str) -> float:
        return getattr(self.conditions[f"{ncon}_{kind}"], name)

    def given_below_if(self) -> bool:
        """Target-from-truth errors never exceed inverse-filtered errors."""
        names = ("tongue_position_mae", "tongue_diameter_mae",
                 "total_diameter_mae", "fr_mae_db")
        return all(
            self.metric(nc, "given", name) <= self.metric(nc, "if", name)
            for nc in CONSTRICTION_COUNTS for name in names
        )

    def given_fr_monotone(self) -> bool:
        """FR error grows (weakly) with constriction count for given targets."""
        values = [self.metric(nc, "given", "fr_mae_db") for nc in CONSTRICTION_COUNTS]
        return all(a <= b + 1e-12 for a, b in zip(values, values[1:]))

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "trials_per_condition": self.trials_per_condition,
            "failures": self.failures,
            "conditions": {key: m.to_dict() for key, m in self.conditions.items()},
            "glottal": self.glottal.to_dict(),
            "glottal_by_constrictions": {
                str(nc): m.to_dict() for nc, m in self.glottal_by_constrictions.items()
            },
            "ordering": {
                "given_below_if": self.given_below_if(),
                "given_fr_monotone": self.given_fr_monotone(),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(
            seed=data["seed"],
            trials_per_condition=data["trials_per_condition"],
            failures=data["failures"],
            conditions={key: ConditionMetrics(**m)
                        for key, m in data["conditions"].items()},
            glottal=GlottalMetrics(**data["glottal"]),
            glottal_by_constrictions={
                int(nc): GlottalMetrics(**m)
                for nc, m in data["glottal_by_constrictions"].items()
            },
            schema_version=data.get("schema_version", 1),
        )

    def table(self) -> str:
        """Human-readable table mirroring the recovery-error layout."""
        rows = [
            ("t_p [segments]", "tongue_position_mae"),
            ("t_d [cm]", "tongue_diameter_mae"),
            ("Total Diameter [cm]", "total_diameter_mae"),
            ("Frequency Response [dB]", "fr_mae_db"),
        ]
        header = ["# of Constrictions"] + [str(nc) for nc in CONSTRICTION_COUNTS
                                           for _ in TARGET_KINDS]
        sub = ["Target"] + [kind for _ in CONSTRICTION_COUNTS
                            for kind in ("Given", "IF")]
        lines = ["\t".join(header), "\t".join(sub)]
        for label, name in rows:
            cells = [label]
            for nc in CONSTRICTION_COUNTS:
                for kind in TARGET_KINDS:
                    cells.append(f"{self.metric(nc, kind, name):.3f}")
            lines.append("\t".join(cells))
        g = self.glottal
        lines.append("")
        lines.append(f"Tenseness MAE: {g.tenseness_mae_original:.4f} (original GFD), "
                     f"{g.tenseness_mae_recovered:.4f} (recovered GFD)")
        lines.append(f"F0 MAE [Hz]:   {g.f0_mae_original:.4f} (original GFD), "
                     f"{g.f0_mae_recovered:.4f} (recovered GFD)")
        return "\n".join(lines)


def _logmag_db(controls: TractControls, grid: FrequencyGrid) -> np.ndarray:
    u = controls_to_normalized(controls, len(controls.constrictions))
    return 20.0 * logmag_from_normalized(u, grid.omegas)


def align_target_level(target: Spectrum, grid: FrequencyGrid,
                       num_free_constrictions: int) -> Spectrum:
    """Rescale a target so its mean log level matches the initial response.

    An inverse-filtered |V| carries the arbitrary unit-gain normalization of
    the linear-prediction fit, several dB below the transfer-function level;
    the level shift would otherwise dominate the spectral loss.
    """
    from .dsp import MAGNITUDE_FLOOR

    init_logmag = logmag_from_normalized(default_init(num_free_constrictions),
                                         grid.omegas)
    target_logmag = np.log10(np.maximum(target.magnitudes, MAGNITUDE_FLOOR))
    shift = float(np.mean(init_logmag) - np.mean(target_logmag))
    return Spectrum(target.magnitudes * 10.0 ** shift, target.bin_frequencies)


def _glottal_means(records: list[dict]) -> GlottalMetrics:
    def mean(key):
        values = [r[key] for r in records if np.isfinite(r[key])]
        return float(np.mean(values)) if values else float("nan")

    return GlottalMetrics(
        tenseness_mae_original=mean("t_err_orig"),
        f0_mae_original=mean("f0_err_orig"),
        tenseness_mae_recovered=mean("t_err_rec"),
        f0_mae_recovered=mean("f0_err_rec"),
    )


def run_indomain_experiment(trials_per_condition: int, seed: int = 0,
                            gd_settings: GdSettings = GdSettings(),
                            config: SimulationConfig = SimulationConfig(),
                            ) -> ExperimentReport:
    """Sample controls, synthesize, recover, and tabulate recovery errors.

    The glottal and tongue draws are shared across the three constriction
    conditions so that condition comparisons are paired rather than confounded
    by sampling noise; constrictions are drawn per condition. Each trial fits
    twice: against the true tract response and against the inverse-filtered
    estimate. Failed trials are counted and excluded.
    """
    if trials_per_condition < 1:
        raise ValueError("need at least one trial per condition")
    rng = np.random.default_rng(seed)
    grid = FrequencyGrid(gd_settings.grid_size)
    fs = config.sample_rate
    n_samples = int(TRIAL_DURATION_S * fs)
    frame_len = int(ANALYSIS_FRAME_S * fs)

    shared = [
        {
            "f0": rng.uniform(*F0_SAMPLING_HZ),
            "tenseness": rng.uniform(0.0, 1.0),
            "tongue_position": rng.uniform(12.0, 29.0),
            "tongue_diameter": rng.uniform(2.05, 3.5),
        }
        for _ in range(trials_per_condition)
    ]

    failures = 0
    errors: dict[str, list[dict]] = {f"{nc}_{kind}": []
                                     for nc in CONSTRICTION_COUNTS
                                     for kind in TARGET_KINDS}
    glottal_records: dict[int, list[dict]] = {nc: [] for nc in CONSTRICTION_COUNTS}

    for ncon in CONSTRICTION_COUNTS:
        for trial, draw in enumerate(shared):
            constrictions = tuple(
                (rng.uniform(0.0, 43.0), rng.uniform(0.3, 2.0)) for _ in range(ncon)
            )
            try:
                record = _run_trial(draw, constrictions, grid, gd_settings, config,
                                    n_samples, frame_len,
                                    noise_seed=seed * 100003 + trial)
            except TractfitError:
                failures += 1
                continue
            for kind in TARGET_KINDS:
                errors[f"{ncon}_{kind}"].append(record[kind])
            glottal_records[ncon].append(record["glottal"])

    conditions = {}
    for key, recs in errors.items():
        if not recs:
            raise TractfitError(f"all trials failed for condition {key}")
        conditions[key] = ConditionMetrics(
            tongue_position_mae=float(np.mean([r["tp"] for r in recs])),
            tongue_diameter_mae=float(np.mean([r["td"] for r in recs])),
            total_diameter_mae=float(np.mean([r["diam"] for r in recs])),
            fr_mae_db=float(np.mean([r["fr"] for r in recs])),
        )

    all_glottal = [r for recs in glottal_records.values() for r in recs]
    return ExperimentReport(
        seed=seed,
        trials_per_condition=trials_per_condition,
        failures=failures,
        conditions=conditions,
        glottal=_glottal_means(all_glottal),
        glottal_by_constrictions={nc: _glottal_means(recs)
                                  for nc, recs in glottal_records.items()},
    )


def _run_trial(draw: dict, constrictions, grid: FrequencyGrid,
               gd_settings: GdSettings, config: SimulationConfig,
               n_samples: int, frame_len: int, noise_seed: int) -> dict:
    true_controls = TractControls(draw["tongue_position"], draw["tongue_diameter"],
                                  constrictions)
    glottal = GlottalParams(draw["f0"], draw["tenseness"])
    true_db = _logmag_db(true_controls, grid)

    # Synthesize the vowel and keep the exact source for glottal scoring.
    source = synthesize_gfd(glottal, n_samples, config.sample_rate,
                            noise_seed=noise_seed)
    audio = kl_synthesize(source, true_controls, config)
    peak = np.max(np.abs(audio.samples))
    audio = AudioBuffer(0.9 * audio.samples / peak, config.sample_rate)

    # Inverse filtering on a centred frame; the GFD is recovered full-length.
    start = (n_samples - frame_len) // 2
    frame = AudioBuffer(audio.samples[start : start + frame_len], config.sample_rate)
    iaif = gfm_iaif(frame)
    recovered_gfd = recover_gfd(audio, iaif)

    glottal_record = _score_glottal(glottal, source, recovered_gfd)

    given_target = controls_response(true_controls, grid, config)
    if_target = align_target_level(tract_response_from_iaif(iaif, grid.size),
                                   grid, gd_settings.num_free_constrictions)

    record = {"glottal": glottal_record}
    for kind, target in (("given", given_target), ("if", if_target)):
        fitted, _ = fit_controls_gd(target, gd_settings)
        fit_db = _logmag_db(fitted, grid)
        record[kind] = {
            "tp": abs(fitted.tongue_position - true_controls.tongue_position),
            "td": abs(fitted.tongue_diameter - true_controls.tongue_diameter),
            "diam": float(np.mean(np.abs(
                area_function(fitted).diameters
                - area_function(true_controls).diameters))),
            "fr": float(np.mean(np.abs(fit_db - true_db))),
        }
    return record


def _score_glottal(glottal: GlottalParams, source: AudioBuffer,
                   recovered: AudioBuffer) -> dict:
    record = {}
    for tag, signal in (("orig", source), ("rec", recovered)):
        try:
            f0_hat = estimate_f0(signal)
            record[f"f0_err_{tag}"] = abs(f0_hat - glottal.f0)
        except TractfitError:
            f0_hat = glottal.f0
            record[f"f0_err_{tag}"] = float("nan")
        try:
            t_hat = estimate_tenseness(signal, f0_hat)
            record[f"t_err_{tag}"] = abs(t_hat - glottal.tenseness)
        except TractfitError:
            record[f"t_err_{tag}"] = float("nan")
    return record
