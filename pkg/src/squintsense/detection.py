"""Measurement matrices over dense angle candidates, modified matching
pursuit with a counting vector, and the hierarchical EAS -> AAS pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beamforming import (
    BeamformerWeights,
    aas_azimuth_grid,
    aas_beamformer,
    eas_beamformer,
    eas_elevation_grid,
)
from .channel import Scene, echo_gain, sensing_attenuation
from .config import SystemConfig
from .exceptions import ConfigError
from .power import allocate_sensing, grid_echo_strength

DEFAULT_STOP_RATIO = 1e-3


@dataclass(frozen=True)
class ObservationVector:
    values: np.ndarray   # length N complex
    stage: int
    symbol_count: int


@dataclass(frozen=True)
class MeasurementMatrix:
    columns: np.ndarray     # (N, L) real nonnegative
    candidates: np.ndarray  # (L,) angles: elevation (stage 0) or azimuth
    kind: str               # 'eas' or 'aas'


@dataclass(frozen=True)
class CountingVector:
    counts: np.ndarray  # (L,) nonnegative integers
    phasors: tuple      # complex phasor recovered at each iteration
    trace: tuple        # per iteration: (index, correlation, residual norm)


@dataclass(frozen=True)
class DetectionResult:
    elevations: tuple    # ((theta_hat, Q_i), ...) from the EAS stage
    azimuths: tuple      # per AAS stage: array of azimuth estimates
    estimates: tuple     # Q final (theta, phi) pairs
    symbol_counts: tuple
    sensing_powers: tuple
    stage_weights: tuple
    traces: tuple        # CountingVector per stage


def matched_echo(raw: complex, symbol: complex) -> complex:
    """Rotate the received sample by the symbol's conjugate phase."""
    mag = abs(symbol)
    if mag == 0:
        raise ConfigError("matched filter requires a nonzero symbol")
    return raw * symbol.conjugate() / mag


def candidate_offsets(cfg: SystemConfig) -> np.ndarray:
    """Fractional frequency positions realizing the L-point grid refinement."""
    return np.arange(cfg.n_candidates) * (cfg.bandwidth / (cfg.n_candidates - 1))


def elevation_candidates(cfg: SystemConfig) -> np.ndarray:
    if cfg.uniform_candidate_grid:
        return np.linspace(cfg.theta_min, cfg.theta_max, cfg.n_candidates)
    return eas_elevation_grid(cfg, candidate_offsets(cfg))


def azimuth_candidates(cfg: SystemConfig) -> np.ndarray:
    if cfg.uniform_candidate_grid:
        return np.linspace(cfg.phi_min, cfg.phi_max, cfg.n_candidates)
    return aas_azimuth_grid(cfg, candidate_offsets(cfg))


def assemble_observation(
    cfg: SystemConfig,
    scene: Scene,
    weights: BeamformerWeights,
    powers: np.ndarray,
    t_symbols: int,
    rng: np.random.Generator,
    stage: int = 0,
    include_clutter: bool = True,
) -> ObservationVector:
    """Average of t_symbols matched echoes per subcarrier.

    The matched filter preserves the circular Gaussian noise statistics, so
    the T-symbol average is drawn directly with variance sigma^2 / T.
    """
    if t_symbols < 1:
        raise ConfigError("t_symbols must be at least 1")
    n = cfg.n_subcarriers
    sigma2 = cfg.noise_variance()
    signal = np.array(
        [
            np.sqrt(powers[sc]) * echo_gain(cfg, scene, weights, sc, include_clutter)
            for sc in range(n)
        ]
    )
    scale = np.sqrt(sigma2 / (2.0 * t_symbols))
    noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return ObservationVector(values=signal + noise, stage=stage, symbol_count=t_symbols)


def build_measurement_matrix(
    cfg: SystemConfig,
    weights: BeamformerWeights,
    powers: np.ndarray,
    theta_hat: float | None = None,
) -> MeasurementMatrix:
    """Dictionary whose column l is the sensing gain pattern of candidate l.

    Entry (n, l) = sqrt(p_n) * alpha(candidate) * |gain(candidate, f_n)|^2;
    alpha uses the candidate's implied distance H / cos(theta).
    """
    n_idx = np.arange(cfg.n_subcarriers)
    sqrt_p = np.sqrt(np.asarray(powers, dtype=float))
    if weights.kind == "eas":
        cand = elevation_candidates(cfg)
        phi_probe = 0.5 * (cfg.phi_min + cfg.phi_max)  # flat model: phi-independent
        gains = weights.gain(cand[:, None], phi_probe, n_idx)  # (L, N)
        dist = cfg.height / np.cos(cand)
        kind = "eas"
    else:
        if theta_hat is None:
            raise ConfigError("AAS measurement matrix requires theta_hat")
        cand = azimuth_candidates(cfg)
        gains = weights.gain(theta_hat, cand[:, None], n_idx)  # (L, N)
        dist = np.full(cfg.n_candidates, cfg.height / np.cos(theta_hat))
        kind = "aas"
    alpha = np.array([sensing_attenuation(cfg, d, cfg.sigma_rcs) for d in dist])
    columns = (sqrt_p[None, :] * alpha[:, None] * np.abs(gains) ** 2).T  # (N, L)
    return MeasurementMatrix(columns=columns, candidates=cand, kind=kind)


def modified_mp(
    obs: np.ndarray,
    mtx: MeasurementMatrix,
    iterations: int,
    stop_ratio: float | None = None,
) -> CountingVector:
    """Greedy matching pursuit with phasor-normalized coefficients.

    Each iteration selects the column maximizing the norm-normalized
    correlation with the residual, normalizes the estimated coefficient to
    unit magnitude (the true coefficients are range phasors), deflates the
    residual, and increments the counting vector. Repeated selection of one
    index is allowed.
    """
    if iterations < 0:
        raise ConfigError("iterations must be nonnegative")
    columns = mtx.columns
    counts = np.zeros(columns.shape[1], dtype=int)
    phasors = []
    trace = []
    if iterations == 0:
        return CountingVector(counts=counts, phasors=(), trace=())
    norms = np.linalg.norm(columns, axis=0)
    if np.any(norms == 0.0):
        raise ConfigError("degenerate dictionary: zero-norm column")
    residual = np.asarray(obs, dtype=complex).copy()
    stop_level = stop_ratio * np.linalg.norm(residual) if stop_ratio else None
    for _ in range(iterations):
        corr = columns.T @ residual  # real columns: plain transpose
        metric = np.abs(corr) / norms
        best = int(np.argmax(metric))
        coeff = corr[best] / norms[best] ** 2
        if coeff == 0:
            break
        phasor = coeff / abs(coeff)
        residual = residual - phasor * columns[:, best]
        counts[best] += 1
        phasors.append(phasor)
        trace.append((best, float(metric[best]), float(np.linalg.norm(residual))))
        if stop_level is not None and np.linalg.norm(residual) < stop_level:
            break
    return CountingVector(counts=counts, phasors=tuple(phasors), trace=tuple(trace))


def hierarchical_detect(
    cfg: SystemConfig,
    scene: Scene,
    q: int,
    rng: np.random.Generator,
    include_clutter: bool = True,
    stop_ratio: float | None = None,
) -> DetectionResult:
    """Full EAS -> AAS pipeline with per-stage power allocation.

    The number of targets q is assumed known; it fixes the MP iteration
    counts. Each distinct elevation candidate selected in stage 0 spawns
    one AAS stage whose iteration count is that candidate's multiplicity.
    """
    eas_w = eas_beamformer(cfg)
    theta_grid = eas_elevation_grid(cfg)
    strengths0 = grid_echo_strength(cfg, eas_w, theta_grid, 0.5 * (cfg.phi_min + cfg.phi_max))
    t0, p0 = allocate_sensing(cfg, strengths0)

    obs0 = assemble_observation(cfg, scene, eas_w, p0, t0, rng, 0, include_clutter)
    mtx0 = build_measurement_matrix(cfg, eas_w, p0)
    cv0 = modified_mp(obs0.values, mtx0, q, stop_ratio)

    selected = np.flatnonzero(cv0.counts)
    elevations = tuple(
        (float(mtx0.candidates[idx]), int(cv0.counts[idx])) for idx in selected
    )

    phi_grid = aas_azimuth_grid(cfg)
    azimuths = []
    estimates = []
    symbol_counts = [t0]
    sensing_powers = [p0]
    stage_weights = [eas_w]
    traces = [cv0]
    for theta_hat, multiplicity in elevations:
        aas_w = aas_beamformer(cfg, theta_hat)
        strengths = grid_echo_strength(cfg, aas_w, theta_hat, phi_grid)
        t_i, p_i = allocate_sensing(cfg, strengths)
        obs = assemble_observation(
            cfg, scene, aas_w, p_i, t_i, rng, len(symbol_counts), include_clutter
        )
        mtx = build_measurement_matrix(cfg, aas_w, p_i, theta_hat=theta_hat)
        cv = modified_mp(obs.values, mtx, multiplicity, stop_ratio)
        stage_azimuths = np.repeat(mtx.candidates, cv.counts)
        azimuths.append(stage_azimuths)
        estimates.extend((theta_hat, float(ph)) for ph in stage_azimuths)
        symbol_counts.append(t_i)
        sensing_powers.append(p_i)
        stage_weights.append(aas_w)
        traces.append(cv)

    return DetectionResult(
        elevations=elevations,
        azimuths=tuple(azimuths),
        estimates=tuple(estimates),
        symbol_counts=tuple(symbol_counts),
        sensing_powers=tuple(sensing_powers),
        stage_weights=tuple(stage_weights),
        traces=tuple(traces),
    )
