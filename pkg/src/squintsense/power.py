"""Closed-form sensing power / symbol-count allocation and communication
power allocation via the diagonally dominant linear system."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beamforming import BeamformerWeights
from .channel import Scene, comm_gain, sensing_attenuation
from .config import SystemConfig
from .exceptions import InfeasibleError

BACKOFF_STEP_DB = 0.5
BACKOFF_FLOOR_RATIO = 1e-3
SOLVE_RESIDUAL_TOL = 1e-10


@dataclass
class PowerPlan:
    """Allocated symbol counts and powers for all stages of one frame."""

    symbol_counts: list = field(default_factory=list)      # T_i per stage
    sensing_powers: list = field(default_factory=list)     # per stage: array (N,)
    comm_powers: list = field(default_factory=list)        # per stage: array (K, N)
    effective_tau_c: float = 0.0

    @property
    def n_stages(self) -> int:
        return len(self.symbol_counts)


@dataclass(frozen=True)
class SinrContext:
    """Per-subcarrier beamforming-gain table and effective noise power.

    chi[k, l, n] = |h_n(user k) . w_{l,n}|^2;
    effective_noise[k, n] = |h_n(user k) . b_{i,n}|^2 p^s_{i,n} + sigma_k^2.
    """

    chi: np.ndarray             # (K, K, N)
    effective_noise: np.ndarray  # (K, N)


def grid_echo_strength(
    cfg: SystemConfig,
    weights: BeamformerWeights,
    grid_theta: np.ndarray,
    grid_phi: np.ndarray,
) -> np.ndarray:
    """|b^H G^los b|^2 at the per-subcarrier design grid points.

    A single hypothetical on-grid LoS target with the configured RCS is
    assumed; equals alpha(grid)^2 * |array gain|^4.
    """
    grid_theta = np.broadcast_to(np.asarray(grid_theta, float), (cfg.n_subcarriers,))
    grid_phi = np.broadcast_to(np.asarray(grid_phi, float), (cfg.n_subcarriers,))
    out = np.empty(cfg.n_subcarriers)
    for n in range(cfg.n_subcarriers):
        dist = cfg.height / np.cos(grid_theta[n])
        alpha = sensing_attenuation(cfg, dist, cfg.sigma_rcs)
        g = weights.gain(grid_theta[n], grid_phi[n], n)
        out[n] = alpha**2 * abs(g) ** 4
    return out


def allocate_sensing(cfg: SystemConfig, strengths: np.ndarray):
    """Minimal (T_i, p^s_{i,n}) meeting the grid SNR threshold tau_s.

    T_i = ceil(sum_n tau_s sigma^2 / (P_max strength_n)) and
    p^s_{i,n} = tau_s sigma^2 / (T_i strength_n), which makes every grid SNR
    exactly tau_s and keeps the per-symbol sum within the budget.
    """
    strengths = np.asarray(strengths, dtype=float)
    if np.any(strengths <= 0.0):
        raise InfeasibleError("zero echo strength on some subcarrier: infeasible grid")
    sigma2 = cfg.noise_variance()
    required = cfg.tau_s * sigma2 / strengths
    t_sym = max(1, math.ceil(np.sum(required) / cfg.p_s_max - 1e-12))
    powers = required / t_sym
    return t_sym, powers


def sinr_context(
    cfg: SystemConfig,
    scene: Scene,
    comm_weights: list,
    sensing_weights: BeamformerWeights,
    sensing_powers: np.ndarray,
) -> SinrContext:
    """Gain table and effective noise for one sensing stage."""
    k_users = len(scene.users)
    n = cfg.n_subcarriers
    chi = np.empty((k_users, k_users, n))
    eff_noise = np.empty((k_users, n))
    for k, user in enumerate(scene.users):
        for l, w in enumerate(comm_weights):
            for sc in range(n):
                chi[k, l, sc] = abs(comm_gain(cfg, user, w, sc)) ** 2
        for sc in range(n):
            leak = abs(comm_gain(cfg, user, sensing_weights, sc)) ** 2
            eff_noise[k, sc] = leak * sensing_powers[sc] + user.noise_var
    return SinrContext(chi=chi, effective_noise=eff_noise)


def check_feasibility(ctx: SinrContext, tau_c: float, n: int) -> bool:
    """True iff 1/tau_c strictly dominates every row's cross-gain ratio sum."""
    chi = ctx.chi[:, :, n]
    diag = np.diag(chi)
    if np.any(diag == 0.0):
        raise InfeasibleError("a user has zero direct beamforming gain")
    ratio_sums = (chi.sum(axis=1) - diag) / diag
    return bool(np.all(1.0 / tau_c > ratio_sums))


def allocate_comm(ctx: SinrContext, tau_c: float, n: int) -> np.ndarray:
    """Solve D_n p = s_n for the per-user powers on subcarrier n.

    Requires the diagonal-dominance condition to hold at tau_c; the returned
    powers are strictly positive and achieve SINR exactly tau_c per user.
    """
    if not check_feasibility(ctx, tau_c, n):
        raise InfeasibleError(
            f"SINR threshold infeasible on subcarrier {n}", last_threshold=tau_c
        )
    chi = ctx.chi[:, :, n]
    diag = np.diag(chi)
    k = chi.shape[0]
    d_mtx = -tau_c * chi / diag[:, None]
    d_mtx[np.arange(k), np.arange(k)] = 1.0
    rhs = tau_c * ctx.effective_noise[:, n] / diag
    powers = np.linalg.solve(d_mtx, rhs)
    residual = np.linalg.norm(d_mtx @ powers - rhs)
    if residual > SOLVE_RESIDUAL_TOL * max(np.linalg.norm(rhs), 1e-300):
        raise InfeasibleError(f"power solve residual too large: {residual}")
    return powers


def backoff_tau_c(ctx: SinrContext, tau_c: float) -> float:
    """Largest tau_c * 10^(-0.05 j) feasible on every subcarrier (0.5 dB steps)."""
    n_sub = ctx.chi.shape[2]
    floor = tau_c * BACKOFF_FLOOR_RATIO
    candidate = tau_c
    step = 10.0 ** (-BACKOFF_STEP_DB / 10.0)
    while candidate >= floor:
        if all(check_feasibility(ctx, candidate, n) for n in range(n_sub)):
            return candidate
        candidate *= step
    raise InfeasibleError(
        "no feasible SINR threshold above the backoff floor", last_threshold=candidate
    )
