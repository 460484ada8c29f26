"""Scene generation and effective channel interactions.

Echo and communication gains are evaluated through scalar inner products
(rank-1 structure of the per-scatterer channels); the M x M channel matrix
is never materialized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .beamforming import BeamformerWeights
from .config import SystemConfig
from .exceptions import ConfigError


@dataclass(frozen=True)
class Target:
    theta: float
    phi: float
    distance: float  # = H / cos(theta)
    rcs: float       # m^2


@dataclass(frozen=True)
class Clutterer:
    theta: float
    phi: float
    distance: float
    rcs: float
    fading: complex  # CN(0,1) draw, fixed within a trial (Swerling I)


@dataclass(frozen=True)
class User:
    theta: float
    phi: float
    distance: float
    noise_var: float  # W


@dataclass(frozen=True)
class Scene:
    targets: tuple = ()
    clutterers: tuple = ()
    users: tuple = ()
    rng_seed: int = 0


def sensing_attenuation(cfg: SystemConfig, distance: float, rcs: float) -> float:
    """Two-way sensing amplitude gain sqrt(lambda^2 M^2 rcs / ((4 pi)^3 l^4))."""
    if distance <= 0:
        raise ConfigError("distance must be positive")
    lam = cfg.wavelength
    return float(
        np.sqrt(lam**2 * cfg.m_total**2 * rcs / ((4.0 * np.pi) ** 3 * distance**4))
    )


def comm_attenuation(cfg: SystemConfig, distance: float) -> float:
    """One-way communication amplitude gain sqrt(lambda^2 M) / (4 pi l)."""
    if distance <= 0:
        raise ConfigError("distance must be positive")
    return float(np.sqrt(cfg.wavelength**2 * cfg.m_total) / (4.0 * np.pi * distance))


def subcarrier_noise_variance(cfg: SystemConfig) -> float:
    """Thermal noise power per subcarrier band [W]."""
    return cfg.noise_variance()


def echo_gain(
    cfg: SystemConfig,
    scene: Scene,
    weights: BeamformerWeights,
    n: int,
    include_clutter: bool = True,
) -> complex:
    """Quadratic form b^H G_n b via rank-1 shortcuts.

    With clutter present the Rician split applies: LoS terms carry
    sqrt(kappa/(1+kappa)) and clutter terms sqrt(1/(1+kappa)) / sqrt(C)
    together with the per-trial fading draws.  Without clutter the channel
    degenerates to the pure line-of-sight model and the LoS weight is 1.
    """
    kappa = cfg.kappa
    has_clutter = include_clutter and bool(scene.clutterers)
    los_w = np.sqrt(kappa / (1.0 + kappa)) if has_clutter else 1.0
    total = 0.0 + 0.0j
    lam = cfg.wavelength
    for t in scene.targets:
        alpha = sensing_attenuation(cfg, t.distance, t.rcs)
        g = weights.gain(t.theta, t.phi, n)
        total += los_w * alpha * np.exp(-4j * np.pi * t.distance / lam) * abs(g) ** 2
    if has_clutter:
        clu_w = np.sqrt(1.0 / (1.0 + kappa)) / np.sqrt(len(scene.clutterers))
        for c in scene.clutterers:
            alpha = sensing_attenuation(cfg, c.distance, c.rcs)
            g = weights.gain(c.theta, c.phi, n)
            total += clu_w * alpha * c.fading * abs(g) ** 2
    return complex(total)


def comm_gain(cfg: SystemConfig, user: User, weights: BeamformerWeights, n: int) -> complex:
    """One-way channel-beamformer product h_n(user) . w_n."""
    beta = comm_attenuation(cfg, user.distance)
    g = weights.gain(user.theta, user.phi, n)
    return complex(beta * np.exp(-2j * np.pi * user.distance / cfg.wavelength) * g)


def _draw_angles(cfg: SystemConfig, rng: np.random.Generator, count: int):
    theta = rng.uniform(cfg.theta_min, cfg.theta_max, size=count)
    phi = rng.uniform(cfg.phi_min, cfg.phi_max, size=count)
    return theta, phi


def generate_scene(
    cfg: SystemConfig,
    q: int,
    k: int,
    seed: int,
    max_retries: int = 1000,
) -> Scene:
    """Draw q targets, C clutterers, and k users uniformly over the ROI.

    Users are redrawn until every pair is at least cfg.user_min_separation
    apart in the (theta, phi) plane; deterministic under the seed.
    """
    rng = np.random.default_rng(seed)
    noise_var = cfg.noise_variance()

    t_theta, t_phi = _draw_angles(cfg, rng, q)
    targets = tuple(
        Target(th, ph, cfg.height / np.cos(th), cfg.sigma_rcs)
        for th, ph in zip(t_theta, t_phi)
    )

    c_theta, c_phi = _draw_angles(cfg, rng, cfg.n_clutter)
    fading = (
        rng.standard_normal(cfg.n_clutter) + 1j * rng.standard_normal(cfg.n_clutter)
    ) / np.sqrt(2.0)
    clutterers = tuple(
        Clutterer(th, ph, cfg.height / np.cos(th), cfg.sigma_clutter, complex(fa))
        for th, ph, fa in zip(c_theta, c_phi, fading)
    )

    users = []
    for _ in range(k):
        for attempt in range(max_retries):
            th = rng.uniform(cfg.theta_min, cfg.theta_max)
            ph = rng.uniform(cfg.phi_min, cfg.phi_max)
            sep = min(
                (np.hypot(th - u.theta, ph - u.phi) for u in users),
                default=np.inf,
            )
            if sep >= cfg.user_min_separation:
                users.append(User(th, ph, cfg.height / np.cos(th), noise_var))
                break
        else:
            raise ConfigError(
                f"could not place user with separation {cfg.user_min_separation} "
                f"after {max_retries} retries"
            )
    return Scene(targets=targets, clutterers=clutterers, users=tuple(users), rng_seed=seed)


def scene_to_json(scene: Scene) -> str:
    """Serialize a scene to JSON (complex fading stored as [re, im])."""
    doc = {
        "rng_seed": scene.rng_seed,
        "targets": [
            {"theta": t.theta, "phi": t.phi, "distance": t.distance, "rcs": t.rcs}
            for t in scene.targets
        ],
        "clutterers": [
            {
                "theta": c.theta,
                "phi": c.phi,
                "distance": c.distance,
                "rcs": c.rcs,
                "fading": [c.fading.real, c.fading.imag],
            }
            for c in scene.clutterers
        ],
        "users": [
            {"theta": u.theta, "phi": u.phi, "distance": u.distance, "noise_var": u.noise_var}
            for u in scene.users
        ],
    }
    return json.dumps(doc, indent=2)


def scene_from_json(text: str) -> Scene:
    doc = json.loads(text)
    return Scene(
        targets=tuple(Target(**t) for t in doc["targets"]),
        clutterers=tuple(
            Clutterer(
                theta=c["theta"],
                phi=c["phi"],
                distance=c["distance"],
                rcs=c["rcs"],
                fading=complex(c["fading"][0], c["fading"][1]),
            )
            for c in doc["clutterers"]
        ),
        users=tuple(User(**u) for u in doc["users"]),
        rng_seed=doc["rng_seed"],
    )
