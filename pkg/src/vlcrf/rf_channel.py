"""Rician-faded uplink RF channel amplitudes, reproducible from a seed.

The deterministic line-of-sight magnitude follows an amplitude-domain
power law anchored at 1 m; the scattered part is a circularly-symmetric
complex Gaussian whose variance equals the LOS power, so the K-factor has
its textbook meaning as the LOS-to-scatter power ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIXING_NORMALIZED = "normalized"
MIXING_UNNORMALIZED = "unnormalized"


@dataclass(frozen=True)
class RicianConfig:
    k_factor: float = 2.0             # LOS-to-scatter power ratio
    los_reference_gain: float = 1e-3  # amplitude at 1 m
    path_loss_exponent: float = 2.0   # power-domain exponent

    def __post_init__(self):
        if self.k_factor < 0:
            raise ValueError(f"RicianConfig.k_factor must be >= 0, got {self.k_factor!r}")
        if self.los_reference_gain <= 0:
            raise ValueError(
                f"RicianConfig.los_reference_gain must be > 0, got {self.los_reference_gain!r}"
            )
        if self.path_loss_exponent < 1.0:
            raise ValueError(
                f"RicianConfig.path_loss_exponent must be >= 1, got {self.path_loss_exponent!r}"
            )


@dataclass(frozen=True)
class FadingSample:
    """One channel amplitude draw."""

    h_mag: float

    def __post_init__(self):
        if not (self.h_mag >= 0.0 and math.isfinite(self.h_mag)):
            raise ValueError(f"FadingSample.h_mag must be finite and >= 0, got {self.h_mag!r}")


def los_component(cfg: RicianConfig, distance: float) -> float:
    """Deterministic LOS amplitude at ``distance`` meters.

    Amplitude falls as d^(-exponent/2) so that power falls as d^(-exponent).
    """
    if distance <= 0.0:
        raise ValueError(f"distance must be > 0 m, got {distance!r}")
    return cfg.los_reference_gain * distance ** (-cfg.path_loss_exponent / 2.0)


def sample_rician_gains(
    cfg: RicianConfig,
    distance: float,
    rng: np.random.Generator,
    n: int,
    mixing: str = MIXING_NORMALIZED,
) -> np.ndarray:
    """Draw ``n`` fading amplitudes; deterministic given (seed, call order).

    The ``normalized`` mix sqrt(K/(1+K)) * LOS + sqrt(1/(1+K)) * NLOS
    preserves E[|h|^2] = LOS^2.  The ``unnormalized`` variant applies the
    LOS weight sqrt(K/(1+K)) to both terms and does not preserve power; it
    exists only for comparison and degenerates to zero at K = 0.
    """
    los = los_component(cfg, distance)
    k = cfg.k_factor
    w_los = math.sqrt(k / (1.0 + k))
    if mixing == MIXING_NORMALIZED:
        w_nlos = math.sqrt(1.0 / (1.0 + k))
    elif mixing == MIXING_UNNORMALIZED:
        w_nlos = w_los
    else:
        raise ValueError(f"unknown mixing {mixing!r}")
    re = rng.standard_normal(n)
    im = rng.standard_normal(n)
    nlos = los * (re + 1j * im) / math.sqrt(2.0)
    return np.abs(w_los * los + w_nlos * nlos)


def sample_rician_gain(
    cfg: RicianConfig,
    distance: float,
    rng: np.random.Generator,
    mixing: str = MIXING_NORMALIZED,
) -> FadingSample:
    """Draw a single fading amplitude from the stream."""
    return FadingSample(float(sample_rician_gains(cfg, distance, rng, 1, mixing)[0]))
