"""Energy harvesting, rates, secrecy capacity and their derivatives.

Per user k the uplink secrecy contribution is a difference of two
perspective terms

    u_k = tau_ul * log2(1 + a_k (1 - tau_dl) / tau_ul)
    v_k = tau_ul * log2(1 + aE_k (1 - tau_dl) / tau_ul)

with a_k = eta I_D^2 g_k^2 h_k^2 / sigma_ul^2 and aE_k the analogous
eavesdropper constant.  Both terms are concave with rank-one Hessians and
extend continuously to 0 at tau_ul = 0.  Rates are in bits (log base 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)

SUM_SLACK = 1e-9  # accepted slack on the two unit time budgets


def _readonly_array(values, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ScenarioChannels:
    """Frozen per-scenario channel state.

    g:         per-user VLC downlink channel gain (unitless, >= 0)
    h:         per-user uplink amplitude at the access point (>= 0)
    h_e:       per-user uplink amplitude at the eavesdropper (>= 0)
    sigma2_dl: per-user downlink noise power, W
    sigma2_ul: per-user uplink noise power, W
    sigma2_e:  eavesdropper uplink noise power, W
    eta:       optical-to-electrical harvesting efficiency
    i_d:       LED drive DC offset, A
    p_led:     LED emitted power, W
    """

    g: np.ndarray
    h: np.ndarray
    h_e: np.ndarray
    sigma2_dl: np.ndarray
    sigma2_ul: np.ndarray
    sigma2_e: float
    eta: float
    i_d: float
    p_led: float

    def __post_init__(self):
        g = _readonly_array(self.g, "g")
        k = g.shape[0]
        if k < 1:
            raise ValueError("ScenarioChannels needs at least one user")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", _readonly_array(self.h, "h", k))
        object.__setattr__(self, "h_e", _readonly_array(self.h_e, "h_e", k))
        object.__setattr__(self, "sigma2_dl", _readonly_array(self.sigma2_dl, "sigma2_dl", k))
        object.__setattr__(self, "sigma2_ul", _readonly_array(self.sigma2_ul, "sigma2_ul", k))
        for name in ("g", "h", "h_e"):
            if np.any(getattr(self, name) < 0) or not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"ScenarioChannels.{name} entries must be finite and >= 0")
        for name in ("sigma2_dl", "sigma2_ul"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"ScenarioChannels.{name} entries must be > 0")
        for name in ("sigma2_e", "eta", "i_d", "p_led"):
            if getattr(self, name) <= 0:
                raise ValueError(f"ScenarioChannels.{name} must be > 0")

    @property
    def K(self) -> int:
        return self.g.shape[0]

    def a_user(self) -> np.ndarray:
        """Per-user uplink SNR constant a_k = eta I_D^2 g_k^2 h_k^2 / sigma_ul^2."""
        return self.eta * self.i_d**2 * self.g**2 * self.h**2 / self.sigma2_ul

    def a_eve(self) -> np.ndarray:
        """Eavesdropper SNR constant with the eavesdropper noise power."""
        return self.eta * self.i_d**2 * self.g**2 * self.h_e**2 / self.sigma2_e


@dataclass(frozen=True)
class Allocation:
    """Per-user downlink / uplink slot fractions of a unit TDMA frame."""

    tau_dl: np.ndarray
    tau_ul: np.ndarray

    def __post_init__(self):
        dl = _readonly_array(self.tau_dl, "tau_dl")
        ul = _readonly_array(self.tau_ul, "tau_ul", dl.shape[0])
        object.__setattr__(self, "tau_dl", dl)
        object.__setattr__(self, "tau_ul", ul)
        if np.any(dl < 0) or np.any(ul < 0):
            raise ValueError("Allocation fractions must be componentwise >= 0")
        if dl.sum() > 1.0 + SUM_SLACK:
            raise ValueError(f"sum(tau_dl) = {dl.sum()!r} exceeds the unit frame")
        if ul.sum() > 1.0 + SUM_SLACK:
            raise ValueError(f"sum(tau_ul) = {ul.sum()!r} exceeds the unit frame")

    @property
    def K(self) -> int:
        return self.tau_dl.shape[0]


def _check_index(s: ScenarioChannels, k: int) -> None:
    if not 0 <= k < s.K:
        raise IndexError(f"user index {k} out of range for K = {s.K}")


def harvested_energy(s: ScenarioChannels, k: int, tau_dl_k: float) -> float:
    """Energy harvested by user k while not receiving: eta I_D^2 g^2 (1 - tau_dl)."""
    _check_index(s, k)
    if not 0.0 <= tau_dl_k <= 1.0:
        raise ValueError(f"tau_dl_k must lie in [0, 1], got {tau_dl_k!r}")
    return s.eta * s.i_d**2 * float(s.g[k]) ** 2 * (1.0 - tau_dl_k)


def ul_power(s: ScenarioChannels, k: int, tau_dl_k: float, tau_ul_k: float) -> float:
    """Uplink transmit power: the harvested energy spread over the UL slot."""
    if tau_ul_k <= 0.0:
        raise ValueError("UL power is undefined at tau_ul = 0; use the rate limit instead")
    return harvested_energy(s, k, tau_dl_k) / tau_ul_k


def ul_energy(s: ScenarioChannels, k: int, tau_dl_k: float, tau_ul_k: float) -> float:
    """Energy spent in the UL slot, i.e. ul_power * tau_ul in cancelled form.

    Evaluating the product in floating point would reintroduce the division
    rounding of ul_power; evaluating it in the algebraically cancelled
    expression order reproduces harvested_energy bit for bit, which keeps
    the energy accounting exactly conservative.
    """
    if tau_ul_k <= 0.0:
        raise ValueError("no UL slot to spend energy in (tau_ul = 0)")
    return harvested_energy(s, k, tau_dl_k)


def dl_rate_coefficients(s: ScenarioChannels) -> np.ndarray:
    """Per-user DL spectral efficiency c_k, bits/s/Hz of allocated slot.

    c_k = log2(1 + (e / 2 pi) P_LED g_k^2 / sigma_dl^2); the (e / 2 pi)
    factor is the standard intensity-modulation capacity lower bound.  The
    DL sum rate of an allocation is then the linear form sum(tau_dl * c).
    """
    snr = (math.e / (2.0 * math.pi)) * s.p_led * s.g**2 / s.sigma2_dl
    return np.log1p(snr) / LN2


def dl_sum_rate(s: ScenarioChannels, alloc: Allocation) -> float:
    """Achieved DL sum rate, bits/s/Hz."""
    if alloc.K != s.K:
        raise ValueError("allocation size does not match scenario")
    return float(np.dot(dl_rate_coefficients(s), alloc.tau_dl))


# ---------------------------------------------------------------------------
# scalar perspective-term helpers shared by the public API and the solver
# ---------------------------------------------------------------------------

def perspective_value(a: float, leftover: float, tau_ul: float) -> float:
    """tau_ul * log2(1 + a * leftover / tau_ul), extended with 0 at tau_ul = 0."""
    if tau_ul <= 0.0:
        return 0.0
    return tau_ul * math.log1p(a * leftover / tau_ul) / LN2


def perspective_grads(a: float, leftover: float, tau_ul: float) -> tuple[float, float]:
    """(d/dtau_dl, d/dtau_ul) of the perspective term; needs tau_ul > 0."""
    prod = a * leftover
    denom = tau_ul + prod
    d_dl = -a * tau_ul / (LN2 * denom)
    d_ul = math.log1p(prod / tau_ul) / LN2 - prod / (LN2 * denom)
    return d_dl, d_ul


def secrecy_capacity_user(s: ScenarioChannels, k: int, tau_dl_k: float, tau_ul_k: float) -> float:
    """Secrecy capacity of user k's uplink, bits/s/Hz (may be negative).

    Returns u_k - v_k; at tau_ul = 0 the continuous extension 0 is used.
    The value is not clamped at zero: clamping would destroy the
    difference-of-concave structure the solver relies on.
    """
    _check_index(s, k)
    if not 0.0 <= tau_dl_k <= 1.0:
        raise ValueError(f"tau_dl_k must lie in [0, 1], got {tau_dl_k!r}")
    if tau_ul_k < 0.0:
        raise ValueError(f"tau_ul_k must be >= 0, got {tau_ul_k!r}")
    leftover = 1.0 - tau_dl_k
    a = float(s.a_user()[k])
    a_e = float(s.a_eve()[k])
    return perspective_value(a, leftover, tau_ul_k) - perspective_value(a_e, leftover, tau_ul_k)


def objective_value(s: ScenarioChannels, alloc: Allocation) -> float:
    """Sum of per-user secrecy capacities (continuous extension at tau_ul=0)."""
    if alloc.K != s.K:
        raise ValueError("allocation size does not match scenario")
    a = s.a_user()
    a_e = s.a_eve()
    total = 0.0
    for k in range(s.K):
        leftover = 1.0 - float(alloc.tau_dl[k])
        t = float(alloc.tau_ul[k])
        total += perspective_value(float(a[k]), leftover, t) - perspective_value(
            float(a_e[k]), leftover, t
        )
    return total


def objective_and_gradient(s: ScenarioChannels, alloc: Allocation) -> tuple[float, np.ndarray]:
    """Objective and its gradient, ordered [d/dtau_dl_1..K, d/dtau_ul_1..K].

    The gradient of each perspective term is

        d/dtau_ul = log2(1 + a w / t) - a w / (ln2 (t + a w))
        d/dtau_dl = -a t / (ln2 (t + a w))        with w = 1 - tau_dl.

    Requires every tau_ul > 0 so the derivatives are defined.
    """
    if alloc.K != s.K:
        raise ValueError("allocation size does not match scenario")
    if np.any(alloc.tau_ul <= 0.0):
        raise ValueError("gradient undefined at tau_ul = 0; keep iterates above the floor")
    value, grad_dl, grad_ul = _objective_and_gradient_lists(
        [float(x) for x in s.a_user()],
        [float(x) for x in s.a_eve()],
        [float(x) for x in alloc.tau_dl],
        [float(x) for x in alloc.tau_ul],
    )
    return value, np.concatenate([grad_dl, grad_ul])


def _objective_and_gradient_lists(
    a: list[float], a_e: list[float], tau_dl: list[float], tau_ul: list[float]
) -> tuple[float, np.ndarray, np.ndarray]:
    value = 0.0
    grad_dl = np.empty(len(a))
    grad_ul = np.empty(len(a))
    for k in range(len(a)):
        w = 1.0 - tau_dl[k]
        t = tau_ul[k]
        u = perspective_value(a[k], w, t)
        v = perspective_value(a_e[k], w, t)
        du_dl, du_ul = perspective_grads(a[k], w, t)
        dv_dl, dv_ul = perspective_grads(a_e[k], w, t)
        value += u - v
        grad_dl[k] = du_dl - dv_dl
        grad_ul[k] = du_ul - dv_ul
    return value, grad_dl, grad_ul


def _perspective_hessian(a: float, tau_dl: float, tau_ul: float) -> np.ndarray:
    """2x2 Hessian of a perspective term, variable order (tau_dl, tau_ul).

    Entries (with w = 1 - tau_dl, denom = tau_ul + a w):

        d2/dtau_dl^2   = -a^2 tau_ul / (denom^2 ln2)
        d2 cross       = -a^2 w / (denom^2 ln2)
        d2/dtau_ul^2   =  a w / (denom^2 ln2) - a w / (tau_ul denom ln2)

    The matrix is rank one and negative semidefinite on the interior.
    """
    if tau_ul <= 0.0 or tau_dl >= 1.0:
        raise ValueError(
            f"Hessian requires an interior point (tau_ul > 0, tau_dl < 1), "
            f"got tau_dl = {tau_dl!r}, tau_ul = {tau_ul!r}"
        )
    w = 1.0 - tau_dl
    denom = tau_ul + w * a
    h_dd = -(a**2) * tau_ul / (denom**2 * LN2)
    h_cross = -(a**2) * w / (denom**2 * LN2)
    h_uu = w * a / (denom**2 * LN2) - w * a / (tau_ul * denom * LN2)
    return np.array([[h_dd, h_cross], [h_cross, h_uu]])


def hessian_u(s: ScenarioChannels, k: int, tau_dl_k: float, tau_ul_k: float) -> np.ndarray:
    """Hessian of the legitimate-user term u_k, variable order (tau_dl, tau_ul)."""
    _check_index(s, k)
    return _perspective_hessian(float(s.a_user()[k]), tau_dl_k, tau_ul_k)


def hessian_v(s: ScenarioChannels, k: int, tau_dl_k: float, tau_ul_k: float) -> np.ndarray:
    """Hessian of the eavesdropper term v_k, variable order (tau_dl, tau_ul)."""
    _check_index(s, k)
    return _perspective_hessian(float(s.a_eve()[k]), tau_dl_k, tau_ul_k)


def clamped_secrecy_sum(s: ScenarioChannels, alloc: Allocation) -> float:
    """Reporting-side sum of max(C_S_k, 0); the optimizer never clamps."""
    total = 0.0
    for k in range(s.K):
        total += max(0.0, secrecy_capacity_user(s, k, float(alloc.tau_dl[k]), float(alloc.tau_ul[k])))
    return total


def objective_batch(s: ScenarioChannels, tau_dl: np.ndarray, tau_ul: np.ndarray) -> np.ndarray:
    """Vectorized objective over rows of (N, K) allocation matrices.

    Used by the grid oracle; tau_ul = 0 entries take the continuous
    extension.  Feasibility of the rows is the caller's business.
    """
    tau_dl = np.asarray(tau_dl, dtype=np.float64)
    tau_ul = np.asarray(tau_ul, dtype=np.float64)
    a = s.a_user()[None, :]
    a_e = s.a_eve()[None, :]
    leftover = 1.0 - tau_dl
    safe_t = np.where(tau_ul > 0.0, tau_ul, 1.0)
    u = np.where(tau_ul > 0.0, tau_ul * np.log1p(a * leftover / safe_t) / LN2, 0.0)
    v = np.where(tau_ul > 0.0, tau_ul * np.log1p(a_e * leftover / safe_t) / LN2, 0.0)
    return np.sum(u - v, axis=1)
