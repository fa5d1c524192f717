"""Difference-of-concave solver for the time-slot allocation problem.

The objective sum_k (u_k - v_k) is maximized over the polytope

    sum(tau_dl) <= 1,  sum(tau_ul) <= 1,  tau >= 0,  c . tau_dl >= r_min

by iteratively linearizing the concave subtrahend v at the current iterate
and maximizing the resulting concave surrogate u(x) - <grad v, x> with a
projected gradient ascent.  Projections onto the polytope are exact: the
constraint set separates into a downlink block (simplex budget plus the
minimum-rate halfspace) and an uplink block (floored simplex budget), each
with a finite-breakpoint closed-form projection.

Every uplink fraction is kept at or above a small floor so the perspective
gradients stay defined; downlink fractions may reach 0 exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, nnls

from vlcrf.link_budget import (
    LN2,
    Allocation,
    ScenarioChannels,
    dl_rate_coefficients,
    perspective_grads,
    perspective_value,
)

STATUS_CONVERGED = "converged"
STATUS_MAX_ITERATIONS = "max_iterations"
STATUS_INFEASIBLE = "infeasible"

SNAP_THRESHOLD = 1e-6       # reported fractions below this collapse to 0
ARMIJO_SIGMA = 1e-4
MIN_STEP = 1e-18
PROX_RHO = 1e-3             # proximal damping of the DCA subproblems
STAGNATION_WINDOW = 40      # inner iterations between progress checks
STAGNATION_GAIN = 1e-6      # window gain per unit of accumulated gain


class SubproblemError(RuntimeError):
    """Inner solve hit its iteration cap; carries the best iterate found."""

    def __init__(self, message: str, best_dl: list, best_ul: list):
        super().__init__(message)
        self.best_dl = best_dl
        self.best_ul = best_ul


@dataclass(frozen=True)
class FeasibleSet:
    """Time-slot polytope: two unit budgets, nonnegativity, minimum DL rate."""

    rate_coeffs: np.ndarray
    r_min: float
    tau_floor: float = 1e-9

    def __post_init__(self):
        c = np.asarray(self.rate_coeffs, dtype=np.float64).copy()
        if c.ndim != 1 or c.shape[0] < 1:
            raise ValueError("rate_coeffs must be a nonempty 1-D array")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("rate_coeffs must be finite and >= 0")
        c.flags.writeable = False
        object.__setattr__(self, "rate_coeffs", c)
        if self.r_min < 0:
            raise ValueError(f"r_min must be >= 0, got {self.r_min!r}")
        if not 0.0 < self.tau_floor < 1e-3:
            raise ValueError(f"tau_floor must be a small positive number, got {self.tau_floor!r}")

    @property
    def K(self) -> int:
        return self.rate_coeffs.shape[0]


@dataclass(frozen=True)
class DcaSettings:
    epsilon: float = 1e-8                 # max-norm iterate change at convergence
    max_iterations: int = 500
    subproblem_tolerance: float = 1e-9    # projected-gradient residual bound
    restarts: int = 5                     # total starts; the first is deterministic
    seed: int = 0                         # stream for the random restarts
    max_inner_iterations: int = 2000

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.subproblem_tolerance <= 0:
            raise ValueError("subproblem_tolerance must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be >= 1")


@dataclass(frozen=True)
class DcaResult:
    allocation: Allocation | None
    objective: float
    iterations: int
    status: str
    trace: tuple
    kkt_residual: float
    raw_allocation: Allocation | None = None  # converged iterate before snapping


def check_feasibility(fs: FeasibleSet) -> bool:
    """The rate target is reachable iff it does not exceed the best single-user rate."""
    return fs.r_min <= float(np.max(fs.rate_coeffs))


def initial_allocation(fs: FeasibleSet) -> Allocation:
    """Deterministic start: rate target covered by the best DL user, uniform UL.

    The best-coefficient user (lowest index on ties) gets just enough DL
    time for the rate constraint plus a small margin, capped at the frame.
    """
    if not check_feasibility(fs):
        raise ValueError(f"rate target {fs.r_min!r} is infeasible for these coefficients")
    c = fs.rate_coeffs
    j = int(np.argmax(c))
    if fs.r_min <= 0.0:
        beta = 1e-6
    else:
        beta = min(1.0, min(1.0, fs.r_min / float(c[j])) + 1e-6)
    tau_dl = np.zeros(fs.K)
    tau_dl[j] = beta
    tau_ul = np.full(fs.K, 1.0 / fs.K)
    return Allocation(tau_dl, tau_ul)


# ---------------------------------------------------------------------------
# exact projections onto the two constraint blocks (plain-Python hot path)
# ---------------------------------------------------------------------------

def _simplex_theta(w: list, budget: float) -> float:
    """Threshold t with sum(max(w - t, 0)) = budget, for budget > 0."""
    u = sorted(w, reverse=True)
    css = 0.0
    theta = 0.0
    for j, uj in enumerate(u, start=1):
        css += uj
        t = (css - budget) / j
        if uj - t > 0.0:
            theta = t
    return theta


def _project_ul(v: list, floor: float) -> list:
    """Project onto {x >= floor, sum(x) <= 1}."""
    x = [vi if vi > floor else floor for vi in v]
    if sum(x) <= 1.0:
        return x
    n = len(v)
    budget = 1.0 - n * floor
    theta = _simplex_theta([vi - floor for vi in v], budget)
    return [max(vi - floor - theta, 0.0) + floor for vi in v]


def _rate_dot(c: list, x: list) -> float:
    total = 0.0
    for ci, xi in zip(c, x):
        total += ci * xi
    return total


def _mu_for_rate(v: list, c: list, r_min: float) -> float:
    """Smallest mu >= 0 with c . max(v + mu c, 0) = r_min (piecewise-linear scan)."""
    s1 = 0.0  # sum of c_i v_i over active entries
    s2 = 0.0  # sum of c_i^2 over active entries
    future = []
    for vi, ci in zip(v, c):
        if ci <= 0.0:
            continue
        if vi > 0.0:
            s1 += ci * vi
            s2 += ci * ci
        else:
            future.append((-vi / ci, vi, ci))
    future.sort()
    mu_cur = 0.0
    idx = 0
    while True:
        nxt = future[idx][0] if idx < len(future) else math.inf
        if s2 > 0.0:
            mu_need = (r_min - s1) / s2
            if mu_need <= nxt:
                return max(mu_need, mu_cur)
        if idx >= len(future):
            raise RuntimeError("rate target unreachable in projection; feasibility not checked")
        _, vi, ci = future[idx]
        s1 += ci * vi
        s2 += ci * ci
        mu_cur = nxt
        idx += 1


def _project_dl_both_active(v: list, c: list, r_min: float) -> list:
    """Projection with both the unit budget and the rate constraint active.

    The achieved rate c . x(mu) along the budget-projected path x(mu) =
    P(v + mu c) is piecewise linear and nondecreasing in the rate
    multiplier mu, so a bracketed Newton walk on its segments lands on the
    root in a few evaluations (each segment's slope follows from the
    active support statistics).
    """
    n = len(v)

    def eval_mu(mu: float):
        w = [v[i] + mu * c[i] for i in range(n)]
        theta = _simplex_theta(w, 1.0)
        x = [0.0] * n
        rate = 0.0
        s_c = 0.0
        s_cc = 0.0
        m = 0
        for i in range(n):
            xi = w[i] - theta
            if xi > 0.0:
                x[i] = xi
                rate += c[i] * xi
                s_c += c[i]
                s_cc += c[i] * c[i]
                m += 1
        slope = s_cc - s_c * s_c / m if m else 0.0
        return x, rate, slope

    lo = 0.0
    hi = None
    x_hi = None
    x, rate, slope = eval_mu(0.0)
    if rate >= r_min:
        return x
    mu = 0.0
    tol = 1e-12 * max(1.0, r_min)
    for _ in range(200):
        if slope > 1e-300:
            mu_next = mu + (r_min - rate) / slope
        else:
            mu_next = mu * 2.0 + 1.0
        if hi is not None and not (lo < mu_next < hi):
            mu_next = 0.5 * (lo + hi)
        elif hi is None and mu_next <= lo:
            mu_next = lo * 2.0 + 1.0
        if mu_next > 1e18:
            # the target sits at the best-user vertex; the deficit there
            # is below any feasibility tolerance in play
            return eval_mu(1e18)[0]
        x_n, rate_n, slope_n = eval_mu(mu_next)
        if rate_n >= r_min:
            hi, x_hi = mu_next, x_n
            if rate_n - r_min <= tol:
                return x_n
        else:
            lo = mu_next
        mu, rate, slope = mu_next, rate_n, slope_n
        if hi is not None and hi - lo <= 1e-15 * max(1.0, hi):
            return x_hi
    return x_hi if x_hi is not None else x


def _project_dl(v: list, c: list, r_min: float) -> list:
    """Project onto {x >= 0, sum(x) <= 1, c . x >= r_min} (exact, case analysis)."""
    x = [vi if vi > 0.0 else 0.0 for vi in v]
    sum_ok = sum(x) <= 1.0
    rate_ok = r_min <= 0.0 or _rate_dot(c, x) >= r_min
    if sum_ok and rate_ok:
        return x
    if not sum_ok:
        theta = _simplex_theta(v, 1.0)
        x = [max(vi - theta, 0.0) for vi in v]
        if r_min <= 0.0 or _rate_dot(c, x) >= r_min:
            return x
        return _project_dl_both_active(v, c, r_min)
    mu = _mu_for_rate(v, c, r_min)
    x = [max(vi + mu * ci, 0.0) for vi, ci in zip(v, c)]
    if sum(x) <= 1.0:
        return x
    return _project_dl_both_active(v, c, r_min)


def project_onto_feasible(fs: FeasibleSet, tau_dl, tau_ul) -> tuple[list, list]:
    """Exact Euclidean projection onto the feasible polytope (both blocks)."""
    c = [float(x) for x in fs.rate_coeffs]
    dl = _project_dl([float(x) for x in tau_dl], c, fs.r_min)
    ul = _project_ul([float(x) for x in tau_ul], fs.tau_floor)
    return dl, ul


def allocation_violation(fs: FeasibleSet, alloc: Allocation) -> float:
    """Worst constraint violation of an allocation (0 when feasible).

    The minimum-rate slack is normalized by max(1, r_min) so the measure is
    comparable across rate scales.
    """
    dl = alloc.tau_dl
    ul = alloc.tau_ul
    viol = max(0.0, float(-dl.min()), float(-ul.min()))
    viol = max(viol, float(dl.sum()) - 1.0, float(ul.sum()) - 1.0)
    rate = _rate_dot([float(x) for x in fs.rate_coeffs], [float(x) for x in dl])
    viol = max(viol, (fs.r_min - rate) / max(1.0, fs.r_min))
    return viol


# ---------------------------------------------------------------------------
# inner solve: projected gradient ascent on the concave surrogate
# ---------------------------------------------------------------------------

def _pgd_maximize(
    a: list,
    y_dl: list,
    y_ul: list,
    fs_c: list,
    r_min: float,
    floor: float,
    start_dl: list,
    start_ul: list,
    tolerance: float,
    max_iterations: int,
    rho: float = 0.0,
    strict: bool = True,
    center: tuple | None = None,
) -> tuple[list, list, int]:
    """Maximize u(x) - <y, x> - rho/2 |x - start|^2 over the polytope.

    Monotone ascent with Armijo backtracking along the projection arc;
    stops when the unit-step projected-gradient residual (max-norm) drops
    below ``tolerance``.  Never returns a point with a lower surrogate
    value than the warm start.  A positive ``rho`` (proximal damping
    against the warm start) makes the surrogate strongly concave: the
    perspective terms are scale-invariant along per-user rays, and without
    damping the argmax wanders freely along those flat directions.
    """
    K = len(a)
    if center is None:
        c_dl = list(start_dl)
        c_ul = list(start_ul)
    else:
        c_dl = list(center[0])
        c_ul = list(center[1])
    damp_floor = rho if rho > 0.0 else 1e-12

    def surrogate(dl: list, ul: list) -> float:
        tot = 0.0
        for k in range(K):
            tot += perspective_value(a[k], 1.0 - dl[k], ul[k]) - y_dl[k] * dl[k] - y_ul[k] * ul[k]
            if rho:
                tot -= 0.5 * rho * ((dl[k] - c_dl[k]) ** 2 + (ul[k] - c_ul[k]) ** 2)
        return tot

    def grad_and_newton(dl: list, ul: list, damp: float):
        """Gradient plus the damped per-user 2x2 Newton direction.

        The perspective curvature spans many orders of magnitude (it
        behaves like 1/tau_ul near switched-off users) and its 2x2 blocks
        are exactly rank one, so neither a scalar step nor a diagonal
        scaling works: the first crawls through the stiff region, the
        second overshoots across the perfectly correlated ridge.  The
        damped block solve (-H_u + damp*I)^-1 g handles both; its
        determinant is evaluated through the rank-one identity
        A'C' = B'^2, which dodges the catastrophic cancellation of the
        naive 2x2 formula.
        """
        g_dl = [0.0] * K
        g_ul = [0.0] * K
        d_dl = [0.0] * K
        d_ul = [0.0] * K
        for k in range(K):
            w = 1.0 - dl[k]
            t = ul[k]
            du_dl, du_ul = perspective_grads(a[k], w, t)
            gd = du_dl - y_dl[k]
            gu = du_ul - y_ul[k]
            if rho:
                gd -= rho * (dl[k] - c_dl[k])
                gu -= rho * (ul[k] - c_ul[k])
            g_dl[k] = gd
            g_ul[k] = gu
            prod = a[k] * w
            denom = t + prod
            scale = denom * denom * LN2
            aa = a[k] * a[k] * t / scale          # -d2u/d(tau_dl)^2
            bb = a[k] * prod / scale              # -d2u cross term
            cc = prod * prod / (t * scale)        # -d2u/d(tau_ul)^2
            det = damp * (aa + cc + damp)
            d_dl[k] = ((cc + damp) * gd - bb * gu) / det
            d_ul[k] = ((aa + damp) * gu - bb * gd) / det
        return g_dl, g_ul, d_dl, d_ul

    x_dl = _project_dl(start_dl, fs_c, r_min)
    x_ul = _project_ul(start_ul, floor)
    f = surrogate(x_dl, x_ul)
    alpha_plain = 1.0
    f_start = f
    f_window = f
    lm = damp_floor
    for it in range(max_iterations):
        if not strict and it % STAGNATION_WINDOW == 0:
            # Loose phase: give up polishing when a window contributes a
            # negligible fraction of the gain accumulated so far; the
            # point is a valid warm-start improvement even if the
            # residual target is out of reach.  The floor term keeps the
            # test meaningful when the warm start was already optimal.
            if it > 0:
                floor_gain = 1e-18 * (1.0 + abs(f))
                if f - f_window <= max(floor_gain, STAGNATION_GAIN * (f - f_start)):
                    return x_dl, x_ul, it
            f_window = f
        g_dl, g_ul, d_dl, d_ul = grad_and_newton(x_dl, x_ul, lm)
        probe_dl = _project_dl([x_dl[k] + g_dl[k] for k in range(K)], fs_c, r_min)
        probe_ul = _project_ul([x_ul[k] + g_ul[k] for k in range(K)], floor)
        newton_dl = _project_dl([x_dl[k] + d_dl[k] for k in range(K)], fs_c, r_min)
        newton_ul = _project_ul([x_ul[k] + d_ul[k] for k in range(K)], floor)
        # Stationarity holds iff either projected mapping is a fixed point,
        # so the smaller move serves as the residual.  The plain mapping is
        # stiffness-amplified (curvature ~1/tau_ul at the floor corners
        # puts its target out of reach at any representable distance from
        # the optimum) while the damped-Newton mapping measures distance.
        resid = 0.0
        for k in range(K):
            resid = max(resid, abs(probe_dl[k] - x_dl[k]), abs(probe_ul[k] - x_ul[k]))
        resid_newton = 0.0
        for k in range(K):
            resid_newton = max(
                resid_newton, abs(newton_dl[k] - x_dl[k]), abs(newton_ul[k] - x_ul[k])
            )
        if min(resid, resid_newton) <= tolerance:
            return x_dl, x_ul, it

        def try_step(cand_dl, cand_ul):
            gd = 0.0
            for k in range(K):
                gd += g_dl[k] * (cand_dl[k] - x_dl[k]) + g_ul[k] * (cand_ul[k] - x_ul[k])
            if gd <= 0.0:
                return None
            f_cand = surrogate(cand_dl, cand_ul)
            if f_cand >= f + ARMIJO_SIGMA * gd:
                return f_cand
            return None

        accepted = False
        # 1) damped block-Newton step with Levenberg-Marquardt adaptation:
        #    a rejection (overshoot, or ascent flipped by budget
        #    redistribution under the projection) raises the damping so
        #    the next direction is shorter and more gradient-like; an
        #    acceptance relaxes it back toward the proximal floor
        f_cand = try_step(newton_dl, newton_ul)
        if f_cand is not None:
            x_dl, x_ul, f = newton_dl, newton_ul, f_cand
            lm = max(lm / 3.0, damp_floor)
            accepted = True
        else:
            lm = min(lm * 8.0, 1e12)
        if not accepted:
            # 2) unit plain step: the residual probe is already computed,
            #    so the large move is always explored at no extra cost
            f_cand = try_step(probe_dl, probe_ul)
            if f_cand is not None:
                x_dl, x_ul, f = probe_dl, probe_ul, f_cand
                alpha_plain = 1.0
                accepted = True
        if not accepted and K > 1:
            # 3) pairwise exchange along an active budget face: projection
            #    arcs cannot trade mass between coordinates once a budget
            #    binds, which is exactly where they crawl
            for block in (0, 1):
                g_blk = g_dl if block == 0 else g_ul
                x_blk = x_dl if block == 0 else x_ul
                hi = max(range(K), key=lambda k: g_blk[k])
                lo = min(range(K), key=lambda k: g_blk[k])
                if hi == lo or g_blk[hi] - g_blk[lo] <= 0.0:
                    continue
                if block == 0:
                    room = min(1.0 - x_blk[hi], x_blk[lo])
                    if r_min > 0.0 and fs_c[lo] > fs_c[hi]:
                        slack = _rate_dot(fs_c, x_dl) - r_min
                        room = min(room, max(0.0, slack) / (fs_c[lo] - fs_c[hi]))
                else:
                    room = min(1.0 - x_blk[hi], x_blk[lo] - floor)
                delta = room
                for _trial in range(20):
                    if delta <= 0.0 or delta * (g_blk[hi] - g_blk[lo]) < 1e-16 * (1.0 + abs(f)):
                        break
                    cand_blk = list(x_blk)
                    cand_blk[hi] += delta
                    cand_blk[lo] -= delta
                    if block == 0:
                        f_cand = try_step(cand_blk, x_ul)
                    else:
                        f_cand = try_step(x_dl, cand_blk)
                    if f_cand is not None:
                        if block == 0:
                            x_dl = cand_blk
                        else:
                            x_ul = cand_blk
                        f = f_cand
                        accepted = True
                        break
                    delta *= 0.5
                if accepted:
                    break
        if not accepted:
            # 4) backtracking plain-gradient arc from the carried step;
            #    moves below ~1e-9 are not worth grinding (the block-Newton
            #    branch already resolves the stiff floor corners), so treat
            #    their absence as numerical stationarity
            gmax = 0.0
            for k in range(K):
                gmax = max(gmax, abs(g_dl[k]), abs(g_ul[k]))
            alpha_min = max(MIN_STEP, 1e-9 / (1.0 + gmax))
            alpha = min(alpha_plain * 4.0, 0.5)
            while alpha >= alpha_min:
                cand_dl = _project_dl([x_dl[k] + alpha * g_dl[k] for k in range(K)], fs_c, r_min)
                cand_ul = _project_ul([x_ul[k] + alpha * g_ul[k] for k in range(K)], floor)
                f_cand = try_step(cand_dl, cand_ul)
                if f_cand is not None:
                    x_dl, x_ul, f = cand_dl, cand_ul, f_cand
                    alpha_plain = alpha
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            # no useful ascent step is representable: numerically stationary
            return x_dl, x_ul, it
    raise SubproblemError(
        f"inner solver exceeded {max_iterations} iterations", x_dl, x_ul
    )


def _surrogate_argmax(
    a: list,
    y_dl: list,
    y_ul: list,
    fs_c: list,
    r_min: float,
    floor: float,
    start_dl: list,
    start_ul: list,
    tolerance: float,
    max_iterations: int,
    rho: float,
    strict: bool,
    polish_cap: int | None = None,
    use_sqp: bool = True,
) -> tuple[list, list, int]:
    """Argmax of the (possibly prox-damped) surrogate over the polytope.

    A sequential-quadratic pass does the heavy lifting: the feasible set
    mixes stiff perspective corners with a near-parallel pair of budget
    and rate constraints, a wedge along which first-order projection arcs
    zigzag with a contraction factor arbitrarily close to one.  The
    projected-gradient loop then verifies (and if needed polishes) the
    point, which keeps the residual semantics and the monotone-ascent
    guarantee against the warm start: a candidate that fails to improve
    on the warm start is discarded before polishing.
    """
    K = len(a)
    x0_dl = _project_dl(list(start_dl), fs_c, r_min)
    x0_ul = _project_ul(list(start_ul), floor)
    center_dl = list(x0_dl)
    center_ul = list(x0_ul)
    cap = max_iterations if polish_cap is None else min(max_iterations, polish_cap)
    cap_fast = min(60, max_iterations)

    # fast path: a warm start near the argmax (the common case once the
    # outer loop is underway) resolves in a handful of projected steps
    # without invoking the sequential-quadratic machinery at all
    try:
        return _pgd_maximize(
            a, y_dl, y_ul, fs_c, r_min, floor,
            x0_dl, x0_ul, tolerance, cap_fast, rho=rho, strict=strict,
            center=(center_dl, center_ul),
        )
    except SubproblemError as err:
        if not use_sqp:
            # loose phase: the partial ascent is good enough, the next
            # outer linearization moves the target anyway
            return err.best_dl, err.best_ul, cap_fast
        x0_dl, x0_ul = err.best_dl, err.best_ul

    def f_warm(dl, ul):
        tot = 0.0
        for k in range(K):
            tot += perspective_value(a[k], 1.0 - dl[k], ul[k]) - y_dl[k] * dl[k] - y_ul[k] * ul[k]
            if rho:
                tot -= 0.5 * rho * ((dl[k] - center_dl[k]) ** 2 + (ul[k] - center_ul[k]) ** 2)
        return tot

    def neg_obj(z):
        val = f_warm(list(z[:K]), list(z[K:]))
        return -val

    def neg_grad(z):
        g = np.empty(2 * K)
        for k in range(K):
            du_dl, du_ul = perspective_grads(a[k], 1.0 - z[k], z[K + k])
            g[k] = du_dl - y_dl[k]
            g[K + k] = du_ul - y_ul[k]
            if rho:
                g[k] -= rho * (z[k] - center_dl[k])
                g[K + k] -= rho * (z[K + k] - center_ul[k])
        return -g

    z0 = np.array(x0_dl + x0_ul)
    c_arr = np.array(fs_c)
    jac_dl = np.concatenate([-np.ones(K), np.zeros(K)])
    jac_ul = np.concatenate([np.zeros(K), -np.ones(K)])
    cons = [
        {"type": "ineq", "fun": lambda z: 1.0 - z[:K].sum(), "jac": lambda z: jac_dl},
        {"type": "ineq", "fun": lambda z: 1.0 - z[K:].sum(), "jac": lambda z: jac_ul},
    ]
    if r_min > 0.0:
        jac_rate = np.concatenate([c_arr, np.zeros(K)])
        cons.append(
            {"type": "ineq", "fun": lambda z: float(np.dot(c_arr, z[:K])) - r_min,
             "jac": lambda z: jac_rate}
        )
    bounds = [(0.0, 1.0)] * K + [(floor, 1.0)] * K
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = minimize(
                neg_obj, z0, jac=neg_grad, method="SLSQP", bounds=bounds,
                constraints=cons, options={"maxiter": 25, "ftol": 1e-14},
            )
        cand_dl = _project_dl([float(v) for v in sol.x[:K]], fs_c, r_min)
        cand_ul = _project_ul([float(v) for v in sol.x[K:]], floor)
        if f_warm(cand_dl, cand_ul) >= f_warm(x0_dl, x0_ul):
            x0_dl, x0_ul = cand_dl, cand_ul
    except (ValueError, ArithmeticError):
        pass  # fall back to the projected-gradient loop from the warm start
    try:
        return _pgd_maximize(
            a, y_dl, y_ul, fs_c, r_min, floor,
            x0_dl, x0_ul, tolerance, cap, rho=rho, strict=strict,
            center=(center_dl, center_ul),
        )
    except SubproblemError as err:
        if polish_cap is None:
            raise
        # the bounded polish ran out; the point is still a monotone
        # improvement over the warm start
        return err.best_dl, err.best_ul, cap


def solve_subproblem(
    s: ScenarioChannels,
    fs: FeasibleSet,
    y: np.ndarray,
    start: Allocation | None = None,
    settings: DcaSettings = DcaSettings(),
) -> Allocation:
    """One linearized step: argmax of u(x) - <y, x> over the polytope.

    ``y`` is the 2K linearization gradient ordered [dl block, ul block].
    Raises SubproblemError (carrying the best iterate) on the iteration cap.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (2 * fs.K,):
        raise ValueError(f"y must have shape ({2 * fs.K},)")
    if not np.all(np.isfinite(y)):
        raise ValueError("linearization gradient must be finite")
    if not check_feasibility(fs):
        raise ValueError("feasible set is empty for this rate target")
    if start is None:
        start = initial_allocation(fs)
    dl, ul, _ = _surrogate_argmax(
        [float(x) for x in s.a_user()],
        [float(v) for v in y[: fs.K]],
        [float(v) for v in y[fs.K :]],
        [float(x) for x in fs.rate_coeffs],
        fs.r_min,
        fs.tau_floor,
        [float(x) for x in start.tau_dl],
        [float(x) for x in start.tau_ul],
        settings.subproblem_tolerance,
        settings.max_inner_iterations,
        rho=0.0,
        strict=True,
    )
    return Allocation(np.array(dl), np.array(ul))


# ---------------------------------------------------------------------------
# outer DCA loop with deterministic multi-start
# ---------------------------------------------------------------------------

def _objective_lists(a: list, a_e: list, dl: list, ul: list) -> float:
    tot = 0.0
    for k in range(len(a)):
        w = 1.0 - dl[k]
        tot += perspective_value(a[k], w, ul[k]) - perspective_value(a_e[k], w, ul[k])
    return tot


def _v_gradient_lists(a_e: list, dl: list, ul: list) -> tuple[list, list]:
    g_dl = [0.0] * len(a_e)
    g_ul = [0.0] * len(a_e)
    for k in range(len(a_e)):
        g_dl[k], g_ul[k] = perspective_grads(a_e[k], 1.0 - dl[k], ul[k])
    return g_dl, g_ul


def _dca_single(a, a_e, c, fs: FeasibleSet, start_dl, start_ul, settings: DcaSettings):
    """One DCA run: loose inner solves while progressing, strict near the end.

    Early subproblems only need enough accuracy to keep the ascent moving,
    so they may exit on stagnation; convergence is declared only after a
    strict-precision subproblem confirms the iterate is a fixed point.  A
    hard budget on total inner iterations bounds the cost of scenarios
    where the residual target is numerically out of reach.
    """
    x_dl = _project_dl(list(start_dl), c, fs.r_min)
    x_ul = _project_ul(list(start_ul), fs.tau_floor)
    f = _objective_lists(a, a_e, x_dl, x_ul)
    trace = [(f, 0.0)]
    status = STATUS_MAX_ITERATIONS
    iterations = settings.max_iterations
    budget = 25 * settings.max_inner_iterations
    strict = False
    recent = []  # objective values of the last few iterations
    for n in range(1, settings.max_iterations + 1):
        flat = len(recent) == 10 and f - recent[0] <= 10.0 * max(1e-12, 1e-4 * abs(f))
        if budget <= 0 or flat:
            # the objective has been flat across a whole window (or the
            # inner budget ran out): further linearizations only shuffle
            # the iterate along near-degenerate faces
            iterations = n - 1
            break
        y_dl, y_ul = _v_gradient_lists(a_e, x_dl, x_ul)
        try:
            n_dl, n_ul, used = _surrogate_argmax(
                a, y_dl, y_ul, c, fs.r_min, fs.tau_floor,
                x_dl, x_ul,
                settings.subproblem_tolerance,
                min(settings.max_inner_iterations, budget),
                rho=PROX_RHO,
                strict=strict,
                polish_cap=60,
                use_sqp=strict,
            )
            if strict:
                used += 400  # accounts for the sequential-quadratic pass
        except SubproblemError as err:
            n_dl, n_ul = err.best_dl, err.best_ul
            used = min(settings.max_inner_iterations, budget)
        budget -= max(used, 1)
        step = 0.0
        for k in range(fs.K):
            step = max(step, abs(n_dl[k] - x_dl[k]), abs(n_ul[k] - x_ul[k]))
        x_dl, x_ul = n_dl, n_ul
        recent.append(f)
        if len(recent) > 10:
            recent.pop(0)
        f = _objective_lists(a, a_e, x_dl, x_ul)
        trace.append((f, step))
        if step <= settings.epsilon and strict:
            status = STATUS_CONVERGED
            iterations = n
            break
        if step <= max(1e-4, 100.0 * settings.epsilon):
            strict = True
    return f, x_dl, x_ul, trace, status, iterations


def _random_feasible_start(fs: FeasibleSet, index: int, seed: int) -> tuple[list, list]:
    rng = np.random.default_rng([abs(int(seed)), int(index)])
    raw_dl = rng.exponential(1.0, fs.K)
    raw_ul = rng.exponential(1.0, fs.K)
    dl = list(raw_dl / raw_dl.sum() * rng.uniform(0.1, 1.0))
    ul = list(raw_ul / raw_ul.sum() * rng.uniform(0.1, 1.0))
    c = [float(x) for x in fs.rate_coeffs]
    return _project_dl(dl, c, fs.r_min), _project_ul(ul, fs.tau_floor)


def _snap_reported(dl: list, ul: list, c: list, r_min: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero out fractions below the reporting threshold.

    Downlink snapping is skipped wholesale if it would break the minimum
    rate; uplink snapping only removes floor-level slivers and is safe.
    """
    ul_s = np.array([0.0 if x < SNAP_THRESHOLD else x for x in ul])
    dl_s = np.array([0.0 if x < SNAP_THRESHOLD else x for x in dl])
    if r_min > 0.0 and _rate_dot(c, list(dl_s)) < r_min - 1e-9:
        dl_s = np.array(dl)
    return dl_s, ul_s


def dca_solve(
    s: ScenarioChannels,
    fs: FeasibleSet,
    settings: DcaSettings = DcaSettings(),
    initial: Allocation | None = None,
) -> DcaResult:
    """Best-of-multistart DCA solve of the secrecy maximization problem.

    The first start is ``initial`` when given, otherwise the deterministic
    initial_allocation; the remaining ``settings.restarts - 1`` starts are
    seeded random feasible points.  The reported trace, iteration count and
    status belong to the best run.  Infeasible rate targets short-circuit
    with status "infeasible".
    """
    if fs.K != s.K:
        raise ValueError("feasible set and scenario disagree on the user count")
    if not check_feasibility(fs):
        return DcaResult(
            allocation=None,
            objective=float("nan"),
            iterations=0,
            status=STATUS_INFEASIBLE,
            trace=(),
            kkt_residual=float("nan"),
        )
    a = [float(x) for x in s.a_user()]
    a_e = [float(x) for x in s.a_eve()]
    c = [float(x) for x in fs.rate_coeffs]
    first = initial if initial is not None else initial_allocation(fs)
    starts = [([float(x) for x in first.tau_dl], [float(x) for x in first.tau_ul])]
    for r in range(1, settings.restarts):
        starts.append(_random_feasible_start(fs, r, settings.seed))
    best = None
    for sd, su in starts:
        run = _dca_single(a, a_e, c, fs, sd, su, settings)
        if best is None or run[0] > best[0]:
            best = run
    f_best, x_dl, x_ul, trace, status, iterations = best
    raw = Allocation(np.array(x_dl), np.array(x_ul))
    kkt = kkt_residual(s, fs, raw)
    dl_s, ul_s = _snap_reported(x_dl, x_ul, c, fs.r_min)
    return DcaResult(
        allocation=Allocation(dl_s, ul_s),
        objective=f_best,
        iterations=iterations,
        status=status,
        trace=tuple(trace),
        kkt_residual=kkt,
        raw_allocation=raw,
    )


def kkt_residual(s: ScenarioChannels, fs: FeasibleSet, alloc: Allocation) -> float:
    """Norm of the objective gradient projected onto the tangent cone.

    Active constraints at the point define a polyhedral tangent cone; by
    Moreau decomposition the projection of the gradient onto it equals the
    gradient minus its nonnegative-least-squares fit on the active outward
    normals.  Near-zero at stationary points; equals the plain gradient
    norm at unconstrained interior points.  Uplink fractions are lifted to
    the solver floor before differentiation.
    """
    if fs.K != s.K or alloc.K != s.K:
        raise ValueError("scenario, feasible set and allocation sizes disagree")
    K = s.K
    tau_dl = np.asarray(alloc.tau_dl, dtype=np.float64)
    tau_ul = np.maximum(np.asarray(alloc.tau_ul, dtype=np.float64), fs.tau_floor)
    from vlcrf.link_budget import _objective_and_gradient_lists

    _, g_dl, g_ul = _objective_and_gradient_lists(
        [float(x) for x in s.a_user()],
        [float(x) for x in s.a_eve()],
        [float(x) for x in tau_dl],
        [float(x) for x in tau_ul],
    )
    grad = np.concatenate([g_dl, g_ul])

    atol = 1e-7
    rows = []
    for k in range(K):
        if tau_dl[k] <= atol:
            row = np.zeros(2 * K)
            row[k] = -1.0
            rows.append(row)
    for k in range(K):
        if tau_ul[k] <= fs.tau_floor + atol:
            row = np.zeros(2 * K)
            row[K + k] = -1.0
            rows.append(row)
    if tau_dl.sum() >= 1.0 - atol:
        row = np.zeros(2 * K)
        row[:K] = 1.0
        rows.append(row)
    if tau_ul.sum() >= 1.0 - atol:
        row = np.zeros(2 * K)
        row[K:] = 1.0
        rows.append(row)
    c = np.asarray(fs.rate_coeffs, dtype=np.float64)
    if float(np.dot(c, tau_dl)) <= fs.r_min + atol * max(1.0, fs.r_min):
        row = np.zeros(2 * K)
        row[:K] = -c
        rows.append(row)
    if not rows:
        return float(np.linalg.norm(grad))
    a_mat = np.array(rows).T  # (2K, m)
    coeffs, _ = nnls(a_mat, grad)
    return float(np.linalg.norm(grad - a_mat @ coeffs))
