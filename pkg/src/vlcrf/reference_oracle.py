"""Brute-force grid oracle for validating solver output at K <= 2.

Exhaustively evaluates the secrecy objective on a feasibility-filtered
grid over the time-slot box, then refines locally around the incumbent.
For K = 2 the per-user value tables are combined across the downlink and
uplink pair sets, which keeps the sweep at millions rather than billions
of evaluations.  The oracle is one-sided: it produces a certified feasible
lower bound on the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vlcrf.dc_solver import DcaResult, FeasibleSet, check_feasibility
from vlcrf.link_budget import LN2, Allocation, ScenarioChannels


@dataclass(frozen=True)
class GridSpec:
    resolution: int = 256        # points per axis per round
    refine_rounds: int = 3       # local refinement passes after the global pass
    refine_shrink: float = 0.2   # window shrink factor per round

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")
        if self.refine_rounds < 0:
            raise ValueError("refine_rounds must be >= 0")
        if not 0.0 < self.refine_shrink < 1.0:
            raise ValueError("refine_shrink must lie in (0, 1)")


@dataclass(frozen=True)
class OracleComparison:
    passed: bool
    gap: float
    dca_objective: float
    oracle_objective: float
    rel_tol: float


def _pair_table(a: float, a_e: float, dl_levels: np.ndarray, ul_levels: np.ndarray) -> np.ndarray:
    """Per-user objective table over (dl level, ul level), tau_ul = 0 extended."""
    leftover = 1.0 - dl_levels[:, None]
    t = ul_levels[None, :]
    safe_t = np.where(t > 0.0, t, 1.0)
    u = np.where(t > 0.0, t * np.log1p(a * leftover / safe_t) / LN2, 0.0)
    v = np.where(t > 0.0, t * np.log1p(a_e * leftover / safe_t) / LN2, 0.0)
    return u - v


def _levels(lo: float, hi: float, n: int, extra=()) -> np.ndarray:
    pts = np.linspace(lo, hi, n)
    extras = [e for e in extra if lo <= e <= hi]
    if extras:
        pts = np.unique(np.concatenate([pts, np.array(extras)]))
    return pts


def _search_k1(s, fs, spec, windows):
    a = float(s.a_user()[0])
    a_e = float(s.a_eve()[0])
    c = float(fs.rate_coeffs[0])
    (dlo, dhi), (ulo, uhi) = windows
    boundary = (fs.r_min / c,) if (fs.r_min > 0.0 and c > 0.0) else ()
    dl = _levels(dlo, dhi, spec.resolution, boundary)
    ul = _levels(ulo, uhi, spec.resolution)
    if fs.r_min > 0.0:
        dl = dl[c * dl >= fs.r_min]
    if dl.size == 0 or ul.size == 0:
        return None
    table = _pair_table(a, a_e, dl, ul)
    i, j = np.unravel_index(np.argmax(table), table.shape)
    return float(table[i, j]), (float(dl[i]),), (float(ul[j]),)


def _feasible_dl_pairs(c, r_min, d1, d2):
    s1 = d1[:, None] + d2[None, :]
    rate = c[0] * d1[:, None] + c[1] * d2[None, :]
    ok = (s1 <= 1.0) & (rate >= r_min)
    i1, i2 = np.nonzero(ok)
    return i1, i2


def _search_k2(s, fs, spec, windows):
    a = s.a_user()
    a_e = s.a_eve()
    c = np.asarray(fs.rate_coeffs, dtype=np.float64)
    (d1lo, d1hi), (d2lo, d2hi), (u1lo, u1hi), (u2lo, u2hi) = windows
    d1 = _levels(d1lo, d1hi, spec.resolution)
    d2 = _levels(d2lo, d2hi, spec.resolution)
    if fs.r_min > 0.0:
        # put the exact rate boundary in the candidate set along each axis
        if c[1] > 0.0:
            cand = (fs.r_min - c[0] * d1) / c[1]
            d2 = np.unique(np.concatenate([d2, cand[(cand >= d2lo) & (cand <= d2hi)]]))
        if c[0] > 0.0:
            cand = (fs.r_min - c[1] * d2) / c[0]
            d1 = np.unique(np.concatenate([d1, cand[(cand >= d1lo) & (cand <= d1hi)]]))
    u1 = _levels(u1lo, u1hi, spec.resolution)
    u2 = _levels(u2lo, u2hi, spec.resolution)

    i1, i2 = _feasible_dl_pairs(c, fs.r_min, d1, d2)
    if i1.size == 0:
        return None
    su = u1[:, None] + u2[None, :]
    j1, j2 = np.nonzero(su <= 1.0)
    if j1.size == 0:
        return None

    w1 = _pair_table(float(a[0]), float(a_e[0]), d1, u1)
    w2 = _pair_table(float(a[1]), float(a_e[1]), d2, u2)
    # combine the per-user tables over the two feasible pair sets in chunks
    # so the cross matrix never exceeds a few million entries at once
    best = -np.inf
    best_p = best_q = 0
    chunk = max(1, 2_000_000 // max(1, j1.size))
    for lo in range(0, i1.size, chunk):
        sl = slice(lo, lo + chunk)
        block = w1[i1[sl][:, None], j1[None, :]] + w2[i2[sl][:, None], j2[None, :]]
        p, q = np.unravel_index(np.argmax(block), block.shape)
        if block[p, q] > best:
            best = float(block[p, q])
            best_p, best_q = lo + p, q
    dl = (float(d1[i1[best_p]]), float(d2[i2[best_p]]))
    ul = (float(u1[j1[best_q]]), float(u2[j2[best_q]]))
    return best, dl, ul


def grid_search(s: ScenarioChannels, fs: FeasibleSet, spec: GridSpec = GridSpec()):
    """Best feasible grid point, refined locally; returns (Allocation, objective).

    Supports K in {1, 2}: the search space is the raw polytope (uplink
    fractions may be exactly 0 through the continuous objective extension),
    so the oracle value is a true lower bound on the optimum independent of
    the solver's floor.
    """
    if s.K > 2:
        raise ValueError("grid oracle supports K <= 2 only")
    if fs.K != s.K:
        raise ValueError("feasible set and scenario disagree on the user count")
    if not check_feasibility(fs):
        raise ValueError("rate target is infeasible; nothing to search")

    search = _search_k1 if s.K == 1 else _search_k2
    windows = [(0.0, 1.0)] * (2 * s.K)
    best_val = None
    best_dl = best_ul = None
    width = 1.0
    for round_idx in range(spec.refine_rounds + 1):
        found = search(s, fs, spec, windows)
        if found is not None:
            val, dl, ul = found
            if best_val is None or val > best_val:
                best_val, best_dl, best_ul = val, dl, ul
        if best_val is None:
            raise RuntimeError("no feasible grid point found despite feasible target")
        width *= spec.refine_shrink
        center = list(best_dl) + list(best_ul)
        windows = [
            (max(0.0, cen - width / 2.0), min(1.0, cen + width / 2.0)) for cen in center
        ]
    alloc = Allocation(np.array(best_dl), np.array(best_ul))
    return alloc, best_val


def compare(dca: DcaResult, oracle_objective: float, rel_tol: float = 1e-3) -> OracleComparison:
    """One-sided check: the solver may beat the grid but not trail it.

    Passes iff dca.objective >= oracle - rel_tol * max(1, |oracle|); the
    reported gap is oracle - dca (positive when the solver trails).
    """
    gap = oracle_objective - dca.objective
    slack = rel_tol * max(1.0, abs(oracle_objective))
    return OracleComparison(
        passed=bool(dca.objective >= oracle_objective - slack),
        gap=float(gap),
        dca_objective=float(dca.objective),
        oracle_objective=float(oracle_objective),
        rel_tol=float(rel_tol),
    )
