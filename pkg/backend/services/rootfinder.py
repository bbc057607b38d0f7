"""
Root Finder Service
Finds the first N positive roots of an oscillatory secular function with a
counting check against the Weyl density and resolution of near-tangent doublets
"""

import logging
import math
import time
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from models.errors import CompletenessError, DomainError, PreconditionError, UsageError
from models.schemas import (
    CountCheckReport,
    ScanDiagnostics,
    ScanPolicy,
    Spectrum,
    SystemConfig,
    Topology,
)
from services.system_model import SecularFunction, secular_function

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# A sampled extremum lies within h/2 of the true one, so the true value differs by at
# most |second difference| / 8; probing below half the second difference leaves 4x margin.
CURVATURE_FACTOR = 0.5

# Grid points evaluated beyond each window edge
WINDOW_MARGIN = 2


class BracketScan(NamedTuple):
    """Sign-change brackets and tangency suspects found on a grid"""
    lower: np.ndarray
    upper: np.ndarray
    suspect_lower: np.ndarray
    suspect_upper: np.ndarray
    suspect_sign: np.ndarray

    @property
    def bracket_count(self) -> int:
        return int(self.lower.size)

    @property
    def suspect_count(self) -> int:
        return int(self.suspect_lower.size)


class RootSet(NamedTuple):
    """Distinct roots with multiplicities and residuals"""
    roots: np.ndarray
    multiplicities: np.ndarray
    residuals: np.ndarray
    probes: int = 0

    @classmethod
    def empty(cls) -> "RootSet":
        return cls(np.empty(0), np.empty(0, dtype=int), np.empty(0), 0)

    @classmethod
    def merge(cls, parts: List["RootSet"]) -> "RootSet":
        if not parts:
            return cls.empty()
        roots = np.concatenate([p.roots for p in parts])
        order = np.argsort(roots, kind="mergesort")
        return cls(
            roots[order],
            np.concatenate([p.multiplicities for p in parts])[order],
            np.concatenate([p.residuals for p in parts])[order],
            sum(p.probes for p in parts),
        )

    def expanded(self) -> np.ndarray:
        return np.repeat(self.roots, self.multiplicities)


class _CountDeficit(Exception):
    """Internal signal for the rescan loop"""

    def __init__(self, report: CountCheckReport):
        super().__init__(f"count check failed at K={report.worst_k}")
        self.report = report


# ============ Grid Detection ============

def _detect(
    k: np.ndarray, values: np.ndarray, threshold: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Locate sign changes and near-zero extrema on a sampled function

    Returns:
        (bracket_left_index, bracket_right_index, run_first_index, run_last_index, run_sign)
        where suspect runs are consecutive local minima of |f| with no sign change around them
    """
    sign = np.sign(values)
    left = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    right = left + 1

    if k.size < 3:
        empty = np.empty(0, dtype=int)
        return left, right, empty, empty, np.empty(0)

    inner = np.arange(1, k.size - 1)
    prev_sign, next_sign = sign[:-2], sign[2:]

    # Exact zeros between opposite signs are simple roots on the grid
    crossing = (sign[1:-1] == 0) & (prev_sign * next_sign < 0)
    left = np.concatenate([left, inner[crossing] - 1])
    right = np.concatenate([right, inner[crossing] + 1])
    order = np.argsort(left, kind="mergesort")
    left, right = left[order], right[order]

    magnitude = np.abs(values)
    curvature = np.abs(values[:-2] - 2.0 * values[1:-1] + values[2:])
    local_min = (magnitude[1:-1] <= magnitude[:-2]) & (magnitude[1:-1] <= magnitude[2:])
    same_side = (prev_sign == next_sign) & (prev_sign != 0) & (
        (sign[1:-1] == prev_sign) | (sign[1:-1] == 0)
    )
    close = (magnitude[1:-1] < threshold) & (
        magnitude[1:-1] <= CURVATURE_FACTOR * curvature
    )
    flagged = inner[local_min & same_side & close]

    if flagged.size == 0:
        empty = np.empty(0, dtype=int)
        return left, right, empty, empty, np.empty(0)

    breaks = np.flatnonzero(np.diff(flagged) > 1)
    first = flagged[np.concatenate([[0], breaks + 1])]
    last = flagged[np.concatenate([breaks, [flagged.size - 1]])]
    return left, right, first, last, sign[first - 1]


def bracket_scan(
    zeta: SecularFunction,
    interval: Tuple[float, float],
    step: float,
    threshold: Optional[float] = None,
) -> BracketScan:
    """
    Sample zeta on a uniform grid and report sign-change brackets and tangency suspects

    Args:
        zeta: Vectorized secular function
        interval: (lower, upper) range of k
        step: Grid step, must be positive
        threshold: |zeta| level below which local minima are probed

    Returns:
        BracketScan; empty when the interval is empty
    """
    if not step > 0:
        raise DomainError(f"scan step must be positive, got {step}")
    lower, upper = interval
    if threshold is None:
        threshold = ScanPolicy().threshold_for(0.0, 0, step)
    if not upper > lower:
        empty = np.empty(0)
        return BracketScan(empty, empty, empty, empty, empty)

    count = int(math.floor((upper - lower) / step + 1e-9)) + 1
    k = lower + step * np.arange(count)
    values = zeta(k)
    left, right, first, last, signs = _detect(k, values, threshold)
    return BracketScan(k[left], k[right], k[first - 1], k[last + 1], signs)


# ============ Refinement ============

def refine_brackets(
    zeta: SecularFunction,
    lower: np.ndarray,
    upper: np.ndarray,
    tolerance: float = 1e-12,
    interpolate: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized bisection of many sign-change brackets at once

    Width target is tolerance absolute below k=1 and relative above. An optional
    secant step on the final bracket accelerates the last digits.

    Returns:
        (roots, residuals)
    """
    lo = np.array(lower, dtype=float)
    hi = np.array(upper, dtype=float)
    if lo.size == 0:
        return np.empty(0), np.empty(0)

    f_lo = zeta(lo)
    f_hi = zeta(hi)
    if np.any(f_lo * f_hi > 0):
        bad = int(np.flatnonzero(f_lo * f_hi > 0)[0])
        raise PreconditionError(
            "bracket has no sign change",
            {"bracket": [float(lo[bad]), float(hi[bad])]},
        )

    exact_lo = f_lo == 0
    exact_hi = f_hi == 0
    hi[exact_lo] = lo[exact_lo]
    lo[exact_hi] = hi[exact_hi]
    f_hi[exact_lo] = 0.0
    f_lo[exact_hi] = 0.0

    target = tolerance * np.maximum(1.0, np.abs(lo))
    for _ in range(200):
        active = np.flatnonzero(hi - lo > target)
        if active.size == 0:
            break
        mid = 0.5 * (lo[active] + hi[active])
        stalled = (mid <= lo[active]) | (mid >= hi[active])
        if np.all(stalled):
            break
        f_mid = zeta(mid)
        zero = f_mid == 0
        move_lo = (np.sign(f_mid) == np.sign(f_lo[active])) & ~zero
        move_hi = ~move_lo & ~zero

        lo[active[move_lo]] = mid[move_lo]
        f_lo[active[move_lo]] = f_mid[move_lo]
        hi[active[move_hi]] = mid[move_hi]
        f_hi[active[move_hi]] = f_mid[move_hi]
        lo[active[zero]] = mid[zero]
        hi[active[zero]] = mid[zero]
        f_lo[active[zero]] = 0.0
        f_hi[active[zero]] = 0.0

    roots = 0.5 * (lo + hi)
    if interpolate:
        denominator = f_hi - f_lo
        usable = denominator != 0
        secant = np.where(usable, lo - f_lo * (hi - lo) / np.where(usable, denominator, 1.0), roots)
        roots = np.clip(secant, lo, hi)
    return roots, np.abs(zeta(roots))


def refine_root(
    zeta: SecularFunction,
    bracket: Tuple[float, float],
    tolerance: float = 1e-12,
    interpolate: bool = True,
) -> float:
    """Refine a single sign-change bracket to a root"""
    roots, _ = refine_brackets(
        zeta, np.array([bracket[0]]), np.array([bracket[1]]), tolerance, interpolate
    )
    return float(roots[0])


def _golden_minimize(
    zeta: SecularFunction,
    lower: np.ndarray,
    upper: np.ndarray,
    sign: np.ndarray,
    tolerance: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized golden-section search for the minimum of sign*zeta on each interval"""
    a = np.array(lower, dtype=float)
    b = np.array(upper, dtype=float)
    width = float(np.max(b - a))
    target = tolerance * max(1.0, float(np.max(np.abs(b))))
    iterations = max(1, int(math.ceil(math.log(max(width / target, 1.0)) / -math.log(INV_PHI))) + 1)

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    f_c = sign * zeta(c)
    f_d = sign * zeta(d)
    for _ in range(iterations):
        shrink_right = f_c < f_d
        a = np.where(shrink_right, a, c)
        b = np.where(shrink_right, d, b)
        probe = np.where(shrink_right, b - INV_PHI * (b - a), a + INV_PHI * (b - a))
        f_probe = sign * zeta(probe)
        c, d, f_c, f_d = (
            np.where(shrink_right, probe, d),
            np.where(shrink_right, c, probe),
            np.where(shrink_right, f_probe, f_d),
            np.where(shrink_right, f_c, f_probe),
        )

    x = np.where(f_c < f_d, c, d)
    return x, sign * zeta(x)


def _resolve_tangencies(
    zeta: SecularFunction,
    lower: np.ndarray,
    upper: np.ndarray,
    sign: np.ndarray,
    policy: ScanPolicy,
) -> RootSet:
    """Vectorized form of resolve_tangency over all suspects of a window"""
    if lower.size == 0:
        return RootSet.empty()

    x, extremum = _golden_minimize(zeta, lower, upper, sign, policy.refine_tolerance)
    signed = extremum
    crossing = signed < -policy.double_root_tolerance
    touching = np.abs(signed) <= policy.double_root_tolerance

    split_lo = np.concatenate([lower[crossing], x[crossing]])
    split_hi = np.concatenate([x[crossing], upper[crossing]])
    split_roots, split_res = refine_brackets(
        zeta, split_lo, split_hi, policy.refine_tolerance, policy.interpolate_final
    )

    roots = np.concatenate([split_roots, x[touching]])
    multiplicities = np.concatenate(
        [np.ones(split_roots.size, dtype=int), np.full(int(touching.sum()), 2, dtype=int)]
    )
    residuals = np.concatenate([split_res, np.abs(extremum[touching])])
    order = np.argsort(roots, kind="mergesort")
    return RootSet(roots[order], multiplicities[order], residuals[order], int(lower.size))


def resolve_tangency(
    zeta: SecularFunction,
    suspect: Tuple[float, float],
    policy: Optional[ScanPolicy] = None,
) -> List[Tuple[float, int]]:
    """
    Decide whether a near-zero dip of zeta hides zero, one double, or two simple roots

    Args:
        zeta: Vectorized secular function
        suspect: Interval around a local minimum of |zeta| without a sign change
        policy: Tolerances (defaults apply when omitted)

    Returns:
        List of (root, multiplicity): empty, one double root, or two simple roots
    """
    policy = policy or ScanPolicy()
    lower, upper = np.array([suspect[0]]), np.array([suspect[1]])
    outside = zeta(np.array([suspect[0], suspect[1]]))
    reference = outside[0] if outside[0] != 0 else outside[1]
    sign = np.array([np.sign(reference) or 1.0])
    found = _resolve_tangencies(zeta, lower, upper, sign, policy)
    return [(float(r), int(m)) for r, m in zip(found.roots, found.multiplicities)]


# ============ Window Scanning ============

def _scan_window(
    config: SystemConfig,
    offset: float,
    step: float,
    first: int,
    last: int,
    threshold: float,
    policy: ScanPolicy,
    origin: bool = False,
) -> RootSet:
    """
    Scan grid indices [first, last] of k_i = offset + i*step; brackets are owned by their left index.

    With origin set, a sign change between k=0 and the first grid point is also bracketed
    (a weakly perturbed ground state can sit below offset).
    """
    zeta = secular_function(config)
    start = max(0, first - WINDOW_MARGIN)
    indices = np.arange(start, last + WINDOW_MARGIN + 1)
    k = offset + step * indices
    values = zeta(k)

    left, right, run_first, run_last, run_sign = _detect(k, values, threshold)
    owned = (indices[left] >= first) & (indices[left] < last)
    lower, upper = k[left[owned]], k[right[owned]]
    if origin and start == 0 and float(zeta(np.zeros(1))[0]) * values[0] < 0:
        lower = np.concatenate([[0.0], lower])
        upper = np.concatenate([[k[0]], upper])
    simple_roots, simple_res = refine_brackets(
        zeta, lower, upper, policy.refine_tolerance, policy.interpolate_final
    )

    owned_runs = (indices[run_first] >= first) & (indices[run_first] < last)
    tangent = _resolve_tangencies(
        zeta,
        k[run_first[owned_runs] - 1],
        k[run_last[owned_runs] + 1],
        run_sign[owned_runs],
        policy,
    )
    simple = RootSet(simple_roots, np.ones(simple_roots.size, dtype=int), simple_res, 0)
    merged = RootSet.merge([simple, tangent])
    logger.debug(
        f"window k=[{k[0]:.3f}, {k[-1]:.3f}]: {simple_roots.size} simple, "
        f"{tangent.roots.size} from {tangent.probes} tangency probes"
    )
    return merged


def _scan_interval(
    config: SystemConfig,
    lower: float,
    upper: float,
    step: float,
    threshold: float,
    policy: ScanPolicy,
) -> RootSet:
    count = int(math.ceil((upper - lower) / step))
    return _scan_window(config, lower, step, 0, count, threshold, policy)


# ============ Solver ============

class SpectrumSolver:
    """Service that computes certified spectra of point-interaction systems"""

    def __init__(self, policy: Optional[ScanPolicy] = None, threads: int = 1):
        """
        Initialize the solver

        Args:
            policy: Scan policy; defaults derive the step and threshold from the system
            threads: Worker count for the window map; results never depend on it
        """
        self.policy = policy or ScanPolicy()
        self.threads = max(1, int(threads))

    def find_spectrum(
        self,
        config: SystemConfig,
        count: Optional[int] = None,
        k_max: Optional[float] = None,
    ) -> Spectrum:
        """
        Find all positive roots up to k_max, or the first `count` roots

        Args:
            config: System definition
            count: Number of roots (with multiplicity) to return
            k_max: Upper end of the covered k range

        Returns:
            Spectrum with the counting check satisfied

        Raises:
            CompletenessError: counting check still failing after max_rescans
        """
        if count is None and k_max is None:
            raise UsageError("either count or k_max is required")
        if count is not None and count < 1:
            raise DomainError(f"root count must be at least 1, got {count}")

        started = time.time()
        policy = self.policy
        step = policy.step_for(config.n)
        threshold = policy.threshold_for(config.beta, config.n, step)
        bound = config.n + policy.weyl_slack
        drop_ground = (
            config.topology == Topology.CIRCLE
            and not config.is_free
            and not policy.include_ground_state
        )
        if k_max is None:
            k_max = count / 2.0 + bound / 2.0 + 1.0

        offset = 0.5 * step
        total_points = int(math.ceil((k_max - offset) / step)) + 1
        per_window = max(16, int(round(policy.window_width / step)))
        windows = [
            (start, min(start + per_window, total_points - 1))
            for start in range(0, total_points - 1, per_window)
        ]
        logger.info(
            f"Scanning {config.topology.value} n={config.n} alpha={config.alpha} up to k={k_max:.2f} "
            f"(step={step:.2e}, {len(windows)} windows, threads={self.threads})"
        )

        tasks = (
            delayed(_scan_window)(config, offset, step, first, last, threshold, policy, first == 0)
            for first, last in windows
        )
        if self.threads > 1:
            parts = Parallel(n_jobs=self.threads, prefer="threads")(tasks)
        else:
            parts = [fn(*args, **kwargs) for fn, args, kwargs in tasks]
        found = RootSet.merge(parts)
        probes = found.probes

        rescans = 0
        report: Optional[CountCheckReport] = None
        retrying = Retrying(
            stop=stop_after_attempt(policy.max_rescans + 1),
            retry=retry_if_exception_type(_CountDeficit),
            reraise=True,
        )
        try:
            for attempt in retrying:
                with attempt:
                    rescans = attempt.retry_state.attempt_number - 1
                    if rescans and report is not None:
                        found = self._rescan(
                            config, found, report, step / 4 ** rescans, threshold, drop_ground
                        )
                    report = self.count_check(found, k_max, bound, drop_ground)
                    if not report.passed:
                        raise _CountDeficit(report)
        except _CountDeficit as exc:
            worst = exc.report.worst_k or 0
            raise CompletenessError(
                f"root count deviates from 2K by {exc.report.max_deviation} > {bound} "
                f"after {policy.max_rescans} rescans",
                suspect_interval=(float(max(worst - 1, 0)), float(worst)),
                details={"count_check": exc.report.model_dump()},
            ) from exc

        ground_state = None
        if drop_ground and found.roots.size:
            ground_state = float(found.roots[0])
            found = self._drop_first(found)

        expanded = found.expanded()
        if count is not None:
            if expanded.size < count:
                raise CompletenessError(
                    f"found {expanded.size} roots below k={k_max:.2f}, {count} requested",
                    suspect_interval=(0.0, float(k_max)),
                )
            found = self._truncate(found, count)
            expanded = found.expanded()

        diagnostics = ScanDiagnostics(
            base_step=step,
            tangency_threshold=threshold,
            k_max=float(k_max),
            window_count=len(windows),
            rescans=rescans,
            tangency_probes=probes,
            double_roots=int(np.sum(found.multiplicities == 2)),
            max_residual=float(found.residuals.max()) if found.residuals.size else 0.0,
            ground_state=ground_state,
            count_check=report,
        )
        logger.info(
            f"Found {expanded.size} roots in {time.time() - started:.2f}s "
            f"(rescans={rescans}, max |N(K)-2K|={report.max_deviation})"
        )
        return Spectrum(
            config=config,
            roots=expanded,
            distinct_roots=found.roots,
            multiplicities=found.multiplicities,
            residuals=found.residuals,
            diagnostics=diagnostics,
        )

    @staticmethod
    def count_check(
        found: RootSet, k_max: float, bound: int, drop_ground: bool = False
    ) -> CountCheckReport:
        """Check |N(K) - 2K| <= bound at every integer K <= k_max"""
        expanded = found.expanded()
        if drop_ground and expanded.size:
            expanded = expanded[1:]
        top = int(math.floor(k_max))
        if top < 1:
            return CountCheckReport(bound=bound, k_checked=top, max_deviation=0, passed=True)
        grid = np.arange(1, top + 1)
        deviation = np.searchsorted(expanded, grid, side="right") - 2 * grid
        worst = int(np.argmax(np.abs(deviation)))
        max_deviation = int(abs(deviation[worst]))
        passed = max_deviation <= bound
        unresolved = [] if passed else [(float(grid[worst] - 1), float(grid[worst]))]
        return CountCheckReport(
            bound=bound,
            k_checked=top,
            max_deviation=max_deviation,
            worst_k=int(grid[worst]),
            passed=passed,
            unresolved_windows=unresolved,
        )

    def _rescan(
        self,
        config: SystemConfig,
        found: RootSet,
        report: CountCheckReport,
        step: float,
        threshold: float,
        drop_ground: bool,
    ) -> RootSet:
        """Rescan unit windows up to the failing K whose root count points the wrong way"""
        expanded = found.expanded()
        if drop_ground and expanded.size:
            expanded = expanded[1:]
        worst = report.worst_k or 0
        edges = np.arange(0, worst + 1)
        per_window = np.diff(np.searchsorted(expanded, edges, side="left"))
        deficit = np.searchsorted(expanded, worst, side="right") < 2 * worst
        suspects = np.flatnonzero(per_window < 2 if deficit else per_window > 2)
        logger.warning(
            f"Count check failed at K={worst} (deviation {report.max_deviation}); "
            f"rescanning {suspects.size} unit windows at step {step:.2e}"
        )

        parts = []
        keep = np.ones(found.roots.size, dtype=bool)
        for m in suspects:
            lower, upper = float(m), float(m + 1)
            # the ground state, when present, lies in window 0 and is found again there
            keep &= ~((found.roots >= lower) & (found.roots < upper))
            # k = 0 is a trivial root (segment) or a free double root (circle), never a level
            fresh = _scan_interval(config, max(lower - step, 0.0), upper + step, step, threshold, self.policy)
            mask = (fresh.roots >= lower) & (fresh.roots < upper)
            parts.append(
                RootSet(fresh.roots[mask], fresh.multiplicities[mask], fresh.residuals[mask], fresh.probes)
            )
        kept = RootSet(found.roots[keep], found.multiplicities[keep], found.residuals[keep], found.probes)
        return RootSet.merge([kept] + parts)

    @staticmethod
    def _drop_first(found: RootSet) -> RootSet:
        multiplicities = found.multiplicities.copy()
        if multiplicities[0] > 1:
            multiplicities[0] -= 1
            return RootSet(found.roots, multiplicities, found.residuals, found.probes)
        return RootSet(found.roots[1:], multiplicities[1:], found.residuals[1:], found.probes)

    @staticmethod
    def _truncate(found: RootSet, count: int) -> RootSet:
        cumulative = np.cumsum(found.multiplicities)
        last = int(np.searchsorted(cumulative, count, side="left"))
        multiplicities = found.multiplicities[: last + 1].copy()
        multiplicities[-1] -= int(cumulative[last] - count)
        return RootSet(found.roots[: last + 1], multiplicities, found.residuals[: last + 1], found.probes)


def find_spectrum(
    config: SystemConfig,
    count: Optional[int] = None,
    k_max: Optional[float] = None,
    policy: Optional[ScanPolicy] = None,
    threads: int = 1,
) -> Spectrum:
    """Functional shortcut for SpectrumSolver(policy, threads).find_spectrum(...)"""
    return SpectrumSolver(policy, threads).find_spectrum(config, count=count, k_max=k_max)
