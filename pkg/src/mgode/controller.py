"""Step-size selection from stability factors and residual profiles.

One adaptation round solves the problem, solves its dual, assembles the error
report, and checks the per-component-max form of the bound against the
tolerance; if it misses, each component's steps are re-chosen to equalize the
local contributions, and the loop repeats on the new partition.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dual import DualSpec, dual_partition_for, solve_dual
from .estimator import ErrorReport, StabilityFactors, estimate, interp_constant
from .partition import Partition
from .solver import OdeProblem, SolveSettings, Trajectory, solve
from .tableau import MCG


@dataclass
class AdaptSettings:
    """Controls of the solve/estimate/refine loop."""

    tol: float
    theta: float = 0.5
    max_rounds: int = 10
    k_min: float = 1e-8
    k_max: float = 1.0
    dual_order_increment: int = 1
    dual_refine: int = 1
    phi_T: np.ndarray | None = None
    s_points: int = 3
    solver: SolveSettings = field(default_factory=SolveSettings)

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tol!r}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"safety factor must lie in (0, 1], got {self.theta!r}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds!r}")
        if not 0.0 < self.k_min <= self.k_max:
            raise ValueError("step bounds must satisfy 0 < k_min <= k_max")


class _StepFunction:
    """Piecewise-constant step lookup over one component's old intervals."""

    def __init__(self, starts: np.ndarray, steps: np.ndarray):
        self.starts = starts
        self.steps = steps

    def __call__(self, t: float) -> float:
        idx = int(np.searchsorted(self.starts, t, side="right")) - 1
        idx = min(max(idx, 0), len(self.steps) - 1)
        return float(self.steps[idx])


def propose_steps(report: ErrorReport, factors: StabilityFactors,
                  settings: AdaptSettings) -> list[_StepFunction]:
    """New per-component step-size functions from the bound's local form.

    Each component receives the budget theta * tol / N; on every old interval
    the step solving  S_i * C_q * k^p * r = budget  is proposed (p = q for the
    continuous family, q + 1 with the jump-augmented residual for the
    discontinuous one), clamped to the configured bounds.
    """
    n = len(report.methods)
    budget = settings.theta * settings.tol / n
    fns = []
    degenerate = []
    for i in range(n):
        method = report.methods[i]
        qs = report.orders[i]
        res = report.rbar[i] if method != MCG else report.r[i]
        s_i = float(factors.s_deriv[i])
        new_steps = np.empty(len(qs))
        for j, q in enumerate(qs):
            p = int(q) if method == MCG else int(q) + 1
            cq = interp_constant(int(q) - 1 if method == MCG else int(q))
            denom = s_i * cq * float(res[j])
            if denom <= 0.0 or not np.isfinite(denom):
                new_steps[j] = settings.k_max
                degenerate.append(i)
            else:
                new_steps[j] = (budget / denom) ** (1.0 / p)
        np.clip(new_steps, settings.k_min, settings.k_max, out=new_steps)
        fns.append(_StepFunction(report.interval_starts[i], new_steps))
    if degenerate:
        warnings.warn(
            "vanishing stability factor or residual for component(s) "
            f"{sorted(set(degenerate))}; steps clamp to the maximum bound",
            RuntimeWarning, stacklevel=2)
    return fns


def synchronized_partition(step_fns: Sequence, orders: Sequence[int], T: float,
                           methods: Sequence[str], k_min: float,
                           k_max: float, max_ratio: int = 32) -> Partition:
    """Build a partition from per-component step functions with regular
    synchronization.

    The slowest component's proposed step sets each slab window; every other
    component subdivides the window into 2^m equal intervals to meet its own
    target.  This keeps every slab's interval count bounded (the sweep count
    of the slab solver grows with the intervals a sweep must propagate
    across), at the cost of steps up to a factor 2 below their proposals.
    When proposals spread by more than ``max_ratio``, the window shrinks so
    no component packs more than that many intervals into one slab; the
    slowest components then step below their proposals.
    """
    n = len(step_fns)
    windows = [0.0]
    t = 0.0
    while True:
        props = [min(max(float(fn(t)), k_min), k_max) for fn in step_fns]
        k_slab = min(max(props), max_ratio * min(props))
        remaining = T - t
        if remaining <= 1.5 * k_slab:
            windows.append(T)
            break
        t += k_slab
        windows.append(t)
    windows = np.asarray(windows)

    breakpoints = []
    for i in range(n):
        pts = [0.0]
        for a, b in zip(windows[:-1], windows[1:]):
            want = max(float(step_fns[i](float(a))), k_min)
            m = max(0, int(np.ceil(np.log2(max((b - a) / want, 1.0)))))
            parts = 1 << m
            sub = a + (b - a) * np.arange(1, parts + 1) / parts
            sub[-1] = b
            pts.extend(float(x) for x in sub)
        pts[-1] = T
        breakpoints.append(np.asarray(pts))
    order_arrays = tuple(
        np.full(len(bp) - 1, int(orders[i]), dtype=int)
        for i, bp in enumerate(breakpoints)
    )
    return Partition(T=float(T), breakpoints=tuple(breakpoints),
                     orders=order_arrays)


@dataclass
class AdaptResult:
    trajectory: Trajectory
    report: ErrorReport
    partition: Partition
    rounds: int
    met: bool
    log: list[dict]

    def log_lines(self) -> list[str]:
        return [json.dumps(entry) for entry in self.log]


def _default_phi_T(n: int) -> np.ndarray:
    return np.full(n, 1.0 / np.sqrt(n))


def adapt(problem: OdeProblem, partition: Partition,
          settings: AdaptSettings) -> AdaptResult:
    """Iterate solve -> dual solve -> estimate until the per-component-max
    bound satisfies the tolerance or the round budget runs out.

    The returned result flags whether the criterion was met; an exhausted
    budget still returns the last round's artifacts.
    """
    phi_T = settings.phi_T
    if phi_T is None:
        phi_T = _default_phi_T(problem.dimension)
    log: list[dict] = []
    orders = None
    met = False
    traj = report = None
    rounds = 0
    for rounds in range(1, settings.max_rounds + 1):
        traj = solve(problem, partition, settings.solver)
        dual_spec = DualSpec(problem=problem, primal=traj, phi_T=phi_T,
                             s_points=settings.s_points)
        dual_part = dual_partition_for(
            partition, settings.dual_order_increment, settings.dual_refine)
        dual = solve_dual(dual_spec, dual_part, settings.solver)
        report = estimate(problem, traj, dual)
        bound = report.explicit_total
        log.append({
            "round": rounds,
            "bound": bound,
            "tol": settings.tol,
            "total_intervals": partition.total_intervals,
            "per_component_max_k": [
                float(np.max(partition.steps(i)))
                for i in range(partition.n_components)
            ],
        })
        if bound <= settings.tol:
            met = True
            break
        if rounds == settings.max_rounds:
            break
        if orders is None:
            # order assignment is fixed per run: one order per component
            orders = [int(partition.orders[i][0])
                      for i in range(partition.n_components)]
        step_fns = propose_steps(report, report.factors, settings)
        partition = synchronized_partition(step_fns, orders, problem.T,
                                           problem.methods, settings.k_min,
                                           settings.k_max)
    return AdaptResult(trajectory=traj, report=report, partition=partition,
                       rounds=rounds, met=met, log=log)
