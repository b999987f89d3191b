"""Slab-wise solution of the multirate Galerkin collocation equations.

Each time-slab couples the nodal values of all components between two
synchronized levels.  The nonlinear system is solved by a damped Jacobi-style
fixed-point sweep: every interval update reads only the previous sweep's
coefficients, which makes the iteration deterministic and embarrassingly
parallel within a sweep.  Trajectories are piecewise polynomials in a nodal
Lagrange representation; continuous-family components share their interval
end values bitwise, discontinuous-family components carry genuine one-sided
limits at every breakpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .partition import Partition, TimeSlab, build_slabs
from .tableau import (
    MCG,
    MDG,
    METHODS,
    differentiation_matrix,
    lagrange_matrix,
    min_order,
    scheme_rule,
    tableau,
)


class SolverError(RuntimeError):
    """Base class for failures during a solve."""


class NonFiniteRHS(SolverError):
    """The right-hand side produced a non-finite value."""


class ConvergenceFailure(SolverError):
    """A slab's fixed-point iteration did not reach tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveSettings:
    """Fixed-point iteration controls for the slab solver."""

    tolerance: float = 1e-10
    max_sweeps: int = 500
    damping: float = 1.0
    quad_depth: int = 0

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance!r}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps!r}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping!r}")
        if self.quad_depth < 0:
            raise ValueError(f"quad_depth must be >= 0, got {self.quad_depth!r}")


@dataclass
class OdeProblem:
    """An initial value problem u' = f(u, t), u(0) = u0 on (0, T].

    ``methods`` tags every component with its scheme family.  ``vectorized``
    declares that ``rhs`` (and ``jacobian``) accept stacked states of shape
    (N, P) together with a time array of shape (P,).
    """

    rhs: Callable
    u0: np.ndarray
    T: float
    jacobian: Callable | None = None
    methods: Sequence[str] | str = MCG
    vectorized: bool = False
    name: str = ""

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float).reshape(-1)
        if not self.T > 0.0:
            raise ValueError(f"horizon must be positive, got {self.T!r}")
        n = len(self.u0)
        if isinstance(self.methods, str):
            self.methods = (self.methods,) * n
        else:
            self.methods = tuple(self.methods)
        if len(self.methods) != n:
            raise ValueError(
                f"{len(self.methods)} method tags for {n} components"
            )
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method tag {m!r}")

    @property
    def dimension(self) -> int:
        return len(self.u0)

    def eval_rhs(self, U: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Right-hand side at stacked states U (N, P) and times t (P,)."""
        if self.vectorized:
            F = np.asarray(self.rhs(U, t), dtype=float)
            if F.shape != U.shape:
                raise SolverError(
                    f"vectorized rhs returned shape {F.shape}, expected {U.shape}"
                )
            return F
        F = np.empty_like(U)
        for p in range(U.shape[1]):
            F[:, p] = np.asarray(self.rhs(U[:, p], float(t[p])), dtype=float)
        return F

    def jacobian_or_fd(self) -> Callable:
        """The analytic Jacobian, or a central finite-difference fallback with
        step cbrt(eps) * (1 + |u_i|)."""
        if self.jacobian is not None:
            return self.jacobian
        rhs = self.rhs
        base = np.cbrt(np.finfo(float).eps)

        def fd_jacobian(u, t):
            u = np.asarray(u, dtype=float)
            n = len(u)
            J = np.empty((n, n))
            for idx in range(n):
                h = base * (1.0 + abs(u[idx]))
                up = u.copy()
                um = u.copy()
                up[idx] += h
                um[idx] -= h
                J[:, idx] = (np.asarray(rhs(up, t)) - np.asarray(rhs(um, t))) / (2.0 * h)
            return J

        return fd_jacobian


@dataclass(frozen=True)
class SlabReport:
    index: int
    t_start: float
    t_end: float
    sweeps: int
    final_increment: float
    converged: bool


@dataclass(frozen=True)
class SolveReport:
    slabs: tuple[SlabReport, ...]

    @property
    def total_sweeps(self) -> int:
        return sum(s.sweeps for s in self.slabs)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.slabs)

    @property
    def max_increment(self) -> float:
        return max((s.final_increment for s in self.slabs), default=0.0)


@lru_cache(maxsize=None)
def _basis_nodes(method: str, q: int) -> np.ndarray:
    return tableau(method, q).nodes.nodes


@lru_cache(maxsize=None)
def _diff_matrix(method: str, q: int) -> np.ndarray:
    return differentiation_matrix(_basis_nodes(method, q))


class Trajectory:
    """Piecewise-polynomial solution over a partition.

    Nodal coefficients are stored per component and interval; evaluation is by
    Lagrange interpolation on the scheme nodes.  Instances are immutable once
    a solve has produced them.
    """

    def __init__(self, partition: Partition, methods: Sequence[str],
                 u0: np.ndarray, coeffs, report: SolveReport | None = None,
                 settings: SolveSettings | None = None):
        self.partition = partition
        self.methods = tuple(methods)
        self.u0 = np.asarray(u0, dtype=float).reshape(-1)
        self.u0.setflags(write=False)
        self._coeffs = tuple(tuple(arr for arr in comp) for comp in coeffs)
        for comp in self._coeffs:
            for arr in comp:
                arr.setflags(write=False)
        self.report = report
        self.settings = settings

    @property
    def dimension(self) -> int:
        return len(self.methods)

    @property
    def T(self) -> float:
        return self.partition.T

    def order(self, i: int, j: int) -> int:
        return int(self.partition.orders[i][j])

    def coefficients(self, i: int, j: int) -> np.ndarray:
        """Nodal values of component i on its interval j (length q_ij + 1)."""
        return self._coeffs[i][j]

    def node_times(self, i: int, j: int) -> np.ndarray:
        t0, t1 = self.partition.span(i, j)
        return t0 + (t1 - t0) * _basis_nodes(self.methods[i], self.order(i, j))

    def incoming_value(self, i: int, j: int) -> float:
        """Left limit of component i at the start of its interval j."""
        if j == 0:
            return float(self.u0[i])
        return float(self._coeffs[i][j - 1][-1])

    def interval_values(self, i: int, j: int, s) -> np.ndarray:
        """Component i's polynomial on interval j at local coordinates s."""
        L = lagrange_matrix(_basis_nodes(self.methods[i], self.order(i, j)), s)
        return self._coeffs[i][j] @ L

    def interval_derivative(self, i: int, j: int, s, order: int = 1) -> np.ndarray:
        """Time derivative of the local polynomial at local coordinates s."""
        q = self.order(i, j)
        method = self.methods[i]
        k = self.partition.step(i, j)
        vals = self._coeffs[i][j]
        D = _diff_matrix(method, q)
        for _ in range(order):
            vals = D @ vals
        L = lagrange_matrix(_basis_nodes(method, q), s)
        return (vals @ L) / k**order

    def value(self, i: int, t: float, side: str = "left") -> float:
        """Component i at time t with the requested one-sided convention."""
        if side == "left" and t == 0.0:
            return float(self.u0[i])
        j = self.partition.interval_at(i, t, side)
        t0, t1 = self.partition.span(i, j)
        s = (t - t0) / (t1 - t0)
        return float(self.interval_values(i, j, s)[0])

    def state(self, t: float, side: str = "left") -> np.ndarray:
        """Full solution vector at time t."""
        return np.array([self.value(i, t, side) for i in range(self.dimension)])

    def sample_states(self, ts, side: str = "left") -> np.ndarray:
        """Solution matrix (N, P) at an array of times, grouped per interval
        for speed.  side="left" resolves breakpoints to the interval ending
        there (with the incoming value at t = 0)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        U = np.empty((self.dimension, len(ts)))
        for i in range(self.dimension):
            bp = self.partition.breakpoints[i]
            if side == "left":
                j = np.searchsorted(bp, ts, side="left") - 1
            else:
                j = np.searchsorted(bp, ts, side="right") - 1
            j = np.clip(j, 0, self.partition.n_intervals(i) - 1)
            for jc in np.unique(j):
                sel = j == jc
                t0, t1 = self.partition.span(i, int(jc))
                s = (ts[sel] - t0) / (t1 - t0)
                U[i, sel] = self.interval_values(i, int(jc), s)
            if side == "left":
                at_zero = ts == 0.0
                if np.any(at_zero):
                    U[i, at_zero] = self.u0[i]
        return U

    def end_state(self) -> np.ndarray:
        """Left-limit solution vector at the horizon T."""
        return np.array([float(self._coeffs[i][-1][-1]) for i in range(self.dimension)])

    def jump(self, i: int, j: int) -> float:
        """Right minus left limit of component i at breakpoint t_{i,j},
        0 <= j < M_i.  Identically zero for continuous-family components."""
        M = self.partition.n_intervals(i)
        if not 0 <= j < M:
            raise ValueError(f"breakpoint index {j} outside [0, {M})")
        if self.methods[i] == MCG:
            return 0.0
        left = self.incoming_value(i, j)
        right = float(self.interval_values(i, j, 0.0)[0])
        return right - left


def jump(traj: Trajectory, i: int, j: int) -> float:
    """Jump of component i at breakpoint t_{i,j} (see Trajectory.jump)."""
    return traj.jump(i, j)


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------

def _cross_state(traj: Trajectory, times: np.ndarray, left_endpoint: float | None) -> np.ndarray:
    """Solution vector at each time, using left limits except exactly at the
    integrated interval's left endpoint, where the within-interval (right)
    limit applies."""
    N = traj.dimension
    P = len(times)
    U = np.empty((N, P))
    at_left = (times == left_endpoint) if left_endpoint is not None else np.zeros(P, bool)
    for c in range(N):
        bp = traj.partition.breakpoints[c]
        j = np.searchsorted(bp, times, side="left") - 1
        if np.any(at_left):
            j_right = np.searchsorted(bp, times, side="right") - 1
            j = np.where(at_left, j_right, j)
        for jc in np.unique(j):
            sel = j == jc
            t0, t1 = traj.partition.span(c, int(jc))
            s = (times[sel] - t0) / (t1 - t0)
            U[c, sel] = traj.interval_values(c, int(jc), s)
    return U


def interval_residual(traj: Trajectory, problem: OdeProblem, i: int, j: int,
                      s) -> np.ndarray:
    """Residual of component i on its interval j at local coordinates s,
    evaluated with the within-interval limit at the left endpoint."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t0, t1 = traj.partition.span(i, j)
    times = t0 + (t1 - t0) * s
    du = traj.interval_derivative(i, j, s)
    U = _cross_state(traj, times, left_endpoint=t0)
    # own component from this interval's polynomial (matters at breakpoints)
    U[i] = traj.interval_values(i, j, s)
    F = problem.eval_rhs(U, times)
    return du - F[i]


def residual(traj: Trajectory, problem: OdeProblem, i: int, t: float) -> float:
    """Residual of component i at a time interior to one of its intervals."""
    bp = traj.partition.breakpoints[i]
    if t in bp:
        raise ValueError(
            f"t={t!r} is a breakpoint of component {i}; evaluate one-sided "
            "or inside the interval"
        )
    j = traj.partition.interval_at(i, t, "left")
    t0, t1 = traj.partition.span(i, j)
    s = (t - t0) / (t1 - t0)
    return float(interval_residual(traj, problem, i, j, s)[0])


# ---------------------------------------------------------------------------
# Slab solve
# ---------------------------------------------------------------------------

@dataclass
class _IntervalWork:
    i: int
    j: int
    widx: int
    method: str
    order: int
    t0: float
    k: float
    W: np.ndarray                # (n_solved, P) scheme weights
    times: np.ndarray            # (P,) quadrature times
    pred: int | None             # work index of predecessor interval, if in slab
    incoming_fixed: float | None # incoming value when predecessor precedes slab
    # per component: list of (rows already fixed?) group descriptors
    groups: list = field(default_factory=list)


@dataclass
class _Group:
    comp: int
    sel: np.ndarray             # time indices covered by this group
    widx: int | None            # source work interval, None when pre-slab
    L: np.ndarray | None        # Lagrange matrix (q+1, len(sel)) for state source
    const: np.ndarray | None    # fixed values when the source is already solved


def _snap_time(t: float, bp: np.ndarray, tol: float) -> float:
    idx = np.searchsorted(bp, t)
    for cand in (idx - 1, idx):
        if 0 <= cand < len(bp) and abs(float(bp[cand]) - t) <= tol:
            return float(bp[cand])
    return t


def _build_work(problem, partition, methods, slab, settings, coeffs, u0):
    """Precompute quadrature times, scheme weights and cross-component
    evaluation stencils for every interval in the slab."""
    snap_tol = 1e-12 * partition.T
    work: list[_IntervalWork] = []
    index = {}
    for i in range(problem.dimension):
        for j in slab.intervals(i):
            q = int(partition.orders[i][j])
            pts, W = scheme_rule(methods[i], q, settings.quad_depth)
            t0, t1 = partition.span(i, j)
            k = t1 - t0
            times = t0 + k * pts
            if len(times) and pts[0] == 0.0:
                times[0] = t0
            widx = len(work)
            index[(i, j)] = widx
            work.append(_IntervalWork(
                i=i, j=j, widx=widx, method=methods[i], order=q,
                t0=t0, k=k, W=W, times=times,
                pred=None, incoming_fixed=None,
            ))

    for item in work:
        i, j = item.i, item.j
        if (i, j - 1) in index:
            item.pred = index[(i, j - 1)]
        elif j == 0:
            item.incoming_fixed = float(u0[i])
        else:
            item.incoming_fixed = float(coeffs[i][j - 1][-1])

        # cross-component evaluation stencils, grouped by source interval
        for c in range(problem.dimension):
            buckets: dict[tuple, list[int]] = {}
            locs = []
            for p, t in enumerate(item.times):
                tt = _snap_time(float(t), partition.breakpoints[c], snap_tol)
                side = "right" if tt == item.t0 else "left"
                if side == "left" and tt == 0.0:
                    locs.append(("u0", 0, 0.0))
                    continue
                jc = partition.interval_at(c, tt, side)
                tc0, tc1 = partition.span(c, jc)
                locs.append(("iv", jc, (tt - tc0) / (tc1 - tc0)))
            for p, (kind, jc, s) in enumerate(locs):
                buckets.setdefault((kind, jc), []).append(p)
            for (kind, jc), ps in buckets.items():
                sel = np.asarray(ps, dtype=int)
                if kind == "u0":
                    item.groups.append(_Group(
                        comp=c, sel=sel, widx=None, L=None,
                        const=np.full(len(sel), float(u0[c])),
                    ))
                    continue
                s_local = np.array([locs[p][2] for p in ps])
                qc = int(partition.orders[c][jc])
                L = lagrange_matrix(_basis_nodes(methods[c], qc), s_local)
                if (c, jc) in index:
                    item.groups.append(_Group(
                        comp=c, sel=sel, widx=index[(c, jc)], L=L, const=None,
                    ))
                else:
                    vals = coeffs[c][jc] @ L
                    item.groups.append(_Group(
                        comp=c, sel=sel, widx=None, L=None, const=vals,
                    ))
    return work


def solve_slab(problem: OdeProblem, partition: Partition, slab: TimeSlab,
               coeffs, settings: SolveSettings) -> tuple[list, SlabReport]:
    """Solve one slab's nodal equations by damped Jacobi fixed-point sweeps.

    ``coeffs`` holds the already-accepted per-component interval coefficient
    arrays up to the slab start.  Returns the new interval coefficient arrays
    (appended per component, in interval order) and an iteration report.
    """
    methods = problem.methods
    u0 = problem.u0
    work = _build_work(problem, partition, methods, slab, settings, coeffs, u0)

    # constant extrapolation of each component's value entering the slab
    slab_incoming = np.empty(problem.dimension)
    for i in range(problem.dimension):
        first_j = slab.spans[i][0]
        slab_incoming[i] = u0[i] if first_j == 0 else float(coeffs[i][first_j - 1][-1])
    state = [np.full(item.order + 1, slab_incoming[item.i]) for item in work]

    damping = settings.damping
    increment = np.inf
    sweeps = 0
    converged = False
    while sweeps < settings.max_sweeps:
        sweeps += 1
        new_state = []
        increment = 0.0
        for item in work:
            inc = item.incoming_fixed
            if inc is None:
                inc = float(state[item.pred][-1])
            U = np.empty((problem.dimension, len(item.times)))
            for grp in item.groups:
                if grp.const is not None:
                    U[grp.comp, grp.sel] = grp.const
                else:
                    U[grp.comp, grp.sel] = state[grp.widx] @ grp.L
            F = problem.eval_rhs(U, item.times)
            frow = F[item.i]
            if not np.all(np.isfinite(frow)):
                raise NonFiniteRHS(
                    f"non-finite right-hand side for component {item.i} in "
                    f"slab {slab.index} near t={item.t0!r}"
                )
            target = inc + item.k * (item.W @ frow)
            off = 1 if item.method == MCG else 0
            old = state[item.widx][off:]
            upd = old + damping * (target - old)
            increment = max(increment, float(np.max(np.abs(upd - old))) if len(upd) else 0.0)
            if off:
                arr = np.concatenate(([inc], upd))
            else:
                arr = upd
            new_state.append(arr)
        state = new_state
        if increment <= settings.tolerance:
            converged = True
            break

    report = SlabReport(
        index=slab.index, t_start=slab.t_start, t_end=slab.t_end,
        sweeps=sweeps, final_increment=increment, converged=converged,
    )

    # accept: write back in interval order, pinning continuous-family interval
    # start values bitwise to the predecessor's end value
    out = [[] for _ in range(problem.dimension)]
    for item in work:
        arr = state[item.widx].copy()
        if item.method == MCG:
            if item.j == 0:
                arr[0] = u0[item.i]
            elif item.pred is not None:
                # predecessor in this slab appears earlier in `work`
                arr[0] = out[item.i][-1][-1]
            else:
                arr[0] = coeffs[item.i][item.j - 1][-1]
        out[item.i].append(arr)
    return out, report


def solve(problem: OdeProblem, partition: Partition,
          settings: SolveSettings | None = None) -> Trajectory:
    """Solve the problem over the partition, slab by slab.

    Continuous-family components start from u0; discontinuous-family
    components take u0 as their incoming left limit at t = 0.  Raises
    ConvergenceFailure when a slab exhausts its sweep budget.
    """
    settings = settings or SolveSettings()
    if partition.n_components != problem.dimension:
        raise ValueError(
            f"partition has {partition.n_components} components, problem has "
            f"{problem.dimension}"
        )
    for i, m in enumerate(problem.methods):
        lo = min_order(m)
        if np.any(partition.orders[i] < lo):
            raise ValueError(
                f"component {i}: orders below minimum {lo} for {m}"
            )

    coeffs = [[] for _ in range(problem.dimension)]
    reports = []
    for slab in build_slabs(partition):
        new, report = solve_slab(problem, partition, slab, coeffs, settings)
        reports.append(report)
        if not report.converged:
            raise ConvergenceFailure(
                f"slab {slab.index} ({slab.t_start!r}, {slab.t_end!r}] did not "
                f"converge: increment {report.final_increment:.3e} after "
                f"{report.sweeps} sweeps (tolerance {settings.tolerance:.3e})",
                report=SolveReport(slabs=tuple(reports)),
            )
        for i in range(problem.dimension):
            coeffs[i].extend(new[i])
    return Trajectory(partition, problem.methods, problem.u0, coeffs,
                      report=SolveReport(slabs=tuple(reports)), settings=settings)
