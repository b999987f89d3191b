"""Backward linearized (dual) problems and their solution by time reversal.

The dual weights residuals of a computed trajectory into global error
estimates.  Its right-hand side couples through the transpose of the Jacobian
of the primal right-hand side, averaged along the segment between two states;
the backward system is turned into a forward one by the substitution
sigma = T - t and handed to the regular solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .partition import Partition
from .solver import OdeProblem, SolveSettings, Trajectory, solve
from .tableau import MCG, MAX_ORDER, gauss_rule_01


@dataclass
class DualSpec:
    """Data of a backward linearized problem.

    ``phi_T`` is the terminal weight, ``g`` an optional forcing (callable of
    time, defaults to zero).  The linearization runs along the computed
    trajectory ``primal``; passing ``reference`` (e.g. a finer solve standing
    in for the exact solution) makes the Jacobian average run along the
    segment between the two trajectories.  ``s_points`` controls the
    Gauss-Legendre rule used for the segment average.
    """

    problem: OdeProblem
    primal: Trajectory
    phi_T: np.ndarray
    g: Callable | None = None
    reference: Trajectory | None = None
    s_points: int = 3

    def __post_init__(self):
        self.phi_T = np.asarray(self.phi_T, dtype=float).reshape(-1)
        if len(self.phi_T) != self.problem.dimension:
            raise ValueError(
                f"phi_T has length {len(self.phi_T)}, expected "
                f"{self.problem.dimension}"
            )
        if not np.all(np.isfinite(self.phi_T)):
            raise ValueError("phi_T must be finite")
        if self.s_points < 1:
            raise ValueError(f"s_points must be >= 1, got {self.s_points}")


def jstar(v1, v2, t: float, jac: Callable, s_points: int = 3) -> np.ndarray:
    """Transpose of the Jacobian averaged along the segment from v2 to v1,

        ( integral_0^1 df/du(s v1 + (1-s) v2, t) ds )^T,

    by an s_points Gauss-Legendre rule; exact whenever df/du is polynomial of
    degree <= 2 s_points - 1 along the segment."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if np.array_equal(v1, v2):
        J = np.asarray(jac(v1, t), dtype=float)
        if not np.all(np.isfinite(J)):
            raise ValueError(f"non-finite Jacobian at t={t!r}")
        return J.T
    xs, ws = gauss_rule_01(s_points)
    acc = np.zeros((len(v1), len(v1)))
    for x, w in zip(xs, ws):
        J = np.asarray(jac(x * v1 + (1.0 - x) * v2, t), dtype=float)
        acc += w * J
    if not np.all(np.isfinite(acc)):
        raise ValueError(f"non-finite Jacobian average at t={t!r}")
    return acc.T


def dual_partition_for(partition: Partition, order_increment: int = 1,
                       refine: int = 1) -> Partition:
    """Default dual partition: the primal breakpoints (optionally refined by
    an integer factor per interval) with every order raised by
    ``order_increment``, capped at the supported maximum."""
    if refine < 1:
        raise ValueError(f"refine must be >= 1, got {refine}")
    breakpoints = []
    orders = []
    for bp, qs in zip(partition.breakpoints, partition.orders):
        if refine == 1:
            breakpoints.append(bp.copy())
            orders.append(np.minimum(qs + order_increment, MAX_ORDER))
        else:
            pts = [0.0]
            new_q = []
            for j in range(len(bp) - 1):
                sub = np.linspace(bp[j], bp[j + 1], refine + 1)[1:]
                pts.extend(sub.tolist())
                new_q.extend([min(int(qs[j]) + order_increment, MAX_ORDER)] * refine)
            pts[-1] = partition.T
            breakpoints.append(np.asarray(pts))
            orders.append(np.asarray(new_q, dtype=int))
    return Partition(T=partition.T, breakpoints=tuple(breakpoints),
                     orders=tuple(orders))


def _reverse_partition(partition: Partition) -> Partition:
    T = partition.T
    breakpoints = []
    orders = []
    for bp, qs in zip(partition.breakpoints, partition.orders):
        rev = (T - bp[::-1]).copy()
        rev[0] = 0.0
        rev[-1] = T
        breakpoints.append(rev)
        orders.append(qs[::-1].copy())
    return Partition(T=T, breakpoints=tuple(breakpoints), orders=tuple(orders))


class DualSolution:
    """The dual trajectory phi(t), stored as the forward solve psi of the
    time-reversed system, psi(sigma) = phi(T - sigma)."""

    def __init__(self, psi: Trajectory, t_partition: Partition,
                 psi_problem: OdeProblem | None = None):
        self.psi = psi
        self.t_partition = t_partition
        self.psi_problem = psi_problem
        self.T = psi.partition.T

    @property
    def dimension(self) -> int:
        return self.psi.dimension

    @property
    def max_order(self) -> int:
        """Largest polynomial order available across the dual's intervals."""
        return int(max(int(np.max(qs)) for qs in self.psi.partition.orders))

    def local_order(self, i: int, t0: float, t1: float) -> int:
        """Smallest dual polynomial order among component i's pieces
        overlapping (t0, t1)."""
        part = self.psi.partition
        lo = part.interval_at(i, self.T - t1, "right")
        hi = part.interval_at(i, self.T - t0, "left")
        return int(np.min(part.orders[i][lo:hi + 1]))

    @staticmethod
    def _flip(side: str) -> str:
        return "right" if side == "left" else "left"

    def value(self, i: int, t: float, side: str = "left") -> float:
        """phi_i(t) with the requested one-sided convention; at the ends of
        [0, T] the interior limit is returned regardless of side."""
        if t <= 0.0:
            return self.psi.value(i, self.T, "left")
        if t >= self.T:
            return self.psi.value(i, 0.0, "right")
        return self.psi.value(i, self.T - t, self._flip(side))

    def state(self, t: float, side: str = "left") -> np.ndarray:
        return np.array([self.value(i, t, side) for i in range(self.dimension)])

    def _locate(self, ts: np.ndarray, i: int, side: str) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized interval lookup in reversed time; ends of [0, T] clamp
        to the interior limit."""
        part = self.psi.partition
        bp = part.breakpoints[i]
        sigma = self.T - np.asarray(ts, dtype=float)
        flip = self._flip(side)
        if flip == "left":
            j = np.searchsorted(bp, sigma, side="left") - 1
        else:
            j = np.searchsorted(bp, sigma, side="right") - 1
        j = np.clip(j, 0, part.n_intervals(i) - 1)
        return sigma, j

    def values(self, i: int, ts, side: str = "left") -> np.ndarray:
        """phi_i at an array of times (see ``value``)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        sigma, j = self._locate(ts, i, side)
        part = self.psi.partition
        out = np.empty(len(ts))
        for jc in np.unique(j):
            sel = j == jc
            t0, t1 = part.span(i, int(jc))
            s = (sigma[sel] - t0) / (t1 - t0)
            out[sel] = self.psi.interval_values(i, int(jc), s)
        return out

    def derivatives(self, i: int, ts, order: int, side: str = "left") -> np.ndarray:
        """Order-th time derivative of phi_i at an array of times."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        sigma, j = self._locate(ts, i, side)
        part = self.psi.partition
        out = np.empty(len(ts))
        for jc in np.unique(j):
            sel = j == jc
            t0, t1 = part.span(i, int(jc))
            s = (sigma[sel] - t0) / (t1 - t0)
            out[sel] = self.psi.interval_derivative(i, int(jc), s, order=order)
        return (-1.0) ** order * out

    def derivative(self, i: int, t: float, order: int = 1,
                   side: str = "left") -> float:
        """The order-th time derivative of phi_i at t, from the local
        polynomial; equals (-1)^order times the reversed trajectory's."""
        if t <= 0.0:
            sigma, flip = self.T, "left"
        elif t >= self.T:
            sigma, flip = 0.0, "right"
        else:
            sigma, flip = self.T - t, self._flip(side)
        part = self.psi.partition
        j = part.interval_at(i, sigma, flip)
        s0, s1 = part.span(i, j)
        s = (sigma - s0) / (s1 - s0)
        val = self.psi.interval_derivative(i, j, s, order=order)[0]
        return float((-1) ** order * val)

    def piece_boundaries(self, i: int, t0: float, t1: float) -> np.ndarray:
        """Dual breakpoints of component i strictly inside (t0, t1), in
        forward time order."""
        bp = self.T - self.psi.partition.breakpoints[i][::-1]
        inner = bp[(bp > t0) & (bp < t1)]
        return inner

    def export_trajectory(self) -> Trajectory:
        """The underlying reversed-time trajectory (for inspection/export)."""
        return self.psi


def solve_dual(spec: DualSpec, dual_partition: Partition,
               settings: SolveSettings | None = None,
               methods=MCG) -> DualSolution:
    """Solve the backward linearized problem on the given t-space partition.

    Substituting sigma = T - t yields a forward system for
    psi(sigma) = phi(T - sigma) with psi(0) = phi_T, which the regular solver
    integrates; the returned object exposes phi(t) = psi(T - t).
    """
    problem = spec.problem
    primal = spec.primal
    T = problem.T
    if abs(dual_partition.T - T) > 0.0:
        raise ValueError(
            f"dual partition horizon {dual_partition.T!r} != problem horizon {T!r}"
        )
    jac = problem.jacobian_or_fd()
    reference = spec.reference
    g = spec.g
    N = problem.dimension

    # the linearization (and forcing) along the fixed primal trajectory does
    # not change between sweeps, so cache them per quadrature time
    _frozen: dict[float, tuple[np.ndarray, np.ndarray | None]] = {}

    def _linearization_at(ts: np.ndarray) -> list:
        missing = [p for p, t in enumerate(ts) if float(t) not in _frozen]
        if missing:
            tm = ts[missing]
            U = primal.sample_states(tm, "left")
            V = reference.sample_states(tm, "left") if reference is not None else U
            for col, p in enumerate(missing):
                t = float(ts[p])
                Jt = jstar(V[:, col], U[:, col], t, jac, spec.s_points)
                gv = None
                if g is not None:
                    gv = np.asarray(g(t), dtype=float).reshape(-1)
                _frozen[t] = (Jt, gv)
        return [_frozen[float(t)] for t in ts]

    def psi_rhs(psi, sigma):
        # stacked form: psi (N, P), sigma (P,); plain vectors accepted too
        vec_in = np.ndim(psi) > 1
        psi_mat = np.asarray(psi, dtype=float).reshape(N, -1)
        sigmas = np.atleast_1d(np.asarray(sigma, dtype=float))
        pairs = _linearization_at(T - sigmas)
        out = np.empty_like(psi_mat)
        for p, (Jt, gv) in enumerate(pairs):
            out[:, p] = Jt @ psi_mat[:, p]
            if gv is not None:
                out[:, p] += gv
        return out if vec_in else out[:, 0]

    def psi_jacobian(psi, sigma):
        t = T - float(sigma)
        u_here = primal.state(t, "left") if t > 0.0 else primal.state(0.0, "right")
        v_ref = reference.state(t, "left") if reference is not None and t > 0.0 \
            else (reference.state(0.0, "right") if reference is not None else u_here)
        return jstar(v_ref, u_here, t, jac, spec.s_points)

    psi_problem = OdeProblem(
        rhs=psi_rhs,
        u0=spec.phi_T,
        T=T,
        jacobian=psi_jacobian,
        methods=methods,
        vectorized=True,
        name=f"dual({problem.name})" if problem.name else "dual",
    )
    reversed_partition = _reverse_partition(dual_partition)
    psi = solve(psi_problem, reversed_partition, settings or SolveSettings())
    return DualSolution(psi=psi, t_partition=dual_partition,
                        psi_problem=psi_problem)
