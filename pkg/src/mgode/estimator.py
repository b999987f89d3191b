"""A posteriori error machinery.

Turns a computed trajectory and a dual solution into computable global error
information: the exact residual/dual error representation, the interpolation
constant bound chain E0..E5, computational and quadrature residuals with
their dyadic estimates, the residual-zero direct evaluation of the Galerkin
term, stability factors, the assembled total bound, and the a posteriori
bound on stability factors computed from approximate duals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .dual import DualSolution
from .solver import OdeProblem, Trajectory, interval_residual
from .tableau import (
    MCG,
    MDG,
    gauss_rule_01,
    lagrange_matrix,
    legendre_eval,
    tableau,
    integration_rule,
)


# ---------------------------------------------------------------------------
# Quadrature with sign-change splitting
# ---------------------------------------------------------------------------

def _sign_change_roots(fn, a: float, b: float, n_scan: int) -> list[float]:
    """Roots of fn inside (a, b) located from sign changes on a uniform scan."""
    xs = np.linspace(a, b, n_scan)
    vals = fn(xs)
    roots = []
    for x0, x1, f0, f1 in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if f0 == 0.0 and x0 != a:
            roots.append(float(x0))
        elif f0 * f1 < 0.0:
            try:
                roots.append(float(brentq(
                    lambda x: float(fn(np.array([x]))[0]),
                    x0, x1, xtol=1e-15, rtol=8.9e-16)))
            except ValueError:
                # noise-level values can flip sign between batched and
                # pointwise evaluation; the piece is negligible either way
                roots.append(0.5 * float(x0 + x1))
    return roots


def integrate_splitting(fn, a: float, b: float, *, npts: int, n_scan: int,
                        splits=()) -> tuple[float, float]:
    """(signed, absolute) integral of fn over [a, b] by Gauss-Legendre on
    pieces cut at the given split points and at detected sign changes.

    fn must accept an array of points.  Each final piece is single-signed (up
    to scan resolution), so the absolute integral is the sum of |piece|.
    """
    cuts = sorted(p for p in splits if a < p < b)
    pieces = []
    lo = a
    for p in cuts + [b]:
        if p > lo:
            pieces.append((lo, p))
            lo = p
    signed = 0.0
    absolute = 0.0
    xg, wg = gauss_rule_01(npts)
    for lo, hi in pieces:
        sub = [lo] + _sign_change_roots(fn, lo, hi, n_scan) + [hi]
        for s0, s1 in zip(sub[:-1], sub[1:]):
            h = s1 - s0
            if h <= 0.0:
                continue
            val = h * float(wg @ fn(s0 + h * xg))
            signed += val
            absolute += abs(val)
    return signed, absolute


def _gauss_integral(fn, a: float, b: float, npts: int) -> float:
    xg, wg = gauss_rule_01(npts)
    return (b - a) * float(wg @ fn(a + (b - a) * xg))


class _MemoFn:
    """Memoize a vectorized function of a point array on exact point sets.

    The splitting integrators evaluate the same scan grids and Gauss nodes
    for several integrals over one interval; caching by the byte image of
    the request removes the repeated residual and dual evaluations.
    """

    def __init__(self, fn):
        self.fn = fn
        self.cache: dict[bytes, np.ndarray] = {}

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        key = x.tobytes()
        hit = self.cache.get(key)
        if hit is None:
            hit = np.asarray(self.fn(x), dtype=float)
            self.cache[key] = hit
        return hit


# ---------------------------------------------------------------------------
# Elementary dual evaluations
# ---------------------------------------------------------------------------

def _dual_value_fn(dual: DualSolution, i: int):
    def fn(ts):
        return dual.values(i, ts, "left")
    return fn


def _dual_deriv_fn(dual: DualSolution, i: int, order: int):
    def fn(ts):
        return dual.derivatives(i, ts, order, "left")
    return fn


def interp_constant(q: int) -> float:
    """Midpoint Taylor interpolation constant 1 / (2^q q!)."""
    if q < 0:
        raise ValueError(f"order must be >= 0, got {q}")
    return 1.0 / (2.0**q * math.factorial(q))


def _taylor_interpolant(dual: DualSolution, i: int, t_mid: float, degree: int):
    """Taylor expansion of the dual's local polynomial around the interval
    midpoint, as a callable of time."""
    coeffs = [dual.value(i, t_mid, "left")]
    for order in range(1, degree + 1):
        coeffs.append(dual.derivative(i, t_mid, order, "left")
                      / math.factorial(order))

    def fn(ts):
        ts = np.atleast_1d(ts)
        dt = ts - t_mid
        out = np.zeros_like(dt)
        for order in range(degree, -1, -1):
            out = out * dt + coeffs[order]
        return out

    return fn


# ---------------------------------------------------------------------------
# Error representation
# ---------------------------------------------------------------------------

def error_representation(traj: Trajectory, dual: DualSolution,
                         problem: OdeProblem, depth: int = 2) -> float:
    """Evaluate the residual/dual pairing

        sum_ij [ int_{I_ij} R_i phi_i dt + [U_i] phi_i(interval start) ],

    with composite node-rule quadrature at the given dyadic depth per
    interval.  The integrand cancels heavily (the residual is orthogonal to
    the test space), so integration is cut at the dual's piece boundaries and
    the rule order is raised to cover the local residual-dual product degree.
    Jump terms enter only for discontinuous-family components.
    """
    if abs(dual.T - traj.T) > 0.0:
        raise ValueError("dual and trajectory horizons differ")
    from .tableau import MAX_ORDER

    total = 0.0
    part = traj.partition
    for i in range(traj.dimension):
        method = traj.methods[i]
        phi = _dual_value_fn(dual, i)
        for j in range(part.n_intervals(i)):
            t0, t1 = part.span(i, j)
            k = t1 - t0
            q = traj.order(i, j)
            dual_deg = dual.local_order(i, t0, t1)
            p_rule = min(MAX_ORDER, max(q + 1, (q + dual_deg + 2) // 2))
            s, w = integration_rule(MCG, p_rule, depth)
            pieces = np.concatenate(
                ([t0], dual.piece_boundaries(i, t0, t1), [t1]))
            for a, b in zip(pieces[:-1], pieces[1:]):
                s_loc = (a - t0) / k + (b - a) / k * s
                R = interval_residual(traj, problem, i, j, s_loc)
                total += (b - a) * float(w @ (R * phi(t0 + k * s_loc)))
            if method == MDG:
                total += traj.jump(i, j) * dual.value(i, t0, "left")
    return total


# ---------------------------------------------------------------------------
# Interpolation-constant estimates E0..E5 and stability factors
# ---------------------------------------------------------------------------

@dataclass
class StabilityFactors:
    """Integrals of the dual solution converting residuals into bounds.

    ``s_deriv[i]`` integrates |phi_i^(p_i)| with p_i the per-interval
    derivative order used by the estimates (q for the continuous family,
    q+1 for the discontinuous one); ``s_mean[i]`` is the piecewise-constant
    surrogate sum_j k_ij |mean(phi_i)|; ``s_interp[i]`` integrates
    k^(-p) |phi_i - pi phi_i| with the residual-zero interpolant.  The global
    factors integrate the Euclidean norm of the derivative vector and of the
    dual itself.
    """

    s_deriv: np.ndarray
    s_mean: np.ndarray
    s_interp: np.ndarray
    s1_global: float
    s2_global: float
    s_phi: float

    def to_json_dict(self) -> dict:
        return {
            "per_component_derivative": [float(x) for x in self.s_deriv],
            "per_component_mean": [float(x) for x in self.s_mean],
            "per_component_interp": [float(x) for x in self.s_interp],
            "global_l1": float(self.s1_global),
            "global_l2": float(self.s2_global),
            "dual_l1": float(self.s_phi),
        }


@dataclass
class GalerkinEstimates:
    """The estimate chain E0..E5 plus its per-interval ingredients."""

    e0: float
    e1: float
    e2: float
    e3: float
    e4: float
    e5: float
    r: list[np.ndarray]
    rbar: list[np.ndarray]
    s: list[np.ndarray]
    component_max: np.ndarray     # max_j of the weighted residual per component
    factors: StabilityFactors
    flags: list[str] = field(default_factory=list)

    @property
    def chain(self) -> tuple[float, ...]:
        return (self.e0, self.e1, self.e2, self.e3, self.e4, self.e5)


def _deriv_order(method: str, q: int) -> int:
    return q if method == MCG else q + 1


def _interp_degree(method: str, q: int) -> int:
    return q - 1 if method == MCG else q


def _interp_const(method: str, q: int) -> float:
    return interp_constant(q - 1 if method == MCG else q)


def galerkin_estimates(traj: Trajectory, dual: DualSolution,
                       problem: OdeProblem) -> GalerkinEstimates:
    """Assemble the interpolation-constant estimate chain.

    Per interval this computes the normalized residual r (with the jump
    contribution rbar for discontinuous components), the dual derivative
    factor s, and the midpoint Taylor interpolation terms feeding E0 and E1;
    the chain E0 <= E1 <= E2 <= E3 <= E4 and E2 <= E5 then follows from the
    assembled sums.  When the dual's local degree cannot supply the required
    derivative, E2..E5 degrade to NaN and a flag records the deficiency.
    """
    part = traj.partition
    N = traj.dimension
    flags: list[str] = []

    e0_signed = 0.0
    e1 = 0.0
    e2 = 0.0
    r_prof = [np.zeros(part.n_intervals(i)) for i in range(N)]
    rbar_prof = [np.zeros(part.n_intervals(i)) for i in range(N)]
    s_prof = [np.zeros(part.n_intervals(i)) for i in range(N)]
    comp_max = np.zeros(N)
    s_deriv = np.zeros(N)
    l2_weighted_sq = 0.0   # int of (C k^p residual-with-jump)^2 dt, summed
    s2_sq = 0.0
    degraded = False

    for i in range(N):
        method = traj.methods[i]
        phi = _dual_value_fn(dual, i)
        for j in range(part.n_intervals(i)):
            t0, t1 = part.span(i, j)
            k = t1 - t0
            q = traj.order(i, j)
            p = _deriv_order(method, q)
            cq = _interp_const(method, q)
            npts = 2 * (q + 2)
            n_scan = 8 * (q + 2)

            if dual.local_order(i, t0, t1) < p:
                degraded = True
                flags.append(
                    f"component {i} interval {j}: dual degree "
                    f"{dual.local_order(i, t0, t1)} < required derivative order {p}"
                )

            Rfn = _MemoFn(lambda s: interval_residual(traj, problem, i, j, s))
            phi_loc = _MemoFn(lambda s: phi(t0 + k * s))
            _, r_abs = integrate_splitting(Rfn, 0.0, 1.0, npts=npts,
                                           n_scan=n_scan)
            r_ij = r_abs  # (1/k) * int |R| dt = int |R(s)| ds
            jmp = traj.jump(i, j) if method == MDG else 0.0
            rbar_ij = r_ij + abs(jmp) / k
            r_prof[i][j] = r_ij
            rbar_prof[i][j] = rbar_ij

            # dual derivative factor, split at the dual's own piece boundaries
            dfn = _MemoFn(_dual_deriv_fn(dual, i, p))
            cuts = dual.piece_boundaries(i, t0, t1)
            _, s_abs = integrate_splitting(dfn, t0, t1, npts=npts,
                                           n_scan=n_scan, splits=cuts)
            s_ij = s_abs / k
            s_prof[i][j] = s_ij
            s_deriv[i] += k * s_ij

            # E0/E1: midpoint Taylor interpolant in the test space
            pi_fn = _taylor_interpolant(dual, i, 0.5 * (t0 + t1),
                                        _interp_degree(method, q))
            prod = lambda s: Rfn(s) * (phi_loc(s) - pi_fn(t0 + k * s))  # noqa: E731
            signed, absval = integrate_splitting(
                prod, 0.0, 1.0, npts=npts, n_scan=n_scan,
                splits=tuple((c - t0) / k for c in cuts))
            e0_signed += k * signed
            e1 += k * absval
            if method == MDG:
                dphi0 = dual.value(i, t0, "left") - float(pi_fn(t0)[0])
                e0_signed += jmp * dphi0
                e1 += abs(jmp) * abs(dphi0)

            # weighted residual: k^q r for mcG, k^(q+1) rbar for mdG
            rw = rbar_ij if method == MDG else r_ij
            comp_max[i] = max(comp_max[i], cq * k**p * rw)
            e2 += cq * k ** (p + 1) * rw * s_ij

            # L2 pieces for E5
            R2 = lambda s: Rfn(s) ** 2  # noqa: E731
            int_R2 = k * _gauss_integral(R2, 0.0, 1.0, npts)
            if method == MDG:
                c_over_k = abs(jmp) / k
                int_rbar2 = int_R2 + 2.0 * c_over_k * (k * r_ij) + c_over_k**2 * k
            else:
                int_rbar2 = int_R2
            l2_weighted_sq += (cq * k**p) ** 2 * int_rbar2

            d2 = lambda ts: dfn(ts) ** 2  # noqa: E731
            pieces = [t0] + list(cuts) + [t1]
            for a, b in zip(pieces[:-1], pieces[1:]):
                s2_sq += _gauss_integral(d2, a, b, npts)

    e0 = abs(e0_signed)
    e3 = float(np.sum(s_deriv * comp_max))

    # global derivative-norm factor on elementary segments with per-component
    # sign splits (reduces to the per-component sum for N = 1)
    s1_global = _global_deriv_l1(traj, dual)
    e4 = s1_global * math.sqrt(N) * float(np.max(comp_max)) if N else 0.0
    s2_global = math.sqrt(s2_sq)
    e5 = s2_global * math.sqrt(l2_weighted_sq)

    if degraded:
        e2 = e3 = e4 = e5 = float("nan")

    factors = StabilityFactors(
        s_deriv=s_deriv,
        s_mean=_mean_factors(traj, dual),
        s_interp=_interp_factors(traj, dual),
        s1_global=s1_global,
        s2_global=s2_global,
        s_phi=_dual_norm_l1(traj, dual),
    )
    return GalerkinEstimates(
        e0=e0, e1=e1, e2=e2, e3=e3, e4=e4, e5=e5,
        r=r_prof, rbar=rbar_prof, s=s_prof,
        component_max=comp_max, factors=factors, flags=flags,
    )


def _elementary_segments(traj: Trajectory, dual: DualSolution) -> np.ndarray:
    """All primal breakpoints and dual piece boundaries merged, so every
    component's dual derivative is a single polynomial on each segment."""
    pts = [np.asarray([0.0, traj.T])]
    for i in range(traj.dimension):
        pts.append(np.asarray(traj.partition.breakpoints[i]))
        pts.append(dual.T - dual.psi.partition.breakpoints[i][::-1])
    merged = np.unique(np.concatenate(pts))
    return merged[(merged >= 0.0) & (merged <= traj.T)]


def _global_deriv_l1(traj: Trajectory, dual: DualSolution) -> float:
    """Integral over [0, T] of the Euclidean norm of the vector of dual
    derivatives (order q_ij or q_ij + 1 per component and interval)."""
    N = traj.dimension
    part = traj.partition
    segs = _elementary_segments(traj, dual)
    total = 0.0
    for a, b in zip(segs[:-1], segs[1:]):
        mid = 0.5 * (a + b)
        fns = []
        qmax = 1
        for i in range(N):
            j = part.interval_at(i, mid, "left")
            q = traj.order(i, j)
            qmax = max(qmax, q)
            fns.append(_dual_deriv_fn(dual, i, _deriv_order(traj.methods[i], q)))
        npts = 2 * (qmax + 2)
        n_scan = 8 * (qmax + 2)
        cuts: list[float] = []
        for fn in fns:
            cuts.extend(_sign_change_roots(fn, a, b, n_scan))
        if N == 1:
            _, val = integrate_splitting(fns[0], a, b, npts=npts,
                                         n_scan=n_scan)
            total += val
            continue
        norm = lambda ts: np.sqrt(np.sum(np.stack([fn(ts) for fn in fns])**2,
                                         axis=0))  # noqa: E731
        pieces = [a] + sorted(c for c in cuts if a < c < b) + [b]
        for lo, hi in zip(pieces[:-1], pieces[1:]):
            total += _gauss_integral(norm, lo, hi, npts)
    return total


def _dual_norm_l1(traj: Trajectory, dual: DualSolution) -> float:
    """Integral of the Euclidean norm of the dual itself."""
    N = traj.dimension
    segs = _elementary_segments(traj, dual)
    fns = [_dual_value_fn(dual, i) for i in range(N)]
    norm = lambda ts: np.sqrt(np.sum(np.stack([fn(ts) for fn in fns])**2,
                                     axis=0))  # noqa: E731
    total = 0.0
    for a, b in zip(segs[:-1], segs[1:]):
        total += _gauss_integral(norm, a, b, 8)
    return total


def _mean_factors(traj: Trajectory, dual: DualSolution) -> np.ndarray:
    """Piecewise-constant dual surrogate sum_j k_ij |mean(phi_i on I_ij)|."""
    part = traj.partition
    out = np.zeros(traj.dimension)
    for i in range(traj.dimension):
        phi = _dual_value_fn(dual, i)
        for j in range(part.n_intervals(i)):
            t0, t1 = part.span(i, j)
            mean = _gauss_integral(phi, t0, t1, 6) / (t1 - t0)
            out[i] += (t1 - t0) * abs(mean)
    return out


def _interp_factors(traj: Trajectory, dual: DualSolution) -> np.ndarray:
    """Per-component integral of k^(-p) |phi - pi phi| with the residual-zero
    interpolant."""
    part = traj.partition
    out = np.zeros(traj.dimension)
    for i in range(traj.dimension):
        method = traj.methods[i]
        phi = _dual_value_fn(dual, i)
        for j in range(part.n_intervals(i)):
            t0, t1 = part.span(i, j)
            k = t1 - t0
            q = traj.order(i, j)
            p = _deriv_order(method, q)
            pi_fn = _residual_zero_interpolant(dual, traj, i, j)
            diff = lambda s: np.abs(phi(t0 + k * s) - pi_fn(s))  # noqa: E731
            out[i] += k ** (1 - p) * _gauss_integral(diff, 0.0, 1.0, 2 * (q + 3))
    return out


# ---------------------------------------------------------------------------
# Computational and quadrature residuals
# ---------------------------------------------------------------------------

def _integral_of_rhs(traj: Trajectory, problem: OdeProblem, i: int, j: int,
                     depth: int) -> float:
    """Quadrature value of int_{I_ij} f_i(U, .) dt at the given dyadic depth
    of the interval's own node rule."""
    from .solver import _cross_state

    part = traj.partition
    t0, t1 = part.span(i, j)
    k = t1 - t0
    q = traj.order(i, j)
    s, w = integration_rule(traj.methods[i], q, depth)
    times = t0 + k * s
    if len(times) and s[0] == 0.0:
        times[0] = t0
    U = _cross_state(traj, times, left_endpoint=t0)
    U[i] = traj.interval_values(i, j, s)
    F = problem.eval_rhs(U, times)
    return k * float(w @ F[i])


def _solver_depth(traj: Trajectory) -> int:
    return traj.settings.quad_depth if traj.settings is not None else 0


def computational_residual(traj: Trajectory, problem: OdeProblem, i: int,
                           j: int, depth: int | None = None) -> float:
    """Defect of the end-value update equation on interval I_ij,

        (1/k) [ (xi_q - xi_0) - int f_i dt ],

    with the integral one dyadic depth finer than the solver used (or at the
    explicitly given depth)."""
    if depth is None:
        depth = _solver_depth(traj) + 1
    xi = traj.coefficients(i, j)
    inc = traj.incoming_value(i, j)
    k = traj.partition.step(i, j)
    return ((float(xi[-1]) - inc) - _integral_of_rhs(traj, problem, i, j, depth)) / k


@dataclass
class QuadratureResidual:
    """Dyadic difference estimate of one interval's quadrature residual."""

    delta: float   # (quad at depth m - quad at depth m+1) / k
    bound: float   # geometric-series bound on |R^Q at depth m|


def quadrature_residual(traj: Trajectory, problem: OdeProblem, i: int, j: int,
                        m: int | None = None) -> QuadratureResidual:
    """Estimate the interval's quadrature residual from depths m and m+1.

    The node rule converges dyadically with ratio 2^(-2q) (continuous family)
    or 2^(-1-2q) (discontinuous family), giving the computable bound
    |R^Q_m| <= |R^Q_m - R^Q_{m+1}| / (1 - ratio)."""
    if m is None:
        m = _solver_depth(traj)
    k = traj.partition.step(i, j)
    qm = _integral_of_rhs(traj, problem, i, j, m)
    qm1 = _integral_of_rhs(traj, problem, i, j, m + 1)
    delta = (qm - qm1) / k
    q = traj.order(i, j)
    if traj.methods[i] == MCG:
        ratio = 2.0 ** (-2 * q)
    else:
        ratio = 2.0 ** (-1 - 2 * q)
    return QuadratureResidual(delta=delta, bound=abs(delta) / (1.0 - ratio))


@dataclass
class DefectReport:
    """Per-interval defect magnitudes with their stability-weighted sum."""

    profiles: list[np.ndarray]
    value: float


def computational_error(traj: Trajectory, problem: OdeProblem,
                        dual: DualSolution, depth: int | None = None,
                        factors: StabilityFactors | None = None) -> DefectReport:
    """E_C = sum_i s_mean[i] * max_j |R^C_ij|."""
    s_mean = factors.s_mean if factors is not None else _mean_factors(traj, dual)
    profiles = []
    total = 0.0
    for i in range(traj.dimension):
        vals = np.array([
            computational_residual(traj, problem, i, j, depth)
            for j in range(traj.partition.n_intervals(i))
        ])
        profiles.append(np.abs(vals))
        total += s_mean[i] * (float(np.max(np.abs(vals))) if len(vals) else 0.0)
    return DefectReport(profiles=profiles, value=total)


def quadrature_error(traj: Trajectory, problem: OdeProblem,
                     dual: DualSolution, m: int | None = None,
                     factors: StabilityFactors | None = None) -> DefectReport:
    """E_Q = sum_i s_mean[i] * max_j bound(R^Q_ij)."""
    s_mean = factors.s_mean if factors is not None else _mean_factors(traj, dual)
    profiles = []
    total = 0.0
    for i in range(traj.dimension):
        vals = np.array([
            quadrature_residual(traj, problem, i, j, m).bound
            for j in range(traj.partition.n_intervals(i))
        ])
        profiles.append(vals)
        total += s_mean[i] * (float(np.max(vals)) if len(vals) else 0.0)
    return DefectReport(profiles=profiles, value=total)


# ---------------------------------------------------------------------------
# Residual-zero interpolation: direct evaluation of the Galerkin term
# ---------------------------------------------------------------------------

def radau_polynomial(q: int, x) -> np.ndarray:
    """The degree-q polynomial (P_q(x) + P_{q+1}(x)) / (x + 1) on [-1, 1],
    with the removable singularity at x = -1 filled by its limit."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    num = legendre_eval(q, xs) + legendre_eval(q + 1, xs)
    out = np.empty_like(xs)
    at_end = xs == -1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        out[~at_end] = num[~at_end] / (xs[~at_end] + 1.0)
    if np.any(at_end):
        h = 1e-7
        out[at_end] = (legendre_eval(q, -1.0 + h) + legendre_eval(q + 1, -1.0 + h)) / h
    return out


def _interp_points(method: str, q: int) -> np.ndarray:
    """Reference interpolation points killing the leading residual shape:
    the interior Legendre zeros (continuous family) or the interval start
    plus the interior zeros of the residual's Radau shape polynomial
    (discontinuous family).

    The discontinuous scheme's nodes include the right endpoint (reversed
    construction), but its residual vanishes where the unreversed Radau
    polynomial does, i.e. at the mirror images of the interior nodes."""
    if method == MCG:
        x, _ = np.polynomial.legendre.leggauss(q)
        return (x + 1.0) / 2.0
    nodes = tableau(MDG, q).nodes.nodes
    return np.concatenate(([0.0], np.sort(1.0 - nodes[:-1])))


def _residual_zero_interpolant(dual: DualSolution, traj: Trajectory,
                               i: int, j: int):
    """Interpolant of phi_i on interval j through the residual-zero points,
    as a callable of the local coordinate."""
    t0, t1 = traj.partition.span(i, j)
    k = t1 - t0
    pts = _interp_points(traj.methods[i], traj.order(i, j))
    vals = dual.values(i, t0 + k * pts, "left")

    def fn(s):
        L = lagrange_matrix(pts, s)
        return vals @ L

    return fn


@lru_cache(maxsize=None)
def product_quadrature_constant(method: str, q: int) -> float:
    """Constant c with int_0^1 |shape_R * shape_phi| ds = c * |shape_R(1)| *
    |shape_phi(1)| for the residual and interpolation-defect shapes of the
    scheme, computed numerically."""
    xg, wg = gauss_rule_01(2 * (q + 2))
    if method == MCG:
        if q == 0:
            raise ValueError("continuous family needs q >= 1")
        vals = legendre_eval(q, 2.0 * xg - 1.0)
        integral = float(wg @ (vals * vals))
        end = legendre_eval(q, 1.0)
        return integral / (end * end)
    vals = radau_polynomial(q, 2.0 * xg - 1.0)
    integral = float(wg @ (xg * vals * vals))
    end = float(radau_polynomial(q, 1.0)[0])
    return integral / (end * end)


@dataclass
class ResidualZeroReport:
    """Directly evaluated Galerkin term with sign bookkeeping."""

    value: float                 # |sum of per-interval signed terms|
    signed: float
    abs_sum: float               # sum of |per-interval terms|
    alphas: list[np.ndarray]
    shortcut: float              # endpoint product-quadrature shortcut sum


def eg_residual_zero(traj: Trajectory, dual: DualSolution,
                     problem: OdeProblem) -> ResidualZeroReport:
    """Evaluate int R (phi - pi phi) per interval with the dual interpolated
    at the points where the projected residual vanishes; for discontinuous
    components the interval start is interpolated exactly, so no jump terms
    remain."""
    part = traj.partition
    signed_total = 0.0
    abs_total = 0.0
    shortcut = 0.0
    alphas = []
    for i in range(traj.dimension):
        method = traj.methods[i]
        phi = _dual_value_fn(dual, i)
        a_i = np.zeros(part.n_intervals(i))
        for j in range(part.n_intervals(i)):
            t0, t1 = part.span(i, j)
            k = t1 - t0
            q = traj.order(i, j)
            pi_fn = _residual_zero_interpolant(dual, traj, i, j)
            Rfn = _MemoFn(lambda s: interval_residual(traj, problem, i, j, s))
            fn = lambda s: Rfn(s) * (phi(t0 + k * s) - pi_fn(s))  # noqa: E731
            cuts = tuple((c - t0) / k for c in dual.piece_boundaries(i, t0, t1))
            signed, _ = integrate_splitting(fn, 0.0, 1.0, npts=2 * (q + 3),
                                            n_scan=8 * (q + 3), splits=cuts)
            term = k * signed
            signed_total += term
            abs_total += abs(term)
            a_i[j] = np.sign(term)
            r_end = float(Rfn(1.0)[0])
            dphi_end = dual.value(i, t1, "left") - float(pi_fn(1.0)[0])
            shortcut += (product_quadrature_constant(method, q) * k
                         * abs(r_end) * abs(dphi_end))
        alphas.append(a_i)
    return ResidualZeroReport(
        value=abs(signed_total), signed=signed_total, abs_sum=abs_total,
        alphas=alphas, shortcut=shortcut,
    )


# ---------------------------------------------------------------------------
# Total error and full report
# ---------------------------------------------------------------------------

@dataclass
class TotalError:
    """Assembled total bound: Galerkin + computational + quadrature parts."""

    galerkin: float
    computational: float
    quadrature: float
    explicit_galerkin: float     # the per-component max form (E3)

    @property
    def value(self) -> float:
        return self.galerkin + self.computational + self.quadrature

    @property
    def explicit(self) -> float:
        return self.explicit_galerkin + self.computational + self.quadrature


def total_error(eg: ResidualZeroReport | float, estimates: GalerkinEstimates,
                ec: DefectReport | float, eq: DefectReport | float) -> TotalError:
    """Combine the three error sources into the total bound and its explicit
    per-component max form."""
    eg_val = eg.value if isinstance(eg, ResidualZeroReport) else float(eg)
    ec_val = ec.value if isinstance(ec, DefectReport) else float(ec)
    eq_val = eq.value if isinstance(eq, DefectReport) else float(eq)
    return TotalError(
        galerkin=eg_val,
        computational=ec_val,
        quadrature=eq_val,
        explicit_galerkin=estimates.e3,
    )


@dataclass
class ErrorReport:
    """Everything the adaptation loop and the batch front end consume."""

    methods: tuple[str, ...]
    e0: float
    e1: float
    e2: float
    e3: float
    e4: float
    e5: float
    e_g: float
    e_c: float
    e_q: float
    total: float
    explicit_total: float
    factors: StabilityFactors
    r: list[np.ndarray]
    rbar: list[np.ndarray]
    rc: list[np.ndarray]
    rq_bound: list[np.ndarray]
    interval_starts: list[np.ndarray]
    steps: list[np.ndarray]
    orders: list[np.ndarray]
    alphas: list[np.ndarray]
    eg_signed: float
    eg_abs_sum: float
    eg_shortcut: float
    flags: list[str]
    #: bound over true error, fillable by callers holding a reference solution
    effectivity: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "estimates": {
                "E0": self.e0, "E1": self.e1, "E2": self.e2,
                "E3": self.e3, "E4": self.e4, "E5": self.e5,
            },
            "E_G": self.e_g,
            "E_C": self.e_c,
            "E_Q": self.e_q,
            "total": self.total,
            "explicit_total": self.explicit_total,
            "eg_signed": self.eg_signed,
            "eg_abs_sum": self.eg_abs_sum,
            "eg_shortcut": self.eg_shortcut,
            "effectivity": self.effectivity,
            "stability_factors": self.factors.to_json_dict(),
            "components": [
                {
                    "method": self.methods[i],
                    "interval_starts": [float(x) for x in self.interval_starts[i]],
                    "steps": [float(x) for x in self.steps[i]],
                    "orders": [int(x) for x in self.orders[i]],
                    "interp_constants": [
                        _interp_const(self.methods[i], int(q))
                        for q in self.orders[i]
                    ],
                    "r": [float(x) for x in self.r[i]],
                    "rbar": [float(x) for x in self.rbar[i]],
                    "rc": [float(x) for x in self.rc[i]],
                    "rq_bound": [float(x) for x in self.rq_bound[i]],
                    "alpha": [float(x) for x in self.alphas[i]],
                }
                for i in range(len(self.methods))
            ],
            "flags": list(self.flags),
        }

    def csv_summary_rows(self) -> list[dict]:
        rows = []
        for i in range(len(self.methods)):
            rows.append({
                "component": i,
                "method": self.methods[i],
                "intervals": len(self.steps[i]),
                "max_step": max((float(x) for x in self.steps[i]), default=0.0),
                "max_r": max((float(x) for x in self.r[i]), default=0.0),
                "max_rbar": max((float(x) for x in self.rbar[i]), default=0.0),
                "max_rc": max((float(x) for x in self.rc[i]), default=0.0),
                "max_rq_bound": max((float(x) for x in self.rq_bound[i]), default=0.0),
                "stability_deriv": float(self.factors.s_deriv[i]),
                "stability_mean": float(self.factors.s_mean[i]),
            })
        return rows


def estimate(problem: OdeProblem, traj: Trajectory, dual: DualSolution,
             quad_depth: int | None = None) -> ErrorReport:
    """Run the full estimator pipeline and assemble one report."""
    est = galerkin_estimates(traj, dual, problem)
    ec = computational_error(traj, problem, dual, depth=quad_depth,
                             factors=est.factors)
    eq = quadrature_error(traj, problem, dual, factors=est.factors)
    eg = eg_residual_zero(traj, dual, problem)
    tot = total_error(eg, est, ec, eq)
    part = traj.partition
    return ErrorReport(
        methods=traj.methods,
        e0=est.e0, e1=est.e1, e2=est.e2, e3=est.e3, e4=est.e4, e5=est.e5,
        e_g=eg.value, e_c=ec.value, e_q=eq.value,
        total=tot.value, explicit_total=tot.explicit,
        factors=est.factors,
        r=est.r, rbar=est.rbar,
        rc=ec.profiles, rq_bound=eq.profiles,
        interval_starts=[part.breakpoints[i][:-1].copy()
                         for i in range(traj.dimension)],
        steps=[part.steps(i) for i in range(traj.dimension)],
        orders=[part.orders[i].copy() for i in range(traj.dimension)],
        alphas=eg.alphas,
        eg_signed=eg.signed, eg_abs_sum=eg.abs_sum, eg_shortcut=eg.shortcut,
        flags=est.flags,
    )


# ---------------------------------------------------------------------------
# A posteriori bound for stability factors from approximate duals
# ---------------------------------------------------------------------------

@dataclass
class StabilityFactorError:
    """Relative-error bound on the L1 stability factor of an approximate dual."""

    bound: float
    residual_l1: float
    constant: float
    s_phi: float


def stability_factor_error(dual: DualSolution,
                           dual_of_dual: DualSolution | None = None,
                           constant: float = 1.0) -> StabilityFactorError:
    """Bound |S_Phi - S_phi| / S_phi <= C * int ||R_Phi|| dt for a continuous
    approximate dual Phi.

    The default constant is 1; when a dual-of-dual solve is supplied, C is
    replaced by max_t ||omega(t)|| / S_Phi(T).  Discontinuous-family duals are
    rejected (the bound needs a continuous approximation)."""
    psi = dual.psi
    if any(m == MDG for m in psi.methods):
        raise ValueError("stability factor bound requires a continuous dual")
    if dual.psi_problem is None:
        raise ValueError("dual solution lacks its reversed problem")
    part = psi.partition
    N = psi.dimension

    res_l1 = 0.0
    segs = np.unique(np.concatenate([part.breakpoints[i] for i in range(N)]))
    for a, b in zip(segs[:-1], segs[1:]):
        mid = 0.5 * (a + b)
        qmax = 1
        idx = []
        for i in range(N):
            j = part.interval_at(i, mid, "left")
            idx.append(j)
            qmax = max(qmax, psi.order(i, j))

        def norm(sigmas):
            vals = np.empty((N, len(sigmas)))
            for i in range(N):
                t0, t1 = part.span(i, idx[i])
                s = (sigmas - t0) / (t1 - t0)
                vals[i] = interval_residual(psi, dual.psi_problem, i, idx[i], s)
            return np.sqrt(np.sum(vals**2, axis=0))

        res_l1 += _gauss_integral(norm, a, b, 2 * (qmax + 3))

    s_phi = 0.0
    fns = [lambda ts, i=i: np.array([psi.value(i, float(t), "left") for t in ts])
           for i in range(N)]
    for a, b in zip(segs[:-1], segs[1:]):
        normv = lambda ts: np.sqrt(np.sum(np.stack([fn(ts) for fn in fns])**2,
                                          axis=0))  # noqa: E731
        s_phi += _gauss_integral(normv, a, b, 8)

    C = constant
    if dual_of_dual is not None:
        sample = np.linspace(0.0, dual_of_dual.T, 257)
        omega_max = max(
            float(np.linalg.norm(dual_of_dual.state(float(t), "left")))
            for t in sample
        )
        C = omega_max / s_phi if s_phi > 0.0 else float("inf")
    return StabilityFactorError(
        bound=C * res_l1, residual_l1=res_l1, constant=C, s_phi=s_phi,
    )
