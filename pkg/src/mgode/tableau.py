"""Order-dependent polynomial machinery for the Galerkin time-stepping schemes.

Everything that depends only on (method, polynomial order) lives here: Legendre
polynomials, Lobatto and Radau node sets, Lagrange bases, the local coefficient
matrices of the continuous (mcG) and discontinuous (mdG) families, their
polynomial weight functions, and the folded nodal quadrature weights.  Tableaus
are built once per (method, order), checked against their defining identities,
and cached immutably, so they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MCG = "mcG"
MDG = "mdG"
METHODS = (MCG, MDG)

# Highest polynomial order built in double precision.  Above this the node
# residuals and the inversion of the local coefficient matrix start to eat
# into the guard digits required by the construction checks.
MAX_ORDER = 12

_NODE_RESIDUAL_TOL = 1e-13
_IDENTITY_TOL = 1e-12


class TableauError(ValueError):
    """A node set or method tableau failed one of its construction checks."""


# ---------------------------------------------------------------------------
# Legendre polynomials
# ---------------------------------------------------------------------------

def legendre_eval(q: int, x):
    """Evaluate the Legendre polynomial P_q at x via the three-term recurrence.

    Accepts scalars or arrays; x is expected in [-1, 1] but the recurrence is
    evaluated as given everywhere.
    """
    if q < 0:
        raise ValueError(f"Legendre order must be nonnegative, got {q}")
    xs = np.asarray(x, dtype=float)
    p_prev = np.ones_like(xs)
    if q == 0:
        return float(p_prev) if xs.ndim == 0 else p_prev
    p = xs.copy()
    for n in range(1, q):
        p, p_prev = ((2 * n + 1) * xs * p - n * p_prev) / (n + 1), p
    return float(p) if xs.ndim == 0 else p


def _legendre_value_and_derivative(q: int, x: float) -> tuple[float, float]:
    """(P_q(x), P_q'(x)) using the derivative recurrence P'_n = P'_{n-2} + (2n-1) P_{n-1}."""
    p_prev, p = 1.0, x
    dp_prev, dp = 0.0, 1.0
    if q == 0:
        return 1.0, 0.0
    for n in range(1, q):
        p_next = ((2 * n + 1) * x * p - n * p_prev) / (n + 1)
        dp_next = dp_prev + (2 * n + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p, dp


# ---------------------------------------------------------------------------
# Node sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeSet:
    """Nodal points of one scheme order on the reference interval [0, 1]."""

    order: int
    nodes: np.ndarray
    kind: str  # "lobatto" | "radau"

    def __post_init__(self):
        self.nodes.setflags(write=False)

    def __len__(self) -> int:
        return len(self.nodes)


def _safeguarded_newton(fun_dfun, lo, hi, flo, fhi, tol=1e-15, max_iter=100):
    """Newton iteration constrained to a sign-change bracket, bisecting whenever
    a step leaves the bracket or stalls."""
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f, df = fun_dfun(x)
        if f == 0.0:
            return x
        # shrink the bracket
        if (f > 0) == (fhi > 0):
            hi, fhi = x, f
        else:
            lo, flo = x, f
        step = f / df if df != 0.0 else np.inf
        x_new = x - step
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


def _bracketed_roots(fun_dfun, count: int, what: str) -> np.ndarray:
    """Roots of a polynomial on the open interval (-1, 1) by a Chebyshev-spaced
    sign scan followed by safeguarded Newton in each bracket."""
    if count == 0:
        return np.empty(0)
    n_scan = 16 * (count + 1)
    grid = np.cos(np.pi * np.arange(n_scan, 0, -1) / (n_scan + 1))
    vals = np.array([fun_dfun(x)[0] for x in grid])
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0.0:
            roots.append(_safeguarded_newton(fun_dfun, a, b, fa, fb))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    if len(roots) != count:
        raise TableauError(
            f"expected {count} interior {what} roots, found {len(roots)}"
        )
    return np.array(roots)


def lobatto_nodes(q: int) -> NodeSet:
    """The q+1 Lobatto points on [0, 1]: endpoints plus the interior zeros of
    x P_q(x) - P_{q-1}(x) mapped affinely from [-1, 1]."""
    if q < 1:
        raise ValueError(f"Lobatto node set needs order >= 1, got {q}")
    if q > MAX_ORDER:
        raise ValueError(f"order {q} above supported maximum {MAX_ORDER}")

    def g(x):
        pq, dpq = _legendre_value_and_derivative(q, x)
        pq1, dpq1 = _legendre_value_and_derivative(q - 1, x)
        return x * pq - pq1, pq + x * dpq - dpq1

    interior = _bracketed_roots(g, q - 1, "Lobatto")
    for x in interior:
        if abs(g(x)[0]) > _NODE_RESIDUAL_TOL:
            raise TableauError(f"Lobatto node residual too large at x={x!r}")
    nodes = np.concatenate(([0.0], (interior + 1.0) / 2.0, [1.0]))
    if not np.all(np.diff(nodes) > 0.0):
        raise TableauError("Lobatto nodes not strictly increasing")
    return NodeSet(order=q, nodes=nodes, kind="lobatto")


def radau_nodes(q: int) -> NodeSet:
    """The q+1 right-Radau points on [0, 1]: zeros of P_q(x) + P_{q+1}(x) with
    time reversed so the right endpoint is included."""
    if q < 0:
        raise ValueError(f"Radau node set needs order >= 0, got {q}")
    if q > MAX_ORDER:
        raise ValueError(f"order {q} above supported maximum {MAX_ORDER}")

    def h(x):
        pq, dpq = _legendre_value_and_derivative(q, x)
        pq1, dpq1 = _legendre_value_and_derivative(q + 1, x)
        return pq + pq1, dpq + dpq1

    interior = _bracketed_roots(h, q, "Radau")
    for x in interior:
        if abs(h(x)[0]) > _NODE_RESIDUAL_TOL:
            raise TableauError(f"Radau node residual too large at x={x!r}")
    # x = -1 is always a root; reversal maps it to the right endpoint 1.
    nodes = np.sort(np.concatenate(((1.0 - interior) / 2.0, [1.0])))
    nodes[-1] = 1.0
    if not np.all(np.diff(nodes) > 0.0):
        raise TableauError("Radau nodes not strictly increasing")
    return NodeSet(order=q, nodes=nodes, kind="radau")


# ---------------------------------------------------------------------------
# Lagrange bases
# ---------------------------------------------------------------------------

def lagrange_matrix(nodes: np.ndarray, x) -> np.ndarray:
    """Cardinal-function values out[n, p] = lambda_n(x[p]) for the Lagrange
    basis on the given distinct nodes."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    if n == 1:
        return np.ones((1, len(xs)))
    diff = xs[None, :] - nodes[:, None]
    denom = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(denom, 1.0)
    out = np.empty((n, len(xs)))
    idx = np.arange(n)
    for m in range(n):
        mask = idx != m
        out[m] = np.prod(diff[mask] / denom[m, mask][:, None], axis=0)
    return out


def differentiation_matrix(nodes: np.ndarray) -> np.ndarray:
    """Spectral differentiation matrix D[m, n] = lambda_n'(s_m) from
    barycentric weights."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    if n == 1:
        return np.zeros((1, 1))
    w = np.ones(n)
    for m in range(n):
        for j in range(n):
            if j != m:
                w[m] /= nodes[m] - nodes[j]
    D = np.zeros((n, n))
    for m in range(n):
        for j in range(n):
            if j != m:
                D[m, j] = (w[j] / w[m]) / (nodes[m] - nodes[j])
        D[m, m] = -np.sum(D[m, :])
    return D


@dataclass(frozen=True)
class LagrangeBasis:
    """Evaluable Lagrange basis on a set of distinct nodes."""

    nodes: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)

    def eval(self, x) -> np.ndarray:
        """Values of every basis function at x, shape (n_basis, n_points)."""
        return lagrange_matrix(self.nodes, x)

    def eval_derivative(self, x, order: int = 1) -> np.ndarray:
        """Values of the order-th derivative of every basis function at x."""
        D = differentiation_matrix(self.nodes)
        # Node values of the r-th derivative of basis function n sit in column
        # n of D^r; they interpolate the (lower-degree) derivative exactly, so
        # re-expand through the same basis.
        coeffs = np.linalg.matrix_power(D, order)
        return coeffs.T @ lagrange_matrix(self.nodes, x)


def lagrange_basis(nodes) -> LagrangeBasis:
    """Build a Lagrange basis; duplicate nodes are rejected."""
    nodes = np.asarray(nodes, dtype=float).copy()
    if len(np.unique(nodes)) != len(nodes):
        raise ValueError("duplicate interpolation nodes")
    return LagrangeBasis(nodes=nodes)


@lru_cache(maxsize=None)
def gauss_rule_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1] (exact through degree 2n-1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


# ---------------------------------------------------------------------------
# Method tableaus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodTableau:
    """Per-(method, order) scheme data.

    The nodal update on an interval of length k reads, with xi0 the incoming
    value (shared end value for mcG, left limit for mdG),

        xi_m = xi0 + k * sum_n quad_weights[m, n] * f(t(nodes[n])),

    where the rows m run over the solved degrees of freedom (m = 1..q for
    mcG, m = 0..q for mdG).  ``weight_fns`` holds the coefficients of the
    polynomial weight functions w_m in the Lagrange basis on ``test_nodes``;
    folding the interpolatory node rule into them yields ``quad_weights``.
    """

    method: str
    order: int
    nodes: NodeSet
    test_nodes: np.ndarray
    weight_fns: np.ndarray
    quad_weights: np.ndarray
    node_weights: np.ndarray
    amat: np.ndarray
    amat_inv: np.ndarray

    def __post_init__(self):
        for arr in (self.test_nodes, self.weight_fns, self.quad_weights,
                    self.node_weights, self.amat, self.amat_inv):
            arr.setflags(write=False)

    @property
    def n_solved(self) -> int:
        return self.quad_weights.shape[0]

    @property
    def solved_offset(self) -> int:
        """Index of the first solved nodal value (1 for mcG, 0 for mdG)."""
        return 1 if self.method == MCG else 0

    def weight_values(self, s) -> np.ndarray:
        """Values w_m(s) of every weight function, shape (n_solved, len(s))."""
        return self.weight_fns @ lagrange_matrix(self.test_nodes, s)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "q": self.order,
            "nodes": [float(s) for s in self.nodes.nodes],
            "quad_weights": [[float(w) for w in row] for row in self.quad_weights],
        }


def build_mcg_tableau(q: int) -> MethodTableau:
    """Continuous-family tableau of order q >= 1 on the Lobatto points.

    The local q-by-q system couples the trial basis derivatives against a
    degree q-1 test basis; its inverse yields the weight functions, and the
    q+1 point Lobatto node rule folds them into nodal quadrature weights.
    """
    if q < 1:
        raise ValueError(f"mcG order must be >= 1, got {q}")
    nodes = lobatto_nodes(q)
    trial = lagrange_basis(nodes.nodes)
    if q >= 2:
        test_nodes = lobatto_nodes(q - 1).nodes.copy()
    else:
        test_nodes = np.array([1.0])  # degree-0 test space: the constant
    test = lagrange_basis(test_nodes)

    xg, wg = gauss_rule_01(q + 2)
    dtrial = trial.eval_derivative(xg)          # (q+1, G)
    tvals = test.eval(xg)                       # (q, G)
    a_full = (tvals * wg) @ dtrial.T            # a_full[m-1, n] = int l'_n l_{m-1}
    amat = a_full[:, 1:].copy()
    amat_inv = np.linalg.inv(amat)

    identity = amat_inv @ a_full[:, 0]
    if np.max(np.abs(identity + 1.0)) > _IDENTITY_TOL:
        raise TableauError(
            f"mcG({q}) end-value identity violated: max deviation "
            f"{np.max(np.abs(identity + 1.0)):.3e}"
        )

    rho = trial.eval(xg) @ wg                   # interpolatory node weights
    w_at_nodes = amat_inv @ test.eval(nodes.nodes)
    quad_weights = w_at_nodes * rho[None, :]
    return MethodTableau(
        method=MCG,
        order=q,
        nodes=nodes,
        test_nodes=test_nodes,
        weight_fns=amat_inv.copy(),
        quad_weights=quad_weights,
        node_weights=rho,
        amat=amat,
        amat_inv=amat_inv,
    )


def build_mdg_tableau(q: int) -> MethodTableau:
    """Discontinuous-family tableau of order q >= 0 on the right-Radau points.

    The (q+1)-square system includes the left-end jump coupling; exactness on
    constants and the incoming-value identity are checked after inversion.
    """
    if q < 0:
        raise ValueError(f"mdG order must be >= 0, got {q}")
    nodes = radau_nodes(q)
    basis = lagrange_basis(nodes.nodes)
    lam0 = basis.eval(0.0)[:, 0]

    xg, wg = gauss_rule_01(q + 2)
    dvals = basis.eval_derivative(xg)
    vals = basis.eval(xg)
    amat = (vals * wg) @ dvals.T + np.outer(lam0, lam0)
    amat_inv = np.linalg.inv(amat)

    identity = amat_inv @ lam0
    if np.max(np.abs(identity - 1.0)) > _IDENTITY_TOL:
        raise TableauError(
            f"mdG({q}) incoming-value identity violated: max deviation "
            f"{np.max(np.abs(identity - 1.0)):.3e}"
        )

    rho = vals @ wg
    # Weight values at the nodes are just amat_inv (cardinal basis), so the
    # folded weights come out as a row scaling.
    quad_weights = amat_inv * rho[None, :]
    return MethodTableau(
        method=MDG,
        order=q,
        nodes=nodes,
        test_nodes=nodes.nodes.copy(),
        weight_fns=amat_inv.copy(),
        quad_weights=quad_weights,
        node_weights=rho,
        amat=amat,
        amat_inv=amat_inv,
    )


@lru_cache(maxsize=None)
def tableau(method: str, q: int) -> MethodTableau:
    """The cached tableau for one (method, order)."""
    if method == MCG:
        return build_mcg_tableau(q)
    if method == MDG:
        return build_mdg_tableau(q)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def min_order(method: str) -> int:
    return 1 if method == MCG else 0


@lru_cache(maxsize=None)
def scheme_rule(method: str, q: int, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite form of the nodal update rule at dyadic depth.

    Returns (points, W): reference points on [0, 1] and a matrix W of shape
    (n_solved, n_points) such that xi_m = xi0 + k * W[m] . f(points).  Depth 0
    reproduces the plain quad_weights/nodes pair.
    """
    if depth < 0:
        raise ValueError(f"dyadic depth must be >= 0, got {depth}")
    tab = tableau(method, q)
    pieces = 1 << depth
    s = tab.nodes.nodes
    points = (np.arange(pieces)[:, None] + s[None, :]).ravel() / pieces
    wq = np.tile(tab.node_weights / pieces, pieces)
    W = tab.weight_values(points) * wq[None, :]
    points.setflags(write=False)
    W.setflags(write=False)
    return points, W


@lru_cache(maxsize=None)
def integration_rule(method: str, q: int, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite interpolatory node rule at dyadic depth for plain integrals
    over the reference interval; weights sum to 1."""
    if depth < 0:
        raise ValueError(f"dyadic depth must be >= 0, got {depth}")
    tab = tableau(method, q)
    pieces = 1 << depth
    s = tab.nodes.nodes
    points = (np.arange(pieces)[:, None] + s[None, :]).ravel() / pieces
    weights = np.tile(tab.node_weights / pieces, pieces)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights
