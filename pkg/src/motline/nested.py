"""Nested (bicausal) Wasserstein distance between two-period couplings and the
LP projection onto the martingale polytope."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvexOrderError, InternalError, SizeGuardError
from .lp import LinearProgram, solve_lp
from .measures import (
    DEFAULT_TOL_MART,
    DiscreteCoupling,
    DiscreteMeasure,
    barycentre_report,
    convex_order,
    identity_coupling,
    make_coupling,
)
from .transport import TransportPlan, _require_p, optimal_coupling_1d, solve_transport, w_p_1d

_DROP = 1e-12


@dataclass(frozen=True, eq=False)
class BicausalPlan:
    """Outer plan on first coordinates plus one inner plan per outer support pair.

    ``cost`` is the raw p-power objective
    sum over (i, j) of outer[i, j] * (|x1_i - y1_j|^p + inner cost); the
    distance witnessed by the plan is ``cost ** (1/p)``.
    """

    outer: TransportPlan
    inners: dict
    p: float
    cost: float

    @property
    def distance(self) -> float:
        return max(self.cost, 0.0) ** (1.0 / self.p)


def nested_w_p(pi: DiscreteCoupling, rho: DiscreteCoupling, p: float = 1.0):
    """Nested p-Wasserstein distance, returning (value, witness plan).

    Inner conditional distances are computed in closed form on the line; the
    outer problem is a transportation LP with cost |x1 - y1|^p + inner value.
    """
    p = _require_p(p)
    a_items = pi.kernel_items()
    b_items = rho.kernel_items()
    inner = np.array([[w_p_1d(ka, kb, p) ** p for _, _, kb in b_items]
                      for _, _, ka in a_items])
    a_atoms = np.array([x for x, _, _ in a_items])
    b_atoms = np.array([y for y, _, _ in b_items])
    outer_cost = np.abs(a_atoms[:, None] - b_atoms[None, :]) ** p + inner
    value, matrix = solve_transport(outer_cost,
                                    pi.first_marginal.weights,
                                    rho.first_marginal.weights)
    outer = TransportPlan(pi.first_marginal, rho.first_marginal, matrix)
    inners = {}
    for i, j in zip(*np.nonzero(matrix > _DROP)):
        inners[(int(i), int(j))] = optimal_coupling_1d(a_items[i][2], b_items[j][2])
    cost = float(np.sum(matrix * outer_cost))
    return max(value, 0.0) ** (1.0 / p), BicausalPlan(outer, inners, p, cost)


def nd_lower_bound(pi: DiscreteCoupling) -> float:
    """Barycentre deviation of the coupling: a lower bound, in nested
    1-Wasserstein distance, on how far every martingale coupling with the same
    marginals must be."""
    return barycentre_report(pi).epsilon


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    """Diagonal-restricted projection onto the martingale polytope.

    ``value`` is an upper value for the nested-distance projection; it always
    dominates the universal lower bound ``lower_bound``.
    """

    value: float
    projected: DiscreteCoupling
    witness: BicausalPlan
    lower_bound: float


def _projection_lp(pi: DiscreteCoupling, pairing: Optional[list] = None):
    """Joint LP over inner plans and target coupling for a fixed outer pairing.

    ``pairing[i]`` is the target-side row matched with source kernel i; the
    identity pairing yields the diagonal-restricted projection.  Requires the
    matched first-marginal masses to agree.  Returns (inner objective value,
    target masses, inner plan masses) or raises ConvexOrderError when the
    martingale polytope is empty.
    """
    mu = pi.first_marginal
    nu = pi.second_marginal
    m, k = len(mu), len(nu)
    if pairing is None:
        pairing = list(range(m))
    items = pi.kernel_items()
    supports = [kernel.atoms for _, _, kernel in items]
    joint = [weight * kernel.weights for _, weight, kernel in items]

    offsets, n_rho = [], 0
    for sup in supports:
        offsets.append(n_rho)
        n_rho += len(sup) * k
    tgt0 = n_rho
    n_vars = n_rho + m * k

    def rho_var(i, a, b):
        return offsets[i] + a * k + b

    def tgt_var(r, b):
        return tgt0 + r * k + b

    rows, rhs = [], []
    # inner source marginals: each (x1_i, x2_a) mass of pi is distributed over y2
    for i, sup in enumerate(supports):
        for a in range(len(sup)):
            row = np.zeros(n_vars)
            row[rho_var(i, a, 0) : rho_var(i, a, 0) + k] = 1.0
            rows.append(row)
            rhs.append(joint[i][a])
    # inner target marginals tie the plans to the target coupling rows
    for i, sup in enumerate(supports):
        r = pairing[i]
        for b in range(k):
            row = np.zeros(n_vars)
            for a in range(len(sup)):
                row[rho_var(i, a, b)] = 1.0
            row[tgt_var(r, b)] = -1.0
            rows.append(row)
            rhs.append(0.0)
    # target second marginal
    for b in range(k):
        row = np.zeros(n_vars)
        for r in range(m):
            row[tgt_var(r, b)] = 1.0
        rows.append(row)
        rhs.append(nu.weights[b])
    # martingale constraints on the target
    for r in range(m):
        row = np.zeros(n_vars)
        for b in range(k):
            row[tgt_var(r, b)] = nu.atoms[b] - mu.atoms[r]
        rows.append(row)
        rhs.append(0.0)

    objective = np.zeros(n_vars)
    for i, sup in enumerate(supports):
        for a, x2 in enumerate(sup):
            for b, y2 in enumerate(nu.atoms):
                objective[rho_var(i, a, b)] = abs(x2 - y2)

    sol = solve_lp(LinearProgram(objective=objective, a_eq=np.array(rows), b_eq=np.array(rhs)))
    if sol.status == "infeasible":
        raise ConvexOrderError("martingale polytope is empty: marginals not in convex order")
    if sol.status != "optimal":
        raise InternalError(f"projection LP reported {sol.status}")
    target = sol.x[tgt0:].reshape(m, k)
    rho = [sol.x[offsets[i] : offsets[i] + len(supports[i]) * k].reshape(len(supports[i]), k)
           for i in range(m)]
    return sol.objective, target, rho


def project_to_martingale(pi: DiscreteCoupling,
                          tol_mart: float = DEFAULT_TOL_MART) -> ProjectionResult:
    """Project a coupling onto the martingale couplings of its own marginals.

    Solves a single LP over the target coupling and one inner transport plan
    per first-coordinate atom, with the outer plan fixed to the identity
    (legitimate since both couplings share the first marginal).  The returned
    value is an upper value for the nested-distance projection; the exact
    projection is sandwiched between ``lower_bound`` and ``value``.
    """
    mu = pi.first_marginal
    nu = pi.second_marginal
    value, target, _ = _projection_lp(pi)
    points = [(mu.atoms[r], nu.atoms[b], target[r, b])
              for r, b in zip(*np.nonzero(target > _DROP))]
    projected = make_coupling(points)

    # given the optimal target, the cheapest inner plans under |x2 - y2| are
    # the monotone couplings, whose marginals are exact by construction
    outer = TransportPlan(mu, mu, np.diag(mu.weights))
    inners = {}
    cost = 0.0
    proj_kernels = {float(x): kern for x, _, kern in projected.kernel_items()}
    for i, (x1, weight, kernel) in enumerate(pi.kernel_items()):
        plan = optimal_coupling_1d(kernel, proj_kernels[float(mu.atoms[i])])
        inners[(i, i)] = plan
        cost += weight * plan.cost_p(1.0)
    witness = BicausalPlan(outer, inners, 1.0, cost)
    return ProjectionResult(float(value), projected, witness, nd_lower_bound(pi))


def project_bruteforce(pi: DiscreteCoupling) -> float:
    """Unrestricted bicausal projection value by outer-permutation enumeration.

    Test oracle only: requires at most 3 first-marginal atoms with uniform
    weights, where permutation matrices exhaust the outer-plan vertices.
    """
    mu = pi.first_marginal
    if len(mu) > 3:
        raise SizeGuardError("brute-force projection is limited to 3 first-marginal atoms")
    if np.max(mu.weights) - np.min(mu.weights) > 1e-12:
        raise SizeGuardError("brute-force projection requires uniform first-marginal weights")
    best = np.inf
    for perm in itertools.permutations(range(len(mu))):
        outer = float(np.dot(mu.weights, np.abs(mu.atoms - mu.atoms[list(perm)])))
        try:
            inner, _, _ = _projection_lp(pi, pairing=list(perm))
        except ConvexOrderError:
            raise
        best = min(best, outer + inner)
    return best
