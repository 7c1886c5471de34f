import numpy as np
import pytest

from motline import (
    ConvexOrderError,
    CostSpec,
    InputError,
    KappaSpec,
    SizeGuardError,
    competitor_improve,
    convex_order,
    identity_coupling,
    is_martingale,
    kappa_competitor_improve,
    kappa_objective,
    kappa_solve_bruteforce,
    make_coupling,
    make_measure,
    martingale_vertices,
    monotonicity_check,
    mot_solve,
    optimal_coupling_1d,
    penalized_ot,
    point_mass,
    random_convex_pair,
    random_coupling,
    strassen_feasible,
)

from conftest import coupling_cost

TOL = 1e-9

# hand-built suboptimal martingale coupling for |x2 - x1| on a 2x4 grid:
# both kernels use the far atoms although nearer mean-preserving splits exist
SUBOPTIMAL = [(-1, -3, 0.25), (-1, 1, 0.25), (1, -1, 0.25), (1, 3, 0.25)]


def test_mot_solve_unique_coupling():
    mu = point_mass(0)
    nu = make_measure([-1, 1], [0.5, 0.5])
    value, plan = mot_solve(mu, nu, CostSpec.absolute())
    assert abs(value - 1.0) <= TOL
    assert plan.point_masses().keys() == {(0.0, -1.0), (0.0, 1.0)}


def test_mot_solve_equal_marginals_forces_identity():
    mu = make_measure([-1, 0, 2], [0.25, 0.5, 0.25])
    for cost in (CostSpec.absolute(), CostSpec.call(0.3), CostSpec.squared()):
        value, plan = mot_solve(mu, mu, cost)
        direct = float(np.dot(mu.weights, cost.evaluate(mu.atoms, mu.atoms)))
        assert abs(value - direct) <= TOL
        assert plan.point_masses().keys() == identity_coupling(mu).point_masses().keys()


def test_mot_solve_square_cost_is_second_moment_gap():
    for seed in range(10):
        mu, nu = random_convex_pair(seed, m=2 + seed % 3, k=4 + seed % 3)
        value, _ = mot_solve(mu, nu, CostSpec.squared())
        assert abs(value - (nu.moment(2) - mu.moment(2))) <= TOL


def test_mot_solve_affine_cost_shift():
    # adding b*x2 moves the value by b*mean(nu); adding b*x1 by b*mean(mu)
    mu, nu = random_convex_pair(3, m=3, k=5)
    base, _ = mot_solve(mu, nu, CostSpec.absolute())
    shifted = CostSpec.polynomial([(0, 1, 2.5)])
    combo, _ = mot_solve(mu, nu, CostSpec.from_matrix(
        CostSpec.absolute().matrix_for(mu, nu) + shifted.matrix_for(mu, nu)))
    assert abs(combo - base - 2.5 * nu.mean) <= 1e-8
    shifted = CostSpec.polynomial([(1, 0, -1.5)])
    combo, _ = mot_solve(mu, nu, CostSpec.from_matrix(
        CostSpec.absolute().matrix_for(mu, nu) + shifted.matrix_for(mu, nu)))
    assert abs(combo - base + 1.5 * mu.mean) <= 1e-8


def test_mot_solve_rejects_unordered():
    nu = make_measure([-1, 1], [0.5, 0.5])
    with pytest.raises(ConvexOrderError):
        mot_solve(nu, point_mass(0), CostSpec.absolute())


def test_strassen_examples():
    d0 = point_mass(0)
    pm1 = make_measure([-1, 1], [0.5, 0.5])
    assert strassen_feasible(d0, pm1)
    assert not strassen_feasible(pm1, d0)


def test_strassen_agrees_with_convex_order():
    for seed in range(40):
        mu, nu = random_convex_pair(seed, m=2 + seed % 3, k=4 + seed % 3)
        assert strassen_feasible(mu, nu) == convex_order(mu, nu)
        assert strassen_feasible(nu, mu) == convex_order(nu, mu)


def test_penalized_unique_coupling():
    value = penalized_ot(point_mass(0), make_measure([-1, 1], [0.5, 0.5]),
                         CostSpec.absolute(), 1.0)
    assert abs(value - 1.0) <= TOL


def test_penalized_equal_marginals_zero():
    mu = make_measure([0, 1], [0.5, 0.5])
    assert abs(penalized_ot(mu, mu, CostSpec.absolute(), 1.0)) <= TOL


def test_penalized_matches_mot():
    for seed in range(20):
        mu, nu = random_convex_pair(seed, m=2 + seed % 3, k=4 + seed % 3)
        direct, _ = mot_solve(mu, nu, CostSpec.absolute())
        relaxed = penalized_ot(mu, nu, CostSpec.absolute(), 1.0)
        assert abs(direct - relaxed) <= 1e-7


def test_kappa_objective_target_only_cost():
    mu, nu = random_convex_pair(1, m=3, k=5)
    pi = random_coupling(2, mu, nu)
    ref = random_coupling(3, mu, nu)
    cost = CostSpec.absolute()
    spec = KappaSpec.from_coupling(ref, lambda x1, x2, y2: float(cost.evaluate(x1, y2)))
    assert abs(kappa_objective(pi, spec) - coupling_cost(pi, lambda a, b: abs(b - a))) <= TOL


def test_kappa_objective_own_kernel_is_zero():
    mu, nu = random_convex_pair(4, m=3, k=5)
    pi = random_coupling(5, mu, nu)
    spec = KappaSpec.from_coupling(pi, lambda x1, x2, y2: abs(x2 - y2))
    assert kappa_objective(pi, spec) <= TOL


def test_kappa_objective_reference_kernel_distance():
    mu, nu = random_convex_pair(6, m=3, k=5)
    pi = random_coupling(7, mu, nu)
    ref = random_coupling(8, mu, nu)
    spec = KappaSpec.from_coupling(ref, lambda x1, x2, y2: abs(x2 - y2))
    expected = 0.0
    from motline import w_p_1d

    ref_kernels = {x: k for x, _, k in ref.kernel_items()}
    for x1, weight, kernel in pi.kernel_items():
        expected += weight * w_p_1d(ref_kernels[x1], kernel, 1)
    assert abs(kappa_objective(pi, spec) - expected) <= TOL


def test_kappa_objective_missing_kernel_atom():
    mu, nu = random_convex_pair(9, m=3, k=5)
    pi = random_coupling(10, mu, nu)
    spec = KappaSpec({0.123: point_mass(0.0)}, lambda x1, x2, y2: 0.0)
    with pytest.raises(InputError):
        kappa_objective(pi, spec)


def test_kappa_bruteforce_target_only_matches_mot():
    mu, nu = random_convex_pair(11, m=3, k=4, radius=4.0)
    ref = random_coupling(12, mu, nu)
    cost = CostSpec.absolute()
    spec = KappaSpec.from_coupling(ref, lambda x1, x2, y2: float(cost.evaluate(x1, y2)))
    value, _ = kappa_solve_bruteforce(spec, mu, nu)
    direct, _ = mot_solve(mu, nu, cost)
    assert abs(value - direct) <= TOL


def test_kappa_bruteforce_singleton_mu():
    mu = point_mass(0)
    nu = make_measure([-1, 1], [0.5, 0.5])
    spec = KappaSpec({0.0: nu}, lambda x1, x2, y2: abs(x2 - y2))
    value, plan = kappa_solve_bruteforce(spec, mu, nu)
    assert value <= TOL
    assert plan.point_masses().keys() == {(0.0, -1.0), (0.0, 1.0)}


def test_kappa_bruteforce_attains_zero_at_reference_martingale():
    mu, nu = random_convex_pair(13, m=3, k=4, radius=4.0)
    _, mart = mot_solve(mu, nu, CostSpec.absolute())
    spec = KappaSpec.from_coupling(mart, lambda x1, x2, y2: abs(x2 - y2))
    value, plan = kappa_solve_bruteforce(spec, mu, nu)
    assert value <= TOL
    assert kappa_objective(plan, spec) <= TOL


def test_kappa_bruteforce_size_guard():
    mu, nu = random_convex_pair(14, m=5, k=7)
    spec = KappaSpec.from_coupling(random_coupling(15, mu, nu), lambda x1, x2, y2: 0.0)
    with pytest.raises(SizeGuardError):
        kappa_solve_bruteforce(spec, mu, nu)


def test_martingale_vertices_satisfy_constraints():
    mu, nu = random_convex_pair(16, m=3, k=4, radius=4.0)
    for vertex in martingale_vertices(mu, nu):
        grid = vertex.reshape(len(mu), len(nu))
        assert np.allclose(grid.sum(axis=1), mu.weights, atol=1e-8)
        assert np.allclose(grid.sum(axis=0), nu.weights, atol=1e-8)
        gaps = nu.atoms[None, :] - mu.atoms[:, None]
        assert np.max(np.abs((grid * gaps).sum(axis=1))) <= 1e-8


def test_competitor_square_cost_is_invariant():
    pi = make_coupling(SUBOPTIMAL)
    assert competitor_improve(pi, CostSpec.squared()) is None


def test_competitor_single_point():
    assert competitor_improve(make_coupling([(0.5, 1.5, 1.0)]), CostSpec.absolute()) is None


def test_competitor_finds_cheaper_arrangement():
    alpha = make_coupling(SUBOPTIMAL)
    better = competitor_improve(alpha, CostSpec.absolute())
    assert better is not None
    # same marginals, same conditional barycentres, strictly cheaper
    assert np.allclose(better.first_marginal.atoms, alpha.first_marginal.atoms)
    assert np.allclose(better.first_marginal.weights, alpha.first_marginal.weights, atol=TOL)
    assert np.allclose(better.second_marginal.atoms, alpha.second_marginal.atoms)
    assert np.allclose(better.second_marginal.weights, alpha.second_marginal.weights, atol=TOL)
    for x1, weight, kernel in alpha.kernel_items():
        assert abs(better.kernel(x1).mean - kernel.mean) <= TOL
    old = coupling_cost(alpha, lambda a, b: abs(b - a))
    new = coupling_cost(better, lambda a, b: abs(b - a))
    assert new < old - 1e-7


def test_competitor_never_moves_marginals_or_barycentres():
    for seed in range(10):
        mu, nu = random_convex_pair(seed, m=2 + seed % 3, k=4 + seed % 2)
        alpha = random_coupling(seed + 77, mu, nu)
        better = competitor_improve(alpha, CostSpec.absolute(), tol=1e-12)
        if better is None:
            continue
        assert np.allclose(better.first_marginal.weights, alpha.first_marginal.weights, atol=TOL)
        assert np.allclose(better.second_marginal.weights, alpha.second_marginal.weights, atol=TOL)
        for x1, _, kernel in alpha.kernel_items():
            assert abs(better.kernel(x1).mean - kernel.mean) <= TOL


def test_monotonicity_check_zero_on_optimizers():
    for seed in range(5):
        mu, nu = random_convex_pair(seed, m=2 + seed % 3, k=4 + seed % 3)
        cost = CostSpec.absolute()
        _, optimal = mot_solve(mu, nu, cost)
        report = monotonicity_check(optimal, cost, samples=60, subset_size=4, rng_seed=seed)
        assert report.n_violations == 0


def test_monotonicity_check_identity_coupling():
    mu = make_measure([0, 1, 3], [0.3, 0.3, 0.4])
    pi = identity_coupling(mu)
    for cost in (CostSpec.absolute(), CostSpec.squared(), CostSpec.call(1.0)):
        report = monotonicity_check(pi, cost, samples=40, subset_size=3, rng_seed=1)
        assert report.n_violations == 0


def test_monotonicity_check_flags_suboptimal_coupling():
    pi = make_coupling(SUBOPTIMAL)
    assert is_martingale(pi)
    value, _ = mot_solve(pi.first_marginal, pi.second_marginal, CostSpec.absolute())
    assert value < coupling_cost(pi, lambda a, b: abs(b - a)) - 1e-6
    report = monotonicity_check(pi, CostSpec.absolute(), samples=100, subset_size=4, rng_seed=11)
    assert report.n_violations > 0


def test_kappa_competitor_reduces_to_plain_competitor():
    mu, nu = random_convex_pair(42, m=3, k=5, radius=5.0)
    alpha = random_coupling(43, mu, nu)
    cost = CostSpec.absolute()
    ref = random_coupling(44, mu, nu)
    spec = KappaSpec.from_coupling(ref, lambda x1, x2, y2: float(cost.evaluate(x1, y2)))
    gammas = {x1: optimal_coupling_1d(spec.kernel(x1), kern)
              for x1, _, kern in alpha.kernel_items()}
    out = kappa_competitor_improve(alpha, gammas, spec)
    plain = competitor_improve(alpha, cost)
    assert (out is None) == (plain is None)
    if out is not None:
        improved, _ = out
        assert abs(coupling_cost(improved, lambda a, b: abs(b - a))
                   - coupling_cost(plain, lambda a, b: abs(b - a))) <= TOL


def test_kappa_competitor_zero_value_is_minimal():
    mu, nu = random_convex_pair(45, m=3, k=4)
    alpha = random_coupling(46, mu, nu)
    spec = KappaSpec.from_coupling(alpha, lambda x1, x2, y2: abs(x2 - y2))
    gammas = {x1: optimal_coupling_1d(spec.kernel(x1), kern)
              for x1, _, kern in alpha.kernel_items()}
    assert kappa_competitor_improve(alpha, gammas, spec) is None


def test_kappa_competitor_rejects_mismatched_plans():
    mu, nu = random_convex_pair(47, m=2, k=3)
    alpha = random_coupling(48, mu, nu)
    other = random_coupling(49, mu, nu)
    spec = KappaSpec.from_coupling(alpha, lambda x1, x2, y2: abs(x2 - y2))
    bad = {x1: optimal_coupling_1d(spec.kernel(x1), kern)
           for x1, _, kern in other.kernel_items()}
    with pytest.raises(InputError):
        kappa_competitor_improve(alpha, bad, spec)


def _competitor_vertices(alpha):
    """Vertices of the competitor polytope of alpha: couplings on the same grid
    with alpha's marginals and conditional barycentres (basis enumeration)."""
    import itertools

    sa = alpha.first_marginal
    sb = alpha.second_marginal
    m, k = len(sa), len(sb)
    grid = np.zeros((m, k))
    ai = {float(x): i for i, x in enumerate(sa.atoms)}
    bj = {float(y): j for j, y in enumerate(sb.atoms)}
    for x1, x2, w in zip(alpha.x1, alpha.x2, alpha.w):
        grid[ai[float(x1)], bj[float(x2)]] = w
    rows = []
    rhs = []
    for i in range(m):
        row = np.zeros(m * k)
        row[i * k : (i + 1) * k] = 1.0
        rows.append(row)
        rhs.append(grid[i].sum())
    for j in range(k):
        row = np.zeros(m * k)
        row[j::k] = 1.0
        rows.append(row)
        rhs.append(grid[:, j].sum())
    for i in range(m):
        row = np.zeros(m * k)
        row[i * k : (i + 1) * k] = sb.atoms
        rows.append(row)
        rhs.append(float(np.dot(grid[i], sb.atoms)))
    a = np.array(rows)
    b = np.array(rhs)
    rank = int(np.linalg.matrix_rank(a, tol=1e-9))
    seen = set()
    out = []
    for cols in itertools.combinations(range(m * k), rank):
        sub = a[:, cols]
        x, _, rnk, _ = np.linalg.lstsq(sub, b, rcond=None)
        if rnk < rank or np.linalg.norm(sub @ x - b) > 1e-9 or np.any(x < -1e-9):
            continue
        full = np.zeros(m * k)
        full[list(cols)] = np.maximum(x, 0.0)
        key = tuple(np.round(full, 9))
        if key in seen:
            continue
        seen.add(key)
        out.append(make_coupling([(sa.atoms[i], sb.atoms[j], full[i * k + j])
                                  for i in range(m) for j in range(k)
                                  if full[i * k + j] > 1e-12]))
    return out


def test_kappa_competitor_agrees_with_vertex_search():
    mu, nu = random_convex_pair(50, m=2, k=3, radius=3.0)
    alpha = random_coupling(51, mu, nu)
    ref = random_coupling(52, mu, nu)
    spec = KappaSpec.from_coupling(ref, lambda x1, x2, y2: abs(x2 - y2))
    gammas = {x1: optimal_coupling_1d(spec.kernel(x1), kern)
              for x1, _, kern in alpha.kernel_items()}
    current = kappa_objective(alpha, spec)
    out = kappa_competitor_improve(alpha, gammas, spec, tol=1e-12)
    achieved = current if out is None else kappa_objective(out[0], spec)
    # oracle: the objective is concave over the competitor polytope, so its
    # minimum is attained at one of the enumerated vertices
    oracle = min(kappa_objective(comp, spec) for comp in _competitor_vertices(alpha))
    assert achieved <= oracle + 1e-9
    assert oracle <= achieved + 1e-9
