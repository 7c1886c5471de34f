import numpy as np
import pytest

from motline import (
    InputError,
    barycentre_report,
    check_dispersion,
    convex_order,
    example1_family1,
    example1_family2,
    hoeffding_frechet,
    identity_coupling,
    is_martingale,
    is_monotone_support,
    make_coupling,
    make_measure,
    point_mass,
    product_coupling,
    random_convex_pair,
)

TOL = 1e-12


def test_make_measure_merges_duplicates():
    m = make_measure([1, 1, 2], [0.25, 0.25, 0.5])
    assert np.allclose(m.atoms, [1, 2])
    assert np.allclose(m.weights, [0.5, 0.5])


def test_make_measure_point_mass():
    m = make_measure([0], [1])
    assert m.atoms.tolist() == [0.0] and m.weights.tolist() == [1.0]


def test_make_measure_sorts():
    m = make_measure([3, 1], [0.5, 0.5])
    assert m.atoms.tolist() == [1.0, 3.0]


def test_make_measure_drops_zero_weights_and_renormalizes():
    m = make_measure([0, 1, 2], [0.0, 1.0, 3.0])
    assert m.atoms.tolist() == [1.0, 2.0]
    assert abs(m.weights.sum() - 1.0) <= TOL
    assert np.allclose(m.weights, [0.25, 0.75])


@pytest.mark.parametrize("atoms,weights", [([], []), ([0, 1], [0.5, -0.5])])
def test_make_measure_rejects_bad_input(atoms, weights):
    with pytest.raises(InputError):
        make_measure(atoms, weights)


def test_convex_order_examples():
    d0 = point_mass(0)
    pm1 = make_measure([-1, 1], [0.5, 0.5])
    assert convex_order(d0, pm1)
    assert not convex_order(pm1, d0)
    assert convex_order(pm1, pm1)


def test_convex_order_rejects_mean_mismatch():
    assert not convex_order(point_mass(0), make_measure([0, 1], [0.5, 0.5]))


def test_barycentre_report_martingale_is_zero():
    pi = product_coupling(point_mass(0), make_measure([-1, 1], [0.5, 0.5]))
    rep = barycentre_report(pi)
    assert rep.epsilon == 0.0
    assert rep.zero == (0.0,) and not rep.plus and not rep.minus


def test_barycentre_report_family_values(family1, family2):
    pi, _ = family1(4)
    assert abs(barycentre_report(pi).epsilon - 0.25) <= TOL
    pi, _ = family2(2)
    assert abs(barycentre_report(pi).epsilon - 0.4) <= TOL


def test_barycentre_report_epsilon_consistency():
    for seed in range(5):
        m, k = 2 + seed, 4 + seed
        mu, nu = random_convex_pair(seed, m=m, k=k)
        pi = hoeffding_frechet(mu, nu)
        rep = barycentre_report(pi)
        recomputed = float(np.dot(pi.first_marginal.weights, np.abs(rep.deviations)))
        assert abs(rep.epsilon - recomputed) <= TOL
        assert len(rep.plus) + len(rep.zero) + len(rep.minus) == len(pi.first_marginal)


def test_check_dispersion_martingale_true():
    pi = identity_coupling(make_measure([0, 1, 2], [0.3, 0.3, 0.4]))
    assert check_dispersion(pi)


def test_check_dispersion_antimonotone_false():
    pi = make_coupling([(0, 2, 0.5), (2, 0, 0.5)])
    assert not check_dispersion(pi)


def test_check_dispersion_hoeffding_frechet():
    for seed in range(20):
        mu, nu = random_convex_pair(seed, m=2 + seed % 4, k=5 + seed % 3)
        pi = hoeffding_frechet(mu, nu)
        assert is_monotone_support(pi)
        assert check_dispersion(pi)


def test_hoeffding_frechet_quantile_pairing():
    pi = hoeffding_frechet(make_measure([0, 1], [0.5, 0.5]), make_measure([2, 3], [0.5, 0.5]))
    assert pi.point_masses() == {(0.0, 2.0): 0.5, (1.0, 3.0): 0.5}


def test_hoeffding_frechet_from_point_mass_is_product():
    nu = make_measure([-1, 0, 2], [0.2, 0.3, 0.5])
    pi = hoeffding_frechet(point_mass(0), nu)
    assert pi.point_masses() == product_coupling(point_mass(0), nu).point_masses()


def test_hoeffding_frechet_breakpoint_merge():
    pi = hoeffding_frechet(make_measure([0, 1], [0.25, 0.75]), make_measure([0, 2], [0.5, 0.5]))
    expected = {(0.0, 0.0): 0.25, (1.0, 0.0): 0.25, (1.0, 2.0): 0.5}
    got = pi.point_masses()
    assert set(got) == set(expected)
    for key, val in expected.items():
        assert abs(got[key] - val) <= TOL


def test_is_monotone_support():
    mu = make_measure([0, 1], [0.5, 0.5])
    nu = make_measure([2, 3], [0.5, 0.5])
    assert is_monotone_support(hoeffding_frechet(mu, nu))
    assert not is_monotone_support(make_coupling([(0, 3, 0.5), (1, 2, 0.5)]))
    assert is_monotone_support(product_coupling(point_mass(0), nu))


def test_is_martingale_examples(family1):
    mu = make_measure([0, 1], [0.5, 0.5])
    assert is_martingale(identity_coupling(mu))
    pi, _ = family1(3)
    assert not is_martingale(pi)
    assert is_martingale(product_coupling(point_mass(0), make_measure([-1, 1], [0.5, 0.5])))


def test_martingale_iff_zero_epsilon():
    for seed in range(10):
        pi = _random_pi(seed)
        assert is_martingale(pi) == (barycentre_report(pi).epsilon <= 1e-9)


def _random_pi(seed):
    from motline import random_coupling

    mu, nu = random_convex_pair(seed, m=2 + seed % 3, k=4 + seed % 3)
    return random_coupling(seed + 1, mu, nu)


def test_coupling_marginals_match_points():
    for seed in range(10):
        pi = _random_pi(seed)
        mu = pi.first_marginal
        grouped = {}
        for a, w in zip(pi.x1, pi.w):
            grouped[a] = grouped.get(a, 0.0) + w
        for atom, weight in zip(mu.atoms, mu.weights):
            assert abs(grouped[float(atom)] - weight) <= TOL


def test_coupling_kernel_reconstructs():
    for seed in range(10):
        pi = _random_pi(seed)
        rebuilt = {}
        for x1, weight, kernel in pi.kernel_items():
            for b, v in zip(kernel.atoms, kernel.weights):
                rebuilt[(x1, float(b))] = weight * v
        original = pi.point_masses()
        assert set(rebuilt) == set(original)
        for key in original:
            assert abs(rebuilt[key] - original[key]) <= 1e-14


def test_make_coupling_rejects_bad_input():
    with pytest.raises(InputError):
        make_coupling([])
    with pytest.raises(InputError):
        make_coupling([(0, 0, -0.5), (1, 1, 1.5)])


def test_measures_immutable():
    m = make_measure([0, 1], [0.5, 0.5])
    with pytest.raises(ValueError):
        m.atoms[0] = 5.0
