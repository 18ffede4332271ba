import math

import numpy as np
import pytest

from seglab.exact import (
    C_INFTY,
    GAMMA,
    NU_BAR_UPPER_BOUND,
    AngularSupport,
    SupportError,
    exact_field,
    exact_frequency_values,
    exact_minimizer,
    exact_total_energy,
    min_homogeneity,
    pohozaev_sides,
    psi,
    psi_support,
)
from seglab.geometry import build_grid

S2 = math.sqrt(2) / 2


@pytest.mark.parametrize(
    "theta, expected",
    [
        (2 * math.pi / 3, (1, 0, 0)),
        (0.0, (0, 0, 1)),
        (math.pi, (S2, S2, 0)),
        (math.pi / 3, (S2, 0, S2)),
        (4 * math.pi / 3, (0, 1, 0)),
        (2 * math.pi, (0, 0, 1)),
        (-2 * math.pi / 3, (0, 1, 0)),
    ],
)
def test_psi_values(theta, expected):
    assert np.allclose(psi(theta), expected, atol=1e-15)


def test_psi_product_zero_dense():
    t = np.random.default_rng(0).uniform(0, 2 * math.pi, 10**6)
    v = psi(t)
    assert np.all(v[0] * v[1] * v[2] == 0.0)
    assert v.min() >= 0 and v.max() <= 1


def test_psi_angular_ode():
    d = 1e-4
    t = np.linspace(0.05, 4 * math.pi / 3 - 0.05, 200)
    f = lambda s: psi(s)[0]
    second = (f(t + d) - 2 * f(t) + f(t - d)) / d**2
    assert np.abs(second + GAMMA**2 * f(t)).max() < 1e-6


def test_exact_minimizer_values():
    assert np.all(exact_minimizer(0.0, 1.234) == 0)
    t = np.linspace(0, 2 * math.pi, 17)
    assert np.allclose(exact_minimizer(1.0, t), psi(t))
    assert np.allclose(exact_minimizer(0.25, 2 * math.pi / 3), (0.25**0.75, 0, 0))
    assert 0.25**0.75 == pytest.approx(0.35355, abs=1e-5)
    with pytest.raises(ValueError):
        exact_minimizer(-0.1, 0.0)


def test_frequency_values():
    E, H, N = exact_frequency_values(1.0)
    assert E == pytest.approx(3 * math.pi / 2)
    assert H == pytest.approx(2 * math.pi)
    assert N == 0.75
    E, H, N = exact_frequency_values(0.5)
    assert E == pytest.approx(1.5 * math.pi * 0.5**1.5)
    assert N == 0.75
    with pytest.raises(ValueError):
        exact_frequency_values(0.0)


def test_frequency_values_by_quadrature():
    # independent check: integrate |grad v|^2 and v^2 in polar coordinates
    from scipy.integrate import quad

    g = GAMMA
    angular = quad(lambda t: math.sin(g * t) ** 2, 0, 4 * math.pi / 3)[0]
    assert angular == pytest.approx(2 * math.pi / 3)
    # |grad(r^g sin(g t))|^2 = g^2 r^(2g-2); integrate r dr over [0, 1]
    radial = quad(lambda r: g**2 * r ** (2 * g - 1), 0, 1)[0]
    E = 3 * radial * 2 * (4 * math.pi / 3) / 2  # sin^2 + cos^2 averages to 1 on the arc
    assert E == pytest.approx(C_INFTY)


def test_total_energy():
    assert exact_total_energy() == pytest.approx(4.71238898038469, rel=1e-14)
    assert exact_total_energy(r=0.3) == pytest.approx(C_INFTY * 0.3**1.5)
    assert exact_total_energy(sigma=2.0) == pytest.approx(4 * C_INFTY)


def test_pohozaev_sides_closed_form():
    for r in (0.1, 0.5, 1.0):
        lhs, rhs = pohozaev_sides(r)
        target = 4 * math.pi * (9 / 16) * math.sqrt(r)
        assert lhs == pytest.approx(target)
        assert rhs == pytest.approx(target)


def test_exact_field_sampling():
    g = build_grid("disc", 64)
    f = exact_field(g)
    f.validate()
    assert np.all(np.prod(f.values, axis=0) == 0)
    assert np.all(f.values[:, g.exterior] == 0)
    homo = exact_field(g, boundary="homogeneous")
    assert np.allclose(homo.values[:, g.interior], f.values[:, g.interior])
    with pytest.raises(ValueError):
        exact_field(g, boundary="nope")


class TestMinHomogeneity:
    def test_psi_support(self):
        assert min_homogeneity(psi_support()) == 0.75

    def test_matches_frequency(self):
        assert min_homogeneity(psi_support()) == exact_frequency_values(0.3)[2]

    def test_two_arcs(self):
        s = AngularSupport((((0.0, 1.0), (2.0, 3.0)), ((0.5, 2.5),), ((3.0, 2 * math.pi),)))
        assert s.arc_count(0) == 2
        assert min_homogeneity(s) == 1.0

    def test_wraparound_is_one_arc(self):
        s = AngularSupport((((5.0, 2 * math.pi), (0.0, 1.0)), ((0.5, 3.0),), ((2.5, 5.5),)))
        assert s.arc_count(0) == 1
        assert min_homogeneity(s) == 0.75

    def test_full_circle_rejected(self):
        s = AngularSupport((((0.0, 2 * math.pi),), ((1.0, 2.0),), ((3.0, 4.0),)))
        with pytest.raises(SupportError):
            min_homogeneity(s)

    def test_triple_overlap_rejected(self):
        s = AngularSupport((((0.0, 2.0),), ((1.0, 3.0),), ((1.5, 4.0),)))
        with pytest.raises(SupportError):
            min_homogeneity(s)

    def test_overlap_at_zero_detected(self):
        s = AngularSupport((((0.0, 0.5),), ((6.0, 6.5),), ((6.1, 6.4),)))
        with pytest.raises(SupportError):
            min_homogeneity(s)

    def test_connected_override(self):
        assert min_homogeneity(psi_support(), connected=[True, True, False]) == 1.0

    def test_nu_bar_is_documentation_only(self):
        assert 0 < NU_BAR_UPPER_BOUND <= 2 / 3
