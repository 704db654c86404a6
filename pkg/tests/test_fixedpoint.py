import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varlab import fixedpoint as fp
from varlab.varprinciple import phi_of_rho


def shifted(spec, c):
    return fp.PotentialSpec(spec.dim, lambda x: spec.P(x) + c, spec.A, name="shifted")


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("rho", [1.0, 4.0, 25.0])
def test_fp_phi_linear(c, rho):
    assert abs(fp.fp_phi(fp.linear(c), rho) - c / (2 * np.sqrt(rho))) <= 1e-4


def test_fp_phi_linear_grid_oracle():
    r = 2.0
    xs = np.append(np.arange(-r + 1e-4, r, 1e-4), r * (1 - 1e-12))
    oracle = np.min((r - xs) / (4.0 - xs**2))
    assert abs(oracle - 0.25) <= 1e-4
    assert abs(fp.fp_phi(fp.linear(1.0), 4.0) - oracle) <= 1e-4


def test_fp_phi_constant_and_identity():
    assert fp.fp_phi(fp.constant(3.0), 2.0) == 0.0
    for rho in (0.5, 4.0):
        assert fp.fp_phi(fp.quadratic(0.5), rho) == pytest.approx(0.5, abs=1e-6)


def test_fp_phi_rejects_nonpositive_rho():
    with pytest.raises(ValueError):
        fp.fp_phi(fp.linear(), 0.0)


def test_fixed_point_of_linear_potential():
    rep = fp.find_fixed_point(fp.linear(1.0), 4.0)
    assert rep.below_half and rep.found
    assert abs(rep.point[0] - 1.0) <= 1e-6
    assert rep.norm < 2.0
    assert fp.certify(fp.linear(1.0), rep.point, 4.0)


def test_zero_potential_fixed_point():
    rep = fp.find_fixed_point(fp.constant(0.0, dim=2), 1.0)
    assert rep.found and np.all(np.abs(rep.point) <= 1e-12)


def test_identity_plus_constant_is_verdict_only():
    spec = fp.quadratic(0.5, 10.0)
    rep = fp.find_fixed_point(spec, 4.0)
    assert not rep.below_half
    assert rep.flag == "verdict-only" and not rep.found
    assert rep.as_json()["fixed_point"] is None


@pytest.mark.parametrize("c", [0.25, 0.5, 1.0, 2.0, 3.0])
def test_fixed_point_found_whenever_quotient_below_half(c):
    spec = fp.linear(c, dim=2)
    for rho in (1.0, 9.0, 36.0):
        rep = fp.find_fixed_point(spec, rho)
        if rep.phi_hat < 0.5 - 1e-3:
            assert rep.found and rep.norm < np.sqrt(rho)
            # certificate from serialized coordinates
            x = np.array([float(format(v, '.17g')) for v in rep.point])
            assert np.linalg.norm(spec.A(x) - x) <= 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(-100, 100), st.sampled_from([1.0, 4.0, 25.0]))
def test_fp_shift_invariance(c, rho):
    spec = fp.linear(1.0)
    pt = phi_of_rho(spec.pair(), rho)
    b = fp.fp_phi(shifted(spec, c), rho)
    gap = rho - spec.pair().psi(pt.certificate_x)
    roundoff = 8 * np.finfo(float).eps * (1.0 + abs(c) + abs(pt.m_hat)) / gap
    assert abs(pt.phi_hat - b) <= 1e-10 + roundoff


def test_gradients_of_test_potentials():
    for spec in (fp.linear(2.0, 3), fp.quadratic(0.25, 1.0, 2), fp.plateau(2)):
        assert spec.gradient_error() <= 1e-6


def test_plateau_profile_values():
    spec = fp.plateau(2)
    for r, expected in ((1.5, 2.25), (3.0, 4.0), (6.0, 36.0), (12.0, 64.0)):
        x = np.array([r, 0.0])
        # plateau tops sit a smoothing width below the unsmoothed value
        assert spec.P(x) == pytest.approx(expected, rel=1e-2)


RADII = np.geomspace(0.5, 16.0, 40)


def test_plateau_scan_straddles():
    rep = fp.thm5_scan(fp.plateau(2), RADII)
    assert rep.straddles
    assert rep.tail_min < 0.48 and rep.tail_max > 0.52


def test_quarter_quadratic_does_not_straddle():
    rep = fp.thm5_scan(fp.quadratic(0.25, dim=2), RADII)
    assert not rep.straddles
    np.testing.assert_allclose(rep.ratio, 0.25, atol=1e-6)


def test_zero_potential_scan():
    rep = fp.thm5_scan(fp.constant(0.0, 2), RADII[:8])
    assert not rep.straddles and np.all(rep.ratio == 0.0)


def test_scan_rejects_bad_radii():
    with pytest.raises(ValueError):
        fp.thm5_scan(fp.linear(), [1.0, 1.0])
    with pytest.raises(ValueError):
        fp.thm5_scan(fp.linear(), [])
