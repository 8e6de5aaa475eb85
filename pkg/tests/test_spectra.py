import numpy as np
import pytest

from fracrb.fem import assemble_mass, build_mesh
from fracrb.spectra import FAMILIES, condition_study, family_matrix, singular_values


def test_singular_values_examples():
    assert np.allclose(singular_values(np.eye(4)), 1.0)
    assert singular_values(np.diag([1.0, -3.0, 2.0])).tolist() == [3.0, 2.0, 1.0]
    # a rotation-scaled matrix keeps its scale
    c, s = np.cos(0.3), np.sin(0.3)
    assert np.allclose(singular_values(2.0 * np.array([[c, -s], [s, c]])), 2.0)


def test_singular_values_errors():
    with pytest.raises(ValueError):
        singular_values(np.ones((2, 3)))
    with pytest.raises(ValueError):
        singular_values(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_mass_spectrum_closed_form():
    # eigenvalues of the P1 mass matrix are h (2 + cos(k pi h)) / 3
    n = 16
    h = 1.0 / n
    k = np.arange(1, n)
    exact = np.sort(h * (2.0 + np.cos(k * np.pi * h)) / 3.0)[::-1]
    assert np.allclose(singular_values(assemble_mass(build_mesh(n))), exact, rtol=1e-13)


def test_families():
    assert FAMILIES == ("A1-constant", "A2-Ex3", "A3-Ex4", "mass")
    for fam in FAMILIES:
        assert family_matrix(fam, 1.5, 8).shape == (7, 7)
    with pytest.raises(ValueError):
        family_matrix("A9", 1.5, 8)


@pytest.mark.parametrize("s", [1.8, 1.5, 1.2])
def test_constant_family_slopes(s):
    rep = condition_study("A1-constant", s, [2**k for k in range(4, 9)])
    assert rep.slope_max == pytest.approx(s - 1.0, abs=0.05)
    assert rep.slope_min == pytest.approx(-1.0, abs=0.05)
    # kappa grows like N^s
    assert rep.kappa_bound_constant() < 10.0


def test_mass_slopes():
    rep = condition_study("mass", 1.5, [2**k for k in range(4, 9)])
    assert rep.slope_max == pytest.approx(-1.0, abs=1e-3)
    assert rep.slope_min == pytest.approx(-1.0, abs=1e-2)


def test_level_validation():
    with pytest.raises(ValueError):
        condition_study("A1-constant", 1.5, [16, 24])
    with pytest.raises(ValueError):
        condition_study("A1-constant", 1.5, [32, 16])


def test_csv(tmp_path):
    rep = condition_study("A3-Ex4", 1.2, [16, 32, 64])
    rep.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "N,sigma_max,sigma_min,kappa"
    data = np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=1, comments="#")
    assert data.shape == (3, 4)
    assert np.allclose(data[:, 3], data[:, 1] / data[:, 2])
    assert lines[-1].startswith("# slope_sigma_max=")
