import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from freezewave.core import DimensionError, Field, Grid1D, Grid2D
from freezewave.liegroup import (SEAlgebraElement, SEGroupElement, action_derivative, ad_matrix,
                                 ad_spectrum, ad_spectrum_formula, bracket, compose,
                                 containment_defect, embedding_spectrum, exp_se, group_action,
                                 inverse, multiset_distance, random_algebra_element,
                                 symmetry_eigenpairs)

seeds = st.integers(0, 2**31)
dims = st.sampled_from([1, 2, 3])


def _elem(d, seed):
    return random_algebra_element(d, np.random.default_rng(seed))


@given(d=dims, seed=seeds)
def test_coords_round_trip(d, seed):
    mu = _elem(d, seed)
    back = SEAlgebraElement.from_coords(d, mu.coords())
    assert np.array_equal(back.S, mu.S) and np.array_equal(back.c, mu.c)
    assert np.array_equal(mu.S.T, -mu.S)


@given(d=dims, s1=seeds, s2=seeds, s3=seeds)
def test_bracket_is_lie_bracket(d, s1, s2, s3):
    a, b, c = _elem(d, s1), _elem(d, s2), _elem(d, s3)
    ab, ba = bracket(a, b), bracket(b, a)
    assert np.allclose(ab.coords(), -ba.coords())
    jac = (bracket(a, bracket(b, c)) + bracket(b, bracket(c, a)) + bracket(c, bracket(a, b)))
    assert np.max(np.abs(jac.coords())) < 1e-12
    comm = a.matrix() @ b.matrix() - b.matrix() @ a.matrix()
    assert np.allclose(ab.matrix(), comm)


@given(d=st.sampled_from([1, 2]), seed=seeds, t=st.floats(-3, 3))
def test_exp_matches_matrix_exponential(d, seed, t):
    mu = _elem(d, seed)
    g = exp_se(mu, t)
    assert np.allclose(g.matrix(), expm(t * mu.matrix()), atol=1e-11)
    assert g.orthogonality_defect() < 1e-13


def test_exp_small_angle_series():
    mu = SEAlgebraElement.rotation2d(1e-7, (1.0, 2.0))
    assert np.allclose(exp_se(mu).matrix(), expm(mu.matrix()), atol=1e-15)


@given(seed=seeds)
def test_group_laws(seed):
    rng = np.random.default_rng(seed)
    g = exp_se(random_algebra_element(2, rng))
    h = exp_se(random_algebra_element(2, rng))
    assert np.allclose(compose(g, h).matrix(), g.matrix() @ h.matrix())
    assert np.allclose(compose(g, inverse(g)).matrix(), np.eye(3), atol=1e-12)


@given(d=dims, seed=seeds)
def test_ad_spectrum_formula_and_containment(d, seed):
    mu = _elem(d, seed)
    assert multiset_distance(ad_spectrum(mu), ad_spectrum_formula(mu)) < 1e-10
    assert containment_defect(mu) < 1e-10


def test_ad_matrix_columns_are_brackets():
    mu = SEAlgebraElement.rotation2d(0.7, (0.2, -0.1))
    ad = ad_matrix(mu)
    e = np.array([0.0, 1.0, 0.0])
    nu = SEAlgebraElement.from_coords(2, e)
    assert np.allclose(ad @ e, bracket(nu, mu).coords())
    # se(2): eigenvalues 0, +-i theta
    assert multiset_distance(ad_spectrum(mu), [0, 0.7j, -0.7j]) < 1e-14


def test_embedding_spectrum_has_trailing_zero():
    mu = SEAlgebraElement.rotation2d(2.0)
    assert multiset_distance(embedding_spectrum(mu), [2j, -2j, 0]) < 1e-14


def test_multiset_distance():
    assert multiset_distance([1, 2, 3], [3, 1, 2]) == 0.0
    assert multiset_distance([1], [1, 2]) == float("inf")
    assert np.isclose(multiset_distance([0, 1], [1.1, 0]), 0.1)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        SEAlgebraElement(np.zeros((2, 2)), [1.0])
    with pytest.raises(DimensionError):
        bracket(_elem(2, 0), _elem(3, 0))
    with pytest.raises(ValueError):
        exp_se(_elem(3, 0))


def test_translation_action_1d():
    g = Grid1D(-10.0, 10.0, 2001)
    x = g.nodes()
    v = Field(g, np.tanh(x))
    shifted = group_action(SEGroupElement(np.eye(1), [1.5]), v)
    inner = np.abs(x) < 8
    assert np.max(np.abs(shifted.values[inner, 0] - np.tanh(x[inner] - 1.5))) < 1e-4


def test_rotation_action_2d_and_derivative():
    g = Grid2D(6.0, 121)
    x = g.nodes()
    v = Field(g, np.exp(-((x[:, 0] - 1.0) ** 2 + x[:, 1] ** 2)))
    rot = exp_se(SEAlgebraElement.rotation2d(np.pi / 2))
    w = group_action(rot, v).values[:, 0]
    expect = np.exp(-(x[:, 0] ** 2 + (x[:, 1] - 1.0) ** 2))
    assert np.max(np.abs(w - expect)) < 5e-3
    mu = SEAlgebraElement.rotation2d(1.0, (0.3, 0.0))
    gen = action_derivative(v, mu).values[:, 0]
    grad = -2.0 * np.column_stack([x[:, 0] - 1.0, x[:, 1]]) * v.values
    vel = x @ mu.S.T + mu.c
    exact = -np.sum(grad * vel, axis=1)
    inner = np.max(np.abs(x), axis=1) < 5.9
    assert np.max(np.abs(gen - exact)[inner]) < 1e-2


def test_symmetry_eigenpairs_1d_goldstone():
    g = Grid1D(-20.0, 20.0, 401)
    v = Field(g, np.tanh(g.nodes()))
    modes = symmetry_eigenpairs(v, SEAlgebraElement.translation([0.3]))
    assert len(modes) == 1 and modes[0].eigenvalue == 0
    assert not modes[0].degenerate


def test_symmetry_eigenpairs_flags_degenerate():
    g = Grid1D(-5.0, 5.0, 51)
    with pytest.warns(UserWarning):
        modes = symmetry_eigenpairs(Field(g, np.ones(51)), SEAlgebraElement.translation([0.0]))
    assert modes[0].degenerate
