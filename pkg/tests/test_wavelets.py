import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdpwave.errors import ArgumentError, ConfigurationError, DomainError, ResolutionError
from fdpwave.wavelets import (
    MultiresCoefficients,
    MultiresIndexSet,
    build_basis,
    daubechies_filter,
    empirical_coefficients,
    exact_coefficients,
    midpoints,
    reconstruct_grid,
    reconstruct_point,
    zero_coefficients,
)


def gram(basis, levels, M):
    t = midpoints(M)
    D = np.hstack([basis.design(l, t) for l in levels])
    return D.T @ D / M


# -- construction --------------------------------------------------------------


def test_haar_mother_shape(haar):
    assert haar.eval_psi(0, 1, 0.25) == 1.0
    assert haar.eval_psi(0, 1, 0.75) == -1.0
    assert haar.eval_psi(0, 1, 0.0) == 1.0


def test_haar_outside_support_is_zero(haar):
    # psi_{2,2} lives on [1/4, 1/2)
    for t in (0.0, 0.1, 0.6, 0.9, 0.999):
        assert haar.eval_psi(2, 2, t) == 0.0


def test_haar_father(haar):
    for t in np.linspace(0, 1, 11):
        assert haar.eval_phi(1, t) == 1.0
    b2 = build_basis("haar", 1, l0=2)
    assert b2.eval_phi(1, 0.1) == 2.0
    assert b2.eval_phi(1, 0.3) == 0.0


def test_domain_error(haar):
    with pytest.raises(DomainError):
        haar.eval_phi(1, 1.5)
    with pytest.raises(DomainError):
        haar.eval_psi(0, 1, -0.1)


@pytest.mark.parametrize("family,A", [("daubechies", 9), ("daubechies", 1), ("haar", 2), ("symlet", 4)])
def test_unsupported_configurations(family, A):
    with pytest.raises(ConfigurationError):
        build_basis(family, A)


def test_bad_shift(haar):
    with pytest.raises(ArgumentError):
        haar.eval_psi(2, 5, 0.3)
    with pytest.raises(ArgumentError):
        haar.eval_psi(2, 0, 0.3)


@pytest.mark.parametrize("A", [2, 3, 4])
def test_filter_properties(A):
    h = np.array(daubechies_filter(A))
    g = (-1.0) ** np.arange(2 * A) * h[::-1]
    assert len(h) == 2 * A
    assert np.isclose(h.sum(), np.sqrt(2), atol=1e-13)
    assert np.isclose(h @ h, 1.0, atol=1e-13)
    for s in range(1, A):
        assert abs(h[2 * s:] @ h[: -2 * s]) < 1e-13
    k = np.arange(2 * A)
    for p in range(A):
        assert abs(np.sum(g * k**p)) < 1e-9


def test_db2_closed_form():
    r3 = np.sqrt(3.0)
    expected = np.array([1 + r3, 3 + r3, 3 - r3, 1 - r3]) / (4 * np.sqrt(2.0))
    assert np.allclose(daubechies_filter(2), expected, atol=1e-13)


# -- orthonormality --------------------------------------------------------------


def test_haar_gram_is_identity(haar):
    G = gram(haar, range(0, 6), 1 << 14)
    assert np.abs(G - np.eye(G.shape[0])).max() < 1e-12


@pytest.mark.parametrize("A,l0", [(2, 3), (3, 0), (4, 2)])
def test_daubechies_gram_identity(A, l0):
    # 2^14 quadrature points per unit of dilated time at the finest level checked.
    b = build_basis("daubechies", A, l0)
    levels = range(l0, l0 + 3)
    G = gram(b, levels, 1 << (14 + max(levels)))
    assert np.abs(G - np.eye(G.shape[0])).max() < 1e-6


@pytest.mark.parametrize("family,A", [("haar", 1), ("daubechies", 2), ("daubechies", 3)])
def test_mother_has_zero_mean(family, A):
    b = build_basis(family, A)
    t = midpoints(1 << 16)
    for l in range(0, 5):
        means = b.design(l, t).mean(axis=0)
        assert np.abs(means).max() <= 1e-8


def test_father_periodized_is_constant(db3):
    # At l0 = 0 the periodized father function is identically one.
    t = np.linspace(0, 1, 257)[:-1]
    assert np.allclose(db3.eval_phi(1, t), 1.0, atol=1e-9)


# -- index sets ------------------------------------------------------------------


@given(l0=st.integers(0, 4), extra=st.integers(0, 5))
def test_index_set_cardinality_and_order(l0, extra):
    iset = MultiresIndexSet(l0, l0 + extra)
    entries = list(iset.enumerate())
    assert len(entries) == iset.n_approx + iset.s_L
    assert iset.s_L == sum(2**l for l in range(l0, l0 + extra + 1))
    assert [e[0] for e in entries[: iset.n_approx]] == ["approx"] * iset.n_approx
    details = [(l, k) for kind, l, k in entries if kind == "detail"]
    assert details == sorted(details)
    for pos, (l, k) in enumerate(details):
        assert iset.position(l, k) == pos


def test_index_set_rejects_bad_levels():
    with pytest.raises(ArgumentError):
        MultiresIndexSet(3, 2)


def test_coefficients_validate(haar):
    iset = MultiresIndexSet(0, 2)
    with pytest.raises(ArgumentError):
        MultiresCoefficients(haar, iset, np.ones(1), np.zeros(6))
    with pytest.raises(ArgumentError):
        MultiresCoefficients(haar, iset, np.ones(1), np.array([np.nan] * 7))


# -- coefficients ----------------------------------------------------------------


def test_empirical_single_point(haar):
    iset = MultiresIndexSet(0, 3)
    c = empirical_coefficients(haar, [0.25], iset)
    assert c.value(0, 1) == 1.0
    c2 = empirical_coefficients(haar, [0.25, 0.75], iset)
    assert c2.value(0, 1) == 0.0
    assert c.approx[0] == 1.0


def test_empirical_uniform_details_vanish(haar, rng):
    N = 100_000
    iset = MultiresIndexSet(0, 5)
    c = empirical_coefficients(haar, rng.random(N), iset)
    assert np.abs(c.detail).max() <= 4 / np.sqrt(N)


def test_empirical_rejects_outside(haar):
    with pytest.raises(DomainError):
        empirical_coefficients(haar, [0.2, 1.2], MultiresIndexSet(0, 2))


def test_exact_uniform(haar):
    c = exact_coefficients(haar, lambda t: np.ones_like(t), MultiresIndexSet(0, 6))
    assert np.abs(c.detail).max() <= 1e-10
    assert np.isclose(c.approx[0], 1.0)


@pytest.mark.parametrize("family,A,tol", [("haar", 1, 1e-8), ("daubechies", 2, 1e-6)])
def test_exact_recovers_planted_coefficient(family, A, tol):
    b = build_basis(family, A)
    iset = MultiresIndexSet(0, 4)
    f = lambda t: 1.0 + 0.3 * b.eval_psi(2, 1, t)
    c = exact_coefficients(b, f, iset)
    target = np.zeros(iset.s_L)
    target[iset.position(2, 1)] = 0.3
    assert np.abs(c.detail - target).max() <= tol


def test_exact_needs_resolution(haar):
    with pytest.raises(ResolutionError):
        exact_coefficients(haar, lambda t: np.ones_like(t), MultiresIndexSet(0, 6), quadrature_points=64)


# -- reconstruction ------------------------------------------------------------------


@pytest.mark.parametrize("family,A", [("haar", 1), ("daubechies", 3)])
def test_reconstruct_uniform(family, A):
    b = build_basis(family, A)
    c = exact_coefficients(b, lambda t: np.ones_like(t), MultiresIndexSet(0, 5))
    t = np.linspace(0, 1, 101)[:-1]
    assert np.allclose([reconstruct_point(c, x) for x in t], 1.0, atol=1e-8)


@pytest.mark.parametrize("l,k", [(0, 1), (2, 3), (4, 16)])
def test_reconstruct_single_coefficient(db2, l, k):
    iset = MultiresIndexSet(0, 4)
    z = zero_coefficients(db2, iset)
    d = np.zeros(iset.s_L)
    d[iset.position(l, k)] = 1.0
    c = z.replace(approx=np.zeros(1), detail=d)
    t = np.linspace(0, 1, 64, endpoint=False)
    assert np.allclose(reconstruct_point(c, t), db2.eval_psi(l, k, t), atol=1e-12)


def test_round_trip_haar(haar):
    iset = MultiresIndexSet(0, 4)
    f = lambda t: 1.0 + 0.3 * haar.eval_psi(2, 1, t)
    c = exact_coefficients(haar, f, iset)
    g = lambda t: reconstruct_point(c, t)
    c2 = exact_coefficients(haar, g, iset)
    assert np.abs(c2.detail - c.detail).max() <= 1e-8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_plancherel(haar, seed):
    r = np.random.default_rng(seed)
    iset = MultiresIndexSet(0, 5)
    c = MultiresCoefficients(haar, iset, r.normal(size=1), r.normal(size=iset.s_L))
    vals = reconstruct_grid(c, 1 << 12)
    assert np.isclose(np.mean(vals**2), c.sq_norm(), rtol=1e-10)


def test_plancherel_daubechies(db3, rng):
    iset = MultiresIndexSet(0, 4)
    c = MultiresCoefficients(db3, iset, rng.normal(size=1), rng.normal(size=iset.s_L))
    vals = reconstruct_grid(c, 1 << 16)
    assert np.isclose(np.mean(vals**2), c.sq_norm(), rtol=1e-4)


def test_restrict_extend(haar, rng):
    iset = MultiresIndexSet(0, 4)
    c = MultiresCoefficients(haar, iset, np.ones(1), rng.normal(size=iset.s_L))
    r = c.restrict(2)
    assert r.index_set.L == 2 and np.array_equal(r.detail, c.detail[:7])
    e = r.extend(4)
    assert np.array_equal(e.detail[:7], r.detail) and not np.any(e.detail[7:])
