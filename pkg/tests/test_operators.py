import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaintransport.operators import (
    SIGMA_Z,
    DensityState,
    PositivityError,
    Representation,
    embed_site_op,
    initial_state,
    sigma_minus,
    sigma_plus,
    von_neumann_entropy,
)
from oracles import random_density, random_unitary


def test_embed_sigma_z_on_first_of_two():
    np.testing.assert_array_equal(embed_site_op(SIGMA_Z, 1, 2), np.diag([-1, -1, 1, 1]))


def test_embed_identity_is_identity():
    np.testing.assert_array_equal(embed_site_op(np.eye(2), 2, 3), np.eye(8))


def test_sigma_minus_is_raising_in_g_e_order():
    np.testing.assert_array_equal(embed_site_op(sigma_minus(), 1, 1), [[0, 0], [1, 0]])
    np.testing.assert_array_equal(sigma_plus(), [[0, 1], [0, 0]])


@pytest.mark.parametrize("site,n", [(0, 2), (3, 2), (-1, 3)])
def test_embed_site_out_of_range(site, n):
    with pytest.raises(IndexError):
        embed_site_op(SIGMA_Z, site, n)


def test_embed_rejects_zero_systems():
    with pytest.raises(ValueError):
        embed_site_op(SIGMA_Z, 1, 0)


complex_2x2 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=8, max_size=8).map(
    lambda v: (np.array(v[:4]) + 1j * np.array(v[4:])).reshape(2, 2))


@settings(max_examples=40, deadline=None)
@given(a=complex_2x2, b=complex_2x2, n=st.integers(1, 4), data=st.data())
def test_embed_is_multiplicative_per_site(a, b, n, data):
    j = data.draw(st.integers(1, n))
    np.testing.assert_allclose(embed_site_op(a, j, n) @ embed_site_op(b, j, n),
                               embed_site_op(a @ b, j, n), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(a=complex_2x2, b=complex_2x2, n=st.integers(2, 4), data=st.data())
def test_embed_commutes_across_sites(a, b, n, data):
    j = data.draw(st.integers(1, n))
    k = data.draw(st.integers(1, n).filter(lambda x: x != j))
    A, B = embed_site_op(a, j, n), embed_site_op(b, k, n)
    np.testing.assert_allclose(A @ B, B @ A, atol=1e-12)


def test_initial_state_full_n2():
    rho = initial_state(2).matrix
    assert rho.shape == (8, 8)
    assert np.count_nonzero(rho) == 1 and rho[4, 4] == 1


def test_initial_state_full_n1():
    rho = initial_state(1).matrix
    assert rho.shape == (4, 4) and rho[2, 2] == 1 and np.count_nonzero(rho) == 1


def test_initial_state_reduced_n3():
    s = initial_state(3, Representation.REDUCED)
    np.testing.assert_array_equal(s.matrix, np.diag([1, 0, 0, 0]))
    assert s.vacuum == 0.0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_initial_state_is_pure_and_normalised(n):
    for rep in Representation:
        s = initial_state(n, rep)
        s.validate()
        m = s.matrix
        np.testing.assert_allclose(m @ m, m, atol=1e-12)
        assert abs(s.trace - 1) < 1e-12


def test_initial_state_rejects_empty_chain():
    with pytest.raises(ValueError):
        initial_state(0)


def test_entropy_known_values():
    assert von_neumann_entropy(np.diag([0.0, 1.0])) == 0.0
    assert von_neumann_entropy(np.diag([0.5, 0.5])) == pytest.approx(np.log(2), abs=1e-14)
    for d in (2, 4, 8, 16):
        e = np.zeros(d)
        e[0] = 1
        assert von_neumann_entropy(np.diag(e)) == 0.0


def test_entropy_counts_reduced_vacuum():
    s = DensityState(Representation.REDUCED, np.diag([0.5, 0.0]), vacuum=0.5)
    assert von_neumann_entropy(s) == pytest.approx(np.log(2))


def test_entropy_clamps_tiny_negatives_and_rejects_large_ones():
    assert von_neumann_entropy(np.diag([1.0, -5e-10])) == 0.0
    with pytest.raises(PositivityError):
        von_neumann_entropy(np.diag([1.1, -0.1]))


@pytest.mark.parametrize("seed", range(10))
def test_entropy_unitarily_invariant(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.choice([2, 4, 8]))
    rho = random_density(dim, rng, rank=int(rng.integers(1, dim + 1)))
    u = random_unitary(dim, rng)
    assert von_neumann_entropy(u @ rho @ u.conj().T) == pytest.approx(von_neumann_entropy(rho), abs=1e-10)


def test_density_state_validate_flags_problems():
    with pytest.raises(ValueError):
        DensityState(Representation.FULL, np.eye(3) / 3)
    with pytest.raises(ValueError):
        DensityState(Representation.FULL, np.eye(4) / 2).validate()
    bad = DensityState(Representation.FULL, np.diag([1.2, -0.2, 0, 0]))
    with pytest.raises(PositivityError):
        bad.validate()
