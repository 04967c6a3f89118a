import numpy as np
import pytest

from maslov_eta import lagrangian as lag
from maslov_eta import matrices as mat
from maslov_eta.errors import PreconditionError, TransversalityError


def rand_unitary(rng, n):
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(x)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def rand_herm(rng, n):
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (x + x.conj().T) / 2


PS = lag.standard_projection(1)
Q1 = lag.from_unitary(np.array([[1j]]))
Q2 = lag.from_unitary(np.array([[-1j]]))


def test_from_unitary_one_gives_standard():
    assert np.allclose(PS.mat, 0.5 * np.array([[1, 1], [1, 1]]))


def test_from_unitary_minus_one_gives_complement():
    p = lag.from_unitary(np.array([[-1.0 + 0j]]))
    assert np.allclose(p.mat, np.eye(2) - PS.mat)


def test_from_unitary_i_gives_q1():
    assert np.allclose(Q1.mat, 0.5 * np.array([[1, -1j], [1j, 1]]))


def test_unitary_of_roundtrip():
    assert np.allclose(lag.unitary_of(PS), [[1.0]])
    assert np.allclose(lag.unitary_of(Q2), [[-1j]])
    rng = np.random.default_rng(1)
    u = rand_unitary(rng, 3)
    assert np.allclose(lag.unitary_of(lag.from_unitary(u)), u)


def test_lagrangian_relation_enforced():
    with pytest.raises(PreconditionError):
        lag.LagrangianProjection(d=1, mat=np.diag([1.0, 0.0]).astype(complex))


def test_cayley_scalar_values():
    assert np.allclose(lag.cayley(np.zeros((1, 1))).mat, np.eye(2) - PS.mat)
    assert np.allclose(lag.cayley(np.array([[1.0]])).mat, Q2.mat)
    assert np.allclose(lag.cayley(np.array([[-1.0]])).mat, Q1.mat)


def test_cayley_always_transverse_to_standard():
    rng = np.random.default_rng(2)
    for _ in range(10):
        d = int(rng.integers(1, 4))
        p = lag.cayley(rand_herm(rng, d))
        assert lag.is_transverse(lag.standard_projection(d), p)


def test_is_transverse_basics():
    one_minus = lag.from_unitary(np.array([[-1.0 + 0j]]))
    assert lag.is_transverse(PS, one_minus)
    assert not lag.is_transverse(PS, PS)
    assert lag.is_transverse(Q1, Q2)


def test_transversality_iff_difference_invertible():
    rng = np.random.default_rng(4)
    done = 0
    while done < 50:
        d = int(rng.integers(1, 4))
        a1, a2 = rand_herm(rng, d), rand_herm(rng, d)
        p1, p2 = lag.cayley(a1), lag.cayley(a2)
        assert lag.is_transverse(p1, p2) == mat.is_invertible(a1 - a2, 1e-9)
        done += 1


def test_standardize_pair_values():
    one_minus = lag.from_unitary(np.array([[-1.0 + 0j]]))
    std = lag.standardize_pair(PS, one_minus)
    assert np.allclose(std.w, [[-1.0]])
    std = lag.standardize_pair(Q1, Q2)
    assert np.allclose(std.w, [[-1.0]])
    std = lag.standardize_pair(Q2, PS)
    assert np.allclose(std.w, [[1j]])


def test_standardize_pair_conjugations():
    rng = np.random.default_rng(8)
    for _ in range(20):
        d = int(rng.integers(1, 4))
        p0 = lag.from_unitary(rand_unitary(rng, d))
        p1 = lag.from_unitary(rand_unitary(rng, d))
        if not lag.is_transverse(p0, p1):
            continue
        std = lag.standardize_pair(p0, p1)
        ps = lag.standard_projection(d).mat
        assert np.allclose(std.U @ p0.mat @ std.U.conj().T, ps, atol=1e-12)
        assert np.allclose(std.U @ p1.mat @ std.U.conj().T,
                           lag.from_unitary(std.w).mat, atol=1e-12)
        i0 = lag.i0_matrix(d)
        assert np.allclose(std.U @ i0, i0 @ std.U)


def test_standardize_rejects_nontransverse():
    with pytest.raises(TransversalityError):
        lag.standardize_pair(PS, PS)


def test_smooth_step_profile():
    xs = np.linspace(0, 1, 101)
    psi = lag.smooth_step(xs)
    assert np.all(psi[xs <= 0.25] == 0.0)
    assert np.all(psi[xs >= 0.75] == 1.0)
    assert np.all(np.diff(psi) >= -1e-15)


def test_boundary_path_constant_when_w_is_minus_one():
    one_minus = lag.from_unitary(np.array([[-1.0 + 0j]]))
    std = lag.standardize_pair(PS, one_minus)
    samples, path = lag.boundary_unitary_path(std, n_x=16)
    assert np.allclose(samples, samples[0])


def test_boundary_path_w_one_is_transversality_error():
    with pytest.raises(TransversalityError):
        lag.standardize_pair(PS, PS)


def test_boundary_path_conditions():
    # w = i: U(1) conjugates P1 to 1 - Ps; five conditions at every node
    rng = np.random.default_rng(12)
    for (p0u, p1u) in [(np.array([[-1j]]), np.array([[1.0 + 0j]])),
                       (rand_unitary(rng, 2), rand_unitary(rng, 2))]:
        p0 = lag.from_unitary(p0u)
        p1 = lag.from_unitary(p1u)
        if not lag.is_transverse(p0, p1):
            continue
        d = p0.d
        std = lag.standardize_pair(p0, p1)
        samples, path = lag.boundary_unitary_path(std, n_x=32)
        ps = lag.standard_projection(d).mat
        i0 = lag.i0_matrix(d)
        eye = np.eye(2 * d)
        for u in samples:
            assert np.linalg.norm(u @ u.conj().T - eye) < 1e-11
            assert np.linalg.norm(u @ i0 - i0 @ u) < 1e-11
        u0, u1 = samples[0], samples[-1]
        assert np.linalg.norm(u0 @ p0.mat @ u0.conj().T - ps) < 1e-10
        assert np.linalg.norm(u1 @ p1.mat @ u1.conj().T - (eye - ps)) < 1e-10
        # flat near the ends
        assert np.linalg.norm(samples[1] - samples[0]) < 1e-12
        assert np.linalg.norm(samples[-2] - samples[-1]) < 1e-12
