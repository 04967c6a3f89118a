"""Dense complex-matrix numerics: eigendecompositions, branch-cut logarithms,
spectral projections and conditioned invertibility tests.

All matrices handled here are normal (hermitian or unitary), so matrix
functions are evaluated through eigendecompositions, never through series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .errors import BranchCutError, PreconditionError

TOL_MAT = 1e-10
GAP_TOL = 1e-8
COND_TOL = 1e-10
BRANCH_TOL = 1e-8
RECON_FACTOR = 1e-10          # tol_recon = RECON_FACTOR * ||input||


def _as_square(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError(f"expected a square matrix, got shape {a.shape}")
    return a


def frob(m) -> float:
    return float(np.linalg.norm(np.asarray(m), "fro"))


def is_hermitian(m, tol: float = TOL_MAT) -> bool:
    a = _as_square(m)
    return frob(a - a.conj().T) <= tol * max(1.0, frob(a))


def is_unitary(m, tol: float = TOL_MAT) -> bool:
    a = _as_square(m)
    return frob(a @ a.conj().T - np.eye(a.shape[0])) <= tol * max(1.0, frob(a))


def is_projection(m, tol: float = TOL_MAT) -> bool:
    a = _as_square(m)
    return is_hermitian(a, tol) and frob(a @ a - a) <= tol * max(1.0, frob(a))


@dataclass(frozen=True)
class EigDecomp:
    """Eigendecomposition of a normal matrix.

    For hermitian input ``eigenvalues`` are real ascending; for unitary input
    they are phases in (0, 2*pi], with 2*pi reserved for eigenvalue 1.
    ``vectors`` holds orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray


def herm_eig(h, tol: float = TOL_MAT) -> EigDecomp:
    """Eigendecomposition of a hermitian matrix, eigenvalues ascending.

    Raises
    ------
    PreconditionError
        If ``h`` is not hermitian within ``tol``.
    """
    a = _as_square(h)
    if not is_hermitian(a, tol):
        raise PreconditionError("herm_eig: input is not hermitian within tolerance")
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    return EigDecomp(eigenvalues=w, vectors=v)


def unitary_eig(u, tol: float = TOL_MAT) -> EigDecomp:
    """Eigendecomposition of a unitary matrix with orthonormal eigenvectors.

    Phases are returned ascending in (0, 2*pi]; an eigenvalue at 1 is stored
    as 2*pi, never as 0. Uses the complex Schur form, which is diagonal for
    normal matrices and keeps the eigenvector basis exactly orthonormal.
    """
    a = _as_square(u)
    if not is_unitary(a, tol):
        raise PreconditionError("unitary_eig: input is not unitary within tolerance")
    t, z = schur(a, output="complex")
    ev = np.diag(t)
    theta = np.angle(ev)
    theta = np.where(theta <= 1e-14, theta + 2 * np.pi, theta)
    order = np.argsort(theta, kind="stable")
    return EigDecomp(eigenvalues=theta[order], vectors=z[:, order])


def principal_log_unitary(u, branch_tol: float = BRANCH_TOL, tol: float = TOL_MAT) -> np.ndarray:
    """log(u) with the branch cut along [0, inf): log(e^{i*theta}) = i*theta, theta in (0, 2*pi).

    Raises
    ------
    BranchCutError
        If an eigenvalue of ``u`` lies within ``branch_tol`` of 1 (phase
        distance on the unit circle).
    """
    dec = unitary_eig(u, tol)
    theta = dec.eigenvalues
    if np.any(np.minimum(np.abs(theta), np.abs(2 * np.pi - theta)) <= branch_tol):
        raise BranchCutError("principal_log_unitary: eigenvalue within branch_tol of 1")
    v = dec.vectors
    return (v * (1j * theta)) @ v.conj().T


def exp_antihermitian(a) -> np.ndarray:
    """exp of an anti-hermitian matrix through its (unitary) eigendecomposition."""
    m = _as_square(a)
    w, v = np.linalg.eigh(1j * m)          # 1j*a is hermitian
    return (v * np.exp(-1j * w)) @ v.conj().T


def spectral_projection_pos(h, gap_tol: float = GAP_TOL, tol: float = TOL_MAT):
    """Spectral projection of a hermitian matrix onto eigenvalues > gap_tol.

    Returns
    -------
    (proj, counts)
        ``proj`` is the orthogonal projection onto the strictly positive part,
        ``counts`` is ``(n_pos, n_neg, n_zero)`` with thresholds +-gap_tol.
    """
    dec = herm_eig(h, tol)
    w, v = dec.eigenvalues, dec.vectors
    pos = w > gap_tol
    neg = w < -gap_tol
    counts = (int(pos.sum()), int(neg.sum()), int(len(w) - pos.sum() - neg.sum()))
    vp = v[:, pos]
    return vp @ vp.conj().T, counts


def is_invertible(m, cond_tol: float = COND_TOL) -> bool:
    """True iff the smallest singular value exceeds cond_tol times the largest."""
    a = _as_square(m)
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return False
    return bool(s[-1] > cond_tol * s[0])
