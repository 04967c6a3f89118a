"""Lagrangian projections on C^{2d}: construction, validation, standard forms
and unitary boundary paths.

A Lagrangian projection is a selfadjoint projection P on C^{2d} with
P I0 = I0 (1 - P), where I0 = diag(i 1_d, -i 1_d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matrices as mat
from .errors import BranchCutError, PreconditionError, TransversalityError


def i0_matrix(d: int) -> np.ndarray:
    return np.diag([1j] * d + [-1j] * d)


@dataclass(frozen=True)
class LagrangianProjection:
    """A validated Lagrangian projection with half-dimension ``d``."""

    d: int
    mat: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.mat, dtype=complex)
        if p.shape != (2 * self.d, 2 * self.d):
            raise PreconditionError(f"expected shape {(2*self.d, 2*self.d)}, got {p.shape}")
        if not mat.is_projection(p):
            raise PreconditionError("matrix is not a selfadjoint projection within tol")
        i0 = i0_matrix(self.d)
        if mat.frob(p @ i0 - i0 @ (np.eye(2 * self.d) - p)) > mat.TOL_MAT * 2 * self.d:
            raise PreconditionError("matrix violates the Lagrangian relation P I0 = I0 (1-P)")
        p.setflags(write=False)
        object.__setattr__(self, "mat", p)


@dataclass(frozen=True)
class StandardizedPair:
    """Standard form of a transverse pair: U P0 U* = Ps and U P1 U* = (1/2)[[1, w*],[w, 1]]."""

    d: int
    U: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)


def from_unitary(p) -> LagrangianProjection:
    """Lagrangian projection (1/2)[[1, p*], [p, 1]] from a d x d unitary ``p``."""
    u = np.asarray(p, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise PreconditionError("from_unitary: expected a square matrix")
    if not mat.is_unitary(u):
        raise PreconditionError("from_unitary: block is not unitary within tol")
    d = u.shape[0]
    out = np.zeros((2 * d, 2 * d), dtype=complex)
    out[:d, :d] = 0.5 * np.eye(d)
    out[d:, d:] = 0.5 * np.eye(d)
    out[:d, d:] = 0.5 * u.conj().T
    out[d:, :d] = 0.5 * u
    return LagrangianProjection(d=d, mat=out)


def unitary_of(P: LagrangianProjection) -> np.ndarray:
    """The unitary block p with P = (1/2)[[1, p*], [p, 1]] (twice the lower-left block)."""
    d = P.d
    p = 2.0 * P.mat[d:, :d]
    if not mat.is_unitary(p):
        raise PreconditionError("unitary_of: extracted block is not unitary (malformed projection)")
    return p


def standard_projection(d: int) -> LagrangianProjection:
    """Ps = (1/2)[[1, 1], [1, 1]] in d x d blocks."""
    return from_unitary(np.eye(d, dtype=complex))


def cayley(a) -> LagrangianProjection:
    """The projection with unitary block (a - i)(a + i)^{-1} for hermitian ``a``.

    Always transverse to the standard projection Ps.
    """
    h = np.asarray(a, dtype=complex)
    if not mat.is_hermitian(h):
        raise PreconditionError("cayley: input is not hermitian")
    d = h.shape[0]
    eye = np.eye(d)
    p = (h - 1j * eye) @ np.linalg.inv(h + 1j * eye)
    return from_unitary(p)


def is_transverse(P1: LagrangianProjection, P2: LagrangianProjection,
                  cond_tol: float = mat.COND_TOL) -> bool:
    if P1.d != P2.d:
        raise PreconditionError("is_transverse: mismatched dimensions")
    return mat.is_invertible(P1.mat + P2.mat, cond_tol)


def standardize_pair(P0: LagrangianProjection, P1: LagrangianProjection) -> StandardizedPair:
    """Block-diagonal unitary U = diag(1, p0*) with U P0 U* = Ps, and w = p0* p1.

    Raises
    ------
    TransversalityError
        If the pair is not transverse (equivalently 1 - w is not invertible).
    """
    if not is_transverse(P0, P1):
        raise TransversalityError("standardize_pair: pair is not transverse")
    d = P0.d
    p0 = unitary_of(P0)
    p1 = unitary_of(P1)
    u = np.zeros((2 * d, 2 * d), dtype=complex)
    u[:d, :d] = np.eye(d)
    u[d:, d:] = p0.conj().T
    w = p0.conj().T @ p1
    if not mat.is_invertible(np.eye(d) - w):
        raise TransversalityError("standardize_pair: 1 - w is singular")
    return StandardizedPair(d=d, U=u, w=w)


# ---------------------------------------------------------------------------
# smooth profiles and boundary paths
# ---------------------------------------------------------------------------

def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    m = s > 0
    out[m] = np.exp(-1.0 / s[m])
    return out


def smooth_step(x, x1: float = 0.25, x2: float = 0.75) -> np.ndarray:
    """Smooth monotone profile, exactly 0 on [0, x1] and exactly 1 on [x2, 1]."""
    s = np.clip((np.asarray(x, dtype=float) - x1) / (x2 - x1), 0.0, 1.0)
    g1, g2 = _bump(s), _bump(1.0 - s)
    return g1 / (g1 + g2)


def smooth_step_deriv(x, x1: float = 0.25, x2: float = 0.75) -> np.ndarray:
    """Exact derivative of ``smooth_step``; identically zero outside (x1, x2)."""
    xv = np.asarray(x, dtype=float)
    s = (xv - x1) / (x2 - x1)
    inside = (s > 0) & (s < 1)
    out = np.zeros_like(xv)
    sc = np.clip(s, 1e-12, 1 - 1e-12)
    g1, g2 = _bump(sc), _bump(1.0 - sc)
    dg1 = g1 / sc**2
    dg2 = -g2 / (1.0 - sc) ** 2
    val = (dg1 * g2 - g1 * dg2) / (g1 + g2) ** 2 / (x2 - x1)
    out[inside] = val[inside]
    return out


class UnitaryPath:
    """A path x -> U(x) = diag(1, gamma(x)) V0 interpolating boundary standardizations.

    ``gamma(x) = exp(psi(x) log(-w*))`` per eigenbranch of w; branches with w
    eigenvalue at -1 (no rotation needed) follow the constant path. U(0) maps
    P0 to Ps and U(1) maps P1 to 1 - Ps; U commutes with I0 everywhere.
    """

    def __init__(self, pair: StandardizedPair, profile=smooth_step,
                 branch_tol: float = mat.BRANCH_TOL):
        self.d = pair.d
        self.U0 = pair.U
        self.profile = profile
        dec = mat.unitary_eig(-pair.w.conj().T)
        mu = dec.eigenvalues.copy()                      # phases of -w* in (0, 2pi]
        # branches with w eigenvalue at -1 have mu at 0/2pi: constant path there
        at_one = np.minimum(np.abs(mu), np.abs(2 * np.pi - mu)) <= branch_tol
        mu[at_one] = 0.0
        self.mu = mu
        self.vecs = dec.vectors
        # validate endpoint: gamma(1) w must be -1 within tolerance
        g1 = self.gamma(np.array([1.0]))[0]
        if mat.frob(g1 @ pair.w + np.eye(self.d)) > 10 * mat.TOL_MAT * self.d:
            raise BranchCutError("boundary path endpoint misses -1 (eigenvalue near the cut)")

    def gamma(self, x) -> np.ndarray:
        """gamma at a batch of points; shape (len(x), d, d)."""
        s = self.profile(np.atleast_1d(np.asarray(x, dtype=float)))
        ph = np.exp(1j * np.outer(s, self.mu))           # (nx, d)
        return np.einsum("ab,xb,cb->xac", self.vecs, ph, self.vecs.conj())

    def sample(self, x) -> np.ndarray:
        """U(x) for a batch of points; shape (len(x), 2d, 2d)."""
        g = self.gamma(x)
        d = self.d
        out = np.zeros((g.shape[0], 2 * d, 2 * d), dtype=complex)
        out[:, :d, :d] = np.eye(d)
        out[:, d:, d:] = g
        return out @ self.U0


def boundary_unitary_path(pair: StandardizedPair, profile=smooth_step,
                          n_x: int = 64, branch_tol: float = mat.BRANCH_TOL):
    """Sampled boundary path U(x) at n_x + 1 uniform nodes, plus the path object.

    Returns
    -------
    (samples, path)
        ``samples`` has shape (n_x + 1, 2d, 2d); ``path`` evaluates U and
        gamma at arbitrary points.
    """
    path = UnitaryPath(pair, profile=profile, branch_tol=branch_tol)
    xs = np.linspace(0.0, 1.0, n_x + 1)
    return path.sample(xs), path
