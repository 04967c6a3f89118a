"""The Maslov index of a triple of pairwise transverse Lagrangian projections,
its signature computation, the positive-part projection reduction, and family
variants over parameter grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matrices as mat
from .errors import BranchCutError, ContinuityBreakError, DegeneracyError, TransversalityError
from .lagrangian import LagrangianProjection, i0_matrix, is_transverse, unitary_of


@dataclass(frozen=True)
class MaslovResult:
    tau: int
    form_matrix: np.ndarray
    counts: tuple  # (n_pos, n_neg, n_zero)


def _check_pairwise(P0, P1, P2):
    for (a, b, name) in ((P0, P1, "(0,1)"), (P0, P2, "(0,2)"), (P1, P2, "(1,2)")):
        if not is_transverse(a, b):
            raise TransversalityError(f"triple is not transverse at pair {name}")


def maslov_form_matrix(P0: LagrangianProjection, P1: LagrangianProjection,
                       P2: LagrangianProjection) -> np.ndarray:
    """The selfadjoint matrix A = P0 (P1+P2)^{-1} P2 I0 P1 (P1+P2)^{-1} P0.

    Its signature on Ran P0 is the Maslov index of the triple.
    """
    _check_pairwise(P0, P1, P2)
    i0 = i0_matrix(P0.d)
    s = np.linalg.inv(P1.mat + P2.mat)
    a = P0.mat @ s @ P2.mat @ i0 @ P1.mat @ s @ P0.mat
    a = (a + a.conj().T) / 2
    return a


def maslov_index(P0: LagrangianProjection, P1: LagrangianProjection,
                 P2: LagrangianProjection, gap_tol: float = mat.GAP_TOL) -> MaslovResult:
    """Maslov index as the signature of the form matrix.

    The kernel of the form matrix must be exactly d-dimensional (the kernel of
    P0); any further eigenvalue within ``gap_tol`` of zero raises
    DegeneracyError.
    """
    a = maslov_form_matrix(P0, P1, P2)
    _, counts = mat.spectral_projection_pos(a, gap_tol)
    n_pos, n_neg, n_zero = counts
    if n_zero != P0.d:
        raise DegeneracyError(
            f"form matrix kernel has dimension {n_zero}, expected d = {P0.d}")
    return MaslovResult(tau=n_pos - n_neg, form_matrix=a, counts=counts)


def maslov_projection(P1: LagrangianProjection, P2: LagrangianProjection,
                      gap_tol: float = mat.GAP_TOL,
                      branch_tol: float = mat.BRANCH_TOL) -> np.ndarray:
    """The projection p+ with tau(Ps, P1, P2) = tr p+ - tr(1 - p+).

    Uses a_j = i (p_j + 1)(p_j - 1)^{-1} and p+ = 1_{x>0}(a_1 - a_2), where
    p_j is the unitary block of P_j.  Requires P1, P2 transverse to Ps, i.e.
    p_j - 1 invertible.
    """
    d = P1.d
    eye = np.eye(d)
    avals = []
    for P in (P1, P2):
        p = unitary_of(P)
        if not mat.is_invertible(p - eye, mat.COND_TOL):
            raise BranchCutError("maslov_projection: unitary block has eigenvalue near 1")
        a = 1j * (p + eye) @ np.linalg.inv(p - eye)
        avals.append((a + a.conj().T) / 2)
    diff = avals[0] - avals[1]
    proj, counts = mat.spectral_projection_pos(diff, gap_tol)
    if counts[2] != 0:
        raise DegeneracyError("maslov_projection: a_1 - a_2 has near-zero eigenvalue")
    return proj


def maslov_index_family(P0f, P1f, P2f, gap_tol: float = mat.GAP_TOL):
    """Nodewise Maslov index of a triple family given as arrays (*shape, 2d, 2d).

    Returns
    -------
    (tau, p_plus_field, counts_field)
        ``tau`` is the common integer value (ContinuityBreakError if it varies
        across nodes); ``p_plus_field`` has shape (*shape, d, d) and feeds the
        Chern character; counts are reported per node.
    """
    P0f, P1f, P2f = (np.asarray(f, dtype=complex) for f in (P0f, P1f, P2f))
    shape = P0f.shape[:-2]
    d = P0f.shape[-1] // 2
    taus = np.empty(shape, dtype=int)
    counts = np.empty(shape + (3,), dtype=int)
    pplus = np.empty(shape + (d, d), dtype=complex)
    for idx in np.ndindex(shape):
        trip = [LagrangianProjection(d=d, mat=f[idx]) for f in (P0f, P1f, P2f)]
        try:
            res = maslov_index(*trip, gap_tol=gap_tol)
        except (TransversalityError, DegeneracyError) as exc:
            raise type(exc)(f"{exc} at grid node {idx}") from exc
        taus[idx] = res.tau
        counts[idx] = res.counts
        pplus[idx] = maslov_projection(trip[1], trip[2], gap_tol=gap_tol)
    t0 = int(taus.flat[0])
    if np.any(taus != t0):
        raise ContinuityBreakError(
            f"family Maslov index varies across nodes: values {sorted(set(taus.flat))}")
    return t0, pplus, counts


def tau_interval(P0: LagrangianProjection, P1: LagrangianProjection,
                 P2: LagrangianProjection, gap_tol: float = mat.GAP_TOL) -> int:
    """The four-term combination
    tau(P0,P1,P2) + tau(P0,1-P1,P1) + tau(P1,1-P2,P2) + tau(P2,1-P0,P0).

    Requires P_i - P_j and P_i - (1-P_j) invertible for i != j.
    """
    d = P0.d
    eye = np.eye(2 * d)
    trips = [(P0, P1, P2)]
    for (a, b) in ((P0, P1), (P1, P2), (P2, P0)):
        comp = LagrangianProjection(d=d, mat=eye - b.mat)
        trips.append((a, comp, b))
    names = ["(P0,P1,P2)", "(P0,1-P1,P1)", "(P1,1-P2,P2)", "(P2,1-P0,P0)"]
    total = 0
    for trip, name in zip(trips, names):
        try:
            total += maslov_index(*trip, gap_tol=gap_tol).tau
        except TransversalityError as exc:
            raise TransversalityError(f"tau_interval constituent {name}: {exc}") from exc
    return total
