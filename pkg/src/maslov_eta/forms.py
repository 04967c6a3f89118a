"""Matrix-valued differential forms of degree 0..2 on parameter grids, with
exterior derivative, wedge product, trace, integration, and the Chern
character form ch(P) = sum_k (-1)^k (1/k!) tr P (dP)^{2k} (unnormalized
convention, no 2*pi*i factors).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import matrices as mat
from .errors import DegreeOverflowError, PreconditionError

GRID_KINDS = ("point", "circle", "torus", "sphere_rect")


@dataclass(frozen=True)
class BaseGrid:
    """A structured parameter grid.

    ``shape`` holds node counts per coordinate; ``coord_weights`` integrate
    top-degree form components over the coordinate domain and sum exactly to
    its measure.  For ``sphere_rect`` the separate ``area_weights`` carry the
    cell-exact sin(phi) area element (summing to 4*pi) for integrating scalar
    functions against the round measure.
    """

    kind: str
    shape: tuple
    coords: tuple = field(repr=False)          # one 1-d array per coordinate
    periodic: tuple = field(repr=False)
    spacing: tuple = field(repr=False)
    coord_weights: np.ndarray = field(repr=False)
    area_weights: np.ndarray = field(repr=False)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def npairs(self) -> int:
        return self.ndim * (self.ndim - 1) // 2

    def pairs(self):
        return [(i, j) for i in range(self.ndim) for j in range(i + 1, self.ndim)]

    def meta(self) -> dict:
        return {"kind": self.kind, "shape": list(self.shape),
                "periodic": list(self.periodic)}


def point_grid() -> BaseGrid:
    w = np.array(1.0)
    return BaseGrid(kind="point", shape=(), coords=(), periodic=(), spacing=(),
                    coord_weights=w, area_weights=w)


def circle_grid(n: int) -> BaseGrid:
    if n < 3:
        raise PreconditionError("circle_grid: need at least 3 nodes")
    h = 2 * np.pi / n
    w = np.full((n,), h)
    return BaseGrid(kind="circle", shape=(n,), coords=(np.arange(n) * h,),
                    periodic=(True,), spacing=(h,), coord_weights=w, area_weights=w)


def torus_grid(n1: int, n2: int) -> BaseGrid:
    if min(n1, n2) < 3:
        raise PreconditionError("torus_grid: need at least 3 nodes per axis")
    h1, h2 = 2 * np.pi / n1, 2 * np.pi / n2
    w = np.full((n1, n2), h1 * h2)
    return BaseGrid(kind="torus", shape=(n1, n2),
                    coords=(np.arange(n1) * h1, np.arange(n2) * h2),
                    periodic=(True, True), spacing=(h1, h2),
                    coord_weights=w, area_weights=w)


def sphere_grid(n_phi: int, n_psi: int) -> BaseGrid:
    """Coordinate rectangle (phi, psi) in [0, pi] x [0, 2*pi); phi has n_phi
    panels (n_phi + 1 node rows including the poles), psi is periodic."""
    if n_phi < 4 or n_psi < 4:
        raise PreconditionError("sphere_grid: need at least 4 panels per axis")
    h1, h2 = np.pi / n_phi, 2 * np.pi / n_psi
    phi = np.linspace(0.0, np.pi, n_phi + 1)
    psi = np.arange(n_psi) * h2
    wphi = np.full(n_phi + 1, h1)
    wphi[0] = wphi[-1] = h1 / 2
    coord_w = wphi[:, None] * np.full((1, n_psi), h2)
    # cell-exact integral of sin(phi) over [phi - h/2, phi + h/2] clipped to [0, pi]
    lo = np.clip(phi - h1 / 2, 0.0, np.pi)
    hi = np.clip(phi + h1 / 2, 0.0, np.pi)
    wsin = np.cos(lo) - np.cos(hi)
    area_w = wsin[:, None] * np.full((1, n_psi), h2)
    return BaseGrid(kind="sphere_rect", shape=(n_phi + 1, n_psi), coords=(phi, psi),
                    periodic=(False, True), spacing=(h1, h2),
                    coord_weights=coord_w, area_weights=area_w)


def grid_from_meta(meta: dict) -> BaseGrid:
    kind = meta["kind"]
    shape = meta["shape"]
    if kind == "point":
        return point_grid()
    if kind == "circle":
        return circle_grid(shape[0])
    if kind == "torus":
        return torus_grid(shape[0], shape[1])
    if kind == "sphere_rect":
        return sphere_grid(shape[0] - 1, shape[1])
    raise PreconditionError(f"unknown grid kind {kind!r}")


def diff_axis(values: np.ndarray, grid: BaseGrid, axis: int,
              arr_axis: int | None = None) -> np.ndarray:
    """Second-order derivative along grid coordinate ``axis``: centered
    stencils, periodic wrap where flagged, one-sided three-point stencils at
    non-periodic edges.  ``arr_axis`` names the array axis holding that
    coordinate when it differs (leading non-grid axes)."""
    if arr_axis is None:
        arr_axis = axis
    h = grid.spacing[axis]
    f = np.moveaxis(values, arr_axis, 0)
    out = np.empty_like(f)
    if grid.periodic[axis]:
        out[:] = (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2 * h)
    else:
        out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
        out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
        out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return np.moveaxis(out, 0, arr_axis)


@dataclass
class MatrixFormField:
    """Matrix-valued forms on a grid: ``deg0`` with shape (*grid.shape, n, n),
    ``deg1`` with a leading coordinate axis, ``deg2`` with a leading
    antisymmetric-pair axis (pairs (i, j), i < j)."""

    grid: BaseGrid
    n: int
    deg0: np.ndarray | None = None
    deg1: np.ndarray | None = None
    deg2: np.ndarray | None = None

    def __post_init__(self):
        base = self.grid.shape + (self.n, self.n)
        for name, lead in (("deg0", None), ("deg1", self.grid.ndim),
                           ("deg2", self.grid.npairs)):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=complex)
            want = base if lead is None else (lead,) + base
            if arr.shape != want:
                raise PreconditionError(f"{name}: expected shape {want}, got {arr.shape}")
            setattr(self, name, arr)
        if self.grid.ndim < 1 and self.deg1 is not None:
            raise PreconditionError("deg1 component on a zero-dimensional grid")
        if self.grid.ndim < 2 and self.deg2 is not None:
            raise PreconditionError("deg2 component beyond the grid dimension")

    def copy(self) -> "MatrixFormField":
        return MatrixFormField(self.grid, self.n,
                               None if self.deg0 is None else self.deg0.copy(),
                               None if self.deg1 is None else self.deg1.copy(),
                               None if self.deg2 is None else self.deg2.copy())

    def max_norm(self) -> float:
        out = 0.0
        for arr in (self.deg0, self.deg1, self.deg2):
            if arr is not None:
                out = max(out, float(np.abs(arr).max()))
        return out


def ext_d(F: MatrixFormField) -> MatrixFormField:
    """Discrete exterior derivative: deg0 -> deg1 and deg1 -> deg2; the image
    of the top-degree component vanishes (beyond the grid dimension)."""
    g = F.grid
    if g.ndim < 1:
        raise PreconditionError("ext_d: grid dimension must be >= 1")
    d1 = None
    if F.deg0 is not None:
        d1 = np.stack([diff_axis(F.deg0, g, ax) for ax in range(g.ndim)], axis=0)
    d2 = None
    if F.deg1 is not None and g.ndim >= 2:
        comps = []
        for (i, j) in g.pairs():
            comps.append(diff_axis(F.deg1[j], g, i) - diff_axis(F.deg1[i], g, j))
        d2 = np.stack(comps, axis=0)
    return MatrixFormField(g, F.n, None, d1, d2)


def wedge(F: MatrixFormField, G: MatrixFormField) -> MatrixFormField:
    """Graded product with Koszul signs on coordinate components."""
    if F.grid is not G.grid and F.grid.meta() != G.grid.meta():
        raise PreconditionError("wedge: incompatible grids")
    g = F.grid
    mm = lambda a, b: np.einsum("...ab,...bc->...ac", a, b)
    out0 = out1 = out2 = None
    if F.deg0 is not None and G.deg0 is not None:
        out0 = mm(F.deg0, G.deg0)
    if F.deg0 is not None and G.deg1 is not None:
        out1 = np.stack([mm(F.deg0, G.deg1[i]) for i in range(g.ndim)], axis=0)
    if F.deg1 is not None and G.deg0 is not None:
        t = np.stack([mm(F.deg1[i], G.deg0) for i in range(g.ndim)], axis=0)
        out1 = t if out1 is None else out1 + t
    deg2_terms = []
    if F.deg1 is not None and G.deg1 is not None:
        comps = []
        for (i, j) in g.pairs():
            comps.append(mm(F.deg1[i], G.deg1[j]) - mm(F.deg1[j], G.deg1[i]))
        deg2_terms.append(np.stack(comps, axis=0))
    if F.deg0 is not None and G.deg2 is not None:
        deg2_terms.append(np.stack([mm(F.deg0, G.deg2[p]) for p in range(g.npairs)], axis=0))
    if F.deg2 is not None and G.deg0 is not None:
        deg2_terms.append(np.stack([mm(F.deg2[p], G.deg0) for p in range(g.npairs)], axis=0))
    if deg2_terms:
        if g.ndim < 2:
            raise DegreeOverflowError("wedge: degree-2 result on a grid of dimension < 2")
        out2 = sum(deg2_terms)
    overflow = (F.deg1 is not None and G.deg2 is not None) or \
               (F.deg2 is not None and G.deg1 is not None) or \
               (F.deg2 is not None and G.deg2 is not None)
    if overflow:
        raise DegreeOverflowError("wedge: resulting degree exceeds 2")
    return MatrixFormField(g, F.n, out0, out1, out2)


def trace_field(F: MatrixFormField) -> MatrixFormField:
    """Nodewise matrix trace; returns a field of 1 x 1 matrices."""
    tr = lambda a: np.trace(a, axis1=-2, axis2=-1)[..., None, None]
    return MatrixFormField(F.grid, 1,
                           None if F.deg0 is None else tr(F.deg0),
                           None if F.deg1 is None else tr(F.deg1),
                           None if F.deg2 is None else tr(F.deg2))


def integrate(F: MatrixFormField, degree: int | None = None) -> complex:
    """Weighted sum of the top-degree component (degree == grid dimension).

    Matrix-valued integrands are traced.  Deterministic pairwise summation.
    """
    g = F.grid
    if degree is None:
        degree = g.ndim
    if degree != g.ndim:
        raise PreconditionError("integrate: degree must equal the grid dimension")
    comp = {0: F.deg0, 1: F.deg1, 2: F.deg2}[degree]
    if comp is None:
        raise PreconditionError(f"integrate: field has no degree-{degree} component")
    if degree >= 1:
        comp = comp[0]          # exactly one coordinate (pair) at top degree
    vals = np.trace(comp, axis1=-2, axis2=-1)
    total = np.sum(vals * g.coord_weights)
    return complex(total)


def chern_character(P_field: np.ndarray, grid: BaseGrid, max_degree: int = 2,
                    tol: float = mat.TOL_MAT) -> MatrixFormField:
    """Chern character form of a projection-valued field (scalar-valued, n=1).

    Degree-0 part tr P; degree-2 part -tr P (dP)(dP) when the grid dimension
    allows it.  ``P_field`` has shape (*grid.shape, n, n).
    """
    P = np.asarray(P_field, dtype=complex)
    n = P.shape[-1]
    sh = grid.shape
    if P.shape != sh + (n, n):
        raise PreconditionError("chern_character: field shape does not match grid")
    idem = np.abs(np.einsum("...ab,...bc->...ac", P, P) - P).max()
    herm = np.abs(P - np.conj(np.swapaxes(P, -1, -2))).max()
    if max(idem, herm) > 10 * tol * max(1.0, float(np.abs(P).max())) * n:
        raise PreconditionError("chern_character: field is not a projection at every node")
    field = MatrixFormField(grid, n, deg0=P)
    deg0 = np.trace(P, axis1=-2, axis2=-1)[..., None, None]
    deg2 = None
    if max_degree >= 2 and grid.ndim >= 2:
        dP = ext_d(field)
        dPdP = wedge(dP, dP)
        PdPdP = wedge(MatrixFormField(grid, n, deg0=P), dPdP)
        deg2 = -np.trace(PdPdP.deg2, axis1=-2, axis2=-1)[..., None, None]
    return MatrixFormField(grid, 1, deg0=deg0, deg2=deg2)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _pack(arr: np.ndarray | None):
    if arr is None:
        return None
    return {"shape": list(arr.shape),
            "re": np.real(arr).ravel().tolist(),
            "im": np.imag(arr).ravel().tolist()}


def _unpack(obj):
    if obj is None:
        return None
    re = np.array(obj["re"], dtype=float).reshape(obj["shape"])
    im = np.array(obj["im"], dtype=float).reshape(obj["shape"])
    return re + 1j * im


def field_to_json(F: MatrixFormField) -> str:
    doc = {"schema": "matrix-form-field/1", "grid": F.grid.meta(), "n": F.n,
           "deg0": _pack(F.deg0), "deg1": _pack(F.deg1), "deg2": _pack(F.deg2)}
    return json.dumps(doc, sort_keys=True)


def field_from_json(text: str) -> MatrixFormField:
    doc = json.loads(text)
    if doc.get("schema") != "matrix-form-field/1":
        raise PreconditionError("field_from_json: unknown schema")
    grid = grid_from_meta(doc["grid"])
    return MatrixFormField(grid, int(doc["n"]), _unpack(doc["deg0"]),
                           _unpack(doc["deg1"]), _unpack(doc["deg2"]))


def field_to_binary(F: MatrixFormField) -> bytes:
    """Little-endian float64 (re, im) interleaved, degree blocks concatenated
    in order deg0, deg1, deg2 (absent blocks skipped); metadata travels in the
    JSON header produced by ``field_to_json``."""
    chunks = []
    for arr in (F.deg0, F.deg1, F.deg2):
        if arr is not None:
            inter = np.empty(arr.size * 2, dtype="<f8")
            inter[0::2] = np.real(arr).ravel()
            inter[1::2] = np.imag(arr).ravel()
            chunks.append(inter.tobytes())
    return b"".join(chunks)
