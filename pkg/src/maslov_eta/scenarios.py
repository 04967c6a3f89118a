"""Configuration-driven scenario runner: builds projection families over
grids, dispatches Maslov/eta computations, verifies the index identities, and
emits machine-readable reports.

Scenario files are TOML (nested tables) or JSON with the same structure:

    schema_version = 1
    name = "bott-64"
    task = "verify_clm"            # maslov | eta | verify_clm | verify_glue
    [base]
    kind = "sphere_rect"           # point | circle | torus | sphere_rect
    sizes = [64, 64]
    [family]
    type = "bott_sphere"           # scalar_triple | winding_circle | bott_sphere | explicit
    [params]
    K = 64
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import forms
from .errors import PreconditionError, TransversalityError
from .eta import (EtaForm, PairFamily, eta_form, eta_form_boundary_limit,
                  eta_form_epsilon)
from .interval import circle_eta, eta_invariant, eta_scalar
from .lagrangian import LagrangianProjection, from_unitary, is_transverse
from .maslov import maslov_index, maslov_index_family
from . import matrices as mat

SCHEMA_VERSION = 1

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0 + 0j, -1.0])
ROT_GEN = np.array([[0.0, 1.0], [-1.0, 0.0]])     # frame rotation generator


@dataclass
class Scenario:
    name: str
    task: str
    base: dict
    family: dict
    params: dict = dc_field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def echo(self) -> dict:
        return {"schema_version": self.schema_version, "name": self.name,
                "task": self.task, "base": self.base, "family": self.family,
                "params": self.params}


def load_scenario(path) -> Scenario:
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() == ".json":
        doc = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        doc = tomllib.loads(text)
    version = int(doc.get("schema_version", 0))
    if version != SCHEMA_VERSION:
        raise PreconditionError(f"unsupported scenario schema_version {version}")
    for key in ("name", "task", "base", "family"):
        if key not in doc:
            raise PreconditionError(f"scenario missing required key {key!r}")
    return Scenario(name=doc["name"], task=doc["task"], base=dict(doc["base"]),
                    family=dict(doc["family"]), params=dict(doc.get("params", {})),
                    schema_version=version)


def build_grid(base: dict) -> forms.BaseGrid:
    kind = base.get("kind")
    sizes = base.get("sizes", [])
    if kind == "point":
        return forms.point_grid()
    if kind == "circle":
        return forms.circle_grid(int(sizes[0]))
    if kind == "torus":
        return forms.torus_grid(int(sizes[0]), int(sizes[1]))
    if kind == "sphere_rect":
        return forms.sphere_grid(int(sizes[0]), int(sizes[1]))
    raise PreconditionError(f"unknown base kind {kind!r}")


# ---------------------------------------------------------------------------
# family builders: produce unitary-block fields u_j of shape (*shape, d, d)
# ---------------------------------------------------------------------------

def _parse_unitary_scalar(spec) -> complex:
    if isinstance(spec, (int, float)):
        return complex(np.exp(1j * float(spec)))      # a phase angle
    if isinstance(spec, (list, tuple)) and len(spec) == 2:
        z = complex(spec[0], spec[1])
        if abs(abs(z) - 1.0) > 1e-9:
            raise PreconditionError(f"scalar unitary {spec} is not on the unit circle")
        return z
    if isinstance(spec, str):
        z = complex(spec.replace(" ", "").replace("i", "j"))
        if abs(abs(z) - 1.0) > 1e-9:
            raise PreconditionError(f"scalar unitary {spec!r} is not on the unit circle")
        return z
    raise PreconditionError(f"cannot parse scalar unitary {spec!r}")


def _bott_q(grid: forms.BaseGrid, tilt: float | None = None):
    if grid.kind == "sphere_rect":
        c0 = grid.coords[0][:, None]
        c1 = grid.coords[1][None, :]
        alpha = c0 * np.ones_like(c1)
    elif grid.kind == "torus":
        c0 = grid.coords[0][:, None]
        c1 = grid.coords[1][None, :]
        alpha = (1.2 + (0.5 if tilt is None else tilt) * np.sin(c0)) * np.ones_like(c1)
    else:
        raise PreconditionError("bott family needs a two-dimensional base")
    n = np.stack([np.sin(alpha) * np.cos(c1), np.sin(alpha) * np.sin(c1),
                  np.cos(alpha) * np.ones_like(c1)])
    return 0.5 * (np.eye(2)[None, None] + n[0][..., None, None] * SX
                  + n[1][..., None, None] * SY + n[2][..., None, None] * SZ)


def _frame_rotations(proj: dict, fam: dict, grid, coords, d: int):
    """Unitary frame-rotation fields for a winding-family projection.

    Each frame entry rotates the diagonal branch frame by
    exp(-i * angle(b) * G / 2) with G the Pauli y or z generator (d = 2) and
    angle(b) = angle0 + rate . b + amplitude . sin(b).  Rotations are applied
    innermost-first; integer rates keep the conjugation grid-periodic.
    Legacy shorthand: "mix": r with "mix_axis": c rotates by r * b_c about y.
    """
    specs = list(proj.get("frame", []))
    if proj.get("mix", 0):
        specs.append({"generator": "y", "rate": [
            (float(proj["mix"]) if c == int(proj.get("mix_axis", grid.ndim - 1)) else 0.0)
            for c in range(grid.ndim)]})
    if specs and d != 2:
        raise PreconditionError("frame rotations are defined for d = 2 families")
    gens = {"y": np.array([[0.0, -1j], [1j, 0.0]]),
            "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)}
    out = []
    shape = grid.shape
    for spec in reversed(specs):
        ang = float(spec.get("angle0", 0.0)) * np.ones(shape)
        for c, r in enumerate(spec.get("rate", [])):
            ang = ang + float(r) * coords[c]
        for c, a in enumerate(spec.get("amplitude", [])):
            ang = ang + float(a) * np.sin(coords[c])
        gen = gens[spec.get("generator", "y")]
        half = ang / 2
        rot = (np.cos(half)[..., None, None] * np.eye(2)
               - 1j * np.sin(half)[..., None, None] * gen)
        out.append(rot)
    return out


def build_family(scenario: Scenario, grid: forms.BaseGrid):
    """Unitary-block fields (u0, u1, u2) of the projection triple, plus d."""
    fam = scenario.family
    ftype = fam.get("type")
    shape = grid.shape

    if ftype == "scalar_triple":
        us = [_parse_unitary_scalar(s) for s in fam["u"]]
        fields = [np.full(shape + (1, 1), u, dtype=complex) for u in us]
        return fields, 1

    if ftype == "bott_sphere":
        q = _bott_q(grid, fam.get("tilt"))
        eye = np.eye(2, dtype=complex)
        u0 = np.broadcast_to(eye, shape + (2, 2)).copy()
        u1 = 1j * (2 * q - eye)          # block of cayley(1 - 2q): a_1 = 2q - 1
        u2 = 1j * (eye - 2 * q)          # block of cayley(2q - 1): a_2 = 1 - 2q
        return [u0, u1, u2], 2

    if ftype == "winding_circle":
        d = int(fam.get("d", 1))
        coords = np.meshgrid(*grid.coords, indexing="ij") if grid.ndim else []
        fields = []
        for j in range(3):
            proj = fam["projections"][j]
            phases = np.zeros((d,) + shape)
            for l in range(d):
                br = proj["branches"][l]
                ph = float(br.get("theta0", 0.0)) * np.ones(shape)
                for c, m in enumerate(br.get("winding", [])):
                    ph = ph + float(m) * coords[c]
                for c, a in enumerate(br.get("amplitude", [])):
                    ph = ph + float(a) * np.sin(coords[c] + float(
                        br.get("offset", [0.0] * grid.ndim)[c]))
                phases[l] = ph
            diag = np.zeros(shape + (d, d), dtype=complex)
            for l in range(d):
                diag[..., l, l] = np.exp(1j * phases[l])
            for rot_spec in _frame_rotations(proj, fam, grid, coords, d):
                diag = rot_spec @ diag @ np.conj(np.swapaxes(rot_spec, -1, -2))
            fields.append(diag)
        return fields, d

    if ftype == "explicit":
        docs = json.loads(Path(fam["file"]).read_text())
        fields = []
        for key in ("u0", "u1", "u2"):
            f = forms.field_from_json(json.dumps(docs[key]))
            if f.grid.meta() != grid.meta():
                raise PreconditionError(f"explicit family {key}: grid mismatch")
            fields.append(f.deg0)
        return fields, fields[0].shape[-1]

    raise PreconditionError(f"unknown family type {ftype!r}")


def validate_family(fields, grid: forms.BaseGrid, branch_tol: float = mat.BRANCH_TOL):
    """Pairwise transversality at every node, before dispatch."""
    for (i, j) in ((0, 1), (0, 2), (1, 2)):
        w = np.conj(np.swapaxes(fields[i], -1, -2)) @ fields[j]
        for idx in np.ndindex(grid.shape):
            th = mat.unitary_eig(w[idx]).eigenvalues
            if np.any(np.minimum(th, 2 * np.pi - th) <= branch_tol):
                raise TransversalityError(
                    f"family pair ({i},{j}) fails transversality at node {idx}")


def _proj_fields(fields):
    """Lagrangian projection matrix fields from unitary-block fields."""
    out = []
    for u in fields:
        d = u.shape[-1]
        P = np.zeros(u.shape[:-2] + (2 * d, 2 * d), dtype=complex)
        P[..., :d, :d] = 0.5 * np.eye(d)
        P[..., d:, d:] = 0.5 * np.eye(d)
        P[..., :d, d:] = 0.5 * np.conj(np.swapaxes(u, -1, -2))
        P[..., d:, :d] = 0.5 * u
        out.append(P)
    return out


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _fmt(x) -> float:
    return float(np.round(float(x), 14))


def _task_maslov(scenario, grid, fields, d, params):
    P0f, P1f, P2f = _proj_fields(fields)
    tau, pplus, counts = maslov_index_family(P0f, P1f, P2f)
    return {
        "tau": int(tau),
        "counts_per_node": counts.reshape(-1, 3).tolist(),
        "p_plus_rank": int(round(float(np.real(np.trace(pplus[(0,) * grid.ndim]))))),
    }


def _eta_route(fam: PairFamily, params: dict) -> EtaForm:
    route = params.get("route", "boundary_limit")
    threads = int(params.get("threads", 1))
    if route == "boundary_limit":
        return eta_form_boundary_limit(fam, int(params.get("lattice_terms", 20000)),
                                       threads=threads)
    if route == "path":
        return eta_form(fam, K=int(params.get("K", 64)), n_x=int(params.get("N_x", 64)))
    if route == "epsilon":
        return eta_form_epsilon(fam, float(params["eps"]), K=int(params.get("K", 64)),
                                n_x=int(params.get("N_x", 256)))
    raise PreconditionError(f"unknown eta route {route!r}")


def _task_eta(scenario, grid, fields, d, params):
    i, j = (int(v) for v in params.get("pair", (0, 1)))
    fam = PairFamily(grid, fields[i], fields[j])
    form = _eta_route(fam, params)
    res = {
        "deg0_per_node": [_fmt(v) for v in np.asarray(form.deg0).ravel()],
        "metadata": form.metadata,
        "deg2_residual": _fmt(form.deg2_residual),
    }
    if form.deg2 is not None:
        res["deg2_per_node"] = [_fmt(v) for v in form.deg2.ravel()]
        res["deg2_integral_im"] = _fmt(form.deg2_integral().imag)
        if params.get("route") == "epsilon":
            # deviation from the boundary-limit eta-form (the eps -> 0 target)
            limit = eta_form_boundary_limit(fam, int(params.get("lattice_terms", 20000)),
                                            threads=int(params.get("threads", 1)))
            res["deg2_vs_limit_max"] = _fmt(np.abs(form.deg2 - limit.deg2).max())
    return res


def _numeric_deg0(fam: PairFamily) -> np.ndarray:
    from .interval import spectrum as iv_spectrum, heat_trace_D, eta_numeric_from_trace
    out = np.empty(fam.grid.shape)
    for idx in np.ndindex(fam.grid.shape):
        p0 = from_unitary(fam.p0[idx])
        p1 = from_unitary(fam.p1[idx])
        spec = iv_spectrum(p0, p1, K=50)
        out[idx] = eta_numeric_from_trace(lambda t: heat_trace_D(spec, t),
                                          spec.lambda_min, rel_tol=1e-7)
    return out


def _task_verify_clm(scenario, grid, fields, d, params, threads=1):
    P0f, P1f, P2f = _proj_fields(fields)
    tau, pplus, _ = maslov_index_family(P0f, P1f, P2f)

    pairs = [(0, 1), (1, 2), (2, 0)]
    eta_forms = []
    fams = [PairFamily(grid, fields[i], fields[j]) for (i, j) in pairs]
    for fam in fams:
        eta_forms.append(_eta_route(fam, params))

    if params.get("eta_mode", "closed_form") == "numeric":
        deg0_sum = sum(_numeric_deg0(fam) for fam in fams)
    else:
        deg0_sum = sum(np.asarray(f.deg0) for f in eta_forms)
    deg0_dev = float(np.abs(deg0_sum - tau).max())
    tol0 = float(params.get("deg0_tol", 1e-6))
    out = {
        "tau": int(tau),
        "deg0": {"max_abs_deviation": _fmt(deg0_dev), "tolerance": tol0,
                 "pass": bool(deg0_dev < tol0),
                 "sum_per_node": [_fmt(v) for v in np.asarray(deg0_sum).ravel()]},
        "eta_metadata": [f.metadata for f in eta_forms],
    }
    passed = out["deg0"]["pass"]

    if grid.ndim == 2:
        ch = forms.chern_character(pplus, grid)
        ch_tau = 2 * forms.integrate(ch)          # ch(p+) - ch(1 - p+)
        rhs = sum(f.deg2_integral() for f in eta_forms)
        absd = abs(ch_tau - rhs)
        reld = absd / max(abs(ch_tau), 1e-300)
        tol2 = float(params.get("deg2_rel_tol", 0.05))
        abs_tol2 = float(params.get("deg2_abs_tol", 1e-6))
        # relative comparison against the target; absolute floor covers the
        # degenerate case of a vanishing Chern integral (e.g. d = 1 families)
        ok2 = bool(absd < abs_tol2 or reld < tol2)
        out["deg2"] = {
            "lhs_re": _fmt(ch_tau.real), "lhs_im": _fmt(ch_tau.imag),
            "rhs_re": _fmt(rhs.real), "rhs_im": _fmt(rhs.imag),
            "abs_discrepancy": _fmt(absd), "rel_discrepancy": _fmt(reld),
            "tolerance": tol2, "abs_tolerance": abs_tol2, "pass": ok2,
        }
        passed = passed and out["deg2"]["pass"]
    out["pass"] = bool(passed)
    return out


def _task_verify_glue(scenario, grid, fields, d, params):
    if grid.ndim != 0:
        raise PreconditionError("verify_glue runs on a point base")
    us = [np.asarray(u).reshape(d, d) for u in fields]
    projs = [from_unitary(u) for u in us]
    tau = maslov_index(*projs).tau
    total = 0.0
    terms = []
    for (i, j) in ((0, 1), (1, 2), (2, 0)):
        v = circle_eta(us[i].conj().T @ us[j])
        terms.append(_fmt(v))
        total += v
    dev = abs(total - tau)
    tol = float(params.get("glue_tol", 1e-9))
    return {"tau": int(tau), "circle_etas": terms, "eta_sum": _fmt(total),
            "abs_deviation": _fmt(dev), "tolerance": tol, "pass": bool(dev < tol)}


def run(scenario: Scenario, threads: int = 1, seed: int | None = None) -> dict:
    """Execute a scenario; returns the report dictionary.

    Deterministic for a fixed (scenario, seed) and any thread count: nodes are
    computed independently and reduced in index order.  Timings are reported
    under the separate 'timings' key, excluded from the canonical serialization.
    """
    t0 = time.perf_counter()
    if seed is None:
        seed = int(scenario.params.get("seed", 0))
    grid = build_grid(scenario.base)
    fields, d = build_family(scenario, grid)
    validate_family(fields, grid)
    t_build = time.perf_counter() - t0

    params = dict(scenario.params)
    params.setdefault("threads", threads)
    t1 = time.perf_counter()
    if scenario.task == "maslov":
        results = _task_maslov(scenario, grid, fields, d, params)
    elif scenario.task == "eta":
        results = _task_eta(scenario, grid, fields, d, params)
    elif scenario.task == "verify_clm":
        results = _task_verify_clm(scenario, grid, fields, d, params, threads)
    elif scenario.task == "verify_glue":
        results = _task_verify_glue(scenario, grid, fields, d, params)
    else:
        raise PreconditionError(f"unknown task {scenario.task!r}")
    t_run = time.perf_counter() - t1

    report = {
        "schema": "report/1",
        "scenario": scenario.echo(),
        "seed": int(seed),
        "results": results,
        "pass": bool(results.get("pass", True)),
        "timings": {"build_s": t_build, "run_s": t_run},
    }
    return report


def canonical_report_json(report: dict) -> str:
    """Deterministic serialization: sorted keys, timings excluded."""
    doc = {k: v for k, v in report.items() if k != "timings"}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def report_to_csv(report: dict) -> str:
    """Flat key,value table of the scalar results."""
    rows = ["key,value"]

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
        elif isinstance(obj, list):
            if len(obj) <= 16:
                rows.append(f"{prefix},\"{obj}\"")
            else:
                rows.append(f"{prefix}.len,{len(obj)}")
        else:
            rows.append(f"{prefix},{obj}")

    walk("", {"scenario": report["scenario"]["name"], "task": report["scenario"]["task"],
              "pass": report["pass"], "results": report["results"]})
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# convergence sweeps
# ---------------------------------------------------------------------------

def _discrepancy_of(report: dict) -> float:
    res = report["results"]
    if "deg2" in res:
        return float(res["deg2"]["abs_discrepancy"])
    if "deg2_vs_limit_max" in res:
        return float(res["deg2_vs_limit_max"])
    if "deg0" in res:
        return float(res["deg0"]["max_abs_deviation"])
    if "abs_deviation" in res:
        return float(res["abs_deviation"])
    raise PreconditionError("sweep: report carries no discrepancy")


def convergence_sweep(scenario: Scenario, axis: str, values=None,
                      threads: int = 1, seed: int | None = None) -> dict:
    """Run the scenario's verify task along a parameter axis and tabulate the
    discrepancy; reports a monotone-trend flag and an empirical order
    estimate per halving/doubling step."""
    if values is None:
        values = scenario.params.get("sweep_values")
    if values is None and axis == "eps":
        values = scenario.params.get("eps_values")
    if values is None:
        raise PreconditionError("sweep: no values given (params.sweep_values)")
    rows = []
    for v in values:
        s = Scenario(scenario.name, scenario.task, dict(scenario.base),
                     dict(scenario.family), dict(scenario.params))
        if axis == "base":
            s.base = dict(s.base)
            s.base["sizes"] = [int(v)] * len(s.base.get("sizes", [2]))
        elif axis in ("K", "N_x", "eps", "lattice_terms"):
            s.params[axis if axis != "eps" else "eps"] = v
            if axis == "eps":
                s.params["route"] = "epsilon"
        else:
            raise PreconditionError(f"sweep: unknown axis {axis!r}")
        rep = run(s, threads=threads, seed=seed)
        rows.append({"value": v, "discrepancy": _fmt(_discrepancy_of(rep)),
                     "pass": rep["pass"]})
    discs = [r["discrepancy"] for r in rows]
    monotone = all(b <= a * 1.05 for a, b in zip(discs, discs[1:]))
    orders = []
    for a, b in zip(discs, discs[1:]):
        if b > 0 and a > 0:
            orders.append(float(np.log2(a / b)))
    report = {
        "schema": "sweep-report/1",
        "scenario": scenario.echo(),
        "axis": axis,
        "rows": rows,
        "monotone": bool(monotone),
        "empirical_orders": [_fmt(o) for o in orders],
        "pass": bool(monotone),
        "timings": {},
    }
    return report
