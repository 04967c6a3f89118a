import numpy as np
import pytest

from maslov_eta import eta as et
from maslov_eta import forms
from maslov_eta import lagrangian as lag
from maslov_eta.interval import eta_invariant
from maslov_eta.quadrature import panel_points

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0 + 0j, -1.0])


def bott_q_field(grid):
    phi = grid.coords[0][:, None]
    psi = grid.coords[1][None, :]
    n = np.stack([np.sin(phi) * np.cos(psi), np.sin(phi) * np.sin(psi),
                  np.cos(phi) * np.ones_like(psi)])
    return 0.5 * (np.eye(2)[None, None] + n[0][..., None, None] * SX
                  + n[1][..., None, None] * SY + n[2][..., None, None] * SZ)


def mixing_torus_q(grid, tilt=0.5):
    b1 = grid.coords[0][:, None]
    b2 = grid.coords[1][None, :]
    alpha = 1.2 + tilt * np.sin(b1) * np.ones_like(b2)
    n = np.stack([np.sin(alpha) * np.cos(b2), np.sin(alpha) * np.sin(b2),
                  np.cos(alpha) * np.ones_like(b2)])
    return 0.5 * (np.eye(2)[None, None] + n[0][..., None, None] * SX
                  + n[1][..., None, None] * SY + n[2][..., None, None] * SZ)


def bott_pair_family(grid, q):
    shape = grid.shape
    eye = np.broadcast_to(np.eye(2, dtype=complex), shape + (2, 2)).copy()
    p1 = 1j * (2 * q - np.eye(2))
    return et.PairFamily(grid, eye, p1)


# ---------------------------------------------------------------------------
# scalar kernels
# ---------------------------------------------------------------------------

def test_simplex_exp2_values():
    assert et.simplex_exp2(3.0, 3.0) == pytest.approx(np.exp(-3.0) / 2, rel=1e-10)
    assert et.simplex_exp2(0.0, 0.0) == pytest.approx(0.5)
    assert et.simplex_exp2(1.0, 2.0) == pytest.approx(np.exp(-2.0), rel=1e-10)


def test_simplex_exp2_brute_quadrature():
    pts, wts = panel_points(0.0, 1.0, 64, 12)
    for (a, b) in [(1.0, 2.0), (5.0, 0.1), (2.0, 2.0001), (0.3, 4.0)]:
        brute = np.sum(wts * (1 - pts) * np.exp(-(1 - pts) * a - pts * b))
        assert et.simplex_exp2(a, b) == pytest.approx(brute, abs=1e-10)


def test_simplex_exp2_range():
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 50, size=200)
    b = rng.uniform(0, 50, size=200)
    v = et.simplex_exp2(a, b)
    assert np.all(v > 0) and np.all(v <= 0.5 + 1e-12)


def test_deg2_time_kernel_closed_form():
    # int_0^inf t^{1/2} lam simplex(t lam^2, t mu^2) dt = sqrt(pi) sgn(lam)/(|lam|+|mu|)^2
    for (lam, mu) in [(1.0, 2.0), (-1.5, 0.7), (0.25, 0.25)]:
        S = 7.0 / min(abs(lam), abs(mu))
        pts, wts = panel_points(0.0, S, 120, 16)
        vals = 2 * pts**2 * lam * et.simplex_exp2(pts**2 * lam**2, pts**2 * mu**2)
        quad_val = np.sum(wts * vals) / np.sqrt(np.pi)
        closed = et.deg2_time_kernel([lam], [mu])[0, 0]
        assert quad_val == pytest.approx(closed, abs=1e-9)


def test_lattice_kernel_sums_vs_brute():
    def brute(th1, th2, KB=2500):
        k = np.arange(-KB, KB + 1)
        l1 = th1 / 2 - np.pi * k
        l2 = th2 / 2 - np.pi * k
        sgn = np.sign(l1)[:, None]
        den = (np.abs(l1)[:, None] + np.abs(l2)[None, :]) ** 2
        alt = ((-1.0) ** k)[:, None] * ((-1.0) ** k)[None, :]
        return np.sum(sgn / den), np.sum(alt * sgn / den)

    for (t1, t2) in [(np.pi / 2, 3 * np.pi / 2), (1.0, 2.6), (np.pi, np.pi),
                     (0.4, 0.4), (5.0, 1.2)]:
        s0, s1 = et.lattice_kernel_sums(t1, t2)
        b0, b1 = brute(t1, t2)
        assert abs(s0 - b0) < 2e-4, (t1, t2)
        assert abs(s1 - b1) < 2e-4, (t1, t2)


def test_lattice_kernel_sums_symmetric_lattice_vanishes():
    s0, s1 = et.lattice_kernel_sums(np.pi, np.pi)
    assert abs(s0) < 1e-9 and abs(s1) < 1e-9


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------

def _path_field(grid, q, n_x):
    """Standardizing-path U samples for the pair (Ps, from_unitary(i(2q-1)))."""
    fam = bott_pair_family(grid, q)
    xs = np.linspace(0, 1, n_x + 1)
    gam = et._StandardGamma(fam)
    out = np.zeros((n_x + 1,) + grid.shape + (4, 4), dtype=complex)
    for idx in np.ndindex(grid.shape):
        mu, V = gam.log_at(idx)
        g = gam.gamma(xs, mu, V)
        sel = (slice(None),) + idx
        out[sel + (slice(0, 2), slice(0, 2))] = np.eye(2)
        out[sel + (slice(2, 4), slice(2, 4))] = g
    return out


def test_curvature_constant_family_is_zero():
    g = forms.torus_grid(6, 6)
    q0 = mixing_torus_q(g)[2, 3]
    q = np.broadcast_to(q0, (6, 6, 2, 2)).copy()
    U = _path_field(g, q, 16)
    R = et.curvature_R(U, g)
    assert np.abs(R).max() < 1e-12


def test_curvature_hermitian_coefficients_and_flat_support():
    g = forms.torus_grid(8, 8)
    q = mixing_torus_q(g)
    U = _path_field(g, q, 32)
    R = et.curvature_R(U, g, n_x=32)
    herm = np.abs(R - np.conj(np.swapaxes(R, -1, -2))).max()
    assert herm < 1e-9
    assert np.abs(R).max() > 1e-3          # genuinely nonzero family
    xs = np.linspace(0, 1, 33)
    flat = (xs < 0.2) | (xs > 0.8)
    assert np.abs(R[:, flat]).max() < 1e-12


def test_curvature_scalar_winding_circle_family():
    # d = 1 family w(b) = e^{i b} on a circle base: R supported where the
    # interpolation profile varies, coefficients hermitian (1x1: real)
    g = forms.circle_grid(16)
    b = g.coords[0]
    p0 = np.ones((16, 1, 1), dtype=complex)
    p1 = np.exp(1j * (2.2 + 0.9 * np.sin(b)))[:, None, None]
    fam = et.PairFamily(g, p0, p1)
    n_x = 64
    xs = np.linspace(0, 1, n_x + 1)
    gam = et._StandardGamma(fam)
    U = np.zeros((n_x + 1, 16, 2, 2), dtype=complex)
    for i in range(16):
        mu, V = gam.log_at((i,))
        gv = gam.gamma(xs, mu, V)
        U[:, i, 0, 0] = 1.0
        U[:, i, 1, 1] = gv[:, 0, 0]
    R = et.curvature_R(U, g, n_x=n_x)
    assert np.abs(R).max() > 1e-3
    herm = np.abs(R - np.conj(np.swapaxes(R, -1, -2))).max()
    assert herm < 1e-9
    flat = (xs < 0.2) | (xs > 0.8)
    assert np.abs(R[:, flat]).max() < 1e-12


def test_curvature_refinement_order():
    g = forms.torus_grid(8, 8)
    q = mixing_torus_q(g)
    vals = {}
    for n_x in (16, 32, 64):
        U = _path_field(g, q, n_x)
        R = et.curvature_R(U, g, n_x=n_x)
        vals[n_x] = R[:, ::n_x // 16]       # the 17 common sample points
    e1 = np.abs(vals[16] - vals[64]).max()
    e2 = np.abs(vals[32] - vals[64]).max()
    assert e1 / e2 == pytest.approx(4.0, rel=0.35)


# ---------------------------------------------------------------------------
# matrix elements
# ---------------------------------------------------------------------------

def test_matrix_elements_zero_curvature():
    th = np.array([np.pi / 2, 3 * np.pi / 2])
    V = np.eye(2, dtype=complex)
    blocks = et.R_matrix_elements(th, V, 4, lambda xs: np.zeros((2, len(xs), 2, 2)),
                                  (0.2, 0.8))
    assert np.abs(blocks).max() == 0.0


def _node_rtilde(fam, idx, gamma, h):
    mu_c, V_c = gamma.log_at(idx)

    def rtilde(xs):
        nxs = len(xs)
        both = np.concatenate([xs - h, xs + h])
        g_c = gamma.gamma(both, mu_c, V_c)
        out = np.empty((fam.grid.ndim, nxs, fam.d, fam.d), dtype=complex)
        for ax in range(fam.grid.ndim):
            dg = np.zeros_like(g_c)
            for (nidx, wgt) in et._stencil_indices(fam.grid, idx, ax):
                mu_n, V_n = gamma.log_at(nidx, mu_c, V_c)
                dg += wgt * gamma.gamma(both, mu_n, V_n)
            chi = et._antiherm_connection(g_c, dg)
            out[ax] = (chi[nxs:] - chi[:nxs]) / (2 * h)
        return out

    return rtilde


def test_matrix_elements_hermitian_blocks():
    g = forms.torus_grid(8, 8)
    fam = bott_pair_family(g, mixing_torus_q(g))
    gamma = et._StandardGamma(fam)
    idx = (2, 3)
    th, V = et._eigdata(fam.w(idx))
    blocks = et.R_matrix_elements(th, V, 8, _node_rtilde(fam, idx, gamma, 1 / 64),
                                  (0.2, 0.8))
    for c in range(2):
        assert np.abs(blocks[c] - blocks[c].conj().T).max() < 1e-9


def test_matrix_elements_row_parseval():
    """Fixed-row Parseval: sum over k' of |<f_{j,0}, R f_{j',k'}>|^2 equals
    (1/2) int |v_j^* Rtilde v_j'|^2 dx summed over j', within 1 percent."""
    g = forms.torus_grid(8, 8)
    fam = bott_pair_family(g, mixing_torus_q(g))
    gamma = et._StandardGamma(fam)
    idx = (3, 5)
    th, V = et._eigdata(fam.w(idx))
    K = 200
    rt = _node_rtilde(fam, idx, gamma, 1 / 64)
    blocks = et.R_matrix_elements(th, V, K, rt, (0.2, 0.8))
    nk = 2 * K + 1
    c = 0
    row_sum = 0.0
    for j1 in range(2):
        row = blocks[c][j1 * nk + K]        # modes (j1, k=0) against everything
        row_sum += float(np.sum(np.abs(row) ** 2))
    pts, wts = panel_points(0.2, 0.8, 24, 16)
    rts = rt(pts)[c]
    direct = 0.0
    for j1 in range(2):
        for j2 in range(2):
            vals = np.einsum("a,xab,b->x", V[:, j1].conj(), rts, V[:, j2])
            # elements carry -(i/2) (factor 1/4) and the half-integer Fourier
            # system is Parseval-complete on the doubled interval (factor 2)
            direct += 0.5 * np.sum(wts * np.abs(vals) ** 2)
    assert row_sum == pytest.approx(direct, rel=0.01)


# ---------------------------------------------------------------------------
# Volterra series against dense exponentiation
# ---------------------------------------------------------------------------

def _small_model(K=6):
    g = forms.torus_grid(3, 3)
    b1 = g.coords[0][:, None]
    b2 = g.coords[1][None, :]
    p0 = np.exp(1j * b1) * np.ones_like(b2)
    p1 = np.exp(1j * (b1 + 2.2 + 0.4 * np.sin(b2)))
    fam = et.PairFamily(g, p0[..., None, None], p1[..., None, None])
    idx = (1, 1)
    th, V = et._eigdata(fam.w(idx))
    gamma = et._EpsilonGamma(fam, 0.3)
    h = 1.0 / 256

    def rtilde(xs):
        nxs = len(xs)
        both = np.concatenate([xs - h, xs + h])
        m0c, m1c = gamma.logs_at(idx, idx)
        g_c = gamma.gamma(both, m0c, m1c)
        out = np.empty((2, nxs, 1, 1), dtype=complex)
        for ax in range(2):
            dg = np.zeros_like(g_c)
            for (nidx, wgt) in et._stencil_indices(g, idx, ax):
                m0n, m1n = gamma.logs_at(idx, nidx)
                dg += wgt * gamma.gamma(both, m0n, m1n)
            chi = et._antiherm_connection(g_c, dg)
            out[ax] = (chi[nxs:] - chi[:nxs]) / (2 * h)
        return out

    blocks = et.R_matrix_elements(th, V, K, rtilde, (0.0, 0.3))
    blocks += et.R_matrix_elements(th, V, K, rtilde, (0.7, 1.0))
    lams = et._mode_lambdas(th, K)
    return lams, blocks


def test_volterra_series_vs_dense_exponential():
    lams, blocks = _small_model(K=6)
    assert len(lams) <= 40
    R1, R2 = blocks[0], blocks[1]
    assert np.abs(R1).max() > 1e-4      # nontrivial insertion data
    for t in (0.5, 1.0, 2.0):
        series = et.volterra_deg2_series(lams, R1, R2, t)
        dense = et.dense_deg2_supertrace(lams, R1, R2, t)
        assert abs(series - dense) <= 1e-8 * max(1.0, abs(dense))


def test_deg2_quadrature_matches_closed_kernel():
    lams, blocks = _small_model(K=6)
    closed = et.deg2_from_elements(lams, blocks[0], blocks[1], mode="closed")
    quadv = et.deg2_from_elements(lams, blocks[0], blocks[1], mode="quadrature")
    assert abs(closed - quadv) < 1e-6 * max(1.0, abs(closed))


# ---------------------------------------------------------------------------
# eta forms
# ---------------------------------------------------------------------------

def test_eta_form_constant_family():
    g = forms.torus_grid(6, 6)
    q0 = mixing_torus_q(g)[1, 2]
    q = np.broadcast_to(q0, (6, 6, 2, 2)).copy()
    fam = bott_pair_family(g, q)
    form = et.eta_form(fam, K=16, n_x=32)
    p0 = lag.from_unitary(np.eye(2, dtype=complex))
    p1 = lag.from_unitary(1j * (2 * q0 - np.eye(2)))
    want = eta_invariant(p0, p1)
    assert np.abs(form.deg0 - want).max() < 1e-10
    assert np.abs(form.deg2).max() < 1e-10
    limit = et.eta_form_boundary_limit(fam)
    assert np.abs(limit.deg0 - want).max() < 1e-10
    assert np.abs(limit.deg2).max() < 1e-12


def test_eta_form_symmetric_pair_is_zero():
    g = forms.torus_grid(6, 6)
    eye = np.broadcast_to(np.eye(1, dtype=complex), (6, 6, 1, 1)).copy()
    fam = et.PairFamily(g, eye, -eye)
    form = et.eta_form(fam, K=16, n_x=32)
    assert np.abs(form.deg0).max() < 1e-12
    assert np.abs(form.deg2).max() < 1e-12


def test_boundary_limit_epsilon_route_agreement():
    g = forms.sphere_grid(16, 16)
    fam = bott_pair_family(g, bott_q_field(g))
    limit = et.eta_form_boundary_limit(fam)
    idx = (7, 3)
    devs = []
    for eps, K in ((0.3, 80), (0.15, 160)):
        ef = et.eta_form_epsilon(fam, eps, K=K, n_x=256)
        devs.append(abs(ef.deg2[0][idx] - limit.deg2[0][idx]))
    assert devs[1] < devs[0]
    assert devs[1] / devs[0] == pytest.approx(0.5, abs=0.2)   # linear in eps
    assert limit.deg2_residual < 1e-9


def test_eta_form_rejects_nontransverse_family():
    from maslov_eta.errors import TransversalityError
    g = forms.torus_grid(4, 4)
    eye = np.broadcast_to(np.eye(1, dtype=complex), (4, 4, 1, 1)).copy()
    fam = et.PairFamily(g, eye, eye.copy())
    with pytest.raises(TransversalityError):
        et.eta_form_boundary_limit(fam)
    with pytest.raises(TransversalityError):
        et.eta_form(fam, K=4, n_x=16)


def test_eta_form_json_roundtrip():
    g = forms.sphere_grid(6, 6)
    fam = bott_pair_family(g, bott_q_field(g))
    form = et.eta_form_boundary_limit(fam)
    back = et.EtaForm.from_json(form.to_json())
    assert np.allclose(back.deg0, form.deg0)
    assert np.allclose(back.deg2, form.deg2)
    assert back.metadata["route"] == "boundary_limit"
    assert back.grid.meta() == g.meta()


def test_matrix_elements_rejects_undersampled_rule():
    th = np.array([np.pi / 2])
    V = np.eye(1, dtype=complex)
    import pytest as _pytest
    from maslov_eta.errors import PreconditionError
    with _pytest.raises(PreconditionError):
        et.R_matrix_elements(th, V, 4, lambda xs: np.zeros((2, len(xs), 1, 1)),
                             (0.2, 0.8), nodes_per_period=4)


def test_clm_identity_deg2_small_sphere():
    g = forms.sphere_grid(20, 20)
    q = bott_q_field(g)
    eye2 = np.eye(2, dtype=complex)
    shape = g.shape
    p_ps = np.broadcast_to(eye2, shape + (2, 2)).copy()
    p1 = 1j * (2 * q - eye2)               # block of cayley(1 - 2q)
    p2 = 1j * (eye2 - 2 * q)               # block of cayley(2q - 1)
    pair01 = et.PairFamily(g, p_ps, p1)
    pair12 = et.PairFamily(g, p1, p2)
    pair20 = et.PairFamily(g, p2, p_ps)
    total = None
    for fam in (pair01, pair12, pair20):
        ef = et.eta_form_boundary_limit(fam)
        total = ef.deg2_integral() if total is None else total + ef.deg2_integral()
        assert np.abs(ef.deg0).max() < 1e-9           # all branch pairs symmetric
    ch = forms.chern_character(q, g)
    ch_tau = 2 * forms.integrate(ch)                  # ch(p+) - ch(1-p+), p+ = q
    assert abs(total - ch_tau) / abs(ch_tau) < 0.02
