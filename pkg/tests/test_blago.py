import numpy as np
import pytest

from diracbc import errors
from diracbc.blago import (
    cone_inner_products,
    dt_series,
    gram_matrix,
    inner_product_table,
    inner_products,
    mixed_inner_product,
    table_column,
    wave_norm,
)
from diracbc.fiber import (
    Interval1D,
    apply_chirality,
    assemble_operator,
    boundary_projector,
    build_fiber_model,
    inner_product,
)
from diracbc.propagate import (
    BoundarySource,
    TimeGrid,
    evolve,
    response,
    responses,
    source_basis,
    spline_bump,
)

L, N, T = 1.0, 201, 1.5


def make_op(kind="local_gamma", n=N, p=None, q=None):
    fiber = build_fiber_model(p=p, q=q)
    return assemble_operator(Interval1D(L, n), fiber,
                             boundary_projector(kind, fiber))


def random_source(op, grid, rng, t_end=1.2):
    """Random smooth source: a few spline bumps, both endpoints, complex amps."""
    nb = 4
    width = t_end / 8
    centers = np.linspace(2 * width + 2 * grid.dt, t_end - 2 * width, nb)
    t = grid.nodes
    vals = np.zeros((len(t), 2, 2), dtype=complex)
    for side in (0, 1):
        w = op.bc.range_vector(side)
        amp = rng.normal(size=nb) + 1j * rng.normal(size=nb)
        prof = sum(a * spline_bump(t, c, width) for a, c in zip(amp, centers))
        vals[:, side, :] = prof[:, None] * w[None, :]
    return BoundarySource(values=vals)


@pytest.fixture(scope="module")
def setup():
    op = make_op(q=lambda x: 0.4 * np.sin(2 * np.pi * x), p=0.2)
    grid = TimeGrid.unit_cfl(op, 2 * T)
    rng = np.random.default_rng(42)
    f = random_source(op, grid, rng)
    h = random_source(op, grid, rng)
    tr_f = response(op, f, grid)
    tr_h = response(op, h, grid)
    uf = evolve(op, f, grid)
    uh = evolve(op, h, grid)
    return op, grid, f, h, tr_f, tr_h, uf, uh


def oracle_pair(op, grid, uf, uh, T_):
    k = int(round(T_ / grid.dt))
    a = uf.values[k]
    b = uh.values[k]
    return (inner_product(op, apply_chirality(op, a, +1), b),
            inner_product(op, apply_chirality(op, a, -1), b))


def test_dt_series_second_order():
    t = np.linspace(0, 1, 101)
    v = np.exp(1j * 3 * t)
    d = dt_series(v, t[1] - t[0])
    assert np.max(np.abs(d - 3j * v)) < 3e-3


def test_zero_sources_give_zero():
    op = make_op(n=64)
    grid = TimeGrid.unit_cfl(op, 1.0)
    z = BoundarySource(np.zeros((grid.n_steps + 1, 2, 2), dtype=complex))
    tr = response(op, z, grid)
    T_ = 30 * grid.dt
    lp, lm = inner_products(tr, tr, grid, T_)
    assert lp == 0 and lm == 0
    assert wave_norm(tr, grid, T_) == 0.0


def test_inner_products_match_interior_oracle(setup):
    op, grid, f, h, tr_f, tr_h, uf, uh = setup
    lp, lm = inner_products(tr_f, tr_h, grid, T)
    op_, om = oracle_pair(op, grid, uf, uh, T)
    k = int(round(T / grid.dt))
    scale = (np.linalg.norm(uf.values[k]) * np.linalg.norm(uh.values[k])
             * op.interval.dx)
    assert abs(lp - op_) < 1e-3 * scale
    assert abs(lm - om) < 1e-3 * scale


def test_norm_identity_and_scaling(setup):
    op, grid, f, h, tr_f, tr_h, uf, uh = setup
    lp, lm = inner_products(tr_f, tr_f, grid, T)
    k = int(round(T / grid.dt))
    nrm2 = inner_product(op, uf.values[k], uf.values[k]).real
    assert (lp + lm).real == pytest.approx(nrm2, rel=2e-3)
    assert abs((lp + lm).imag) < 1e-9 * nrm2
    assert wave_norm(tr_f, grid, T) == pytest.approx(np.sqrt(nrm2), rel=2e-3)
    tr_scaled = type(tr_f)(values=(2.0 - 1.0j) * tr_f.values)
    assert wave_norm(tr_scaled, grid, T) == pytest.approx(
        abs(2.0 - 1.0j) * wave_norm(tr_f, grid, T), rel=1e-10)


def test_table_edges_and_conjugate_symmetry(setup):
    op, grid, f, h, tr_f, tr_h, uf, uh = setup
    tab = inner_product_table(tr_f, tr_h, grid, T)
    swapped = inner_product_table(tr_h, tr_f, grid, T)
    assert np.max(np.abs(tab.I_plus[0, :])) == 0        # t = 0 line
    assert np.max(np.abs(tab.I_plus[:, 0])) == 0        # s = 0 line
    for (s, t) in [(T, T), (1.2, 0.9), (0.6, 1.2)]:
        a = tab.at(+1, s, t)
        b = swapped.at(+1, t, s)
        assert a == pytest.approx(np.conj(b), abs=1e-10 * max(1, abs(a)))


def test_hermitian_pairing(setup):
    op, grid, f, h, tr_f, tr_h, uf, uh = setup
    lp_fh, lm_fh = inner_products(tr_f, tr_h, grid, T)
    lp_hf, lm_hf = inner_products(tr_h, tr_f, grid, T)
    scale = max(abs(lp_fh), abs(lm_fh))
    assert abs(lp_fh - np.conj(lp_hf)) < 1e-10 * scale
    assert abs(lm_fh - np.conj(lm_hf)) < 1e-10 * scale


def test_cone_route_agrees_with_leapfrog(setup):
    # independent quadrature of the same cone integral: the diagonal-weight
    # sensitivity check
    op, grid, f, h, tr_f, tr_h, uf, uh = setup
    lp1, lm1 = inner_products(tr_f, tr_h, grid, T)
    lp2, lm2 = cone_inner_products(tr_f, tr_h, grid, T)
    k = int(round(T / grid.dt))
    scale = (np.linalg.norm(uf.values[k]) * np.linalg.norm(uh.values[k])
             * op.interval.dx)
    assert abs(lp1 - lp2) < 1e-3 * scale
    assert abs(lm1 - lm2) < 1e-3 * scale


def test_table_column_matches_cone_quadrature(setup):
    # FFT route and direct cone integral share the same quadrature: the
    # agreement is at roundoff, not discretization, level
    op, grid, f, h, tr_f, tr_h, uf, uh = setup
    col_p = table_column(tr_f, tr_h, grid, s0=T, n_t=int(round(T / grid.dt)),
                         sign=+1)
    lp2, _ = cone_inner_products(tr_f, tr_h, grid, T)
    assert abs(col_p[-1] - lp2) < 1e-10 * max(1.0, abs(lp2))
    assert abs(col_p[0]) < 1e-12


def test_gram_matrix_against_oracle():
    op = make_op(q=0.3)
    grid = TimeGrid.unit_cfl(op, 2 * T)
    basis = source_basis(op, grid, n_bumps=3, t_end=1.2)
    trs = responses(op, basis, grid)
    gp, gm = gram_matrix(trs, grid, T)
    k = int(round(T / grid.dt))
    fields = [evolve(op, b, grid).values[k] for b in basis]
    m = len(basis)
    op_p = np.array([[inner_product(op, apply_chirality(op, fields[j], +1),
                                    fields[l]) for l in range(m)]
                     for j in range(m)])
    op_m = np.array([[inner_product(op, apply_chirality(op, fields[j], -1),
                                    fields[l]) for l in range(m)]
                     for j in range(m)])
    scale = np.max(np.abs(op_p + op_m))
    assert np.max(np.abs(gp - op_p)) < 1e-3 * scale
    assert np.max(np.abs(gm - op_m)) < 1e-3 * scale
    g = gp + gm
    assert np.allclose(g, g.conj().T)
    ev = np.linalg.eigvalsh(g)
    assert ev[0] >= -1e-8 * np.trace(g).real


def test_gram_diagonal_for_disjoint_waves():
    # two left-endpoint bumps far apart in time, free potential: the waves at
    # time T occupy disjoint regions, so off-diagonal entries vanish
    op = make_op()
    grid = TimeGrid.unit_cfl(op, 1.6)
    t = grid.nodes
    w = op.bc.range_vector(0)
    srcs = []
    for c in (0.14, 0.56):
        vals = np.zeros((len(t), 2, 2), dtype=complex)
        vals[:, 0, :] = spline_bump(t, c, 0.03)[:, None] * w[None, :]
        srcs.append(BoundarySource(vals))
    trs = responses(op, srcs, grid)
    gp, gm = gram_matrix(trs, grid, 0.8)
    g = gp + gm
    off = abs(g[0, 1])
    diag = min(abs(g[0, 0]), abs(g[1, 1]))
    assert diag > 1e-4
    assert off < 1e-6 * diag


def test_lattice_guards(setup):
    op, grid, f, h, tr_f, tr_h, uf, uh = setup
    with pytest.raises(errors.LatticeTooShort):
        inner_products(tr_f, tr_h, grid, grid.t_max * 0.75)
    with pytest.raises(errors.GridMismatch):
        inner_products(tr_f, tr_h, grid, T + 0.3 * grid.dt)
    with pytest.raises(errors.LatticeTooShort):
        table_column(tr_f, tr_h, grid, s0=0.2, n_t=100, sign=+1)
    tab = inner_product_table(tr_f, tr_h, grid, T)
    with pytest.raises(errors.LatticeTooShort):
        tab.at(+1, 2 * T, T)


# --- mixed boundary conditions -----------------------------------------


@pytest.fixture(scope="module")
def mixed_setup():
    fiber = build_fiber_model(p=0.2, q=lambda x: 0.4 * np.sin(2 * np.pi * x))
    bc = boundary_projector("local_gamma", fiber)
    iv = Interval1D(L, N)
    op_a = assemble_operator(iv, fiber, bc)
    op_b = assemble_operator(iv, fiber,
                             boundary_projector("custom", fiber,
                                                matrices=bc.complement().matrices))
    grid = TimeGrid.unit_cfl(op_a, 1.6)
    rng = np.random.default_rng(5)
    f_a = random_source(op_a, grid, rng)
    f_b = random_source(op_b, grid, rng)
    return op_a, op_b, grid, f_a, f_b


def test_mixed_inner_product_against_oracle(mixed_setup):
    op_a, op_b, grid, f_a, f_b = mixed_setup
    tr_a = response(op_a, f_a, grid)
    tr_b = response(op_b, f_b, grid)
    ua = evolve(op_a, f_a, grid)
    ub = evolve(op_b, f_b, grid)
    for (t, s) in [(0.9, 0.7), (0.5, 1.1), (1.2, 1.2)]:
        got = mixed_inner_product(op_a.bc, tr_a, f_a, tr_b, f_b, grid, t, s)
        kt, ks = int(round(t / grid.dt)), int(round(s / grid.dt))
        want = inner_product(op_a, ua.values[kt], ub.values[ks])
        scale = max(np.linalg.norm(ua.values[kt])
                    * np.linalg.norm(ub.values[ks]) * op_a.interval.dx, 1e-9)
        assert abs(got - want) < 2e-3 * scale
        # conjugate symmetry under swapping roles
        swapped = mixed_inner_product(op_a.bc.complement(), tr_b, f_b,
                                      tr_a, f_a, grid, s, t)
        assert abs(got - np.conj(swapped)) < 1e-12 * max(1.0, abs(got))


def test_mixed_zero_and_projector_guard(mixed_setup):
    op_a, op_b, grid, f_a, f_b = mixed_setup
    tr_a = response(op_a, f_a, grid)
    zero = BoundarySource(np.zeros_like(f_b.values))
    tr_zero = response(op_b, zero, grid)
    val = mixed_inner_product(op_a.bc, tr_a, f_a, tr_zero, zero, grid, 0.9, 0.7)
    assert val == 0
    with pytest.raises(errors.WrongProjectorSide):
        mixed_inner_product(op_a.bc, tr_a, f_a, tr_a, f_a, grid, 0.9, 0.7)
