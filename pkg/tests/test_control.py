import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diracbc.control import (
    ControlProblem,
    ControlSetup,
    DistanceProfile,
    SliceSpec,
    boundary_distance_reconstruct,
    control_to_state,
    estimate_rad,
    make_control_setup,
    slice_nonempty,
    solve_control,
    z_membership,
)
from diracbc.errors import (
    GridMismatch,
    LatticeTooShort,
    SingularGram,
    TargetNotExpressible,
)
from diracbc.fiber import (
    Interval1D,
    assemble_operator,
    boundary_projector,
    build_fiber_model,
    inner_product,
)
from diracbc.propagate import BoundarySource, TimeGrid, evolve, spline_bump

L = 1.0


def make_op(kind="local_gamma", n=101, p=None, q=None, length=L):
    fiber = build_fiber_model(p=p, q=q)
    return assemble_operator(Interval1D(length, n), fiber,
                             boundary_projector(kind, fiber))


@pytest.fixture(scope="module")
def rig101():
    op = make_op(n=101)
    return op, make_control_setup(op)


@pytest.fixture(scope="module")
def rig161():
    op = make_op(n=161)
    return op, make_control_setup(op)


def offset_bump(setup, side, depth, width=0.04):
    """Source emitting a bump from one endpoint that sits at the given
    geodesic depth when the clock reads T1."""
    grid, T1 = setup.grid, setup.T1
    vals = np.zeros((grid.n_steps + 1, 2, 2), dtype=complex)
    w = setup.op.bc.range_vector(side)
    vals[:, side, :] = spline_bump(grid.nodes, T1 - depth, width)[:, None] \
        * w[None, :]
    return BoundarySource(values=vals, smooth_start=False)


# --- problem statements ------------------------------------------------


def test_problem_validation():
    with pytest.raises(ValueError):
        ControlProblem(("known_source", None), sigma=(0,), T=1.0, alpha=0.0)
    with pytest.raises(ValueError):
        ControlProblem(("known_source", None), sigma=(0,), T=-1.0, alpha=1e-8)
    with pytest.raises(ValueError):
        ControlProblem(("mystery", None), sigma=(0,), T=1.0, alpha=1e-8)
    with pytest.raises(ValueError):
        ControlProblem(("known_source", None), sigma=("top",), T=1.0,
                       alpha=1e-8)
    p = ControlProblem(("known_source", None), sigma="left", T=1.0,
                       alpha=1e-8)
    assert p.sigma == (0,)
    p = ControlProblem(("known_source", None), sigma=("right", 0), T=1.0,
                       alpha=1e-8)
    assert p.sigma == (0, 1)


def test_slice_spec_validation():
    with pytest.raises(ValueError):
        SliceSpec(slices=(((0,), 0.5, 0.3),))
    with pytest.raises(ValueError):
        SliceSpec(slices=(((0,), 0.0, 0.3),))
    spec = SliceSpec(slices=(("left", 0.3, 0.7), ((0, 1), 0.1, 0.2)))
    assert len(spec) == 2
    assert list(spec)[0] == ((0,), 0.3, 0.7)


def test_distance_profile_validation():
    with pytest.raises(ValueError):
        DistanceProfile(r_left=-0.1, r_right=0.5)
    DistanceProfile(r_left=0.0, r_right=0.0)


# --- the regularized least-squares kernel -------------------------------


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), m=st.sampled_from([3, 8, 17]))
def test_control_to_state_matches_direct_least_squares(seed, m):
    # with gram/cross/target-norm all induced by the same vectors, the
    # reported residual is the literal least-squares residual
    rng = np.random.default_rng(seed)
    n = m + 5
    A = rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    G = A.conj().T @ A
    b = A.conj().T @ psi
    prob = ControlProblem(("known_source", None), sigma=(0,), T=1.0,
                          alpha=1e-12)
    rep = control_to_state(prob, G, b, np.vdot(psi, psi).real)
    c_direct, res2, *_ = np.linalg.lstsq(A, psi, rcond=None)
    assert rep.residual == pytest.approx(np.sqrt(res2[0]), rel=1e-6, abs=1e-9)
    assert np.linalg.norm(rep.coefficients - c_direct) < 1e-5 * (
        1 + np.linalg.norm(c_direct))
    assert rep.relative_residual == pytest.approx(
        rep.residual / np.linalg.norm(psi))


def test_control_to_state_alpha_ladder_monotone():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(12, 6)) + 1j * rng.normal(size=(12, 6))
    psi = rng.normal(size=12) + 1j * rng.normal(size=12)
    G, b = A.conj().T @ A, A.conj().T @ psi
    res = []
    for alpha in (1e-12, 1e-8, 1e-4, 1e-1):
        prob = ControlProblem(("known_source", None), sigma=(0,), T=1.0,
                              alpha=alpha)
        res.append(control_to_state(prob, G, b, np.vdot(psi, psi).real)
                   .residual)
    assert all(r2 >= r1 - 1e-12 for r1, r2 in zip(res, res[1:]))


def test_control_to_state_singular_gram_guards():
    prob = ControlProblem(("known_source", None), sigma=(0,), T=1.0,
                          alpha=1e-17)
    with pytest.raises(SingularGram):
        control_to_state(prob, np.eye(4), np.ones(4), 1.0)
    prob = ControlProblem(("known_source", None), sigma=(0,), T=1.0,
                          alpha=1e-6)
    bad = np.full((3, 3), np.nan)
    with pytest.raises(SingularGram):
        control_to_state(prob, bad, np.ones(3), 1.0)


# --- solve_control ------------------------------------------------------


def test_solve_control_reproduces_basis_member(rig101):
    # targeting the wave of a source the basis contains must be solved
    # exactly, with the indicator coefficient vector
    op, _ = rig101
    from diracbc.propagate import source_basis
    T = 0.6
    grid = TimeGrid.unit_cfl(op, 2 * T)
    basis = source_basis(op, grid, 24, endpoints=(0, 1), t_end=T)
    prob = ControlProblem(("known_source", basis[7]), sigma=(0, 1), T=T,
                          alpha=1e-10)
    rep = solve_control(op, prob, grid=grid, basis=basis)
    assert rep.relative_residual < 1e-6
    e = np.zeros(len(basis))
    e[7] = 1.0
    assert np.max(np.abs(rep.coefficients - e)) < 1e-4
    assert rep.source is not None


def test_solve_control_eigen_combination_target(rig101):
    op, _ = rig101
    from diracbc.propagate import source_basis
    T = 0.6
    grid = TimeGrid.unit_cfl(op, 2 * T)
    basis = source_basis(op, grid, 20, endpoints=(0, 1), t_end=T)
    coeffs = np.array([2.0, -1.0j])
    prob = ControlProblem(("eigen_coefficients", coeffs,
                           [basis[3], basis[11]]),
                          sigma=(0, 1), T=T, alpha=1e-10)
    rep = solve_control(op, prob, grid=grid, basis=basis)
    assert rep.relative_residual < 1e-6
    e = np.zeros(len(basis), dtype=complex)
    e[3], e[11] = coeffs
    assert np.max(np.abs(rep.coefficients - e)) < 1e-3


def test_solve_control_oracle_target_reach_and_miss(rig101):
    # a bump at midpoint is reachable once the influence cones cover it
    # (T = 0.6 > 0.5) and entirely unreachable before (T = 0.3 < 0.5)
    op, _ = rig101
    x = op.interval.nodes
    psi = np.zeros((op.interval.n_nodes, 2), dtype=complex)
    psi[:, 0] = spline_bump(x, 0.5, 0.05)
    psi = psi.reshape(-1)

    prob = ControlProblem(("oracle_state", psi), sigma=(0, 1), T=0.6,
                          alpha=1e-10)
    with pytest.raises(TargetNotExpressible):
        solve_control(op, prob)
    rep = solve_control(op, prob, n_bumps=48, boundary_only=False)
    assert rep.relative_residual < 0.1

    # independent check: evolve the returned control and compare states
    kT = int(round(prob.T / op.interval.dx))
    short = TimeGrid(t_max=kT * op.interval.dx, n_steps=kT)
    f = BoundarySource(values=rep.source.values[:kT + 1],
                       smooth_start=rep.source.smooth_start)
    u = evolve(op, f, short).final()
    err2 = inner_product(op, u - psi, u - psi).real
    nrm2 = inner_product(op, psi, psi).real
    assert np.sqrt(err2 / nrm2) < 0.15

    miss = ControlProblem(("oracle_state", psi), sigma=(0, 1), T=0.3,
                          alpha=1e-10)
    rep = solve_control(op, miss, n_bumps=48, boundary_only=False)
    assert rep.relative_residual > 0.9


# --- the shared geometric rig --------------------------------------------


def test_make_control_setup_lattice_alignment(rig101):
    op, setup = rig101
    dt = setup.grid.dt
    assert dt == pytest.approx(op.interval.dx)
    assert setup.T1 == pytest.approx(round(setup.T1 / dt) * dt)
    assert setup.grid.t_max == pytest.approx(2 * setup.T1)
    assert setup.T1 == pytest.approx(5 * L)          # T + 4·rad_bound
    with pytest.raises(LatticeTooShort):
        setup.validate_slice(setup.lookback + 0.5)
    tight = make_control_setup(op, T=1.0, rad_bound=0.05, lookback=0.5)
    with pytest.raises(LatticeTooShort):
        tight.validate_slice(0.3)                    # > T1 - T = 0.2


def test_control_rows_select_by_depth_and_side(rig101):
    op, setup = rig101
    dt = setup.grid.dt
    rows = setup.control_rows((0,), 0.25)
    fam = setup.search()
    assert len(rows) == round(0.25 / dt) - 1
    assert np.all(fam.sides[rows] == 0)
    assert np.all(fam.times[rows] >= setup.T1 - 0.25 - 1e-12)
    both = setup.control_rows((0, 1), 0.25)
    assert len(both) == 2 * len(rows)


def test_search_positions_fold_at_the_far_end(rig101):
    op, setup = rig101
    fam = setup.search()
    pos = setup.search_positions()
    lag = setup.T1 - fam.times
    direct = lag <= L
    expect = np.where(fam.sides == 0,
                      np.where(direct, lag, 2 * L - lag),
                      L - np.where(direct, lag, 2 * L - lag))
    assert np.allclose(pos, expect)
    assert np.all(pos >= -1e-12) and np.all(pos <= L + 1e-12)


# --- wave-set membership --------------------------------------------------


def test_membership_accepts_the_zero_wave(rig161):
    _, setup = rig161
    zero = BoundarySource(
        values=np.zeros((setup.grid.n_steps + 1, 2, 2), dtype=complex))
    ok, detail = z_membership(setup, zero,
                              SliceSpec(slices=(((0,), 0.3, 0.7),)))
    assert ok
    assert detail["condition1"][0] <= detail["eps"]


def test_membership_localizes_a_travelling_bump(rig161):
    # emitted from the left, the bump sits at depth 0.5 at time T1: inside
    # the (0.3, 0.7) shell of either endpoint, outside (0.3, 0.35)
    _, setup = rig161
    f = offset_bump(setup, side=0, depth=0.5)
    ok, _ = z_membership(setup, f, SliceSpec(slices=(((0,), 0.3, 0.7),)))
    assert ok
    ok, _ = z_membership(setup, f, SliceSpec(
        slices=(((0,), 0.3, 0.7), ((1,), 0.3, 0.7))))
    assert ok
    bad, detail = z_membership(setup, f,
                               SliceSpec(slices=(((0,), 0.3, 0.35),)))
    assert not bad
    assert detail["condition1"][0] > detail["eps"]


def test_membership_sees_quiet_window_violations(rig161):
    # same bump, but the slice demands silence around its own arrival: the
    # trace lights up inside (T1 - tau, T1 + tau) and condition 2 fires
    _, setup = rig161
    f = offset_bump(setup, side=0, depth=0.2)
    bad, detail = z_membership(setup, f,
                               SliceSpec(slices=(((0,), 0.3, 0.7),)))
    assert not bad
    assert detail["condition2"][0] > detail["eps"]


def test_membership_rejects_data_in_the_edge_stencil(rig161):
    _, setup = rig161
    vals = np.zeros((setup.grid.n_steps + 1, 2, 2), dtype=complex)
    vals[1, 0, :] = setup.op.bc.range_vector(0)
    with pytest.raises(GridMismatch):
        z_membership(setup, BoundarySource(values=vals, smooth_start=False),
                     SliceSpec(slices=(((0,), 0.3, 0.7),)))


def test_membership_slice_exceeding_lookback(rig161):
    _, setup = rig161
    f = offset_bump(setup, side=0, depth=0.5)
    with pytest.raises(LatticeTooShort):
        z_membership(setup, f, SliceSpec(slices=(((0,), 0.3, 4.9),)))


# --- slice feasibility -----------------------------------------------------


def test_slice_feasibility_examples(rig161):
    _, setup = rig161
    # overlapping shells from the two ends share the middle of the interval
    assert slice_nonempty(setup, SliceSpec(
        slices=(((0,), 0.3, 0.7), ((1,), 0.3, 0.7))))
    # disjoint shells: nothing lives at depth <= 0.3 from both ends at once
    assert not slice_nonempty(setup, SliceSpec(
        slices=(((0,), 0.2, 0.3), ((1,), 0.2, 0.3))))
    # pinching from both sides leaves exactly the midpoint
    assert slice_nonempty(setup, SliceSpec(
        slices=(((0,), 0.45, 0.55), ((1,), 0.45, 0.55))))
    # a one-sided shell is always populated
    assert slice_nonempty(setup, SliceSpec(slices=(((0, 1), 0.2, 0.4),)))


def _region(sigma, tm, tp, length):
    """Union of intervals {x : tm <= dist(x, sigma) <= tp} on [0, length]."""
    parts = []
    if 0 in sigma:
        parts.append((tm, min(tp, length)))
    if 1 in sigma:
        parts.append((length - min(tp, length), length - tm))
    if len(sigma) == 2:
        # dist = min of the two; each branch is cut by the other's tm
        parts = [(tm, min(tp, length - tm)),
                 (max(length - tp, tm), length - tm)]
    return [(lo, hi) for lo, hi in parts if lo <= hi]


def _intersect(u1, u2):
    out = []
    for a1, b1 in u1:
        for a2, b2 in u2:
            lo, hi = max(a1, a2), min(b1, b2)
            if lo <= hi:
                out.append((lo, hi))
    return out


def _feasible(slices, length, delta):
    """delta > 0 shrinks every shell (strict feasibility), < 0 expands."""
    region = [(0.0, length)]
    for sigma, tm, tp in slices:
        tm_, tp_ = tm + delta, tp - delta
        if tm_ <= 0 or tm_ >= tp_:
            if delta > 0:
                return False
            tm_ = max(tm_, 1e-9)
        region = _intersect(region, _region(sigma, tm_, tp_, length))
        if not region:
            return False
    return True


def test_slice_feasibility_against_interval_arithmetic(rig101):
    # the geometric model is plain interval arithmetic on [0, L]; the
    # discrete decision must agree on every case that is not borderline at
    # the grid scale
    op, setup = rig101
    dx = op.interval.dx
    margin = 6 * dx
    rng = np.random.default_rng(7)
    sigmas = [(0,), (1,), (0, 1)]
    checked = 0
    for _ in range(50):
        slices = []
        for _ in range(rng.integers(1, 4)):
            tm = rng.uniform(0.05, 0.6)
            tp = rng.uniform(tm + 0.05, 1.0)
            slices.append((sigmas[rng.integers(3)], tm, tp))
        surely_yes = _feasible(slices, L, margin)
        surely_no = not _feasible(slices, L, -margin)
        if not (surely_yes or surely_no):
            continue
        got = slice_nonempty(setup, SliceSpec(slices=tuple(slices)))
        assert got == surely_yes, (slices, got)
        checked += 1
    assert checked >= 25


# --- rad(M, sigma) ----------------------------------------------------------


def test_estimate_rad_free_operator():
    op = make_op(n=101)
    dx = op.interval.dx
    r_both = estimate_rad(op, (0, 1))
    r_left = estimate_rad(op, (0,))
    assert abs(r_both - L / 2) <= 2 * dx
    assert abs(r_left - L) <= 2 * dx
    assert r_both <= r_left + 1e-12


def test_estimate_rad_with_potential():
    # zeroth-order terms do not move wavefronts: the fill radius is
    # geometric and stays L for one-sided control
    op = make_op(n=101, p=0.2, q=lambda x: 0.4 * np.sin(2 * np.pi * x))
    dx = op.interval.dx
    assert abs(estimate_rad(op, (0,)) - L) <= 2 * dx


# --- boundary distance reconstruction ---------------------------------------


def test_distance_reconstruction_recovers_the_length(rig101):
    op, setup = rig101
    dx = op.interval.dx
    recon = boundary_distance_reconstruct(setup)
    assert recon.profiles
    assert abs(recon.length - L) <= 2 * dx
    sums = np.array([p.r_left + p.r_right for p in recon.profiles])
    assert np.max(np.abs(sums - L)) <= 4 * dx + 1e-12
    pairs = {(round(p.r_left / dx), round(p.r_right / dx))
             for p in recon.profiles}
    assert (30, 70) in pairs
    assert (30, 30) not in pairs
    # every admissible left-distance in the scanned band is represented
    lefts = {round(p.r_left / dx) for p in recon.profiles}
    assert {k for k in range(20, 81, 2)} <= lefts
