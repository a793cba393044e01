import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diracbc import errors
from diracbc.fiber import (
    GAMMA1,
    SIGMA1,
    SIGMA2,
    SIGMA3,
    Interval1D,
    assemble_operator,
    boundary_flux,
    boundary_projector,
    build_fiber_model,
    chiral_blocks,
    green_identity_defect,
    inner_product,
    norm,
    op_form,
    oracle_eigendecomposition,
)


def make_op(kind="local_gamma", n=101, L=1.0, p=None, q=None):
    fiber = build_fiber_model(p=p, q=q)
    bc = boundary_projector(kind, fiber)
    return assemble_operator(Interval1D(L, n), fiber, bc)


def test_pauli_realization():
    assert np.allclose(SIGMA1 @ SIGMA2, 1j * SIGMA3)
    assert np.allclose(GAMMA1 @ GAMMA1, -np.eye(2))
    assert np.allclose(GAMMA1.conj().T, -GAMMA1)


def test_fiber_model_rejects_broken_algebra(monkeypatch):
    import diracbc.fiber as fib
    monkeypatch.setattr(fib, "GAMMA1", SIGMA1)  # Hermitian, squares to +I
    with pytest.raises(errors.AlgebraViolation):
        fib.build_fiber_model()


@pytest.mark.parametrize("kind", ["local_gamma", "chiral_plus", "chiral_minus"])
def test_projectors_admissible(kind):
    fiber = build_fiber_model()
    bc = boundary_projector(kind, fiber)
    for side, gN in zip((0, 1), (GAMMA1, -GAMMA1)):
        P = bc.matrices[side]
        assert np.allclose(P @ P, P)
        assert np.allclose(P, P.conj().T)
        assert abs(np.trace(P).real - 1.0) < 1e-12  # rank one
        assert np.allclose(P @ gN, gN @ (np.eye(2) - P))


def test_local_gamma_matrices_explicit():
    bc = boundary_projector("local_gamma", build_fiber_model())
    assert np.allclose(bc.matrices[0], 0.5 * (np.eye(2) - SIGMA2))
    assert np.allclose(bc.matrices[1], 0.5 * (np.eye(2) + SIGMA2))
    # kernel directions carry the boundary sources
    k0 = bc.kernel_vector(0)
    assert np.allclose(k0 / k0[0], [1.0, 1.0j])
    kL = bc.kernel_vector(1)
    assert np.allclose(kL / kL[0], [1.0, -1.0j])


def test_custom_projector_roundtrip():
    fiber = build_fiber_model()
    P = 0.5 * (np.eye(2) - SIGMA2)
    bc = boundary_projector("custom", fiber, matrices=[P, P])
    assert bc.kind == "custom"
    comp = bc.complement()
    assert np.allclose(comp.matrices[0], 0.5 * (np.eye(2) + SIGMA2))


def test_custom_projector_rejected_when_not_admissible():
    fiber = build_fiber_model()
    bad = 0.5 * (np.eye(2) + SIGMA1)  # range vector not gamma-null
    with pytest.raises(errors.AnticommutationViolation):
        boundary_projector("custom", fiber, matrices=[bad, bad])
    with pytest.raises(errors.AnticommutationViolation):
        boundary_projector("custom", fiber,
                           matrices=[np.array([[1.0, 1.0], [0.0, 0.0]])] * 2)


def test_grid_too_coarse():
    fiber = build_fiber_model()
    bc = boundary_projector("local_gamma", fiber)
    with pytest.raises(errors.GridTooCoarse):
        assemble_operator(Interval1D(1.0, 8), fiber, bc)


def test_assembled_forms_hermitian_and_definite():
    op = make_op(n=64)
    assert np.allclose(op.matrix, op.matrix.conj().T)
    assert np.allclose(op.reduced_mass, op.reduced_mass.conj().T)
    w = np.linalg.eigvalsh(op.reduced_mass)
    assert w[0] > 0
    # local_gamma has no zero-average direction: reduction is the identity
    assert op.reduced_matrix.shape[0] == op.matrix.shape[0]


def test_chiral_mass_kernel_is_one_dimensional():
    op = make_op("chiral_plus", n=64)
    assert op.reduced_matrix.shape[0] == op.matrix.shape[0] - 1
    w = np.linalg.eigvalsh(op.reduced_mass)
    assert w[0] > 1e-6


def test_inner_product_sesquilinear():
    op = make_op(n=32)
    rng = np.random.default_rng(7)
    u = rng.normal(size=op.size) + 1j * rng.normal(size=op.size)
    v = rng.normal(size=op.size) + 1j * rng.normal(size=op.size)
    a = 0.3 - 1.1j
    assert inner_product(op, a * u, v) == pytest.approx(
        np.conj(a) * inner_product(op, u, v))
    assert inner_product(op, u, a * v) == pytest.approx(
        a * inner_product(op, u, v))
    assert inner_product(op, u, v) == pytest.approx(
        np.conj(inner_product(op, v, u)))
    assert norm(op, u) > 0


# --- spectra -----------------------------------------------------------
#
# For the free operator both model conditions quantize the wavenumber
# exactly on the lattice, and the discrete eigenvalue is the image of the
# continuum wavenumber under the stencil dispersion  tau(k) = (2/dx) tan(k dx / 2):
#   local_gamma:  k_m = (2m+1) pi / (2L),  both signs, all simple;
#   chiral_plus:  0 and +-(m pi / L), m = 1 .. N-2.


def dispersion(k, dx):
    return (2.0 / dx) * np.tan(0.5 * k * dx)


def test_local_gamma_free_spectrum_exact():
    L, n = 1.0, 101
    op = make_op("local_gamma", n=n, L=L)
    data = oracle_eigendecomposition(op)
    k = (2 * np.arange(n - 1) + 1) * np.pi / (2 * L)
    expect = np.sort(np.concatenate([dispersion(k, op.interval.dx),
                                     -dispersion(k, op.interval.dx)]))
    got = np.sort(data.eigenvalues)
    np.testing.assert_allclose(got, expect, rtol=1e-9, atol=1e-9)


def test_chiral_free_spectrum_exact_with_simple_kernel():
    L, n = 1.0, 101
    op = make_op("chiral_plus", n=n, L=L)
    data = oracle_eigendecomposition(op)
    m = np.arange(1, n - 1) * np.pi / L
    tau = dispersion(m, op.interval.dx)
    expect = np.sort(np.concatenate([[0.0], tau, -tau]))
    np.testing.assert_allclose(np.sort(data.eigenvalues), expect,
                               rtol=1e-9, atol=1e-9)
    assert np.sum(np.abs(data.eigenvalues) < 1e-10) == 1


def test_eigenvectors_orthonormal_and_traces_satisfy_bc():
    op = make_op("local_gamma", n=64)
    data = oracle_eigendecomposition(op, m=8)
    for j in range(8):
        for l in range(8):
            g = inner_product(op, data.interior[:, j], data.interior[:, l])
            assert abs(g - (1.0 if j == l else 0.0)) < 1e-10
    P0, PL = op.bc.matrices
    for j in range(8):
        assert np.linalg.norm(P0 @ data.traces[j, 0]) < 1e-10
        assert np.linalg.norm(PL @ data.traces[j, 1]) < 1e-10


def test_second_order_convergence_with_potential():
    # smooth non-constant potential; reference = fine-grid oracle
    L = 1.0
    p = lambda x: 0.3 * np.cos(np.pi * x / L)
    q = lambda x: 0.5 * np.sin(2 * np.pi * x / L)
    lam = {}
    for n in (51, 101, 401):
        op = make_op("local_gamma", n=n, L=L, p=p, q=q)
        lam[n] = oracle_eigendecomposition(op, m=6).eigenvalues
    e1 = np.max(np.abs(lam[51] - lam[401]))
    e2 = np.max(np.abs(lam[101] - lam[401]))
    assert 3.3 < e1 / e2 < 4.8


# --- flux identity -----------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.sampled_from([16, 33, 50]))
def test_green_identity_exact_on_arbitrary_fields(seed, n):
    # the summation-by-parts identity telescopes exactly: no smoothness,
    # no boundary condition needed
    op = make_op(n=n, p=0.4, q=lambda x: x**2)
    rng = np.random.default_rng(seed)
    u = rng.normal(size=op.size) + 1j * rng.normal(size=op.size)
    v = rng.normal(size=op.size) + 1j * rng.normal(size=op.size)
    scale = max(norm(op, u) * norm(op, v), 1.0)
    assert abs(green_identity_defect(op, u, v)) < 1e-12 * scale


def test_flux_vanishes_on_constrained_pairs():
    # fields satisfying the boundary condition pair to zero flux:
    # P u = 0 at an endpoint makes <gamma(nu) u, v> = 0 when P v = 0 too
    op = make_op("local_gamma", n=48)
    data = oracle_eigendecomposition(op, m=4)
    for j in range(4):
        for l in range(4):
            f = boundary_flux(data.interior[:, j], data.interior[:, l])
            assert abs(f) < 1e-10
            # and so the operator form is Hermitian on the domain
            h = op_form(op, data.interior[:, j], data.interior[:, l])
            ht = op_form(op, data.interior[:, l], data.interior[:, j])
            assert abs(h - np.conj(ht)) < 1e-10


# --- chiral channel blocks ---------------------------------------------


@pytest.mark.parametrize("amp", [0.0, 0.25, 0.5])
def test_chiral_blocks_kernel_dimensions(amp):
    L, n = 1.0, 81
    q = lambda x: amp * np.sin(2 * np.pi * x / L)
    op = make_op("chiral_plus", n=n, L=L, q=q)
    bp, bm = chiral_blocks(op)
    assert bp.shape == (n - 1, n - 2)   # Dirichlet-trimmed channel
    assert bm.shape == (n - 1, n)
    def kdim(a):
        sv = np.linalg.svd(a, compute_uv=False)
        rank = int(np.sum(sv > max(a.shape) * sv[0] * 1e-10))
        return a.shape[1] - rank
    assert kdim(bp) == 0
    assert kdim(bm) == 1


def test_chiral_blocks_unavailable_for_local_gamma():
    op = make_op("local_gamma", n=32)
    with pytest.raises(errors.DecompositionUnavailable):
        chiral_blocks(op)
