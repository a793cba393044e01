"""Fiber algebra and discretization of the 1D Dirac-type operator.

The continuum object is ``D = i σ₁ ∂ₓ + Q(x)`` acting on ℂ²-valued fields on
``[0, L]``, with Clifford action ``γ₁ = i σ₁`` (skew-Hermitian, ``γ₁² = −I``),
chirality ``F = σ₃`` (``F² = I``, ``Fγ₁ + γ₁F = 0``) and potential
``Q = p σ₁ + q σ₂`` anticommuting with F.  A boundary condition is a rank-one
orthoprojector P per endpoint with ``P γ(N) = γ(N)(I−P)``, N the interior
normal; the constrained realization is self-adjoint.

Discretization: unknowns are collocated at the N nodes; the operator equation
is tested at the N−1 cell midpoints through the cell-average map A and the
two-point difference map ∂.  With S a basis of the bc-constrained subspace,

    H = dx · (A S)† (Op S),      M = dx · (A S)† (A S)

form a Hermitian-definite pencil (after dropping the decoupled zero-average
direction that chiral conditions admit).  The compact stencil has injective
dispersion — no spurious doubling of the spectrum — and the flux identity

    ⟨⟨Du, v⟩⟩ − ⟨⟨u, Dv⟩⟩ = ⟨γ(ν)u, v⟩|₀ + ⟨γ(ν)u, v⟩|_L      (ν exterior)

telescopes exactly on the lattice.  Inner products are conjugate-linear in the
first slot throughout.
"""
from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (
    AlgebraViolation,
    AnticommutationViolation,
    DecompositionFailure,
    DecompositionUnavailable,
    GridTooCoarse,
)

SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
GAMMA1 = 1.0j * SIGMA1
PI_PLUS = 0.5 * (np.eye(2) + SIGMA3)
PI_MINUS = 0.5 * (np.eye(2) - SIGMA3)

_ALGEBRA_TOL = 1e-12

#: Clifford action of the interior normal at each endpoint (left points into
#: +x, right into −x).
INTERIOR_GAMMA = {"left": GAMMA1, "right": -GAMMA1}
#: Clifford action of the exterior normal — the convention the flux identity
#: actually satisfies.
EXTERIOR_GAMMA = {"left": -GAMMA1, "right": GAMMA1}


def _as_potential(f: Callable[[np.ndarray], np.ndarray] | float | None):
    if f is None:
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if np.isscalar(f):
        c = float(f)
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    return f


@dataclasses.dataclass(frozen=True, eq=False)
class FiberModel:
    """Fiber algebra data: Clifford matrix, chirality, potential coefficients."""

    dim: int
    gamma1: np.ndarray
    chirality: np.ndarray
    p: Callable[[np.ndarray], np.ndarray]
    q: Callable[[np.ndarray], np.ndarray]

    def potential(self, x: np.ndarray) -> np.ndarray:
        """Q(x) = p(x)σ₁ + q(x)σ₂ as an array of 2×2 blocks, shape (len(x),2,2)."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(self.p(x), dtype=float)
        q = np.asarray(self.q(x), dtype=float)
        return p[..., None, None] * SIGMA1 + q[..., None, None] * SIGMA2


def build_fiber_model(p=None, q=None) -> FiberModel:
    """Validate the fiber algebra and return the model.

    Parameters
    ----------
    p, q : callable, scalar or None
        Real coefficient functions of the potential ``Q = p σ₁ + q σ₂``.
        Scalars are promoted to constants, None to zero.

    Raises
    ------
    AlgebraViolation
        If any Clifford/chirality identity fails beyond 1e−12 (defensive —
        the fixed Pauli realization satisfies them exactly).
    """
    g, F = GAMMA1, SIGMA3
    checks = {
        "gamma1^2 = -I": g @ g + np.eye(2),
        "gamma1 skew-Hermitian": g + g.conj().T,
        "F^2 = I": F @ F - np.eye(2),
        "F Hermitian": F - F.conj().T,
        "F gamma1 + gamma1 F = 0": F @ g + g @ F,
        "F Q + Q F = 0 (sigma1)": F @ SIGMA1 + SIGMA1 @ F,
        "F Q + Q F = 0 (sigma2)": F @ SIGMA2 + SIGMA2 @ F,
    }
    for name, defect in checks.items():
        if np.max(np.abs(defect)) > _ALGEBRA_TOL:
            raise AlgebraViolation(f"fiber identity failed: {name}")
    return FiberModel(dim=2, gamma1=g, chirality=F,
                      p=_as_potential(p), q=_as_potential(q))


@dataclasses.dataclass(frozen=True)
class Interval1D:
    """Flat interval [0, L] sampled at N equispaced nodes."""

    length: float
    n_nodes: int

    @property
    def dx(self) -> float:
        return self.length / (self.n_nodes - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_nodes)

    @property
    def cell_midpoints(self) -> np.ndarray:
        x = self.nodes
        return 0.5 * (x[:-1] + x[1:])


def _orthoprojector_defect(P: np.ndarray) -> float:
    return max(np.max(np.abs(P @ P - P)), np.max(np.abs(P - P.conj().T)))


@dataclasses.dataclass(frozen=True, eq=False)
class BoundaryProjector:
    """Rank-one boundary orthoprojectors (one per endpoint).

    ``matrices[0]`` applies at x=0, ``matrices[1]`` at x=L.  Admissibility
    means ``P γ(N) = γ(N)(I−P)`` at each endpoint; that forces rank one, so
    each endpoint carries exactly one scalar source channel.
    """

    kind: str
    matrices: tuple[np.ndarray, np.ndarray]

    def range_vector(self, side: int) -> np.ndarray:
        """Unit vector spanning range(P) at endpoint `side` (0=left, 1=right)."""
        w, v = np.linalg.eigh(self.matrices[side])
        return v[:, int(np.argmax(w))]

    def kernel_vector(self, side: int) -> np.ndarray:
        """Unit vector spanning ker(P) at endpoint `side`."""
        w, v = np.linalg.eigh(self.matrices[side])
        return v[:, int(np.argmin(w))]

    def complement(self) -> "BoundaryProjector":
        """The complementary condition I−P (also admissible)."""
        P0, PL = self.matrices
        return BoundaryProjector(kind="custom",
                                 matrices=(np.eye(2) - P0, np.eye(2) - PL))


def boundary_projector(kind: str, fiber: FiberModel,
                       matrices: Sequence[np.ndarray] | None = None) -> BoundaryProjector:
    """Construct an admissible boundary projector.

    kind='local_gamma' gives the pointwise projector ½(I + Fγ(N)):
    ½(I−σ₂) at x=0 and ½(I+σ₂) at x=L.  kind='chiral_plus'/'chiral_minus'
    use the chirality eigenprojectors Π± at both endpoints.  kind='custom'
    accepts user matrices and validates them.
    """
    F = fiber.chirality
    if kind == "local_gamma":
        mats = tuple(0.5 * (np.eye(2) + F @ INTERIOR_GAMMA[s])
                     for s in ("left", "right"))
    elif kind == "chiral_plus":
        mats = (PI_PLUS.copy(), PI_PLUS.copy())
    elif kind == "chiral_minus":
        mats = (PI_MINUS.copy(), PI_MINUS.copy())
    elif kind == "custom":
        if matrices is None or len(matrices) != 2:
            raise AnticommutationViolation("custom kind needs two 2x2 matrices")
        mats = tuple(np.asarray(m, dtype=complex) for m in matrices)
    else:
        raise ValueError(f"unknown projector kind: {kind!r}")

    for side, P in zip(("left", "right"), mats):
        if _orthoprojector_defect(P) > 1e-10:
            raise AnticommutationViolation(f"{side}: not an orthoprojector")
        gN = INTERIOR_GAMMA[side]
        if np.max(np.abs(P @ gN - gN @ (np.eye(2) - P))) > 1e-10:
            raise AnticommutationViolation(
                f"{side}: P gamma(N) != gamma(N)(I-P)")
    return BoundaryProjector(kind=kind, matrices=mats)


@dataclasses.dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenvalues with boundary traces of the eigenfunctions.

    `traces[j]` has shape (2, 2): trace of φ_j at (left, right) endpoint.
    `sources`, when present, are coefficient vectors of generating boundary
    sources over some source basis (filled by the dynamical recovery);
    `interior`, when present, holds full-grid eigenvectors (oracle only).
    """

    eigenvalues: np.ndarray
    traces: np.ndarray
    sources: np.ndarray | None = None
    interior: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.eigenvalues)


@dataclasses.dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Assembled constrained operator with grid metadata.

    `matrix`/`mass` are the Hermitian forms on the bc-constrained subspace
    (dimension 2N−2); `constraint_basis` maps constrained coordinates to the
    full 2N-dimensional grid fiber.  `reduced_*` live on the mass-positive
    subspace (identical except under chiral conditions, which carry one
    decoupled zero-average direction).  `avg`/`dif`/`op_cells` are the sparse
    cell maps used for inner products, lifting sources and flux checks.
    """

    interval: Interval1D
    fiber: FiberModel
    bc: BoundaryProjector
    matrix: np.ndarray
    mass: np.ndarray
    constraint_basis: sp.csr_matrix
    reduced_matrix: np.ndarray
    reduced_mass: np.ndarray
    reduced_basis: np.ndarray          # (2N, n_reduced): constrained ∘ positive
    avg: sp.csr_matrix                 # (2(N-1), 2N)
    dif: sp.csr_matrix
    op_cells: sp.csr_matrix            # cell-tested action of D

    @property
    def n_nodes(self) -> int:
        return self.interval.n_nodes

    @property
    def size(self) -> int:
        return 2 * self.interval.n_nodes


def _cell_maps(interval: Interval1D, fiber: FiberModel):
    """Sparse averaging / differencing maps and the cell-tested operator."""
    n = interval.n_nodes
    nc = n - 1
    dx = interval.dx
    eye2 = sp.identity(2, format="csr")
    avg1 = sp.diags([0.5, 0.5], [0, 1], shape=(nc, n), format="csr")
    dif1 = sp.diags([-1.0 / dx, 1.0 / dx], [0, 1], shape=(nc, n), format="csr")
    avg = sp.kron(avg1, eye2, format="csr")
    dif = sp.kron(dif1, eye2, format="csr")
    gamma_blocks = sp.kron(sp.identity(nc), GAMMA1, format="csr")
    qmats = fiber.potential(interval.cell_midpoints)       # (nc, 2, 2)
    qblock = sp.block_diag([qmats[c] for c in range(nc)], format="csr")
    op_cells = (gamma_blocks @ dif + qblock @ avg).tocsr()
    return avg, dif, op_cells


def assemble_operator(interval: Interval1D, fiber: FiberModel,
                      bc: BoundaryProjector) -> DiscreteOperator:
    """Assemble the constrained Hermitian pencil for D with the given bc.

    Raises
    ------
    GridTooCoarse
        If fewer than 16 nodes are requested.
    DecompositionFailure
        If the expected structure (Hermiticity, decoupling of the
        zero-average direction) does not hold — indicates a bug, not data.
    """
    if interval.n_nodes < 16:
        raise GridTooCoarse(f"need at least 16 nodes, got {interval.n_nodes}")
    n = interval.n_nodes
    dx = interval.dx
    avg, dif, op_cells = _cell_maps(interval, fiber)

    # Basis of the constrained subspace: the kernel direction of P at each
    # endpoint plus the full fiber at interior nodes.
    rows, cols, vals = [], [], []
    k0 = bc.kernel_vector(0)
    kL = bc.kernel_vector(1)
    rows += [0, 1]; cols += [0, 0]; vals += [k0[0], k0[1]]
    for j in range(1, n - 1):
        for k in range(2):
            rows.append(2 * j + k); cols.append(2 * j - 1 + k); vals.append(1.0)
    rows += [2 * n - 2, 2 * n - 1]
    cols += [2 * n - 3, 2 * n - 3]
    vals += [kL[0], kL[1]]
    S = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n - 2), dtype=complex)

    AS = (avg @ S).toarray()
    OS = (op_cells @ S).toarray()
    H = dx * AS.conj().T @ OS
    M = dx * AS.conj().T @ AS
    herm = np.max(np.abs(H - H.conj().T))
    if herm > 1e-10 * max(1.0, np.max(np.abs(H))):
        raise DecompositionFailure(f"constrained form not Hermitian: {herm:.2e}")
    H = 0.5 * (H + H.conj().T)
    M = 0.5 * (M + M.conj().T)

    # Split off cell-average null directions (chiral conditions admit one).
    w, V = np.linalg.eigh(M)
    null = w < 1e-12 * w[-1]
    Y = V[:, ~null]
    if null.any():
        Z = V[:, null]
        coupling = max(np.max(np.abs(Z.conj().T @ H)), np.max(np.abs(H @ Z)))
        if coupling > 1e-9 * max(1.0, np.max(np.abs(H))):
            raise DecompositionFailure(
                f"zero-average direction not decoupled: {coupling:.2e}")
    Hy = Y.conj().T @ H @ Y
    My = Y.conj().T @ M @ Y
    Hy = 0.5 * (Hy + Hy.conj().T)
    My = 0.5 * (My + My.conj().T)
    Sy = (S @ Y)  # dense (2N, ny) since Y is dense
    Sy = np.asarray(Sy)

    return DiscreteOperator(
        interval=interval, fiber=fiber, bc=bc,
        matrix=H, mass=M, constraint_basis=S,
        reduced_matrix=Hy, reduced_mass=My, reduced_basis=Sy,
        avg=avg, dif=dif, op_cells=op_cells,
    )


def inner_product(op: DiscreteOperator, u: np.ndarray, v: np.ndarray) -> complex:
    """Discrete L² product: cell-midpoint quadrature, conjugate-linear in u.

    This is the inner product in which the assembled operator is Hermitian
    and the evolution unitary; it agrees with any second-order quadrature of
    ∫ u†v dx to O(dx²) on smooth fields.
    """
    au = op.avg @ u
    av = op.avg @ v
    return op.interval.dx * complex(np.vdot(au, av))


def norm(op: DiscreteOperator, u: np.ndarray) -> float:
    return float(np.sqrt(max(inner_product(op, u, u).real, 0.0)))


def apply_chirality(op: DiscreteOperator, u: np.ndarray, sign: int) -> np.ndarray:
    """Apply the chirality eigenprojector Π± nodewise to a full-grid field."""
    pi = PI_PLUS if sign > 0 else PI_MINUS
    return (u.reshape(-1, 2) @ pi.T).reshape(u.shape)


def boundary_trace(u: np.ndarray) -> np.ndarray:
    """Extract the (2, 2) endpoint values (left, right) from a full-grid field."""
    return np.stack([u[0:2], u[-2:]])


def oracle_eigendecomposition(op: DiscreteOperator,
                              m: int | None = None) -> SpectralData:
    """Dense eigendecomposition of the constrained pencil (the interior oracle).

    Returns eigenvalues sorted by |λ| with full-grid eigenvectors (columns of
    `interior`) orthonormal in the discrete L² product, and their endpoint
    traces.
    """
    try:
        lam, C = sla.eigh(op.reduced_matrix, op.reduced_mass)
    except sla.LinAlgError as exc:  # pragma: no cover - library failure
        raise DecompositionFailure(str(exc)) from exc
    order = np.argsort(np.abs(lam), kind="stable")
    lam = lam[order]
    vecs = op.reduced_basis @ C[:, order]
    if m is not None:
        lam = lam[:m]
        vecs = vecs[:, :m]
    traces = np.stack([boundary_trace(vecs[:, j]) for j in range(vecs.shape[1])])
    return SpectralData(eigenvalues=lam, traces=traces, interior=vecs)


def op_form(op: DiscreteOperator, u: np.ndarray, v: np.ndarray) -> complex:
    """The sesquilinear form ⟨⟨u, Dv⟩⟩ tested at cell midpoints (any u, v)."""
    return op.interval.dx * complex(np.vdot(op.avg @ u, op.op_cells @ v))


def boundary_flux(u: np.ndarray, v: np.ndarray) -> complex:
    """Exterior-normal boundary term Σ_{x∈∂M} ⟨γ(ν(x))u(x), v(x)⟩ₓ."""
    total = 0.0 + 0.0j
    for side, sl in (("left", slice(0, 2)), ("right", slice(-2, None))):
        gu = EXTERIOR_GAMMA[side] @ u[sl]
        total += complex(np.vdot(gu, v[sl]))
    return total


def green_identity_defect(op: DiscreteOperator, u: np.ndarray,
                          v: np.ndarray) -> complex:
    """Defect of ⟨⟨Du,v⟩⟩ − ⟨⟨u,Dv⟩⟩ = Σ ⟨γ(ν)u, v⟩ on arbitrary grid fields.

    Identically zero (to roundoff) for the cell-tested forms; exposed so tests
    can assert the exact discrete flux identity.
    """
    lhs = np.conj(op_form(op, v, u)) - op_form(op, u, v)
    return lhs - boundary_flux(u, v)


def chiral_blocks(op: DiscreteOperator) -> tuple[np.ndarray, np.ndarray]:
    """Cell-tested chiral blocks (D⁺, D⁻) for chiral boundary conditions.

    D⁺ maps the +chirality component (first fiber slot) to cells through the
    row i·∂ + (p+iq)·avg; D⁻ is the mirror with p−iq.  Whichever component
    the projector constrains has its endpoint columns removed (the bc is a
    Dirichlet condition on that component); the other block keeps all columns.

    Raises
    ------
    DecompositionUnavailable
        For boundary conditions that do not commute with the chirality
        splitting (e.g. local_gamma).
    """
    if op.bc.kind not in ("chiral_plus", "chiral_minus"):
        raise DecompositionUnavailable(
            f"no chiral channel decomposition for bc kind {op.bc.kind!r}")
    iv = op.interval
    n, nc, dx = iv.n_nodes, iv.n_nodes - 1, iv.dx
    xc = iv.cell_midpoints
    p = np.asarray(op.fiber.p(xc), dtype=float)
    q = np.asarray(op.fiber.q(xc), dtype=float)

    def block(mass_coeff: np.ndarray, dirichlet: bool) -> np.ndarray:
        A = np.zeros((nc, n), dtype=complex)
        idx = np.arange(nc)
        A[idx, idx] = -1j / dx + 0.5 * mass_coeff
        A[idx, idx + 1] = 1j / dx + 0.5 * mass_coeff
        return A[:, 1:-1] if dirichlet else A

    plus_constrained = op.bc.kind == "chiral_plus"
    b_plus = block(p + 1j * q, dirichlet=plus_constrained)
    b_minus = block(p - 1j * q, dirichlet=not plus_constrained)
    return b_plus, b_minus
