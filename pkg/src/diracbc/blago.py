"""Interior inner products of waves computed purely from boundary traces.

For waves u^f, u^h driven by boundary sources, the chirality-split products

    I±(s,t) = ⟨⟨Π± u^f(t), u^h(s)⟩⟩

satisfy a 1+1 wave equation in the two time variables,

    (∂t² − ∂s²) I± = −G±(s,t),

whose right-hand side is assembled from the boundary traces alone:

    G±(s,t) = i·Σ_{x∈∂M} [ ⟨γ(ν)Π∓ ∂t(Λf)(t), (Λh)(s)⟩ₓ
                          − ⟨γ(ν)Π± (Λf)(t), ∂s(Λh)(s)⟩ₓ ],     ν exterior,

with zero data on t=0 and s=0.  Evaluating the solution at (T,T) yields
ℒ±[f,h] = ⟨⟨Π± u^f(T), u^h(T)⟩⟩ without ever looking at the interior.

Two independent integration routes are kept:
  * an explicit leapfrog march of the (s,t) wave equation on the trace
    lattice (ds = dt, exact for the homogeneous part) — the reference route
    and the full table;
  * the closed cone integral ℒ± = −½ ∬_{|s−T|≤T−t} G±, which factorizes over
    sources into a single matrix product — the bulk/Gram route, and an FFT
    convolution variant producing whole table columns.
Route agreement is part of the test contract; do not collapse them.

G± factorizes as Σ_p conj(a_p(t))·b_p(s) over p = (term, endpoint, fiber
component) — 8 pieces per sign — which is what the bulk routes exploit.
"""
from __future__ import annotations

import dataclasses

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.signal import fftconvolve

from .errors import (
    GridMismatch,
    LatticeTooShort,
    NegativeForm,
    WrongProjectorSide,
)
from .fiber import EXTERIOR_GAMMA, PI_MINUS, PI_PLUS, BoundaryProjector
from .propagate import BoundarySource, BoundaryTrace, TimeGrid

__all__ = [
    "InnerProductTable", "inner_product_table", "inner_products",
    "wave_norm", "gram_matrix", "cone_inner_products", "cone_pairing",
    "factor_stacks", "pairing_from_stacks",
    "table_column", "mixed_inner_product", "dt_series", "piece_vectors",
]


def dt_series(values: np.ndarray, dt: float) -> np.ndarray:
    """Centered time derivative along axis 0, one-sided 2nd order at the ends."""
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2 * dt)
    d[0] = (-3 * values[0] + 4 * values[1] - values[2]) / (2 * dt)
    d[-1] = (3 * values[-1] - 4 * values[-2] + values[-3]) / (2 * dt)
    return d


def _lattice_index(t: float, dt: float, what: str) -> int:
    k = int(round(t / dt))
    if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise GridMismatch(f"{what} = {t} is not on the trace lattice")
    return k


def piece_vectors(tr: BoundaryTrace, dt: float, sign: int,
                  role: str) -> np.ndarray:
    """Factor arrays for G±: shape (8, n_time_nodes).

    role='f' gives the conjugated factors a_p(t) (projectors and exterior
    Clifford normals applied); role='h' gives b_p(s) (bare traces with the
    ±i coefficients folded in), so that G±(t,s) = Σ_p conj(a_p(t))·b_p(s).
    """
    vals = tr.values                               # (nt, 2, 2)
    dvals = dt_series(vals, dt)
    pi = PI_PLUS if sign > 0 else PI_MINUS
    pio = PI_MINUS if sign > 0 else PI_PLUS
    out = np.empty((8, vals.shape[0]), dtype=complex)
    for s_idx, side in enumerate(("left", "right")):
        g = EXTERIOR_GAMMA[side]
        if role == "f":
            t1 = dvals[:, s_idx, :] @ (g @ pio).T
            t2 = vals[:, s_idx, :] @ (g @ pi).T
        elif role == "h":
            t1 = 1j * vals[:, s_idx, :]
            t2 = -1j * dvals[:, s_idx, :]
        else:
            raise ValueError(f"unknown role {role!r}")
        out[4 * s_idx + 0] = t1[:, 0]
        out[4 * s_idx + 1] = t1[:, 1]
        out[4 * s_idx + 2] = t2[:, 0]
        out[4 * s_idx + 3] = t2[:, 1]
    return out


def _source_table(tr_f: BoundaryTrace, tr_h: BoundaryTrace, dt: float,
                  sign: int, n_t: int, n_s: int) -> np.ndarray:
    """G±(t_n, s_j) on the rectangle [0, n_t]×[0, n_s] (lattice indices)."""
    a = piece_vectors(tr_f, dt, sign, "f")[:, :n_t + 1]
    b = piece_vectors(tr_h, dt, sign, "h")[:, :n_s + 1]
    return np.einsum("pn,pj->nj", np.conj(a), b)


@dataclasses.dataclass(frozen=True, eq=False)
class InnerProductTable:
    """Solution tables I±(s,t) of the (s,t) wave equation on the trace lattice.

    Arrays are indexed [t_index, s_index] with s spanning [0, 2T].  Entries
    are meaningful where the domain of dependence is covered by data, i.e.
    s + t ≤ 2T; the strip beyond that is filled but unreliable (the lattice
    carries no boundary condition at s = 2T).
    """

    I_plus: np.ndarray
    I_minus: np.ndarray
    T: float
    dt: float

    def at(self, sign: int, s: float, t: float) -> complex:
        j = _lattice_index(s, self.dt, "s")
        n = _lattice_index(t, self.dt, "t")
        if s + t > 2 * self.T + 1e-9:
            raise LatticeTooShort(
                f"(s,t)=({s},{t}) outside the determined region s+t <= 2T")
        table = self.I_plus if sign > 0 else self.I_minus
        return complex(table[n, j])


def _check_lattice(tr: BoundaryTrace, grid: TimeGrid, T: float) -> int:
    if tr.values.shape[0] != grid.n_steps + 1:
        raise GridMismatch("trace and grid disagree on sample count")
    n_T = _lattice_index(T, grid.dt, "T")
    if 2 * n_T > grid.n_steps:
        raise LatticeTooShort(
            f"traces end at {grid.t_max}, need 2T = {2 * T}")
    return n_T


def inner_product_table(tr_f: BoundaryTrace, tr_h: BoundaryTrace,
                        grid: TimeGrid, T: float) -> InnerProductTable:
    """March the (s,t) wave equation by leapfrog (reference route).

    The unit lattice ratio makes the homogeneous update exact; the source
    enters with the standard dt² weight.  Zero initial data and the s=0
    Dirichlet line close the march.
    """
    n_T = _check_lattice(tr_f, grid, T)
    _check_lattice(tr_h, grid, T)
    dt = grid.dt
    n_s = 2 * n_T
    tables = []
    for sign in (+1, -1):
        G = _source_table(tr_f, tr_h, dt, sign, n_T, n_s)
        I = np.zeros((n_T + 1, n_s + 1), dtype=complex)
        if n_T >= 1:
            I[1, 1:-1] = -0.5 * dt * dt * G[0, 1:-1]
        for n in range(1, n_T):
            I[n + 1, 1:-1] = (I[n, 2:] + I[n, :-2] - I[n - 1, 1:-1]
                              - dt * dt * G[n, 1:-1])
        tables.append(I)
    return InnerProductTable(I_plus=tables[0], I_minus=tables[1], T=T, dt=dt)


def inner_products(tr_f: BoundaryTrace, tr_h: BoundaryTrace, grid: TimeGrid,
                   T: float) -> tuple[complex, complex]:
    """ℒ±[f,h] = ⟨⟨Π± u^f(T), u^h(T)⟩⟩ from boundary data (leapfrog route)."""
    table = inner_product_table(tr_f, tr_h, grid, T)
    return table.at(+1, T, T), table.at(-1, T, T)


def wave_norm(tr_f: BoundaryTrace, grid: TimeGrid, T: float) -> float:
    """‖u^f(T)‖ from boundary data.

    Raises NegativeForm if the quadratic form is negative beyond roundoff —
    that signals an inconsistent lattice, not a small number to clamp.
    """
    lp, lm = inner_products(tr_f, tr_f, grid, T)
    val = (lp + lm).real
    if val < -1e-6:
        raise NegativeForm(f"ℒ[f,f] = {val:.3e} < -1e-6")
    return float(np.sqrt(max(val, 0.0)))


# --- closed cone-integral routes -----------------------------------------


def _gram_factors(traces: list[BoundaryTrace], grid: TimeGrid, T: float,
                  sign: int) -> tuple[np.ndarray, np.ndarray]:
    """Weighted A and cone-differenced B stacks for the factorized Gram."""
    dt = grid.dt
    n_T = _lattice_index(T, grid.dt, "T")
    w = np.full(n_T + 1, dt); w[0] *= 0.5; w[-1] *= 0.5
    A = np.stack([piece_vectors(tr, dt, sign, "f")[:, :n_T + 1]
                  for tr in traces])
    B = np.stack([cumulative_trapezoid(
        piece_vectors(tr, dt, sign, "h"), dx=dt, axis=1, initial=0.0)
        for tr in traces])
    Bdiff = B[:, :, 2 * n_T::-1][:, :, :n_T + 1] - B[:, :, :n_T + 1]
    return np.conj(A) * w, Bdiff


def cone_inner_products(tr_f: BoundaryTrace, tr_h: BoundaryTrace,
                        grid: TimeGrid, T: float) -> tuple[complex, complex]:
    """ℒ±[f,h] by the closed cone integral −½∬G± (independent route)."""
    _check_lattice(tr_f, grid, T)
    _check_lattice(tr_h, grid, T)
    out = []
    for sign in (+1, -1):
        Aw, Bd = _gram_factors([tr_f, tr_h], grid, T, sign)
        out.append(-0.5 * np.einsum("pt,pt->", Aw[0], Bd[1]))
    return complex(out[0]), complex(out[1])


def gram_matrix(traces: list[BoundaryTrace], grid: TimeGrid,
                T: float) -> tuple[np.ndarray, np.ndarray]:
    """(G±)_{jk} = ℒ±[f_j, f_k] for a whole source family at once.

    Uses the factorized cone integral: one einsum per sign instead of
    len(traces)² wave marches.  Result is Hermitian-symmetrized.
    """
    for tr in traces:
        _check_lattice(tr, grid, T)
    grams = []
    for sign in (+1, -1):
        Aw, Bd = _gram_factors(traces, grid, T, sign)
        G = -0.5 * np.einsum("jpt,kpt->jk", Aw, Bd)
        grams.append(0.5 * (G + G.conj().T))
    return grams[0], grams[1]


def factor_stacks(traces: list[BoundaryTrace], grid: TimeGrid,
                  sign: int) -> tuple[np.ndarray, np.ndarray]:
    """Precomputed cone factors for a trace family: (Af, Bh).

    Af[j] are the f-role piece vectors, Bh[j] the s-cumulative integrals of
    the h-role pieces; every bulk pairing below is an einsum over these.
    """
    Af = np.stack([piece_vectors(tr, grid.dt, sign, "f") for tr in traces])
    Bh = np.stack([cumulative_trapezoid(
        piece_vectors(tr, grid.dt, sign, "h"), dx=grid.dt, axis=1,
        initial=0.0) for tr in traces])
    return Af, Bh


def pairing_from_stacks(Af: np.ndarray, Bh: np.ndarray, grid: TimeGrid,
                        t0: float, s0: float) -> np.ndarray:
    """⟨⟨Π± u^{f_j}(t0), u^{h_k}(s0)⟩⟩ from precomputed stacks (s0 ≥ t0)."""
    dt = grid.dt
    if s0 < t0 - 1e-12:
        raise LatticeTooShort("pairing needs s0 >= t0; swap roles and "
                              "conjugate for the other half plane")
    m = _lattice_index(s0, dt, "s0")
    k0 = _lattice_index(t0, dt, "t0")
    if m + k0 > grid.n_steps:
        raise LatticeTooShort("pairing cone exceeds the recorded traces")
    if k0 == 0:
        return np.zeros((Af.shape[0], Bh.shape[0]), dtype=complex)
    w = np.full(k0 + 1, dt); w[0] *= 0.5; w[-1] *= 0.5
    tau = np.arange(k0 + 1)
    Bd = Bh[:, :, m + k0 - tau] - Bh[:, :, m - k0 + tau]
    # contraction over (piece, τ) as a single GEMM
    X = (np.conj(Af[:, :, :k0 + 1]) * w).reshape(Af.shape[0], -1)
    Y = Bd.reshape(Bh.shape[0], -1)
    return -0.5 * (X @ Y.T)


def cone_pairing(traces_f: list[BoundaryTrace], traces_h: list[BoundaryTrace],
                 grid: TimeGrid, t0: float, s0: float,
                 sign: int) -> np.ndarray:
    """Matrix of ⟨⟨Π± u^{f_j}(t0), u^{h_k}(s0)⟩⟩ at possibly unequal times.

    Evaluates the cone integral at the off-diagonal point (s0, t0); for
    s0 < t0 the roles are transposed through conjugate symmetry so the cone
    never touches the s = 0 line.  gram_matrix is the s0 = t0 special case.
    """
    if s0 < t0:
        return np.conj(cone_pairing(traces_h, traces_f, grid, s0, t0, sign)).T
    Af, _ = factor_stacks(traces_f, grid, sign)
    _, Bh = factor_stacks(traces_h, grid, sign)
    return pairing_from_stacks(Af, Bh, grid, t0, s0)


def table_column(tr_f: BoundaryTrace, tr_h: BoundaryTrace, grid: TimeGrid,
                 s0: float, n_t: int, sign: int) -> np.ndarray:
    """I±(s0, t_k) for k = 0..n_t via FFT convolution of the cone factors.

    Requires the cone of every requested point to stay inside the data:
    s0 ≥ n_t·dt (never touches s=0) and s0 + n_t·dt within the traces.
    O(K log K) instead of a fresh leapfrog per column — the bulk route for
    interior-value time profiles.
    """
    dt = grid.dt
    m = _lattice_index(s0, dt, "s0")
    K = int(n_t)
    if K > m:
        raise LatticeTooShort("column would touch the s=0 boundary line")
    if m + K > grid.n_steps:
        raise LatticeTooShort("column cone exceeds the recorded traces")
    a = piece_vectors(tr_f, dt, sign, "f")[:, :K + 1]
    Bfull = cumulative_trapezoid(piece_vectors(tr_h, dt, sign, "h"),
                                 dx=dt, axis=1, initial=0.0)
    col = np.zeros(K + 1, dtype=complex)
    for p in range(8):
        x = np.conj(a[p])
        y1 = Bfull[p, m:m + K + 1]
        y2 = Bfull[p, m::-1][:K + 1]
        v1 = fftconvolve(x, y1)[:K + 1]
        v2 = fftconvolve(x, y2)[:K + 1]
        # trapezoid endpoint corrections for the τ-integral
        v1 -= 0.5 * (x[0] * y1 + x * y1[0])
        v2 -= 0.5 * (x[0] * y2 + x * y2[0])
        col += v1 - v2
    return -0.5 * dt * col


def mixed_inner_product(bc_first: BoundaryProjector,
                        tr_a: BoundaryTrace, f_a: BoundarySource,
                        tr_b: BoundaryTrace, f_b: BoundarySource,
                        grid: TimeGrid, t: float, s: float) -> complex:
    """⟨⟨u^{f_a}(t), u^{f_b}(s)⟩⟩ across complementary boundary conditions.

    The first wave satisfies the condition `bc_first`, the second its
    complement.  J(t,s) obeys the transport equation
    (∂t+∂s)J = −i·Σ_x ⟨γ(ν)Λf_a(t), Λf_b(s)⟩ₓ with zero data on both axes,
    integrated here along the characteristic through (t,s).
    """
    for f, P, side in ((f_a, bc_first.matrices, "first"),
                       (f_b, bc_first.complement().matrices, "second")):
        scale = max(np.max(np.abs(f.values)), 1e-300)
        r0 = f.values[:, 0, :] - f.values[:, 0, :] @ P[0].T
        rL = f.values[:, 1, :] - f.values[:, 1, :] @ P[1].T
        if max(np.max(np.abs(r0)), np.max(np.abs(rL))) > 1e-8 * scale:
            raise WrongProjectorSide(
                f"{side} source is not range(P)-valued for its condition")
    dt = grid.dt
    nt = _lattice_index(t, dt, "t")
    ns = _lattice_index(s, dt, "s")
    if max(nt, ns) > grid.n_steps:
        raise LatticeTooShort("requested times beyond the recorded traces")
    # characteristic from the zero edge: (t-s+σ, σ) for σ in [0, s] (t ≥ s),
    # mirrored otherwise
    r = min(nt, ns)
    if r == 0:
        return 0.0 + 0.0j
    ia = np.arange(nt - r, nt + 1)
    ib = np.arange(ns - r, ns + 1)
    K = np.zeros(r + 1, dtype=complex)
    for s_idx, side in enumerate(("left", "right")):
        g = EXTERIOR_GAMMA[side]
        ga = tr_a.values[ia, s_idx, :] @ g.T
        K += -1j * np.sum(np.conj(ga) * tr_b.values[ib, s_idx, :], axis=1)
    return complex(np.trapezoid(K, dx=dt))
