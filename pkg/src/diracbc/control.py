"""Boundary control and the geometric decision problems built on it.

Everything here works from boundary data alone: families of boundary sources
are propagated once, and every inner product of the interior waves they
generate is evaluated through the cone pairings of :mod:`.blago` — interior
fields never enter except in explicitly marked oracle paths.

Three kinds of source families appear:

* smooth B-spline bump bases, used where the control *function* itself is the
  deliverable (:func:`solve_control`);
* per-node impulse bases for the geometric decision problems.  At dt = dx the
  scheme is strictly causal on the lattice (the stencil couples adjacent
  cells only), so an impulse family on a boundary window exhausts the
  states reachable from that window and feasibility decisions flip within a
  grid cell or two of the true geometric threshold;
* randomized and depth-ladder probe families standing in for the "for all
  sources f" quantifier of the radius criterion.

Each approximation test is run in both chirality channels: reachability of a
state means reachability of its Π₊ part by one control family and of its Π₋
part by another, and a test in a single channel would vacuously pass on
states polarized in the other one.
"""
from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg as sla

from .blago import factor_stacks, pairing_from_stacks
from .errors import (GridMismatch, LatticeTooShort, ProbeFamilyTooSmall,
                     SingularGram, TargetNotExpressible)
from .fiber import DiscreteOperator, inner_product
from .propagate import (BoundarySource, TimeGrid, evolve, response,
                        responses, source_basis, spline_bump)

__all__ = [
    "ControlProblem", "ControlReport", "SliceSpec", "DistanceProfile",
    "DistanceReconstruction", "ControlSetup", "make_control_setup",
    "control_to_state", "solve_control", "estimate_rad", "z_membership",
    "slice_nonempty", "boundary_distance_reconstruct",
]

_SIDES = {"left": 0, "right": 1, 0: 0, 1: 1}

# Sources built here keep their data off the first lattice nodes: the cone
# pairings differentiate traces with a one-sided stencil at the record start,
# and data inside that stencil breaks their exactness.  Three nodes suffice;
# the evaluation-time end of a window needs no such guard.
_EDGE_NODES = 3


def _normalize_sigma(sigma) -> tuple[int, ...]:
    if isinstance(sigma, (str, int)):
        sigma = (sigma,)
    try:
        sides = tuple(sorted({_SIDES[s] for s in sigma}))
    except KeyError as exc:
        raise ValueError(f"unknown boundary component {exc.args[0]!r}")
    if not sides:
        raise ValueError("sigma must name at least one boundary component")
    return sides


def _default_eps(op: DiscreteOperator, grid: TimeGrid) -> float:
    # discretization-floor-aware default, relative to the target scale
    return 10.0 * (op.interval.dx + grid.dt)


# --- problem statements ----------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class ControlProblem:
    """A regularized control problem: drive the wave to a target at time T.

    ``target_spec`` is a tagged tuple:

    * ``("known_source", h)`` — target is the wave of the source h, so all
      cross data comes from boundary pairings;
    * ``("eigen_coefficients", coeffs, sources)`` — target is the combination
      of the waves of recovered eigen-sources;
    * ``("oracle_state", psi)`` — target is an interior grid state; only
      usable with oracle access (testing), never from boundary data.
    """

    target_spec: tuple
    sigma: tuple[int, ...]
    T: float
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "sigma", _normalize_sigma(self.sigma))
        if not self.alpha > 0:
            raise ValueError("Tikhonov parameter alpha must be positive")
        if not self.T > 0:
            raise ValueError("control time T must be positive")
        tag = self.target_spec[0]
        if tag not in ("known_source", "eigen_coefficients", "oracle_state"):
            raise ValueError(f"unknown target_spec tag {tag!r}")


@dataclasses.dataclass(frozen=True)
class SliceSpec:
    """Intersection-of-slices specification: (sigma_j, tau_minus_j, tau_plus_j).

    Each slice carves the shell between the domains of influence at the two
    times; the set under test is the intersection over j.
    """

    slices: tuple

    def __post_init__(self):
        norm = []
        for sigma, tm, tp in self.slices:
            sigma = _normalize_sigma(sigma)
            if not 0 < tm < tp:
                raise ValueError(
                    f"slice times must satisfy 0 < {tm} < {tp}")
            norm.append((sigma, float(tm), float(tp)))
        object.__setattr__(self, "slices", tuple(norm))

    def __iter__(self):
        return iter(self.slices)

    def __len__(self):
        return len(self.slices)


@dataclasses.dataclass(frozen=True)
class DistanceProfile:
    """Candidate boundary distance values (r(0), r(L)) of an interior point."""

    r_left: float
    r_right: float

    def __post_init__(self):
        if self.r_left < 0 or self.r_right < 0:
            raise ValueError("distances must be nonnegative")


@dataclasses.dataclass(frozen=True)
class DistanceReconstruction:
    """Accepted distance profiles and the length they imply."""

    profiles: tuple[DistanceProfile, ...]
    length: float


@dataclasses.dataclass
class ControlReport:
    coefficients: np.ndarray
    residual: float
    relative_residual: float
    target_norm: float
    alpha: float
    source: BoundarySource | None = None


# --- the regularized least-squares kernel ----------------------------------


def _psd_eig(gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Gram matrix with tiny negatives clipped.

    Cone-quadrature noise can push the smallest eigenvalues slightly below
    zero, which would poison arbitrarily small Tikhonov parameters.
    """
    G = 0.5 * (gram + gram.conj().T)
    w, V = sla.eigh(G)
    return np.maximum(w, 0.0), V


def _tikhonov_batch(w, V, B, t2, alpha):
    """Residual² per column of B against the shared eigh-factorized Gram."""
    y = (V.conj().T @ B) / (w[:, None] + alpha)
    c = V @ y
    res2 = (np.asarray(t2, dtype=float)
            - 2.0 * np.real(np.sum(np.conj(c) * B, axis=0))
            + np.real(np.sum(w[:, None] * np.abs(y) ** 2, axis=0)))
    return res2, c


def control_to_state(problem: ControlProblem, gram: np.ndarray,
                     cross: np.ndarray, target_norm2: float) -> ControlReport:
    """Solve (G + αI)c = b and report the exactly-implied residual.

    gram and cross must come from the same pairing quadrature (then the
    residual identity ‖ψ‖² − 2Re⟨c,b⟩ + ⟨c,Gc⟩ is algebraically consistent,
    independent of conditioning).
    """
    G = np.asarray(gram, dtype=complex)
    b = np.asarray(cross, dtype=complex).reshape(-1)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(b))):
        raise SingularGram("gram or cross data is not finite")
    alpha = float(problem.alpha)
    w, V = _psd_eig(G)
    wmax = w[-1] if len(w) else 0.0
    if wmax > 0 and alpha / wmax < 1e-15:
        raise SingularGram(
            f"alpha = {alpha:.3g} is below the roundoff floor of the gram")
    y = (V.conj().T @ b) / (w + alpha)
    c = V @ y
    res2 = (float(target_norm2) - 2.0 * np.real(np.vdot(c, b))
            + float(np.real(np.vdot(y, w * y))))
    residual = float(np.sqrt(max(res2, 0.0)))
    tnorm = float(np.sqrt(max(float(target_norm2), 0.0)))
    rel = residual / tnorm if tnorm > 0 else 0.0
    return ControlReport(coefficients=c, residual=residual,
                         relative_residual=rel, target_norm=tnorm,
                         alpha=alpha)


def _gram_and_blocks(op, grid, family: list[BoundarySource], t0: float):
    """Full-norm pairing matrix of a source family at equal times t0."""
    traces = responses(op, family, grid)
    total = None
    for sign in (+1, -1):
        Af, Bh = factor_stacks(traces, grid, sign)
        P = pairing_from_stacks(Af, Bh, grid, t0, t0)
        total = P if total is None else total + P
    return 0.5 * (total + total.conj().T), traces


def solve_control(op: DiscreteOperator, problem: ControlProblem,
                  grid: TimeGrid | None = None, n_bumps: int = 64,
                  basis: list[BoundarySource] | None = None,
                  boundary_only: bool = True) -> ControlReport:
    """Drive the wave toward the target with a bump basis on sigma × (0, T).

    The known_source / eigen_coefficients targets are handled purely from
    boundary data by pairing the basis together with the target sources.
    The oracle_state target needs interior access and is refused unless
    ``boundary_only=False``; that path solves the literal discrete least
    squares against the grid state (its whole point is to be an independent
    check on the boundary-only machinery).
    """
    T = problem.T
    if grid is None:
        grid = TimeGrid.unit_cfl(op, 2.0 * T)
    if basis is None:
        basis = source_basis(op, grid, n_bumps, endpoints=problem.sigma,
                             t_end=T)
    m = len(basis)
    tag = problem.target_spec[0]

    if tag == "oracle_state":
        if boundary_only:
            raise TargetNotExpressible(
                "an interior target state cannot be paired from boundary "
                "data; pass boundary_only=False for the oracle path")
        psi = np.asarray(problem.target_spec[1], dtype=complex)
        kT = int(round(T / grid.dt))
        short = TimeGrid(t_max=kT * grid.dt, n_steps=kT)
        finals = np.empty((m, op.size), dtype=complex)
        for j, f in enumerate(basis):
            fj = BoundarySource(values=f.values[:kT + 1],
                                smooth_start=f.smooth_start)
            finals[j] = evolve(op, fj, short).final()
        AU = (op.avg @ finals.T).T
        apsi = op.avg @ psi
        dx = op.interval.dx
        G = dx * (np.conj(AU) @ AU.T)
        b = dx * (np.conj(AU) @ apsi)
        tnorm2 = float(np.real(inner_product(op, psi, psi)))
    elif tag == "known_source":
        h = problem.target_spec[1]
        G_all, _ = _gram_and_blocks(op, grid, list(basis) + [h], T)
        G = G_all[:m, :m]
        b = G_all[:m, m]
        tnorm2 = float(np.real(G_all[m, m]))
    else:  # eigen_coefficients
        coeffs = np.asarray(problem.target_spec[1], dtype=complex)
        sources = list(problem.target_spec[2])
        G_all, _ = _gram_and_blocks(op, grid, list(basis) + sources, T)
        G = G_all[:m, :m]
        b = G_all[:m, m:] @ coeffs
        tnorm2 = float(np.real(np.vdot(coeffs, G_all[m:, m:] @ coeffs)))

    report = control_to_state(problem, G, b, tnorm2)
    combo = None
    for cj, f in zip(report.coefficients, basis):
        term = cj * f
        combo = term if combo is None else combo + term
    report.source = combo
    return report


# --- impulse families and the shared geometric setup -----------------------


class _Family:
    """A propagated source family with its cone factor stacks."""

    def __init__(self, op, grid, sources, times, sides):
        self.sources = sources
        self.times = np.asarray(times, dtype=float)
        self.sides = np.asarray(sides, dtype=int)
        self.traces = responses(op, sources, grid)
        self.tvals = np.stack([tr.values for tr in self.traces])
        self._stacks = {}
        self._grid = grid

    def __len__(self):
        return len(self.sources)

    def stacks(self, sign):
        if sign not in self._stacks:
            self._stacks[sign] = factor_stacks(self.traces, self._grid, sign)
        return self._stacks[sign]


def _impulse_family(op, grid, sides_times) -> _Family:
    """One unit range(P) kick per (side, node time)."""
    nt = grid.n_steps
    sources, times, sides = [], [], []
    for side, t in sides_times:
        k = int(round(t / grid.dt))
        vals = np.zeros((nt + 1, 2, 2), dtype=complex)
        vals[k, side, :] = op.bc.range_vector(side)
        sources.append(BoundarySource(values=vals, smooth_start=False))
        times.append(k * grid.dt)
        sides.append(side)
    return _Family(op, grid, sources, times, sides)


def _window_gram(tvals, grid, sides, t_lo, t_hi):
    """Gram of full boundary traces restricted to sides × (t_lo, t_hi).

    The window is open, so the lattice nodes sitting exactly on t_lo and
    t_hi stay out; a wavefront grazing the edge is not penalized.
    """
    k_lo = max(int(round(t_lo / grid.dt)) + 1, 0)
    k_hi = min(int(round(t_hi / grid.dt)) - 1, grid.n_steps)
    if k_hi < k_lo:
        return np.zeros((len(tvals), len(tvals)), dtype=complex)
    V = tvals[:, k_lo:k_hi + 1, list(sides), :]
    w = np.full(V.shape[1], grid.dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    V = (V * w[None, :, None, None] ** 0.5).reshape(len(tvals), -1)
    return np.conj(V) @ V.T


@dataclasses.dataclass(eq=False)
class ControlSetup:
    """Shared machinery for the slice/membership/distance decisions.

    T1 is the common late evaluation time.  One impulse family — emissions on
    both endpoints at every node within `lookback` of T1 — plays two roles:
    its span at T1 is the universe of candidate states, and because the
    potential is static, its members emitted within tau_plus of T1 span
    exactly the states reachable from sigma × (0, tau_plus).  Every inner
    product therefore lives in the single Gram at (T1, T1), and the
    reachability penalty is a Schur complement of it — positive by
    construction rather than by quadrature luck.
    """

    op: DiscreteOperator
    T: float
    rad_bound: float
    T1: float
    lookback: float
    grid: TimeGrid

    def __post_init__(self):
        self._search = None
        self._search_gram = {}

    # -- the family and its Gram, built on first use --

    def search(self) -> _Family:
        if self._search is None:
            dt = self.grid.dt
            jmax = int(round(self.lookback / dt))
            pairs = [(side, self.T1 - j * dt)
                     for side in (0, 1) for j in range(2, jmax + 1)]
            self._search = _impulse_family(self.op, self.grid, pairs)
        return self._search

    def search_gram(self, sign: int) -> np.ndarray:
        if sign not in self._search_gram:
            fam = self.search()
            Af, Bh = fam.stacks(sign)
            P = pairing_from_stacks(Af, Bh, self.grid, self.T1, self.T1)
            self._search_gram[sign] = 0.5 * (P + P.conj().T)
        return self._search_gram[sign]

    def search_positions(self) -> np.ndarray:
        """Where each search impulse sits at time T1 (one bounce allowed)."""
        fam = self.search()
        L = self.op.interval.length
        lag = self.T1 - fam.times
        depth = np.where(lag <= L, lag, 2 * L - lag)
        return np.where(fam.sides == 0, depth, L - depth)

    def control_rows(self, sigma, tau_plus: float) -> np.ndarray:
        """Family indices spanning the states reachable from sigma × (0, tau_plus)."""
        fam = self.search()
        keep = fam.times >= self.T1 - tau_plus - 1e-12
        keep &= np.isin(fam.sides, list(sigma))
        return np.flatnonzero(keep)

    def eps_default(self) -> float:
        return _default_eps(self.op, self.grid)

    def validate_slice(self, tau_plus: float) -> None:
        if tau_plus > self.lookback + 1e-12:
            raise LatticeTooShort(
                f"slice tau_plus = {tau_plus} exceeds the family lookback "
                f"{self.lookback}; rebuild the setup larger")
        if tau_plus > self.T1 - self.T + 1e-12:
            raise LatticeTooShort(
                f"slice tau_plus = {tau_plus} exceeds T1 - T = "
                f"{self.T1 - self.T}")


def make_control_setup(op: DiscreteOperator, T: float | None = None,
                       rad_bound: float | None = None,
                       lookback: float | None = None) -> ControlSetup:
    """Build the shared geometric rig around T1 = T + 4·rad_bound.

    Defaults take the worst-case bound rad ≤ L (one-component boundary), so
    T1 = 5L, and the trace record runs to 2·T1 (the longest pairing is the
    candidate norm at (T1, T1)).
    """
    L = op.interval.length
    if T is None:
        T = L
    if rad_bound is None:
        rad_bound = L
    T1 = T + 4.0 * rad_bound
    if lookback is None:
        lookback = 1.05 * L
    k1 = int(round(T1 / op.interval.dx))
    grid = TimeGrid(t_max=2 * k1 * op.interval.dx, n_steps=2 * k1)
    return ControlSetup(op=op, T=T, rad_bound=rad_bound, T1=k1 * grid.dt,
                        lookback=lookback, grid=grid)


# --- rad(M, sigma) ---------------------------------------------------------


def estimate_rad(op: DiscreteOperator, sigma, eps: float | None = None,
                 seed: int = 0, n_random: int = 32,
                 alpha_rel: float = 1e-10) -> float:
    """Smallest control-window length from which all probe states are
    reachable, located by bisection on the 2dx lattice.

    The control window is anchored at its right end: by time invariance,
    sources on sigma × (T_a − T, T_a) evaluated at T_a reach exactly the
    states of the length-T problem.  The probe family combines randomized
    smooth sources (approximation fidelity) with a ladder of narrow bumps
    emitted so their pulse sits at depth j·L/10 at evaluation time; those
    make the feasibility flip lattice-sharp, so the smallest feasible window
    length is itself the estimate.  Feasibility per probe is checked in both
    chirality channels against a floor self-calibrated at the widest window.
    """
    sigma = _normalize_sigma(sigma)
    L = op.interval.length
    dx = op.interval.dx
    n_cells = op.interval.n_nodes - 1
    ka = int(round(1.1 * n_cells))          # anchor T_a in steps
    kd1 = max(int(round(0.1 * n_cells)), 2)
    n_steps = 2 * (ka + 2 * kd1)            # longest cone: (t2_max, t2_max)
    grid = TimeGrid(t_max=n_steps * dx, n_steps=n_steps)
    dt = grid.dt
    T_a = ka * dt
    t2s = (T_a + kd1 * dt, T_a + 2 * kd1 * dt)

    basis = _impulse_family(op, grid, [(s, k * dt) for s in sigma
                                       for k in range(_EDGE_NODES, ka)])

    rng = np.random.default_rng(seed)
    probes, probe_t2 = [], []
    for j, t2 in ((j, t2s[j % 2]) for j in range(n_random)):
        vals = np.zeros((grid.n_steps + 1, 2, 2), dtype=complex)
        for side in (0, 1):
            w = op.bc.range_vector(side)
            for _ in range(4):
                width = rng.uniform(0.02, 0.05) * L
                c = rng.uniform(t2 - 0.4 * L + 2 * width, t2 - 2 * width)
                amp = rng.standard_normal() + 1j * rng.standard_normal()
                vals[:, side, :] += (amp * spline_bump(grid.nodes, c, width)
                                     )[:, None] * w[None, :]
        probes.append(BoundarySource(values=vals, smooth_start=False))
        probe_t2.append(t2)
    for side in (0, 1):
        w = op.bc.range_vector(side)
        for j in range(11):
            depth = round(j * n_cells / 10) * dx
            for t2 in t2s:
                c = t2 - depth
                if c < (_EDGE_NODES + 1) * dt:
                    continue
                vals = np.zeros((grid.n_steps + 1, 2, 2), dtype=complex)
                vals[:, side, :] = spline_bump(grid.nodes, c, dx)[:, None] \
                    * w[None, :]
                probes.append(BoundarySource(values=vals, smooth_start=False))
                probe_t2.append(t2)
    if len(probes) < 8:
        raise ProbeFamilyTooSmall(f"only {len(probes)} probes")
    probe_fam = _Family(op, grid, probes, probe_t2, [0] * len(probes))

    # pairings, computed once on the full window and sliced per candidate
    gram = {}
    cross = {}
    tgt2 = {}
    for sign in (+1, -1):
        Af_b, Bh_b = basis.stacks(sign)
        G = pairing_from_stacks(Af_b, Bh_b, grid, T_a, T_a)
        gram[sign] = 0.5 * (G + G.conj().T)
        Af_p, Bh_p = probe_fam.stacks(sign)
        cross[sign] = np.empty((len(basis), len(probes)), dtype=complex)
        tgt2[sign] = np.empty(len(probes))
        for t2 in t2s:
            cols = np.flatnonzero(np.abs(np.asarray(probe_t2) - t2) < 1e-12)
            cross[sign][:, cols] = pairing_from_stacks(
                Af_b, Bh_p[cols], grid, T_a, t2)
            tgt2[sign][cols] = np.real(np.diag(pairing_from_stacks(
                Af_p[cols], Bh_p[cols], grid, t2, t2)))
    tgt2_tot = np.maximum(tgt2[+1] + tgt2[-1], 1e-300)

    def rel_residuals(kT: int) -> np.ndarray:
        keep = basis.times >= T_a - kT * dt - 1e-12
        res2 = np.zeros(len(probes))
        for sign in (+1, -1):
            G = gram[sign][np.ix_(keep, keep)]
            w, V = _psd_eig(G)
            alpha = alpha_rel * max(np.mean(w), 1e-300)
            r2, _ = _tikhonov_batch(w, V, cross[sign][keep], tgt2[sign],
                                    alpha)
            res2 += np.maximum(r2, 0.0)
        return np.sqrt(res2 / tgt2_tot)

    if eps is None:
        eps = _default_eps(op, grid)
    k_hi = ka - 1 if (ka - 1) % 2 == 0 else ka - 2
    floors = rel_residuals(k_hi)
    if np.any(floors > 0.5):
        raise ProbeFamilyTooSmall(
            "some probes are unreachable even from the widest window; the "
            "basis cannot calibrate a feasibility floor")
    eps_eff = np.maximum(eps, 2.0 * floors)

    lo, hi = 2, k_hi                       # window lengths in steps, even
    while hi - lo > 2:
        mid = (lo + hi) // 2
        mid -= mid % 2
        if np.all(rel_residuals(mid) <= eps_eff):
            hi = mid
        else:
            lo = mid
    if np.all(rel_residuals(lo) <= eps_eff):
        hi = lo
    return hi * dt


# --- Z membership ----------------------------------------------------------


def z_membership(setup: ControlSetup, f_hat: BoundarySource,
                 slices: SliceSpec, eps: float | None = None):
    """Decide whether f_hat generates a wave vanishing outside every slice.

    Condition 1 (support inside M(sigma_j, tau_j+)): the wave at T1 must be
    approximable, channel by channel, from controls on sigma_j × (0, tau_j+).
    Condition 2 (vanishing on M(sigma_j, tau_j−)): the full boundary data of
    f_hat must be quiet on sigma_j × (T1 − tau_j−, T1 + tau_j−).
    """
    if eps is None:
        eps = setup.eps_default()
    grid, T1 = setup.grid, setup.T1
    scale = max(np.max(np.abs(f_hat.values)), 1e-300)
    if np.max(np.abs(f_hat.values[:_EDGE_NODES])) > 1e-12 * scale:
        raise GridMismatch(
            "candidate boundary data must vanish on the first "
            f"{_EDGE_NODES} time nodes (cone-pairing edge stencil)")
    tr = response(setup.op, f_hat, grid)
    stacks = {sign: factor_stacks([tr], grid, sign) for sign in (+1, -1)}
    tgt2 = {sign: max(np.real(pairing_from_stacks(
        stacks[sign][0], stacks[sign][1], grid, T1, T1)[0, 0]), 0.0)
        for sign in (+1, -1)}
    den = np.sqrt(max(tgt2[+1] + tgt2[-1], 1e-300))

    tr_all = np.abs(tr.values) ** 2
    wfull = np.full(grid.n_steps + 1, grid.dt)
    wfull[0] *= 0.5
    wfull[-1] *= 0.5
    trace_den = np.sqrt(max(float(np.sum(tr_all * wfull[:, None, None])),
                            1e-300))

    cond1, cond2 = [], []
    for sigma, tau_minus, tau_plus in slices:
        setup.validate_slice(tau_plus)
        rows = setup.control_rows(sigma, tau_plus)
        res2 = 0.0
        for sign in (+1, -1):
            G = setup.search_gram(sign)[np.ix_(rows, rows)]
            Af = setup.search().stacks(sign)[0]
            b = pairing_from_stacks(Af[rows], stacks[sign][1], grid,
                                    T1, T1)[:, 0]
            w, V = _psd_eig(G)
            alpha = 1e-10 * max(np.mean(w), 1e-300)
            r2, _ = _tikhonov_batch(w, V, b[:, None], [tgt2[sign]], alpha)
            res2 += max(float(r2[0]), 0.0)
        cond1.append(float(np.sqrt(res2) / den))

        k_lo = int(round((T1 - tau_minus) / grid.dt)) + 1   # open window
        k_hi = int(round((T1 + tau_minus) / grid.dt)) - 1
        win = 0.0
        if k_hi >= k_lo:
            wwin = np.full(k_hi - k_lo + 1, grid.dt)
            wwin[0] *= 0.5
            wwin[-1] *= 0.5
            win = float(np.sum(tr_all[k_lo:k_hi + 1, list(sigma), :]
                               * wwin[:, None, None]))
        cond2.append(float(np.sqrt(max(win, 0.0)) / trace_den))

    member = all(r <= eps for r in cond1) and all(r <= eps for r in cond2)
    return member, {"condition1": cond1, "condition2": cond2, "eps": eps}


# --- slice feasibility (the dim Z ∈ {0, ∞} alternative) --------------------


def _slice_penalty(setup: ControlSetup, sigma, tau_minus,
                   tau_plus) -> np.ndarray:
    """Quadratic form on the search family scoring one slice's conditions.

    c† Q c = Σ_sign ‖Π_sign-part of the candidate not reachable from
    sigma × (0, tau_plus)‖² + ‖candidate boundary data on the tau_minus
    window‖²; exact members are the (near-)null vectors.
    """
    setup.validate_slice(tau_plus)
    fam = setup.search()
    grid, T1 = setup.grid, setup.T1
    rows = setup.control_rows(sigma, tau_plus)
    Q = None
    for sign in (+1, -1):
        G_s = setup.search_gram(sign)
        Ge = G_s[np.ix_(rows, rows)]
        C = G_s[rows, :]
        we, Ve = _psd_eig(Ge)
        good = we > 1e-12 * max(we[-1] if we.size else 0.0, 1e-300)
        X = (Ve[:, good] * we[good] ** -0.5).conj().T @ C
        term = G_s - X.conj().T @ X
        Q = term if Q is None else Q + term
    Q = Q + _window_gram(fam.tvals, grid, sigma, T1 - tau_minus,
                         T1 + tau_minus)
    return 0.5 * (Q + Q.conj().T)


def _whitened_min_eig(Q: np.ndarray, G: np.ndarray) -> float:
    w, V = _psd_eig(G)
    good = w > 1e-10 * max(w[-1], 1e-300)
    if not np.any(good):
        return np.inf
    R = V[:, good] * w[good] ** -0.5
    return float(sla.eigvalsh(R.conj().T @ Q @ R)[0])


def slice_nonempty(setup: ControlSetup, slices: SliceSpec,
                   eps: float | None = None) -> bool:
    """True iff some unit-norm wave at T1 satisfies every slice's conditions.

    The infinite-dimensional alternative dim Z ∈ {0, ∞} collapses, at fixed
    resolution, to feasibility of the summed penalty form over the search
    family: the smallest whitened eigenvalue is the squared best score.
    """
    if eps is None:
        eps = setup.eps_default()
    Q = None
    for sigma, tau_minus, tau_plus in slices:
        term = _slice_penalty(setup, sigma, tau_minus, tau_plus)
        Q = term if Q is None else Q + term
    G = setup.search_gram(+1) + setup.search_gram(-1)
    return _whitened_min_eig(Q, G) <= eps ** 2


# --- boundary distance functions -------------------------------------------


def boundary_distance_reconstruct(setup: ControlSetup,
                                  r_min: float | None = None,
                                  r_max: float | None = None,
                                  eps: float | None = None,
                                  halo: float | None = None
                                  ) -> DistanceReconstruction:
    """Scan candidate profiles (a, b) and keep those passing the slice test.

    A profile is a claimed pair of boundary distances of one interior point;
    it passes iff a wave can sit in the ±2dx shell around depth a from the
    left *and* depth b from the right simultaneously.  On an interval the
    accepted set hugs {(a, L − a)} and its a + b values estimate the length.
    """
    op, grid = setup.op, setup.grid
    L = op.interval.length
    dx = op.interval.dx
    if r_min is None:
        r_min = 0.15 * L
    if r_max is None:
        r_max = 0.9 * L
    if eps is None:
        eps = setup.eps_default()
    if halo is None:
        halo = 8 * dx
    eps_w = 2 * dx

    k_lo = int(np.ceil(r_min / (2 * dx)))
    k_hi = int(np.floor(r_max / (2 * dx)))
    radii = [2 * k * dx for k in range(k_lo, k_hi + 1)]

    pos = setup.search_positions()
    G_full = setup.search_gram(+1) + setup.search_gram(-1)

    def penalty(side, r):
        sigma = (side,)
        return _slice_penalty(setup, sigma, r - eps_w, r + eps_w)

    right_cache = {b: penalty(1, b) for b in radii}
    accepted = []
    sums = []
    for a in radii:
        Ma = penalty(0, a)
        for b in radii:
            Q = Ma + right_cache[b]
            rows = np.flatnonzero((np.abs(pos - a) <= halo)
                                  | (np.abs(pos - (L - b)) <= halo))
            if len(rows) < 4:
                continue
            lam = _whitened_min_eig(Q[np.ix_(rows, rows)],
                                    G_full[np.ix_(rows, rows)])
            if lam <= eps ** 2:
                accepted.append(DistanceProfile(r_left=a, r_right=b))
                sums.append(a + b)
    length = float(np.median(sums)) if sums else float("nan")
    return DistanceReconstruction(profiles=tuple(accepted), length=length)
