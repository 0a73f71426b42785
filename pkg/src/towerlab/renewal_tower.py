"""Renewal operator sequences and the truncated suspension tower.

The renewal coefficients T_{k,n} are generated from the twisted pieces by the
convolution recursion T_{k,n} = sum_j R_{k,j} T_{k,n-j}; the same coefficients
are recovered independently by inverting I - R_k(omega) on a frequency grid
and inverse discrete Fourier transform, which cross-checks the whole operator
stack up to aliasing.

The tower realises the suspension of the induced map under the return time on
a base refined to cylinder-and-cell pieces, so the return time is constant on
every base cell and the first-entry / last-exit decomposition of the twisted
tower power into climb, renewal and entry blocks holds as an exact matrix
identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .cocycles import ToralCocycle
from .fitting import loglog_slope
from .inducing import InducingScheme, pullback_walk
from .operators import SingularOperatorError, TwistedOperatorSet, _OmegaAssembler

__all__ = [
    "RenewalSequence",
    "renewal_recursion",
    "FourierRenewal",
    "renewal_via_fourier",
    "fourier_agreement",
    "band_limited_zero_mode_check",
    "decay_fit",
    "Tower",
    "build_tower",
    "TowerPieceSet",
    "TowerOperators",
    "build_tower_operators",
    "assemble_L_k_n",
    "direct_tower_operator",
    "tower_identity_report",
]


# ------------------------------------------------------------------ renewal


@dataclass
class RenewalSequence:
    k: tuple[int, ...]
    N: int
    mode: str  # "matrix" | "vector"
    values: list | np.ndarray
    norms: np.ndarray
    piece_set: object
    probe: np.ndarray | None = None

    def vector(self, n: int) -> np.ndarray:
        if self.mode != "vector":
            raise ValueError("not a vector-mode sequence")
        return self.values[n]


def _sup_norm_matrix(M) -> float:
    if sp.issparse(M):
        M = M.toarray()
    return float(np.max(np.abs(M).sum(axis=1))) if M.size else 0.0


def renewal_recursion(
    piece_set, N: int, mode: str = "vector", probe: np.ndarray | None = None
) -> RenewalSequence:
    """T_{k,0} = I and T_{k,n} = sum_{j=1..n} R_{k,j} T_{k,n-j}.

    Vector mode tracks t_n = T_{k,n} v for the given probe; matrix mode keeps
    the full coefficient matrices (use only for moderate horizons).
    """
    m = piece_set.dim
    pieces = piece_set.pieces
    phi_max = piece_set.phi_max
    if mode == "vector":
        if probe is None:
            raise ValueError("vector mode needs a probe vector")
        probe = np.asarray(probe, dtype=complex)
        J = min(phi_max, N)
        blocks = [pieces.get(j, sp.csr_matrix((m, m), dtype=complex)) for j in range(1, J + 1)]
        big = sp.hstack(blocks, format="csr") if blocks else sp.csr_matrix((m, 0))
        hist = np.zeros((N + 1, m), dtype=complex)
        hist[0] = probe
        u = np.zeros(J * m, dtype=complex)
        norms = np.zeros(N + 1)
        norms[0] = float(np.max(np.abs(probe)))
        for n in range(1, N + 1):
            jmax = min(n, J)
            u[: jmax * m] = hist[n - jmax : n][::-1].ravel()
            if jmax < J:
                u[jmax * m :] = 0.0
            hist[n] = big @ u
            norms[n] = float(np.max(np.abs(hist[n])))
        return RenewalSequence(piece_set.k, N, "vector", hist, norms, piece_set, probe)
    if mode == "matrix":
        eye = np.eye(m, dtype=complex)
        values = [eye]
        norms = np.zeros(N + 1)
        norms[0] = 1.0
        for n in range(1, N + 1):
            acc = np.zeros((m, m), dtype=complex)
            for j in range(1, min(n, phi_max) + 1):
                Rj = pieces.get(j)
                if Rj is not None:
                    acc += Rj @ values[n - j]
            values.append(acc)
            norms[n] = _sup_norm_matrix(acc)
        return RenewalSequence(piece_set.k, N, "matrix", values, norms, piece_set, None)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class FourierRenewal:
    k: tuple[int, ...]
    N: int
    mode: str
    values: list | np.ndarray
    norms: np.ndarray
    omega_count: int
    singular_omegas: list[float]


def renewal_via_fourier(
    tset: TwistedOperatorSet,
    N: int,
    omega_count: int,
    mode: str = "matrix",
    probe: np.ndarray | None = None,
    chunk: int = 64,
    singular_threshold: float = 1e12,
) -> FourierRenewal:
    """Coefficients of (I - R_k(omega))^{-1} by inverse DFT on a uniform grid.

    omega_count must be a power of two with omega_count >= 4N so aliasing sits
    well below the comparison tolerance.  Grid singularities are reported in
    the result; for k = 0 the point omega = 0 is genuinely singular, use
    band_limited_zero_mode_check instead.
    """
    if omega_count & (omega_count - 1) or omega_count < 4 * N:
        raise ValueError("omega_count must be a power of two >= 4N")
    if tset.is_untwisted:
        raise SingularOperatorError(
            "omega = 0 is singular for the untwisted set; "
            "use band_limited_zero_mode_check for k = 0"
        )
    threshold = singular_threshold
    if tset.truncation_mass > 0:
        threshold = min(threshold, 0.05 / tset.truncation_mass)
    asm = _OmegaAssembler(tset)
    m = tset.dim
    eye = np.eye(m)
    omegas = 2.0 * np.pi * np.arange(omega_count) / omega_count
    singular: list[float] = []
    if mode == "matrix":
        coeffs = np.zeros((N + 1, m, m), dtype=complex)
        for start in range(0, omega_count, chunk):
            oms = omegas[start : start + chunk]
            A = np.empty((len(oms), m, m), dtype=complex)
            for i, om in enumerate(oms):
                A[i] = eye - asm(om)
            X = np.linalg.inv(A)
            sup = np.max(np.abs(X).sum(axis=2), axis=1)
            for i, om in enumerate(oms):
                if sup[i] > threshold:
                    singular.append(float(om))
            E = np.exp(-1j * np.outer(np.arange(N + 1), oms))
            coeffs += np.einsum("nj,jab->nab", E, X, optimize=True)
        coeffs /= omega_count
        norms = np.array([_sup_norm_matrix(coeffs[n]) for n in range(N + 1)])
        return FourierRenewal(tset.k, N, "matrix", list(coeffs), norms, omega_count, singular)
    if mode == "vector":
        if probe is None:
            raise ValueError("vector mode needs a probe vector")
        probe = np.asarray(probe, dtype=complex)
        sols = np.empty((omega_count, m), dtype=complex)
        for start in range(0, omega_count, chunk):
            oms = omegas[start : start + chunk]
            A = np.empty((len(oms), m, m), dtype=complex)
            for i, om in enumerate(oms):
                A[i] = eye - asm(om)
            rhs = np.broadcast_to(probe[:, None], (len(oms), m, 1))
            X = np.linalg.solve(A, rhs)[:, :, 0]
            sols[start : start + len(oms)] = X
            sup = np.max(np.abs(X), axis=1)
            for i, om in enumerate(oms):
                if sup[i] > threshold * max(np.max(np.abs(probe)), 1e-300):
                    singular.append(float(om))
        coeffs = np.fft.fft(sols, axis=0) / omega_count
        vals = coeffs[: N + 1]
        norms = np.max(np.abs(vals), axis=1)
        return FourierRenewal(tset.k, N, "vector", vals, norms, omega_count, singular)
    raise ValueError(f"unknown mode {mode!r}")


def fourier_agreement(ren: RenewalSequence, fren: FourierRenewal, n_max: int | None = None) -> np.ndarray:
    """Relative discrepancies ||That_n - T_n|| / max(1, ||T_n||) for n <= n_max."""
    n_max = min(ren.N, fren.N) if n_max is None else n_max
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        if ren.mode == "matrix":
            diff = _sup_norm_matrix(np.asarray(fren.values[n]) - np.asarray(ren.values[n]))
        else:
            diff = float(np.max(np.abs(fren.values[n] - ren.values[n])))
        out[n] = diff / max(1.0, ren.norms[n])
    return out


def band_limited_zero_mode_check(
    tset: TwistedOperatorSet,
    N: int,
    omega_count: int,
    probe: np.ndarray,
    exclude: int = 4,
) -> float:
    """Weaker k = 0 cross-check away from the genuinely singular frequency.

    The plain coefficient series does not converge on the circle for k = 0
    (the coefficients plateau at the renewal density), so the comparison is
    made for the differenced sequence t_n - t_{n-1}, whose transform
    (1 - e^{i omega})(I - R_0(omega))^{-1} v is continuous.  Frequencies in a
    symmetric window of half-width 2 pi exclude / omega_count around zero are
    skipped; the return value is the sup relative mismatch on the remaining
    grid, limited by the differenced tail beyond omega_count / 2 terms.
    """
    if not tset.is_untwisted:
        raise ValueError("this check is the k = 0 variant")
    if omega_count & (omega_count - 1) or omega_count < 4 * N:
        raise ValueError("omega_count must be a power of two >= 4N")
    asm = _OmegaAssembler(tset)
    m = tset.dim
    eye = np.eye(m)
    n_rec = omega_count // 2
    ren = renewal_recursion(tset, n_rec, mode="vector", probe=probe)
    diff = np.vstack([ren.values[:1], np.diff(ren.values, axis=0)])
    padded = np.zeros((omega_count, m), dtype=complex)
    padded[: n_rec + 1] = diff
    rec_hat = np.fft.ifft(padded, axis=0) * omega_count  # sum_n diff_n e^{+in omega_j}
    idx = np.arange(omega_count)
    mask = ~((idx <= exclude) | (idx >= omega_count - exclude))
    worst = 0.0
    scale = 1e-300
    for j in np.nonzero(mask)[0]:
        om = 2.0 * np.pi * j / omega_count
        u_dir = (1.0 - np.exp(1j * om)) * np.linalg.solve(eye - asm(om), probe)
        scale = max(scale, float(np.max(np.abs(u_dir))))
        worst = max(worst, float(np.max(np.abs(rec_hat[j] - u_dir))))
    return worst / scale


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r2: float
    residuals: np.ndarray


def decay_fit(norms: np.ndarray, window: tuple[int, int]) -> DecayFit:
    """Log-log slope of a norm sequence indexed from n = 0."""
    norms = np.asarray(norms, dtype=float)
    lo, hi = window
    ns = np.arange(lo, min(hi, len(norms) - 1) + 1)
    vals = norms[ns]
    if np.any(vals <= 0):
        raise ValueError("nonpositive norms in the fit window")
    fit = loglog_slope(ns.astype(float), vals)
    return DecayFit(fit.slope, fit.intercept, fit.r2, fit.residuals)


# -------------------------------------------------------------------- tower


@dataclass
class Tower:
    """Truncated suspension of the induced map under the return time.

    Base cells refine cylinders by an equal-width grid so the return time is
    constant per cell; state (q, level) is flattened via offsets.
    """

    scheme: InducingScheme
    cocycle: ToralCocycle
    m_base: int
    phi_max: int
    cell_lo: np.ndarray  # (Q,)
    cell_hi: np.ndarray
    cell_phi: np.ndarray
    pi_ref: np.ndarray  # stationary masses per base cell
    wrap: sp.csr_matrix  # (Q, Q) spatial wrap weights, function-transfer form
    offsets: np.ndarray  # (Q+1,) state offsets
    hrep: np.ndarray  # (dim, nstates) cocycle at the level representatives
    truncation_mass: float
    warnings: list[str] = field(default_factory=list)

    @property
    def Q(self) -> int:
        return len(self.cell_phi)

    @property
    def nstates(self) -> int:
        return int(self.offsets[-1])

    def state_index(self, q: int, level: int) -> int:
        return int(self.offsets[q]) + level

    @property
    def state_q(self) -> np.ndarray:
        return np.repeat(np.arange(self.Q), np.diff(self.offsets))

    @property
    def state_level(self) -> np.ndarray:
        return np.concatenate([np.arange(p) for p in np.diff(self.offsets)])

    @property
    def yhat_mask(self) -> np.ndarray:
        """Indicator of pi^{-1}(Y): level 0 exactly for a first-return scheme."""
        return self.state_level == 0

    def level_mass(self, n: int) -> float:
        """mu_Delta of level n (equals the diagonal mass by construction)."""
        return float(self.pi_ref[self.cell_phi > n].sum())

    def state_weights(self) -> np.ndarray:
        """mu_Delta weight of each state (base-cell mass per level)."""
        return self.pi_ref[self.state_q]

    def phase_prefix(self, k) -> np.ndarray:
        """Per-state prefix sums ph(q, l) = sum_{s<l} k.h(rep(q, s))."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        kd = np.tensordot(k, self.hrep, axes=(0, 0))
        out = np.zeros(self.nstates)
        for q in range(self.Q):
            a, b = self.offsets[q], self.offsets[q + 1]
            out[a + 1 : b] = np.cumsum(kd[a : b - 1])
        return out

    def column_twist(self, k) -> np.ndarray:
        """Full excursion twist per base cell: prod_l e^{i k.h(rep(q, l))}."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        kd = np.tensordot(k, self.hrep, axes=(0, 0))
        return np.exp(
            1j * np.add.reduceat(kd, self.offsets[:-1])
        )


def build_tower(
    scheme: InducingScheme,
    cocycle: ToralCocycle,
    m_base: int = 64,
    phi_max: int = 64,
    quad_order: int = 6,
) -> Tower:
    """Refine cylinders with phi <= phi_max by an m_base equal-width grid."""
    phi_max = min(phi_max, scheme.phi_max)
    imap = scheme.imap
    edges = np.linspace(scheme.y_lo, scheme.y_hi, m_base + 1)
    cells_lo, cells_hi, cells_phi, cyl_of_cell = [], [], [], []
    cyl_cells: dict[int, tuple[int, int]] = {}
    kept = [c for c in scheme.alpha if c.phi <= phi_max]
    for ci, cyl in enumerate(kept):
        inner = edges[(edges > cyl.lo + 1e-15) & (edges < cyl.hi - 1e-15)]
        bounds = np.concatenate([[cyl.lo], inner, [cyl.hi]])
        start = len(cells_lo)
        for j in range(len(bounds) - 1):
            cells_lo.append(bounds[j])
            cells_hi.append(bounds[j + 1])
            cells_phi.append(cyl.phi)
            cyl_of_cell.append(ci)
        cyl_cells[ci] = (start, len(cells_lo))
    cell_lo = np.array(cells_lo)
    cell_hi = np.array(cells_hi)
    cell_phi = np.array(cells_phi, dtype=np.int64)
    Q = len(cell_lo)

    # spatial wrap weights by per-target Gauss quadrature pulled through words
    xg, wg = np.polynomial.legendre.leggauss(quad_order)
    ynodes = (cell_lo[:, None] + 0.5 * (cell_hi - cell_lo)[:, None] * (xg[None, :] + 1.0)).ravel()
    yweights = (np.outer(0.5 * (cell_hi - cell_lo), wg)).ravel()
    target = np.repeat(np.arange(Q, dtype=np.int64), quad_order)
    lut = {(c.phi, round(c.lo, 12)): i for i, c in enumerate(kept)}
    rows, cols, vals = [], [], []
    for rec in pullback_walk(
        imap,
        scheme.y_branch_id,
        scheme.offy_branch_ids,
        phi_max,
        payload=ynodes,
        want_logdg=True,
    ):
        ci = lut.get((rec.phi, round(rec.lo, 12)))
        if ci is None:
            continue
        a, b = cyl_cells[ci]
        with np.errstate(under="ignore"):
            w = yweights * np.exp(-rec.logdg)
        src = a + np.clip(
            np.searchsorted(cell_lo[a:b], rec.z, side="right") - 1, 0, b - a - 1
        )
        rows.append(target)
        cols.append(src)
        vals.append(w)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    lam = sp.coo_matrix((vals, (rows, cols)), shape=(Q, Q)).tocsr()  # Lebesgue masses

    widths = cell_hi - cell_lo
    P = lam.multiply(1.0 / widths[None, :]).tocsc()
    colsum = np.asarray(P.sum(axis=0)).ravel()
    corr = np.where(colsum > 0, 1.0 / np.where(colsum > 0, colsum, 1.0), 0.0)
    Pc = P.multiply(corr[None, :]).tocsr()
    v = widths / widths.sum()
    for _ in range(50000):
        nv = Pc @ v
        nv /= nv.sum()
        if np.max(np.abs(nv - v)) < 1e-15:
            v = nv
            break
        v = nv
    pi_ref = v
    dens = pi_ref / widths
    # function-transfer wrap: W[q', q] = rho_q Lambda[q', q] / pi_{q'}
    W = sp.csr_matrix(lam.multiply(dens[None, :]).multiply(1.0 / np.maximum(pi_ref, 1e-300)[:, None]))

    offsets = np.concatenate([[0], np.cumsum(cell_phi)])
    # representatives: forward orbit of each cell midpoint
    reps = np.empty(int(offsets[-1]))
    mids = 0.5 * (cell_lo + cell_hi)
    for q in range(Q):
        x = mids[q]
        a = int(offsets[q])
        for l in range(int(cell_phi[q])):
            reps[a + l] = x
            if l + 1 < cell_phi[q]:
                from .interval_maps import evaluate

                x = evaluate(imap, x)
    hrep = cocycle(reps)

    trunc = float(max(0.0, 1.0 - pi_ref.sum()))
    warnings = []
    cover = (cell_hi - cell_lo).sum() / scheme.y_length
    if cover < 1.0 - 1e-12:
        warnings.append(
            f"tower base covers {cover:.6f} of Y; mass beyond phi_max={phi_max} is truncated"
        )
    return Tower(
        scheme=scheme,
        cocycle=cocycle,
        m_base=m_base,
        phi_max=phi_max,
        cell_lo=cell_lo,
        cell_hi=cell_hi,
        cell_phi=cell_phi,
        pi_ref=pi_ref,
        wrap=W,
        offsets=offsets,
        hrep=np.atleast_2d(hrep),
        truncation_mass=trunc,
        warnings=warnings,
    )


@dataclass
class TowerPieceSet:
    """Level-0 twisted pieces of the tower; duck-typed like a TwistedOperatorSet."""

    k: tuple[int, ...]
    pieces: dict[int, sp.csr_matrix]
    dim: int
    phi_max: int
    stationary: np.ndarray
    truncation_mass: float

    @property
    def is_untwisted(self) -> bool:
        return all(ki == 0 for ki in self.k)


def tower_pieces(tower: Tower, k) -> TowerPieceSet:
    k = (int(k),) if np.isscalar(k) else tuple(int(ki) for ki in k)
    twist = tower.column_twist(k)
    pieces: dict[int, sp.csr_matrix] = {}
    W = tower.wrap.tocsc()
    for n in sorted(set(tower.cell_phi.tolist())):
        cols = np.nonzero(tower.cell_phi == n)[0]
        sel = sp.csc_matrix(
            (twist[cols], (cols, cols)), shape=(tower.Q, tower.Q)
        )
        pieces[int(n)] = sp.csr_matrix(W @ sel, dtype=complex)
    return TowerPieceSet(
        k=k,
        pieces=pieces,
        dim=tower.Q,
        phi_max=int(tower.cell_phi.max()),
        stationary=tower.pi_ref,
        truncation_mass=tower.truncation_mass,
    )


@dataclass
class TowerOperators:
    """Climb (A), last-entry (B) and never-entering (E) blocks to horizon N."""

    tower: Tower
    k: tuple[int, ...]
    N: int
    A: list[sp.csr_matrix]  # (nstates, Q)
    B: list[sp.csr_matrix]  # (Q, nstates)
    E: list[sp.csr_matrix]  # (nstates, nstates)
    _p_cache: dict = field(default_factory=dict)

    def a_norm(self, n: int) -> float:
        """L_inf -> L1(mu_Delta) norm of A_n (unit phases on level n)."""
        return self.tower.level_mass(n)

    def b_norm(self, n: int) -> float:
        """L_inf -> L1(mu_Z) style norm of B_n (wrap preserves mass)."""
        return self.tower.level_mass(n)

    def masked_a_nnz(self, n: int) -> int:
        """Nonzeros of 1_{Yhat} A_n; zero for n >= 1 when Z = Y."""
        mask = sp.diags(self.tower.yhat_mask.astype(float))
        return int((mask @ self.A[n]).nnz)


def build_tower_operators(tower: Tower, k, N: int) -> TowerOperators:
    k = (int(k),) if np.isscalar(k) else tuple(int(ki) for ki in k)
    ph = tower.phase_prefix(k)
    kd = np.tensordot(np.atleast_1d(np.asarray(k, dtype=float)), tower.hrep, axes=(0, 0))
    Q, S = tower.Q, tower.nstates
    offs = tower.offsets
    phis = tower.cell_phi
    W = tower.wrap
    A: list[sp.csr_matrix] = []
    B: list[sp.csr_matrix] = []
    E: list[sp.csr_matrix] = []
    state_q = tower.state_q
    state_level = tower.state_level
    for n in range(N + 1):
        qs = np.nonzero(phis > n)[0]
        # A_n: lift into level n with the climb twist
        rows = offs[qs] + n
        avals = np.exp(1j * ph[rows]) if n > 0 else np.ones(len(qs), dtype=complex)
        A.append(sp.csr_matrix((avals, (rows, qs)), shape=(S, Q)))
        # B_n: from diagonal states (q, phi-n) through the wrap into level 0
        if n == 0:
            cols0 = offs[np.arange(Q)]
            B.append(
                sp.csr_matrix(
                    (np.ones(Q, dtype=complex), (np.arange(Q), cols0)), shape=(Q, S)
                )
            )
        else:
            cols = offs[qs] + (phis[qs] - n)
            top = offs[qs] + phis[qs] - 1
            tw = np.exp(1j * (ph[top] + kd[top] - ph[cols]))
            D = sp.csr_matrix((tw, (qs, cols)), shape=(Q, S))
            B.append(sp.csr_matrix(W @ D, dtype=complex))
        # E_n: climb by n strictly inside the tower, starting off level 0
        src = np.nonzero((state_level >= 1) & (state_level + n <= phis[state_q] - 1))[0]
        dst = src + n
        evals = np.exp(1j * (ph[dst] - ph[src]))
        E.append(sp.csr_matrix((evals, (dst, src)), shape=(S, S)))
    return TowerOperators(tower=tower, k=k, N=N, A=A, B=B, E=E)


def direct_tower_operator(tower: Tower, k) -> sp.csr_matrix:
    """The twisted tower transfer matrix: climb edges plus wrap edges."""
    k = (int(k),) if np.isscalar(k) else tuple(int(ki) for ki in k)
    kd = np.tensordot(np.atleast_1d(np.asarray(k, dtype=float)), tower.hrep, axes=(0, 0))
    offs = tower.offsets
    phis = tower.cell_phi
    Q, S = tower.Q, tower.nstates
    state_q = tower.state_q
    state_level = tower.state_level
    # climb: (q, l) -> (q, l+1)
    src = np.nonzero(state_level + 1 <= phis[state_q] - 1)[0]
    rows = [src + 1]
    cols = [src]
    vals = [np.exp(1j * kd[src])]
    # wrap: (q, phi-1) -> level 0 with spatial weights
    top = offs[1:] - 1
    Wc = tower.wrap.tocoo()
    rows.append(offs[Wc.row])
    cols.append(top[Wc.col])
    vals.append(Wc.data * np.exp(1j * kd[top[Wc.col]]))
    L = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(S, S)
    )
    return L.tocsr()


def _p_blocks(ops: TowerOperators, ren: RenewalSequence, n_max: int, cols: np.ndarray):
    """P_r[:, cols] with P_r = sum_{n2+n3=r} T_{n2} B_{n3}, via the T recursion."""
    pieces = ren.piece_set.pieces
    phi_max = ren.piece_set.phi_max
    out = []
    for r in range(n_max + 1):
        acc = np.asarray(ops.B[r][:, cols].todense(), dtype=complex)
        for j in range(1, min(r, phi_max) + 1):
            Rj = pieces.get(j)
            if Rj is not None:
                acc += Rj @ out[r - j]
        out.append(acc)
    return out


def assemble_L_k_n(
    ops: TowerOperators, ren: RenewalSequence, n: int, cols: np.ndarray | None = None
) -> np.ndarray:
    """Sum over n1+n2+n3 = n of A_{n1} T_{n2} B_{n3} plus E_n (dense block)."""
    tower = ops.tower
    S = tower.nstates
    if cols is None:
        cols = np.arange(S)
    key = tuple(cols[:2]) + (len(cols),)
    cache = ops._p_cache.setdefault(key, {})
    if "P" not in cache or len(cache["P"]) <= n:
        cache["P"] = _p_blocks(ops, ren, max(n, ops.N), cols)
    P = cache["P"]
    ph = tower.phase_prefix(ops.k)
    offs = tower.offsets
    phis = tower.cell_phi
    out = np.asarray(ops.E[n][:, cols].todense(), dtype=complex)
    for l in range(0, n + 1):
        qs = np.nonzero(phis > l)[0]
        rows = offs[qs] + l
        out[rows, :] += np.exp(1j * ph[rows])[:, None] * P[n - l][qs, :]
    return out


def tower_identity_report(
    tower: Tower, k, N: int, block: int = 512
) -> dict:
    """Entrywise comparison of the assembled decomposition with direct powers."""
    pieces = tower_pieces(tower, k)
    ren = renewal_recursion(pieces, N, mode="matrix")
    ops = build_tower_operators(tower, k, N)
    L = direct_tower_operator(tower, k)
    S = tower.nstates
    max_err = np.zeros(N + 1)
    level0 = tower.offsets[:-1]
    restr_err = 0.0
    ph = tower.phase_prefix(k)
    offs = tower.offsets
    phis = tower.cell_phi
    for start in range(0, S, block):
        cols = np.arange(start, min(start + block, S))
        P = _p_blocks(ops, ren, N, cols)
        direct = np.zeros((S, len(cols)), dtype=complex)
        direct[cols, np.arange(len(cols))] = 1.0
        for n in range(N + 1):
            if n > 0:
                direct = L @ direct
            asm = np.asarray(ops.E[n][:, cols].todense(), dtype=complex)
            for l in range(0, min(n, int(phis.max()) - 1) + 1):
                qs = np.nonzero(phis > l)[0]
                rows = offs[qs] + l
                asm[rows, :] += np.exp(1j * ph[rows])[:, None] * P[n - l][qs, :]
            max_err[n] = max(max_err[n], float(np.max(np.abs(asm - direct))))
            # restriction identity: level-0 block of L^n equals T_n
            incols = np.isin(cols, level0)
            if incols.any():
                qcols = np.searchsorted(level0, cols[incols])
                diff = direct[np.ix_(level0, np.nonzero(incols)[0])] - np.asarray(
                    ren.values[n]
                )[:, qcols]
                restr_err = max(restr_err, float(np.max(np.abs(diff))))
    return {
        "k": list(np.atleast_1d(k).astype(int)),
        "N": N,
        "nstates": S,
        "max_abs_error": float(np.max(max_err)),
        "max_abs_error_by_n": max_err.tolist(),
        "restriction_error": restr_err,
    }
