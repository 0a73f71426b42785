"""Ulam discretization of the induced transfer operator and its twists.

The factory walks the cylinder tree once, pulling a fixed per-cell
Gauss-Legendre node set back through every cylinder.  Each node carries its
target cell (row), source cell (column), Lebesgue weight |dz/dy|, and the
orbit sums of the cocycle, so twisted pieces for any frequency k are a single
complex exponential away.  Pieces act on cell-value vectors as the transfer
operator of G with respect to the stationary measure; the untwisted piece sum
fixes constants up to the Perron solve tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .cocycles import ToralCocycle
from .inducing import InducingScheme, pullback_walk

__all__ = [
    "UlamGrid",
    "UlamPieceFactory",
    "TwistedOperatorSet",
    "SingularOperatorError",
    "build_twisted_set",
    "stationary_density",
    "spectral_gap",
    "assemble_R_omega",
    "resolvent_diagnostic",
    "ResolventScan",
    "resolvent_growth_fit",
]


class SingularOperatorError(RuntimeError):
    """I - R_k(omega) is singular at the requested frequency."""


@dataclass(frozen=True)
class UlamGrid:
    lo: float
    hi: float
    m: int
    quad_order: int = 8

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one cell")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.m

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.m + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def gauss_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell Gauss-Legendre nodes and weights, flattened (m*q,)."""
        xg, wg = np.polynomial.legendre.leggauss(self.quad_order)
        e = self.edges
        half = 0.5 * self.width
        nodes = (e[:-1, None] + half * (xg[None, :] + 1.0)).ravel()
        weights = np.tile(wg * half, self.m)
        return nodes, weights

    def cell_of(self, x: np.ndarray) -> np.ndarray:
        idx = np.floor((np.asarray(x) - self.lo) / self.width).astype(np.int64)
        return np.clip(idx, 0, self.m - 1)

    def cell_average(self, fn) -> np.ndarray:
        """Cell averages of a callable by the grid's own quadrature."""
        nodes, weights = self.gauss_nodes()
        vals = np.asarray(fn(nodes))
        return (vals.reshape(self.m, self.quad_order) * weights.reshape(self.m, -1)).sum(
            axis=1
        ) / self.width


class UlamPieceFactory:
    """Node cache + stationary data for one (scheme, cocycle, grid) triple."""

    def __init__(
        self,
        scheme: InducingScheme,
        cocycle: ToralCocycle,
        grid: UlamGrid | None = None,
        phi_max: int | None = None,
    ):
        self.scheme = scheme
        self.cocycle = cocycle
        self.grid = grid or UlamGrid(scheme.y_lo, scheme.y_hi, 128)
        if not (abs(self.grid.lo - scheme.y_lo) < 1e-12 and abs(self.grid.hi - scheme.y_hi) < 1e-12):
            raise ValueError("grid must cover Y exactly")
        self.phi_max = min(phi_max or scheme.phi_max, scheme.phi_max)
        self.warnings: list[str] = []
        if self.grid.m < 32:
            self.warnings.append(
                f"grid resolution m={self.grid.m} is below the recommended minimum of 32"
            )
        self._build_nodes()
        self._build_stationary()
        self._sets: dict[tuple[int, ...], TwistedOperatorSet] = {}

    # ---------------------------------------------------------- node cache

    def _build_nodes(self):
        g = self.grid
        sch = self.scheme
        ynodes, yweights = g.gauss_nodes()
        edges = g.edges
        rows_pattern = np.repeat(np.arange(g.m, dtype=np.int32), g.quad_order)

        rows, cols, wleb, Hs, phis = [], [], [], [], []
        cyl_phi, cyl_lo, cyl_node_slices = [], [], []
        col_exact = np.zeros(g.m)
        col_assigned = np.zeros(g.m)
        pos = 0
        for rec in pullback_walk(
            sch.imap,
            sch.y_branch_id,
            sch.offy_branch_ids,
            self.phi_max,
            payload=ynodes,
            hfun=self.cocycle,
            want_logdg=True,
        ):
            z = rec.z
            with np.errstate(under="ignore"):
                w = yweights * np.exp(-rec.logdg)
            # pin the source-cell mass of this cylinder to the exact overlap
            # widths |cell_j ∩ a|; the expansion makes the node split across
            # source cells cruder than its per-cell totals, so the totals are
            # enforced and the Gauss nodes only distribute mass within them.
            z_cols = g.cell_of(z).astype(np.int32)
            approx = np.bincount(z_cols, weights=w, minlength=g.m)
            exact = np.clip(
                np.minimum(edges[1:], rec.hi) - np.maximum(edges[:-1], rec.lo), 0.0, None
            )
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(approx > 0, exact / np.where(approx > 0, approx, 1.0), 0.0)
            w = w * scale[z_cols]
            col_exact += exact
            col_assigned += np.where(approx > 0, exact, 0.0)
            keep = w > 0.0
            nkeep = int(keep.sum())
            rows.append(rows_pattern[keep])
            cols.append(z_cols[keep])
            wleb.append(w[keep])
            Hs.append(rec.h_sum[:, keep])
            phis.append(np.full(nkeep, rec.phi, dtype=np.int32))
            cyl_phi.append(rec.phi)
            cyl_lo.append(rec.lo)
            cyl_node_slices.append((pos, pos + nkeep))
            pos += nkeep
        self.node_row = np.concatenate(rows) if rows else np.empty(0, np.int32)
        self.node_col = np.concatenate(cols) if cols else np.empty(0, np.int32)
        self.node_wleb = np.concatenate(wleb) if wleb else np.empty(0)
        self.node_H = np.concatenate(Hs, axis=1) if Hs else np.empty((self.cocycle.dim, 0))
        self.node_phi = np.concatenate(phis) if phis else np.empty(0, np.int32)
        # slivers whose image missed every quadrature node: spread the missing
        # mass over the column so column totals stay exact
        with np.errstate(divide="ignore", invalid="ignore"):
            colfix = np.where(col_assigned > 0, col_exact / np.where(col_assigned > 0, col_assigned, 1.0), 1.0)
        self.node_wleb = self.node_wleb * colfix[self.node_col]
        self.cyl_phi = np.array(cyl_phi, dtype=np.int64)
        self.cyl_lo = np.array(cyl_lo)
        self.cyl_node_slices = cyl_node_slices

    def _build_stationary(self):
        g = self.grid
        m = g.m
        lam = np.zeros((m, m))
        np.add.at(lam, (self.node_row, self.node_col), self.node_wleb)
        P = lam / g.width  # column-stochastic up to truncation
        colsum = P.sum(axis=0)
        self.column_deficit = float(np.max(1.0 - colsum))
        corr = np.where(colsum > 0, 1.0 / np.where(colsum > 0, colsum, 1.0), 0.0)
        Pc = P * corr[None, :]
        v = np.full(m, 1.0 / m)
        residual = np.inf
        for _ in range(20000):
            nv = Pc @ v
            s = nv.sum()
            if s <= 0:
                raise RuntimeError("stationary power iteration collapsed")
            nv /= s
            residual = float(np.max(np.abs(nv - v)))
            v = nv
            if residual < 1e-15:
                break
        self.stationary = v
        self.fixed_point_residual = float(np.max(np.abs(Pc @ v - v)))
        self.P_corrected = Pc
        self.density_values = v / g.width
        # node-level stationary weights and per-cylinder masses
        self.node_wmu = self.node_wleb * self.density_values[self.node_col]
        self.cyl_mass = np.array(
            [self.node_wmu[a:b].sum() for a, b in self.cyl_node_slices]
        )
        self.phi_masses = np.zeros(self.phi_max + 1)
        np.add.at(self.phi_masses, self.cyl_phi, self.cyl_mass)
        self.truncation_mass = float(max(0.0, 1.0 - self.phi_masses.sum()))
        if self.truncation_mass > 1e-3:
            self.warnings.append(
                f"truncated return-time mass {self.truncation_mass:.3e} beyond phi_max={self.phi_max}"
            )

    # ------------------------------------------------------------- outputs

    def density(self, x):
        """Piecewise-linear interpolated stationary density on Y."""
        return np.interp(
            np.asarray(x, dtype=float), self.grid.centers, self.density_values
        )

    def tail(self, n_max: int) -> np.ndarray:
        """mu_Z(phi > n), n = 1..n_max, stationary weighting.

        Beyond the operator truncation the tail is continued from the scheme's
        deeper cylinders with midpoint density weighting, so leading-term sums
        in the checks are not cut off at the piece horizon.
        """
        if n_max > self.scheme.phi_max:
            raise ValueError("tail horizon exceeds the partition depth")
        by_n = np.zeros(max(n_max, self.phi_max) + 1)
        np.add.at(by_n, np.minimum(self.cyl_phi, len(by_n) - 1), self.cyl_mass)
        if n_max > self.phi_max:
            for c in self.scheme.alpha:
                if self.phi_max < c.phi <= n_max:
                    by_n[c.phi] += float(self.density(0.5 * (c.lo + c.hi))) * (c.hi - c.lo)
        return np.maximum(1.0 - np.cumsum(by_n)[1 : n_max + 1], 0.0)

    def masses_aligned(self, scheme: InducingScheme | None = None) -> np.ndarray:
        """Per-cylinder stationary masses aligned with scheme.alpha order."""
        sch = scheme or self.scheme
        lut = {}
        for i in range(len(self.cyl_phi)):
            lut[(int(self.cyl_phi[i]), round(float(self.cyl_lo[i]), 12))] = self.cyl_mass[i]
        return np.array([lut.get((c.phi, round(c.lo, 12)), 0.0) for c in sch.alpha])

    def mean_return_time(self) -> float:
        """First moment of the measured pieces: the mean realised by the
        truncated renewal model (converges to E[phi] as phi_max grows)."""
        return float(np.sum(np.arange(len(self.phi_masses)) * self.phi_masses))

    # ------------------------------------------------------------ caching

    def cache_key(self) -> dict:
        sch = self.scheme
        imap = sch.imap
        return {
            "family": imap.family,
            "gamma": imap.gamma,
            "c1": imap.c1,
            "c2": imap.c2,
            "y": (sch.y_lo, sch.y_hi),
            "m": self.grid.m,
            "quad_order": self.grid.quad_order,
            "phi_max": self.phi_max,
            "cocycle": repr((self.cocycle.components, self.cocycle.winding)),
        }

    def save(self, path: str) -> None:
        """Binary node-cache dump; everything downstream rebuilds from it."""
        import json

        np.savez_compressed(
            path,
            key=np.frombuffer(json.dumps(self.cache_key(), sort_keys=True).encode(), dtype=np.uint8),
            node_row=self.node_row,
            node_col=self.node_col,
            node_wleb=self.node_wleb,
            node_H=self.node_H,
            node_phi=self.node_phi,
            cyl_phi=self.cyl_phi,
            cyl_lo=self.cyl_lo,
            cyl_slices=np.array(self.cyl_node_slices, dtype=np.int64).reshape(-1, 2),
        )

    @classmethod
    def load(cls, path: str, scheme: InducingScheme, cocycle: ToralCocycle, grid: UlamGrid, phi_max: int | None = None):
        """Rebuild a factory from a node-cache dump, verifying the key."""
        import json

        self = cls.__new__(cls)
        self.scheme = scheme
        self.cocycle = cocycle
        self.grid = grid
        self.phi_max = min(phi_max or scheme.phi_max, scheme.phi_max)
        self.warnings = []
        data = np.load(path)
        key = json.loads(bytes(data["key"]).decode())
        expect = cls.cache_key(self)
        if json.dumps(key, sort_keys=True) != json.dumps(expect, sort_keys=True):
            raise ValueError(f"cache key mismatch: file has {key}, build wants {expect}")
        self.node_row = data["node_row"]
        self.node_col = data["node_col"]
        self.node_wleb = data["node_wleb"]
        self.node_H = data["node_H"]
        self.node_phi = data["node_phi"]
        self.cyl_phi = data["cyl_phi"]
        self.cyl_lo = data["cyl_lo"]
        self.cyl_node_slices = [tuple(r) for r in data["cyl_slices"]]
        if grid.m < 32:
            self.warnings.append(
                f"grid resolution m={grid.m} is below the recommended minimum of 32"
            )
        self._build_stationary()
        self._sets = {}
        return self

    def twisted_set(self, k) -> "TwistedOperatorSet":
        k = (int(k),) if np.isscalar(k) else tuple(int(ki) for ki in k)
        if len(k) != self.cocycle.dim:
            raise ValueError(f"k={k} has wrong dimension for a {self.cocycle.dim}-torus")
        if k in self._sets:
            return self._sets[k]
        m = self.grid.m
        kdot = np.tensordot(np.asarray(k, dtype=float), self.node_H, axes=(0, 0))
        base = self.node_wmu / np.maximum(self.stationary[self.node_row], 1e-300)
        vals = base * np.exp(1j * kdot)
        pieces: dict[int, sp.csr_matrix] = {}
        order = np.argsort(self.node_phi, kind="stable")
        sorted_phi = self.node_phi[order]
        bounds = np.searchsorted(sorted_phi, np.arange(1, self.phi_max + 2), side="left")
        for n in range(1, self.phi_max + 1):
            a, b = bounds[n - 1], bounds[n]
            if b <= a:
                continue
            idx = order[a:b]
            pieces[n] = sp.coo_matrix(
                (vals[idx], (self.node_row[idx], self.node_col[idx])), shape=(m, m)
            ).tocsr()
        tset = TwistedOperatorSet(
            k=k,
            pieces=pieces,
            stationary=self.stationary,
            grid=self.grid,
            phi_max=self.phi_max,
            truncation_mass=self.truncation_mass,
            warnings=list(self.warnings),
            factory=self,
        )
        self._sets[k] = tset
        return tset


@dataclass
class TwistedOperatorSet:
    k: tuple[int, ...]
    pieces: dict[int, sp.csr_matrix]
    stationary: np.ndarray
    grid: UlamGrid
    phi_max: int
    truncation_mass: float
    warnings: list[str]
    factory: UlamPieceFactory

    @property
    def dim(self) -> int:
        return self.grid.m

    @property
    def is_untwisted(self) -> bool:
        return all(ki == 0 for ki in self.k)

    def piece_sup_norms(self) -> dict[int, float]:
        """Max absolute row sum of each piece."""
        out = {}
        for n, Pn in self.pieces.items():
            out[n] = float(np.max(np.abs(Pn).sum(axis=1))) if Pn.nnz else 0.0
        return out


def build_twisted_set(
    scheme: InducingScheme,
    h: ToralCocycle,
    k,
    grid: UlamGrid | None = None,
    phi_max: int | None = None,
) -> TwistedOperatorSet:
    """One-shot construction; reuse a UlamPieceFactory when sweeping over k."""
    return UlamPieceFactory(scheme, h, grid, phi_max).twisted_set(k)


def stationary_density(tset: TwistedOperatorSet) -> np.ndarray:
    if not tset.is_untwisted:
        raise ValueError("stationary density is defined by the untwisted (k=0) set")
    return tset.stationary


def spectral_gap(tset: TwistedOperatorSet) -> float:
    """Modulus of the second-largest eigenvalue of the untwisted operator."""
    if not tset.is_untwisted:
        raise ValueError("spectral gap refers to the untwisted (k=0) operator")
    lams = np.linalg.eigvals(tset.factory.P_corrected)
    mods = np.sort(np.abs(lams))[::-1]
    return float(mods[1]) if len(mods) > 1 else 0.0


class _OmegaAssembler:
    """Precomputed aggregation for fast dense assembly of R_k(omega)."""

    def __init__(self, tset: TwistedOperatorSet):
        factory = tset.factory
        m = factory.grid.m
        lin = factory.node_row.astype(np.int64) * m + factory.node_col
        kdot = np.tensordot(np.asarray(tset.k, dtype=float), factory.node_H, axes=(0, 0))
        base = factory.node_wmu / np.maximum(factory.stationary[factory.node_row], 1e-300)
        vals = base * np.exp(1j * kdot)
        key = lin * (np.int64(factory.phi_max) + 1) + factory.node_phi
        uniq, inv = np.unique(key, return_inverse=True)
        n_u = len(uniq)
        self.lin = (uniq // (factory.phi_max + 1)).astype(np.int64)
        self.ns = (uniq % (factory.phi_max + 1)).astype(np.float64)
        self.vals = np.bincount(inv, weights=vals.real, minlength=n_u) + 1j * np.bincount(
            inv, weights=vals.imag, minlength=n_u
        )
        self.m = m

    def __call__(self, omega: float) -> np.ndarray:
        phased = self.vals * np.exp(1j * omega * self.ns)
        flat = np.bincount(self.lin, weights=phased.real, minlength=self.m * self.m) + 1j * np.bincount(
            self.lin, weights=phased.imag, minlength=self.m * self.m
        )
        return flat.reshape(self.m, self.m)


def assemble_R_omega(tset: TwistedOperatorSet, omega: float) -> np.ndarray:
    """Dense sum of the pieces with phases e^{i n omega}."""
    asm = getattr(tset, "_asm", None)
    if asm is None:
        asm = _OmegaAssembler(tset)
        tset._asm = asm
    return asm(omega)


@dataclass
class ResolventScan:
    k: tuple[int, ...]
    omegas: np.ndarray
    norms: np.ndarray
    sup: float
    argmax_omega: float
    singular_omegas: list[float]
    norm_kind: str

    @property
    def singular(self) -> bool:
        return bool(self.singular_omegas)


def resolvent_diagnostic(
    tset: TwistedOperatorSet,
    omega_count: int = 256,
    norm: str = "sup",
    singular_threshold: float = 1e12,
) -> ResolventScan:
    """Scan sup_omega of the inverse norm of (I - R_k(omega)) over a uniform grid.

    Numerically singular grid points are reported, not raised; k = 0 is
    rejected outright because the untwisted operator fixes constants at
    omega = 0.  Truncation of the return-time pieces caps any resolvent norm
    near 1/truncation_mass, so the singularity threshold is lowered to that
    ceiling when it undercuts the conditioning threshold; otherwise a genuine
    unit eigenvalue (e.g. a zero cocycle) would be masked by truncation.
    """
    if tset.is_untwisted:
        raise SingularOperatorError(
            "I - R_0(0) is singular (the untwisted operator fixes constants); "
            "the resolvent diagnostic requires k != 0"
        )
    threshold = singular_threshold
    if tset.truncation_mass > 0:
        threshold = min(threshold, 0.05 / tset.truncation_mass)
    asm = _OmegaAssembler(tset)
    m = tset.dim
    eye = np.eye(m)
    omegas = 2.0 * np.pi * np.arange(omega_count) / omega_count
    norms = np.empty(omega_count)
    singular: list[float] = []
    for i, om in enumerate(omegas):
        A = eye - asm(om)
        try:
            X = np.linalg.inv(A)
            val = _matrix_norm(X, norm)
        except np.linalg.LinAlgError:
            val = np.inf
        norms[i] = val
        if not np.isfinite(val) or val > threshold:
            singular.append(float(om))
    finite = norms[np.isfinite(norms)]
    sup = float(np.max(norms)) if len(finite) == len(norms) else float("inf")
    arg = float(omegas[int(np.argmax(np.where(np.isfinite(norms), norms, np.inf)))])
    return ResolventScan(
        k=tset.k,
        omegas=omegas,
        norms=norms,
        sup=sup,
        argmax_omega=arg,
        singular_omegas=singular,
        norm_kind=norm,
    )


def _matrix_norm(X: np.ndarray, kind: str) -> float:
    if kind == "sup":
        return float(np.max(np.abs(X).sum(axis=1)))
    if kind == "spectral":
        return float(np.linalg.norm(X, 2))
    raise ValueError(f"unknown norm {kind!r}")


def resolvent_growth_fit(scans: Sequence[ResolventScan]):
    """Log-log fit of sup resolvent norms against |k| (growth exponent)."""
    from .fitting import loglog_slope

    ks = np.array([max(1, int(round(np.linalg.norm(s.k, np.inf)))) for s in scans])
    sups = np.array([s.sup for s in scans])
    return loglog_slope(ks.astype(float), sups)
