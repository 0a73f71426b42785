"""Torus-valued cocycles, their orbit sums, and observables on X x T^d.

A cocycle is a finite trigonometric polynomial per torus coordinate; an
observable is a finite family of Fourier modes k -> v_k(x) with the conjugate
symmetry v_{-k} = conj(v_k) that makes it real-valued.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .inducing import InducingScheme, first_return
from .interval_maps import IntermittentMap, evaluate

__all__ = [
    "ToralCocycle",
    "ToralObservable",
    "InducedCocycleValue",
    "cocycle_from_records",
    "preset_cocycle",
    "zero_cocycle",
    "birkhoff_sum",
    "birkhoff_sum_lifted",
    "induced_cocycle",
    "extension_orbit",
    "evaluate_observable",
    "observable_from_records",
    "SymmetryError",
]

TWO_PI = 2.0 * np.pi


class SymmetryError(ValueError):
    """Fourier modes break the conjugate symmetry of a real observable."""


def wrap_angle(a):
    """Reduce to the representative in [0, 2*pi)."""
    return np.mod(a, TWO_PI)


def circle_distance(a, b=0.0):
    """Distance on the circle of circumference 2*pi."""
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


@dataclass(frozen=True)
class ToralCocycle:
    """h: [0,1) -> T^d, each coordinate sum_t amp*cos(2*pi*freq*x + phase)
    plus an optional integer winding term 2*pi*w*x (circle-valued, degree w)."""

    dim: int
    components: tuple[tuple[tuple[int, float, float], ...], ...]
    eta: float = 1.0
    winding: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.components) != self.dim:
            raise ValueError("one term list per torus coordinate required")
        if self.winding is None:
            object.__setattr__(self, "winding", (0,) * self.dim)
        elif len(self.winding) != self.dim:
            raise ValueError("one winding number per torus coordinate required")

    def __call__(self, x) -> np.ndarray:
        """Values as a (dim,) vector or (dim, n) array, unreduced."""
        x = np.asarray(x, dtype=float)
        out = np.zeros((self.dim,) + x.shape)
        for j, terms in enumerate(self.components):
            if self.winding[j]:
                out[j] += TWO_PI * self.winding[j] * x
            for freq, amp, phase in terms:
                out[j] += amp * np.cos(TWO_PI * freq * x + phase)
        return out

    def mp_eval(self, x):
        import mpmath as mp

        vals = []
        for j, terms in enumerate(self.components):
            s = 2 * mp.pi * self.winding[j] * mp.mpf(x) if self.winding[j] else mp.mpf(0)
            for freq, amp, phase in terms:
                s += mp.mpf(amp) * mp.cos(2 * mp.pi * freq * mp.mpf(x) + mp.mpf(phase))
            vals.append(s)
        return tuple(vals)

    @property
    def is_zero(self) -> bool:
        return all(w == 0 for w in self.winding) and all(
            all(abs(amp) == 0.0 for _, amp, _ in terms) for terms in self.components
        )

    def holder_seminorm(self) -> float:
        """Lipschitz constant bound: max over coords of sum |amp| 2 pi |freq|."""
        return max(
            TWO_PI * abs(w) + (sum(abs(amp) * TWO_PI * abs(freq) for freq, amp, _ in terms) or 0.0)
            for w, terms in zip(self.winding, self.components)
        )


def cocycle_from_records(
    records: Sequence[tuple[int, int, float, float]], winding: Sequence[int] | None = None
) -> ToralCocycle:
    """Records (coordinate, frequency, amplitude, phase)."""
    if not records and winding is None:
        return zero_cocycle(1)
    dim = max([r[0] for r in records] + [len(winding or [1]) - 1]) + 1
    comps: list[list[tuple[int, float, float]]] = [[] for _ in range(dim)]
    for coord, freq, amp, phase in records:
        comps[coord].append((int(freq), float(amp), float(phase)))
    return ToralCocycle(
        dim=dim,
        components=tuple(tuple(c) for c in comps),
        winding=None if winding is None else tuple(int(w) for w in winding),
    )


def preset_cocycle(eps: float = 0.3, dim: int = 1, eps2: float = 0.2) -> ToralCocycle:
    """eps*cos(2 pi x) for d=1; (eps1 cos 2 pi x, eps2 sin 4 pi x) for d=2."""
    if dim == 1:
        return cocycle_from_records([(0, 1, eps, 0.0)])
    if dim == 2:
        return cocycle_from_records([(0, 1, eps, 0.0), (1, 2, eps2, -np.pi / 2)])
    raise ValueError("presets exist for dim 1 and 2 only")


def zero_cocycle(dim: int = 1) -> ToralCocycle:
    return ToralCocycle(dim=dim, components=tuple(() for _ in range(dim)))


@dataclass(frozen=True)
class InducedCocycleValue:
    H: np.ndarray  # (dim,) reduced mod 2 pi
    phi: int


def birkhoff_sum_lifted(h: ToralCocycle, imap: IntermittentMap, x: float, n: int) -> np.ndarray:
    """Unreduced orbit sum sum_{j<n} h(f^j x), shape (dim,)."""
    total = np.zeros(h.dim)
    z = x
    for _ in range(n):
        total += h(z)
        z = evaluate(imap, z)
    return total


def birkhoff_sum(h: ToralCocycle, imap: IntermittentMap, x: float, n: int) -> np.ndarray:
    return wrap_angle(birkhoff_sum_lifted(h, imap, x, n))


def induced_cocycle(h: ToralCocycle, scheme: InducingScheme, z: float) -> InducedCocycleValue:
    """H(z) = h-sum over one excursion, with the return time."""
    phi, _ = first_return(scheme, z)
    return InducedCocycleValue(H=birkhoff_sum(h, scheme.imap, z, phi), phi=phi)


def extension_orbit(
    h: ToralCocycle, imap: IntermittentMap, x0: float, psi0: np.ndarray, n: int
) -> list[tuple[float, np.ndarray]]:
    psi = wrap_angle(np.asarray(psi0, dtype=float))
    x = x0
    out = [(x, psi.copy())]
    for _ in range(n):
        psi = wrap_angle(psi + h(x))
        x = evaluate(imap, x)
        out.append((x, psi.copy()))
    return out


# ------------------------------------------------------------- observables


def _conj_poly(poly: dict[int, complex]) -> dict[int, complex]:
    return {-f: np.conj(c) for f, c in poly.items()}


def _poly_close(a: dict[int, complex], b: dict[int, complex], tol: float = 1e-12) -> bool:
    freqs = set(a) | set(b)
    return all(abs(a.get(f, 0.0) - b.get(f, 0.0)) <= tol for f in freqs)


@dataclass(frozen=True)
class ToralObservable:
    """v(x, psi) = sum_k v_k(x) e^{i k.psi}, v_k a trig polynomial in x."""

    dim: int
    modes: dict[tuple[int, ...], dict[int, complex]]
    p: int = 0  # recorded smoothness budget

    def __post_init__(self):
        for k, poly in self.modes.items():
            mk = tuple(-ki for ki in k)
            if mk not in self.modes or not _poly_close(self.modes[mk], _conj_poly(poly)):
                raise SymmetryError(f"mode {k} lacks a conjugate partner")

    def mode_values(self, k: tuple[int, ...], x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for f, c in self.modes.get(k, {}).items():
            out = out + c * np.exp(2j * np.pi * f * x)
        return out

    @property
    def mode_keys(self) -> list[tuple[int, ...]]:
        return sorted(self.modes.keys())

    @property
    def zero_key(self) -> tuple[int, ...]:
        return (0,) * self.dim


def observable_from_records(
    records: Sequence[tuple], dim: int = 1, p: int = 0
) -> ToralObservable:
    """Each record (k, xfreq, amp, phase) adds amp*cos(k.psi + 2 pi xfreq x + phase)."""
    modes: dict[tuple[int, ...], dict[int, complex]] = {}

    def add(k, f, c):
        poly = modes.setdefault(k, {})
        poly[f] = poly.get(f, 0.0) + c

    for k, f, amp, phase in records:
        k = (int(k),) if np.isscalar(k) else tuple(int(ki) for ki in k)
        if len(k) != dim:
            raise ValueError(f"mode {k} has wrong torus dimension (expected {dim})")
        c = amp * np.exp(1j * phase)
        mk = tuple(-ki for ki in k)
        if k == mk and f == 0:
            add(k, 0, amp * np.cos(phase))
        else:
            add(k, f, 0.5 * c)
            add(mk, -f, 0.5 * np.conj(c))
    return ToralObservable(dim=dim, modes=modes, p=p)


def evaluate_observable(v: ToralObservable, x: float, psi) -> float:
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    total = 0.0 + 0.0j
    for k, poly in v.modes.items():
        vk = sum(c * np.exp(2j * np.pi * f * x) for f, c in poly.items())
        total += vk * np.exp(1j * float(np.dot(k, psi)))
    if abs(total.imag) >= 1e-12:
        raise SymmetryError(f"imaginary residue {total.imag:.3e} exceeds 1e-12")
    return float(total.real)
