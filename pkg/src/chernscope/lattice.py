"""Haldane model on the honeycomb lattice: geometry, Bloch Hamiltonian, bands.

The Bloch Hamiltonian is written in the nearest-neighbor-vector convention,

    H(k) = h0(k) I + hx(k) sigma_x + hy(k) sigma_y + hz(k) sigma_z,

    h0 = -2 t' cos(phi) sum_i cos(k . v_i)
    hx = -t sum_i cos(k . e_i)
    hy = -t sum_i sin(k . e_i)
    hz = -2 t' sin(phi) sum_i sin(k . v_i)

with e_i the three nearest-neighbor displacement vectors (A to B sublattice)
and v_i the next-nearest-neighbor lattice vectors.  In this convention H is
not literally periodic on the reciprocal lattice; instead

    H(k + G) = V H(k) V*,    V = diag(1, exp(i chi)),   chi = G . e1 (mod 2pi)

for any reciprocal vector G.  The unitary V is the sublattice boundary
matching used everywhere phases are compared across the zone boundary.

Units: hbar = 1, lattice scale a = 1, nearest-neighbor hopping t = 1 unless
stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .errors import GaplessPoint, NotReciprocal

__all__ = [
    "LatticeGeometry",
    "ModelParams",
    "BlochComponents",
    "BandEigensystem",
    "DEFAULT_GEOMETRY",
    "bloch_components",
    "bloch_fields",
    "hamiltonian",
    "eigensystem",
    "band_states",
    "band_energies",
    "boundary_phase",
    "boundary_matrix",
    "sublattice_matching",
    "band_gap_min",
    "high_symmetry_path",
]

GaugeFn = Optional[Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class LatticeGeometry:
    """Honeycomb vector set: NN vectors, NNN lattice vectors, reciprocal basis.

    All arrays are 2-vectors in Cartesian coordinates.  ``K`` and ``Kp`` are
    the two inequivalent Dirac-point momenta.
    """

    a: float
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    K: np.ndarray
    Kp: np.ndarray

    @classmethod
    def with_scale(cls, a: float = 1.0) -> "LatticeGeometry":
        s3 = np.sqrt(3.0)
        return cls(
            a=a,
            e1=np.array([0.0, a]),
            e2=np.array([-s3 * a / 2, -a / 2]),
            e3=np.array([s3 * a / 2, -a / 2]),
            v1=np.array([s3 * a, 0.0]),
            v2=np.array([-s3 * a / 2, 3 * a / 2]),
            v3=np.array([-s3 * a / 2, -3 * a / 2]),
            b1=np.array([0.0, 4 * np.pi / (3 * a)]),
            b2=np.array([2 * np.pi / (s3 * a), -2 * np.pi / (3 * a)]),
            K=np.array([4 * np.pi / (3 * s3 * a), 0.0]),
            Kp=np.array([-4 * np.pi / (3 * s3 * a), 0.0]),
        )

    @property
    def nn_vectors(self) -> np.ndarray:
        return np.stack([self.e1, self.e2, self.e3])

    @property
    def nnn_vectors(self) -> np.ndarray:
        return np.stack([self.v1, self.v2, self.v3])

    @property
    def reciprocal_basis(self) -> np.ndarray:
        """Columns are b1 and b2."""
        return np.stack([self.b1, self.b2], axis=1)


DEFAULT_GEOMETRY = LatticeGeometry.with_scale(1.0)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Couplings of the model: NN hopping t, NNN hopping tp, flux phase phi."""

    t: float = 1.0
    tp: float = 0.1
    phi: float = np.pi / 2
    geometry: LatticeGeometry = field(default=DEFAULT_GEOMETRY)

    def __post_init__(self) -> None:
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")
        if self.tp < 0:
            raise ValueError(f"tp must be non-negative, got {self.tp}")
        if not (-2 * np.pi < self.phi <= 2 * np.pi):
            raise ValueError(f"phi must lie in (-2pi, 2pi], got {self.phi}")

    @property
    def gap_tol(self) -> float:
        """Below this gap the eigenvector gauge is treated as undefined."""
        return 1e-9 * self.t


@dataclass(frozen=True)
class BlochComponents:
    """Pauli decomposition of H(k) at a single momentum."""

    h0: float
    hx: float
    hy: float
    hz: float


@dataclass(frozen=True, eq=False)
class BandEigensystem:
    """Energies and gauge-fixed eigenvectors of both bands at one momentum."""

    k: np.ndarray
    e_lower: float
    e_upper: float
    u_lower: np.ndarray
    u_upper: np.ndarray

    @property
    def gap(self) -> float:
        return self.e_upper - self.e_lower


def bloch_fields(kpts: np.ndarray, p: ModelParams) -> tuple[np.ndarray, ...]:
    """Vectorized Pauli components over an (..., 2) array of momenta.

    Returns (h0, hx, hy, hz), each shaped like ``kpts`` without the last axis.
    """
    kpts = np.asarray(kpts, dtype=float)
    g = p.geometry
    ke = kpts @ g.nn_vectors.T
    kv = kpts @ g.nnn_vectors.T
    h0 = -2 * p.tp * np.cos(p.phi) * np.cos(kv).sum(axis=-1)
    hx = -p.t * np.cos(ke).sum(axis=-1)
    hy = -p.t * np.sin(ke).sum(axis=-1)
    hz = -2 * p.tp * np.sin(p.phi) * np.sin(kv).sum(axis=-1)
    return h0, hx, hy, hz


def bloch_components(k: np.ndarray, p: ModelParams) -> BlochComponents:
    """Pauli components of H at a single momentum ``k``."""
    h0, hx, hy, hz = bloch_fields(np.asarray(k, dtype=float), p)
    return BlochComponents(float(h0), float(hx), float(hy), float(hz))


def hamiltonian(k: np.ndarray, p: ModelParams) -> np.ndarray:
    """The 2x2 Bloch Hamiltonian at ``k``."""
    c = bloch_components(k, p)
    return np.array(
        [
            [c.h0 + c.hz, c.hx - 1j * c.hy],
            [c.hx + 1j * c.hy, c.h0 - c.hz],
        ]
    )


def _gauge_fix(states: np.ndarray) -> np.ndarray:
    """Rotate each state so its largest-modulus component is real positive.

    Ties go to the first component.  ``states`` has shape (..., 2).
    """
    mags = np.abs(states)
    idx = (mags[..., 1] > mags[..., 0]).astype(int)
    comp = np.take_along_axis(states, idx[..., None], axis=-1)[..., 0]
    return states * np.conj(comp / np.abs(comp))[..., None]


def band_states(
    kpts: np.ndarray,
    p: ModelParams,
    band: str = "lower",
    gauge_fn: GaugeFn = None,
) -> np.ndarray:
    """Gauge-fixed Bloch eigenvectors for one band, vectorized over momenta.

    The lower-band vector is assembled from the branch-stable closed forms

        (hz - |h|, hx + i hy)        where hz <= 0,
        (-(hx - i hy), hz + |h|)     where hz > 0,

    which never divide by a small quantity on a gapped set, then normalized
    and gauge fixed.  The upper band is the orthogonal complement, gauge
    fixed independently.

    Args:
        kpts: (..., 2) momenta.
        p: model couplings.
        band: "lower" or "upper".
        gauge_fn: test instrumentation; maps the momentum array to one phase
            per point and multiplies each state by exp(i theta).  Every
            reported geometric quantity must be unchanged by any choice.

    Raises:
        GaplessPoint: if any requested momentum has gap below ``p.gap_tol``.
    """
    if band not in ("lower", "upper"):
        raise ValueError(f"band must be 'lower' or 'upper', got {band!r}")
    kpts = np.asarray(kpts, dtype=float)
    _, hx, hy, hz = bloch_fields(kpts, p)
    n = np.sqrt(hx * hx + hy * hy + hz * hz)
    if np.any(2 * n < p.gap_tol):
        bad = np.asarray(kpts)[2 * n < p.gap_tol]
        raise GaplessPoint(f"gap below {p.gap_tol:g} at k={bad[0]}")
    u = np.empty(np.shape(hx) + (2,), dtype=complex)
    use_a = hz <= 0
    u[..., 0] = np.where(use_a, hz - n, -(hx - 1j * hy))
    u[..., 1] = np.where(use_a, hx + 1j * hy, hz + n)
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    if band == "upper":
        u = np.stack([-np.conj(u[..., 1]), np.conj(u[..., 0])], axis=-1)
    u = _gauge_fix(u)
    if gauge_fn is not None:
        u = u * np.exp(1j * np.asarray(gauge_fn(kpts)))[..., None]
    return u


def band_energies(kpts: np.ndarray, p: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """(e_lower, e_upper) arrays over an (..., 2) momentum array."""
    h0, hx, hy, hz = bloch_fields(kpts, p)
    n = np.sqrt(hx * hx + hy * hy + hz * hz)
    return h0 - n, h0 + n


def eigensystem(k: np.ndarray, p: ModelParams) -> BandEigensystem:
    """Diagonalize H(k) with the deterministic gauge.

    Raises:
        GaplessPoint: if the gap at ``k`` is below ``p.gap_tol``.
    """
    k = np.asarray(k, dtype=float)
    e_lo, e_up = band_energies(k, p)
    u_lo = band_states(k[None, :], p, "lower")[0]
    u_up = band_states(k[None, :], p, "upper")[0]
    return BandEigensystem(
        k=k,
        e_lower=float(e_lo),
        e_upper=float(e_up),
        u_lower=u_lo,
        u_upper=u_up,
    )


def reciprocal_coefficients(
    G: np.ndarray, geom: LatticeGeometry = DEFAULT_GEOMETRY
) -> np.ndarray:
    """Coefficients (m, n) with G = m b1 + n b2, not necessarily integer."""
    return np.linalg.solve(geom.reciprocal_basis, np.asarray(G, dtype=float))


def boundary_phase(
    G: np.ndarray, geom: LatticeGeometry = DEFAULT_GEOMETRY, tol: float = 1e-9
) -> float:
    """Sublattice matching phase chi(G) = G . e1 mod 2pi.

    Eigenvectors at reciprocal-equivalent momenta satisfy
    u(k + G) = exp(i alpha) V u(k) with V = diag(1, exp(i chi)); this is the
    phase every cross-boundary overlap must be corrected by.

    Raises:
        NotReciprocal: if G is not an integer combination of b1, b2
            within ``tol``.
    """
    coeff = reciprocal_coefficients(G, geom)
    if np.max(np.abs(coeff - np.round(coeff))) > tol:
        raise NotReciprocal(f"{np.asarray(G)} is not on the reciprocal lattice")
    return float(np.mod(np.dot(np.asarray(G, dtype=float), geom.e1), 2 * np.pi))


def boundary_matrix(
    G: np.ndarray, geom: LatticeGeometry = DEFAULT_GEOMETRY
) -> np.ndarray:
    """The boundary unitary V(G) = diag(1, exp(i chi(G)))."""
    chi = boundary_phase(G, geom)
    return np.diag([1.0, np.exp(1j * chi)]).astype(complex)


def sublattice_matching(
    dk: np.ndarray, geom: LatticeGeometry = DEFAULT_GEOMETRY
) -> np.ndarray:
    """Diagonal of the continuous matching unitary W(dk) = diag(1, e^{i dk.e1}).

    W agrees with the boundary unitary V on reciprocal vectors and extends it
    continuously to arbitrary momentum differences; it is what the physical
    recombination overlap of two Bloch states at momenta k and k + dk picks
    up from the sublattice offsets.
    """
    return np.array([1.0, np.exp(1j * np.dot(np.asarray(dk, dtype=float), geom.e1))])


def band_gap_min(p: ModelParams, n: int = 64, refine: bool = True) -> float:
    """Minimum direct band gap over the BZ.

    Scans an n x n grid in fractional reciprocal coordinates and, when
    ``refine`` is set, polishes the best grid point with a local search.
    For this model the minimum sits at K or K' and equals
    2 * 3*sqrt(3) * tp * |sin phi|.
    """
    if n < 16:
        raise ValueError(f"grid size must be at least 16, got {n}")
    fracs = np.arange(n) / n
    f1, f2 = np.meshgrid(fracs, fracs, indexing="ij")
    kpts = f1[..., None] * p.geometry.b1 + f2[..., None] * p.geometry.b2
    e_lo, e_up = band_energies(kpts, p)
    gaps = e_up - e_lo
    i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
    best = float(gaps[i, j])
    if not refine:
        return best

    def objective(k):
        lo, up = band_energies(np.asarray(k), p)
        return float(up - lo)

    res = minimize(
        objective,
        kpts[i, j],
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400},
    )
    return float(min(best, res.fun))


def high_symmetry_path(
    geom: LatticeGeometry = DEFAULT_GEOMETRY, points_per_segment: int = 60
) -> tuple[np.ndarray, list[tuple[int, str]]]:
    """Sampled Gamma-K-M-K'-Gamma path for band-structure output.

    Returns the (N, 2) point array and a list of (index, label) markers.
    M is the zone-edge midpoint b1 / 2.
    """
    gamma = np.zeros(2)
    m_point = geom.b1 / 2
    corners = [gamma, geom.K, m_point, geom.Kp, gamma]
    labels = ["Gamma", "K", "M", "Kp", "Gamma"]
    pts: list[np.ndarray] = []
    markers: list[tuple[int, str]] = []
    for seg_idx in range(len(corners) - 1):
        markers.append((len(pts), labels[seg_idx]))
        a, b = corners[seg_idx], corners[seg_idx + 1]
        frac = np.linspace(0.0, 1.0, points_per_segment, endpoint=False)
        pts.extend(a + f * (b - a) for f in frac)
    markers.append((len(pts), labels[-1]))
    pts.append(gamma)
    return np.array(pts), markers
