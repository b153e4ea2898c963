"""Momentum-space topology oracles: curvature grids, Chern numbers, phases.

Conventions, fixed once and used by every routine here and downstream:

* Transport link: the discrete link from point k_j to k_{j+1} is
  ``<u(k_{j+1}) | u(k_j)>``.  Products of transport links around a closed
  circuit are gauge invariant.
* Cross-boundary matching: whenever a circuit closes through a reciprocal
  vector G, the wrap link compares the final state against ``V(G) u(k_b)``
  with V the sublattice boundary unitary from :mod:`chernscope.lattice`.
* Grid orientation: curvature grids and plaquette circuits follow the
  reciprocal basis (b1, b2).  With this traversal the lower band of the
  model at phi = pi/2 carries total flux +2pi (Chern number +1), i.e.
  positive enclosed flux yields a positive phase.  All loop and open-path
  phases reported by this module share that orientation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    GaplessPoint,
    NoClosure,
    NotQuantized,
    NotReciprocal,
    PlaquetteSaturated,
)
from .lattice import (
    GaugeFn,
    ModelParams,
    band_gap_min,
    band_states,
    boundary_matrix,
    boundary_phase,
    reciprocal_coefficients,
)

__all__ = [
    "KPath",
    "BerryField",
    "ChernResult",
    "berry_curvature_fhs",
    "chern_number",
    "berry_phase_loop",
    "noncyclic_zak",
    "connection_integral",
    "chern_from_zak",
]


@dataclass(frozen=True, eq=False)
class KPath:
    """An ordered, discretized momentum-space trajectory.

    ``closure_G`` marks a path whose endpoints are reciprocal-equivalent:
    k_e - k_b = closure_G.  A path with ``closed=True`` and no closure_G
    must literally return to its first point.
    """

    points: np.ndarray
    closed: bool = False
    closure_G: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("a path needs at least two 2-vector points")
        object.__setattr__(self, "points", pts)
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        degenerate = np.all(steps == 0.0)
        if np.any(steps == 0.0) and not degenerate:
            raise ValueError("consecutive path points must be distinct")
        if self.closure_G is not None:
            g = np.asarray(self.closure_G, dtype=float)
            object.__setattr__(self, "closure_G", g)
            if np.max(np.abs(self.k_e - self.k_b - g)) > 1e-9:
                raise ValueError("closure_G does not connect the endpoints")
        elif self.closed and np.max(np.abs(self.k_e - self.k_b)) > 1e-12:
            raise ValueError("closed path must return to its first point")

    @property
    def k_b(self) -> np.ndarray:
        return self.points[0]

    @property
    def k_e(self) -> np.ndarray:
        return self.points[-1]

    @classmethod
    def line(cls, a: np.ndarray, b: np.ndarray, n: int) -> "KPath":
        """Straight segment from ``a`` to ``b`` sampled at ``n`` points."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        frac = np.linspace(0.0, 1.0, n)
        return cls(points=a + frac[:, None] * (b - a))

    @classmethod
    def circle(cls, center: np.ndarray, radius: float, n: int) -> "KPath":
        """Closed counterclockwise circle sampled at ``n`` points plus the
        repeated start."""
        theta = np.linspace(0.0, 2 * np.pi, n + 1)
        pts = np.asarray(center, dtype=float) + radius * np.stack(
            [np.cos(theta), np.sin(theta)], axis=1
        )
        pts[-1] = pts[0]
        return cls(points=pts, closed=True)

    @classmethod
    def concatenate(cls, *paths: "KPath", **kwargs) -> "KPath":
        """Join paths whose endpoints coincide, dropping duplicate joints."""
        pts = [paths[0].points]
        for prev, nxt in zip(paths, paths[1:]):
            if np.max(np.abs(prev.k_e - nxt.k_b)) > 1e-9:
                raise ValueError("paths do not join end to start")
            pts.append(nxt.points[1:])
        return cls(points=np.concatenate(pts), **kwargs)


@dataclass(frozen=True, eq=False)
class BerryField:
    """Plaquette Berry fluxes over the BZ torus spanned by (b1, b2)."""

    n: int
    plaquette_flux: np.ndarray
    total: float

    @property
    def chern_estimate(self) -> float:
        return self.total / (2 * np.pi)


@dataclass(frozen=True)
class ChernResult:
    value: int
    residual: float
    n: int


def _require_gapped(p: ModelParams) -> None:
    if band_gap_min(p, n=32) < p.gap_tol:
        raise GaplessPoint(
            f"band gap closes for tp={p.tp}, phi={p.phi}; topology undefined"
        )


def berry_curvature_fhs(
    p: ModelParams, n: int, band: str = "lower", gauge_fn: GaugeFn = None
) -> BerryField:
    """Lattice field strength on an n x n grid (Fukui-Hatsugai-Suzuki).

    Each plaquette flux is the argument of the product of its four transport
    links taken in the (+b1, +b2, -b1, -b2) order, with boundary-matched
    states beyond the zone edge.  The result is gauge invariant plaquette by
    plaquette, and the total is 2 pi times an integer for any gapped model.

    Raises:
        GaplessPoint: if the model is gapless.
        PlaquetteSaturated: if any single plaquette reaches |flux| >= pi,
            meaning the grid is too coarse to resolve the curvature.
    """
    if n < 6:
        raise ValueError(f"grid size must be at least 6, got {n}")
    _require_gapped(p)
    g = p.geometry
    fracs = np.arange(n) / n
    f1, f2 = np.meshgrid(fracs, fracs, indexing="ij")
    kpts = f1[..., None] * g.b1 + f2[..., None] * g.b2
    u = band_states(kpts, p, band, gauge_fn)

    ue = np.empty((n + 1, n + 1, 2), dtype=complex)
    ue[:n, :n] = u
    v1 = np.exp(1j * boundary_phase(g.b1, g))
    v2 = np.exp(1j * boundary_phase(g.b2, g))
    ue[n, :n] = u[0, :] * np.array([1.0, v1])
    ue[:n, n] = u[:, 0] * np.array([1.0, v2])
    ue[n, n] = u[0, 0] * np.array([1.0, v1 * v2])

    def link(dest: np.ndarray, src: np.ndarray) -> np.ndarray:
        ov = np.einsum("...c,...c->...", np.conj(dest), src)
        return ov / np.abs(ov)

    l1 = link(ue[1:, :-1], ue[:-1, :-1])
    l2 = link(ue[1:, 1:], ue[1:, :-1])
    l3 = link(ue[:-1, 1:], ue[1:, 1:])
    l4 = link(ue[:-1, :-1], ue[:-1, 1:])
    flux = np.angle(l1 * l2 * l3 * l4)
    if np.any(np.abs(flux) >= np.pi - 1e-9):
        raise PlaquetteSaturated(
            f"plaquette flux reached pi on the {n}x{n} grid; refine the grid"
        )
    total = float(np.sum(flux))
    return BerryField(n=n, plaquette_flux=flux, total=total)


def chern_number(p: ModelParams, n: int = 60) -> ChernResult:
    """Chern number of the lower band from the lattice field strength.

    Raises:
        GaplessPoint: if the model is gapless (e.g. phi = 0).
        NotQuantized: if the grid total strays more than 1e-3 from an
            integer multiple of 2 pi.
    """
    fieldgrid = berry_curvature_fhs(p, n, "lower")
    estimate = fieldgrid.chern_estimate
    value = int(np.round(estimate))
    residual = float(abs(estimate - value))
    if residual > 1e-3:
        raise NotQuantized(
            f"total flux / 2pi = {estimate} is not integer within 1e-3"
        )
    return ChernResult(value=value, residual=residual, n=n)


def _transport_product(u: np.ndarray) -> complex:
    """Product of normalized transport links along a state sequence."""
    links = np.einsum("jc,jc->j", np.conj(u[1:]), u[:-1])
    return complex(np.prod(links / np.abs(links)))


def berry_phase_loop(
    p: ModelParams, path: KPath, band: str = "lower", gauge_fn: GaugeFn = None
) -> float:
    """Berry phase of a closed loop, in (-pi, pi].

    The loop either returns to its first point literally or closes through
    ``closure_G``, in which case the wrap link is boundary matched.
    """
    if not path.closed and path.closure_G is None:
        raise ValueError("berry_phase_loop needs a closed path")
    u = band_states(path.points, p, band, gauge_fn)
    prod = _transport_product(u)
    if path.closure_G is not None:
        v = boundary_matrix(path.closure_G, p.geometry)
        wrap = np.vdot(v @ u[0], u[-1])
        prod *= wrap / abs(wrap)
    return float(np.angle(prod))


def noncyclic_zak(
    p: ModelParams,
    path: KPath,
    band: str = "lower",
    geodesic_closure: bool = False,
    gauge_fn: GaugeFn = None,
) -> float:
    """Gauge-invariant open-path (Pancharatnam) Zak phase, in (-pi, pi].

    The value is the argument of the transport-link product along the path
    times the boundary-matched wrap link ``<V(G) u(k_b) | u(k_e)>`` with
    G = k_e - k_b.  Written this way every intermediate gauge phase cancels
    telescopically, so the result is exactly gauge invariant for any
    endpoint pair connected by a reciprocal vector.

    If the endpoints are not reciprocal-equivalent, ``geodesic_closure``
    extends the path by a straight segment to the nearest equivalent of
    k_b before wrapping; otherwise NoClosure is raised.
    """
    pts = path.points
    gap_vec = pts[-1] - pts[0]
    try:
        coeff = reciprocal_coefficients(gap_vec, p.geometry)
        if np.max(np.abs(coeff - np.round(coeff))) > 1e-9:
            raise NotReciprocal("endpoints not reciprocal-equivalent")
        g_vec = gap_vec
    except NotReciprocal:
        if not geodesic_closure:
            raise NoClosure(
                "endpoints differ by a non-reciprocal vector; pass "
                "geodesic_closure=True to close along a straight segment"
            ) from None
        coeff = np.round(reciprocal_coefficients(gap_vec, p.geometry))
        g_vec = coeff @ np.stack([p.geometry.b1, p.geometry.b2])
        target = pts[0] + g_vec
        step = float(np.mean(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
        length = float(np.linalg.norm(target - pts[-1]))
        if length > 1e-12:
            nseg = max(2, int(np.ceil(length / max(step, 1e-12))) + 1)
            closing = KPath.line(pts[-1], target, nseg)
            pts = np.concatenate([pts, closing.points[1:]])

    u = band_states(pts, p, band, gauge_fn)
    prod = _transport_product(u)
    v = boundary_matrix(g_vec, p.geometry)
    wrap = np.vdot(v @ u[0], u[-1])
    prod *= wrap / abs(wrap)
    return float(np.angle(prod))


def connection_integral(
    p: ModelParams,
    segment: KPath,
    band: str = "lower",
    include_closure: bool = False,
    gauge_fn: GaugeFn = None,
) -> float:
    """Discretized Berry-connection line integral in the fixed gauge.

    Returns the accumulated sum of Im log <u(k_j) | u(k_{j+1})> along the
    segment, i.e. the straight-trajectory connection term evaluated in the
    module's deterministic gauge.  The plain sum is an unwrapped real value
    and is gauge dependent through the endpoint phases.

    With ``include_closure`` the boundary-matched wrap angle
    arg <u(k_e) | V(G) u(k_b)> (G = k_e - k_b, which must be reciprocal) is
    added, making the result the gauge-invariant closed counterpart that
    enters the exact decomposition

        noncyclic_zak(path) = enclosed flux - connection(segment, closed)

    for any path sharing the segment's endpoints.
    """
    pts = segment.points
    if np.all(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0.0):
        return 0.0
    u = band_states(pts, p, band, gauge_fn)
    links = np.einsum("jc,jc->j", np.conj(u[:-1]), u[1:])
    value = float(np.sum(np.angle(links)))
    if include_closure:
        v = boundary_matrix(pts[-1] - pts[0], p.geometry)
        value += float(np.angle(np.vdot(u[-1], v @ u[0])))
    return value


def chern_from_zak(phi_i: float, phi_ii: float) -> float:
    """Chern-number estimate (phi_I + phi_II) / pi from two site phases."""
    return (phi_i + phi_ii) / np.pi
