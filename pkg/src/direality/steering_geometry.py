"""Planar and Bloch-ball geometry for steering tests.

Conventions: the observable pair is put in the canonical frame ``A = X`` and
``B = X cos(theta) + Y sin(theta)`` with ``theta`` in (0, pi).  Rectangles are
stored as the intersection of two orthogonal slabs ``|n_k . x| <= h_k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateEllipsoid, ParallelObservables
from .qubit_core import TOL, TwoQubitState

__all__ = [
    "Ellipsoid",
    "PlaneEllipse",
    "RectangleRegion",
    "ChordResult",
    "qubit_range_ellipse",
    "steering_ellipsoid",
    "steered_points",
    "project_to_AB_plane",
    "rect_R",
    "rect_R_tilde",
    "rect_I",
    "side_lengths",
    "necessary_c_window",
    "fibonacci_sphere",
    "corollary2_chord_test",
    "center_in_I_test",
    "canonical_observables",
]


def _sym_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True)
class Ellipsoid:
    """``{center + Q^{1/2} u : |u| <= 1}``; ``rank`` is the numerical rank of Q."""

    center: np.ndarray
    shape: np.ndarray
    rank: int

    def semi_axes(self) -> np.ndarray:
        return np.sqrt(np.clip(np.linalg.eigvalsh(self.shape), 0.0, None))[::-1]

    def contains(self, r: Any, tol: float = 1e-7) -> bool:
        """Membership, handling rank-deficient shapes through the eigenbasis."""
        d = np.asarray(r, dtype=float) - self.center
        w, v = np.linalg.eigh(self.shape)
        coords = v.T @ d
        big = w > TOL
        if np.any(np.abs(coords[~big]) > tol):
            return False
        return float(np.sum(coords[big] ** 2 / w[big])) <= 1.0 + tol

    def boundary_distance(self, r: Any) -> float:
        """Approximate distance of a contained point from the surface (full-rank only)."""
        d = np.asarray(r, dtype=float) - self.center
        w, v = np.linalg.eigh(self.shape)
        coords = v.T @ d
        q = float(np.sqrt(np.sum(coords**2 / w)))
        return (1.0 - q) * float(np.sqrt(w.min()))

    def to_dict(self) -> dict[str, Any]:
        return {"center": self.center.tolist(), "shape": self.shape.tolist(), "rank": self.rank}


@dataclass(frozen=True)
class PlaneEllipse:
    """2-D ellipse ``{center + S^{1/2} u : |u| <= 1}``."""

    center: np.ndarray
    shape: np.ndarray

    def semi_axes(self) -> tuple[float, float]:
        w = np.clip(np.linalg.eigvalsh(self.shape), 0.0, None)
        return float(np.sqrt(w[1])), float(np.sqrt(w[0]))

    def orientation(self) -> float:
        """Angle of the major axis in [0, pi)."""
        _, v = np.linalg.eigh(self.shape)
        major = v[:, 1]
        return float(np.arctan2(major[1], major[0]) % np.pi)

    def contains(self, p: Any, tol: float = TOL) -> bool:
        d = np.asarray(p, dtype=float) - self.center
        return float(d @ np.linalg.solve(self.shape, d)) <= 1.0 + tol

    def support(self, n: Any) -> float:
        """``max_{x in ellipse} n . x``."""
        n = np.asarray(n, dtype=float)
        return float(n @ self.center + np.sqrt(max(n @ self.shape @ n, 0.0)))

    def boundary(self, n_points: int = 256) -> np.ndarray:
        t = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
        circle = np.stack([np.cos(t), np.sin(t)])
        return (self.center[:, None] + _sym_sqrt(self.shape) @ circle).T

    def to_dict(self) -> dict[str, Any]:
        major, minor = self.semi_axes()
        return {
            "center": self.center.tolist(),
            "shape": self.shape.tolist(),
            "semi_axes": [major, minor],
            "orientation": self.orientation(),
        }


@dataclass(frozen=True)
class RectangleRegion:
    """Centred rectangle ``{x : |normals[k] . x| <= half_widths[k], k = 0, 1}``.

    ``kind`` is one of ``"R"``, ``"R_tilde"``, ``"I"``.  An empty region (the
    ``I`` rectangle when a side length is not below 2) has NaN half-widths.
    """

    kind: str
    c: float
    theta: float | None
    normals: np.ndarray
    half_widths: np.ndarray

    @property
    def empty(self) -> bool:
        return bool(np.any(np.isnan(self.half_widths)))

    def vertices(self) -> np.ndarray:
        n0, n1 = self.normals
        h0, h1 = self.half_widths
        return np.array([h0 * n0 + h1 * n1, h0 * n0 - h1 * n1, -h0 * n0 - h1 * n1, -h0 * n0 + h1 * n1])

    def extents(self) -> np.ndarray:
        """Widths measured along ``normals[0]`` and ``normals[1]``."""
        return 2.0 * self.half_widths

    def contains(self, p: Any, tol: float = TOL) -> bool:
        if self.empty:
            return False
        proj = np.abs(self.normals @ np.asarray(p, dtype=float))
        return bool(np.all(proj <= self.half_widths + tol))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "c": self.c,
            "theta": self.theta,
            "vertices": None if self.empty else self.vertices().tolist(),
        }


def _check_c(c: float) -> None:
    if not -1.0 < c < 1.0:
        raise ValueError(f"c must lie in (-1, 1), got {c}")


def _check_theta(theta: float) -> None:
    if not 0.0 < theta < np.pi:
        raise ValueError(f"theta must lie in (0, pi), got {theta}")


def rect_R(c: float) -> RectangleRegion:
    """``R(c) = {|A+B| <= 1+c, |A-B| <= 1-c}``, vertices ±(1,c), ±(c,1)."""
    _check_c(c)
    s = 1.0 / np.sqrt(2.0)
    normals = np.array([[s, s], [s, -s]])
    return RectangleRegion("R", c, None, normals, np.array([(1 + c) * s, (1 - c) * s]))


def side_lengths(c: float, theta: float) -> tuple[float, float]:
    """``(s1, s2)``: widths of R~(c, theta) along theta/2 and theta/2 + pi/2."""
    return (1 + c) / np.cos(theta / 2), (1 - c) / np.sin(theta / 2)


def _frame(theta: float) -> np.ndarray:
    h = theta / 2
    return np.array([[np.cos(h), np.sin(h)], [-np.sin(h), np.cos(h)]])


def rect_R_tilde(c: float, theta: float) -> RectangleRegion:
    """R(c) pulled back to the XY plane through the canonical-frame map."""
    _check_c(c)
    _check_theta(theta)
    s1, s2 = side_lengths(c, theta)
    return RectangleRegion("R_tilde", c, theta, _frame(theta), np.array([s1 / 2, s2 / 2]))


def rect_I(c: float, theta: float) -> RectangleRegion:
    """Region the projected state centre must occupy for both chords to exist.

    A chord crossing the two sides normal to theta/2 passes through the part of
    the unit disc with ``|v| < sqrt(4 - s1^2)/2``; one crossing the other pair
    passes where ``|u| < sqrt(4 - s2^2)/2``.  Hence the width along theta/2 is
    ``sqrt(4 - s2^2)`` and along theta/2 + pi/2 it is ``sqrt(4 - s1^2)``.
    """
    _check_c(c)
    _check_theta(theta)
    s1, s2 = side_lengths(c, theta)
    if s1 >= 2.0 or s2 >= 2.0:
        hw = np.array([np.nan, np.nan])
    else:
        hw = np.array([np.sqrt(4 - s2**2) / 2, np.sqrt(4 - s1**2) / 2])
    return RectangleRegion("I", c, theta, _frame(theta), hw)


def necessary_c_window(theta: float) -> tuple[float, float]:
    """Open interval of c for which both side lengths of R~(c, theta) are below 2."""
    return 1.0 - 2.0 * np.sin(theta / 2), 2.0 * np.cos(theta / 2) - 1.0


def _unit_pair(a: Any, b: Any) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for name, v in (("a", a), ("b", b)):
        if abs(np.linalg.norm(v) - 1.0) > TOL:
            raise ValueError(f"{name} must be a unit vector")
    if abs(float(a @ b)) >= 1.0 - TOL:
        raise ParallelObservables(f"|a.b| = {abs(float(a @ b)):.12g} is too close to 1")
    return a, b


def qubit_range_ellipse(a: Any, b: Any) -> PlaneEllipse:
    """Range of (<A>, <B>) over the Bloch ball for ``A = σ·a``, ``B = σ·b``."""
    a, b = _unit_pair(a, b)
    ab = float(a @ b)
    return PlaneEllipse(np.zeros(2), np.array([[1.0, ab], [ab, 1.0]]))


def project_to_AB_plane(obj: Any, a: Any, b: Any) -> Any:
    """Map a Bloch point ``r`` to ``(a.r, b.r)``; ellipsoids map to plane ellipses."""
    P = np.vstack([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
    if isinstance(obj, Ellipsoid):
        return PlaneEllipse(P @ obj.center, P @ obj.shape @ P.T)
    return P @ np.asarray(obj, dtype=float)


def steering_ellipsoid(state: TwoQubitState) -> Ellipsoid:
    """Set of Bloch vectors of the first qubit reachable by steering from the second."""
    a, b, T = state.a, state.b, state.T
    bb = float(b @ b)
    if bb >= (1.0 - TOL) ** 2:
        raise DegenerateEllipsoid("second-qubit marginal is pure; ellipsoid collapses to a point")
    k = 1.0 / (1.0 - bb)
    center = k * (a - T @ b)
    M = T - np.outer(a, b)
    Q = k * M @ (np.eye(3) + k * np.outer(b, b)) @ M.T
    Q = 0.5 * (Q + Q.T)
    rank = int(np.sum(np.linalg.eigvalsh(Q) > TOL))
    return Ellipsoid(center, Q, rank)


def steered_points(state: TwoQubitState, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised steering along the rows of ``dirs``.

    Returns ``(p_plus, r_plus, r_minus)``; rows with a vanishing outcome
    probability carry NaN in the corresponding steered vector.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    bm = dirs @ state.b
    Tm = dirs @ state.T.T
    with np.errstate(divide="ignore", invalid="ignore"):
        r_plus = (state.a + Tm) / (1.0 + bm)[:, None]
        r_minus = (state.a - Tm) / (1.0 - bm)[:, None]
    r_plus[(1.0 + bm) < 2 * TOL] = np.nan
    r_minus[(1.0 - bm) < 2 * TOL] = np.nan
    return 0.5 * (1.0 + bm), r_plus, r_minus


def fibonacci_sphere(n: int) -> np.ndarray:
    """Quasi-uniform deterministic grid of ``n`` unit vectors."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    rho = np.sqrt(1.0 - z**2)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def canonical_observables(theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Axes of ``A = X`` and ``B = X cos(theta) + Y sin(theta)``."""
    return np.array([1.0, 0.0, 0.0]), np.array([np.cos(theta), np.sin(theta), 0.0])


@dataclass(frozen=True)
class ChordResult:
    m: np.ndarray
    m_prime: np.ndarray
    ell: float


def _chord_scores(state: TwoQubitState, dirs: np.ndarray, c: float, theta: float) -> tuple[np.ndarray, np.ndarray]:
    ax, bx = canonical_observables(theta)
    _, rp, rm = steered_points(state, dirs)
    Ap, Bp = rp @ ax, rp @ bx
    Am, Bm = rm @ ax, rm @ bx
    g1 = np.minimum(Ap + Bp - 1 - c, -Am - Bm - 1 - c)
    g2 = np.minimum(Ap - Bp - 1 + c, -Am + Bm - 1 + c)
    g1 = np.where(np.isnan(g1), -np.inf, g1)
    g2 = np.where(np.isnan(g2), -np.inf, g2)
    return g1, g2


def _angles(v: np.ndarray) -> np.ndarray:
    return np.array([np.arccos(np.clip(v[2], -1, 1)), np.arctan2(v[1], v[0])])


def _direction(x: np.ndarray) -> np.ndarray:
    t, p = x
    return np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])


def corollary2_chord_test(
    state: TwoQubitState,
    c: float,
    theta: float,
    n_grid: int = 4096,
    refine: bool = True,
) -> ChordResult | None:
    """Search for steering directions whose chords straddle opposite sides of R~(c, theta).

    Chord 1 (outcomes of ``m``) must have its endpoints beyond the two sides
    normal to theta/2, chord 2 (outcomes of ``m_prime``) beyond the other two.
    Returns ``None`` when the best directions found do not achieve this.
    """
    _check_c(c)
    _check_theta(theta)
    if float(state.b @ state.b) >= (1.0 - TOL) ** 2:
        raise DegenerateEllipsoid("second-qubit marginal is pure; no steering")
    dirs = fibonacci_sphere(n_grid)
    g1, g2 = _chord_scores(state, dirs, c, theta)
    best = []
    for k, g in enumerate((g1, g2)):
        i = int(np.argmax(g))
        v, val = dirs[i], float(g[i])
        if refine and np.isfinite(val):
            f = lambda x, k=k: -float(_chord_scores(state, _direction(x)[None, :], c, theta)[k][0])
            res = minimize(f, _angles(v), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12})
            if -res.fun > val:
                v, val = _direction(res.x), float(-res.fun)
        best.append((v, val))
    (m, v1), (mp, v2) = best
    ell = min(v1, v2)
    if ell <= 0.0:
        return None
    return ChordResult(m, mp, ell)


def center_in_I_test(state: TwoQubitState, c: float, theta: float) -> bool:
    """Whether the XY projection of the first-qubit Bloch vector lies in I(c, theta)."""
    return rect_I(c, theta).contains(state.a[:2], tol=0.0)
