"""Evaluators for the joint-reality inequalities of the CHSH scenario.

Subensembles are labelled ``E+``, ``E-`` (outcomes of the steering measurement
M) and ``E'+``, ``E'-`` (outcomes of M').  The four are expected to sit around
the (<A>, <B>) plane in the clockwise order E+, E'+, E-, E'-.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from dataclasses import dataclass, replace
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import NotConvexQuadrilateral, ParallelObservables, SingularSystem
from .qubit_core import TOL, QubitObservable, expectation, unit

SIGN_CHOICES: tuple[tuple[int, int, int, int], ...] = tuple(
    s for s in itertools.product((1, -1), repeat=4) if s[0] * s[1] * s[2] * s[3] == -1
)
C_GRID = np.round(np.arange(-999, 1000) * 1e-3, 12)


@dataclass(frozen=True)
class SubensembleStats:
    """Conditional averages of A and B over one subensemble.

    ``n_a`` and ``n_b`` are the numbers of systems on which A and B were
    measured when the statistics are empirical; they drive standard errors.
    """

    mean_a: float
    mean_b: float
    mean_ab: float | None = None
    count: int | None = None
    n_a: int | None = None
    n_b: int | None = None

    @property
    def point(self) -> np.ndarray:
        return np.array([self.mean_a, self.mean_b])

    def se_a(self) -> float:
        return _binomial_se(self.mean_a, self.n_a)

    def se_b(self) -> float:
        return _binomial_se(self.mean_b, self.n_b)

    def ab_within_bounds(self, tol: float = TOL) -> bool:
        if self.mean_ab is None:
            return True
        lo, hi = ab_bounds(self.mean_a, self.mean_b)
        return lo - tol <= self.mean_ab <= hi + tol

    def to_dict(self) -> dict[str, Any]:
        d = {"mean_a": self.mean_a, "mean_b": self.mean_b}
        for k in ("mean_ab", "count", "n_a", "n_b"):
            if getattr(self, k) is not None:
                d[k] = getattr(self, k)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SubensembleStats":
        return cls(**{k: d[k] for k in ("mean_a", "mean_b", "mean_ab", "count", "n_a", "n_b") if k in d})


def _binomial_se(mean: float, n: int | None) -> float:
    if n is None or n == 0:
        return math.nan
    return math.sqrt(max(1.0 - mean * mean, 0.0) / n)


@dataclass(frozen=True)
class SteeringQuad:
    e_plus: SubensembleStats
    e_minus: SubensembleStats
    e_prime_plus: SubensembleStats
    e_prime_minus: SubensembleStats
    w_plus: float | None = None
    w_prime_plus: float | None = None

    @property
    def has_weights(self) -> bool:
        return self.w_plus is not None and self.w_prime_plus is not None

    @property
    def w_minus(self) -> float:
        return 1.0 - self._need("w_plus")

    @property
    def w_prime_minus(self) -> float:
        return 1.0 - self._need("w_prime_plus")

    def _need(self, name: str) -> float:
        v = getattr(self, name)
        if v is None:
            raise ValueError(f"{name} is required but missing")
        return float(v)

    def members(self) -> tuple[SubensembleStats, ...]:
        return (self.e_plus, self.e_minus, self.e_prime_plus, self.e_prime_minus)

    def points(self) -> np.ndarray:
        """(<A>, <B>) rows in the order E+, E-, E'+, E'-."""
        return np.array([e.point for e in self.members()])

    def clockwise_points(self) -> np.ndarray:
        """Rows in the perimeter order E+, E'+, E-, E'-."""
        p = self.points()
        return p[[0, 2, 1, 3]]

    def with_weights(self, w_plus: float, w_prime_plus: float) -> "SteeringQuad":
        return replace(self, w_plus=float(w_plus), w_prime_plus=float(w_prime_plus))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "e_plus": self.e_plus.to_dict(),
            "e_minus": self.e_minus.to_dict(),
            "e_prime_plus": self.e_prime_plus.to_dict(),
            "e_prime_minus": self.e_prime_minus.to_dict(),
        }
        if self.w_plus is not None:
            d["w_plus"] = self.w_plus
        if self.w_prime_plus is not None:
            d["w_prime_plus"] = self.w_prime_plus
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SteeringQuad":
        return cls(
            SubensembleStats.from_dict(d["e_plus"]),
            SubensembleStats.from_dict(d["e_minus"]),
            SubensembleStats.from_dict(d["e_prime_plus"]),
            SubensembleStats.from_dict(d["e_prime_minus"]),
            d.get("w_plus"),
            d.get("w_prime_plus"),
        )

    @classmethod
    def from_points(cls, pts: Any, w_plus: float | None = None, w_prime_plus: float | None = None) -> "SteeringQuad":
        """Build from a 4x2 array ordered E+, E-, E'+, E'-."""
        pts = np.asarray(pts, dtype=float).reshape(4, 2)
        return cls(*(SubensembleStats(float(x), float(y)) for x, y in pts), w_plus, w_prime_plus)


@dataclass(frozen=True)
class CorrelationTable:
    """Statistics of the CHSH scenario: A or B on one side, M or M' on the other."""

    mean_a: float
    mean_b: float
    corr_am: float
    corr_bm: float
    corr_amp: float
    corr_bmp: float
    p_m: float
    p_mp: float

    def __post_init__(self) -> None:
        for k in ("mean_a", "mean_b", "corr_am", "corr_bm", "corr_amp", "corr_bmp"):
            v = getattr(self, k)
            if not -1.0 - TOL <= v <= 1.0 + TOL:
                raise ValueError(f"{k}={v} lies outside [-1, 1]")
        for k in ("p_m", "p_mp"):
            v = getattr(self, k)
            if not -TOL <= v <= 1.0 + TOL:
                raise ValueError(f"{k}={v} lies outside [0, 1]")

    @property
    def mean_m(self) -> float:
        return 2.0 * self.p_m - 1.0

    @property
    def mean_mp(self) -> float:
        return 2.0 * self.p_mp - 1.0

    def correlators(self) -> np.ndarray:
        """``[<AM>, <BM>, <AM'>, <BM'>]``."""
        return np.array([self.corr_am, self.corr_bm, self.corr_amp, self.corr_bmp])

    def to_quad(self) -> SteeringQuad:
        """Conditional averages implied by the table, with the steering probabilities as weights."""

        def cond(mean: float, corr: float, p: float, sign: int) -> float:
            return (mean + sign * corr) / (2.0 * p) if p > 0 else math.nan

        pm, qm = self.p_m, 1.0 - self.p_m
        pp, qp = self.p_mp, 1.0 - self.p_mp
        return SteeringQuad(
            SubensembleStats(cond(self.mean_a, self.corr_am, pm, 1), cond(self.mean_b, self.corr_bm, pm, 1)),
            SubensembleStats(cond(self.mean_a, self.corr_am, qm, -1), cond(self.mean_b, self.corr_bm, qm, -1)),
            SubensembleStats(cond(self.mean_a, self.corr_amp, pp, 1), cond(self.mean_b, self.corr_bmp, pp, 1)),
            SubensembleStats(cond(self.mean_a, self.corr_amp, qp, -1), cond(self.mean_b, self.corr_bmp, qp, -1)),
            self.p_m,
            self.p_mp,
        )

    @classmethod
    def from_quad(cls, quad: SteeringQuad) -> "CorrelationTable":
        """Inverse of :meth:`to_quad`; requires weights and no-signalling singles."""
        wp, wm = quad._need("w_plus"), quad.w_minus
        vp, vm = quad._need("w_prime_plus"), quad.w_prime_minus
        ep, em, fp, fm = quad.members()

        def wx(w: float, x: float) -> float:
            # a subensemble that never occurs contributes nothing, even if its averages are undefined
            return 0.0 if w == 0.0 else w * x

        return cls(
            mean_a=wx(wp, ep.mean_a) + wx(wm, em.mean_a),
            mean_b=wx(wp, ep.mean_b) + wx(wm, em.mean_b),
            corr_am=wx(wp, ep.mean_a) - wx(wm, em.mean_a),
            corr_bm=wx(wp, ep.mean_b) - wx(wm, em.mean_b),
            corr_amp=wx(vp, fp.mean_a) - wx(vm, fm.mean_a),
            corr_bmp=wx(vp, fp.mean_b) - wx(vm, fm.mean_b),
            p_m=wp,
            p_mp=vp,
        )

    def relabel_mp(self) -> "CorrelationTable":
        """Swap the outcome labels of M'."""
        return replace(self, corr_amp=-self.corr_amp, corr_bmp=-self.corr_bmp, p_mp=1.0 - self.p_mp)

    def to_dict(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CorrelationTable":
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class WeightSolution:
    delta: float
    delta_prime: float
    condition_number: float

    @property
    def w_plus(self) -> float:
        return 0.5 * (1.0 + self.delta)

    @property
    def w_minus(self) -> float:
        return 0.5 * (1.0 - self.delta)

    @property
    def w_prime_plus(self) -> float:
        return 0.5 * (1.0 + self.delta_prime)

    @property
    def w_prime_minus(self) -> float:
        return 0.5 * (1.0 - self.delta_prime)


# --- positivity geometry -------------------------------------------------


def joint_frequency(mean_a: float, mean_b: float, mean_ab: float, alpha: int, beta: int) -> float:
    """Relative frequency of ``(A, B) = (alpha, beta)`` implied by the three averages."""
    return 0.25 * (1.0 + alpha * mean_a + beta * mean_b + alpha * beta * mean_ab)


def ab_bounds(mean_a: float, mean_b: float) -> tuple[float, float]:
    """Tight range ``[L, U]`` of <AB> compatible with nonnegative joint frequencies."""
    return abs(mean_a + mean_b) - 1.0, 1.0 - abs(mean_a - mean_b)


def mixture_bounds(
    pair: tuple[SubensembleStats, SubensembleStats],
    weights: tuple[float, float],
    orientation: str,
) -> float:
    """Tight bound on <AB> for a two-member mixture.

    ``"sum"`` gives the lower bound, ``"difference"`` the upper bound.
    """
    (e1, e2), (w1, w2) = pair, weights
    if orientation == "sum":
        return w1 * abs(e1.mean_a + e1.mean_b) + w2 * abs(e2.mean_a + e2.mean_b) - 1.0
    if orientation == "difference":
        return 1.0 - w1 * abs(e1.mean_a - e1.mean_b) - w2 * abs(e2.mean_a - e2.mean_b)
    raise ValueError(f"orientation must be 'sum' or 'difference', got {orientation!r}")


def _mixtures(quad: SteeringQuad) -> tuple[float, float, float, float]:
    """``(L_slash, U_slash, L_back, U_back)`` for the two steering mixtures."""
    w = (quad._need("w_plus"), quad.w_minus)
    v = (quad._need("w_prime_plus"), quad.w_prime_minus)
    unprimed = (quad.e_plus, quad.e_minus)
    primed = (quad.e_prime_plus, quad.e_prime_minus)
    return (
        mixture_bounds(unprimed, w, "sum"),
        mixture_bounds(unprimed, w, "difference"),
        mixture_bounds(primed, v, "sum"),
        mixture_bounds(primed, v, "difference"),
    )


def lemma1_lhs(quad: SteeringQuad) -> tuple[float, float]:
    """Left-hand sides of the two weighted inequalities (each must be <= 2)."""
    l_s, u_s, l_b, u_b = _mixtures(quad)
    # L_/ <= U_\  <=>  (L_/ + 1) + (1 - U_\) <= 2, and likewise with roles swapped.
    return (l_s + 1.0) + (1.0 - u_b), (l_b + 1.0) + (1.0 - u_s)


def lemma1_check(quad: SteeringQuad, tol: float = TOL) -> tuple[bool, bool]:
    lhs1, lhs2 = lemma1_lhs(quad)
    return lhs1 <= 2.0 + tol, lhs2 <= 2.0 + tol


def lemma1_completion(quad: SteeringQuad, k: float | None = None) -> tuple[SubensembleStats, ...]:
    """Assign <AB> to each subensemble so both mixtures share the value ``k``.

    ``k`` defaults to the midpoint of the admissible interval.  Raises
    ``ValueError`` when the interval is empty (a pairing inequality fails).
    """
    l_s, u_s, l_b, u_b = _mixtures(quad)
    lo, hi = max(l_s, l_b), min(u_s, u_b)
    if lo > hi + TOL:
        raise ValueError(f"no common <AB>: admissible interval [{lo:.6g}, {hi:.6g}] is empty")
    if k is None:
        k = 0.5 * (lo + hi)
    if not lo - TOL <= k <= hi + TOL:
        raise ValueError(f"k={k} outside [{lo}, {hi}]")
    out = []
    for (e1, e2), (w1, w2), (l, u) in (
        ((quad.e_plus, quad.e_minus), (quad.w_plus, quad.w_minus), (l_s, u_s)),
        ((quad.e_prime_plus, quad.e_prime_minus), (quad.w_prime_plus, quad.w_prime_minus), (l_b, u_b)),
    ):
        t = 0.0 if u - l < TOL else min(max((k - l) / (u - l), 0.0), 1.0)
        for e in (e1, e2):
            lo_e, hi_e = ab_bounds(e.mean_a, e.mean_b)
            out.append(replace(e, mean_ab=lo_e + t * (hi_e - lo_e)))
    return tuple(out)


# --- linear steering inequality -----------------------------------------


def ell_terms(quad: SteeringQuad, c: float | np.ndarray) -> np.ndarray:
    """The four expressions whose minimum is ℓ(c); shape ``(4,) + shape(c)``."""
    c = np.asarray(c, dtype=float)
    ep, em, fp, fm = quad.members()
    return np.stack(
        np.broadcast_arrays(
            ep.mean_a + ep.mean_b - 1.0 - c,
            -em.mean_a - em.mean_b - 1.0 - c,
            fp.mean_a - fp.mean_b - 1.0 + c,
            -fm.mean_a + fm.mean_b - 1.0 + c,
        )
    )


def ell_c(quad: SteeringQuad, c: float | np.ndarray) -> float | np.ndarray:
    """ℓ(c); a positive value witnesses incompatibility of joint reality with the assumption."""
    if np.ndim(c) == 0 and not -1.0 < float(c) < 1.0:
        raise ValueError(f"c must lie in (-1, 1), got {c}")
    out = ell_terms(quad, c).min(axis=0)
    return float(out) if np.ndim(out) == 0 else out


def best_c(quad: SteeringQuad, step: float = 1e-3) -> tuple[float, float]:
    """Grid argmax of ℓ(c) over c in (-1, 1)."""
    n = int(round(1.0 / step))
    grid = np.arange(-n + 1, n) * step
    vals = ell_terms(quad, grid).min(axis=0)
    if np.all(np.isnan(vals)):
        return math.nan, math.nan
    i = int(np.nanargmax(vals))
    return float(grid[i]), float(vals[i])


def ell_max(adotb: float) -> float:
    """Largest ℓ(a.b) reachable with qubit observables at overlap ``a.b``."""
    x = 1.0 + abs(adotb)
    return math.sqrt(2.0 * x) - x


# --- CHSH ---------------------------------------------------------------


def chsh(table: CorrelationTable) -> float:
    x = table.correlators()
    return float(abs(x[0] + x[1] + x[2] - x[3]))


def chsh_all_eight(table: CorrelationTable) -> np.ndarray:
    """All sign variants: minus sign on correlator ``i`` for ``i = 0..3``, times ±1.

    Entry ``2*i`` is ``+S_i`` and ``2*i + 1`` is ``-S_i``.
    """
    x = table.correlators()
    signs = np.ones((4, 4)) - 2 * np.eye(4)
    s = signs @ x
    return np.stack([s, -s], axis=1).ravel()


def chsh_facet_label(index: int) -> str:
    names = ["<AM>", "<BM>", "<AM'>", "<BM'>"]
    i, neg = divmod(index, 2)
    body = names[0] if i else "-" + names[0]
    for j, n in enumerate(names[1:], start=1):
        body += (" - " if j == i else " + ") + n
    return f"-({body})" if neg else body


def alt_chsh(quad: SteeringQuad) -> float:
    """Sum of the four absolute-value terms equivalent to the first pairing inequality (<= 4)."""
    return 2.0 * lemma1_lhs(quad)[0]


def alt_chsh_from_table(table: CorrelationTable) -> float:
    """Same quantity written with joint correlators."""
    A, B = table.mean_a, table.mean_b
    am, bm, amp, bmp = table.correlators()
    return (
        abs(am + bm + A + B)
        + abs(am + bm - A - B)
        + abs(amp - bmp + A - B)
        + abs(amp - bmp - A + B)
    )


# --- quadrilateral orientation and determinants --------------------------


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def orientation_signs(points: Any) -> np.ndarray:
    """Turn direction at each vertex of a closed 4-gon (negative means clockwise)."""
    p = np.asarray(points, dtype=float)
    return np.array([_cross(p[i], p[(i + 1) % 4], p[(i + 2) % 4]) for i in range(4)])


def is_convex_clockwise(points: Any, tol: float = TOL) -> bool:
    """True if the 4-gon is convex and clockwise, allowing degenerate (zero-area) turns."""
    s = orientation_signs(points)
    return bool(np.all(np.isfinite(s)) and np.all(s <= tol))


def canonicalize_quad(quad: SteeringQuad, tol: float = TOL) -> SteeringQuad:
    """Return a quad with E+, E'+, E-, E'- clockwise, swapping the labels of M' if needed."""
    if is_convex_clockwise(quad.clockwise_points(), tol):
        return quad
    swapped = SteeringQuad(
        quad.e_plus,
        quad.e_minus,
        quad.e_prime_minus,
        quad.e_prime_plus,
        quad.w_plus,
        None if quad.w_prime_plus is None else 1.0 - quad.w_prime_plus,
    )
    if is_convex_clockwise(swapped.clockwise_points(), tol):
        return swapped
    raise NotConvexQuadrilateral("subensembles do not form a convex quadrilateral")


def det4(m: Any) -> float:
    """4x4 determinant by cofactor expansion along the first row."""
    m = np.asarray(m, dtype=float)

    def det3(x: np.ndarray) -> float:
        return (
            x[0, 0] * (x[1, 1] * x[2, 2] - x[1, 2] * x[2, 1])
            - x[0, 1] * (x[1, 0] * x[2, 2] - x[1, 2] * x[2, 0])
            + x[0, 2] * (x[1, 0] * x[2, 1] - x[1, 1] * x[2, 0])
        )

    total = 0.0
    for j in range(4):
        minor = np.delete(m[1:], j, axis=1)
        total += (-1) ** j * m[0, j] * det3(minor)
    norms = np.linalg.norm(m, axis=1)
    if norms.min() > 0 and norms.max() / norms.min() > 1e6:
        warnings.warn("determinant rows differ in scale by more than 1e6", RuntimeWarning, stacklevel=2)
    return float(total)


def _check_signs(p: int, q: int, r: int, s: int) -> None:
    if any(x not in (1, -1) for x in (p, q, r, s)) or p * q * r * s != -1:
        raise ValueError("p, q, r, s must be ±1 with pqrs = -1")


def _row(e: SubensembleStats, x: float, y: float, k: float) -> list[float]:
    return [e.mean_a, e.mean_b, x * e.mean_a + y * e.mean_b + k, 1.0]


def pusey_det_steering(quad: SteeringQuad, p: int, q: int, r: int, s: int, tol: float = TOL) -> float:
    """Determinant test for the CHSH scenario from conditional averages alone.

    Rows are E+, E-, E'+, E'-.  The lifted heights pair E+ with E- (constant
    -1) and E'+ with E'- (constant +1), so the determinant is proportional to
    ``pAM + qBM + rAM' + sBM' - 2`` with a positive factor; locality holds iff
    it is <= 0 for all eight admissible sign choices.
    """
    _check_signs(p, q, r, s)
    if not is_convex_clockwise(quad.clockwise_points(), tol):
        raise NotConvexQuadrilateral("E+, E'+, E-, E'- must form a clockwise convex quadrilateral")
    ep, em, fp, fm = quad.members()
    return det4(
        [
            _row(ep, p, q, -1.0),
            _row(em, -p, -q, -1.0),
            _row(fp, -r, -s, 1.0),
            _row(fm, r, s, 1.0),
        ]
    )


def pusey_det_oc(quadrilateral: Sequence[SubensembleStats], p: int, q: int, r: int, s: int, tol: float = TOL) -> float:
    """Determinant test for four ensembles E1..E4 listed clockwise (>= 0 when compatible).

    E1..E4 play the roles of E+, E'+, E-, E'-; the value is the negative of
    :func:`pusey_det_steering` on the same points.
    """
    _check_signs(p, q, r, s)
    e1, e2, e3, e4 = quadrilateral
    pts = np.array([e.point for e in (e1, e2, e3, e4)])
    if not is_convex_clockwise(pts, tol):
        raise NotConvexQuadrilateral("E1..E4 must form a clockwise convex quadrilateral")
    return det4(
        [
            _row(e1, p, q, -1.0),
            _row(e2, -r, -s, 1.0),
            _row(e3, -p, -q, -1.0),
            _row(e4, r, s, 1.0),
        ]
    )


def all_pusey_det_steering(quad: SteeringQuad) -> np.ndarray:
    return np.array([pusey_det_steering(quad, *sg) for sg in SIGN_CHOICES])


def all_pusey_det_oc(quadrilateral: Sequence[SubensembleStats]) -> np.ndarray:
    return np.array([pusey_det_oc(quadrilateral, *sg) for sg in SIGN_CHOICES])


# --- weights from conditional averages -----------------------------------


def lemma2_solve(quad: SteeringQuad, tol: float = TOL) -> WeightSolution:
    """Mixing weights at which the two steering mixtures share <A> and <B>.

    Geometrically the common point is where the diagonals E+E- and E'+E'- cross.
    """
    ep, em, fp, fm = quad.members()
    M = np.array(
        [
            [ep.mean_a - em.mean_a, -fp.mean_a + fm.mean_a],
            [ep.mean_b - em.mean_b, -fp.mean_b + fm.mean_b],
        ]
    )
    f = np.array(
        [
            -ep.mean_a - em.mean_a + fp.mean_a + fm.mean_a,
            -ep.mean_b - em.mean_b + fp.mean_b + fm.mean_b,
        ]
    )
    det = float(np.linalg.det(M)) if np.all(np.isfinite(M)) else math.nan
    if not abs(det) >= tol:
        raise SingularSystem(f"diagonals are parallel or degenerate (det = {det:.3e})")
    delta, delta_p = np.linalg.solve(M, f)
    return WeightSolution(float(delta), float(delta_p), float(np.linalg.cond(M)))


def nonlinear_di_steering(quad: SteeringQuad) -> float:
    """CHSH expression rebuilt from conditional averages with recovered weights."""
    sol = lemma2_solve(quad)
    ep, em, fp, fm = quad.members()
    return abs(
        sol.w_plus * (ep.mean_a + ep.mean_b)
        - sol.w_minus * (em.mean_a + em.mean_b)
        + sol.w_prime_plus * (fp.mean_a - fp.mean_b)
        - sol.w_prime_minus * (fm.mean_a - fm.mean_b)
    )


def armen_check(a: Any, b: Any) -> tuple[float, float]:
    """``(|<A> + <B>|, 1 + a.b)`` on the spin-up state along ``a + b``.

    The first exceeds the second for noncommuting observables, which forces
    ``<AB> > a.b`` on both spin states along ±(a + b).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(abs(float(a @ b)) - 1.0) < TOL:
        raise ParallelObservables("a and b are parallel")
    n = unit(a + b)
    obs_a, obs_b = QubitObservable(a), QubitObservable(b)
    lhs = abs(expectation(n, obs_a) + expectation(n, obs_b))
    return lhs, 1.0 + float(a @ b)


# --- experiment-style CSV -------------------------------------------------

QUAD_CSV_HEADER = ["setting", "outcome", "countA_plus", "countA_minus", "countB_plus", "countB_minus"]


def quad_from_csv(text: str) -> SteeringQuad:
    """Read counts per (setting in {M, M'}, outcome in {+1, -1}) into a quad with weights."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty count table")
    missing = set(QUAD_CSV_HEADER) - set(rows[0])
    if missing:
        raise ValueError(f"missing columns: {sorted(missing)}")
    cells: dict[tuple[str, int], tuple[int, int, int, int]] = {}
    for row in rows:
        setting = row["setting"].strip().replace("Mprime", "M'")
        outcome = int(row["outcome"])
        counts = tuple(int(row[k]) for k in QUAD_CSV_HEADER[2:])
        if setting not in ("M", "M'") or outcome not in (1, -1) or min(counts) < 0:
            raise ValueError(f"bad row: {row}")
        cells[(setting, outcome)] = counts  # type: ignore[assignment]
    if len(cells) != 4:
        raise ValueError("need exactly one row for each of (M,+1), (M,-1), (M',+1), (M',-1)")

    def stats(key: tuple[str, int]) -> SubensembleStats:
        ap, am, bp, bm = cells[key]
        na, nb = ap + am, bp + bm
        return SubensembleStats(
            (ap - am) / na if na else math.nan,
            (bp - bm) / nb if nb else math.nan,
            count=na + nb,
            n_a=na,
            n_b=nb,
        )

    def weight(setting: str) -> float:
        plus, minus = sum(cells[(setting, 1)]), sum(cells[(setting, -1)])
        return plus / (plus + minus) if plus + minus else math.nan

    return SteeringQuad(
        stats(("M", 1)), stats(("M", -1)), stats(("M'", 1)), stats(("M'", -1)), weight("M"), weight("M'")
    )


def quad_to_csv(counts: Iterable[tuple[str, int, int, int, int, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(QUAD_CSV_HEADER)
    for row in counts:
        w.writerow(row)
    return buf.getvalue()
