"""Finite-ensemble Monte Carlo for steering and preparation experiments.

Per-system simulation is replaced by a single multinomial draw over the cells
``(steering setting, steering outcome, local setting, local outcome)`` with
their exact probabilities, which has the same distribution.  Counts are
stored as ``counts[s, m, t, x]`` with ``s`` in {M, M'}, ``t`` in {A, B} and
outcome indices ``0 -> -1``, ``1 -> +1``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ParallelObservables
from .inequalities import (
    C_GRID,
    CorrelationTable,
    SteeringQuad,
    SubensembleStats,
    all_pusey_det_oc,
    all_pusey_det_steering,
    canonicalize_quad,
    ell_max,
    ell_terms,
)
from .lhv_oracle import sample_lhv
from .qubit_core import TOL, QubitObservable, TwoQubitState, steer, unit
from .steering_geometry import PlaneEllipse, rect_R

DEFAULT_SHARD = 1 << 20


@dataclass(frozen=True)
class ExperimentConfig:
    state: TwoQubitState
    obs_a: QubitObservable
    obs_b: QubitObservable
    dir_m: np.ndarray
    dir_mp: np.ndarray
    n: int
    seed: int
    steer_fraction: float = 0.5
    a_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be at least 1")
        for name in ("dir_m", "dir_mp"):
            v = np.asarray(getattr(self, name), dtype=float)
            if abs(np.linalg.norm(v) - 1.0) > TOL:
                raise ValueError(f"{name} must be a unit vector")
            object.__setattr__(self, name, v)

    def to_dict(self) -> dict[str, Any]:
        return {
            "state": self.state.to_dict(),
            "obs_a": {"axis": self.obs_a.axis.tolist(), "noise": self.obs_a.noise},
            "obs_b": {"axis": self.obs_b.axis.tolist(), "noise": self.obs_b.noise},
            "dir_m": self.dir_m.tolist(),
            "dir_mp": self.dir_mp.tolist(),
            "n": self.n,
            "seed": self.seed,
            "steer_fraction": self.steer_fraction,
            "a_fraction": self.a_fraction,
        }


def cell_probabilities(cfg: ExperimentConfig) -> np.ndarray:
    """Exact probabilities of ``counts[s, m, t, x]`` for one system."""
    probs = np.zeros((2, 2, 2, 2))
    for s, (direction, fs) in enumerate(((cfg.dir_m, cfg.steer_fraction), (cfg.dir_mp, 1 - cfg.steer_fraction))):
        for mi, m in enumerate((-1, 1)):
            pm = 0.5 * (1.0 + m * float(cfg.state.b @ direction))
            if pm < TOL:
                continue
            r = steer(cfg.state, direction, m).state
            for t, (obs, ft) in enumerate(((cfg.obs_a, cfg.a_fraction), (cfg.obs_b, 1 - cfg.a_fraction))):
                mean = obs.expectation(r)
                for xi, x in enumerate((-1, 1)):
                    probs[s, mi, t, xi] = fs * pm * ft * 0.5 * (1.0 + x * mean)
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def exact_quad(cfg: ExperimentConfig) -> SteeringQuad:
    """Born-rule subensemble averages and steering weights (the infinite-N limit)."""
    stats = {}
    weights = []
    for direction in (cfg.dir_m, cfg.dir_mp):
        weights.append(0.5 * (1.0 + float(cfg.state.b @ direction)))
        for m in (1, -1):
            pm = 0.5 * (1.0 + m * float(cfg.state.b @ direction))
            if pm < TOL:
                stats[len(stats)] = SubensembleStats(math.nan, math.nan)
                continue
            r = steer(cfg.state, direction, m).state
            stats[len(stats)] = SubensembleStats(cfg.obs_a.expectation(r), cfg.obs_b.expectation(r))
    return SteeringQuad(stats[0], stats[1], stats[2], stats[3], weights[0], weights[1])


def exact_table(cfg: ExperimentConfig) -> CorrelationTable:
    return CorrelationTable.from_quad(exact_quad(cfg))


def sharded_multinomial(n: int, probs: np.ndarray, seed: int, shard_size: int = DEFAULT_SHARD, workers: int = 1) -> np.ndarray:
    """Multinomial counts assembled from fixed-size shards with spawned sub-seeds.

    The shard layout depends only on ``n`` and ``shard_size``, so results do not
    depend on ``workers``.
    """
    p = np.asarray(probs, dtype=float).ravel()
    sizes = [shard_size] * (n // shard_size) + ([n % shard_size] if n % shard_size else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def draw(i: int) -> np.ndarray:
        return np.random.default_rng(seeds[i]).multinomial(sizes[i], p)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(draw, range(len(sizes))))
    else:
        parts = [draw(i) for i in range(len(sizes))]
    return np.sum(parts, axis=0).reshape(np.shape(probs))


def _mean(plus: float, minus: float) -> float:
    n = plus + minus
    return (plus - minus) / n if n else math.nan


def quad_from_counts(counts: np.ndarray) -> SteeringQuad:
    """Empirical subensemble statistics and weights from ``counts[s, m, t, x]``."""
    c = np.asarray(counts)
    stats = {}
    for s in (0, 1):
        for mi in (0, 1):
            na, nb = int(c[s, mi, 0].sum()), int(c[s, mi, 1].sum())
            stats[s, mi] = SubensembleStats(
                _mean(c[s, mi, 0, 1], c[s, mi, 0, 0]),
                _mean(c[s, mi, 1, 1], c[s, mi, 1, 0]),
                count=na + nb,
                n_a=na,
                n_b=nb,
            )

    def weight(s: int) -> float:
        tot = c[s].sum()
        return float(c[s, 1].sum() / tot) if tot else math.nan

    return SteeringQuad(stats[0, 1], stats[0, 0], stats[1, 1], stats[1, 0], weight(0), weight(1))


def table_from_setting_counts(counts: np.ndarray) -> CorrelationTable:
    """Plug-in CHSH-scenario table from ``counts[s, m, t, x]``."""
    c = np.asarray(counts, dtype=float)
    sgn = np.array([-1.0, 1.0])

    def avg(arr: np.ndarray, weights: np.ndarray) -> float:
        tot = arr.sum()
        return float((arr * weights).sum() / tot) if tot else 0.0

    prod = np.outer(sgn, sgn)  # [m, x] -> m * x
    mean_a = avg(c[:, :, 0, :].sum(axis=(0, 1)), sgn)
    mean_b = avg(c[:, :, 1, :].sum(axis=(0, 1)), sgn)
    return CorrelationTable(
        mean_a=mean_a,
        mean_b=mean_b,
        corr_am=avg(c[0, :, 0, :], prod),
        corr_bm=avg(c[0, :, 1, :], prod),
        corr_amp=avg(c[1, :, 0, :], prod),
        corr_bmp=avg(c[1, :, 1, :], prod),
        p_m=avg(c[0].sum(axis=(1, 2)), np.array([0.0, 1.0])),
        p_mp=avg(c[1].sum(axis=(1, 2)), np.array([0.0, 1.0])),
    )


# --- finite-statistics evaluation -----------------------------------------------


def ell_hat_with_se(quad: SteeringQuad, c: Any = C_GRID) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in ℓ(c) and the delta-method standard error of the active term."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    terms = ell_terms(quad, c)
    ep, em, fp, fm = quad.members()
    var = np.array(
        [e.se_a() ** 2 + e.se_b() ** 2 for e in (ep, em, fp, fm)]
    )
    # an empty subensemble leaves ℓ undefined (NaN), never certifiable
    ell = terms.min(axis=0)
    active = np.argmin(np.where(np.isnan(terms), np.inf, terms), axis=0)
    se = np.sqrt(var[active])
    return ell, se


def certified_violations(quad: SteeringQuad, c: Any = C_GRID, k: float = 3.0) -> np.ndarray:
    """Grid values of c at which ℓ̂(c) exceeds ``k`` standard errors."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    ell, se = ell_hat_with_se(quad, c)
    with np.errstate(invalid="ignore"):
        hit = ell > k * se
    return c[hit]


def bootstrap(
    counts: np.ndarray,
    statistic: Callable[[np.ndarray], Any],
    n_boot: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> tuple[np.ndarray, np.ndarray]:
    """Percentile interval of ``statistic`` under multinomial resampling of ``counts``."""
    c = np.asarray(counts)
    n = int(c.sum())
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(n, (c / n).ravel(), size=n_boot).reshape((n_boot,) + c.shape)
    vals = np.array([np.asarray(statistic(d), dtype=float) for d in draws])
    alpha = (1.0 - level) / 2
    lo = np.nanquantile(vals, alpha, axis=0)
    hi = np.nanquantile(vals, 1 - alpha, axis=0)
    return lo, hi


def steering_determinants(quad: SteeringQuad) -> np.ndarray:
    """All eight steering determinants after orienting the quad clockwise."""
    return all_pusey_det_steering(canonicalize_quad(quad))


@dataclass(frozen=True)
class ExperimentResult:
    config: dict[str, Any]
    counts: np.ndarray
    quad: SteeringQuad
    table: CorrelationTable
    extra: dict[str, Any] = field(default_factory=dict)

    def ell(self, c: Any = C_GRID) -> tuple[np.ndarray, np.ndarray]:
        return ell_hat_with_se(self.quad, c)

    def to_record(self, c_values: Any = (0.0,), n_boot: int = 0, seed: int = 0) -> dict[str, Any]:
        c_values = np.atleast_1d(np.asarray(c_values, dtype=float))
        ell, se = self.ell(c_values)
        rec: dict[str, Any] = {
            "config": self.config,
            "quad": self.quad.to_dict(),
            "table": self.table.to_dict(),
            "ell_by_c": {f"{c:.3f}": float(v) for c, v in zip(c_values, ell)},
            "ell_se": {f"{c:.3f}": float(v) for c, v in zip(c_values, se)},
        }
        try:
            rec["determinants"] = steering_determinants(self.quad).tolist()
        except Exception as exc:  # non-convex or empty subensembles
            rec["determinants"] = None
            rec["determinant_error"] = str(exc)
        if n_boot:
            lo, hi = bootstrap(
                self.counts, lambda d: ell_hat_with_se(quad_from_counts(d), c_values)[0], n_boot, seed
            )
            rec["ell_ci"] = {f"{c:.3f}": [float(a), float(b)] for c, a, b in zip(c_values, lo, hi)}
        rec.update(self.extra)
        return rec


def run_steering_experiment(cfg: ExperimentConfig, shard_size: int = DEFAULT_SHARD, workers: int = 1) -> ExperimentResult:
    counts = sharded_multinomial(cfg.n, cell_probabilities(cfg), cfg.seed, shard_size, workers)
    return ExperimentResult(cfg.to_dict(), counts, quad_from_counts(counts), table_from_setting_counts(counts))


def run_lhv_experiment(distribution: Any, n: int, seed: int) -> ExperimentResult:
    """Steering experiment on a local source: each system carries ``(alpha, beta, m, m')``.

    Strategies come from :func:`lhv_oracle.sample_lhv`; each system then gets
    independent uniform choices of steering setting and local setting.
    """
    ss = np.random.SeedSequence(seed)
    s_src, s_set = ss.spawn(2)
    joint = sample_lhv(distribution, n, s_src).table.reshape(16)
    rng = np.random.default_rng(s_set)
    settings = rng.multinomial(joint, [0.25] * 4)  # [strategy, (s, t)]
    counts = np.zeros((2, 2, 2, 2), dtype=np.int64)
    for k, (a, b, m, mp) in enumerate(np.array(np.unravel_index(np.arange(16), (2, 2, 2, 2))).T):
        for j, (s, t) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            mi = m if s == 0 else mp
            xi = a if t == 0 else b
            counts[s, mi, t, xi] += settings[k, j]
    cfg = {"source": "lhv", "distribution": np.asarray(distribution, dtype=float).tolist(), "n": n, "seed": seed}
    return ExperimentResult(cfg, counts, quad_from_counts(counts), table_from_setting_counts(counts))


def corollary1_settings(a: Any, b: Any) -> tuple[np.ndarray, np.ndarray]:
    """Singlet steering directions putting E+ at ``(a+b)/|a+b|`` and E'+ at ``(a-b)/|a-b|``.

    The singlet steers outcome +1 of direction ``m`` to ``-m``, so the
    directions are the negatives of the target Bloch vectors.
    """
    n1, _, n3, _ = theorem3_preparations(a, b).vectors
    return -n1, -n3


# --- preparation experiments -----------------------------------------------


@dataclass(frozen=True)
class OperationalPlane:
    """Bloch vectors ``u a + v b`` inside the ball (span form)."""

    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray

    def member(self, u: float, v: float) -> np.ndarray:
        return u * self.a + v * self.b

    def chart(self, u: float, v: float) -> tuple[float, float]:
        ab = float(self.a @ self.b)
        return u + v * ab, v + u * ab

    def contains(self, r: Any, tol: float = TOL) -> bool:
        r = np.asarray(r, dtype=float)
        return abs(float(r @ self.normal)) <= tol and float(np.linalg.norm(r)) <= 1.0 + tol


def build_operational_plane(a: Any, b: Any) -> OperationalPlane:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(abs(float(a @ b)) - 1.0) < TOL:
        raise ParallelObservables("a and b are parallel")
    return OperationalPlane(a, b, unit(np.cross(a, b)))


@dataclass(frozen=True)
class Theorem3Preparations:
    """Bloch vectors E1..E4 (top-right, bottom-left, bottom-right, top-left) and the predicted ℓ."""

    vectors: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    c: float
    predicted_ell: float

    def clockwise(self) -> tuple[np.ndarray, ...]:
        """Order used by the determinant test: E+, E'+, E-, E'-."""
        n1, n2, n3, n4 = self.vectors
        return n1, n3, n2, n4


def theorem3_preparations(a: Any, b: Any) -> Theorem3Preparations:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(abs(float(a @ b)) - 1.0) < TOL:
        raise ParallelObservables("a and b are parallel")
    n1 = unit(a + b)
    n3 = unit(a - b)
    ab = float(a @ b)
    return Theorem3Preparations((n1, -n1, n3, -n3), ab, ell_max(ab))


def sample_preparation(
    r: Any,
    obs_a: QubitObservable,
    obs_b: QubitObservable,
    n: int,
    seed: int | np.random.SeedSequence,
    a_fraction: float = 0.5,
) -> SubensembleStats:
    """Measure A on a random share of ``n`` systems prepared in ``r`` and B on the rest."""
    r = np.asarray(r, dtype=float)
    if np.linalg.norm(r) > 1 + TOL:
        raise ValueError("Bloch vector lies outside the unit ball")
    rng = np.random.default_rng(seed)
    na = int(rng.binomial(n, a_fraction))
    nb = n - na
    pa = float(np.clip(0.5 * (1 + obs_a.expectation(r)), 0, 1))
    pb = float(np.clip(0.5 * (1 + obs_b.expectation(r)), 0, 1))
    ka, kb = int(rng.binomial(na, pa)), int(rng.binomial(nb, pb))
    return SubensembleStats(
        (2 * ka - na) / na if na else math.nan,
        (2 * kb - nb) / nb if nb else math.nan,
        count=n,
        n_a=na,
        n_b=nb,
    )


def run_oc_experiment(a: Any, b: Any, n: int, seed: int, eps: float = 1.0) -> dict[str, Any]:
    """Simulate the four optimal preparations with ``n`` systems each.

    Returns the quad (E1..E4 as E+, E-, E'+, E'-), ℓ̂ at ``c = a.b`` with its
    standard error, and the eight preparation determinants.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    prep = theorem3_preparations(a, b)
    obs_a, obs_b = QubitObservable(a, eps), QubitObservable(b, eps)
    seeds = np.random.SeedSequence(seed).spawn(4)
    stats = [sample_preparation(r, obs_a, obs_b, n, s) for r, s in zip(prep.vectors, seeds)]
    quad = SteeringQuad(*stats)
    exact = SteeringQuad(*(SubensembleStats(obs_a.expectation(r), obs_b.expectation(r)) for r in prep.vectors))
    ell, se = ell_hat_with_se(quad, [prep.c])
    e1, e2, e3, e4 = stats
    try:
        dets = all_pusey_det_oc((e1, e3, e2, e4))
    except Exception:
        dets = None
    return {
        "quad": quad,
        "c": prep.c,
        "ell": float(ell[0]),
        "se": float(se[0]),
        "predicted_ell": float(ell_terms(exact, prep.c).min()),
        "determinants": dets,
    }


def bootstrap_preparations(
    stats: Any,
    statistic: Callable[[list[SubensembleStats]], Any],
    n_boot: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> tuple[np.ndarray, np.ndarray]:
    """Percentile interval of ``statistic`` under binomial resampling of each preparation's counts."""
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n_boot):
        draw = []
        for e in stats:
            na, nb = int(e.n_a or 0), int(e.n_b or 0)
            ka = rng.binomial(na, 0.5 * (1 + e.mean_a)) if na else 0
            kb = rng.binomial(nb, 0.5 * (1 + e.mean_b)) if nb else 0
            draw.append(
                SubensembleStats(
                    (2 * ka - na) / na if na else math.nan,
                    (2 * kb - nb) / nb if nb else math.nan,
                    count=e.count,
                    n_a=na,
                    n_b=nb,
                )
            )
        vals.append(np.asarray(statistic(draw), dtype=float))
    vals = np.array(vals)
    alpha = (1.0 - level) / 2
    return np.nanquantile(vals, alpha, axis=0), np.nanquantile(vals, 1 - alpha, axis=0)


# --- robustness scans -----------------------------------------------------------


def _crosses_all_sides(ellipse: PlaneEllipse, c: float) -> bool:
    R = rect_R(c)
    for n, h in zip(R.normals, R.half_widths):
        if not (ellipse.support(n) > h + TOL and ellipse.support(-n) > h + TOL):
            return False
    return True


def tilted_plane_ellipse(d: float, chi: float, c: float = 0.0, minor_along: str = "sum", centred: bool = True) -> PlaneEllipse:
    """Projection onto the XY plane of the plane at distance ``d`` tilted by ``chi``.

    Axes are aligned with the sides of R(c); ``minor_along`` picks which side
    normal carries the short axis ``sqrt(1-d^2) cos(chi)``.  With
    ``centred=False`` the ellipse is shifted by ``d sin(chi)`` along the short
    axis, which is where the circle of intersection actually projects.
    """
    if not abs(d) < 1:
        raise ValueError("|d| must be < 1")
    if not 0 <= chi < math.pi / 2:
        raise ValueError("chi must lie in [0, pi/2)")
    R = rect_R(c)
    short, long_ = (R.normals[0], R.normals[1]) if minor_along == "sum" else (R.normals[1], R.normals[0])
    rad = math.sqrt(1 - d * d)
    shape = (rad * math.cos(chi)) ** 2 * np.outer(short, short) + rad**2 * np.outer(long_, long_)
    center = np.zeros(2) if centred else d * math.sin(chi) * short
    return PlaneEllipse(center, shape)


def plane_tilt_scan(d: float, chi: float, c: float = 0.0, minor_along: str = "sum") -> bool:
    """Whether the centred, side-aligned tilted-plane ellipse crosses all four sides of R(c)."""
    return _crosses_all_sides(tilted_plane_ellipse(d, chi, c, minor_along), c)


def plane_tilt_scan_offset(d: float, chi: float, c: float = 0.0, minor_along: str = "sum") -> bool:
    """As :func:`plane_tilt_scan` but keeping the true centre offset of the projection."""
    return _crosses_all_sides(tilted_plane_ellipse(d, chi, c, minor_along, centred=False), c)


def noisy_povm_scan(eps: float) -> tuple[bool, float]:
    """Best ℓ(0) for sharpness-``eps`` X and Y measurements on the four diagonal states."""
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    x, y = np.eye(3)[0], np.eye(3)[1]
    obs_a, obs_b = QubitObservable(x, eps), QubitObservable(y, eps)
    n1, n2, n3, n4 = theorem3_preparations(x, y).vectors
    quad = SteeringQuad(
        *(SubensembleStats(obs_a.expectation(r), obs_b.expectation(r)) for r in (n1, n2, n3, n4))
    )
    ell = float(ell_terms(quad, 0.0).min())
    return ell > TOL, ell


__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "OperationalPlane",
    "Theorem3Preparations",
    "bootstrap",
    "bootstrap_preparations",
    "build_operational_plane",
    "cell_probabilities",
    "certified_violations",
    "corollary1_settings",
    "ell_hat_with_se",
    "exact_quad",
    "exact_table",
    "noisy_povm_scan",
    "plane_tilt_scan",
    "plane_tilt_scan_offset",
    "quad_from_counts",
    "run_lhv_experiment",
    "run_oc_experiment",
    "run_steering_experiment",
    "sample_preparation",
    "sharded_multinomial",
    "steering_determinants",
    "table_from_setting_counts",
    "theorem3_preparations",
    "tilted_plane_ellipse",
]
