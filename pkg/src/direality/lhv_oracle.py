"""Hidden-variable ground truth for the CHSH scenario.

Outcome arrays index ±1 values as ``0 -> -1`` and ``1 -> +1``.  The sixteen
deterministic strategies are ordered as ``itertools.product((-1, 1), repeat=4)``
over ``(alpha, beta, m, m')``, matching a C-order reshape to ``(2, 2, 2, 2)``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Sequence

import numpy as np
from scipy.integrate import quad as integrate

from .errors import (
    AgreementViolated,
    InfeasibleInput,
    LocalityBookkeepingViolated,
    NonProbabilisticResponse,
)
from .inequalities import CorrelationTable, chsh_all_eight, chsh_facet_label, lemma2_solve, SteeringQuad, SubensembleStats
from .qubit_core import TOL

STRATEGIES = np.array(list(itertools.product((-1, 1), repeat=4)), dtype=float)


def idx(v: int) -> int:
    """Array index of a ±1 outcome."""
    return (v + 1) // 2


@dataclass(frozen=True)
class DeterministicStrategy:
    alpha: int
    beta: int
    m: int
    mprime: int

    @property
    def index(self) -> int:
        return 8 * idx(self.alpha) + 4 * idx(self.beta) + 2 * idx(self.m) + idx(self.mprime)

    @classmethod
    def from_index(cls, i: int) -> "DeterministicStrategy":
        return cls(*(int(v) for v in STRATEGIES[i]))


@dataclass(frozen=True)
class JointCounts:
    """Nonnegative integer counts over ±1-valued variables, axes named in ``labels``."""

    table: np.ndarray
    labels: tuple[str, ...] = ("alpha", "beta", "m", "mprime")

    def __post_init__(self) -> None:
        t = np.asarray(self.table)
        if t.shape != (2,) * len(self.labels):
            raise ValueError(f"table shape {t.shape} does not match labels {self.labels}")
        if np.any(t < 0):
            raise ValueError("counts must be nonnegative")
        t = t.astype(np.int64)
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def total(self) -> int:
        return int(self.table.sum())

    def frequencies(self) -> np.ndarray:
        return self.table / self.total

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.labels, "count"])
        for cell in itertools.product((-1, 1), repeat=len(self.labels)):
            w.writerow([*cell, int(self.table[tuple(idx(v) for v in cell)])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "JointCounts":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty count table")
        labels = tuple(k for k in rows[0] if k != "count")
        table = np.zeros((2,) * len(labels), dtype=np.int64)
        for row in rows:
            cell = tuple(idx(int(row[k])) for k in labels)
            table[cell] += int(row["count"])
        return cls(table, labels)


# --- Fine-type constructions -----------------------------------------------


def general_joint(partitions: Sequence[Any], exact: bool = False) -> np.ndarray:
    """Joint relative frequencies from ``k`` partitions of one ensemble.

    ``partitions[j]`` has shape ``(n_j, *cell)``: counts of each cell for each
    outcome of the j-th steering measurement.  Every partition must sum to the
    same ``N(cell | E)``.  Output shape is ``(*cell, n_1, ..., n_k)``; cells
    with ``N(cell | E) = 0`` receive 0.  With ``exact=True`` entries are
    ``Fraction`` objects.
    """
    parts = [np.asarray(p, dtype=np.int64) for p in partitions]
    if not parts:
        raise ValueError("need at least one partition")
    base = parts[0].sum(axis=0)
    for j, p in enumerate(parts[1:], start=1):
        if p.shape[1:] != base.shape or not np.array_equal(p.sum(axis=0), base):
            raise LocalityBookkeepingViolated(f"partition {j} does not sum to the same cell counts as partition 0")
    if np.any(base < 0) or any(np.any(p < 0) for p in parts):
        raise ValueError("counts must be nonnegative")
    total = int(base.sum())
    k = len(parts)
    outcome_shape = tuple(p.shape[0] for p in parts)
    cell_shape = base.shape
    dtype = object if exact else float
    out = np.zeros(cell_shape + outcome_shape, dtype=dtype)
    for cell in np.ndindex(*cell_shape):
        n_cell = int(base[cell])
        if n_cell == 0:
            if exact:
                out[cell] = np.full(outcome_shape, Fraction(0), dtype=object)
            continue
        for outs in np.ndindex(*outcome_shape):
            num = 1
            for j, o in enumerate(outs):
                num *= int(parts[j][(o,) + cell])
            den = n_cell ** (k - 1) * total
            out[cell + outs] = Fraction(num, den) if exact else num / den
    return out


def fine_joint(
    e_plus: Any,
    e_minus: Any,
    e_prime_plus: Any,
    e_prime_minus: Any,
    e: Any | None = None,
    exact: bool = False,
) -> np.ndarray:
    """Four-variable distribution ``wp[alpha, beta, m, m']`` from steered 2x2 count tables.

    Each input is ``N(alpha, beta | E_x)`` indexed ``[idx(alpha), idx(beta)]``.
    """
    e_plus, e_minus, e_prime_plus, e_prime_minus = (
        np.asarray(x, dtype=np.int64) for x in (e_plus, e_minus, e_prime_plus, e_prime_minus)
    )
    whole = e_plus + e_minus
    if e is not None and not np.array_equal(np.asarray(e, dtype=np.int64), whole):
        raise LocalityBookkeepingViolated("N(.|E+) + N(.|E-) differs from N(.|E)")
    if not np.array_equal(e_prime_plus + e_prime_minus, whole):
        raise LocalityBookkeepingViolated("N(.|E'+) + N(.|E'-) differs from N(.|E+) + N(.|E-)")
    return general_joint(
        [np.stack([e_minus, e_plus]), np.stack([e_prime_minus, e_prime_plus])],
        exact=exact,
    )


# --- strategy distributions and tables -------------------------------------


def _moment_matrix() -> np.ndarray:
    a, b, m, mp = STRATEGIES.T
    return np.vstack([np.ones(16), a, b, m, mp, a * m, b * m, a * mp, b * mp])


G = _moment_matrix()


def _target(table: CorrelationTable) -> np.ndarray:
    return np.array(
        [
            1.0,
            table.mean_a,
            table.mean_b,
            table.mean_m,
            table.mean_mp,
            table.corr_am,
            table.corr_bm,
            table.corr_amp,
            table.corr_bmp,
        ]
    )


def table_from_distribution(dist: Any) -> CorrelationTable:
    """CHSH-scenario statistics generated by a distribution over the 16 strategies."""
    x = np.asarray(dist, dtype=float).reshape(16)
    t = G @ x
    return CorrelationTable(
        mean_a=float(t[1]),
        mean_b=float(t[2]),
        corr_am=float(t[5]),
        corr_bm=float(t[6]),
        corr_amp=float(t[7]),
        corr_bmp=float(t[8]),
        p_m=float((1 + t[3]) / 2),
        p_mp=float((1 + t[4]) / 2),
    )


def table_from_counts(counts: JointCounts) -> CorrelationTable:
    return table_from_distribution(counts.frequencies().reshape(16))


@lru_cache(maxsize=1)
def _basis_inverses() -> tuple[np.ndarray, np.ndarray]:
    """Inverses of every nonsingular 9-column submatrix of the moment matrix."""
    combos = np.array(list(itertools.combinations(range(16), 9)))
    mats = G[:, combos].transpose(1, 0, 2)
    dets = np.linalg.det(mats)
    keep = np.abs(dets) > 1e-9
    return combos[keep], np.linalg.inv(mats[keep])


@dataclass(frozen=True)
class StrategyCertificate:
    weights: np.ndarray
    residual: float

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "strategies", "weights": self.weights.tolist(), "residual": self.residual}


@dataclass(frozen=True)
class FacetCertificate:
    kind: str
    label: str
    value: float
    bound: float

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "label": self.label, "value": self.value, "bound": self.bound}


def _positivity_cells(table: CorrelationTable) -> list[tuple[str, float]]:
    out = []
    pairs = (
        ("A", "M", table.mean_a, table.mean_m, table.corr_am),
        ("B", "M", table.mean_b, table.mean_m, table.corr_bm),
        ("A", "M'", table.mean_a, table.mean_mp, table.corr_amp),
        ("B", "M'", table.mean_b, table.mean_mp, table.corr_bmp),
    )
    for x, y, mx, my, cxy in pairs:
        for s, t in itertools.product((1, -1), repeat=2):
            out.append((f"p({x}={s:+d},{y}={t:+d})", 0.25 * (1 + s * mx + t * my + s * t * cxy)))
    return out


def lhv_feasible(table: CorrelationTable, tol: float = TOL) -> tuple[bool, StrategyCertificate | FacetCertificate]:
    """Decide whether some distribution over deterministic strategies reproduces ``table``.

    Feasible tables come with the witnessing distribution.  Otherwise the
    certificate is the most violated CHSH facet, or a negative joint
    probability when the table is not even no-signalling consistent.
    """
    t = _target(table)
    x = G.T @ t / 16.0  # least-norm solution; the moment rows are orthogonal with norm 16
    if x.min() < -tol:
        combos, inverses = _basis_inverses()
        xb = inverses @ t
        good = np.flatnonzero(xb.min(axis=1) >= -tol)
        if good.size:
            best = good[np.argmax(xb[good].min(axis=1))]
            x = np.zeros(16)
            x[combos[best]] = xb[best]
        else:
            x = None
    if x is not None:
        x = np.clip(x, 0.0, None)
        x /= x.sum()
        return True, StrategyCertificate(x, float(np.abs(G @ x - t).max()))
    values = chsh_all_eight(table)
    i = int(np.argmax(values))
    if values[i] > 2.0:
        return False, FacetCertificate("chsh", chsh_facet_label(i), float(values[i]), 2.0)
    label, value = min(_positivity_cells(table), key=lambda kv: kv[1])
    return False, FacetCertificate("positivity", label, float(value), 0.0)


@dataclass(frozen=True)
class DeterministicModel:
    """Distribution over strategies plus the induced joint ``p[alpha, beta, m, m']``."""

    weights: np.ndarray
    strategies: tuple[DeterministicStrategy, ...]
    joint: np.ndarray
    residual: float

    def table(self) -> CorrelationTable:
        return table_from_distribution(self.weights)


def deterministic_model(table: CorrelationTable, tol: float = TOL) -> DeterministicModel:
    ok, cert = lhv_feasible(table, tol)
    if not ok:
        raise InfeasibleInput(f"table admits no local model: {cert.to_dict()}")
    assert isinstance(cert, StrategyCertificate)
    w = cert.weights
    return DeterministicModel(
        weights=w,
        strategies=tuple(DeterministicStrategy.from_index(i) for i in range(16)),
        joint=w.reshape(2, 2, 2, 2),
        residual=cert.residual,
    )


def sample_lhv(distribution: Any, n: int, seed: int | np.random.SeedSequence | np.random.Generator) -> JointCounts:
    """``n`` i.i.d. draws of ``(alpha, beta, m, m')`` from a strategy distribution."""
    p = np.asarray(distribution, dtype=float).reshape(16)
    if n < 1:
        raise ValueError("n must be at least 1")
    if np.any(p < -TOL) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("distribution must be nonnegative and sum to 1")
    p = np.clip(p, 0.0, None)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n, p / p.sum())
    return JointCounts(counts.reshape(2, 2, 2, 2))


# --- ontic counterexample ---------------------------------------------------


@dataclass(frozen=True)
class OnticModel:
    """Outcome-deterministic model on a circle of ontic states.

    ``response[obs](outcome, lam)`` is true when ``lam`` lies in the response
    set of ``outcome``; ``densities[label]`` is ``p(lam | label)``.
    """

    domain: tuple[float, float]
    breakpoints: tuple[float, ...]
    response: dict[str, Callable[[int, float], bool]]
    densities: dict[str, Callable[[float], float]]

    def _pieces(self) -> list[tuple[float, float]]:
        pts = (self.domain[0], *self.breakpoints, self.domain[1])
        return [(lo, hi) for lo, hi in zip(pts[:-1], pts[1:]) if hi > lo]

    def normalization(self, label: str) -> float:
        f = self.densities[label]
        return sum(integrate(f, lo, hi, epsabs=1e-13, epsrel=1e-13)[0] for lo, hi in self._pieces())

    def evaluate(self, label: str) -> np.ndarray:
        """``p[idx(alpha), idx(beta)]`` for preparation ``label``.

        The response sets are constant between breakpoints, so each piece is
        assigned to a cell by its midpoint and integrated adaptively.
        """
        f = self.densities[label]
        out = np.zeros((2, 2))
        for lo, hi in self._pieces():
            mid = 0.5 * (lo + hi)
            val = integrate(f, lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
            for a, b in itertools.product((-1, 1), repeat=2):
                if self.response["A"](a, mid) and self.response["B"](b, mid):
                    out[idx(a), idx(b)] += val
        return out

    def marginals(self, label: str) -> dict[str, np.ndarray]:
        p = self.evaluate(label)
        return {"A": p.sum(axis=1), "B": p.sum(axis=0)}

    def max_density_difference(self, first: str, second: str, n_grid: int = 100_001) -> float:
        lam = np.linspace(*self.domain, n_grid)
        f, g = np.vectorize(self.densities[first]), np.vectorize(self.densities[second])
        return float(np.max(np.abs(f(lam) - g(lam))))


def counterexample_model() -> OnticModel:
    """Operationally complete but preparation-contextual model on ``lam in [0, 2 pi)``."""
    return OnticModel(
        domain=(0.0, 2 * math.pi),
        breakpoints=(math.pi / 2, math.pi, 3 * math.pi / 2),
        response={
            "A": lambda a, lam: a * math.sin(lam) >= 0,
            "B": lambda b, lam: b * math.cos(lam) >= 0,
        },
        densities={
            "P": lambda lam: math.sin(lam) ** 2 / math.pi,
            "P'": lambda lam: math.cos(lam) ** 2 / math.pi,
        },
    )


# --- constructive model from four ensembles --------------------------------


@dataclass(frozen=True)
class AppendixBModel:
    """Formal local model over hidden pairs ``(u, v)``.

    ``wp[u, v]`` is the hidden-variable distribution and ``p2_m[d, u, v]``,
    ``p2_mp[d, u, v]`` the response probabilities of M and M' (outcome index d).
    A and B respond deterministically: ``alpha = u``, ``beta = v``.
    """

    wp: np.ndarray
    p2_m: np.ndarray
    p2_mp: np.ndarray
    weights: tuple[float, float]

    def predict(self, local: str, remote: str) -> np.ndarray:
        """``p[idx(c), idx(d)]`` for local observable A or B and remote M or M'."""
        p2 = {"M": self.p2_m, "M'": self.p2_mp}[remote]
        joint = self.wp[None, :, :] * p2  # [d, u, v]
        if local == "A":
            return joint.sum(axis=2).T
        if local == "B":
            return joint.sum(axis=1).T
        raise ValueError(f"local observable must be 'A' or 'B', got {local!r}")

    def table(self) -> CorrelationTable:
        s = np.array([-1.0, 1.0])
        am, bm = self.predict("A", "M"), self.predict("B", "M")
        amp, bmp = self.predict("A", "M'"), self.predict("B", "M'")
        return CorrelationTable(
            mean_a=float(s @ am.sum(axis=1)),
            mean_b=float(s @ bm.sum(axis=1)),
            corr_am=float(s @ am @ s),
            corr_bm=float(s @ bm @ s),
            corr_amp=float(s @ amp @ s),
            corr_bmp=float(s @ bmp @ s),
            p_m=float(am.sum(axis=0)[1]),
            p_mp=float(amp.sum(axis=0)[1]),
        )


def _means(counts: np.ndarray) -> SubensembleStats:
    n = counts.sum()
    s = np.array([-1.0, 1.0])
    return SubensembleStats(float(s @ counts.sum(axis=1) / n), float(counts.sum(axis=0) @ s / n), count=int(n))


def appendix_b_model(
    quad_counts: Sequence[Any],
    e_slash: Any | None = None,
    e_back: Any | None = None,
    weights: tuple[float, float] | None = None,
    agreement_tol: float | None = None,
) -> AppendixBModel:
    """Build the (u, v) model from joint counts of E+, E-, E'+, E'-.

    ``quad_counts`` holds four 2x2 tables ``N(alpha, beta | E_x)`` in the order
    E+, E-, E'+, E'-.  The mixtures E_/ and E_\\ default to the weighted
    combinations of these frequencies; weights default to the diagonal
    intersection of the quad.  The two mixtures must agree cell by cell within
    ``agreement_tol`` (default: three combined binomial standard errors).
    """
    c = [np.asarray(x, dtype=float) for x in quad_counts]
    if len(c) != 4 or any(x.shape != (2, 2) for x in c):
        raise ValueError("quad_counts must be four 2x2 tables")
    if any(x.sum() <= 0 for x in c):
        raise ValueError("every subensemble needs at least one count")
    n = [x.sum() for x in c]
    f = [x / nx for x, nx in zip(c, n)]
    if weights is None:
        sol = lemma2_solve(SteeringQuad(*(_means(x) for x in c)))
        weights = (sol.w_plus, sol.w_prime_plus)
    wp_, vp_ = weights
    w = (wp_, 1.0 - wp_)
    v = (vp_, 1.0 - vp_)
    for val in (*w, *v):
        if not -TOL <= val <= 1 + TOL:
            raise NonProbabilisticResponse(f"mixing weight {val:.6g} lies outside [0, 1]")
    mix_s = w[0] * f[0] + w[1] * f[1]
    mix_b = v[0] * f[2] + v[1] * f[3]
    slash = mix_s if e_slash is None else np.asarray(e_slash, dtype=float) / np.sum(e_slash)
    back = mix_b if e_back is None else np.asarray(e_back, dtype=float) / np.sum(e_back)

    if agreement_tol is None:
        var_s = w[0] ** 2 * f[0] * (1 - f[0]) / n[0] + w[1] ** 2 * f[1] * (1 - f[1]) / n[1]
        var_b = v[0] ** 2 * f[2] * (1 - f[2]) / n[2] + v[1] ** 2 * f[3] * (1 - f[3]) / n[3]
        band = 3.0 * np.sqrt(var_s + var_b) + TOL
    else:
        band = np.full((2, 2), agreement_tol)
    gap = np.abs(slash - back)
    if np.any(gap > band):
        worst = np.unravel_index(int(np.argmax(gap - band)), gap.shape)
        raise AgreementViolated(f"mixtures differ by {gap[worst]:.3e} in cell {worst} (band {band[worst]:.3e})")

    def responses(den: np.ndarray, fp: np.ndarray, fm: np.ndarray, wts: tuple[float, float]) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            plus = np.where(den > 0, wts[0] * fp / den, wts[0])
            minus = np.where(den > 0, wts[1] * fm / den, wts[1])
        out = np.stack([minus, plus])
        if np.any(out < -TOL) or np.any(out > 1 + TOL) or np.any(np.abs(out.sum(axis=0) - 1) > 1e-6):
            raise NonProbabilisticResponse("response ratios fall outside [0, 1]; counts are inconsistent")
        return np.clip(out, 0.0, 1.0)

    return AppendixBModel(
        wp=slash,
        p2_m=responses(slash, f[0], f[1], w),
        p2_mp=responses(back, f[2], f[3], v),
        weights=(wp_, vp_),
    )
