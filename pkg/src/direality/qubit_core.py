"""Two-qubit algebra in the Pauli basis.

A two-qubit state is carried as the triple ``(a, b, T)``::

    rho = 1/4 (I⊗I + a·σ⊗I + I⊗b·σ + Σ_ij T_ij σ_i⊗σ_j)

The first qubit is the one being steered; steering measurements act on the
second qubit.  The 4x4 matrix form only appears at the I/O boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DegenerateSteering, NonPhysicalState

TOL = 1e-9

IDENTITY = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)


def _frozen(x: Any, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


def unit(v: Any) -> np.ndarray:
    """Return ``v`` normalised to unit length."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot normalise the zero vector")
    return v / n


def _check_unit(v: np.ndarray, name: str) -> None:
    if abs(np.linalg.norm(v) - 1.0) > TOL:
        raise ValueError(f"{name} must be a unit vector, got |{name}|={np.linalg.norm(v):.12g}")


@dataclass(frozen=True)
class QubitObservable:
    """Unbiased two-outcome qubit observable ``{(1 ± ε σ·axis)/2}``.

    ``noise`` is the sharpness ε; ε = 1 is the projective measurement.
    """

    axis: np.ndarray
    noise: float = 1.0

    def __post_init__(self) -> None:
        axis = _frozen(self.axis, (3,))
        _check_unit(axis, "axis")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise must lie in [0, 1], got {self.noise}")
        object.__setattr__(self, "axis", axis)

    def expectation(self, r: Any) -> float:
        return expectation(r, self)


def expectation(r: Any, obs: QubitObservable) -> float:
    """Mean of ``obs`` on the qubit with Bloch vector ``r``: ε (axis · r)."""
    return float(obs.noise * np.dot(obs.axis, np.asarray(r, dtype=float)))


@dataclass(frozen=True)
class SteeredOutcome:
    probability: float
    state: np.ndarray


@dataclass(frozen=True)
class TwoQubitState:
    """Pauli-basis two-qubit state; ``T[i, j] = <σ_i ⊗ σ_j>``."""

    a: np.ndarray
    b: np.ndarray
    T: np.ndarray = field(repr=True)

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", _frozen(self.a, (3,)))
        object.__setattr__(self, "b", _frozen(self.b, (3,)))
        object.__setattr__(self, "T", _frozen(self.T, (3, 3)))

    def density_matrix(self) -> np.ndarray:
        rho = np.kron(IDENTITY, IDENTITY).astype(complex)
        for i, s in enumerate(PAULIS):
            rho += self.a[i] * np.kron(s, IDENTITY)
            rho += self.b[i] * np.kron(IDENTITY, s)
            for j, t in enumerate(PAULIS):
                rho += self.T[i, j] * np.kron(s, t)
        return rho / 4.0

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.density_matrix()).min())

    def is_physical(self, tol: float = TOL) -> bool:
        return self.min_eigenvalue() >= -tol

    def to_dict(self) -> dict[str, Any]:
        return {"a": self.a.tolist(), "b": self.b.tolist(), "T": self.T.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any], check: bool = True) -> "TwoQubitState":
        try:
            state = cls(d["a"], d["b"], d["T"])
        except (KeyError, ValueError, TypeError) as exc:
            raise NonPhysicalState(f"malformed state record: {exc}") from exc
        if check and not state.is_physical():
            raise NonPhysicalState(
                f"state is not positive semidefinite (min eigenvalue {state.min_eigenvalue():.3e})"
            )
        return state

    @classmethod
    def from_json(cls, text: str, check: bool = True) -> "TwoQubitState":
        return cls.from_dict(json.loads(text), check=check)


def from_density_matrix(rho: Any, tol: float = TOL) -> TwoQubitState:
    """Pauli decomposition of a 4x4 density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise NonPhysicalState(f"expected a 4x4 matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise NonPhysicalState("matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise NonPhysicalState(f"trace is {np.trace(rho).real:.12g}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise NonPhysicalState("matrix is not positive semidefinite")
    a = [np.trace(rho @ np.kron(s, IDENTITY)).real for s in PAULIS]
    b = [np.trace(rho @ np.kron(IDENTITY, s)).real for s in PAULIS]
    T = [[np.trace(rho @ np.kron(s, t)).real for t in PAULIS] for s in PAULIS]
    return TwoQubitState(a, b, T)


def from_pure(psi: Any) -> TwoQubitState:
    psi = np.asarray(psi, dtype=complex).reshape(4)
    psi = psi / np.linalg.norm(psi)
    return from_density_matrix(np.outer(psi, psi.conj()))


def singlet() -> TwoQubitState:
    return TwoQubitState(np.zeros(3), np.zeros(3), -np.eye(3))


def werner(w: float) -> TwoQubitState:
    """``w * singlet + (1 - w) * I/4``."""
    return TwoQubitState(np.zeros(3), np.zeros(3), -w * np.eye(3))


def product(a: Any, b: Any) -> TwoQubitState:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return TwoQubitState(a, b, np.outer(a, b))


def random_pure_state(seed: int | np.random.Generator) -> TwoQubitState:
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    return from_pure(psi)


def random_mixed_state(seed: int | np.random.Generator, rank: int = 4) -> TwoQubitState:
    """Random state from a Ginibre ensemble of the given rank."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return from_density_matrix(rho / np.trace(rho).real)


def steer(state: TwoQubitState, m: Any, outcome: int, tol: float = TOL) -> SteeredOutcome:
    """Born-rule steering of the first qubit by a projective measurement on the second.

    Measuring ``σ·m`` on the second qubit gives ``outcome`` with probability
    ``(1 ± b·m)/2`` and leaves the first qubit with Bloch vector
    ``(a ± T m) / (1 ± b·m)``.
    """
    if outcome not in (1, -1):
        raise ValueError(f"outcome must be +1 or -1, got {outcome}")
    m = np.asarray(m, dtype=float)
    _check_unit(m, "m")
    denom = 1.0 + outcome * float(state.b @ m)
    p = 0.5 * denom
    if p < tol:
        raise DegenerateSteering(f"outcome {outcome:+d} along m has probability {p:.3e}")
    r = (state.a + outcome * (state.T @ m)) / denom
    r.setflags(write=False)
    return SteeredOutcome(p, r)
