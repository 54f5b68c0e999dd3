"""Two-beam density matrices and their real four-vector representation.

The internal state of the split beam is a 2x2 Hermitian density matrix.
It is stored through three independent numbers, two real populations and
one complex coherence; the lower off-diagonal entry is always the
conjugate of the upper one, so Hermiticity holds by construction.

All dynamics is carried out on the equivalent real four-vector of
coefficients in the expansion over the identity and the Pauli matrices.
The convention, fixed here once for the whole package, is

    sigma1 = [[0, 1], [1, 0]]
    sigma2 = [[0, -i], [i, 0]]
    sigma3 = [[1, 0], [0, -1]]

so that for rho = [[rho1, rho3], [rho3*, rho2]]

    r0 = (rho1 + rho2) / 2        r1 = Re rho3
    r3 = (rho1 - rho2) / 2        r2 = -Im rho3

The trace equals 2*r0 and the state is a positive operator exactly when
r1^2 + r2^2 + r3^2 <= r0^2, i.e. when the vector part lies inside the
Bloch ball.

Everything in this module is an immutable value with pure functions over
it; concurrent use needs no synchronization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PAULI",
    "DensityMatrix",
    "BlochState",
    "to_bloch",
    "from_bloch",
    "eigenvalues",
    "is_physical",
    "von_neumann_entropy",
]


def _pauli_basis() -> tuple[np.ndarray, ...]:
    identity = np.eye(2, dtype=complex)
    s1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    s2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
    s3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    for m in (identity, s1, s2, s3):
        m.flags.writeable = False
    return identity, s1, s2, s3


#: identity plus the three Pauli matrices, in the package-wide convention
PAULI = _pauli_basis()


@dataclass(frozen=True)
class DensityMatrix:
    """2x2 Hermitian state: populations ``rho1``, ``rho2``, coherence ``rho3``.

    The lower off-diagonal entry is implicitly ``rho3.conjugate()``.  A
    physical state additionally has unit trace and nonnegative
    eigenvalues; that is diagnosed by :func:`is_physical`, not enforced
    here, so intermediate non-normalized values remain representable.
    """

    rho1: float
    rho2: float
    rho3: complex

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho1", float(self.rho1))
        object.__setattr__(self, "rho2", float(self.rho2))
        object.__setattr__(self, "rho3", complex(self.rho3))

    @property
    def rho4(self) -> complex:
        """Lower off-diagonal entry, the conjugate coherence."""
        return self.rho3.conjugate()

    @property
    def trace(self) -> float:
        return self.rho1 + self.rho2

    def matrix(self) -> np.ndarray:
        """Dense complex 2x2 form."""
        return np.array(
            [[self.rho1, self.rho3], [self.rho3.conjugate(), self.rho2]],
            dtype=complex,
        )

    @classmethod
    def from_matrix(cls, m: np.ndarray, *, tol: float = 1e-12) -> "DensityMatrix":
        """Build from a dense 2x2 array, rejecting non-Hermitian input.

        Hermiticity is required within ``tol`` relative to the largest
        entry; the stored coherence averages the two off-diagonals so a
        last-digit asymmetry does not leak into later arithmetic.
        """
        m = np.asarray(m, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        scale = max(float(np.max(np.abs(m))), 1.0)
        gap = max(
            abs(m[0, 1] - m[1, 0].conjugate()),
            abs(m[0, 0].imag),
            abs(m[1, 1].imag),
        )
        if gap > tol * scale:
            raise ValueError(f"matrix is not Hermitian within {tol!r}")
        coherence = 0.5 * (m[0, 1] + m[1, 0].conjugate())
        return cls(m[0, 0].real, m[1, 1].real, coherence)


@dataclass(frozen=True)
class BlochState:
    """Real four-vector (r0, r1, r2, r3) of Pauli expansion coefficients."""

    r0: float
    r1: float
    r2: float
    r3: float

    def __post_init__(self) -> None:
        for name in ("r0", "r1", "r2", "r3"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def vector(self) -> np.ndarray:
        return np.array([self.r0, self.r1, self.r2, self.r3])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "BlochState":
        r0, r1, r2, r3 = (float(x) for x in v)
        return cls(r0, r1, r2, r3)

    def in_ball(self, tol: float = 1e-12) -> bool:
        """True when the vector part fits inside the positivity ball."""
        return (
            self.r1 * self.r1 + self.r2 * self.r2 + self.r3 * self.r3
            <= self.r0 * self.r0 + tol
        )


def to_bloch(rho: DensityMatrix) -> BlochState:
    """Expansion coefficients of the state over identity and Paulis."""
    return BlochState(
        0.5 * (rho.rho1 + rho.rho2),
        rho.rho3.real,
        -rho.rho3.imag,
        0.5 * (rho.rho1 - rho.rho2),
    )


def from_bloch(b: BlochState) -> DensityMatrix:
    """Inverse of :func:`to_bloch`."""
    return DensityMatrix(b.r0 + b.r3, b.r0 - b.r3, complex(b.r1, -b.r2))


def eigenvalues(rho: DensityMatrix) -> tuple[float, float]:
    """Both eigenvalues, descending, from the closed 2x2 form.

    The spectrum is mean +- radius with the mean set by the trace and the
    radius by the length of the Bloch vector part; ``hypot`` keeps the
    radius stable for very unbalanced entries.
    """
    mean = 0.5 * (rho.rho1 + rho.rho2)
    radius = math.hypot(0.5 * (rho.rho1 - rho.rho2), abs(rho.rho3))
    return (mean + radius, mean - radius)


def is_physical(
    rho: DensityMatrix,
    *,
    trace_tol: float = 1e-12,
    positivity_tol: float = 1e-10,
) -> bool:
    """Unit trace within ``trace_tol`` and spectrum above ``-positivity_tol``.

    The positivity slack absorbs roundoff accumulated by exact
    propagation while still catching genuine violations at the parameter
    scales this package works at.
    """
    if abs(rho.trace - 1.0) > trace_tol:
        return False
    return eigenvalues(rho)[1] >= -positivity_tol


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-sum(lam * ln lam) over the spectrum, with 0 ln 0 = 0.

    Diagnostic only: the dissipative generators built elsewhere in the
    package never decrease this quantity, but no quantitative rate is
    asserted anywhere.
    """
    total = 0.0
    for lam in eigenvalues(rho):
        if lam > 0.0:
            total -= lam * math.log(lam)
    return total
