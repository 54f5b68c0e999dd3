"""Exact and first-order propagation of the two-beam state.

Two routes are provided.  `propagate_exact` exponentiates the full 4x4
four-vector generator (scaling-and-squaring Pade exponential, double
precision; at this size cost is irrelevant and accuracy is everything)
and serves as the reference.  `propagate_perturbative` evaluates the
closed first-order solution in the six dissipative constants,

    rho1(t) = (1 - gamma t) rho1 + gamma t rho2
              - (C/w) e^{-iwt} sin(wt) rho3 - (C*/w) e^{+iwt} sin(wt) rho4
    rho2(t) = rho1 + rho2 - rho1(t)
    rho3(t) = -(C*/w) e^{-iwt} sin(wt) (rho1 - rho2)
              + (1 - A t) e^{-2iwt} rho3 + (B/2w) sin(2wt) rho4

with A = alpha + a, B = alpha - a + 2ib, C = c + i beta and w the half
splitting.  The w -> 0 limit is taken continuously: every sin(kw t)/(kw)
factor is evaluated as t * sinc(kw t) with a series fallback near zero.

The first-order form is trustworthy only while A t stays small; the
dimensionless product is exposed through `perturbative_validity` with an
acceptance threshold of 0.2, which admits the realistic operating point
(A t around 0.17) while flagging abuse.

Time is measured in 1/GeV throughout (natural units).  Pure functions
over immutable values; batch evaluation over a time grid may run in
parallel and returns the same results as sequential evaluation.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .bloch import PAULI, BlochState, DensityMatrix, from_bloch, to_bloch
from .generator import (
    DissipationParams,
    HamiltonianParams,
    derived_combos,
    full_generator,
)

__all__ = [
    "VALIDITY_THRESHOLD",
    "PropagationRequest",
    "PerturbativeValidity",
    "PerturbativeResult",
    "sinc",
    "transfer_matrix",
    "propagate_exact",
    "propagate_perturbative",
    "perturbative_validity",
    "apply_transfer",
    "choi_state",
]

#: largest A*t the first-order solution is accepted at
VALIDITY_THRESHOLD = 0.2


@dataclass(frozen=True)
class PropagationRequest:
    """Initial state, generator parameters and a nonnegative time."""

    initial: DensityMatrix
    h: HamiltonianParams
    d: DissipationParams
    t: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", float(self.t))
        if self.t < 0.0:
            raise ValueError(
                f"propagation time must be nonnegative (semigroup), got {self.t!r}"
            )


@dataclass(frozen=True)
class PerturbativeValidity:
    """Dimensionless damping-rate-times-time and its verdict."""

    at: float
    ok: bool


@dataclass(frozen=True)
class PerturbativeResult:
    """First-order propagated state with its validity context attached."""

    state: DensityMatrix
    validity: PerturbativeValidity


def sinc(x):
    """Unnormalized sinc, sin(x)/x, elementwise.

    Switches to the series 1 - x^2/6 below |x| = 1e-8, where the next
    term is under machine epsilon, so the 0/0 limit is seamless.
    Accepts scalars or arrays; scalars come back as floats.
    """
    arr = np.asarray(x, dtype=float)
    small = np.abs(arr) < 1e-8
    safe = np.where(small, 1.0, arr)
    out = np.where(small, 1.0 - arr * arr / 6.0, np.sin(safe) / safe)
    if out.ndim == 0:
        return float(out)
    return out


def transfer_matrix(h: HamiltonianParams, d: DissipationParams, t: float) -> np.ndarray:
    """exp(M t) on four-vectors, M the full generator."""
    if t < 0.0:
        raise ValueError(f"propagation time must be nonnegative, got {t!r}")
    return expm(full_generator(h, d) * t)


def propagate_exact(req: PropagationRequest) -> DensityMatrix:
    """Reference propagation through the matrix exponential.

    Preserves the trace to machine precision (the generator's first row
    is identically zero) and, for admissible parameters, keeps the
    spectrum nonnegative up to roundoff.
    """
    moved = transfer_matrix(req.h, req.d, req.t) @ to_bloch(req.initial).vector()
    return from_bloch(BlochState.from_vector(moved))


def perturbative_validity(d: DissipationParams, t: float) -> PerturbativeValidity:
    """Dimensionless (alpha + a) * t against the acceptance threshold."""
    at = derived_combos(d).a_comb * t
    return PerturbativeValidity(at=at, ok=at < VALIDITY_THRESHOLD)


def propagate_perturbative(req: PropagationRequest) -> PerturbativeResult:
    """Closed first-order propagation in the dissipative constants.

    The populations are updated through a single shared flow term, so
    rho1(t) + rho2(t) equals the initial trace to one rounding, and the
    conjugate coherence is structural, so Hermiticity is exact.  The
    attached validity context reports how far the first-order regime was
    stretched; no error is raised outside it.
    """
    combos = derived_combos(req.d)
    w, t = req.h.omega, req.t
    rho = req.initial

    half_osc = t * sinc(w * t)  # sin(w t) / w, continuous at w = 0
    full_osc = t * sinc(2.0 * w * t)  # sin(2 w t) / (2 w)
    phase = cmath.exp(-1j * w * t)
    phase2 = cmath.exp(-2j * w * t)
    pop_gap = rho.rho1 - rho.rho2

    # population flow: gamma exchange plus leakage from the coherences;
    # real for Hermitian input, and applied antisymmetrically
    flow = req.d.gamma * t * pop_gap + 2.0 * (
        combos.c_comb * phase * rho.rho3
    ).real * half_osc

    coherence = (
        -combos.c_comb.conjugate() * phase * half_osc * pop_gap
        + (1.0 - combos.a_comb * t) * phase2 * rho.rho3
        + combos.b_comb * full_osc * rho.rho3.conjugate()
    )

    state = DensityMatrix(rho.rho1 - flow, rho.rho2 + flow, coherence)
    return PerturbativeResult(state, perturbative_validity(req.d, req.t))


# -- extension to one half of an entangled pair -------------------------------


def apply_transfer(transfer: np.ndarray, operator: np.ndarray) -> np.ndarray:
    """Apply a four-vector transfer matrix to an arbitrary 2x2 operator.

    The operator is expanded over the Pauli basis with complex
    coefficients, so non-Hermitian inputs (needed for the entangled-pair
    extension) are handled by linearity.
    """
    coeffs = np.array([0.5 * np.trace(p @ operator) for p in PAULI])
    moved = np.asarray(transfer, dtype=complex) @ coeffs
    return sum(moved[mu] * PAULI[mu] for mu in range(4))


def _choi_basis() -> np.ndarray:
    """Tensor taking a transfer matrix to the evolved entangled pair."""
    basis = np.zeros((4, 4, 4, 4), dtype=complex)
    units = []
    for k in (0, 1):
        for ell in (0, 1):
            e = np.zeros((2, 2), dtype=complex)
            e[k, ell] = 1.0
            units.append(e)
    for mu in range(4):
        for nu in range(4):
            block = np.zeros((4, 4), dtype=complex)
            for e in units:
                coeff = 0.5 * np.trace(PAULI[nu] @ e)
                block += 0.5 * coeff * np.kron(PAULI[mu], e)
            basis[mu, nu] = block
    return basis


_CHOI_BASIS = _choi_basis()


def choi_state(transfer: np.ndarray) -> np.ndarray:
    """State of a maximally entangled pair after evolving one half.

    The returned 4x4 Hermitian matrix has nonnegative spectrum for every
    time exactly when the underlying map is completely positive; merely
    positive (but not completely positive) dynamics push some eigenvalue
    negative, which is the operational witness used by the test suite.
    """
    transfer = np.asarray(transfer, dtype=float)
    return np.einsum("mn,mnij->ij", transfer, _CHOI_BASIS)
