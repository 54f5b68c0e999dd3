"""Evolution generator of the dissipative two-beam system.

The time evolution is generated by a commutator with a diagonal two-level
hamiltonian plus a linear dissipative map.  In the four-vector picture of
:mod:`openfringe.bloch` the dissipative map is the symmetric matrix

        -2 * [[0,  0,     0,     0    ],
              [0,  a,     b,     c    ],
              [0,  b,     alpha, beta ],
              [0,  c,     beta,  gamma]]

acting on (r0, r1, r2, r3); the vanishing first row encodes probability
conservation.  The six real constants are free phenomenological inputs,
but not every choice generates acceptable dynamics: positivity must
survive coupling the beam to an arbitrary bystander system (complete
positivity).  That requirement is equivalent to the inequality system on

    2R = alpha + gamma - a
    2S = a + gamma - alpha
    2T = a + alpha - gamma

namely R, S, T >= 0 together with

    RS >= b^2,  RT >= c^2,  ST >= beta^2,
    RST >= 2 b c beta + R beta^2 + S c^2 + T b^2.

`check_complete_positivity` evaluates those inequalities directly and
reports violations as data.  Independently, `kossakowski_matrix` builds
the coefficient matrix of the equivalent operator-form dissipator

    L[rho] = sum_ij C_ij (sigma_i rho sigma_j - {sigma_j sigma_i, rho}/2)

by solving a linear matching problem against the four-vector action; its
positive semidefiniteness is the textbook complete-positivity criterion.
The matching system is assembled and solved numerically on purpose (no
closed form is hard-coded), so agreement between the two routes is a
genuine cross-validation rather than a tautology.

All functions are pure over immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .bloch import PAULI

__all__ = [
    "HamiltonianParams",
    "DissipationParams",
    "DerivedCombos",
    "Violation",
    "CpVerdict",
    "hamiltonian_matrix",
    "dissipator_matrix",
    "derived_combos",
    "check_complete_positivity",
    "kossakowski_matrix",
    "full_generator",
    "PARAM_KEYS",
    "params_to_text",
    "params_from_text",
    "params_from_mapping",
]


@dataclass(frozen=True)
class HamiltonianParams:
    """Diagonal two-level hamiltonian diag(energy + omega, energy - omega).

    ``energy`` is the incident kinetic energy in GeV; ``omega`` is half
    the splitting between the two internal beams, also in GeV.  The sign
    of ``omega`` encodes the slab orientation and its typical magnitude
    in a real device is around 1e-16 GeV.
    """

    energy: float
    omega: float


@dataclass(frozen=True)
class DissipationParams:
    """The six real dissipative constants, all in GeV.

    Admissible dynamics require a, alpha, gamma >= 0 (and more, see
    :func:`check_complete_positivity`); violations are representable and
    are reported by the checker rather than rejected here.
    """

    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    @classmethod
    def zero(cls) -> "DissipationParams":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DerivedCombos:
    """Combinations of the six constants entering the fringe observables.

    ``a_comb = alpha + a`` is the damping rate of the primary fringe
    term, ``b_comb = alpha - a + 2i b`` couples the coherence to its
    conjugate, ``c_comb = c + i beta`` couples populations to coherences.
    ``b_mod`` and ``theta_b`` are modulus and phase of ``b_comb``.
    """

    a_comb: float
    b_comb: complex
    c_comb: complex
    b_mod: float
    theta_b: float


@dataclass(frozen=True)
class Violation:
    """One failed admissibility constraint and its (negative) residual."""

    constraint: str
    residual: float
    degree: int  # GeV power of the residual


@dataclass(frozen=True)
class CpVerdict:
    """Outcome of the complete-positivity inequality system."""

    is_cp: bool
    r: float
    s: float
    t: float
    violated: tuple[Violation, ...]


def hamiltonian_matrix(h: HamiltonianParams) -> np.ndarray:
    """diag(energy + omega, energy - omega) as a dense complex array."""
    return np.array(
        [[h.energy + h.omega, 0.0], [0.0, h.energy - h.omega]], dtype=complex
    )


def dissipator_matrix(d: DissipationParams) -> np.ndarray:
    """Symmetric 4x4 four-vector action of the dissipative map.

    First row and column vanish identically (trace conservation and no
    drift), reflecting that the map can be generated by Hermitian
    operators alone.
    """
    return -2.0 * np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, d.a, d.b, d.c],
            [0.0, d.b, d.alpha, d.beta],
            [0.0, d.c, d.beta, d.gamma],
        ]
    )


def derived_combos(d: DissipationParams) -> DerivedCombos:
    b_comb = complex(d.alpha - d.a, 2.0 * d.b)
    return DerivedCombos(
        a_comb=d.alpha + d.a,
        b_comb=b_comb,
        c_comb=complex(d.c, d.beta),
        b_mod=abs(b_comb),
        theta_b=math.atan2(2.0 * d.b, d.alpha - d.a),
    )


def check_complete_positivity(d: DissipationParams) -> CpVerdict:
    """Evaluate the full admissibility inequality system.

    Violations are data, not errors.  Each inequality is tested with an
    absolute slack of 1e-12 * scale^degree, scale = max(a, alpha, gamma),
    so exact boundary cases (for instance the a = 0 collapse where
    S = T = 0) classify deterministically instead of flapping on
    roundoff.
    """
    scale = max(d.a, d.alpha, d.gamma, 0.0)
    r = 0.5 * (d.alpha + d.gamma - d.a)
    s = 0.5 * (d.a + d.gamma - d.alpha)
    t = 0.5 * (d.a + d.alpha - d.gamma)
    det_lhs = r * s * t
    det_rhs = 2.0 * d.b * d.c * d.beta + r * d.beta**2 + s * d.c**2 + t * d.b**2
    checks = (
        ("a_nonneg", d.a, 1),
        ("alpha_nonneg", d.alpha, 1),
        ("gamma_nonneg", d.gamma, 1),
        ("r_nonneg", r, 1),
        ("s_nonneg", s, 1),
        ("t_nonneg", t, 1),
        ("rs_b2", r * s - d.b * d.b, 2),
        ("rt_c2", r * t - d.c * d.c, 2),
        ("st_beta2", s * t - d.beta * d.beta, 2),
        ("det", det_lhs - det_rhs, 3),
    )
    violated = tuple(
        Violation(name, residual, degree)
        for name, residual, degree in checks
        if residual < -1e-12 * scale**degree
    )
    return CpVerdict(is_cp=not violated, r=r, s=s, t=t, violated=violated)


def _elementary_action(i: int, j: int) -> np.ndarray:
    """Four-vector action of rho -> s_i rho s_j - {s_j s_i, rho} / 2."""
    si, sj = PAULI[i], PAULI[j]
    anti = sj @ si
    action = np.empty((4, 4), dtype=complex)
    for nu in range(4):
        out = si @ PAULI[nu] @ sj - 0.5 * (anti @ PAULI[nu] + PAULI[nu] @ anti)
        for mu in range(4):
            action[mu, nu] = 0.5 * np.trace(PAULI[mu] @ out)
    return action


def _matching_system() -> np.ndarray:
    """Real 16x9 map from Hermitian coefficient matrices to 4x4 actions.

    Columns correspond, in order, to the three diagonal coefficients,
    then real and imaginary parts of the (1,2), (1,3), (2,3) entries.
    Pairing each off-diagonal entry with its conjugate keeps the induced
    four-vector action real, which the assembly asserts.
    """
    acts = {(i, j): _elementary_action(i, j) for i in (1, 2, 3) for j in (1, 2, 3)}
    columns = [acts[(k, k)] for k in (1, 2, 3)]
    for i, j in ((1, 2), (1, 3), (2, 3)):
        columns.append(acts[(i, j)] + acts[(j, i)])
        columns.append(1j * (acts[(i, j)] - acts[(j, i)]))
    system = np.stack([col.reshape(-1) for col in columns], axis=1)
    if np.max(np.abs(system.imag)) > 1e-13:
        raise AssertionError("Hermitian coefficient channels must act real")
    return system.real


_MATCHING = _matching_system()
_MATCHING_PINV = np.linalg.pinv(_MATCHING)


def kossakowski_matrix(d: DissipationParams) -> np.ndarray:
    """Coefficient matrix of the operator-form dissipator, 3x3 Hermitian.

    Solved from the linear matching of the operator form's four-vector
    action against :func:`dissipator_matrix`; the matching system has
    full column rank and every dissipator of this family lies in its
    range, so the least-squares solution is the exact unique one.  The
    matrix is positive semidefinite exactly when the dynamics is
    completely positive.
    """
    u = _MATCHING_PINV @ dissipator_matrix(d).reshape(-1)
    c11, c22, c33, re12, im12, re13, im13, re23, im23 = u
    return np.array(
        [
            [c11, complex(re12, im12), complex(re13, im13)],
            [complex(re12, -im12), c22, complex(re23, im23)],
            [complex(re13, -im13), complex(re23, -im23), c33],
        ]
    )


def full_generator(h: HamiltonianParams, d: DissipationParams) -> np.ndarray:
    """4x4 real generator M of the four-vector flow dr/dt = M r.

    The commutator part contributes a rotation of the (r1, r2) plane at
    angular rate 2*omega (the identity share of the hamiltonian commutes
    away, so ``energy`` drops out); the dissipative part is
    :func:`dissipator_matrix`.  The first row of M vanishes identically.
    """
    m = dissipator_matrix(d)
    m[1, 2] -= 2.0 * h.omega
    m[2, 1] += 2.0 * h.omega
    return m


# -- plain-text parameter serialization --------------------------------------

PARAM_KEYS = ("a", "b", "c", "alpha", "beta", "gamma", "E", "omega")


def params_to_text(h: HamiltonianParams, d: DissipationParams) -> str:
    """Flat ``key = value`` text, values in GeV as decimal floats."""
    values = {
        "a": d.a,
        "b": d.b,
        "c": d.c,
        "alpha": d.alpha,
        "beta": d.beta,
        "gamma": d.gamma,
        "E": h.energy,
        "omega": h.omega,
    }
    return "".join(f"{key} = {values[key]!r}\n" for key in PARAM_KEYS)


def params_from_mapping(
    mapping: Mapping[str, object],
) -> tuple[HamiltonianParams, DissipationParams]:
    """Parameters from a key/value mapping; keys are case-insensitive.

    Missing keys default to zero; unknown keys are rejected so typos do
    not silently produce vacuum dynamics.
    """
    values = dict.fromkeys(k.lower() for k in PARAM_KEYS)
    for key, raw in mapping.items():
        name = key.strip().lower()
        if name not in values:
            raise ValueError(f"unknown parameter key {key!r}")
        try:
            values[name] = float(raw)  # type: ignore[arg-type]
        except (TypeError, ValueError) as exc:
            raise ValueError(f"parameter {key!r}: not a float: {raw!r}") from exc
    filled = {k: (0.0 if v is None else v) for k, v in values.items()}
    h = HamiltonianParams(energy=filled["e"], omega=filled["omega"])
    d = DissipationParams(
        a=filled["a"],
        b=filled["b"],
        c=filled["c"],
        alpha=filled["alpha"],
        beta=filled["beta"],
        gamma=filled["gamma"],
    )
    return h, d


def params_from_text(text: str) -> tuple[HamiltonianParams, DissipationParams]:
    """Inverse of :func:`params_to_text`.

    Accepts ``key = value`` lines, blank lines and ``#`` comments;
    reports the offending line number on parse failure.
    """
    mapping: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    try:
        return params_from_mapping(mapping)
    except ValueError as exc:
        raise ValueError(f"parameter text: {exc}") from exc
