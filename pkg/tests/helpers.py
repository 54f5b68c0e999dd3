"""Test-local oracles and samplers, kept independent of package internals.

Everything here re-derives its own Pauli algebra, matrix conversions and
integrators so that agreement with the package is a genuine cross-check
rather than the same code called twice.
"""

from __future__ import annotations

import numpy as np

from openfringe import DensityMatrix, DissipationParams, HamiltonianParams, check_complete_positivity

IDENTITY = np.eye(2, dtype=complex)
SIGMA_1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMAS = (IDENTITY, SIGMA_1, SIGMA_2, SIGMA_3)


def coeffs_from_matrix(m: np.ndarray) -> np.ndarray:
    """Pauli expansion coefficients, complex in general."""
    return np.array([0.5 * np.trace(s @ m) for s in SIGMAS])


def matrix_from_coeffs(v) -> np.ndarray:
    out = np.zeros((2, 2), dtype=complex)
    for coeff, s in zip(v, SIGMAS):
        out += coeff * s
    return out


def density_to_matrix(rho: DensityMatrix) -> np.ndarray:
    return np.array(
        [[rho.rho1, rho.rho3], [np.conj(rho.rho3), rho.rho2]], dtype=complex
    )


def random_hermitian_state(rng: np.random.Generator, physical: bool = True) -> DensityMatrix:
    """Random Hermitian 2x2; inside the positivity ball with unit trace
    when ``physical``, otherwise arbitrary entries of order one."""
    if physical:
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        radius = 0.5 * rng.uniform(0.0, 1.0) ** (1.0 / 3.0)
        r1, r2, r3 = radius * direction
        return DensityMatrix(0.5 + r3, 0.5 - r3, complex(r1, -r2))
    vals = rng.standard_normal(4)
    return DensityMatrix(vals[0], vals[1], complex(vals[2], vals[3]))


def draw_params(
    rng: np.random.Generator, lo: float = 1e-25, hi: float = 1e-18
) -> DissipationParams:
    """Log-uniform magnitudes with sign-varied off-diagonals."""
    mags = 10.0 ** rng.uniform(np.log10(lo), np.log10(hi), size=6)
    signs = rng.choice([-1.0, 1.0], size=3)
    return DissipationParams(
        a=mags[0],
        b=signs[0] * mags[1],
        c=signs[1] * mags[2],
        alpha=mags[3],
        beta=signs[2] * mags[4],
        gamma=mags[5],
    )


def draw_cp_valid(rng: np.random.Generator) -> DissipationParams:
    while True:
        d = draw_params(rng)
        if check_complete_positivity(d).is_cp:
            return d


def draw_cp_violating(rng: np.random.Generator) -> DissipationParams:
    while True:
        d = draw_params(rng)
        if not check_complete_positivity(d).is_cp:
            return d


def evolution_rhs(h: HamiltonianParams, d: DissipationParams):
    """Right-hand side of the evolution law, evaluated in matrix space.

    The commutator uses the traceless part diag(omega, -omega) of the
    hamiltonian: the identity share commutes with everything, and keeping
    it would only shred omega against a twelve-orders-larger energy in
    floating point.  The dissipative term expands the state over the
    local Pauli basis and applies the literal coefficient matrix, so no
    package generator code is reused.
    """
    h_matrix = np.array([[h.omega, 0.0], [0.0, -h.omega]], dtype=complex)
    diss = -2.0 * np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, d.a, d.b, d.c],
            [0.0, d.b, d.alpha, d.beta],
            [0.0, d.c, d.beta, d.gamma],
        ]
    )

    def rhs(m: np.ndarray) -> np.ndarray:
        commutator = -1j * (h_matrix @ m - m @ h_matrix)
        dissipative = matrix_from_coeffs(diss @ coeffs_from_matrix(m))
        return commutator + dissipative

    return rhs


def _rk4_fixed(k: np.ndarray, v0: np.ndarray, t: float, steps: int) -> np.ndarray:
    dt = t / steps
    v = v0.copy()
    for _ in range(steps):
        k1 = k @ v
        k2 = k @ (v + 0.5 * dt * k1)
        k3 = k @ (v + 0.5 * dt * k2)
        k4 = k @ (v + dt * k3)
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return v


def integrate_evolution(
    h: HamiltonianParams,
    d: DissipationParams,
    rho0: DensityMatrix,
    t: float,
    tol: float = 1e-12,
) -> np.ndarray:
    """Step-doubling adaptive fourth-order integration of the evolution law.

    The flow is linear, so the right-hand side is condensed once into a
    local coefficient-space matrix by applying the matrix-space rule to
    the basis; the integration then marches coefficient vectors.
    """
    rhs = evolution_rhs(h, d)
    k_local = np.empty((4, 4), dtype=complex)
    for nu in range(4):
        k_local[:, nu] = coeffs_from_matrix(rhs(SIGMAS[nu]))
    assert np.max(np.abs(k_local.imag)) < 1e-30
    k_local = k_local.real

    v0 = coeffs_from_matrix(density_to_matrix(rho0)).real
    if t == 0.0:
        return density_to_matrix(rho0)
    steps = 64
    previous = _rk4_fixed(k_local, v0, t, steps)
    while steps <= 2**18:
        steps *= 2
        current = _rk4_fixed(k_local, v0, t, steps)
        if np.max(np.abs(current - previous)) < tol:
            return matrix_from_coeffs(current)
        previous = current
    raise RuntimeError("step-doubling integrator failed to converge")


def lindblad_dissipator(operators, m: np.ndarray) -> np.ndarray:
    """Operator-form dissipator: sum A m A+ - (A+A m + m A+A)/2."""
    out = np.zeros_like(m, dtype=complex)
    for op in operators:
        gram = op.conj().T @ op
        out += op @ m @ op.conj().T - 0.5 * (gram @ m + m @ gram)
    return out


def independent_kossakowski(d: DissipationParams) -> np.ndarray:
    """Coefficient matrix by a test-local least-squares matching solve."""

    def elementary(i: int, j: int) -> np.ndarray:
        si, sj = SIGMAS[i], SIGMAS[j]
        anti = sj @ si
        action = np.empty((4, 4), dtype=complex)
        for nu in range(4):
            moved = si @ SIGMAS[nu] @ sj - 0.5 * (anti @ SIGMAS[nu] + SIGMAS[nu] @ anti)
            action[:, nu] = coeffs_from_matrix(moved)
        return action

    acts = {(i, j): elementary(i, j) for i in (1, 2, 3) for j in (1, 2, 3)}
    columns = [acts[(k, k)].reshape(-1) for k in (1, 2, 3)]
    for i, j in ((1, 2), (1, 3), (2, 3)):
        columns.append((acts[(i, j)] + acts[(j, i)]).reshape(-1))
        columns.append((1j * (acts[(i, j)] - acts[(j, i)])).reshape(-1))
    system = np.stack(columns, axis=1).real

    target = -2.0 * np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, d.a, d.b, d.c],
            [0.0, d.b, d.alpha, d.beta],
            [0.0, d.c, d.beta, d.gamma],
        ]
    ).reshape(-1)
    u, *_ = np.linalg.lstsq(system, target, rcond=None)
    c11, c22, c33, re12, im12, re13, im13, re23, im23 = u
    return np.array(
        [
            [c11, re12 + 1j * im12, re13 + 1j * im13],
            [re12 - 1j * im12, c22, re23 + 1j * im23],
            [re13 - 1j * im13, re23 - 1j * im23, c33],
        ]
    )
