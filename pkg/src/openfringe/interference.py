"""Exit-beam observables, fringe models and contrast estimation.

A beam leaving the device lands in one of two complementary exit channels
described by the projectors

    O_plus  = 1/2 [[1, e^{i theta}],  [e^{-i theta},  1]]
    O_minus = 1/2 [[1, e^{i(theta+pi)}], [e^{-i(theta+pi)}, 1]]

whose expectation values give the two fringe intensities.  For the
standard entering state (equal populations, real coherence 1/2) the
first-order dynamics yields the ideal fringe law

    I_pm = 1/2 { 1 +- [ (1 - A t) cos(theta + phi)
                        + |B| t sinc(phi) cos(theta - theta_B) ] }

with phi = 2 omega t the scanned interference phase.  Real devices
attenuate the modulation by a fringe-contrast factor per channel and
rescale by a normalization, giving the count model actually fitted to
data,

    N_pm(phi) = N0_pm { 1 +- [ P_pm cos(theta + phi) + Q_pm sin(phi)/phi ] }
    P_pm = contrast_pm * exp(-A t)
    Q_pm = contrast_pm * |B| t cos(theta - theta_B)

together with the particle-conservation constraint
N0_plus * contrast_plus = N0_minus * contrast_minus.

Fringe-contrast estimation from extrema, N = (max - min)/(max + min), is
exact only for vanishing damping; it is still applied to dissipative
data (with the extrema taken from fitted smooth curves rather than raw
bins, which would bias the contrast upward through counting noise) and
the induced systematic is quantified by the test suite, which checks it
stays below the statistical error at realistic parameter values.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .bloch import DensityMatrix
from .evolution import sinc
from .generator import DissipationParams, derived_combos
from .values import Measurement

__all__ = [
    "Branch",
    "ExitProjector",
    "FringeParams",
    "CountModel",
    "FringeSample",
    "projector_matrix",
    "intensity",
    "ideal_pattern",
    "count_pattern",
    "pattern_extrema",
    "contrast_from_extrema",
    "conservation_residual",
    "model_conservation_residual",
    "simplified_contrast",
    "read_fringe_csv",
    "write_fringe_csv",
    "DEFAULT_PHI_RANGE",
    "DEFAULT_PHI_POINTS",
]

#: default scanned phase window and bin count for synthetic fringe data
DEFAULT_PHI_RANGE = (-3.0 * math.pi, 3.0 * math.pi)
DEFAULT_PHI_POINTS = 32


class Branch(enum.Enum):
    """The two complementary exit channels."""

    PLUS = "plus"
    MINUS = "minus"

    @property
    def sign(self) -> float:
        return 1.0 if self is Branch.PLUS else -1.0


@dataclass(frozen=True)
class ExitProjector:
    """Exit-channel observable: instrument phase plus branch choice."""

    theta: float
    branch: Branch = Branch.PLUS


def projector_matrix(p: ExitProjector) -> np.ndarray:
    """Dense 2x2 form; idempotent with trace one, and the two branches
    sum to the identity."""
    eff = p.theta if p.branch is Branch.PLUS else p.theta + math.pi
    off = 0.5 * complex(math.cos(eff), math.sin(eff))
    return np.array([[0.5, off], [off.conjugate(), 0.5]])


def intensity(rho: DensityMatrix, p: ExitProjector) -> float:
    """Expectation of the exit projector in the given state.

    The minus branch flips the sign of the interference term instead of
    re-evaluating trigonometry at theta + pi, so the two branches sum to
    the trace up to a single rounding.
    """
    modulation = (
        math.cos(p.theta) * rho.rho3.real + math.sin(p.theta) * rho.rho3.imag
    )
    return 0.5 * (rho.rho1 + rho.rho2) + p.branch.sign * modulation


def ideal_pattern(
    theta: float,
    omega: float,
    t: float,
    d: DissipationParams,
    branch: Branch,
) -> float:
    """Ideal fringe intensity of the first-order dynamics.

    Reproduces the exit-projector expectation on the first-order
    propagated standard entering state to near machine precision, which
    the test suite enforces at 1e-12.  The minus branch is returned as
    the exact complement of the plus branch, so the two sum to 1.0
    bitwise (particle conservation); admissible constants keep the law
    inside [0, 1] up to one damping time, since they bound the conjugate
    coupling by the damping rate.
    """
    combos = derived_combos(d)
    phi = 2.0 * omega * t
    bracket = (1.0 - combos.a_comb * t) * math.cos(theta + phi) + (
        combos.b_mod * t * sinc(phi) * math.cos(theta - combos.theta_b)
    )
    plus_value = 0.5 * (1.0 + bracket)
    return plus_value if branch is Branch.PLUS else 1.0 - plus_value


@dataclass(frozen=True)
class FringeParams:
    """Per-branch fringe amplitudes as estimated by a fit: normalization,
    primary amplitude, secondary (sinc) amplitude, instrument phase."""

    n0: float
    p: float
    q: float
    theta: float

    def evaluate(self, phi, sign: float):
        """Count level at scanned phase ``phi`` (scalar or array)."""
        phi = np.asarray(phi, dtype=float)
        out = self.n0 * (
            1.0 + sign * (self.p * np.cos(self.theta + phi) + self.q * sinc(phi))
        )
        if out.ndim == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class CountModel:
    """Physical count model: per-channel normalization and contrast over
    the shared damping and coupling parameters.

    ``a_comb`` (GeV) damps the primary fringe term over the flight time
    ``t`` (1/GeV); ``b_mod`` and ``theta_b`` (GeV, radians) set the
    secondary term.  The derived per-branch amplitudes satisfy
    P = contrast * exp(-a_comb t) and
    Q = contrast * b_mod * t * cos(theta - theta_b).
    """

    n0_plus: float
    n0_minus: float
    contrast_plus: float
    contrast_minus: float
    theta: float
    a_comb: float
    b_mod: float
    theta_b: float
    t: float

    def _p(self, contrast: float) -> float:
        return contrast * math.exp(-self.a_comb * self.t)

    def _q(self, contrast: float) -> float:
        return contrast * self.b_mod * self.t * math.cos(self.theta - self.theta_b)

    @property
    def p_plus(self) -> float:
        return self._p(self.contrast_plus)

    @property
    def p_minus(self) -> float:
        return self._p(self.contrast_minus)

    @property
    def q_plus(self) -> float:
        return self._q(self.contrast_plus)

    @property
    def q_minus(self) -> float:
        return self._q(self.contrast_minus)

    def branch_params(self, branch: Branch) -> FringeParams:
        if branch is Branch.PLUS:
            return FringeParams(self.n0_plus, self.p_plus, self.q_plus, self.theta)
        return FringeParams(self.n0_minus, self.p_minus, self.q_minus, self.theta)


def count_pattern(m: CountModel, phi, branch: Branch):
    """Expected counts at scanned phase ``phi`` (scalar or array)."""
    return m.branch_params(branch).evaluate(phi, branch.sign)


def pattern_extrema(
    model: CountModel | FringeParams,
    branch: Branch,
    phi_range: tuple[float, float] = DEFAULT_PHI_RANGE,
    points: int = 20001,
) -> tuple[float, float]:
    """Extrema of the smooth count curve on a dense phase grid.

    This is the curve-based route for contrast estimation: raw bin
    extrema inherit counting noise and bias the contrast upward, so the
    extrema are taken from the (fitted) smooth model instead.
    """
    params = model.branch_params(branch) if isinstance(model, CountModel) else model
    phi = np.linspace(phi_range[0], phi_range[1], points)
    curve = params.evaluate(phi, branch.sign)
    return float(np.max(curve)), float(np.min(curve))


def contrast_from_extrema(n_max: float, n_min: float) -> float:
    """(max - min) / (max + min); exact contrast for undamped fringes."""
    if n_min < 0.0 or n_max <= 0.0:
        raise ValueError(f"extrema must satisfy n_max > 0, n_min >= 0; "
                         f"got ({n_max!r}, {n_min!r})")
    if n_min > n_max:
        raise ValueError(f"n_min {n_min!r} exceeds n_max {n_max!r}")
    return (n_max - n_min) / (n_max + n_min)


def conservation_residual(
    n0_plus: Measurement,
    contrast_plus: Measurement,
    n0_minus: Measurement,
    contrast_minus: Measurement,
) -> Measurement:
    """N0+ * contrast+ minus N0- * contrast-, with propagated error.

    Particle conservation requires the residual to vanish; a residual
    compatible with zero within the combined uncertainty is the standard
    consistency check on independently estimated contrasts.
    """
    value = n0_plus.value * contrast_plus.value - n0_minus.value * contrast_minus.value
    sigma = math.sqrt(
        (contrast_plus.value * n0_plus.sigma) ** 2
        + (n0_plus.value * contrast_plus.sigma) ** 2
        + (contrast_minus.value * n0_minus.sigma) ** 2
        + (n0_minus.value * contrast_minus.sigma) ** 2
    )
    return Measurement(value, sigma)


def model_conservation_residual(m: CountModel) -> float:
    """Central conservation residual of a count model."""
    return m.n0_plus * m.contrast_plus - m.n0_minus * m.contrast_minus


def simplified_contrast(p: float, q: float, theta: float) -> float:
    """Contrast from the fitted amplitudes under the single-rate model.

    When the dissipation reduces to one rate (the a = 0 collapse), the
    two amplitudes read P = contrast * (1 - rate*t) and
    Q = contrast * rate * t * cos(theta) at first order, and eliminating
    rate*t gives contrast = P + Q / cos(theta) with no further inputs.
    """
    cos_theta = math.cos(theta)
    if abs(cos_theta) < 1e-6:
        raise ValueError(f"cos(theta) too small to invert: theta={theta!r}")
    return p + q / cos_theta


# -- fringe data and CSV schema ------------------------------------------------


@dataclass(frozen=True)
class FringeSample:
    """One scanned-phase bin: counts and errors for both exit channels."""

    phi: float
    counts_plus: float
    counts_minus: float
    sigma_plus: float
    sigma_minus: float

    @classmethod
    def from_counts(
        cls,
        phi: float,
        counts_plus: float,
        counts_minus: float,
        sigma_plus: float | None = None,
        sigma_minus: float | None = None,
    ) -> "FringeSample":
        """Counting-statistics default: sigma = sqrt(max(counts, 1))."""
        if sigma_plus is None:
            sigma_plus = math.sqrt(max(counts_plus, 1.0))
        if sigma_minus is None:
            sigma_minus = math.sqrt(max(counts_minus, 1.0))
        return cls(phi, counts_plus, counts_minus, sigma_plus, sigma_minus)


_CSV_FIELDS = ("phi", "n_plus", "sigma_plus", "n_minus", "sigma_minus")


def read_fringe_csv(source: str | Path | TextIO) -> list[FringeSample]:
    """Read samples from CSV with header phi,n_plus[,sigma_plus],n_minus[,sigma_minus].

    phi is in radians.  Missing sigma columns fall back to the
    counting-statistics default.  Blank lines and lines starting with
    '#' are skipped.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as handle:
            return read_fringe_csv(handle)
    rows = [line for line in source if line.strip() and not line.lstrip().startswith("#")]
    if not rows:
        raise ValueError("empty fringe CSV")
    reader = csv.DictReader(rows)
    header = set(reader.fieldnames or ())
    required = {"phi", "n_plus", "n_minus"}
    if not required.issubset(header):
        raise ValueError(
            f"fringe CSV must contain columns {sorted(required)}, got {sorted(header)}"
        )
    samples = []
    for lineno, row in enumerate(reader, start=2):
        try:
            sigma_plus = float(row["sigma_plus"]) if "sigma_plus" in header else None
            sigma_minus = float(row["sigma_minus"]) if "sigma_minus" in header else None
            samples.append(
                FringeSample.from_counts(
                    float(row["phi"]),
                    float(row["n_plus"]),
                    float(row["n_minus"]),
                    sigma_plus,
                    sigma_minus,
                )
            )
        except (TypeError, ValueError, KeyError) as exc:
            raise ValueError(f"fringe CSV row {lineno}: {exc}") from exc
    if not samples:
        raise ValueError("fringe CSV contains a header but no data rows")
    return samples


def write_fringe_csv(
    target: str | Path | TextIO,
    samples: Iterable[FringeSample],
    comments: Sequence[str] = (),
) -> None:
    """Write samples in the schema read back by :func:`read_fringe_csv`."""
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as handle:
            write_fringe_csv(handle, samples, comments)
        return
    for comment in comments:
        target.write(f"# {comment}\n")
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for s in samples:
        writer.writerow(
            [repr(s.phi), repr(s.counts_plus), repr(s.sigma_plus),
             repr(s.counts_minus), repr(s.sigma_minus)]
        )
