"""Chi-squared fringe fitting and the parameter-extraction chain.

The fit model per exit channel is the four-parameter count law

    N(phi) = n0 * (1 +- [p cos(theta + phi) + q sin(phi)/phi])

minimized in chi-squared by damped least squares with deterministic
multistart.  Counting errors are taken as known (sigma = sqrt(N) unless
a column is supplied), so the parameter covariance is the inverse
curvature at the optimum with no post-hoc residual scaling.

The extraction chain then inverts the amplitude definitions: with an
independently estimated fringe contrast and the known inverse flight
time, the damping rate follows from p / contrast and the real part of
the conjugate coupling from q / contrast.  The equivalent single-rate
(simplified) model provides an internally closed alternative where the
contrast itself comes from p and q alone.

Uncertainties propagate to first order everywhere; inputs to one step
are treated as independent unless a covariance is passed explicitly.

Multistart replicas and Monte Carlo seeds are independent and may run in
parallel; reduction order is fixed by seed index so results equal the
sequential ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .evolution import sinc
from .interference import (
    Branch,
    CountModel,
    FringeParams,
    FringeSample,
    contrast_from_extrema,
    count_pattern,
)
from .values import Measurement

__all__ = [
    "FitConfig",
    "FitResult",
    "ABEstimate",
    "SimplifiedAlpha",
    "ExtractionResult",
    "chi_squared",
    "fit_pattern",
    "extract_ab",
    "extract_a_alpha",
    "combined_alpha_simplified",
    "run_extraction",
    "synthesize_counts",
    "fit_result_to_dict",
    "extraction_to_dict",
    "tagged",
]

#: curvature eigenvalue ratio below which the fit is flagged degenerate
_CONDITION_THRESHOLD = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Optimizer knobs; all defaults are safe for fringe-sized problems."""

    max_iterations: int = 200
    relative_tolerance: float = 1e-10
    multistart_count: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.relative_tolerance <= 0.0:
            raise ValueError("relative_tolerance must be positive")
        if self.multistart_count < 1:
            raise ValueError("multistart_count must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(eq=False)
class FitResult:
    """Fit outcome: named estimates, covariance and diagnostics.

    ``param_names`` fixes the row/column order of ``covariance``.  A
    degenerate curvature (condition ratio under 1e-12) is reported
    through ``degenerate`` and ``null_direction`` rather than raised;
    ``converged`` is the optimizer verdict and is never silently true.
    """

    estimates: dict[str, float]
    covariance: np.ndarray
    chi2: float
    dof: int
    converged: bool
    param_names: tuple[str, ...]
    degenerate: bool = False
    null_direction: np.ndarray | None = None
    message: str = ""

    @property
    def standard_errors(self) -> dict[str, float]:
        diag = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(self.param_names, (float(x) for x in diag)))


def _branch_arrays(
    samples: Sequence[FringeSample], branch: Branch
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    phi = np.array([s.phi for s in samples], dtype=float)
    if branch is Branch.PLUS:
        counts = np.array([s.counts_plus for s in samples], dtype=float)
        sigma = np.array([s.sigma_plus for s in samples], dtype=float)
    else:
        counts = np.array([s.counts_minus for s in samples], dtype=float)
        sigma = np.array([s.sigma_minus for s in samples], dtype=float)
    if np.any(sigma <= 0.0):
        raise ValueError("all count uncertainties must be positive")
    return phi, counts, sigma


def _as_branch_pair(
    model: CountModel | tuple[FringeParams, FringeParams],
) -> tuple[FringeParams, FringeParams]:
    if isinstance(model, CountModel):
        return model.branch_params(Branch.PLUS), model.branch_params(Branch.MINUS)
    plus, minus = model
    return plus, minus


def chi_squared(
    samples: Sequence[FringeSample],
    model: CountModel | tuple[FringeParams, FringeParams],
) -> float:
    """Sum over points and both channels of ((N - model) / sigma)^2."""
    if not samples:
        raise ValueError("chi_squared needs at least one data point")
    plus, minus = _as_branch_pair(model)
    total = 0.0
    for branch, params in ((Branch.PLUS, plus), (Branch.MINUS, minus)):
        phi, counts, sigma = _branch_arrays(samples, branch)
        pulls = (counts - params.evaluate(phi, branch.sign)) / sigma
        total += float(pulls @ pulls)
    return total


def _wrap_phase(theta: float) -> float:
    """Canonical representative in (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def _model_counts(x: np.ndarray, phi: np.ndarray, sign: float) -> np.ndarray:
    n0, p, q, theta = x
    return n0 * (1.0 + sign * (p * np.cos(theta + phi) + q * sinc(phi)))


def _residual_jacobian(
    x: np.ndarray, phi: np.ndarray, sigma: np.ndarray, sign: float
) -> np.ndarray:
    n0, p, q, theta = x
    jac = np.empty((phi.size, 4))
    jac[:, 0] = 1.0 + sign * (p * np.cos(theta + phi) + q * sinc(phi))
    jac[:, 1] = n0 * sign * np.cos(theta + phi)
    jac[:, 2] = n0 * sign * sinc(phi)
    jac[:, 3] = -n0 * sign * p * np.sin(theta + phi)
    return jac / sigma[:, None]


def _starting_points(
    counts: np.ndarray, config: FitConfig, rng: np.random.Generator
) -> list[np.ndarray]:
    n0 = float(np.mean(counts))
    if n0 <= 0.0:
        n0 = 1.0
    c_max, c_min = float(np.max(counts)), float(np.min(counts))
    p0 = contrast_from_extrema(c_max, max(c_min, 0.0)) if c_max > 0.0 else 0.0
    starts = [np.array([n0, p0, 0.0, 0.0])]
    for _ in range(config.multistart_count - 1):
        starts.append(
            np.array(
                [
                    n0 * (1.0 + 0.1 * rng.standard_normal()),
                    min(abs(p0 + 0.3 * rng.standard_normal()), 1.5),
                    0.2 * rng.standard_normal(),
                    rng.uniform(-0.5 * math.pi, 0.5 * math.pi),
                ]
            )
        )
    return starts


def _fit_branch(
    phi: np.ndarray,
    counts: np.ndarray,
    sigma: np.ndarray,
    sign: float,
    config: FitConfig,
    rng: np.random.Generator,
    fix_q: bool = False,
) -> tuple[np.ndarray, np.ndarray, float, bool, str]:
    """Best multistart solution: canonical parameters, curvature, chi2.

    With ``fix_q`` the secondary amplitude is frozen at zero and dropped
    from the parameter vector (and from the returned curvature).
    """
    free = [0, 1, 3] if fix_q else [0, 1, 2, 3]

    def expand(x: np.ndarray) -> np.ndarray:
        if not fix_q:
            return x
        return np.array([x[0], x[1], 0.0, x[2]])

    def residuals(x: np.ndarray) -> np.ndarray:
        return (_model_counts(expand(x), phi, sign) - counts) / sigma

    def jacobian(x: np.ndarray) -> np.ndarray:
        return _residual_jacobian(expand(x), phi, sigma, sign)[:, free]

    best = None
    messages = []
    for start in _starting_points(counts, config, rng):
        result = least_squares(
            residuals,
            start[free],
            jac=jacobian,
            method="lm",
            ftol=config.relative_tolerance,
            xtol=1e-14,
            gtol=1e-14,
            max_nfev=config.max_iterations,
        )
        messages.append(result.message)
        if best is None or result.cost < best.cost:
            best = result
    assert best is not None

    x = best.x.copy()
    if x[1] < 0.0:  # sign of p folds into a pi shift of theta
        x[1] = -x[1]
        x[-1] += math.pi
    x[-1] = _wrap_phase(x[-1])

    jac = jacobian(x)
    curvature = jac.T @ jac
    chi2 = float(np.sum(residuals(x) ** 2))
    converged = bool(best.status > 0) and math.isfinite(chi2)
    return x, curvature, chi2, converged, messages[-1]


def fit_pattern(
    samples: Sequence[FringeSample],
    config: FitConfig | None = None,
    *,
    share_theta: bool = False,
    fix_q_zero: bool = False,
) -> FitResult:
    """Fit the count law to both channels of a fringe dataset.

    Default is an independent instrument phase per channel; pass
    ``share_theta=True`` to constrain a single phase across both, or
    ``fix_q_zero=True`` for the nested model without the secondary
    (sinc) term.  Needs at least six points so the amplitudes per
    channel stay overdetermined.
    """
    config = config or FitConfig()
    if len(samples) < 6:
        raise ValueError(f"need at least 6 data points per channel, got {len(samples)}")
    rng = np.random.default_rng(config.seed)

    if share_theta:
        if fix_q_zero:
            raise ValueError("share_theta and fix_q_zero cannot be combined")
        return _fit_shared_theta(samples, config, rng)

    branch_names = ("n0", "p", "theta") if fix_q_zero else ("n0", "p", "q", "theta")
    names: list[str] = []
    values: list[float] = []
    blocks: list[np.ndarray] = []
    chi2 = 0.0
    converged = True
    message = ""
    for branch in (Branch.PLUS, Branch.MINUS):
        phi, counts, sigma = _branch_arrays(samples, branch)
        x, curvature, branch_chi2, ok, branch_message = _fit_branch(
            phi, counts, sigma, branch.sign, config, rng, fix_q=fix_q_zero
        )
        names += [f"{stem}_{branch.value}" for stem in branch_names]
        values += [float(v) for v in x]
        blocks.append(curvature)
        chi2 += branch_chi2
        converged &= ok
        if not ok:
            message = branch_message

    width = len(branch_names)
    dim = len(names)
    curvature_full = np.zeros((dim, dim))
    curvature_full[:width, :width] = blocks[0]
    curvature_full[width:, width:] = blocks[1]
    covariance, degenerate, null_direction = _invert_curvature(curvature_full)

    return FitResult(
        estimates=dict(zip(names, values)),
        covariance=covariance,
        chi2=chi2,
        dof=2 * len(samples) - dim,
        converged=converged,
        param_names=tuple(names),
        degenerate=degenerate,
        null_direction=null_direction,
        message=message,
    )


def _fit_shared_theta(
    samples: Sequence[FringeSample], config: FitConfig, rng: np.random.Generator
) -> FitResult:
    phi_p, counts_p, sigma_p = _branch_arrays(samples, Branch.PLUS)
    phi_m, counts_m, sigma_m = _branch_arrays(samples, Branch.MINUS)

    def split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xp = np.array([x[0], x[1], x[2], x[6]])
        xm = np.array([x[3], x[4], x[5], x[6]])
        return xp, xm

    def residuals(x: np.ndarray) -> np.ndarray:
        xp, xm = split(x)
        return np.concatenate(
            [
                (_model_counts(xp, phi_p, 1.0) - counts_p) / sigma_p,
                (_model_counts(xm, phi_m, -1.0) - counts_m) / sigma_m,
            ]
        )

    def jacobian(x: np.ndarray) -> np.ndarray:
        xp, xm = split(x)
        jp = _residual_jacobian(xp, phi_p, sigma_p, 1.0)
        jm = _residual_jacobian(xm, phi_m, sigma_m, -1.0)
        out = np.zeros((jp.shape[0] + jm.shape[0], 7))
        out[: jp.shape[0], 0:3] = jp[:, 0:3]
        out[: jp.shape[0], 6] = jp[:, 3]
        out[jp.shape[0] :, 3:6] = jm[:, 0:3]
        out[jp.shape[0] :, 6] = jm[:, 3]
        return out

    best = None
    message = ""
    for start_p, start_m in zip(
        _starting_points(counts_p, config, rng),
        _starting_points(counts_m, config, rng),
    ):
        start = np.array(
            [start_p[0], start_p[1], start_p[2], start_m[0], start_m[1], start_m[2], 0.0]
        )
        result = least_squares(
            residuals,
            start,
            jac=jacobian,
            method="lm",
            ftol=config.relative_tolerance,
            xtol=1e-14,
            gtol=1e-14,
            max_nfev=config.max_iterations,
        )
        message = result.message
        if best is None or result.cost < best.cost:
            best = result
    assert best is not None

    x = best.x.copy()
    if x[1] < 0.0 and x[4] < 0.0:  # shared phase can absorb a joint sign flip
        x[1], x[4] = -x[1], -x[4]
        x[6] += math.pi
    x[6] = _wrap_phase(x[6])

    jac = jacobian(x)
    covariance, degenerate, null_direction = _invert_curvature(jac.T @ jac)
    chi2 = float(np.sum(residuals(x) ** 2))
    names = ("n0_plus", "p_plus", "q_plus", "n0_minus", "p_minus", "q_minus", "theta")
    return FitResult(
        estimates=dict(zip(names, (float(v) for v in x))),
        covariance=covariance,
        chi2=chi2,
        dof=2 * len(samples) - 7,
        converged=bool(best.status > 0) and math.isfinite(chi2),
        param_names=names,
        degenerate=degenerate,
        null_direction=null_direction,
        message=message,
    )


def _invert_curvature(
    curvature: np.ndarray,
) -> tuple[np.ndarray, bool, np.ndarray | None]:
    """Pseudo-inverse covariance plus a degeneracy verdict.

    A curvature eigenvalue below 1e-12 of the largest marks a flat
    direction; the corresponding eigenvector is reported so callers can
    see which parameter combination the data does not constrain.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(curvature)
    largest = float(eigenvalues[-1])
    degenerate = bool(largest <= 0.0 or eigenvalues[0] < _CONDITION_THRESHOLD * largest)
    null_direction = eigenvectors[:, 0].copy() if degenerate else None
    covariance = np.linalg.pinv(curvature, rcond=_CONDITION_THRESHOLD)
    return covariance, degenerate, null_direction


# -- extraction chain ----------------------------------------------------------


@dataclass(frozen=True)
class ABEstimate:
    """Damping rate and real conjugate-coupling part, both in GeV.

    ``negative_damping`` flags an amplitude above the contrast (which
    inverts to a negative rate); the value is reported as-is, never
    clamped.  ``theta`` records the instrument phase of the inputs: the
    measured secondary amplitude fixes only one projection of the
    complex coupling, so its imaginary part is not identifiable from a
    single dataset and only the real part is quoted.
    """

    a_comb: Measurement
    re_b: Measurement
    negative_damping: bool
    theta: float = 0.0


def extract_ab(
    p: Measurement,
    q: Measurement,
    contrast: Measurement,
    inv_t: float,
    theta: float = 0.0,
    *,
    linearized: bool = False,
) -> ABEstimate:
    """Invert the amplitude definitions at known contrast.

    Damping rate from -ln(p / contrast) * inv_t (or its linearized form
    (1 - p / contrast) * inv_t when ``linearized``), coupling from
    (q / contrast) * inv_t.  First-order propagation treats p, q and
    contrast as independent.
    """
    if p.value <= 0.0 or contrast.value <= 0.0:
        raise ValueError("p and contrast must be positive to invert")
    if inv_t <= 0.0:
        raise ValueError("inv_t must be positive")
    ratio = p.value / contrast.value
    if linearized:
        a_value = (1.0 - ratio) * inv_t
        a_sigma = (inv_t / contrast.value) * math.hypot(
            p.sigma, ratio * contrast.sigma
        )
    else:
        a_value = -math.log(ratio) * inv_t
        a_sigma = inv_t * math.hypot(
            p.sigma / p.value, contrast.sigma / contrast.value
        )
    reb_value = (q.value / contrast.value) * inv_t
    reb_sigma = (inv_t / contrast.value) * math.hypot(
        q.sigma, (q.value / contrast.value) * contrast.sigma
    )
    return ABEstimate(
        a_comb=Measurement(a_value, a_sigma),
        re_b=Measurement(reb_value, reb_sigma),
        negative_damping=a_value < 0.0,
        theta=theta,
    )


def extract_a_alpha(
    a_comb: Measurement, re_b: Measurement, covariance: float = 0.0
) -> tuple[Measurement, Measurement]:
    """Individual constants from the fitted combinations.

    a = (a_comb - re_b) / 2 and alpha = (a_comb + re_b) / 2; the
    optional covariance of the two inputs propagates correlated errors.
    """
    a_value = 0.5 * (a_comb.value - re_b.value)
    alpha_value = 0.5 * (a_comb.value + re_b.value)
    base = a_comb.sigma**2 + re_b.sigma**2
    a_var = max(0.25 * (base - 2.0 * covariance), 0.0)
    alpha_var = max(0.25 * (base + 2.0 * covariance), 0.0)
    return (
        Measurement(a_value, math.sqrt(a_var)),
        Measurement(alpha_value, math.sqrt(alpha_var)),
    )


@dataclass(frozen=True)
class SimplifiedAlpha:
    """Single-rate estimate with its per-relation determinations."""

    combined: Measurement
    determinations: tuple[Measurement, ...]
    contrasts: tuple[Measurement, ...]


def combined_alpha_simplified(
    branch_fits: Sequence[tuple[Measurement, Measurement, float]],
    inv_t: float,
) -> SimplifiedAlpha:
    """Single-rate estimate from (p, q, theta) triples, one per channel.

    Assumes the caller has declared the single-rate model (vanishing
    asymmetry constant).  Per channel the contrast follows from
    p + q/cos(theta); the rate-times-time product is then determined
    twice, from 1 - p/contrast and from q/(contrast cos(theta)), each
    with its own propagated error, and every determination is combined
    by inverse-variance weighting.
    """
    if inv_t <= 0.0:
        raise ValueError("inv_t must be positive")
    determinations: list[Measurement] = []
    contrasts: list[Measurement] = []
    for p, q, theta in branch_fits:
        cos_theta = math.cos(theta)
        if abs(cos_theta) < 1e-6:
            raise ValueError(f"cos(theta) too small to invert: theta={theta!r}")
        c_value = p.value + q.value / cos_theta
        if c_value <= 0.0:
            raise ValueError("inferred contrast must be positive")
        c_sigma = math.hypot(p.sigma, q.sigma / cos_theta)
        contrasts.append(Measurement(c_value, c_sigma))

        at1 = 1.0 - p.value / c_value
        at1_sigma = math.hypot(p.sigma / c_value, p.value * c_sigma / c_value**2)
        determinations.append(Measurement(at1 * inv_t, at1_sigma * inv_t))

        denominator = c_value * cos_theta
        at2 = q.value / denominator
        at2_sigma = math.hypot(
            q.sigma / denominator, q.value * c_sigma / (c_value * denominator)
        )
        determinations.append(Measurement(at2 * inv_t, at2_sigma * inv_t))

    exact = [m for m in determinations if m.sigma == 0.0]
    if exact:
        combined = Measurement(sum(m.value for m in exact) / len(exact), 0.0)
    else:
        weights = [1.0 / m.sigma**2 for m in determinations]
        total = sum(weights)
        mean = sum(w * m.value for w, m in zip(weights, determinations)) / total
        combined = Measurement(mean, 1.0 / math.sqrt(total))
    return SimplifiedAlpha(combined, tuple(determinations), tuple(contrasts))


@dataclass(frozen=True)
class ExtractionResult:
    """Complete extraction outcome, all rates in GeV.

    By construction a = (a_comb - re_b)/2 and alpha = (a_comb + re_b)/2
    hold exactly among the stored central values.
    """

    a_comb: Measurement
    re_b: Measurement
    a: Measurement
    alpha: Measurement
    alpha_combined: Measurement | None
    negative_damping: bool
    linearized: bool


def run_extraction(
    p: Measurement,
    q: Measurement,
    contrast: Measurement,
    inv_t: float,
    theta: float = 0.0,
    *,
    linearized: bool = False,
) -> ExtractionResult:
    """Full chain from fitted amplitudes to the individual constants."""
    ab = extract_ab(p, q, contrast, inv_t, theta, linearized=linearized)
    a, alpha = extract_a_alpha(ab.a_comb, ab.re_b)
    return ExtractionResult(
        a_comb=ab.a_comb,
        re_b=ab.re_b,
        a=a,
        alpha=alpha,
        alpha_combined=None,
        negative_damping=ab.negative_damping,
        linearized=linearized,
    )


def with_simplified_alpha(
    result: ExtractionResult, simplified: SimplifiedAlpha
) -> ExtractionResult:
    return replace(result, alpha_combined=simplified.combined)


# -- synthetic data ------------------------------------------------------------


def synthesize_counts(
    truth: CountModel,
    phi_grid: Sequence[float] | np.ndarray,
    exposure: float = 1.0,
    seed: int = 0,
) -> list[FringeSample]:
    """Counting-noise draws around the model curve, bitwise reproducible.

    The expected counts are ``exposure`` times the model; an infinite
    exposure short-circuits the noise and returns the exact curve.  Both
    channels are drawn as whole arrays, plus channel first, so a fixed
    seed fixes every sample.
    """
    if not exposure > 0.0:
        raise ValueError("exposure must be positive")
    phi = np.asarray(phi_grid, dtype=float)
    mean_plus = np.asarray(count_pattern(truth, phi, Branch.PLUS), dtype=float)
    mean_minus = np.asarray(count_pattern(truth, phi, Branch.MINUS), dtype=float)
    if math.isinf(exposure):
        counts_plus, counts_minus = mean_plus, mean_minus
    else:
        scaled_plus = exposure * mean_plus
        scaled_minus = exposure * mean_minus
        if np.any(scaled_plus < 0.0) or np.any(scaled_minus < 0.0):
            raise ValueError("count model is negative somewhere on the grid")
        rng = np.random.default_rng(seed)
        counts_plus = rng.poisson(scaled_plus).astype(float)
        counts_minus = rng.poisson(scaled_minus).astype(float)
    return [
        FringeSample.from_counts(float(f), float(cp), float(cm))
        for f, cp, cm in zip(phi, counts_plus, counts_minus)
    ]


# -- JSON schema ---------------------------------------------------------------


def tagged(value: float, unit: str, sigma: float | None = None) -> dict:
    """One numeric report entry; every number travels with its unit."""
    entry: dict = {"value": float(value), "unit": unit}
    if sigma is not None:
        entry["sigma"] = float(sigma)
    return entry


def _measurement(m: Measurement, unit: str) -> dict:
    return tagged(m.value, unit, m.sigma)


def _estimate_unit(name: str) -> str:
    if name.startswith("n0"):
        return "counts"
    if name.startswith("theta"):
        return "radians"
    return "dimensionless"


def fit_result_to_dict(fit: FitResult) -> dict:
    """Documented JSON form of a fit result.

    estimates: name -> {value, sigma, unit}; covariance: row/column
    order plus nested arrays (entries carry pairwise products of the
    estimate units); chi2/dof tagged dimensionless; convergence and
    degeneracy flags verbatim.
    """
    errors = fit.standard_errors
    return {
        "estimates": {
            name: tagged(fit.estimates[name], _estimate_unit(name), errors[name])
            for name in fit.param_names
        },
        "covariance": {
            "order": list(fit.param_names),
            "matrix": [[float(x) for x in row] for row in fit.covariance],
            "unit": "pairwise products of estimate units",
        },
        "chi2": tagged(fit.chi2, "dimensionless"),
        "dof": tagged(fit.dof, "dimensionless"),
        "converged": fit.converged,
        "degenerate": fit.degenerate,
        "null_direction": (
            None
            if fit.null_direction is None
            else [float(x) for x in fit.null_direction]
        ),
        "message": fit.message,
    }


def extraction_to_dict(result: ExtractionResult) -> dict:
    """Documented JSON form of an extraction result (rates in GeV)."""
    out = {
        "a_comb": _measurement(result.a_comb, "GeV"),
        "re_b": _measurement(result.re_b, "GeV"),
        "a": _measurement(result.a, "GeV"),
        "alpha": _measurement(result.alpha, "GeV"),
        "negative_damping": result.negative_damping,
        "linearized": result.linearized,
    }
    if result.alpha_combined is not None:
        out["alpha_combined"] = _measurement(result.alpha_combined, "GeV")
    return out
