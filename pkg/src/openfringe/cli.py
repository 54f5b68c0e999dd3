"""Command-line front end: config parsing, pipelines, report emission.

Commands
--------
validate-cp   check the six dissipative constants for admissibility
simulate      emit a fringe table (intensities or counts) on a phase grid
synth         draw a synthetic fringe dataset around a count model
fit           chi-squared fit of the count law to a fringe CSV
extract       fit plus the full parameter-extraction chain
report        admissibility verdict plus, when data is given, fit/extract

Configuration is a flat key = value text file with one section per
concern ([params], [geometry], [grid], [counts], [synth], [fit],
[extract], [values]); six dissipative constants plus fit options exceed
what positional flags can carry ergonomically.  Values are GeV and
1/GeV; [geometry] also accepts t_seconds and [params] accepts omega_ev,
with the conversions 1 GeV^-1 = 6.582119569e-25 s and 1 eV = 1e-9 GeV.

Exit codes: 0 success, 2 admissibility violation, 3 fit non-convergence,
4 I/O or parse error, so scripts can branch on physics outcomes.
Identical config and seed produce byte-identical reports.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bloch import DensityMatrix
from .evolution import (
    VALIDITY_THRESHOLD,
    PropagationRequest,
    perturbative_validity,
    propagate_exact,
)
from .fitting import (
    FitConfig,
    FitResult,
    combined_alpha_simplified,
    extraction_to_dict,
    fit_pattern,
    fit_result_to_dict,
    run_extraction,
    synthesize_counts,
    tagged,
    with_simplified_alpha,
)
from .generator import (
    DissipationParams,
    HamiltonianParams,
    check_complete_positivity,
    derived_combos,
    kossakowski_matrix,
    params_from_mapping,
)
from .interference import (
    DEFAULT_PHI_POINTS,
    DEFAULT_PHI_RANGE,
    Branch,
    CountModel,
    ExitProjector,
    FringeParams,
    contrast_from_extrema,
    conservation_residual,
    ideal_pattern,
    intensity,
    pattern_extrema,
    read_fringe_csv,
    simplified_contrast,
    write_fringe_csv,
)
from .values import Measurement

EXIT_OK = 0
EXIT_CP_VIOLATION = 2
EXIT_FIT_FAILURE = 3
EXIT_IO = 4

HBAR_GEV_SECONDS = 6.582119569e-25  # 1 GeV^-1 of time, in seconds
GEV_PER_EV = 1e-9

#: the standard entering state: equal populations, real coherence 1/2
ENTERING_STATE = DensityMatrix(0.5, 0.5, 0.5)


class CliError(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    # argparse would exit 2 on usage problems; 2 is reserved for physics
    def error(self, message):  # noqa: D102 - argparse hook
        raise CliError(EXIT_IO, f"argument error: {message}")


def _load_config(path: str) -> configparser.ConfigParser:
    config = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as handle:
            config.read_file(handle, source=path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise CliError(EXIT_IO, f"config parse error: {exc}") from exc
    return config


def _get_float(
    config: configparser.ConfigParser,
    section: str,
    key: str,
    default: float | None = None,
) -> float:
    if not config.has_option(section, key):
        if default is None:
            raise CliError(EXIT_IO, f"config is missing [{section}] {key}")
        return default
    raw = config.get(section, key)
    try:
        return float(raw)
    except ValueError as exc:
        raise CliError(
            EXIT_IO, f"config [{section}] {key}: not a float: {raw!r}"
        ) from exc


def _get_int(
    config: configparser.ConfigParser, section: str, key: str, default: int
) -> int:
    if not config.has_option(section, key):
        return default
    raw = config.get(section, key)
    try:
        return int(raw)
    except ValueError as exc:
        raise CliError(
            EXIT_IO, f"config [{section}] {key}: not an integer: {raw!r}"
        ) from exc


def _load_params(
    config: configparser.ConfigParser,
) -> tuple[HamiltonianParams, DissipationParams]:
    if not config.has_section("params"):
        raise CliError(EXIT_IO, "config is missing the [params] section")
    mapping = dict(config.items("params"))
    if "omega_ev" in mapping:  # convenience key, converted to GeV
        if "omega" in mapping:
            raise CliError(EXIT_IO, "config [params]: give omega or omega_ev, not both")
        raw = mapping.pop("omega_ev")
        try:
            mapping["omega"] = repr(float(raw) * GEV_PER_EV)
        except ValueError as exc:
            raise CliError(
                EXIT_IO, f"config [params] omega_ev: not a float: {raw!r}"
            ) from exc
    try:
        h, d = params_from_mapping(mapping)
    except ValueError as exc:
        raise CliError(EXIT_IO, f"config [params]: {exc}") from exc
    return h, d


def _load_time(config: configparser.ConfigParser) -> float:
    """Flight time in 1/GeV from [geometry] t or t_seconds."""
    if config.has_option("geometry", "t"):
        t = _get_float(config, "geometry", "t")
    elif config.has_option("geometry", "t_seconds"):
        t = _get_float(config, "geometry", "t_seconds") / HBAR_GEV_SECONDS
    else:
        raise CliError(EXIT_IO, "config needs [geometry] t (1/GeV) or t_seconds")
    if t <= 0.0:
        raise CliError(EXIT_IO, f"flight time must be positive, got {t!r}")
    return t


def _load_grid(config: configparser.ConfigParser, default_points: int) -> np.ndarray:
    phi_min = _get_float(config, "grid", "phi_min", DEFAULT_PHI_RANGE[0])
    phi_max = _get_float(config, "grid", "phi_max", DEFAULT_PHI_RANGE[1])
    points = _get_int(config, "grid", "points", default_points)
    if points < 1:
        raise CliError(EXIT_IO, f"[grid] points must be at least 1, got {points}")
    if points == 1:
        return np.array([phi_min])
    return np.linspace(phi_min, phi_max, points)


def _write_text(out: str | None, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _emit_report(out: str | None, report: dict) -> None:
    _write_text(out, json.dumps(report, indent=2, sort_keys=True) + "\n")


def _violation_unit(degree: int) -> str:
    return "GeV" if degree == 1 else f"GeV^{degree}"


# -- commands -------------------------------------------------------------------


def run_validate_cp(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    h, d = _load_params(config)
    verdict = check_complete_positivity(d)
    min_eig = float(np.linalg.eigvalsh(kossakowski_matrix(d))[0])
    report = {
        "command": "validate-cp",
        "params": {
            name: tagged(value, "GeV")
            for name, value in (
                ("a", d.a), ("b", d.b), ("c", d.c),
                ("alpha", d.alpha), ("beta", d.beta), ("gamma", d.gamma),
                ("E", h.energy), ("omega", h.omega),
            )
        },
        "complete_positivity": {
            "is_cp": verdict.is_cp,
            "r": tagged(verdict.r, "GeV"),
            "s": tagged(verdict.s, "GeV"),
            "t": tagged(verdict.t, "GeV"),
            "violated": [
                {
                    "constraint": v.constraint,
                    "residual": tagged(v.residual, _violation_unit(v.degree)),
                }
                for v in verdict.violated
            ],
            "kossakowski_min_eigenvalue": tagged(min_eig, "GeV"),
        },
    }
    _emit_report(args.out, report)
    return EXIT_OK if verdict.is_cp else EXIT_CP_VIOLATION


def run_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    h, d = _load_params(config)
    t = _load_time(config)
    theta = _get_float(config, "geometry", "theta", 0.0)
    phi_grid = _load_grid(config, default_points=201)
    output_counts = (
        config.get("simulate", "output", fallback="intensity").strip() == "counts"
    )

    warnings: list[str] = []
    validity = perturbative_validity(d, t)
    if not validity.ok:
        warnings.append(
            f"first-order validity exceeded: A*t = {validity.at:.3f} >= "
            f"{VALIDITY_THRESHOLD}; table uses the exact propagator"
        )

    if output_counts:
        n0_plus = _get_float(config, "counts", "n0_plus")
        n0_minus = _get_float(config, "counts", "n0_minus")
        c_plus = _get_float(config, "counts", "contrast_plus")
        c_minus = _get_float(config, "counts", "contrast_minus")

    rows = []
    for phi in phi_grid:
        omega = phi / (2.0 * t)
        state = propagate_exact(
            PropagationRequest(ENTERING_STATE, HamiltonianParams(h.energy, omega), d, t)
        )
        i_plus = intensity(state, ExitProjector(theta, Branch.PLUS))
        i_minus = intensity(state, ExitProjector(theta, Branch.MINUS))
        row = [float(phi)]
        if output_counts:
            bracket = 2.0 * i_plus - 1.0
            row += [n0_plus * (1.0 + c_plus * bracket), n0_minus * (1.0 - c_minus * bracket)]
        else:
            row += [i_plus, i_minus]
        if not args.exact_only:
            ip_pert = ideal_pattern(theta, omega, t, d, Branch.PLUS)
            im_pert = ideal_pattern(theta, omega, t, d, Branch.MINUS)
            row.append(max(abs(i_plus - ip_pert), abs(i_minus - im_pert)))
        rows.append(row)

    header = ["phi", "n_plus", "n_minus"] if output_counts else ["phi", "i_plus", "i_minus"]
    if not args.exact_only:
        header.append("abs_discrepancy")
    buffer = io.StringIO()
    for warning in warnings:
        buffer.write(f"# warning: {warning}\n")
        print(f"warning: {warning}", file=sys.stderr)
    buffer.write(",".join(header) + "\n")
    for row in rows:
        buffer.write(",".join(repr(x) for x in row) + "\n")
    _write_text(args.out, buffer.getvalue())
    return EXIT_OK


def _truth_model(config: configparser.ConfigParser) -> CountModel:
    _, d = _load_params(config)
    combos = derived_combos(d)
    t = _load_time(config)
    theta = _get_float(config, "geometry", "theta", 0.0)
    return CountModel(
        n0_plus=_get_float(config, "counts", "n0_plus"),
        n0_minus=_get_float(config, "counts", "n0_minus"),
        contrast_plus=_get_float(config, "counts", "contrast_plus"),
        contrast_minus=_get_float(config, "counts", "contrast_minus"),
        theta=theta,
        a_comb=combos.a_comb,
        b_mod=combos.b_mod,
        theta_b=combos.theta_b,
        t=t,
    )


def run_synth(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    truth = _truth_model(config)
    phi_grid = _load_grid(config, default_points=DEFAULT_PHI_POINTS)
    exposure = _get_float(config, "synth", "exposure", 1.0)
    seed = args.seed if args.seed is not None else _get_int(config, "synth", "seed", 0)
    try:
        samples = synthesize_counts(truth, phi_grid, exposure=exposure, seed=seed)
    except ValueError as exc:
        raise CliError(EXIT_IO, f"synth: {exc}") from exc
    buffer = io.StringIO()
    write_fringe_csv(buffer, samples, comments=[f"seed = {seed}"])
    _write_text(args.out, buffer.getvalue())
    return EXIT_OK


def _fit_config(config: configparser.ConfigParser, seed_override: int | None) -> FitConfig:
    seed = seed_override if seed_override is not None else _get_int(config, "fit", "seed", 0)
    return FitConfig(
        max_iterations=_get_int(config, "fit", "max_iterations", 200),
        relative_tolerance=_get_float(config, "fit", "relative_tolerance", 1e-10),
        multistart_count=_get_int(config, "fit", "multistart_count", 4),
        seed=seed,
    )


def _run_fit(args: argparse.Namespace, config: configparser.ConfigParser) -> FitResult:
    if args.data is None:
        raise CliError(EXIT_IO, "this command needs --data with a fringe CSV")
    try:
        samples = read_fringe_csv(args.data)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot read fringe data: {exc}") from exc
    share_theta = config.getboolean("fit", "share_theta", fallback=False)
    try:
        return fit_pattern(samples, _fit_config(config, args.seed), share_theta=share_theta)
    except ValueError as exc:
        raise CliError(EXIT_IO, f"fit: {exc}") from exc


def run_fit(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    fit = _run_fit(args, config)
    report = {
        "command": "fit",
        "seed": tagged(_fit_config(config, args.seed).seed, "dimensionless"),
        "fit": fit_result_to_dict(fit),
    }
    _emit_report(args.out, report)
    return EXIT_OK if fit.converged else EXIT_FIT_FAILURE


def _branch_measurements(
    fit: FitResult, suffix: str
) -> tuple[Measurement, Measurement, Measurement, float]:
    errors = fit.standard_errors
    theta_key = f"theta_{suffix}" if f"theta_{suffix}" in fit.estimates else "theta"
    return (
        Measurement(fit.estimates[f"n0_{suffix}"], errors[f"n0_{suffix}"]),
        Measurement(fit.estimates[f"p_{suffix}"], errors[f"p_{suffix}"]),
        Measurement(fit.estimates[f"q_{suffix}"], errors[f"q_{suffix}"]),
        fit.estimates[theta_key],
    )


def _contrast_for_branch(
    config: configparser.ConfigParser,
    fit: FitResult,
    suffix: str,
    source: str,
) -> Measurement:
    if source == "given":
        return Measurement(
            _get_float(config, "extract", f"contrast_{suffix}"),
            _get_float(config, "extract", f"sigma_contrast_{suffix}", 0.0),
        )
    _, p, q, theta = _branch_measurements(fit, suffix)
    if source == "simplified":
        value = simplified_contrast(p.value, q.value, theta)
        return Measurement(value, math.hypot(p.sigma, q.sigma / math.cos(theta)))
    if source == "extrema":
        n0 = fit.estimates[f"n0_{suffix}"]
        params = FringeParams(n0, p.value, q.value, theta)
        branch = Branch.PLUS if suffix == "plus" else Branch.MINUS
        n_max, n_min = pattern_extrema(params, branch)
        value = contrast_from_extrema(n_max, n_min)
        # statistical error inherited from the dominant amplitude
        return Measurement(value, p.sigma)
    raise CliError(EXIT_IO, f"unknown [extract] contrast_source {source!r}")


def run_extract(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    report, status = _extract_report(args, config)
    _emit_report(args.out, report)
    return status


def _extract_report(
    args: argparse.Namespace, config: configparser.ConfigParser
) -> tuple[dict, int]:
    if args.from_values:
        return _extract_from_values(args, config)

    fit = _run_fit(args, config)
    inv_t = 1.0 / _load_time(config)
    source = config.get("extract", "contrast_source", fallback="given").strip()

    report: dict = {
        "command": "extract",
        "seed": tagged(_fit_config(config, args.seed).seed, "dimensionless"),
        "inv_t": tagged(inv_t, "GeV"),
        "contrast_source": source,
        "fit": fit_result_to_dict(fit),
        "warnings": [],
    }

    contrasts: dict[str, Measurement] = {}
    branch_fits = {}
    for suffix in ("plus", "minus"):
        n0, p, q, theta = _branch_measurements(fit, suffix)
        try:
            contrast = _contrast_for_branch(config, fit, suffix, source)
        except ValueError as exc:
            raise CliError(EXIT_IO, f"contrast ({suffix}): {exc}") from exc
        contrasts[suffix] = contrast
        branch_fits[suffix] = (n0, p, q, theta)

    report["contrast"] = {
        suffix: tagged(m.value, "dimensionless", m.sigma)
        for suffix, m in contrasts.items()
    }

    residual = conservation_residual(
        branch_fits["plus"][0], contrasts["plus"],
        branch_fits["minus"][0], contrasts["minus"],
    )
    report["conservation"] = {
        "residual": tagged(residual.value, "counts", residual.sigma),
        "pulls": tagged(residual.pulls(0.0), "dimensionless"),
    }

    extractions = {}
    for suffix in ("plus", "minus"):
        _, p, q, theta = branch_fits[suffix]
        unidentifiable = (
            p.value <= 0.0
            or p.value < 2.0 * p.sigma  # amplitude consistent with zero
            or contrasts[suffix].value <= 0.0
            or fit.degenerate
        )
        if unidentifiable:
            report["warnings"].append(
                f"{suffix}: damping rate unidentifiable from this dataset"
            )
            continue
        result = run_extraction(
            p, q, contrasts[suffix], inv_t, theta, linearized=args.linearized
        )
        if result.negative_damping:
            report["warnings"].append(
                f"{suffix}: fitted amplitude exceeds contrast, negative damping rate"
            )
        extractions[suffix] = result

    if args.simplified:
        simplified = combined_alpha_simplified(
            [(p, q, theta) for (_, p, q, theta) in branch_fits.values()], inv_t
        )
        report["alpha_combined"] = tagged(
            simplified.combined.value, "GeV", simplified.combined.sigma
        )
        report["alpha_determinations"] = [
            tagged(m.value, "GeV", m.sigma) for m in simplified.determinations
        ]
        if "minus" in extractions:
            extractions["minus"] = with_simplified_alpha(
                extractions["minus"], simplified
            )

    report["extraction"] = {
        suffix: extraction_to_dict(result) for suffix, result in extractions.items()
    }
    return report, EXIT_OK if fit.converged else EXIT_FIT_FAILURE


def _extract_from_values(
    args: argparse.Namespace, config: configparser.ConfigParser
) -> tuple[dict, int]:
    """Extraction chain on externally supplied amplitudes, no fit."""
    inv_t = _get_float(config, "values", "inv_t")
    report: dict = {
        "command": "extract",
        "mode": "from-values",
        "inv_t": tagged(inv_t, "GeV"),
        "warnings": [],
        "extraction": {},
    }
    branch_fits = []
    for suffix in ("plus", "minus"):
        if not config.has_option("values", f"p_{suffix}"):
            continue
        p = Measurement(
            _get_float(config, "values", f"p_{suffix}"),
            _get_float(config, "values", f"sigma_p_{suffix}", 0.0),
        )
        q = Measurement(
            _get_float(config, "values", f"q_{suffix}"),
            _get_float(config, "values", f"sigma_q_{suffix}", 0.0),
        )
        theta = _get_float(config, "values", f"theta_{suffix}", 0.0)
        contrast = Measurement(
            _get_float(config, "values", f"contrast_{suffix}"),
            _get_float(config, "values", f"sigma_contrast_{suffix}", 0.0),
        )
        branch_fits.append((p, q, theta))
        result = run_extraction(p, q, contrast, inv_t, theta, linearized=args.linearized)
        if result.negative_damping:
            report["warnings"].append(f"{suffix}: negative damping rate")
        report["extraction"][suffix] = extraction_to_dict(result)
    if not branch_fits:
        raise CliError(EXIT_IO, "config [values] provides no branch amplitudes")
    if args.simplified:
        simplified = combined_alpha_simplified(branch_fits, inv_t)
        report["alpha_combined"] = tagged(
            simplified.combined.value, "GeV", simplified.combined.sigma
        )
    return report, EXIT_OK


def run_report(args: argparse.Namespace) -> int:
    """Admissibility plus, when data is given, the full extraction chain."""
    config = _load_config(args.config)
    _, d = _load_params(config)
    verdict = check_complete_positivity(d)

    if args.data is not None:
        pipeline, status = _extract_report(args, config)
    else:
        pipeline, status = {}, EXIT_OK

    report = {
        "command": "report",
        "complete_positivity": {
            "is_cp": verdict.is_cp,
            "violated": [v.constraint for v in verdict.violated],
        },
        "pipeline": pipeline,
    }
    _emit_report(args.out, report)
    if status != EXIT_OK:
        return status
    return EXIT_OK if verdict.is_cp else EXIT_CP_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="openfringe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, needs_data: bool = False):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--simplified", action="store_true",
                       help="add the single-rate combined estimate")
        p.add_argument("--exact-only", dest="exact_only", action="store_true",
                       help="skip the first-order comparison column")
        p.add_argument("--linearized", action="store_true",
                       help="use the linearized damping inversion")
        p.add_argument("--from-values", dest="from_values", action="store_true",
                       help="run the extraction chain on [values] from the config")
        if needs_data:
            p.add_argument("--data", default=None, help="fringe CSV path")
        p.set_defaults(handler=handler)
        return p

    add("validate-cp", run_validate_cp)
    add("simulate", run_simulate)
    add("synth", run_synth)
    add("fit", run_fit, needs_data=True)
    add("extract", run_extract, needs_data=True)
    add("report", run_report, needs_data=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        data = getattr(args, "data", None)
        if data is not None and not Path(data).exists():
            raise CliError(EXIT_IO, f"data file does not exist: {data!r}")
        if not Path(args.config).exists():
            raise CliError(EXIT_IO, f"config file does not exist: {args.config!r}")
        return args.handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
