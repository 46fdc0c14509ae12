"""Command-line interface: fit, simulate, and experiment subcommands.

Exit codes: 0 on success, 2 on configuration errors, 3 on input parse
errors.  Option values resolve as CLI flag > config file (key=value lines,
dashes or underscores) > built-in default.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DomainError, ParseError
from .fitting import FitConfig
from .pipeline import MODEL_KINDS, load_inputs, run_sitewise, write_results
from .simulate import (
    CovariateSpec,
    SimSpec,
    run_experiment,
    simulate_dataset,
    write_dataset_csv,
)

_FIT_DEFAULTS = {
    "model": "rcg",
    "format": "tsv",
    "workers": 1,
    "mode": "beta",
    "offset": 100.0,
    "clamp_eps": 1e-6,
    "step_length": 0.1,
    "max_iter": 5000,
    "seed": 0,
    "figures": None,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcgbeta",
        description="Site-wise regression for methylation beta values.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model at every site of a methylation matrix")
    fit.add_argument("--meth", required=True, help="methylation matrix CSV (or raw M file)")
    fit.add_argument("--cov", required=True, help="covariate CSV (sample_id first)")
    fit.add_argument("--model", choices=MODEL_KINDS, default=None)
    fit.add_argument("--out", required=True, help="output table path")
    fit.add_argument("--format", choices=("tsv", "csv"), default=None)
    fit.add_argument("--workers", type=int, default=None)
    fit.add_argument("--mode", choices=("beta", "raw_pair", "raw_long"), default=None)
    fit.add_argument("--offset", type=float, default=None,
                     help="offset a in b = M/(M+U+a); raw modes only")
    fit.add_argument("--clamp-eps", type=float, default=None,
                     help="boundary clamping width for responses")
    fit.add_argument("--step-length", type=float, default=None)
    fit.add_argument("--max-iter", type=int, default=None)
    fit.add_argument("--seed", type=int, default=None,
                     help="reserved; the fitters are deterministic")
    fit.add_argument("--config", default=None, help="key=value option file")
    fit.add_argument("--figures", default=None,
                     help="directory for report figures (optional)")

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--n-samples", type=int, required=True)
    sim.add_argument("--n-sites", type=int, required=True)
    sim.add_argument("--alpha", type=float, default=2.0)
    sim.add_argument("--rho", type=float, default=0.3)
    sim.add_argument("--gamma", default="0.0",
                     help="comma list of effect coefficients (intercept first)")
    sim.add_argument("--zeta-u", default=None,
                     help="comma list of baseline rate coefficients; zeros by default")
    sim.add_argument("--covariates", default="",
                     help="comma list of generators, e.g. normal,bernoulli:0.5")
    sim.add_argument("--offset", type=float, default=0.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-prefix", required=True)

    exp = sub.add_parser("experiment", help="run a simulation grid and write a report")
    exp.add_argument("--out-dir", required=True)
    exp.add_argument("--models", default="rcg", help="comma list from rcg,mvalue,betareg")
    exp.add_argument("--n-samples-grid", default="100,400",
                     help="comma list of per-site sample sizes")
    exp.add_argument("--gamma1-grid", default="0.0,0.5",
                     help="comma list of effect sizes for the single covariate")
    exp.add_argument("--n-sites", type=int, default=20)
    exp.add_argument("--replicates", type=int, default=1)
    exp.add_argument("--alpha", type=float, default=2.0)
    exp.add_argument("--rho", type=float, default=0.3)
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--format", choices=("tsv", "csv"), default="csv")
    exp.add_argument("--workers", type=int, default=1)
    return parser


def _parse_config_file(path) -> dict:
    values = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {line_no}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args, key: str):
    cli_value = getattr(args, key)
    if cli_value is not None:
        return cli_value
    if args.config:
        file_values = _parse_config_file(args.config)
        if key in file_values:
            default = _FIT_DEFAULTS[key]
            raw = file_values[key]
            if isinstance(default, bool):
                return raw.lower() in ("1", "true", "yes")
            if isinstance(default, int):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
            return raw
    return _FIT_DEFAULTS[key]


def _parse_float_list(text: str, flag: str) -> list[float]:
    if not text.strip():
        return []
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ConfigError(f"{flag} must be a comma list of numbers, got {text!r}") from None


def _cmd_fit(args) -> int:
    model = _resolve(args, "model")
    out_format = _resolve(args, "format")
    workers = int(_resolve(args, "workers"))
    mode = _resolve(args, "mode")
    offset = float(_resolve(args, "offset"))
    clamp_eps = float(_resolve(args, "clamp_eps"))
    step_length = float(_resolve(args, "step_length"))
    max_iter = int(_resolve(args, "max_iter"))
    figures = _resolve(args, "figures")
    try:
        fit_config = FitConfig(step_length=step_length, max_iter=max_iter)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    matrix, covs = load_inputs(args.meth, args.cov, mode=mode, offset_a=offset)
    results = run_sitewise(matrix, covs, model, fit_config=fit_config,
                           workers=workers, clamp_eps=clamp_eps)
    write_results(results, args.out, format=out_format)
    logging.getLogger(__name__).info("wrote %d site results to %s", len(results), args.out)
    if figures:
        from .plots import save_fit_figures

        save_fit_figures(results, figures)
    return 0


def _cmd_simulate(args) -> int:
    gamma = _parse_float_list(args.gamma, "--gamma")
    if not gamma:
        raise ConfigError("--gamma must contain at least the intercept coefficient")
    if args.zeta_u is None:
        zeta_u = [0.0] * len(gamma)
    else:
        zeta_u = _parse_float_list(args.zeta_u, "--zeta-u")
    if len(zeta_u) != len(gamma):
        raise ConfigError("--zeta-u must match the length of --gamma")
    cov_text = [tok for tok in args.covariates.split(",") if tok.strip()]
    covariates = tuple(CovariateSpec.parse(tok, index=i + 1) for i, tok in enumerate(cov_text))
    if len(covariates) != len(gamma) - 1:
        raise ConfigError(
            f"--covariates needs {len(gamma) - 1} entries for {len(gamma)} coefficients"
        )
    try:
        spec = SimSpec.from_effects(
            gamma=gamma, zeta_u=zeta_u, n_samples=args.n_samples, n_sites=args.n_sites,
            alpha=args.alpha, rho=args.rho, covariates=covariates,
            offset_a=args.offset, seed=args.seed,
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    matrix, covs, truth = simulate_dataset(spec)
    paths = write_dataset_csv(matrix, covs, truth, args.out_prefix)
    for kind, path in paths.items():
        logging.getLogger(__name__).info("wrote %s file %s", kind, path)
    return 0


def _cmd_experiment(args) -> int:
    models = [tok.strip() for tok in args.models.split(",") if tok.strip()]
    for model in models:
        if model not in MODEL_KINDS:
            raise ConfigError(f"unknown model {model!r}")
    n_grid = [int(v) for v in _parse_float_list(args.n_samples_grid, "--n-samples-grid")]
    g_grid = _parse_float_list(args.gamma1_grid, "--gamma1-grid")
    if not n_grid or not g_grid:
        raise ConfigError("--n-samples-grid and --gamma1-grid must be non-empty")
    try:
        cells = [
            SimSpec.from_effects(
                gamma=[0.0, g1], zeta_u=[0.0, 0.0], n_samples=n, n_sites=args.n_sites,
                alpha=args.alpha, rho=args.rho,
                covariates=(CovariateSpec("standard_normal", name="x1"),), seed=args.seed,
            )
            for n in n_grid
            for g1 in g_grid
        ]
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    report = run_experiment(cells, models, replicates=args.replicates, seed=args.seed,
                            workers=args.workers)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "tsv" if args.format == "tsv" else "csv"
    report.write_delimited(out_dir / f"report.{ext}", format=args.format)
    report.write_json(out_dir / "report.json")

    from .plots import save_experiment_figures

    save_experiment_figures(report, out_dir)
    logging.getLogger(__name__).info("wrote experiment report to %s", out_dir)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_experiment(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
