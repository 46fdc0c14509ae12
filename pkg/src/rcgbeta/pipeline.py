"""Site-wise analysis driver: ingestion, parallel per-site fits, result tables.

Input is a sites-by-samples methylation matrix (beta values, or raw signal
intensities converted with a configurable offset) plus a per-sample
covariate table.  Every site is fitted independently, so the work is farmed
out over a process pool; results are collected and sorted so the output is
identical for any worker count.
"""

from __future__ import annotations

import csv
import logging
import math
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ParseError, SingularInformationError
from .fitting import (
    FitConfig,
    _boundary_flags,
    _profile_polish,
    fit_beta_regression,
    fit_mvalue,
    fit_rcg_boost,
)
from .rcg import DEFAULT_CLAMP_EPS, Dataset, RcgParams, WaldStat, wald_tests

__all__ = [
    "MethylationMatrix",
    "CovariateTable",
    "SiteResult",
    "MODEL_KINDS",
    "load_inputs",
    "run_sitewise",
    "write_results",
    "read_results",
    "RESULT_COLUMNS",
]

logger = logging.getLogger(__name__)

MODEL_KINDS = ("rcg", "mvalue", "betareg")

RESULT_COLUMNS = [
    "site_id",
    "covariate",
    "estimate",
    "std_error",
    "z",
    "p_value",
    "alpha_hat",
    "rho_hat",
    "log_lik",
    "n_used",
    "converged",
    "flags",
    "model_kind",
]


@dataclass
class MethylationMatrix:
    """Sites-by-samples beta values, with provenance of any raw conversion."""

    site_ids: list[str]
    sample_ids: list[str]
    values: np.ndarray
    mode: str = "beta"
    offset_a: float = 0.0


@dataclass
class CovariateTable:
    """Per-sample design matrix with the intercept column prepended."""

    sample_ids: list[str]
    design: np.ndarray
    names: list[str]


@dataclass
class SiteResult:
    site_id: str
    covariates: list[WaldStat] = field(default_factory=list)
    alpha_hat: Optional[float] = None
    rho_hat: Optional[float] = None
    log_lik: float = math.nan
    n_used: int = 0
    converged: bool = False
    flags: list[str] = field(default_factory=list)
    model_kind: str = "rcg"


def _parse_cell(raw: str, path, line_no: int):
    raw = raw.strip()
    if raw == "" or raw.upper() in ("NA", "NAN"):
        return math.nan
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"non-numeric cell {raw!r}", path=path, line=line_no) from None


def _read_matrix_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    path = Path(path)
    site_ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path=path) from None
        if len(header) < 2:
            raise ParseError("matrix header needs site_id plus sample columns", path=path, line=1)
        sample_ids = [h.strip() for h in header[1:]]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", path=path, line=line_no
                )
            site_ids.append(row[0].strip())
            rows.append([_parse_cell(c, path, line_no) for c in row[1:]])
    if not site_ids:
        raise ParseError("no data rows", path=path)
    return site_ids, sample_ids, np.asarray(rows, dtype=float)


def _read_long_csv(path) -> tuple[list[str], list[str], np.ndarray, np.ndarray]:
    path = Path(path)
    m_cells: dict[tuple[str, str], float] = {}
    u_cells: dict[tuple[str, str], float] = {}
    site_order: list[str] = []
    sample_order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", path=path) from None
        if header[:4] != ["site_id", "sample_id", "m", "u"]:
            raise ParseError(
                "long format needs header site_id,sample_id,M,U", path=path, line=1
            )
        seen_sites: set[str] = set()
        seen_samples: set[str] = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path=path, line=line_no)
            site, sample = row[0].strip(), row[1].strip()
            key = (site, sample)
            m_cells[key] = _parse_cell(row[2], path, line_no)
            u_cells[key] = _parse_cell(row[3], path, line_no)
            if site not in seen_sites:
                seen_sites.add(site)
                site_order.append(site)
            if sample not in seen_samples:
                seen_samples.add(sample)
                sample_order.append(sample)
    m = np.full((len(site_order), len(sample_order)), math.nan)
    u = np.full_like(m, math.nan)
    for i, site in enumerate(site_order):
        for j, sample in enumerate(sample_order):
            key = (site, sample)
            if key in m_cells:
                m[i, j] = m_cells[key]
                u[i, j] = u_cells[key]
    return site_order, sample_order, m, u


def _read_covariates(path) -> CovariateTable:
    path = Path(path)
    sample_ids: list[str] = []
    rows: list[list[float]] = []
    dropped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path=path) from None
        if len(header) < 1 or header[0].strip() != "sample_id":
            raise ParseError("covariate header must start with sample_id", path=path, line=1)
        names = [h.strip() for h in header[1:]]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", path=path, line=line_no
                )
            values = [_parse_cell(c, path, line_no) for c in row[1:]]
            if any(math.isnan(v) for v in values):
                dropped += 1
                continue
            sample_ids.append(row[0].strip())
            rows.append(values)
    if dropped:
        logger.warning("dropped %d covariate rows with missing values (complete-case)", dropped)
    if not sample_ids:
        raise ParseError("no usable covariate rows", path=path)
    design = np.column_stack((np.ones(len(rows)), np.asarray(rows, dtype=float)))
    return CovariateTable(sample_ids=sample_ids, design=design, names=["intercept"] + names)


def _raw_pair_paths(meth_path) -> tuple[Path, Path]:
    meth_path = Path(meth_path)
    stem = meth_path.stem
    if "_M" not in stem:
        raise ConfigError(
            f"raw pair mode expects an '_M' file-name component, got {meth_path.name!r}"
        )
    idx = stem.rfind("_M")
    u_name = stem[:idx] + "_U" + stem[idx + 2:] + meth_path.suffix
    return meth_path, meth_path.with_name(u_name)


def _beta_from_raw(m: np.ndarray, u: np.ndarray, offset_a: float, path) -> np.ndarray:
    if np.any(m[np.isfinite(m)] < 0.0) or np.any(u[np.isfinite(u)] < 0.0):
        raise ParseError("raw intensities must be non-negative", path=path)
    return m / (m + u + offset_a)


def load_inputs(meth_path, cov_path, *, mode: str = "beta",
                offset_a: float = 100.0) -> tuple[MethylationMatrix, CovariateTable]:
    """Read and join the methylation matrix and covariate table.

    Samples present in only one of the two files are dropped (with a logged
    count); covariate rows with missing values are dropped before the join.
    In the raw modes beta values are computed as M / (M + U + offset_a).

    Parameters
    ----------
    meth_path, cov_path : path-like
        Methylation matrix (or raw intensity file) and covariate CSV.
    mode : {"beta", "raw_pair", "raw_long"}
        Input layout; ``raw_pair`` expects two wide files with an ``_M`` /
        ``_U`` name convention, ``raw_long`` one file with columns
        site_id, sample_id, M, U.
    offset_a : float
        Offset added to M + U in the raw modes; ignored for beta input.
    """
    if mode == "beta":
        site_ids, sample_ids, values = _read_matrix_csv(meth_path)
        finite = values[np.isfinite(values)]
        if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
            raise ParseError("beta values must lie in [0, 1]", path=meth_path)
        matrix = MethylationMatrix(site_ids, sample_ids, values, mode="beta")
    elif mode == "raw_pair":
        m_path, u_path = _raw_pair_paths(meth_path)
        m_sites, m_samples, m_vals = _read_matrix_csv(m_path)
        u_sites, u_samples, u_vals = _read_matrix_csv(u_path)
        if m_sites != u_sites or m_samples != u_samples:
            raise ParseError("M and U files must share site and sample layout", path=u_path)
        values = _beta_from_raw(m_vals, u_vals, offset_a, m_path)
        matrix = MethylationMatrix(m_sites, m_samples, values, mode="raw_intensity",
                                   offset_a=offset_a)
    elif mode == "raw_long":
        site_ids, sample_ids, m_vals, u_vals = _read_long_csv(meth_path)
        values = _beta_from_raw(m_vals, u_vals, offset_a, meth_path)
        matrix = MethylationMatrix(site_ids, sample_ids, values, mode="raw_intensity",
                                   offset_a=offset_a)
    else:
        raise ConfigError(f"unknown input mode {mode!r}")

    covs = _read_covariates(cov_path)
    meth_index = {s: j for j, s in enumerate(matrix.sample_ids)}
    keep = [i for i, s in enumerate(covs.sample_ids) if s in meth_index]
    if not keep:
        raise ParseError("no overlapping samples between methylation and covariate files")
    dropped_cov = len(covs.sample_ids) - len(keep)
    dropped_meth = len(matrix.sample_ids) - len(keep)
    if dropped_cov or dropped_meth:
        logger.warning(
            "dropped %d covariate and %d methylation samples outside the join",
            dropped_cov, dropped_meth,
        )
    common = [covs.sample_ids[i] for i in keep]
    matrix.values = matrix.values[:, [meth_index[s] for s in common]]
    matrix.sample_ids = common
    covs.design = covs.design[keep]
    covs.sample_ids = common
    return matrix, covs


def _fit_one_site(args) -> SiteResult:
    (site_id, b_row, design, names, model, fit_config, clamp_eps) = args
    mask = np.isfinite(b_row)
    n_used = int(mask.sum())
    result = SiteResult(site_id=site_id, n_used=n_used, model_kind=model)
    if n_used < design.shape[1] + 2:
        result.flags.append("insufficient_data")
        return result
    try:
        data = Dataset(b_row[mask], design[mask], names=names, clamp_eps=clamp_eps)
        if data.n_clamped:
            result.flags.append(f"b_clamped:{data.n_clamped}")
        if model == "rcg":
            fit = fit_rcg_boost(data, fit_config)
            # tighten to the exact stationary point so Wald inference is
            # evaluated at the ML estimate and results are independent of
            # summation order and worker count
            gamma, alpha, rho, ll = _profile_polish(
                data, fit.params_hat.gamma, fit.params_hat.alpha, fit.params_hat.rho
            )
            params = RcgParams(alpha, rho, gamma)
            result.alpha_hat = alpha
            result.rho_hat = rho
            result.log_lik = ll
            result.converged = fit.converged
            result.flags.extend(
                sorted(_boundary_flags(data, alpha, rho) - {f"b_clamped:{data.n_clamped}"})
            )
            try:
                result.covariates = wald_tests(data, params)
            except SingularInformationError:
                # no usable standard errors, so the site cannot count as a
                # converged result
                result.flags.append("singular_information")
                result.converged = False
                result.covariates = [
                    WaldStat(name, float(params.gamma[k]), math.nan, math.nan, math.nan)
                    for k, name in enumerate(data.names)
                    if k > 0
                ]
        elif model in ("mvalue", "betareg"):
            if model == "mvalue":
                base = fit_mvalue(data)
            else:
                base = fit_beta_regression(data)
            result.log_lik = base.log_lik if base.log_lik is not None else math.nan
            result.converged = base.converged
            stats = []
            for k in range(1, design.shape[1]):
                est = float(base.coef[k])
                se = float(base.std_errors[k])
                if se > 0.0 and math.isfinite(se):
                    z = est / se
                    p = math.erfc(abs(z) / math.sqrt(2.0))
                else:
                    z, p = math.nan, math.nan
                stats.append(WaldStat(names[k], est, se, z, p))
            result.covariates = stats
        else:
            raise ConfigError(f"unknown model {model!r}")
    except ConfigError:
        raise
    except Exception as exc:  # per-site failures must never abort the run
        result.converged = False
        result.flags.append(f"error:{type(exc).__name__}:{exc}")
    return result


def run_sitewise(matrix: MethylationMatrix, covs: CovariateTable, model: str,
                 fit_config: FitConfig | None = None, workers: int = 1,
                 clamp_eps: float = DEFAULT_CLAMP_EPS) -> list[SiteResult]:
    """Fit the requested model independently at every site.

    Results are sorted by site id and do not depend on the worker count;
    per-site failures are recorded on the result, never raised.
    """
    if model not in MODEL_KINDS:
        raise ConfigError(f"model must be one of {MODEL_KINDS}, got {model!r}")
    if matrix.values.shape[1] != covs.design.shape[0]:
        raise ConfigError(
            f"{matrix.values.shape[1]} matrix samples vs {covs.design.shape[0]} covariate rows"
        )
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers!r}")
    jobs = [
        (site_id, matrix.values[i], covs.design, covs.names, model, fit_config, clamp_eps)
        for i, site_id in enumerate(matrix.site_ids)
    ]
    if workers == 1:
        results = [_fit_one_site(job) for job in jobs]
    else:
        ctx = multiprocessing.get_context()
        chunk = max(1, len(jobs) // (workers * 8))
        with ctx.Pool(processes=workers) as pool:
            results = pool.map(_fit_one_site, jobs, chunksize=chunk)
    return sorted(results, key=lambda r: r.site_id)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_results(results: Sequence[SiteResult], out_path, format: str = "tsv"):
    """Write one row per site and covariate in a stable column order.

    Intercept-only results emit a single row with the covariate fields
    empty.  Floats use shortest round-trip formatting, so parsing the file
    back recovers them exactly.
    """
    if format not in ("tsv", "csv"):
        raise ConfigError(f"format must be tsv or csv, got {format!r}")
    if not results:
        raise ConfigError("refusing to write an empty results table")
    delim = "\t" if format == "tsv" else ","
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delim, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for res in results:
            shared = [
                _fmt(res.alpha_hat),
                _fmt(res.rho_hat),
                _fmt(res.log_lik),
                str(res.n_used),
                "true" if res.converged else "false",
                ";".join(res.flags),
                res.model_kind,
            ]
            if res.covariates:
                for stat in res.covariates:
                    writer.writerow(
                        [res.site_id, stat.name, _fmt(stat.estimate), _fmt(stat.std_error),
                         _fmt(stat.z), _fmt(stat.p_value)] + shared
                    )
            else:
                writer.writerow([res.site_id, "", "", "", "", ""] + shared)


def read_results(path) -> list[dict]:
    """Parse a results table back into dictionaries with numeric fields."""
    path = Path(path)
    with open(path, newline="") as fh:
        sample = fh.readline()
        delim = "\t" if "\t" in sample else ","
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=delim)
        rows = []
        for raw in reader:
            row: dict = dict(raw)
            for key in ("estimate", "std_error", "z", "p_value", "alpha_hat",
                        "rho_hat", "log_lik"):
                row[key] = float(raw[key]) if raw[key] != "" else None
            row["n_used"] = int(raw["n_used"])
            row["converged"] = raw["converged"] == "true"
            rows.append(row)
    return rows
