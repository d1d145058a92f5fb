"""CSV and JSON files written by the oracle, evaluate and compare commands.

summary.csv   probe, <coordinate columns>, mean, std, bandwidth
samples.csv   probe, sample, u             (one row per probe and draw)
pdf.csv       probe, abscissa, density
report.json   metrics, thresholds and verdicts of one comparison
"""

import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DegenerateDistributionError, SchemaError, UsageError
from .models import ComparisonMetrics, FieldStats, PdfEstimate
from .stats import MIN_KDE_SAMPLES, compare_fields, default_abscissae, kde_pdf

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.csv"
SAMPLES_FILE = "samples.csv"
PDF_FILE = "pdf.csv"
REPORT_FILE = "report.json"

COORDINATE_SETS = (("t", "x"), ("x", "y"))
SAMPLE_COLUMNS = ["probe", "sample", "u"]
PDF_COLUMNS = ["probe", "abscissa", "density"]

THRESHOLDS = {"mean_rel_l2": 0.05, "std_rel_l2": 0.15, "max_ks": 0.10}


def estimate_pdfs(samples: np.ndarray, points: int) -> List[Optional[PdfEstimate]]:
    """Density per probe column; None where the ensemble is constant or too small."""
    pdfs: List[Optional[PdfEstimate]] = []
    for column in np.asarray(samples).T:
        if len(column) < MIN_KDE_SAMPLES:
            pdfs.append(None)
            continue
        try:
            pdfs.append(kde_pdf(column, default_abscissae(column, points)))
        except DegenerateDistributionError:
            pdfs.append(None)
    return pdfs


def write_field(
    out_dir: str,
    coordinate_names: Sequence[str],
    stats: FieldStats,
    pdfs: Optional[Sequence[Optional[PdfEstimate]]] = None,
) -> Dict[str, str]:
    """Write summary.csv, samples.csv (when samples are kept) and pdf.csv."""
    os.makedirs(out_dir, exist_ok=True)
    n_probes = len(stats.probes)
    pdfs = list(pdfs) if pdfs is not None else [None] * n_probes
    summary = pd.DataFrame({"probe": np.arange(n_probes)})
    for j, name in enumerate(coordinate_names):
        summary[name] = stats.probes[:, j]
    summary["mean"] = stats.mean
    summary["std"] = stats.std
    summary["bandwidth"] = [pdf.bandwidth if pdf is not None else np.nan for pdf in pdfs]

    paths = {"summary": os.path.join(out_dir, SUMMARY_FILE)}
    summary.to_csv(paths["summary"], index=False)

    if stats.samples is not None:
        m = stats.samples.shape[0]
        samples = pd.DataFrame(
            {
                "probe": np.repeat(np.arange(n_probes), m),
                "sample": np.tile(np.arange(m), n_probes),
                "u": stats.samples.T.ravel(),
            }
        )
        paths["samples"] = os.path.join(out_dir, SAMPLES_FILE)
        samples.to_csv(paths["samples"], index=False)

    frames = [
        pd.DataFrame({"probe": probe, "abscissa": pdf.abscissae, "density": pdf.density})
        for probe, pdf in enumerate(pdfs)
        if pdf is not None
    ]
    pdf_table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=PDF_COLUMNS)
    paths["pdf"] = os.path.join(out_dir, PDF_FILE)
    pdf_table.to_csv(paths["pdf"], index=False)
    return paths


def _read_csv(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except FileNotFoundError:
        raise UsageError(f"file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as error:
        raise SchemaError(f"{path} is not a readable CSV file: {error}") from None


def _require_numeric(frame: pd.DataFrame, columns: Sequence[str], path: str) -> None:
    for column in columns:
        if not pd.api.types.is_numeric_dtype(frame[column]):
            raise SchemaError(f"column '{column}' of {path} is not numeric")


def summary_coordinates(frame: pd.DataFrame, path: str) -> Tuple[str, ...]:
    columns = list(frame.columns)
    for names in COORDINATE_SETS:
        if columns == ["probe", *names, "mean", "std", "bandwidth"]:
            return names
    raise SchemaError(
        f"{path} has columns {columns}; expected probe, t|x, x|y, mean, std, bandwidth"
    )


def read_field(summary_path: str) -> Tuple[Tuple[str, ...], FieldStats]:
    """Load a summary and, if present, its sibling samples.csv."""
    summary = _read_csv(summary_path)
    names = summary_coordinates(summary, summary_path)
    _require_numeric(summary, ["probe", *names, "mean", "std"], summary_path)
    probes = summary[list(names)].to_numpy(dtype=np.float64)

    samples = None
    samples_path = os.path.join(os.path.dirname(summary_path), SAMPLES_FILE)
    if os.path.exists(samples_path):
        table = _read_csv(samples_path)
        if list(table.columns) != SAMPLE_COLUMNS:
            raise SchemaError(f"{samples_path} has columns {list(table.columns)}; expected {SAMPLE_COLUMNS}")
        _require_numeric(table, SAMPLE_COLUMNS, samples_path)
        wide = table.pivot(index="sample", columns="probe", values="u")
        if wide.shape[1] != len(probes) or wide.isna().any().any():
            raise SchemaError(f"{samples_path} does not hold one value per probe and sample")
        samples = wide.to_numpy(dtype=np.float64)

    stats = FieldStats(probes, summary["mean"].to_numpy(dtype=np.float64), summary["std"].to_numpy(dtype=np.float64), samples)
    return names, stats


def verdicts(metrics: ComparisonMetrics, thresholds: Dict[str, float] = THRESHOLDS) -> Dict[str, Optional[bool]]:
    values = {
        "mean_rel_l2": metrics.mean_rel_l2,
        "std_rel_l2": metrics.std_rel_l2,
        "max_ks": metrics.max_ks,
    }
    return {key: None if values[key] is None else bool(values[key] <= limit) for key, limit in thresholds.items()}


def compare_report(surrogate_summary: str, oracle_summary: str, out_path: Optional[str] = None) -> Dict:
    """Compare two summaries (the second is the reference) and write report.json."""
    names_a, field_a = read_field(surrogate_summary)
    names_b, field_b = read_field(oracle_summary)
    if names_a != names_b:
        raise SchemaError(f"coordinate columns differ: {names_a} vs {names_b}")
    metrics = compare_fields(field_a, field_b)
    checks = verdicts(metrics)
    report = {
        "surrogate": surrogate_summary,
        "oracle": oracle_summary,
        "metrics": {
            "mean_rel_l2": metrics.mean_rel_l2,
            "std_rel_l2": metrics.std_rel_l2,
            "max_abs_error": metrics.max_abs_error,
            "max_ks": metrics.max_ks,
            "ks_distance": None if metrics.ks_distance is None else metrics.ks_distance.tolist(),
        },
        "thresholds": THRESHOLDS,
        "verdicts": checks,
        "passed": all(check is not False for check in checks.values()),
    }
    out_path = out_path or os.path.join(os.path.dirname(surrogate_summary), REPORT_FILE)
    with open(out_path, "w") as f:
        json.dump(report, f, indent=4)
    logger.debug("wrote comparison report to %s", out_path)
    return report
