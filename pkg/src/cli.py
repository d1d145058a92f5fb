import logging
import os
from typing import Dict, Optional

import numpy as np
import pandas as pd

from .checkpoint import CheckpointManager
from .config import RunConfig, load_config, parse_config, resolve_threads
from .errors import SchemaError, UsageError
from .models import STREAM_EVALUATE, FieldStats, QueryPointSet, TrainingResult
from .oracle import Resolution, mc_ensemble
from .problems import ProblemSpec, default_probes
from .reports import compare_report, estimate_pdfs, write_field
from .sampler import sample_params, stream_rng
from .stats import field_stats
from .surrogate import Surrogate
from .trainer import Trainer

logger = logging.getLogger(__name__)


def _with_overrides(config: RunConfig, seed: Optional[int], out: Optional[str], section: str) -> RunConfig:
    data = config.model_dump()
    if seed is not None:
        data[section]["seed"] = seed
    if out is not None:
        data["output"]["dir"] = out
    return parse_config(data)


def read_probes(path: Optional[str], problem: ProblemSpec) -> np.ndarray:
    """Probe coordinates from a CSV with the domain's coordinate columns, or the problem defaults."""
    if path is None:
        probes = default_probes(problem)
    else:
        names = list(problem.domain.coordinate_names)
        try:
            table = pd.read_csv(path)
        except FileNotFoundError:
            raise UsageError(f"probe file not found: {path}") from None
        missing = [name for name in names if name not in table.columns]
        if missing:
            raise SchemaError(f"probe file {path} lacks columns {missing}")
        probes = table[names].to_numpy(dtype=np.float64)
    outside = ~problem.domain.contains(probes, tol=1e-12)
    if np.any(outside):
        listed = ", ".join(str(tuple(point.tolist())) for point in probes[outside])
        raise UsageError(f"probes outside the domain of '{problem.tag}': {listed}")
    return probes


def cmd_train(
    config_path: Optional[str],
    resume: Optional[str] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    threads: Optional[int] = None,
) -> TrainingResult:
    config = _with_overrides(load_config(config_path), seed, out, "train")
    trainer = Trainer(config, threads=resolve_threads(config, threads))
    result = trainer.train(resume=resume)
    last = result.losses[-1][1] if result.losses else float("nan")
    print(f"Trained {config.problem.tag} to iteration {result.iterations} (last loss {last:.6e})")
    if result.stopped_early:
        print("Stopped early: loss plateaued")
    print(f"Checkpoints and loss log written to {trainer.out_dir}")
    return result


def cmd_oracle(
    config_path: Optional[str],
    probes_path: Optional[str] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    threads: Optional[int] = None,
) -> Dict[str, str]:
    config = _with_overrides(load_config(config_path), seed, out, "oracle")
    problem = config.build_problem()
    probes = read_probes(probes_path, problem)
    settings = config.oracle
    run = mc_ensemble(
        problem,
        settings.samples,
        Resolution(settings.nx, settings.nt, settings.cells),
        seed=settings.seed,
        probes=probes,
        workers=resolve_threads(config, threads),
    )
    return _write_ensemble(config, problem, probes, run.values, os.path.join(config.output.dir, "oracle"))


def _write_ensemble(config: RunConfig, problem: ProblemSpec, probes: np.ndarray, samples: np.ndarray, out_dir: str):
    if samples.shape[0] < 2:
        stats = FieldStats(probes, samples.mean(axis=0), np.zeros(samples.shape[1]), samples)
    else:
        stats = field_stats(probes, samples)
    pdfs = estimate_pdfs(samples, config.evaluate.pdf_points)
    paths = write_field(out_dir, problem.domain.coordinate_names, stats, pdfs)
    for name, path in paths.items():
        print(f"Wrote {name}: {path}")
    return paths


def query_points(problem: ProblemSpec, probes: np.ndarray, samples: int, seed: int) -> QueryPointSet:
    rng = stream_rng(seed, STREAM_EVALUATE, 0)
    draws = sample_params(samples, problem.d, "uniform01", rng)
    return QueryPointSet(problem.domain.coordinate_names, probes, draws)


def surrogate_ensemble(surrogate: Surrogate, params, query: QueryPointSet) -> np.ndarray:
    """(draws, n_probes) surrogate values over the query's parameter draws."""
    points, p = query.pairs()
    values = surrogate.predict(params, points, p)
    return values.reshape(query.n_probes, query.n_draws).T


def cmd_evaluate(
    checkpoint_path: str,
    probes_path: Optional[str] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> Dict[str, str]:
    checkpoint = CheckpointManager(os.path.dirname(os.path.abspath(checkpoint_path))).load(checkpoint_path)
    config = _with_overrides(parse_config(checkpoint.config), seed, out, "evaluate")
    problem = config.build_problem()
    surrogate = Surrogate(problem, checkpoint.params.config)
    probes = read_probes(probes_path, problem)
    query = query_points(problem, probes, config.evaluate.samples, config.evaluate.seed)
    samples = surrogate_ensemble(surrogate, checkpoint.params, query)
    return _write_ensemble(config, problem, probes, samples, os.path.join(config.output.dir, "surrogate"))


def cmd_compare(surrogate_summary: str, oracle_summary: str, out: Optional[str] = None) -> Dict:
    report = compare_report(surrogate_summary, oracle_summary, out)
    metrics = report["metrics"]
    print(f"mean relative L2: {metrics['mean_rel_l2']:.4e}")
    print(f"std relative L2:  {metrics['std_rel_l2']:.4e}")
    print(f"max abs error:    {metrics['max_abs_error']:.4e}")
    if metrics["max_ks"] is not None:
        print(f"max KS distance:  {metrics['max_ks']:.4e}")
    for name, verdict in report["verdicts"].items():
        label = "skipped" if verdict is None else ("pass" if verdict else "FAIL")
        print(f"  {name}: {label}")
    print("PASSED" if report["passed"] else "FAILED")
    return report
