"""
Lab Runner
Dispatches run configs to lab operations, turns failures into failed run records and
executes batch manifests sequentially or concurrently.
"""

import asyncio
import csv
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy
import scipy.fft
import sympy

from .. import __version__
from ..core.config import LabSettings, get_settings
from ..core.errors import ConfigError, ConstrankError
from ..fields.grid import GridSpec, PeriodicField, random_band_limited
from ..fields.io import dump_field, load_field
from ..fields.masks import BallMask, ball_average
from ..fields.spectral import afree_residual, apply_operator, decompose, lift_potential, project_afree
from ..integrands.library import Integrand, IntegrandConfig, eval_E, integrand_from_config
from ..regularity.excess import excess_scan
from ..regularity.inequalities import verify_caccioppoli, verify_korn_vp, verify_poincare_modular
from ..solvers.aharmonic import BilinearFormA, harmonic_approx_experiment
from ..solvers.variational import (
    AFreeConstraint,
    MinimizeProblem,
    MinimizerResult,
    PotentialConstraint,
    SolverOptions,
    minimize,
)
from ..symbols.calculus import build_potential, check_constant_rank, check_exactness, wave_cone_sample
from ..symbols.operators import DiffOperator, load_operator
from .schemas import BatchManifest, BatchSummary, Command, FieldSource, RunConfig, RunMeta, RunRecord

logger = logging.getLogger(__name__)

Handler = Callable[[RunConfig], Tuple[Dict[str, Any], bool]]


def _plain(value: Any) -> Any:
    """numpy scalars and arrays to JSON-native values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def versions() -> Dict[str, str]:
    return {
        "constrank": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
    }


def two_phase_field(grid: GridSpec, fiber_dim: int, amplitude: float = 1.0) -> PeriodicField:
    """±amplitude·e₁ on the slabs x₁ < period/2 and x₁ ≥ period/2; jumps on two interfaces"""
    x = grid.coordinates()[..., 0]
    sign = np.where(x < grid.period / 2, 1.0, -1.0)
    values = np.zeros(grid.shape + (fiber_dim,))
    values[..., 0] = amplitude * sign
    return PeriodicField(grid, values)


class LabRunner:
    """
    Runs lab operations from RunConfigs.
    Every run yields a RunRecord; errors become failed records so batches keep going.
    """

    def __init__(self, settings: Optional[LabSettings] = None, threads: Optional[int] = None,
                 out_dir: Optional[Path] = None):
        self.settings = settings or get_settings()
        self.threads = max(threads or self.settings.threads, 1)
        self.out_dir = Path(out_dir) if out_dir else None
        self.history: List[RunRecord] = []
        self._handlers: Dict[Command, Handler] = {
            Command.RANK_CHECK: self._rank_check,
            Command.POTENTIAL: self._potential,
            Command.WAVE_CONE: self._wave_cone,
            Command.PROJECT: self._project,
            Command.DECOMPOSE: self._decompose,
            Command.MINIMIZE: self._minimize,
            Command.VERIFY_CACCIOPPOLI: self._verify_caccioppoli,
            Command.VERIFY_POINCARE: self._verify_poincare,
            Command.VERIFY_KORN: self._verify_korn,
            Command.EXCESS_SCAN: self._excess_scan,
            Command.HARMONIC_APPROX: self._harmonic_approx,
        }

    # Dispatch

    def run(self, config: RunConfig, workers: Optional[int] = None) -> RunRecord:
        """
        Execute one run.

        Args:
            config: Run configuration
            workers: FFT worker threads for this run (defaults to the runner's thread count)

        Returns:
            RunRecord; failed with the error text when the operation raises
        """
        run_id = config.run_id()
        start = time.time()
        logger.info(f"Run {run_id}: {config.command.value}")
        try:
            handler = self._handlers[config.command]
            with scipy.fft.set_workers(workers or self.threads):
                body, passed = handler(config)
            record = RunRecord(
                id=run_id,
                command=config.command,
                config_hash=config.config_hash(),
                versions=versions(),
                passed=bool(passed),
                body=_plain(body),
            )
        except (ConstrankError, ValueError) as e:
            logger.error(f"Run {run_id} failed: {type(e).__name__}: {e}")
            record = RunRecord(
                id=run_id,
                command=config.command,
                config_hash=config.config_hash(),
                versions=versions(),
                passed=False,
                error=f"{type(e).__name__}: {e}",
            )
        record.meta = RunMeta(
            wall_time=time.time() - start,
            timestamp=datetime.now(timezone.utc).isoformat(),
            threads=workers or self.threads,
        )
        self.history.append(record)
        self._write_record(config, record)
        logger.info(f"Run {run_id} finished: passed={record.passed} in {record.meta.wall_time:.2f}s")
        return record

    async def run_async(self, config: RunConfig, semaphore: asyncio.Semaphore,
                        workers: int) -> RunRecord:
        async with semaphore:
            return await asyncio.to_thread(self.run, config, workers)

    async def batch(self, manifest: BatchManifest) -> BatchSummary:
        """
        Execute a manifest.

        Args:
            manifest: Runs plus the parallel flag and an optional command filter

        Returns:
            BatchSummary with pass counts; ConfigError when the filter leaves nothing to run
        """
        configs = manifest.selected()
        if not configs:
            raise ConfigError("manifest has no runs after filtering")

        if manifest.parallel:
            semaphore = asyncio.Semaphore(self.threads)
            results = await asyncio.gather(
                *[self.run_async(c, semaphore, 1) for c in configs],
                return_exceptions=True
            )
        else:
            results = [self.run(c) for c in configs]

        # Convert exceptions to failed records
        records = []
        for config, result in zip(configs, results):
            if isinstance(result, Exception):
                records.append(RunRecord(
                    id=config.run_id(),
                    command=config.command,
                    config_hash=config.config_hash(),
                    versions=versions(),
                    passed=False,
                    error=f"{type(result).__name__}: {result}",
                ))
            else:
                records.append(result)

        passed = sum(r.passed for r in records)
        summary = BatchSummary(total=len(records), passed=passed, failed=len(records) - passed, records=records)
        logger.info(f"Batch finished: {passed}/{len(records)} passed")
        if self.out_dir is not None:
            write_batch_csv(summary, self.out_dir / "batch_summary.csv")
        return summary

    # Shared inputs

    def _operator(self, config: RunConfig) -> DiffOperator:
        return load_operator(config.operator, config.dim_n or config.grid.dim_n)

    def _grid(self, config: RunConfig) -> GridSpec:
        return GridSpec(config.grid.dim_n, config.grid.points, config.grid.period)

    def _center(self, config: RunConfig, grid: GridSpec) -> Tuple[float, ...]:
        if config.params.center is not None:
            return tuple(config.params.center)
        return (grid.period / 2,) * grid.dim_n

    def _integrand(self, config: RunConfig, fiber_dim: int, grid: GridSpec) -> Integrand:
        return integrand_from_config(config.integrand or IntegrandConfig(), fiber_dim, grid)

    def _field(self, config: RunConfig, grid: GridSpec, fiber_dim: int) -> PeriodicField:
        source = config.field
        if source == FieldSource.FILE:
            if config.field_path is None:
                raise ConfigError("field source 'file' needs field_path")
            field = load_field(config.field_path)
            if field.grid != grid or field.fiber_dim != fiber_dim:
                raise ConfigError(f"{config.field_path} does not match grid {grid.shape} and fiber {fiber_dim}")
            return field
        if source == FieldSource.TWO_PHASE:
            return two_phase_field(grid, fiber_dim, config.params.amplitude)
        if source == FieldSource.RANDOM:
            rng = np.random.default_rng(config.seed)
            return random_band_limited(grid, fiber_dim, rng, max_freq=config.params.max_freq,
                                       amplitude=config.params.amplitude)
        raise ConfigError(f"field source {source.value!r} is not available for {config.command.value}")

    def _gauged_potential(self, config: RunConfig, opB: DiffOperator, grid: GridSpec) -> PeriodicField:
        """Source field moved into the gauge 𝒞*u = 0 by lifting its ℬ-image"""
        u = self._field(config, grid, opB.dim_from)
        return lift_potential(opB, apply_operator(opB, u))

    def _solve(self, config: RunConfig, op: DiffOperator, grid: GridSpec) -> Tuple[MinimizerResult, Integrand]:
        """Potential formulation when a datum is given, 𝒜-free formulation otherwise"""
        params = config.params
        if params.datum is not None:
            constraint = PotentialConstraint(op, np.array(params.datum))
        else:
            mean = params.mean if params.mean is not None else [0.0] * op.dim_from
            constraint = AFreeConstraint(op, np.array(mean))
        f = self._integrand(config, constraint.fiber_dim, grid)
        problem = MinimizeProblem(f, constraint, grid, init=params.init, seed=config.seed)
        options = SolverOptions.from_settings(tol=params.tol, max_iter=params.max_iter)
        return minimize(problem, options), f

    # Handlers

    def _rank_check(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        report = check_constant_rank(op, config.params.samples, np.random.default_rng(config.seed))
        return {"operator": op.name, **report.to_dict()}, report.is_constant_rank

    def _potential(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        result = build_potential(op)
        exact = result.is_zero or check_exactness(op, result.operator)
        body = {
            "operator": op.name,
            "rank": result.rank,
            "is_zero": result.is_zero,
            "homogeneity_raise": result.homogeneity_raise,
            "symbol": result.symbol.to_strings(),
            "potential": result.operator.to_document() if result.operator is not None else None,
            "notes": list(result.notes),
        }
        return body, exact

    def _wave_cone(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        sample = wave_cone_sample(op, config.params.n_dirs)
        body = {
            "operator": op.name,
            "n_dirs": len(sample.bases),
            "cone_vectors": int(sample.vectors.shape[0]),
            "span_rank": sample.span_rank,
            "spans_space": sample.spans_space,
        }
        return body, sample.spans_space

    def _project(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        grid = self._grid(config)
        f = self._field(config, grid, op.dim_from)
        P = project_afree(op, f)
        again = project_afree(op, P)
        norm = P.l2_norm()
        idempotence = (again - P).l2_norm() / norm if norm else 0.0
        body = {
            "operator": op.name,
            "grid": list(grid.shape),
            "residual_before": afree_residual(op, f),
            "residual_after": afree_residual(op, P),
            "idempotence": idempotence,
            "mean_shift": float(np.abs(P.mean() - f.mean()).max()),
        }
        tol = self.settings.spectral.projection_tol
        self._dump(config, "projected", P)
        return body, body["residual_after"] <= tol and idempotence <= tol

    def _decompose(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        opA = self._operator(config)
        if config.operator_b is not None:
            opB = load_operator(config.operator_b, config.dim_n or config.grid.dim_n)
        else:
            opB = build_potential(opA).operator
            if opB is None:
                raise ConfigError(f"{opA.name} is elliptic; its 𝒜-free fields are constants")
        grid = self._grid(config)
        mean = config.params.mean if config.params.mean is not None else [0.0] * opA.dim_from
        f = project_afree(opA, self._field(config, grid, opA.dim_from)) + np.array(mean, dtype=float)
        u, S = decompose(opA, opB, f)
        rebuilt = apply_operator(opB, u) + f.mean()
        norm = f.l2_norm()
        error = (f - rebuilt).l2_norm() / norm if norm else 0.0
        body = {
            "operator": opA.name,
            "potential": opB.name,
            "grid": list(grid.shape),
            "reconstruction_error": error,
            "constant_part_deviation": float(np.abs(S.values - f.mean()).max()),
        }
        self._dump(config, "potential", u)
        return body, error <= 1e-9

    def _minimize(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        grid = self._grid(config)
        result, f = self._solve(config, op, grid)
        body = {"operator": op.name, "integrand": f.describe(), "grid": list(grid.shape), **result.summary()}
        self._dump(config, "minimizer", result.field)
        return body, result.converged and not result.stalled

    def _verify_caccioppoli(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        grid = self._grid(config)
        datum = config.params.datum if config.params.datum is not None else [0.0] * op.dim_to
        solve_config = config.model_copy(update={"params": config.params.model_copy(update={"datum": datum})})
        result, f = self._solve(solve_config, op, grid)
        R = config.params.R or 0.25 * grid.period
        report = verify_caccioppoli(result.potential, f, op, self._center(config, grid), R, datum=datum)
        return report.model_dump(by_alias=True), report.passed

    def _verify_poincare(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        grid = self._grid(config)
        u = self._gauged_potential(config, op, grid)
        params = config.params
        report = verify_poincare_modular(u, op, build_potential(op).operator, params.center, params.R,
                                         params.theta, params.q, params.degree)
        return report.model_dump(by_alias=True), report.passed

    def _verify_korn(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        grid = self._grid(config)
        u = self._gauged_potential(config, op, grid)
        params = config.params
        report = verify_korn_vp(u, op, build_potential(op).operator, params.theta, params.p,
                                params.center, params.R, params.degree)
        return report.model_dump(by_alias=True), report.passed

    def _excess_scan(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        op = self._operator(config)
        grid = self._grid(config)
        params = config.params
        if config.field == FieldSource.MINIMIZER:
            w = self._solve(config, op, grid)[0].field
        else:
            fiber = op.dim_to if params.datum is not None else op.dim_from
            w = self._field(config, grid, fiber)
        centers = params.centers or [list(self._center(config, grid))]
        R0 = params.R or 0.4 * grid.period
        reports = excess_scan(w, centers, R0, params.tau, params.depth, params.alpha, params.eps)
        regular = sum(r.regular for r in reports)
        body = {
            "reports": [r.to_dict() for r in reports],
            "regular_fraction": regular / len(reports),
        }
        if self.out_dir is not None:
            write_excess_csv(reports, self.out_dir / f"{config.run_id()}_excess.csv")
        return body, all(r.decay_holds for r in reports if r.smallness)

    def _harmonic_approx(self, config: RunConfig) -> Tuple[Dict[str, Any], bool]:
        opB = self._operator(config)
        grid = self._grid(config)
        params = config.params
        opC = build_potential(opB).operator
        center = self._center(config, grid)
        mask = BallMask(grid, center, params.R or 0.3 * grid.period)
        if config.integrand is not None:
            f = self._integrand(config, opB.dim_to, grid)
            x0 = np.array(center) if f.x_dependent else None
            A = BilinearFormA.from_integrand(f, x0, np.zeros(opB.dim_to), opB)
        else:
            A = BilinearFormA.identity(opB.dim_to)

        w = self._gauged_potential(config, opB, grid)
        energy = ball_average(apply_operator(opB, w), mask, eval_E)
        gamma = params.gamma
        if energy > gamma ** 2:
            # E is convex with E(0) = 0, so E(tz) ≤ tE(z) for t ≤ 1
            w = w * (gamma ** 2 / energy)
        report = harmonic_approx_experiment(w, A, opB, opC, mask, gamma)
        return report.to_dict(), report.within_bound

    # Outputs

    def _dump(self, config: RunConfig, label: str, field: Optional[PeriodicField]) -> None:
        if self.out_dir is None or field is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        dump_field(field, self.out_dir / f"{config.run_id()}_{label}.field")

    def _write_record(self, config: RunConfig, record: RunRecord) -> None:
        out = Path(config.out) if config.out else self.out_dir
        if out is None:
            return
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{record.id}.json"
        path.write_text(record.model_dump_json(indent=2))
        logger.debug(f"Wrote {path}")


def write_excess_csv(reports, path: Path) -> int:
    """(center index, R, excess) rows for plotting"""
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["center", "R", "excess", "regular"])
        for index, report in enumerate(reports):
            for R, value in zip(report.radii, report.excess):
                writer.writerow([index, repr(R), repr(value), int(report.regular)])
                rows += 1
    return rows


def _scalar_metrics(body: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    metrics = {}
    for key, value in body.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            metrics.update(_scalar_metrics(value, f"{name}."))
        elif isinstance(value, (bool, int, float, str)) or value is None:
            metrics[name] = value
    return metrics


def write_batch_csv(summary: BatchSummary, path: Path) -> int:
    """Experiment × metric matrix over the scalar entries of each body"""
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [
        {"id": r.id, "command": r.command.value, "passed": r.passed, "error": r.error or "",
         **_scalar_metrics(r.body)}
        for r in summary.records
    ]
    columns: List[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return len(rows)
