"""Single-dataset testing, Monte Carlo experiments and multi-model reports."""

from __future__ import annotations

import json
import math
import multiprocessing as mp
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .bootstrap import bootstrap_pvalues, build_M
from .errors import ConfigError, DataError, JointSpecError
from .estimation import influence, qmle_fit
from .khmaladze import transform_test
from .models import APPLICATION_MODELS, DgpSpec, ModelSpec, get_model, simulate_dgp
from .quadform import build_node_covariance, numeric_pvalues
from .residuals import combine, compute_marks, empirical_covariance, raw_cvm

ENGINES = ("transform", "bootstrap", "numeric")
STATS = ("S1", "S2", "Sstar", "Scirc", "Sbullet")
MAX_EXCLUDED = 0.02
MIN_N = 50


@dataclass
class EngineParams:
    engines: tuple = ENGINES
    B: int = 500
    m: int = 100
    bandwidth_c: float = 1.0
    x0_quantile: float = 0.95
    normalize: str = "included"
    add_one: bool = False

    def __post_init__(self):
        self.engines = tuple(self.engines)
        bad = [e for e in self.engines if e not in ENGINES]
        if bad or not self.engines:
            raise ConfigError(f"engines must be a non-empty subset of {ENGINES}, got {bad}")
        if self.B < 100:
            raise ConfigError("B must be >= 100")
        if self.m < 2:
            raise ConfigError("m must be >= 2")
        if not self.bandwidth_c > 0:
            raise ConfigError("bandwidth constant must be > 0")
        if not 0.5 < self.x0_quantile < 1:
            raise ConfigError("x0 quantile must lie in (0.5, 1)")


@dataclass
class TestReport:
    """Outcome of one joint specification test."""

    __test__ = False  # not a pytest class

    model: str
    n: int
    theta_hat: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    pvalues: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    fit: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    error: str | None = None
    engine_errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def report_schema() -> dict:
    with resources.files("jointspec").joinpath("report_schema.json").open() as fh:
        return json.load(fh)


def validate_report(report: TestReport | dict) -> None:
    import jsonschema

    data = report.to_dict() if isinstance(report, TestReport) else report
    jsonschema.validate(data, report_schema())


def _check_series(data) -> np.ndarray:
    x = np.asarray(data, dtype=float).reshape(-1)
    if x.size < MIN_N:
        raise DataError(f"need at least {MIN_N} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("data contain non-finite values")
    if not np.var(x) > 0:
        raise DataError("data are constant")
    return x


def _run_transform(rep, params, marks, inf, cov, observed, seed):
    tr = transform_test(
        marks, cov, bandwidth_c=params.bandwidth_c,
        x0_quantile=params.x0_quantile, normalize=params.normalize,
    )
    rep.statistics["transformed"] = {
        "S1": tr.S1, "S2": tr.S2, "Sstar": tr.Sstar, "Scirc": tr.Scirc,
        "Sbullet": tr.Sbullet,
        "excluded": int(sum(s.excluded for s in tr.states)),
    }
    rep.pvalues["transform"] = {k: tr.pvalues[k] for k in STATS}
    rep.warnings.extend(tr.warnings)


def _run_bootstrap(rep, params, marks, inf, cov, observed, seed):
    bk = build_M(marks, inf, cov, params.B, seed)
    bp = bootstrap_pvalues(bk, observed, add_one=params.add_one)
    rep.pvalues["bootstrap"] = {k: bp[k] for k in STATS}
    rep.statistics.setdefault("Sbullet", {})["bootstrap"] = bp["Sbullet_value"]
    if bp["clamped"]:
        rep.warnings.append("bootstrap p-value of zero clamped in the Fisher combination")


def _run_numeric(rep, params, marks, inf, cov, observed, seed):
    nc = build_node_covariance(cov, marks, params.m)
    npv = numeric_pvalues(nc, observed, cov)
    rep.pvalues["numeric"] = {k: npv[k] for k in STATS}
    rep.statistics.setdefault("Sbullet", {})["numeric"] = npv["Sbullet_value"]
    if npv["clipped_mass"] < 0:
        rep.warnings.append(f"clipped eigenvalue mass {npv['clipped_mass']:.3g}")


_ENGINE_RUNNERS = {"transform": _run_transform, "bootstrap": _run_bootstrap, "numeric": _run_numeric}


def run_test(data, null_model: ModelSpec, params: EngineParams | None = None,
             seed: int = 0) -> TestReport:
    """Fit ``null_model`` and run every requested engine.

    A failed fit returns a report carrying ``error`` and no p-values; an
    engine that fails is listed in ``engine_errors`` and the other engines'
    p-values are kept. Invalid data raise ``DataError``.
    """
    params = params or EngineParams()
    t0 = time.perf_counter()
    x = _check_series(data)
    if null_model.requires_positive and np.any(x <= 0):
        from .errors import DomainError

        raise DomainError(f"{null_model.name}: requires strictly positive data")
    rep = TestReport(model=null_model.name, n=x.size - 1)
    rep.metadata = {
        "seed": int(seed),
        "engines": list(params.engines),
        "B": params.B,
        "m": params.m,
        "bandwidth_c": params.bandwidth_c,
        "x0_quantile": params.x0_quantile,
        "normalize": params.normalize,
    }
    try:
        fit = qmle_fit(null_model, x, seed=seed)
        rep.theta_hat = fit.theta_hat.as_dict()
        rep.fit = {
            "loglik": fit.loglik,
            "converged": fit.converged,
            "iterations": fit.iterations,
            "grad_norm": fit.grad_norm,
            "hessian_cond": fit.hessian_cond,
        }
        inf = influence(null_model, fit, x)
        marks = compute_marks(null_model, fit.theta_hat, x)
        cov = empirical_covariance(marks, inf)
        S1, S2 = raw_cvm(marks)
        base = combine(S1, S2, cov.L1, cov.L2, 1.0, 1.0)
        observed = (S1, S2, base.star, base.circ)
        rep.statistics["raw"] = {
            "S1": S1, "S2": S2, "Sstar": base.star, "Scirc": base.circ,
            "L1": cov.L1, "L2": cov.L2, "correlation": cov.correlation,
        }
        for engine in params.engines:
            try:
                _ENGINE_RUNNERS[engine](rep, params, marks, inf, cov, observed, seed)
            except JointSpecError as exc:
                # one engine failing leaves the others usable
                rep.engine_errors[engine] = f"{type(exc).__name__}: {exc}"
        if abs(cov.correlation) > 0.2 and not any("correlation" in w for w in rep.warnings):
            rep.warnings.append(
                f"mark correlation {cov.correlation:.2f} exceeds 0.2; "
                "combined p-values assume independent components"
            )
    except JointSpecError as exc:
        rep.pvalues = {}
        rep.error = f"{type(exc).__name__}: {exc}"
    rep.metadata["wall_time"] = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# Monte Carlo experiments
# ---------------------------------------------------------------------------

GARCH_GRID = (-0.9, -0.7, -0.5, -0.3, 0.0, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class Experiment:
    name: str
    null: Callable[[float | None], ModelSpec]
    rows: tuple  # (label, callable(delta) -> DgpSpec)
    sde: bool = False


def _row(kind, **params):
    return lambda delta: DgpSpec(kind, params)


def _sde_row(kind):
    return lambda delta: DgpSpec(kind, delta=delta)


EXPERIMENTS = {
    "arch1": Experiment(
        "arch1", lambda d: get_model("arch1"), tuple((k, _row(k)) for k in ("M0", "M1", "M2", "M3", "M4"))
    ),
    "garch11": Experiment(
        "garch11",
        lambda d: get_model("garch11"),
        tuple((f"{a:+.1f}" if a else "0.0", _row("ar1garch", a1=a)) for a in GARCH_GRID),
    ),
    "ar1garch": Experiment(
        "ar1garch", lambda d: get_model("ar1garch11"), tuple((k, _row(k)) for k in ("A0", "A1", "A2", "A3", "A4", "A5"))
    ),
    "sde_vasicek_null": Experiment(
        "sde_vasicek_null", lambda d: get_model("vasicek", d),
        tuple((f"N{i}", _sde_row(f"N{i}")) for i in range(1, 7)), sde=True,
    ),
    "sde_cir_null": Experiment(
        "sde_cir_null", lambda d: get_model("cir", d),
        tuple((f"N{i}", _sde_row(f"N{i}")) for i in range(1, 7)), sde=True,
    ),
}


@dataclass
class ExperimentConfig:
    experiment: str
    n: int = 300
    reps: int = 500
    engines: tuple = ENGINES
    B: int = 500
    m: int = 100
    bandwidth_c: float = 1.0
    x0_quantile: float = 0.95
    level: float = 0.05
    master_seed: int = 0
    rows: tuple | None = None
    delta: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {sorted(EXPERIMENTS)}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.n < MIN_N:
            raise ConfigError(f"n must be >= {MIN_N}")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        labels = [r[0] for r in EXPERIMENTS[self.experiment].rows]
        if self.rows is not None:
            self.rows = tuple(self.rows)
            bad = [r for r in self.rows if r not in labels]
            if bad:
                raise ConfigError(f"unknown rows {bad}; available {labels}")
        self.engines = tuple(self.engines)
        self.engine_params()

    def engine_params(self) -> EngineParams:
        return EngineParams(self.engines, self.B, self.m, self.bandwidth_c, self.x0_quantile)

    @property
    def sampling_delta(self) -> float | None:
        if not EXPERIMENTS[self.experiment].sde:
            return None
        # observation window [0, 1] sampled at n + 1 instants
        return self.delta if self.delta is not None else 1.0 / self.n

    def selected_rows(self):
        rows = EXPERIMENTS[self.experiment].rows
        if self.rows is None:
            return list(enumerate(rows))
        return [(i, r) for i, r in enumerate(rows) if r[0] in self.rows]


def replication_seeds(master_seed: int, experiment: str, row: int, rep: int) -> tuple[int, int]:
    """Data and bootstrap seeds for one replication."""
    ss = np.random.SeedSequence([master_seed, zlib.crc32(experiment.encode()), row, rep])
    a, b = ss.generate_state(2, np.uint64)
    return int(a), int(b)


def _replicate(task):
    cfg, row_idx, rep = task
    exp = EXPERIMENTS[cfg.experiment]
    label, make = exp.rows[row_idx]
    delta = cfg.sampling_delta
    data_seed, boot_seed = replication_seeds(cfg.master_seed, cfg.experiment, row_idx, rep)
    try:
        x = simulate_dgp(make(delta), cfg.n + 1, data_seed)
        report = run_test(x, exp.null(delta), cfg.engine_params(), boot_seed)
    except JointSpecError as exc:
        return row_idx, rep, None, f"{type(exc).__name__}: {exc}"
    if report.error is not None:
        return row_idx, rep, None, report.error
    if report.engine_errors:
        eng, msg = next(iter(report.engine_errors.items()))
        return row_idx, rep, None, f"{eng}: {msg}"
    if not report.fit.get("converged", False):
        return row_idx, rep, None, "fit did not converge"
    return row_idx, rep, report.pvalues, None


def _worker_init():
    from threadpoolctl import threadpool_limits

    threadpool_limits(1)
    np.seterr(all="ignore")


@dataclass
class RowResult:
    label: str
    rates: dict
    used: int
    excluded: int
    errors: list = field(default_factory=list)
    pvalues: list = field(default_factory=list)  # per used replication, in rep order


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list

    @property
    def failed_rows(self) -> list:
        return [r.label for r in self.rows if r.excluded > MAX_EXCLUDED * (r.used + r.excluded)]

    def table(self) -> str:
        return format_table(self)


def run_experiment(config: ExperimentConfig, progress: Callable | None = None) -> ExperimentResult:
    """Rejection rates for every row of an experiment.

    Replications run in a pool of ``config.workers`` processes, each pinned
    to one BLAS thread; seeds depend only on the configuration, so the
    table does not depend on the worker count.
    """
    tasks = [(config, i, rep) for i, _ in config.selected_rows() for rep in range(config.reps)]
    ctx = mp.get_context("spawn")
    results = {}
    with ProcessPoolExecutor(config.workers, mp_context=ctx, initializer=_worker_init) as pool:
        chunk = max(1, min(25, len(tasks) // (4 * config.workers) or 1))
        for done, (row_idx, rep, pv, err) in enumerate(pool.map(_replicate, tasks, chunksize=chunk), 1):
            results[(row_idx, rep)] = (pv, err)
            if progress is not None:
                progress(done, len(tasks))
    rows = []
    for i, (label, _) in config.selected_rows():
        outcomes = [results[(i, r)] for r in range(config.reps)]
        good = [pv for pv, err in outcomes if err is None]
        errors = [err for pv, err in outcomes if err is not None]
        rates = {}
        for eng in config.engines:
            for st in STATS:
                hits = sum(1 for pv in good if pv[eng][st] < config.level)
                rates[(eng, st)] = 100.0 * hits / len(good) if good else math.nan
        rows.append(RowResult(label, rates, len(good), len(errors), errors, good))
    return ExperimentResult(config, rows)


COLUMN_LABELS = {"transform": "T", "bootstrap": "B", "numeric": "N"}


def format_table(result: ExperimentResult) -> str:
    """Tab-delimited rejection percentages (one decimal), one row per DGP."""
    cfg = result.config
    head = ["n", "dgp"]
    for eng in cfg.engines:
        for st in STATS:
            head.append(f"{COLUMN_LABELS[eng]}:{'~' if eng == 'transform' else ''}{st}")
    head.append("excluded")
    lines = ["\t".join(head)]
    for row in result.rows:
        cells = [str(cfg.n), row.label]
        for eng in cfg.engines:
            for st in STATS:
                v = row.rates[(eng, st)]
                cells.append("nan" if math.isnan(v) else f"{v:.1f}")
        cells.append(str(row.excluded))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# application to one dataset under several candidate models
# ---------------------------------------------------------------------------


@dataclass
class ApplicationReport:
    models: list
    reports: dict
    engines: tuple = ENGINES

    def matrix(self) -> dict:
        """``{(engine, stat): {model: p or None}}``."""
        out = {}
        for eng in self.engines:
            for st in STATS:
                row = {}
                for m in self.models:
                    rep = self.reports[m]
                    row[m] = rep.pvalues.get(eng, {}).get(st)
                out[(eng, st)] = row
        return out

    def table(self) -> str:
        lines = ["\t".join(["engine", "statistic"] + list(self.models))]
        for (eng, st), row in self.matrix().items():
            cells = [eng, ("~" if eng == "transform" else "") + st]
            cells += ["failed" if row[m] is None else f"{row[m]:.4f}" for m in self.models]
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def run_application(data, delta: float, model_list: Sequence[str] = tuple(APPLICATION_MODELS),
                    params: EngineParams | None = None, seed: int = 0) -> ApplicationReport:
    """Fit and test each candidate diffusion model on one series."""
    if not delta > 0:
        raise ConfigError("delta must be > 0")
    params = params or EngineParams(B=2000)
    x = np.asarray(data, dtype=float)
    reports = {}
    for name in model_list:
        try:
            model = get_model(name, delta)
            reports[name] = run_test(x, model, params, seed)
        except DataError as exc:
            reports[name] = TestReport(model=name, n=max(x.size - 1, 0),
                                       error=f"{type(exc).__name__}: {exc}")
    return ApplicationReport(list(model_list), reports, params.engines)
