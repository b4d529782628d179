"""Benchmark harness: seeded sweeps over methods, rates and fractions.

Every (method, gamma, lambda, trial) cell gets its own seed derived from
(master seed, cell index), so serial and parallel execution would produce
identical numbers. Original (uncompressed) alignment runs once per
(lambda, trial) and anchors the normalized-runtime column; its rows carry
gamma = 1.0 since no compression means k = n.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import AlignmentConfig, align_with_compression, alternate_minimize
from .core import ConsistencyError, NumericalError, WeightedPointSet
from .generators import generate_planted

METHODS = ("original", "kcenter", "kcenter+", "kmeans", "random", "random+")

CSV_COLUMNS = (
    "method",
    "gamma",
    "lambda",
    "trial",
    "distance",
    "t_compress",
    "t_align",
    "t_finalflow",
    "t_total",
    "normalized_time",
)


@dataclass(frozen=True)
class GeneratorSpec:
    """Planted-instance parameters for synthetic sweeps."""

    n: int
    d: int
    intrinsic_dim: int
    noise: float = 0.0
    outlier_fraction: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...] = ("original", "kcenter+")
    rates: tuple[float, ...] = (0.1,)
    fractions: tuple[float, ...] = (1.0,)
    trials: int = 1
    seed: int = 0
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    files: tuple[str, str] | None = None
    generator: GeneratorSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if not self.methods:
            raise ValueError("need at least one method")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        compressed = [m for m in self.methods if m != "original"]
        if compressed and not self.rates:
            raise ValueError("compressed methods need at least one rate")
        for r in self.rates:
            if not 0.0 < r <= 1.0:
                raise ValueError(f"rates must lie in (0, 1], got {r}")
        if not self.fractions:
            raise ValueError("need at least one fraction")
        for f in self.fractions:
            if not 0.0 < f <= 1.0:
                raise ValueError(f"fractions must lie in (0, 1], got {f}")
        if self.trials < 1:
            raise ValueError(f"need trials >= 1, got {self.trials}")
        if (self.files is None) == (self.generator is None):
            raise ValueError("pass exactly one of files and generator")


@dataclass(frozen=True)
class CellResult:
    """One benchmark cell; timings in seconds, NaN marks a failed stage."""

    method: str
    gamma: float
    fraction: float
    trial: int
    distance: float
    t_compress: float
    t_align: float
    t_finalflow: float
    t_total: float
    normalized_time: float
    error: str | None = None


@dataclass(frozen=True)
class ExperimentResult:
    rows: tuple[CellResult, ...]

    def failures(self) -> tuple[CellResult, ...]:
        return tuple(row for row in self.rows if row.error is not None)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [
                    row.method,
                    _csv_float(row.gamma),
                    _csv_float(row.fraction),
                    row.trial,
                    _csv_float(row.distance),
                    _csv_float(row.t_compress),
                    _csv_float(row.t_align),
                    _csv_float(row.t_finalflow),
                    _csv_float(row.t_total),
                    _csv_float(row.normalized_time),
                ]
            )
        return buf.getvalue()

    def summary(self) -> list[dict]:
        """Mean and std over trials for each (method, gamma, lambda)."""
        groups: dict[tuple, list[CellResult]] = {}
        for row in self.rows:
            groups.setdefault((row.method, row.gamma, row.fraction), []).append(row)
        out = []
        for (method, gamma, fraction), rows in sorted(groups.items()):
            distances = np.array([r.distance for r in rows])
            totals = np.array([r.t_total for r in rows])
            normed = np.array([r.normalized_time for r in rows])
            ok = np.isfinite(distances)
            out.append(
                {
                    "method": method,
                    "gamma": gamma,
                    "lambda": fraction,
                    "trials": len(rows),
                    "failed": int(np.count_nonzero(~ok)),
                    "distance_mean": float(distances[ok].mean()) if ok.any() else float("nan"),
                    "distance_std": float(distances[ok].std()) if ok.any() else float("nan"),
                    "t_total_mean": float(totals[ok].mean()) if ok.any() else float("nan"),
                    "t_total_std": float(totals[ok].std()) if ok.any() else float("nan"),
                    "normalized_time_mean": (
                        float(normed[ok].mean()) if ok.any() and np.isfinite(normed[ok]).all() else float("nan")
                    ),
                }
            )
        return out

    def summary_text(self) -> str:
        lines = [
            f"{'method':>9} {'gamma':>6} {'lambda':>6} {'distance':>22} {'t_total [s]':>20} {'norm_time':>10}"
        ]
        for s in self.summary():
            dist = f"{s['distance_mean']:.6g} +- {s['distance_std']:.2g}"
            total = f"{s['t_total_mean']:.4g} +- {s['t_total_std']:.2g}"
            lines.append(
                f"{s['method']:>9} {s['gamma']:>6.3g} {s['lambda']:>6.3g} {dist:>22} {total:>20} {s['normalized_time_mean']:>10.4g}"
                + (f"  [{s['failed']} failed]" if s["failed"] else "")
            )
        return "\n".join(lines)


def _csv_float(x: float) -> str:
    return repr(float(x))


def _derive_seed(master: int, *key: int) -> int:
    state = np.random.SeedSequence([int(master), *map(int, key)]).generate_state(2)
    return int(state[0]) ^ (int(state[1]) << 31)


def rate_to_k(gamma: float, n_a: int, n_b: int) -> int:
    return max(1, round(gamma * (n_a + n_b) / 2.0))


def _warm_up(a: WeightedPointSet, b: WeightedPointSet, cfg: ExperimentConfig) -> None:
    """Trigger JIT compilation on a truncated instance so it never lands in a timing."""
    m = min(8, a.n, b.n)
    align = replace(cfg.alignment, max_rounds=1, restarts=0, fraction=min(cfg.fractions))
    try:
        alternate_minimize(
            WeightedPointSet(a.points[:m], a.weights[:m]),
            WeightedPointSet(b.points[:m], b.weights[:m]),
            align,
        )
    except (NumericalError, ConsistencyError, ValueError):
        pass


def _instances(cfg: ExperimentConfig):
    """One (A, B) per trial; generator trials draw fresh seeded instances."""
    if cfg.files is not None:
        from .fileio import load_pointset

        a = load_pointset(cfg.files[0])
        b = load_pointset(cfg.files[1])
        return [(a, b)] * cfg.trials
    pairs = []
    for trial in range(cfg.trials):
        seed = _derive_seed(cfg.seed, 1, trial)
        g = cfg.generator
        a, b, _ = generate_planted(
            g.n, g.d, g.intrinsic_dim, noise=g.noise, outlier_fraction=g.outlier_fraction, seed=seed
        )
        pairs.append((a, b))
    return pairs


def _evaluate_cell(a, b, method, gamma, fraction, base: AlignmentConfig, seed: int):
    align = replace(base, fraction=fraction, seed=seed)
    start = time.monotonic()
    if method == "original":
        report = alternate_minimize(a, b, align)
    else:
        report = align_with_compression(a, b, method, align, k=rate_to_k(gamma, a.n, b.n))
    total = time.monotonic() - start
    t = report.timings
    return (
        float(report.final_distance),
        float(t["compress"]),
        float(t["align_loop"] + t["compose"]),
        float(t["final_flow"]),
        float(total),
    )


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    instances = _instances(cfg)
    _warm_up(instances[0][0], instances[0][1], cfg)
    nan = float("nan")
    rows: list[CellResult] = []
    cell_index = 0
    for trial in range(cfg.trials):
        a, b = instances[trial]
        for fraction in cfg.fractions:
            group: list[CellResult] = []
            original_total = nan
            for method in cfg.methods:
                gammas = (1.0,) if method == "original" else cfg.rates
                for gamma in gammas:
                    seed = _derive_seed(cfg.seed, 0, cell_index)
                    cell_index += 1
                    try:
                        dist, t_c, t_a, t_f, t_tot = _evaluate_cell(
                            a, b, method, gamma, fraction, cfg.alignment, seed
                        )
                        error = None
                    except (NumericalError, ConsistencyError, ValueError) as exc:
                        dist = t_c = t_a = t_f = t_tot = nan
                        error = f"{type(exc).__name__}: {exc}"
                    if method == "original" and error is None:
                        original_total = t_tot
                    group.append(
                        CellResult(
                            method=method,
                            gamma=gamma,
                            fraction=fraction,
                            trial=trial,
                            distance=dist,
                            t_compress=t_c,
                            t_align=t_a,
                            t_finalflow=t_f,
                            t_total=t_tot,
                            normalized_time=nan,
                            error=error,
                        )
                    )
            for row in group:
                if row.error is not None:
                    rows.append(row)
                elif row.method == "original":
                    rows.append(replace(row, normalized_time=1.0))
                else:
                    rows.append(replace(row, normalized_time=row.t_total / original_total))
    return ExperimentResult(rows=tuple(rows))


def _as_tuple(value, kind):
    if not isinstance(value, (list, tuple)):
        raise ValueError(f"{kind} must be a list")
    return tuple(value)


def config_from_mapping(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a flat key-value document."""
    from .transport import TransportConfig

    doc = dict(doc)

    def pop(key, default):
        return doc.pop(key, default)

    methods = _as_tuple(pop("methods", ["original", "kcenter+"]), "methods")
    rates = _as_tuple(pop("rates", [0.1]), "rates")
    fractions = _as_tuple(pop("fractions", [1.0]), "fractions")
    trials = int(pop("trials", 1))
    seed = int(pop("seed", 0))

    files = None
    generator = None
    if "file_a" in doc or "file_b" in doc:
        if "file_a" not in doc or "file_b" not in doc:
            raise ValueError("file instances need both file_a and file_b")
        files = (str(pop("file_a", "")), str(pop("file_b", "")))
    else:
        generator = GeneratorSpec(
            n=int(pop("n", 100)),
            d=int(pop("d", 10)),
            intrinsic_dim=int(pop("intrinsic_dim", 2)),
            noise=float(pop("noise", 0.0)),
            outlier_fraction=float(pop("outlier_fraction", 0.0)),
        )

    transport = TransportConfig(
        backend=str(pop("backend", "exact")),
        sinkhorn_regularization=(
            float(doc.pop("regularization")) if "regularization" in doc else None
        ),
        sinkhorn_max_iters=int(pop("sinkhorn_max_iters", 10_000)),
        sinkhorn_tolerance=float(pop("sinkhorn_tolerance", 1e-4)),
    )
    alignment = AlignmentConfig(
        max_rounds=int(pop("max_rounds", 10)),
        objective_tolerance=float(pop("objective_tolerance", 1e-6)),
        restarts=int(pop("restarts", 0)),
        rotation_only=bool(pop("rotation_only", False)),
        transport=transport,
    )
    if doc:
        raise ValueError(f"unknown config keys: {sorted(doc)}")
    return ExperimentConfig(
        methods=methods,
        rates=rates,
        fractions=fractions,
        trials=trials,
        seed=seed,
        alignment=alignment,
        files=files,
        generator=generator,
    )


def load_experiment_config(path) -> ExperimentConfig:
    """Parse a flat TOML key-value file into an ExperimentConfig."""
    import tomli

    with open(path, "rb") as fh:
        try:
            doc = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from None
    return config_from_mapping(doc)
