"""Experiment configurations, runners and CSV / JSON records."""

from __future__ import annotations

import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .bounds import (
    LOG2,
    BoundReport,
    cmi_bound_compression,
    cmi_bound_stable,
    cmi_bound_svm,
    cmi_bound_vc_ecmi,
    cmi_bound_version_space,
    ecmi_bound_loo,
    fitted_slope,
)
from .combinatorics import star_number, vc_dimension
from .core import (
    Example,
    FiniteClass,
    FiniteDistribution,
    derive_seed,
    draw_sample,
    load_class,
    load_distribution,
    point_functions,
    uniform_over_domain,
)
from .infotheory import (
    MIEstimate,
    Supersample,
    disintegrated_cmi,
    draw_supersample,
    estimate_cmi,
    estimate_ecmi,
    estimate_vs_cmi,
    summarize,
)
from .learners import LEARNER_NAMES, Learner, VersionSpaceReleaser, _double_over_selections, make_learner
from .oig import OneInclusionLearner, SingletonLearner, error_oracle, loo_ecmi_bound, loo_error

MODES = ("cmi", "ecmi", "vs-cmi", "lowerbound", "oig-audit")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    learner: str
    distribution: Any
    n: tuple
    draws: int
    seed: int
    mode: str = "cmi"
    cls: Any = None
    bounds: tuple = ()
    inner_samples: int = 256

    @classmethod
    def from_json(cls, doc_or_path) -> "ExperimentConfig":
        if isinstance(doc_or_path, (str, Path)):
            base = Path(doc_or_path).parent
            try:
                doc = json.loads(Path(doc_or_path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        else:
            base = Path(".")
            doc = dict(doc_or_path)

        def inline(v):
            if isinstance(v, str):
                p = Path(v)
                p = p if p.is_absolute() else base / p
                try:
                    return json.loads(p.read_text())
                except (OSError, json.JSONDecodeError) as exc:
                    raise ConfigError(f"cannot read {v!r}: {exc}") from exc
            return v

        try:
            n = doc["n"]
            cfg = cls(
                learner=str(doc.get("learner", "version-space" if doc.get("mode") == "vs-cmi" else "")),
                distribution=inline(doc.get("distribution")),
                n=tuple(int(v) for v in (n if isinstance(n, list) else [n])),
                draws=int(doc.get("draws", 100)),
                seed=int(doc.get("seed", 0)),
                mode=str(doc.get("mode", "cmi")),
                cls=inline(doc.get("class")),
                bounds=tuple(b if isinstance(b, dict) else {"name": b} for b in doc.get("bounds", [])),
                inner_samples=int(doc.get("inner_samples", 256)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc}") from exc
        cfg.validate()
        return cfg

    def canonical(self) -> dict:
        return {
            "learner": self.learner,
            "distribution": self.distribution,
            "n": list(self.n),
            "draws": self.draws,
            "seed": self.seed,
            "mode": self.mode,
            "class": self.cls,
            "bounds": list(self.bounds),
            "inner_samples": self.inner_samples,
        }

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode in ("cmi", "ecmi", "vs-cmi") and self.learner not in LEARNER_NAMES + ("constant",):
            raise ConfigError(f"unknown learner {self.learner!r}")
        if self.draws < 2:
            raise ConfigError("draws must be >= 2")
        if any(v < 1 for v in self.n):
            raise ConfigError("n must be >= 1")
        for b in self.bounds:
            if b.get("name") not in BOUNDS:
                raise ConfigError(f"unknown bound {b.get('name')!r}")

    def finite_class(self) -> FiniteClass | None:
        if self.cls is None:
            return None
        try:
            return load_class(self.cls)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad class spec: {exc}") from exc

    def make_distribution(self, cls: FiniteClass | None):
        if self.distribution is None:
            raise ConfigError("missing distribution")
        try:
            return load_distribution(self.distribution, cls)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad distribution spec: {exc}") from exc

    def make_learner(self, cls: FiniteClass | None) -> Learner:
        try:
            return make_learner(self.learner, cls)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# bound registry: (params, n, class) -> bound in nats


def _class_vc(p, cls):
    if "d" in p:
        return int(p["d"])
    if cls is None:
        raise ConfigError("bound needs 'd' or a finite class")
    return vc_dimension(cls)


def _class_star(p, cls):
    if "s" in p:
        return int(p["s"])
    if cls is None:
        raise ConfigError("bound needs 's' or a finite class")
    s = star_number(cls)
    if s.capped:
        raise ConfigError("star number exceeds the search cap; pass 's'")
    return s.value


BOUNDS = {
    "stable": lambda p, n, cls: cmi_bound_stable(int(p.get("k", 1))),
    "compression": lambda p, n, cls: cmi_bound_compression(int(p.get("k", 1)), n),
    "svm": lambda p, n, cls: cmi_bound_svm(int(p["d"])),
    "version-space": lambda p, n, cls: cmi_bound_version_space(_class_star(p, cls)),
    "vc-ecmi": lambda p, n, cls: cmi_bound_vc_ecmi(_class_vc(p, cls), n),
    "loo": lambda p, n, cls: ecmi_bound_loo(_class_vc(p, cls), n),
    "ceiling": lambda p, n, cls: n * LOG2,
}


# ---------------------------------------------------------------------------
# records


@dataclass
class RunRecord:
    config_hash: str
    rows: list
    reports: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__

    CSV_COLUMNS = ("n", "mean_nats", "stderr", "draws", "mode")

    @property
    def passed(self) -> bool:
        return all(r.verdict for r in self.reports)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.CSV_COLUMNS) + "\n")
        for row in self.rows:
            buf.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in self.CSV_COLUMNS))
            buf.write("\n")
        return buf.getvalue()

    def reports_csv(self) -> str:
        lines = [BoundReport.CSV_HEADER] + [r.csv_row() for r in self.reports]
        return "\n".join(lines) + "\n"

    def to_json(self, include_clock: bool = True) -> dict:
        doc = {
            "config_hash": self.config_hash,
            "version": self.version,
            "rows": self.rows,
            "reports": [r.to_json() for r in self.reports],
            "extras": self.extras,
        }
        if include_clock:
            doc["wall_clock"] = self.wall_clock
        return doc


def _audit(reports: list, bounds: tuple, n: int, est: MIEstimate, cls) -> None:
    for b in bounds:
        value = BOUNDS[b["name"]](b, n, cls)
        reports.append(BoundReport(f"{b['name']}@n={n}", est.mean, value, est.stderr))


def run_estimate(config: ExperimentConfig) -> RunRecord:
    """Estimate CMI / eCMI / version-space CMI for every ``n`` and audit the requested bounds."""
    if config.mode == "lowerbound":
        return _merge([run_lowerbound_pointfunctions(n, config.draws, config.seed) for n in config.n], config)
    cls = config.finite_class()
    if config.mode == "oig-audit":
        if cls is None:
            raise ConfigError("oig-audit needs a finite class")
        dist = config.make_distribution(cls)
        return _merge([run_oig_audit(cls, dist, n, config.seed, config.draws) for n in config.n], config)
    dist = config.make_distribution(cls)
    start = time.perf_counter()
    rows, reports = [], []
    for n in config.n:
        try:
            if config.mode == "vs-cmi":
                if cls is None:
                    raise ConfigError("vs-cmi needs a finite class")
                est = estimate_vs_cmi(cls, dist, n, config.draws, config.seed)
            else:
                learner = config.make_learner(cls)
                if config.mode == "cmi":
                    est = estimate_cmi(learner, dist, n, config.draws, config.seed)
                else:
                    est = estimate_ecmi(learner, dist, n, config.draws, config.seed, config.inner_samples)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rows.append(est.as_row(n))
        _audit(reports, config.bounds, n, est, cls)
    return RunRecord(config.hash, rows, reports, wall_clock=time.perf_counter() - start)


def _merge(records: list, config: ExperimentConfig) -> RunRecord:
    out = RunRecord(config.hash, [], [])
    for r in records:
        out.rows.extend(r.rows)
        out.reports.extend(r.reports)
        for k, v in r.extras.items():
            out.extras.setdefault(k, []).append(v)
        out.wall_clock += r.wall_clock
    return out


# ---------------------------------------------------------------------------
# version-space lower bound on point functions


def lowerbound_distribution(n: int, s: int | None = None) -> tuple:
    """Point functions plus zero on ``n`` inputs and the hard input distribution.

    With ``M = min(n, s)``, input 0 has mass ``1 - (M-1)/n`` and inputs
    ``1..M-1`` mass ``1/n`` each; every label is 0.
    """
    from fractions import Fraction

    cls = point_functions(n)
    M = min(n, n if s is None else s)
    atoms = [(Example(0, 0), 1 - Fraction(M - 1, n))] + [(Example(i, 0), Fraction(1, n)) for i in range(1, M)]
    return cls, FiniteDistribution(tuple(atoms)), M


def recovered_columns(z: Supersample) -> np.ndarray:
    """For every selection, the number of columns whose ghost input never occurs in training."""
    n = z.n
    xs = [[ex.x for ex in row] for row in z.rows]
    if max(max(r) for r in xs) >= 64:
        raise ValueError("inputs must be < 64")
    bits = [np.array([1 << x for x in row], dtype=np.uint64) for row in xs]
    seen = _double_over_selections(bits[0], bits[1], np.uint64(0), np.bitwise_or)
    k = np.arange(1 << n)
    count = np.zeros(1 << n, dtype=np.int64)
    for j in range(n):
        ghost = np.where((k >> j) & 1 == 1, xs[0][j], xs[1][j]).astype(np.uint64)
        count += 1 - ((seen >> ghost) & np.uint64(1)).astype(np.int64)
    return count


def lowerbound_floor(M: int) -> float:
    return math.exp(-3) * LOG2 / 6 * (M - 1)


def run_lowerbound_pointfunctions(n: int, draws: int, seed: int) -> RunRecord:
    """Measured I(V(S); U | Z) against the recovered-columns estimate and the analytic floor."""
    if n < 2:
        raise ConfigError("n must be >= 2")
    start = time.perf_counter()
    cls, dist, M = lowerbound_distribution(n)
    learner = VersionSpaceReleaser(cls)
    mi, jlog, gap = [], [], []
    for i in range(draws):
        z = draw_supersample(dist, n, derive_seed(seed, i))
        a = disintegrated_cmi(learner, z)
        b = float(recovered_columns(z).mean()) * LOG2
        mi.append(a)
        jlog.append(b)
        gap.append(b - a)
    est = summarize(mi, "exact-in-U")
    j_est = summarize(jlog, "exact-in-U")
    g = summarize(gap, "exact-in-U")
    floor = lowerbound_floor(M)
    reports = [
        BoundReport(f"recovered-columns<=mi@n={n}", g.mean, 0.0, g.stderr),
        BoundReport(f"floor<=mi@n={n}", floor - est.mean, 0.0, est.stderr),
    ]
    rec = RunRecord("", [est.as_row(n)], reports, wall_clock=time.perf_counter() - start)
    rec.extras = {"n": n, "M": M, "mi": est.mean, "mi_stderr": est.stderr, "j_log2": j_est.mean, "j_stderr": j_est.stderr, "floor": floor}
    return rec


# ---------------------------------------------------------------------------
# one-inclusion graph audit


def run_oig_audit(
    cls: FiniteClass,
    dist,
    n: int,
    seed: int,
    draws: int = 50,
    tuples: int = 50,
    learner: Learner | None = None,
) -> RunRecord:
    """Leave-one-out check per sampled (n+1)-tuple, the LOO-based eCMI bound, and the eCMI estimate."""
    start = time.perf_counter()
    d = vc_dimension(cls)
    learner = learner or OneInclusionLearner(cls)
    reports = []
    worst = 0.0
    for t in range(tuples):
        seq = draw_sample(dist, n + 1, derive_seed(seed, 10_000_000 + t))
        prof = loo_error(learner.predict, seq)
        worst = max(worst, prof.average)
    if isinstance(learner, OneInclusionLearner) and learner.kind == "deterministic":
        reports.append(BoundReport(f"loo<=d/(n+1)@n={n}", worst, d / (n + 1)))
    est = estimate_ecmi(learner, dist, n, draws, seed)
    pe = error_oracle(learner.predict)
    e1 = [loo_ecmi_bound(pe, draw_sample(dist, 2 * n, derive_seed(seed, 20_000_000 + i)), seed=i).value for i in range(min(draws, 20))]
    e1_mean = float(np.mean(e1))
    if d >= 1 and n >= 2 * d:
        reports.append(BoundReport(f"ecmi<=loo-bound@n={n}", est.mean, ecmi_bound_loo(d, n), est.stderr))
    rec = RunRecord("", [est.as_row(n)], reports, wall_clock=time.perf_counter() - start)
    rec.extras = {"n": n, "d": d, "worst_loo": worst, "loo_ecmi_bound_mean": e1_mean}
    return rec


def singleton_distribution(atoms: int) -> FiniteDistribution:
    """Uniform over ``atoms`` inputs of the point-function class, all labelled 0."""
    return uniform_over_domain(point_functions(atoms), 0)


def run_singleton_sweep(ns, draws: int, seed: int, atoms: int | None = None, max_slope: float = 0.01) -> RunRecord:
    """eCMI of the randomized singleton rule along ``ns`` and the fitted slope."""
    start = time.perf_counter()
    ns = list(ns)
    dist = singleton_distribution(atoms or 2 * max(ns))
    learner = SingletonLearner()
    rows, means = [], []
    for n in ns:
        est = estimate_ecmi(learner, dist, n, draws, seed)
        rows.append(est.as_row(n))
        means.append(est.mean)
    slope, se = fitted_slope(ns, means)
    rec = RunRecord("", rows, [BoundReport("singleton-slope", slope, max_slope, 0.0)], wall_clock=time.perf_counter() - start)
    rec.extras = {"slope": slope, "slope_stderr": se, "atoms": atoms or 2 * max(ns)}
    return rec


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "BOUNDS",
    "run_estimate",
    "run_lowerbound_pointfunctions",
    "run_oig_audit",
    "run_singleton_sweep",
    "lowerbound_distribution",
    "lowerbound_floor",
    "recovered_columns",
    "singleton_distribution",
]
