"""Config-driven experiments: sharded sampling, oracle evaluation, records and reports.

Every experiment reduces to a pair of positive samples, a numerator and a
denominator, whose exceedance ratio at a quantile-pinned threshold is
compared with an oracle value. Shards are generated from independent
substreams keyed by ``(seed, purpose, shard id)`` and merged in shard order,
so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import rng as rngmod
from .errors import ConfigurationError, DomainError, ExperimentError, InsufficientDataError, RvlabError
from .estimators import TailEstimate, ratio_from_counts, top_values
from .maps import HomogeneousMap, apply_map_batch, validate_map
from .oracles import (
    LimitMeasureQuery,
    OracleResult,
    balance_from_specs,
    breiman_constant,
    equivalent_tail_constant,
    eta_measure,
    product_norm_constant,
    tail_constant_ratio,
    univariate_product_constant,
    window_oracle,
)
from .rv_core import RegVarSpec, law_from_dict, operator_norm, radius_moment, scaled_to_moment
from .sre import SreModel, iterate_sre, nu_measure, series_truncation

KINDS = (
    "breiman",
    "univariate-product",
    "eta",
    "matrix-product-light",
    "matrix-product-equivalent",
    "sre-heavy-A",
    "sre-heavy-B",
    "diagnostics",
)
CHECKS = ("monotone-checkpoints", "enumeration-vs-mc")
STANDARD_KEYS = {
    "id",
    "kind",
    "seed",
    "workers",
    "samples",
    "shard_size",
    "quantile_level",
    "tolerance",
    "checkpoints",
    "oracle_samples",
    "checks",
    "num_buffer_factor",
    "output",
}
# fields that do not influence results and stay out of the config hash
UNHASHED_KEYS = {"workers", "output"}
GAP_EPS = 1e-12


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    id: str
    kind: str
    samples: int
    seed: int = 0
    workers: int = 1
    shard_size: int = 10**6
    quantile_level: float = 0.999
    tolerance: float = 0.1
    checkpoints: list = field(default_factory=list)
    oracle_samples: int = 10**6
    checks: list = field(default_factory=list)
    num_buffer_factor: int = 16
    params: dict = field(default_factory=dict)
    output: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if self.samples < 1 or self.shard_size < 1 or self.oracle_samples < 1:
            raise ConfigurationError("sample counts must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        if not 0 < self.quantile_level < 1:
            raise ConfigurationError("quantile_level must lie in (0, 1)")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive")
        for c in self.checks:
            if c not in CHECKS:
                raise ConfigurationError(f"unknown check {c!r}")
        self.checkpoints = sorted(int(c) for c in self.checkpoints)
        # build every component now so invalid specs fail before sampling
        self.components()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "id" not in d or "kind" not in d or "samples" not in d:
            raise ConfigurationError("config needs 'id', 'kind' and 'samples'")
        std = {k: d[k] for k in STANDARD_KEYS if k in d}
        params = {k: v for k, v in d.items() if k not in STANDARD_KEYS}
        std["samples"] = int(float(std["samples"]))
        for key in ("shard_size", "oracle_samples"):
            if key in std:
                std[key] = int(float(std[key]))
        std["checkpoints"] = [int(float(c)) for c in std.get("checkpoints", [])]
        return cls(params=params, **std)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "kind": self.kind,
            "seed": self.seed,
            "workers": self.workers,
            "samples": self.samples,
            "shard_size": self.shard_size,
            "quantile_level": self.quantile_level,
            "tolerance": self.tolerance,
            "checkpoints": list(self.checkpoints),
            "oracle_samples": self.oracle_samples,
            "checks": list(self.checks),
            "num_buffer_factor": self.num_buffer_factor,
        }
        if self.output is not None:
            out["output"] = self.output
        out.update(self.params)
        return out

    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in UNHASHED_KEYS}
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, workers=None, samples=None) -> "ExperimentConfig":
        d = self.to_dict()
        if seed is not None:
            d["seed"] = int(seed)
        if workers is not None:
            d["workers"] = int(workers)
        if samples is not None:
            d["samples"] = int(samples)
            d["checkpoints"] = [c for c in d["checkpoints"] if c < int(samples)]
            d["oracle_samples"] = min(d["oracle_samples"], int(samples))
        return ExperimentConfig.from_dict(d)

    def components(self) -> dict:
        return build_components(self.kind, self.params)


def _need(params: dict, key: str):
    if key not in params:
        raise ConfigurationError(f"missing parameter {key!r}")
    return params[key]


def resolve_moment_targets(obj):
    """Replace every regularly varying spec carrying ``alpha_moment`` by its
    rescaled form with ``E[R^alpha]`` equal to that target."""
    if isinstance(obj, list):
        return [resolve_moment_targets(v) for v in obj]
    if not isinstance(obj, dict):
        return obj
    out = {k: resolve_moment_targets(v) for k, v in obj.items()}
    if "alpha" in out and "alpha_moment" in out:
        target = float(out.pop("alpha_moment"))
        out = scaled_to_moment(RegVarSpec.from_dict(out), target).to_dict()
    return out


def build_components(kind: str, params: dict) -> dict:
    """Validated domain objects for an experiment kind."""
    params = resolve_moment_targets(params)
    c: dict[str, Any] = {}
    if kind in ("breiman", "univariate-product", "diagnostics"):
        c["x"] = RegVarSpec.from_dict(_need(params, "x"))
        c["y"] = law_from_dict(_need(params, "y"))
        if c["x"].dimension != 1 or getattr(c["y"], "dimension", 1) != 1:
            raise ConfigurationError(f"{kind} experiments take scalar laws")
        if kind == "univariate-product" and not isinstance(c["y"], RegVarSpec):
            raise ConfigurationError("univariate-product needs a regularly varying Y")
        if kind == "diagnostics":
            c["M"] = float(params.get("M", 10.0))
            if not isinstance(c["y"], RegVarSpec):
                raise ConfigurationError("diagnostics needs a regularly varying Y")
    elif kind == "eta":
        m = HomogeneousMap.from_dict(_need(params, "map"))
        c["map"] = m
        c["x"] = RegVarSpec.from_dict(_need(params, "x"))
        c["y"] = RegVarSpec.from_dict(params["y"]) if params.get("y") else None
        c["y_law"] = law_from_dict(params["y_law"]) if params.get("y_law") else c["y"]
        if c["y_law"] is None:
            raise ConfigurationError("eta needs 'y' or 'y_law'")
        if c["x"].dimension != m.d_x or c["y_law"].dimension != m.d_y:
            raise ConfigurationError(
                f"map expects dimensions ({m.d_x}, {m.d_y}), got ({c['x'].dimension}, {c['y_law'].dimension})"
            )
        if c["y"] is not None and c["y"].dimension != m.d_y:
            raise ConfigurationError("y spec dimension does not match the map")
        c["u"] = float(params.get("u", 1.0))
    elif kind in ("matrix-product-light", "matrix-product-equivalent"):
        a = RegVarSpec.from_dict(_need(params, "a"))
        if a.norm_kind != "operator" or a.spectral.shape[0] != a.spectral.shape[1]:
            raise ConfigurationError("matrix experiments need square matrices with the operator norm")
        c["a"] = a
        c["n_factors"] = int(_need(params, "n_factors"))
        if c["n_factors"] < (2 if kind == "matrix-product-equivalent" else 1):
            raise ConfigurationError("too few factors")
    elif kind in ("sre-heavy-A", "sre-heavy-B"):
        model = SreModel.from_dict(_need(params, "model"))
        want = kind[4:]
        if model.regime != want:
            raise ConfigurationError(f"model regime {model.regime} does not match kind {kind}")
        c["model"] = model
        c["ea_alpha"] = params.get("ea_alpha")
        c["depth"] = params.get("depth")
        c["oracle"] = params.get("oracle", "nu")
        if c["oracle"] not in ("nu", "reduction"):
            raise ConfigurationError(f"unknown SRE oracle {c['oracle']!r}")
        c["n_terms"] = params.get("n_terms")
    return c


# ---------------------------------------------------------------------------
# parallel Monte Carlo
# ---------------------------------------------------------------------------


@dataclass
class MCStats:
    """Sufficient statistics of a sample mean."""

    n: int = 0
    sum: float = 0.0
    sum_sq: float = 0.0

    @classmethod
    def of(cls, values) -> "MCStats":
        v = np.asarray(values, dtype=float)
        return cls(v.size, float(v.sum()), float(np.dot(v, v)))

    def __add__(self, other: "MCStats") -> "MCStats":
        return MCStats(self.n + other.n, self.sum + other.sum, self.sum_sq + other.sum_sq)

    @property
    def insufficient(self) -> bool:
        return self.n == 0

    @property
    def mean(self) -> float:
        if self.n == 0:
            raise InsufficientDataError("no samples were drawn", 0)
        return self.sum / self.n

    @property
    def std_error(self) -> float:
        if self.n < 2:
            return math.inf
        var = max(self.sum_sq / self.n - self.mean**2, 0.0) * self.n / (self.n - 1)
        return math.sqrt(var / self.n)


def shard_plan(n_total: int, shard_size: int) -> list[int]:
    """Shard sizes: full shards followed by one remainder shard."""
    if n_total < 0 or shard_size < 1:
        raise ConfigurationError("invalid shard plan")
    full, rem = divmod(n_total, shard_size)
    return [shard_size] * full + ([rem] if rem else [])


def _run_shard(task: Callable, seed: int, purpose: int, shard_id: int, n: int):
    return task(shard_id, n, rngmod.stream(seed, purpose, shard_id))


def merge_stats(results: Sequence[MCStats]) -> MCStats:
    total = MCStats()
    for r in results:
        total = total + r
    return total


def parallel_mc(
    task: Callable,
    n_total: int,
    master_seed: int,
    workers: int = 1,
    shard_size: int = 10**6,
    purpose: int = rngmod.EMPIRICAL,
    merge: Callable | None = merge_stats,
):
    """Run ``task(shard_id, n, rng)`` over the shard plan and merge in shard order.

    The shard streams depend only on ``(master_seed, purpose, shard_id)``,
    so the merged value is identical for every worker count. With
    ``merge=None`` the ordered list of shard results is returned.
    """
    if workers < 1:
        raise ConfigurationError("workers must be at least 1")
    plan = shard_plan(n_total, shard_size)
    jobs = [(task, master_seed, purpose, i, n) for i, n in enumerate(plan)]
    if workers == 1 or len(jobs) <= 1:
        results = [_run_shard(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_shard, *zip(*jobs)))
    return results if merge is None else merge(results)


# ---------------------------------------------------------------------------
# per-kind sampling
# ---------------------------------------------------------------------------


def _radius(law, n, rng) -> np.ndarray:
    v = np.asarray(law.sample(n, rng), dtype=float).reshape(n, -1)
    return np.sqrt(np.sum(v * v, axis=1))


def _matrices(spec: RegVarSpec, n, rng) -> np.ndarray:
    k = spec.spectral.shape[0]
    return spec.sample(n, rng).reshape(n, k, k)


def sample_pair(kind: str, comps: dict, n: int, rng: np.random.Generator):
    """Numerator and denominator samples for one shard."""
    if kind in ("breiman", "univariate-product", "diagnostics"):
        x = _radius(comps["x"], n, rngmod.substream(rng, 0))
        y = _radius(comps["y"], n, rngmod.substream(rng, 1))
        if kind == "diagnostics":
            return x, y
        return x * y, x
    if kind == "eta":
        m = comps["map"]
        xs = comps["x"].sample(n, rngmod.substream(rng, 0))
        ys = np.asarray(comps["y_law"].sample(n, rngmod.substream(rng, 1)), dtype=float).reshape(n, -1)
        num = m.norm_z(apply_map_batch(m, xs, ys)) / comps["u"]
        den = m.norm_x(xs) ** m.a_x * m.norm_y(ys) ** m.a_y
        return num, den
    if kind in ("matrix-product-light", "matrix-product-equivalent"):
        a = comps["a"]
        prod, norms = None, np.ones(n)
        for j in range(comps["n_factors"]):
            f = _matrices(a, n, rngmod.substream(rng, j))
            norms = norms * operator_norm(f)
            prod = f if prod is None else np.matmul(prod, f)
        num = operator_norm(prod)
        if kind == "matrix-product-light":
            return num, norms
        return num, operator_norm(_matrices(a, n, rngmod.substream(rng, 1000)))
    if kind in ("sre-heavy-A", "sre-heavy-B"):
        model = comps["model"]
        r = iterate_sre(model, n, "series", comps["resolved_depth"], rngmod.substream(rng, 0))
        a, b = model.sample_pairs(n, rngmod.substream(rng, 1))
        pair = operator_norm(a) + np.sqrt(np.sum(b * b, axis=1))
        return r.norms(), pair
    raise ConfigurationError(f"unknown kind {kind!r}")


@dataclass
class ShardSketch:
    """Top order statistics of one shard, enough to count exceedances exactly."""

    n: int
    den_top: np.ndarray
    num_top: np.ndarray
    num_complete: bool


def _sketch_task(kind: str, params: dict, extra: dict, k_den: int, k_num: int, shard_id, n, rng):
    comps = {**build_components(kind, params), **extra}
    num, den = sample_pair(kind, comps, n, rng)
    if kind == "diagnostics":
        den = num * den  # threshold is a quantile of the product
        num = den
    return ShardSketch(n, top_values(den, k_den), top_values(num, k_num), n <= k_num)


def _recount_task(kind: str, params: dict, extra: dict, t: float, M: float | None, shard_id, n, rng):
    comps = {**build_components(kind, params), **extra}
    num, den = sample_pair(kind, comps, n, rng)
    if kind == "diagnostics":
        x, y = num, den
        window = (x > M) & (x <= t / M) & (x * y > t)
        return int(np.count_nonzero(window)), int(np.count_nonzero(x > t))
    return int(np.count_nonzero(num > t)), int(np.count_nonzero(den > t))


def _shard_subset_task(task, wanted: set, shard_id, n, rng):
    return task(shard_id, n, rng) if shard_id in wanted else None


# ---------------------------------------------------------------------------
# oracles per kind
# ---------------------------------------------------------------------------


def _moment(law, p: float, norm_fn: Callable, norm_kind: str, n: int, rng) -> tuple[float, str]:
    """``E||V||^p`` in the given norm: closed form for a regularly varying law
    measured in its own norm, enumeration for atoms, Monte Carlo otherwise."""
    if isinstance(law, RegVarSpec) and law.norm_kind == norm_kind:
        return radius_moment(law, p), "quadrature"
    table = law.atom_table()
    if table is not None:
        atoms, probs = table
        return float(np.dot(probs, norm_fn(atoms) ** p)), "enumeration"
    draws = np.asarray(law.sample(n, rng), dtype=float).reshape(n, -1)
    return float(np.mean(norm_fn(draws) ** p)), "monte-carlo"


def _eta_coefficients(comps: dict, n: int, rng) -> dict:
    m, x, y, y_law = comps["map"], comps["x"], comps["y"], comps["y_law"]
    ix = x.alpha / m.a_x
    iy = y.alpha / m.a_y if y is not None else math.inf
    mom_x_of = partial(_moment, norm_fn=m.norm_x, norm_kind=m.norms["x"], n=n, rng=rngmod.substream(rng, 0))
    mom_y_of = partial(_moment, norm_fn=m.norm_y, norm_kind=m.norms["y"], n=n, rng=rngmod.substream(rng, 1))
    if ix < iy:
        mom_y, src = mom_y_of(y_law, ix * m.a_y)
        return {"c_x": 1.0 / mom_y, "c_y": 0.0, "mom_y": mom_y, "mom_x": 0.0, "source": src}
    if ix > iy:
        mom_x, src = mom_x_of(x, iy * m.a_x)
        return {"c_x": 0.0, "c_y": 1.0 / mom_x, "mom_y": 0.0, "mom_x": mom_x, "source": src}
    mom_y, src_y = mom_y_of(y, y.alpha)
    mom_x, src_x = mom_x_of(x, x.alpha)
    if not (math.isfinite(mom_x) and math.isfinite(mom_y)):
        return {"c_x": 0.0, "c_y": 0.0, "mom_y": 0.0, "mom_x": 0.0, "source": "infinite moments"}
    c_x, c_y = balance_from_specs(x, m.a_x, y, m.a_y, mom_x, mom_y)
    return {"c_x": c_x, "c_y": c_y, "mom_y": mom_y, "mom_x": mom_x, "source": f"{src_x}/{src_y}"}


def compute_oracle(cfg: ExperimentConfig, comps: dict, threshold: float | None = None) -> OracleResult:
    kind, n = cfg.kind, cfg.oracle_samples
    orng = rngmod.stream(cfg.seed, rngmod.ORACLE)
    if kind == "breiman":
        return breiman_constant(comps["y"], comps["x"].tail, n, orng)
    if kind == "univariate-product":
        x, y = comps["x"], comps["y"]
        if x.alpha != y.alpha:
            raise ConfigurationError("univariate-product needs equal tail indices")
        ex, ey = radius_moment(x, x.alpha), radius_moment(y, y.alpha)
        c0 = tail_constant_ratio(x, 1.0, y, 1.0)
        value = univariate_product_constant(x.alpha, ex, ey, c0)
        return OracleResult(value, "quadrature", 0, 0.0, {"EX_alpha": ex, "EY_alpha": ey, "c0": c0})
    if kind == "eta":
        co = _eta_coefficients(comps, n, rngmod.substream(orng, 0))
        res = eta_measure(
            comps["map"], comps["x"], comps["y"], co["c_x"], co["c_y"], co["mom_y"], co["mom_x"],
            LimitMeasureQuery(comps["u"]), n, rngmod.substream(orng, 1),
            y_law=comps["y_law"], moments_source=co["source"],
        )
        res.details.update(co)
        return res
    if kind == "matrix-product-light":
        a = comps["a"]
        res = product_norm_constant(a.spectral, a.tail, comps["n_factors"], n, orng)
        if "enumeration-vs-mc" in cfg.checks:
            mc = product_norm_constant(a.spectral, a.tail, comps["n_factors"], n, rngmod.substream(orng, 1), method="spectral-mc")
            res.details["mc_value"] = mc.value
            res.details["mc_std_error"] = mc.std_error
        return res
    if kind == "matrix-product-equivalent":
        res, weights = equivalent_tail_constant(comps["a"], comps["n_factors"], n, orng)
        res.details["weights"] = weights
        return res
    if kind in ("sre-heavy-A", "sre-heavy-B"):
        model, ea = comps["model"], comps["ea_alpha"]
        if comps["oracle"] == "reduction":
            return _sre_reduction(model, comps, n, orng)
        return nu_measure(model, LimitMeasureQuery(1.0), comps["n_terms"], n, orng, ea)
    if kind == "diagnostics":
        value = window_oracle(comps["x"], comps["y"], comps["M"], threshold)
        return OracleResult(value, "quadrature", 0, 0.0, {"M": comps["M"], "t": threshold})
    raise ConfigurationError(f"unknown kind {kind!r}")


def _sre_reduction(model: SreModel, comps: dict, n: int, orng) -> OracleResult:
    """``E[R0^alpha] / (1 - E[A^alpha])`` for a scalar model with the pair tail on the A axis."""
    if model.dimension != 1:
        raise ConfigurationError("the moment reduction applies to scalar models")
    a_law = getattr(model.sampler, "a_law", None)
    ea = comps["ea_alpha"]
    if ea is None:
        if not isinstance(a_law, RegVarSpec):
            raise ConfigurationError("need ea_alpha or a parametric A law")
        ea = radius_moment(a_law, model.alpha)
    if ea >= 1:
        raise ConfigurationError("E[A^alpha] must be below 1")
    r0 = iterate_sre(model, n, "series", comps["resolved_depth"], orng)
    stats = MCStats.of(r0.norms() ** model.alpha)
    value = stats.mean / (1 - ea)
    return OracleResult(value, "spectral-mc", n, stats.std_error / (1 - ea), {"ER0_alpha": stats.mean, "EA_alpha": ea})


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


def relative_gap(empirical: float, oracle: float) -> float:
    return abs(empirical - oracle) / max(abs(oracle), GAP_EPS)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class RunRecord:
    experiment_id: str
    kind: str
    config_hash: str
    seed: int
    empirical: TailEstimate
    oracle: OracleResult
    relative_gap: float
    tolerance: float
    passed: bool
    wall_time: float
    checkpoints: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Flat object with the CSV fields, plus checkpoints, checks and oracle details."""
        e, o = self.empirical, self.oracle
        return {
            "experiment_id": self.experiment_id,
            "estimator": self.kind,
            "value": e.value,
            "ci_low": e.ci_low,
            "ci_high": e.ci_high,
            "threshold": e.threshold,
            "n_exceedances": e.n_exceedances,
            "n_total": e.n_total,
            "seed": self.seed,
            "oracle_value": o.value,
            "oracle_method": o.method,
            "oracle_n": o.n,
            "oracle_std_error": o.std_error,
            "relative_gap": self.relative_gap,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "config_hash": self.config_hash,
            "wall_time": self.wall_time,
            "checkpoints": _jsonable(self.checkpoints),
            "checks": _jsonable(self.checks),
            "oracle_details": _jsonable(o.details),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        empirical = TailEstimate.from_dict(d)
        oracle = OracleResult(
            float(d["oracle_value"]),
            d["oracle_method"],
            int(d["oracle_n"]),
            float(d["oracle_std_error"]),
            dict(d.get("oracle_details", {})),
        )
        return cls(
            d["experiment_id"],
            d["estimator"],
            d["config_hash"],
            int(d["seed"]),
            empirical,
            oracle,
            float(d["relative_gap"]),
            float(d["tolerance"]),
            bool(d["passed"]),
            float(d["wall_time"]),
            list(d.get("checkpoints", [])),
            dict(d.get("checks", {})),
        )

    def csv_row(self) -> dict:
        row = self.to_dict()
        for key in ("value", "ci_low", "ci_high", "threshold", "oracle_value", "oracle_std_error", "relative_gap", "tolerance"):
            row[key] = repr(float(row[key]))
        row["passed"] = "PASS" if self.passed else "FAIL"
        row["wall_time"] = f"{self.wall_time:.3f}"
        return row


CSV_COLUMNS = (
    "experiment_id",
    "estimator",
    "value",
    "ci_low",
    "ci_high",
    "threshold",
    "n_exceedances",
    "n_total",
    "seed",
    "oracle_value",
    "oracle_method",
    "oracle_n",
    "oracle_std_error",
    "relative_gap",
    "tolerance",
    "passed",
    "config_hash",
    "wall_time",
)
CHECKPOINT_COLUMNS = ("experiment_id", "n", "level", "threshold", "value", "ci_low", "ci_high", "n_exceedances", "oracle_value", "relative_gap")


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def _resolve_extra(cfg: ExperimentConfig, comps: dict) -> dict:
    """Derived quantities shipped to the shard workers."""
    extra = {}
    if cfg.kind.startswith("sre"):
        depth = comps["depth"]
        if depth is None:
            ea = comps["ea_alpha"]
            depth = series_truncation(comps["model"], 1e-6, ea)
        extra["resolved_depth"] = int(depth)
    return extra


def _checkpoint_sizes(cfg: ExperimentConfig, plan: list[int]) -> list[int]:
    """Checkpoints that fall on shard boundaries, followed by the full budget."""
    bounds = np.cumsum(plan).tolist()
    wanted = cfg.checkpoints or [10**j for j in range(4, 20) if 10**j < cfg.samples]
    sizes = [c for c in wanted if c in bounds and c < cfg.samples]
    return sizes + [cfg.samples]


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """Sample, estimate, evaluate the oracle and assemble a RunRecord."""
    chash = cfg.config_hash()
    try:
        return _run(cfg, chash)
    except RvlabError as exc:
        raise ExperimentError(f"{cfg.id}: {exc}", chash) from exc


def _run(cfg: ExperimentConfig, chash: str) -> RunRecord:
    start = time.perf_counter()
    comps = cfg.components()
    if cfg.kind == "eta":
        validate_map(comps["map"], rngmod.stream(cfg.seed, rngmod.AUX))
    extra = _resolve_extra(cfg, comps)
    comps.update(extra)
    plan = shard_plan(cfg.samples, cfg.shard_size)
    k = int(round((1 - cfg.quantile_level) * cfg.samples))
    if k < 1:
        raise InsufficientDataError(f"level {cfg.quantile_level} leaves no exceedances at n={cfg.samples}", k)
    k_num = cfg.num_buffer_factor * (k + 1)
    task = partial(_sketch_task, cfg.kind, cfg.params, extra, k + 1, k_num)
    sketches: list[ShardSketch] = parallel_mc(
        task, cfg.samples, cfg.seed, cfg.workers, cfg.shard_size, rngmod.EMPIRICAL, merge=None
    )

    bounds = np.cumsum(plan).tolist()
    points = []
    for n_c in _checkpoint_sizes(cfg, plan):
        m = bounds.index(n_c) + 1
        if k >= n_c:
            continue
        t = float(top_values(np.concatenate([s.den_top for s in sketches[:m]]), k + 1)[k])
        points.append((n_c, m, t))

    # exact counts at every threshold, recounting shards whose buffers fall short
    counts = {}
    need: dict[float, set] = {}
    for n_c, m, t in points:
        if cfg.kind == "diagnostics":
            need[t] = set(range(m))
            continue
        short = {i for i, s in enumerate(sketches[:m]) if not s.num_complete and len(s.num_top) and s.num_top[-1] > t}
        counts[t] = [
            None if i in short else (int(np.count_nonzero(s.num_top > t)), int(np.count_nonzero(s.den_top > t)))
            for i, s in enumerate(sketches[:m])
        ]
        if short:
            need[t] = short
    if cfg.kind == "diagnostics":
        for _, _, t in points:
            if not t > comps["M"] ** 2:
                raise DomainError(f"threshold {t:.4g} does not exceed M^2 = {comps['M'] ** 2:.4g}")
    for t, shards in need.items():
        rtask = partial(_recount_task, cfg.kind, cfg.params, extra, t, comps.get("M"))
        res = parallel_mc(partial(_shard_subset_task, rtask, shards), sum(plan[: max(shards) + 1]),
                          cfg.seed, cfg.workers, cfg.shard_size, rngmod.EMPIRICAL, merge=None)
        base = counts.get(t, [None] * (max(shards) + 1))
        for i in shards:
            if i >= len(base):
                base.extend([None] * (i + 1 - len(base)))
            base[i] = res[i]
        counts[t] = base

    estimates = []
    for n_c, m, t in points:
        cs = counts[t][:m]
        k_num_c = sum(c[0] for c in cs)
        k_den_c = sum(c[1] for c in cs)
        estimates.append((n_c, t, ratio_from_counts(k_num_c, n_c, k_den_c, n_c, t)))

    n_final, t_final, empirical = estimates[-1]
    oracle = compute_oracle(cfg, comps, threshold=t_final)
    gap = relative_gap(empirical.value, oracle.value)

    checkpoints = [
        {
            "n": n_c,
            "level": 1 - k / n_c,
            "threshold": t,
            "value": est.value,
            "ci_low": est.ci_low,
            "ci_high": est.ci_high,
            "n_exceedances": est.n_exceedances,
            "oracle_value": oracle.value,
            "relative_gap": relative_gap(est.value, oracle.value),
        }
        for n_c, t, est in estimates
    ]
    checks = {}
    if "monotone-checkpoints" in cfg.checks:
        gaps = [abs(c["value"] - oracle.value) for c in checkpoints[-3:]]
        checks["monotone-checkpoints"] = bool(len(gaps) == 3 and gaps[0] > gaps[1] > gaps[2])
    if "enumeration-vs-mc" in cfg.checks:
        mc, se = oracle.details.get("mc_value"), oracle.details.get("mc_std_error")
        checks["enumeration-vs-mc"] = bool(
            mc is not None and oracle.method == "enumeration" and abs(mc - oracle.value) <= 4 * se
        )
    passed = bool(gap <= cfg.tolerance and all(checks.values()))
    wall = time.perf_counter() - start
    rec = RunRecord(cfg.id, cfg.kind, chash, cfg.seed, empirical, oracle, gap, cfg.tolerance, passed, wall, checkpoints, checks)
    if cfg.output:
        emit_report([rec], cfg.output, "json")
    return rec


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def summary_lines(records: Sequence[RunRecord]) -> list[str]:
    """``x/y pass`` followed by one line per record, failures first."""
    n_pass = sum(r.passed for r in records)
    lines = [f"{n_pass}/{len(records)} pass"]
    for r in sorted(records, key=lambda r: r.passed):
        lines.append(
            f"{'PASS' if r.passed else 'FAIL'} {r.experiment_id}: empirical={r.empirical.value:.6g} "
            f"oracle={r.oracle.value:.6g} gap={r.relative_gap:.4g} tol={r.tolerance:g}"
        )
    return lines


def records_csv(records: Sequence[RunRecord], include_wall_time: bool = True) -> str:
    cols = [c for c in CSV_COLUMNS if include_wall_time or c != "wall_time"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def emit_report(records: Sequence[RunRecord], out_dir, fmt: str = "csv") -> list[Path]:
    """Write records, a summary and (when present) checkpoint curves to ``out_dir``."""
    if not records:
        raise ConfigurationError("no records to report")
    if fmt not in ("csv", "json"):
        raise ConfigurationError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if fmt == "csv":
        p = out / "records.csv"
        p.write_text(records_csv(records))
    else:
        p = out / "records.json"
        p.write_text(json.dumps([r.to_dict() for r in records], indent=2))
    paths.append(p)
    s = out / "summary.txt"
    s.write_text("\n".join(summary_lines(records)) + "\n")
    paths.append(s)
    rows = [{"experiment_id": r.experiment_id, **c} for r in records for c in r.checkpoints]
    if rows:
        c = out / "checkpoints.csv"
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CHECKPOINT_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        c.write_text(buf.getvalue())
        paths.append(c)
    return paths


def load_records(path) -> list[RunRecord]:
    """Read records written by ``emit_report`` in JSON form."""
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = [data]
    return [RunRecord.from_dict(d) for d in data]


def suite_configs(suite_dir) -> list[Path]:
    """Config files of a suite, sorted by name."""
    p = Path(suite_dir)
    if not p.is_dir():
        from importlib import resources

        packaged = resources.files("rvlab") / "suites" / str(suite_dir)
        if packaged.is_dir():
            p = Path(str(packaged))
        else:
            raise ConfigurationError(f"no suite directory {suite_dir!r}")
    return sorted(p.glob("*.json"))
