"""Affine stochastic recurrence ``R_t = A_t R_{t-1} + B_t`` and its tail constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, RegimeError
from .estimators import hill_estimate, quantile_threshold, ratio_from_counts, window_diagnostic
from .oracles import LimitMeasureQuery, OracleResult
from .rng import substream
from .rv_core import (
    RegVarSpec,
    SphereDist,
    batch_norm,
    law_from_dict,
    operator_norm,
    radius_moment,
)

REGIMES = ("heavy-A", "heavy-B")
HILL_REL_TOL = 0.15
DIVERGENCE_RUN = 5


def pair_length(d: int) -> int:
    return d * d + d


# ---------------------------------------------------------------------------
# pair samplers and spectral laws on the (a, b) space
# ---------------------------------------------------------------------------


class EmbeddedSpectral:
    """A unit-sphere law on one slot of the ``(a, b)`` pair space, zero on the other.

    ``slot`` is ``"a"`` (matrix part) or ``"b"`` (vector part). The pair-sum
    norm of an embedded direction equals the inner norm, hence one.
    """

    norm_kind = "pair-sum"
    shape = None

    def __init__(self, inner: SphereDist, d: int, slot: str):
        if slot not in ("a", "b"):
            raise ConfigurationError(f"slot must be 'a' or 'b', got {slot!r}")
        want = d * d if slot == "a" else d
        if inner.dimension != want:
            raise ConfigurationError(f"inner law has dimension {inner.dimension}, slot {slot} needs {want}")
        self.inner, self.d, self.slot = inner, d, slot
        self.dimension = pair_length(d)

    @property
    def is_discrete(self) -> bool:
        return self.inner.is_discrete

    def _embed(self, rows: np.ndarray) -> np.ndarray:
        out = np.zeros((len(rows), self.dimension))
        if self.slot == "a":
            out[:, : self.d * self.d] = rows
        else:
            out[:, self.d * self.d :] = rows
        return out

    def sample(self, n, rng):
        return self._embed(self.inner.sample(n, rng))

    def atom_table(self):
        table = self.inner.atom_table()
        return None if table is None else (self._embed(table[0]), table[1])

    def to_dict(self):
        return {"embedded": self.inner.to_dict(), "d": self.d, "slot": self.slot}


def spectral_from_dict(d: dict):
    if "embedded" in d:
        return EmbeddedSpectral(SphereDist.from_dict(d["embedded"]), int(d["d"]), d["slot"])
    return SphereDist.from_dict(d)


class IndependentPairSampler:
    """``A`` and ``B`` drawn independently from their own laws (flat rows)."""

    def __init__(self, a_law, b_law, d: int):
        if a_law.dimension != d * d or b_law.dimension != d:
            raise ConfigurationError(
                f"laws of dimension {a_law.dimension} and {b_law.dimension} do not fit d={d}"
            )
        self.a_law, self.b_law, self.d = a_law, b_law, d

    def sample_pairs(self, n: int, rng: np.random.Generator):
        a = np.asarray(self.a_law.sample(n, rng), dtype=float).reshape(n, self.d, self.d)
        b = np.asarray(self.b_law.sample(n, rng), dtype=float).reshape(n, self.d)
        return a, b

    def to_dict(self):
        return {"sampler": "independent", "a_law": self.a_law.to_dict(), "b_law": self.b_law.to_dict()}


class PolarPairSampler:
    """The pair drawn jointly as ``R * Theta`` in the pair-sum norm."""

    def __init__(self, spec: RegVarSpec, d: int):
        if spec.dimension != pair_length(d) or spec.norm_kind != "pair-sum":
            raise ConfigurationError("a polar pair law needs the pair-sum norm on d*d + d coordinates")
        self.spec, self.d = spec, d

    def sample_pairs(self, n: int, rng: np.random.Generator):
        flat = self.spec.sample(n, rng)
        k = self.d * self.d
        return flat[:, :k].reshape(n, self.d, self.d), flat[:, k:]

    def to_dict(self):
        return {"sampler": "polar", "pair": self.spec.to_dict()}


@dataclass(eq=False)
class SreModel:
    """Joint law of ``(A, B)`` with the declared tail of ``||(A, B)||``."""

    dimension: int
    sampler: object
    declared_tail: RegVarSpec
    regime: str = "heavy-A"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if self.declared_tail.dimension != pair_length(self.dimension):
            raise ConfigurationError("declared tail must live on the pair space")
        if self.declared_tail.norm_kind != "pair-sum":
            raise ConfigurationError("declared tail must use the pair-sum norm")
        if getattr(self.sampler, "d", self.dimension) != self.dimension:
            raise ConfigurationError("sampler dimension does not match the model")

    @property
    def alpha(self) -> float:
        return self.declared_tail.alpha

    def sample_pairs(self, n: int, rng: np.random.Generator):
        return self.sampler.sample_pairs(n, rng)

    @classmethod
    def from_laws(cls, a_law, b_law, d: int = 1, regime: str = "heavy-A") -> "SreModel":
        """Independent ``A`` and ``B``; the heavy factor sets the declared pair tail."""
        heavy, slot = (a_law, "a") if regime == "heavy-A" else (b_law, "b")
        if not isinstance(heavy, RegVarSpec):
            raise ConfigurationError(f"the {regime} regime needs a regularly varying {slot.upper()}")
        declared = RegVarSpec(
            pair_length(d),
            heavy.tail,
            heavy.slowly_varying,
            EmbeddedSpectral(heavy.spectral, d, slot),
            radius_scale=heavy.radius_scale,
        )
        return cls(d, IndependentPairSampler(a_law, b_law, d), declared, regime)

    @classmethod
    def polar(cls, pair_spec: RegVarSpec, d: int, regime: str = "heavy-A") -> "SreModel":
        return cls(d, PolarPairSampler(pair_spec, d), pair_spec, regime)

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "regime": self.regime, **self.sampler.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SreModel":
        try:
            dim = int(d["dimension"])
            regime = d.get("regime", "heavy-A")
            if d.get("sampler", "independent") == "independent":
                return cls.from_laws(law_from_dict(d["a_law"]), law_from_dict(d["b_law"]), dim, regime)
            pair = dict(d["pair"])
            spec = RegVarSpec.from_dict({**pair, "spectral": None})
            spec.spectral = spectral_from_dict(pair["spectral"])
            spec.__post_init__()
            return cls.polar(spec, dim, regime)
        except KeyError as exc:
            raise ConfigurationError(f"missing model field {exc.args[0]!r}") from None


# ---------------------------------------------------------------------------
# conditions
# ---------------------------------------------------------------------------


@dataclass
class ConditionReport:
    ea_alpha: float
    ea_alpha_se: float
    ea_alpha_finite: bool
    c1_ok: bool
    hill_alpha: float
    c2_diagnostic: float
    c3_ok: bool
    nondegenerate_fraction: float
    c3_nondegenerate: bool


def _a_moment_finite(model: SreModel) -> bool:
    """Whether ``E||A||^alpha`` is finite judging from the declared laws."""
    sampler = model.sampler
    if isinstance(sampler, IndependentPairSampler):
        a = sampler.a_law
        if isinstance(a, RegVarSpec):
            return math.isfinite(radius_moment(a, model.alpha))
        return True
    # polar pair: the A part carries the radial tail whenever theta_a can be nonzero
    spec = model.declared_tail
    if math.isfinite(radius_moment(spec, model.alpha)):
        return True
    theta = spec.spectral.sample(1000, np.random.default_rng(0))
    k = model.dimension**2
    return not np.any(batch_norm(theta[:, :k], "operator") > 0)


def check_conditions(model: SreModel, n: int, rng: np.random.Generator) -> ConditionReport:
    """Report on the conditions of the heavy-A regime from ``n`` pair draws.

    Nothing here is a verdict: the second condition in particular is a
    finite-window number only.
    """
    a, b = model.sample_pairs(n, substream(rng, 0))
    na = operator_norm(a)
    pair = na + np.sqrt(np.sum(b * b, axis=1))
    alpha = model.alpha
    pa = na**alpha
    ea = float(pa.mean())
    se = float(pa.std(ddof=1) / math.sqrt(n))
    finite = _a_moment_finite(model)

    k = max(2, n // 1000)
    try:
        hill = hill_estimate(pair[pair > 0], k).value
    except DomainError:
        hill = math.nan
    c1_ok = bool(abs(hill - alpha) <= HILL_REL_TOL * alpha)

    a2, b2 = model.sample_pairs(n, substream(rng, 1))
    pair2 = operator_norm(a2) + np.sqrt(np.sum(b2 * b2, axis=1))
    M = 10.0
    t, _ = quantile_threshold(pair * pair2, 0.999)
    try:
        c2 = window_diagnostic(pair, pair2, M, max(t, 1.01 * M * M))
    except Exception:
        c2 = math.nan

    tp, _ = quantile_threshold(pair, 0.999)
    exceed = pair > tp
    frac = float(np.mean(na[exceed] > tp / 2)) if exceed.any() else 0.0
    # the moment part gates c3_ok; whether A carries the tail is reported
    # separately since heavy-B models legitimately have no mass there
    c3_ok = bool(finite and ea < 1)
    return ConditionReport(ea, se, finite, c1_ok, hill, c2, c3_ok, frac, frac > 0)


def series_truncation(model: SreModel | None, eps: float, ea_alpha: float | None = None) -> int:
    """Smallest ``N`` with ``ea_alpha^N <= eps``.

    Without ``ea_alpha`` it is estimated from ``model`` on a fixed stream.
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    if ea_alpha is None:
        if model is None:
            raise DomainError("need a model or ea_alpha")
        ea_alpha = estimate_ea_alpha(model, 10**5, np.random.default_rng(0))
    if ea_alpha >= 1:
        raise RegimeError(f"E||A||^alpha = {ea_alpha} is not below 1")
    if ea_alpha <= 0:
        return 1
    n = max(1, math.ceil(math.log(eps) / math.log(ea_alpha)))
    while n > 1 and ea_alpha ** (n - 1) <= eps:
        n -= 1
    while ea_alpha**n > eps:
        n += 1
    return n


def estimate_ea_alpha(model: SreModel, n: int, rng: np.random.Generator) -> float:
    a, _ = model.sample_pairs(n, rng)
    return float(np.mean(operator_norm(a) ** model.alpha))


# ---------------------------------------------------------------------------
# stationary paths
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class StationarySample:
    vectors: np.ndarray
    mode: str
    truncation_depth: int = 0
    burn_in: int = 0
    seed: object = None
    majorant: np.ndarray | None = field(default=None, repr=False)

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.vectors * self.vectors, axis=1))

    def header(self) -> str:
        return f"mode={self.mode} depth={self.truncation_depth} burn_in={self.burn_in} seed={self.seed}"

    def save(self, path) -> Path:
        """Write as ``.npz`` (binary) or ``.csv`` with a ``#`` header line."""
        path = Path(path)
        if path.suffix == ".npz":
            np.savez(path, vectors=self.vectors, header=np.array(self.header()))
        else:
            np.savetxt(path, self.vectors, delimiter=",", header=self.header(), fmt="%.17g")
        return path

    @classmethod
    def load(cls, path) -> "StationarySample":
        path = Path(path)
        if path.suffix == ".npz":
            with np.load(path) as f:
                vectors, header = f["vectors"], str(f["header"])
        else:
            with open(path) as fh:
                header = fh.readline().lstrip("# ").strip()
            vectors = np.loadtxt(path, delimiter=",", ndmin=2)
        meta = dict(item.split("=", 1) for item in header.split())
        return cls(vectors, meta["mode"], int(meta["depth"]), int(meta["burn_in"]), meta["seed"])


def _step_pairs(model, n, rng, step):
    a, b = model.sample_pairs(n, substream(rng, step))
    return a, b


def _series_paths(model: SreModel, n_paths: int, depth: int, rng, with_majorant: bool, keep_half=False):
    """Partial sums of ``sum_k Pi_k B_{k+1}`` and of the norm majorant."""
    d = model.dimension
    scalar = d == 1
    acc = np.zeros((n_paths, d))
    prod = np.ones(n_paths) if scalar else np.broadcast_to(np.eye(d), (n_paths, d, d)).copy()
    maj = np.zeros(n_paths) if with_majorant else None
    prod_norm = np.ones(n_paths) if with_majorant else None
    half = None
    for step in range(depth):
        a, b = _step_pairs(model, n_paths, rng, step)
        # term k = step uses Pi_step (A_1..A_step) and B_{step+1}
        if scalar:
            acc[:, 0] += prod * b[:, 0]
        else:
            acc += np.matmul(prod, b[:, :, None])[:, :, 0]
        if with_majorant:
            maj += prod_norm * np.sqrt(np.sum(b * b, axis=1))
            prod_norm = prod_norm * operator_norm(a)
        prod = prod * a[:, 0, 0] if scalar else np.matmul(prod, a)
        if keep_half and step + 1 == depth // 2:
            half = maj.copy()
    return acc, maj, half


def iterate_sre(
    model: SreModel,
    n_paths: int,
    mode: str,
    depth: int,
    rng: np.random.Generator,
    with_majorant: bool = False,
    seed=None,
) -> StationarySample:
    """Approximate stationary draws.

    ``series`` sums ``depth`` terms of ``sum_k Pi_k B_{k+1}``; ``markov``
    iterates the recursion ``depth`` times from zero. Each step uses fresh
    pair draws from its own substream. ``with_majorant`` also returns
    ``sum_k ||B_{k+1}|| prod_{j<=k} ||A_j||`` on the same draws (series only).
    """
    if n_paths < 1 or depth < 1:
        raise DomainError("n_paths and depth must be positive")
    if mode == "series":
        acc, maj, _ = _series_paths(model, n_paths, depth, rng, with_majorant)
        return StationarySample(acc, "series", depth, 0, seed, maj)
    if mode != "markov":
        raise DomainError(f"unknown mode {mode!r}")
    if with_majorant:
        raise DomainError("the majorant is defined for the series construction")
    d = model.dimension
    r = np.zeros((n_paths, d))
    for step in range(depth):
        a, b = _step_pairs(model, n_paths, rng, step)
        r = (a[:, 0, 0] * r[:, 0])[:, None] + b if d == 1 else np.matmul(a, r[:, :, None])[:, :, 0] + b
    return StationarySample(r, "markov", 0, depth, seed)


def majorant_moment(model: SreModel, n_paths: int, N: int, rng: np.random.Generator) -> OracleResult:
    """``E[R^alpha]`` for the norm majorant truncated after ``N`` terms.

    ``details["stability_ratio"]`` compares the estimate at ``N`` with the
    one at ``N // 2`` on the same draws.
    """
    if N < 2:
        raise DomainError("N must be at least 2")
    ea = estimate_ea_alpha(model, min(n_paths, 10**5), substream(rng, 1))
    if ea >= 1:
        raise RegimeError(f"E||A||^alpha estimated at {ea}, not below 1")
    _, maj, half = _series_paths(model, n_paths, N, substream(rng, 0), True, keep_half=True)
    alpha = model.alpha
    vals = maj**alpha
    m_full = float(vals.mean())
    m_half = float((half**alpha).mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.inf
    ratio = m_full / m_half if m_half > 0 else (1.0 if m_full == 0 else math.inf)
    return OracleResult(m_full, "spectral-mc", n_paths, se, {"stability_ratio": ratio, "half_value": m_half})


# ---------------------------------------------------------------------------
# limit measures
# ---------------------------------------------------------------------------


def _split_theta(theta: np.ndarray, d: int):
    k = d * d
    return theta[:, :k].reshape(-1, d, d), theta[:, k:]


def _apply(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    if a.shape[-1] == 1:
        return a[:, 0, 0][:, None] * v
    return np.matmul(a, v[:, :, None])[:, :, 0]


def _masses(vecs: np.ndarray, query: LimitMeasureQuery, alpha: float) -> np.ndarray:
    nz = np.sqrt(np.sum(vecs * vecs, axis=1))
    out = np.zeros(len(vecs))
    pos = nz > 0
    if pos.any():
        keep = query.in_cone(vecs[pos] / nz[pos][:, None])
        idx = np.flatnonzero(pos)[keep]
        out[idx] = (nz[idx] / query.u) ** alpha
    return out


def nu_measure(
    model: SreModel,
    query: LimitMeasureQuery,
    n_terms: int | None,
    n: int,
    rng: np.random.Generator,
    ea_alpha: float | None = None,
) -> OracleResult:
    """Truncated limit measure ``sum_j E[mu_AB((a, b): Pi_j (a R0 + b) in A)]``.

    Term ``j`` draws ``Pi_j`` from ``j`` fresh ``A`` factors, an independent
    stationary ``R0`` (series of depth ``series_truncation(1e-6)``) and a
    pair direction ``(theta_a, theta_b)`` from the declared spectral law; its
    mass is ``(||Pi_j (theta_a R0 + theta_b)|| / u)^alpha``. Each term has
    its own substream.
    """
    if ea_alpha is None:
        ea_alpha = estimate_ea_alpha(model, min(n, 10**5), substream(rng, 10**6))
    if ea_alpha >= 1:
        raise RegimeError(f"E||A||^alpha = {ea_alpha} is not below 1")
    depth = series_truncation(model, 1e-6, ea_alpha)
    if n_terms is None:
        n_terms = series_truncation(model, 1e-4, ea_alpha)
    d, alpha = model.dimension, model.alpha
    spectral = model.declared_tail.spectral
    terms, ses = [], []
    run = 0
    for j in range(n_terms):
        sub = substream(rng, j)
        r0, _, _ = _series_paths(model, n, depth, substream(sub, 0), False)
        theta_a, theta_b = _split_theta(spectral.sample(n, substream(sub, 2)), d)
        v = _apply(theta_a, r0) + theta_b
        prod_rng = substream(sub, 1)
        for step in range(j):
            a, _ = model.sample_pairs(n, substream(prod_rng, step))
            # Pi_j v = A_1 (A_2 (... A_j v)); the factors are iid so the order is immaterial
            v = _apply(a, v)
        vals = _masses(v, query, alpha)
        terms.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf)
        if j > 0 and terms[-2] > 0 and terms[-1] / terms[-2] > 1:
            run += 1
            if run >= DIVERGENCE_RUN:
                raise RegimeError(f"term means grew for {DIVERGENCE_RUN} consecutive terms")
        else:
            run = 0
    value = float(sum(terms))
    remainder = terms[-1] * ea_alpha / (1 - ea_alpha) if terms else 0.0
    se = math.sqrt(sum(s * s for s in ses))
    details = {
        "terms": terms,
        "term_std_errors": ses,
        "remainder_bound": remainder,
        "depth": depth,
        "regime": model.regime,
        "ea_alpha": ea_alpha,
    }
    return OracleResult(value, "spectral-mc", n, se, details)


def one_step_check(
    model: SreModel,
    x_law,
    d_x: float,
    query: LimitMeasureQuery,
    n: int,
    rng: np.random.Generator,
    level: float = 0.999,
) -> tuple[OracleResult, OracleResult]:
    """Both sides of the one-step tail identity for ``AX + B``.

    ``lhs`` is the empirical ``P(||AX + B|| > u t) / P(||(A, B)|| > t)`` at the
    ``level`` quantile ``t`` of the pair norm (paired draws); ``rhs`` is
    ``E[(||theta_a X + theta_b|| / u)^alpha] + d_x E||A Theta_X||^alpha u^-alpha``
    on independent streams. ``x_law`` must be a RegVarSpec (its spectral law
    gives ``Theta_X``).
    """
    if not d_x > 0:
        raise DomainError("d_x must be positive")
    if not isinstance(x_law, RegVarSpec) or x_law.dimension != model.dimension:
        raise ConfigurationError("x_law must be a RegVarSpec of the model dimension")
    d, alpha = model.dimension, model.alpha
    # lhs
    a, b = model.sample_pairs(n, substream(rng, 0))
    x = x_law.sample(n, substream(rng, 1))
    pair = operator_norm(a) + np.sqrt(np.sum(b * b, axis=1))
    t, k_den = quantile_threshold(pair, level)
    out = _apply(a, x) + b
    hit = np.sqrt(np.sum(out * out, axis=1)) > query.u * t
    if hit.any() and query.cone is not None:
        hv = out[hit]
        hit[hit] = query.in_cone(hv / np.sqrt(np.sum(hv * hv, axis=1))[:, None])
    k_num = int(np.count_nonzero(hit))
    k_both = int(np.count_nonzero(hit & (pair > t)))
    est = ratio_from_counts(k_num, n, int(np.count_nonzero(pair > t)), n, t, k_both)
    se_lhs = (est.ci_high - est.ci_low) / (2 * 1.96)
    lhs = OracleResult(est.value, "spectral-mc", n, se_lhs, {"threshold": t, "n_exceedances": k_num})
    # rhs, first term
    theta_a, theta_b = _split_theta(model.declared_tail.spectral.sample(n, substream(rng, 2)), d)
    x2 = x_law.sample(n, substream(rng, 3))
    first = _masses(_apply(theta_a, x2) + theta_b, query, alpha)
    # second term: E||A Theta_X||^alpha restricted to the query
    a3, _ = model.sample_pairs(n, substream(rng, 4))
    theta_x = x_law.spectral.sample(n, substream(rng, 5))
    second = d_x * _masses(_apply(a3, theta_x), query, alpha)
    value = float(first.mean() + second.mean())
    se = math.sqrt((first.var(ddof=1) + second.var(ddof=1)) / n)
    rhs = OracleResult(value, "spectral-mc", n, se, {"first": float(first.mean()), "second": float(second.mean())})
    return lhs, rhs
