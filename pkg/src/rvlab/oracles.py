"""Independent values for the limit constants and limit measures.

Discrete spectral laws are handled by exhaustive enumeration; otherwise
spectral directions are sampled and every radial integral is done in closed
form through homogeneity. Nothing here uses the tail estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DegenerateLawError, DomainError
from .maps import HomogeneousMap, apply_map_batch, map_bound, validate_map
from .rng import substream
from .rv_core import (
    RegVarSpec,
    SphereDist,
    TailIndex,
    asymptotic_tail_constant,
    operator_norm,
    radius_moment,
    survival,
)

ENUMERATION_LIMIT = 10**6
ZERO_PRODUCT_TOL = 1e-13
METHODS = ("enumeration", "quadrature", "spectral-mc")


@dataclass(frozen=True)
class LimitMeasureQuery:
    """The set ``{z : ||z|| > u, z / ||z|| in cone}``; ``cone`` maps direction rows to booleans."""

    u: float
    cone: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not self.u > 0:
            raise DomainError(f"query radius must be positive, got {self.u}")

    def in_cone(self, dirs: np.ndarray) -> np.ndarray:
        if self.cone is None:
            return np.ones(len(dirs), dtype=bool)
        return np.asarray(self.cone(dirs), dtype=bool)


@dataclass
class OracleResult:
    value: float
    method: str
    n: int
    std_error: float = 0.0
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown oracle method {self.method!r}")
        if self.method != "spectral-mc" and self.std_error != 0:
            raise DomainError(f"{self.method} results carry no standard error")

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method, "n": self.n, "std_error": self.std_error}

    @classmethod
    def from_dict(cls, d: dict) -> "OracleResult":
        return cls(float(d["value"]), d["method"], int(d["n"]), float(d["std_error"]))


def _mean_result(values: np.ndarray, weights: np.ndarray | None = None, **details) -> OracleResult:
    """Exact weighted sum (weights given) or a Monte Carlo mean."""
    if weights is not None:
        return OracleResult(float(np.dot(weights, values)), "enumeration", len(values), 0.0, details)
    n = len(values)
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return OracleResult(float(np.mean(values)), "spectral-mc", n, se, details)


def _atoms_of(law):
    table = getattr(law, "atom_table", None)
    if table is None and isinstance(law, RegVarSpec):
        return None
    return table() if table is not None else None


def _draw(law, n, rng) -> np.ndarray:
    out = np.asarray(law.sample(n, rng), dtype=float)
    return out.reshape(n, -1)


# ---------------------------------------------------------------------------
# univariate constants
# ---------------------------------------------------------------------------


def breiman_constant(
    y_law, tail, n: int, rng: np.random.Generator | None = None, method: str | None = None
) -> OracleResult:
    """``E[|Y|^alpha]``: enumeration for discrete laws, a closed form for
    lognormal ones, Monte Carlo otherwise or when ``method="spectral-mc"``."""
    alpha = tail.alpha if isinstance(tail, TailIndex) else float(tail)
    table = _atoms_of(y_law)
    if method == "spectral-mc":
        table = None
    elif hasattr(y_law, "moment"):
        return OracleResult(float(y_law.moment(alpha)), "quadrature", 0, 0.0)
    if table is not None:
        atoms, probs = table
        return _mean_result(np.abs(atoms[:, 0]) ** alpha, probs)
    if rng is None:
        raise DomainError("Monte Carlo evaluation needs a random stream")
    y = _draw(y_law, n, rng)[:, 0]
    return _mean_result(np.abs(y) ** alpha)


def univariate_product_constant(alpha, EX_alpha: float, EY_alpha: float, c0: float) -> float:
    """Limit of ``P(XY > t) / P(X > t)`` when both alpha-moments are finite: ``E X^a + c0 E Y^a``."""
    if not (math.isfinite(EX_alpha) and math.isfinite(EY_alpha)):
        raise DomainError("moments must be finite")
    if c0 < 0:
        raise DomainError("c0 must be nonnegative")
    return EX_alpha + c0 * EY_alpha


def tail_constant_ratio(spec_x: RegVarSpec, a_x: float, spec_y: RegVarSpec, a_y: float) -> float:
    """``lim P(|Y|^a_y > t) / P(|X|^a_x > t)`` for two parametric laws.

    Only defined when ``alpha_x / a_x == alpha_y / a_y``; a lighter log
    factor on the Y side gives 0 and a heavier one is rejected.
    """
    ix, iy = spec_x.alpha / a_x, spec_y.alpha / a_y
    if not math.isclose(ix, iy, rel_tol=1e-12):
        raise DomainError("tail constant ratio needs equal powered indices")
    bx = spec_x.slowly_varying.beta if spec_x.slowly_varying.family == "log-power" else 0.0
    by = spec_y.slowly_varying.beta if spec_y.slowly_varying.family == "log-power" else 0.0
    if by < bx:
        return 0.0
    if by > bx:
        raise DomainError("the Y tail is heavier than the X tail; the ratio diverges")
    # P(|X|^a > t) = P(|X| > t^(1/a)) ~ C t^(-alpha/a) (log t / a)^beta
    return (asymptotic_tail_constant(spec_y) / asymptotic_tail_constant(spec_x)) * (a_x / a_y) ** bx


def balance_from_specs(spec_x, a_x, spec_y, a_y, mom_x: float, mom_y: float) -> tuple[float, float]:
    """``(c_X, c_Y)`` in the equal-index, finite-moment case from ``c0``."""
    c0 = tail_constant_ratio(spec_x, a_x, spec_y, a_y)
    c_x = 1.0 / (mom_y + c0 * mom_x)
    return c_x, c0 * c_x


def window_oracle(x_spec: RegVarSpec, y_spec: RegVarSpec, M: float, t: float) -> float:
    """``P(XY > t, M < X <= t/M) / P(X > t)`` for independent positive radii, by quadrature."""
    if not (M > 1 and t > M * M):
        raise DomainError("need M > 1 and t > M^2")
    lo, hi = max(M, x_spec.x0), t / M
    if lo >= hi:
        return 0.0

    def integrand(logx):
        x = math.exp(logx)
        # density of X times x (log-space substitution), by numerical differentiation of log S
        h = 1e-6
        s_plus, s_minus = survival(x_spec, x * math.exp(h)), survival(x_spec, x * math.exp(-h))
        dens = (s_minus - s_plus) / (2 * h)
        return dens * survival(y_spec, t / x)

    val, _ = integrate.quad(integrand, math.log(lo), math.log(hi), limit=500, epsrel=1e-10)
    # an atom of X at x0 inside the window
    if lo == x_spec.x0 and x_spec._log_x0[1] < 1:
        val += (1 - x_spec._log_x0[1]) * survival(y_spec, t / x_spec.x0)
    return val / survival(x_spec, t)


# ---------------------------------------------------------------------------
# limit measure of psi(X, Y)
# ---------------------------------------------------------------------------


def _radial_mass(m: HomogeneousMap, xs, ys, query: LimitMeasureQuery, exponent: float) -> np.ndarray:
    """``(||psi(x, y)|| / u)^exponent`` on the cone, zero where ``psi`` vanishes."""
    z = apply_map_batch(m, xs, ys)
    nz = m.norm_z(z)
    out = np.zeros(len(z))
    pos = nz > 0
    if pos.any():
        dirs = z[pos] / nz[pos][:, None]
        keep = query.in_cone(dirs)
        idx = np.flatnonzero(pos)[keep]
        out[idx] = (nz[idx] / query.u) ** exponent
    return out


def _pair_expectation(m, left, right, query, exponent, n, rng) -> OracleResult:
    """``E[(||psi(L, R)|| / u)^exponent]`` for independent laws ``left`` and ``right``."""
    lt, rt = _atoms_of(left), _atoms_of(right)
    if lt is not None and rt is not None and len(lt[0]) * len(rt[0]) <= ENUMERATION_LIMIT:
        la, lp = lt
        ra, rp = rt
        xs = np.repeat(la, len(ra), axis=0)
        ys = np.tile(ra, (len(la), 1))
        w = np.outer(lp, rp).ravel()
        return _mean_result(_radial_mass(m, xs, ys, query, exponent), w)
    xs = _draw(left, n, substream(rng, 0))
    ys = _draw(right, n, substream(rng, 1))
    return _mean_result(_radial_mass(m, xs, ys, query, exponent))


def eta_measure(
    m: HomogeneousMap,
    spec_x: RegVarSpec,
    spec_y: RegVarSpec | None,
    c_x: float,
    c_y: float,
    mom_y: float,
    mom_x: float,
    query: LimitMeasureQuery,
    n: int,
    rng: np.random.Generator,
    *,
    x_law=None,
    y_law=None,
    moments_source: str = "supplied",
) -> OracleResult:
    """Limit measure of the query set for ``Z = psi(X, Y)``.

    The value is a weighted sum of three expectations:
    ``(1 - c_x mom_y - c_y mom_x) E[mu_X(psi(., Theta_Y) in A)]``,
    ``c_x E[mu_X(psi(., Y) in A)]`` and ``c_y E[mu_Y(psi(X, .) in A)]``.
    Each ``mu`` mass is ``(||psi(theta, v)|| / u)^(alpha / a)``. The full laws of
    X and Y default to the specs; pass ``x_law``/``y_law`` for other factors
    (for example a bounded Y).
    """
    for v in (c_x, c_y, mom_x, mom_y):
        if not math.isfinite(v):
            raise DomainError("balance constants and moments must be finite")
    validate_map(m, substream(rng, 99))
    x_law = x_law if x_law is not None else spec_x
    y_law = y_law if y_law is not None else spec_y
    coef = (1.0 - c_x * mom_y - c_y * mom_x, c_x, c_y)
    exp_x = spec_x.alpha / m.a_x
    terms = []
    for j, w in enumerate(coef):
        if w == 0:
            terms.append(None)
            continue
        sub = substream(rng, j)
        if j == 0:
            if spec_y is None:
                raise ConfigurationError("the first term needs the spectral law of Y")
            res = _pair_expectation(m, spec_x.spectral, spec_y.spectral, query, exp_x, n, sub)
        elif j == 1:
            if y_law is None:
                raise ConfigurationError("the second term needs the law of Y")
            res = _pair_expectation(m, spec_x.spectral, y_law, query, exp_x, n, sub)
        else:
            if spec_y is None:
                raise ConfigurationError("the third term needs the spectral law of Y")
            res = _pair_expectation(m, x_law, spec_y.spectral, query, spec_y.alpha / m.a_y, n, sub)
        terms.append(res)
    used = [(w, t) for w, t in zip(coef, terms) if t is not None]
    value = sum(w * t.value for w, t in used)
    exact = all(t.method == "enumeration" for _, t in used)
    se = 0.0 if exact else math.sqrt(sum((w * t.std_error) ** 2 for w, t in used))
    details = {
        "coefficients": coef,
        "terms": [None if t is None else t.value for t in terms],
        "moments_source": moments_source,
    }
    return OracleResult(value, "enumeration" if exact else "spectral-mc", n, se, details)


def symmetry_check(
    m: HomogeneousMap,
    spec_x: RegVarSpec,
    spec_y: RegVarSpec,
    query: LimitMeasureQuery,
    n: int,
    rng: np.random.Generator,
) -> tuple[OracleResult, OracleResult]:
    """Both sides of the X/Y symmetry of the spectral term, by radial Monte Carlo.

    Side X integrates ``alpha_x r^(-alpha_x-1) P(psi(r Theta_X, Theta_Y) in A)``
    over ``r``, side Y the same with the radius on ``Theta_Y``. Below
    ``r_min = (u / M_psi)^(1/a)`` the integrand vanishes, so each side is
    ``r_min^-alpha P(psi(r_min Z Theta, Theta') in A)`` with ``Z`` Pareto. The
    map is evaluated at the scaled inputs; no homogeneity shortcut is used.
    """
    if not math.isclose(spec_x.alpha / m.a_x, spec_y.alpha / m.a_y, rel_tol=1e-12):
        raise DomainError("symmetry needs alpha_x / a_x == alpha_y / a_y")
    validate_map(m, substream(rng, 99))
    bound = map_bound(m, 1000, substream(rng, 98))
    if bound == 0:
        zero = OracleResult(0.0, "spectral-mc", n, 0.0)
        return zero, zero
    out = []
    for side, (spec, a) in enumerate(((spec_x, m.a_x), (spec_y, m.a_y))):
        sub = substream(rng, side)
        r_min = (query.u / bound) ** (1.0 / a)
        z = (1.0 - sub.random(n)) ** (-1.0 / spec.alpha)
        tx = spec_x.spectral.sample(n, sub)
        ty = spec_y.spectral.sample(n, sub)
        if side == 0:
            zz = apply_map_batch(m, (r_min * z)[:, None] * tx, ty)
        else:
            zz = apply_map_batch(m, tx, (r_min * z)[:, None] * ty)
        nz = m.norm_z(zz)
        hit = nz > query.u
        if hit.any():
            hit[hit] = query.in_cone(zz[hit] / nz[hit][:, None])
        p = hit.mean()
        scale = r_min ** (-spec.alpha)
        se = scale * math.sqrt(p * (1 - p) / n)
        out.append(OracleResult(scale * p, "spectral-mc", n, se, {"r_min": r_min, "bound": bound}))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# products of random matrices
# ---------------------------------------------------------------------------


def _shape_of(spectral: SphereDist) -> tuple[int, int]:
    shp = spectral.shape
    if spectral.norm_kind != "operator" or shp is None or shp[0] != shp[1]:
        raise DomainError("a square-matrix spectral law with the operator norm is required")
    return shp


def _enumerated_products(spectral: SphereDist, n_factors: int):
    """All ``n_factors``-fold products of the atoms with their probabilities."""
    k = _shape_of(spectral)[0]
    atoms = spectral.atoms.reshape(-1, k, k)
    prods, weights = atoms, spectral.probs
    for _ in range(n_factors - 1):
        prods = np.matmul(prods[:, None], atoms[None]).reshape(-1, k, k)
        weights = np.outer(weights, spectral.probs).ravel()
    return prods, weights


def _sampled_products(sampler, k: int, n_factors: int, n: int, rng) -> np.ndarray:
    prod = sampler(n, substream(rng, 0)).reshape(n, k, k)
    for j in range(1, n_factors):
        prod = np.matmul(prod, sampler(n, substream(rng, j)).reshape(n, k, k))
    return prod


def _can_enumerate(spectral: SphereDist, n_factors: int) -> bool:
    return spectral.is_discrete and len(spectral.atoms) ** n_factors <= ENUMERATION_LIMIT


def product_norm_constant(
    spectral: SphereDist,
    tail,
    n_factors: int,
    n: int,
    rng: np.random.Generator | None = None,
    method: str | None = None,
) -> OracleResult:
    """``E||Theta_1 ... Theta_n||^alpha`` for iid spectral matrices.

    ``method`` forces ``enumeration`` or ``spectral-mc``; by default discrete
    laws are enumerated when feasible.
    """
    alpha = tail.alpha if isinstance(tail, TailIndex) else float(tail)
    if n_factors < 1:
        raise DomainError("n_factors must be at least 1")
    k = _shape_of(spectral)[0]
    if method is None:
        method = "enumeration" if _can_enumerate(spectral, n_factors) else "spectral-mc"
    if method == "enumeration":
        if not _can_enumerate(spectral, n_factors):
            raise DomainError("enumeration needs a discrete law with at most 1e6 tuples")
        prods, weights = _enumerated_products(spectral, n_factors)
        return _mean_result(operator_norm(prods) ** alpha, weights)
    if rng is None:
        raise DomainError("Monte Carlo evaluation needs a random stream")
    prods = _sampled_products(spectral.sample, k, n_factors, n, rng)
    return _mean_result(operator_norm(prods) ** alpha)


def product_spectral_law(
    spectral: SphereDist,
    tail,
    n_factors: int,
    n: int,
    rng: np.random.Generator | None = None,
) -> SphereDist:
    """Law of ``P / ||P||`` for ``P = Theta_1 ... Theta_n`` reweighted by ``||P||^alpha``.

    Products with norm below ``1e-13`` count as zero and are dropped.
    """
    alpha = tail.alpha if isinstance(tail, TailIndex) else float(tail)
    k = _shape_of(spectral)[0]
    if _can_enumerate(spectral, n_factors):
        prods, weights = _enumerated_products(spectral, n_factors)
    else:
        if rng is None:
            raise DomainError("Monte Carlo evaluation needs a random stream")
        prods = _sampled_products(spectral.sample, k, n_factors, n, rng)
        weights = np.full(n, 1.0 / n)
    norms = operator_norm(prods)
    keep = (norms > ZERO_PRODUCT_TOL) & (weights > 0)
    if not keep.any():
        raise DegenerateLawError("every product of spectral matrices vanishes")
    dirs = prods[keep].reshape(-1, k * k) / norms[keep][:, None]
    w = weights[keep] * norms[keep] ** alpha
    # merge repeated directions
    _, first, inverse = np.unique(np.round(dirs, 12), axis=0, return_index=True, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=w)
    atoms = dirs[first]
    atoms = atoms / operator_norm(atoms.reshape(-1, k, k))[:, None]
    return SphereDist(k * k, "operator", "custom-table", atoms=atoms, probs=merged / merged.sum(), shape=(k, k))


def equivalent_tail_constant(
    spec: RegVarSpec,
    n_factors: int,
    n: int,
    rng: np.random.Generator,
    full_law=None,
) -> tuple[OracleResult, list[float]]:
    """Total ``sum_k E||A_1..A_{k-1} Theta_k A_{k+1}..A_n||^alpha`` and weights ``p_k``.

    The ``A_j`` are full draws (from ``full_law`` if given, else ``spec``), the
    k-th slot a spectral draw, each summand on its own substream.
    """
    if n_factors < 2:
        raise DomainError("n_factors must be at least 2")
    if full_law is None and not math.isfinite(radius_moment(spec, spec.alpha)):
        raise ConfigurationError("the declared law has an infinite alpha-moment")
    law = full_law if full_law is not None else spec
    d = spec.dimension
    k = spec.spectral.shape[0] if spec.spectral.shape is not None else math.isqrt(d)
    if k * k != d:
        raise DomainError("a square-matrix law is required")
    summands: list[OracleResult] = []
    for slot in range(n_factors):
        sub = substream(rng, slot)
        prod = None
        for j in range(n_factors):
            src = spec.spectral if j == slot else law
            factor = _draw(src, n, substream(sub, j)).reshape(n, k, k)
            prod = factor if prod is None else np.matmul(prod, factor)
        summands.append(_mean_result(operator_norm(prod) ** spec.alpha))
    total = sum(s.value for s in summands)
    se = math.sqrt(sum(s.std_error**2 for s in summands))
    if not total > 0:
        raise DegenerateLawError("all summands vanish")
    weights = [s.value / total for s in summands]
    res = OracleResult(total, "spectral-mc", n, se, {"summands": [s.value for s in summands]})
    return res, weights
