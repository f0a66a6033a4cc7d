"""Samplers and norms for regularly varying laws.

A regularly varying vector is built in polar form ``X = R * Theta``: the
radius ``R`` has survival function ``c x^-alpha L(x)`` above a left endpoint
and the direction ``Theta`` is drawn independently from a law on the unit
sphere of the chosen norm. Because of the independence the conditional law
of the direction above any threshold equals the spectral law exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigurationError, DomainError
from .rng import uniform_open

NORM_KINDS = ("euclidean", "operator", "pair-sum")
SPHERE_SAMPLERS = ("uniform-sphere", "discrete-atoms", "rotation-group", "custom-table")
SV_FAMILIES = ("constant", "log-power")

UNIT_NORM_TOL = 1e-12
PROB_SUM_TOL = 1e-12


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def _square_side(m: int) -> int:
    k = math.isqrt(m)
    if k * k != m:
        raise DomainError(f"length {m} is not a square matrix size")
    return k


def _pair_side(m: int) -> int:
    # m = k*k + k
    k = (math.isqrt(1 + 4 * m) - 1) // 2
    if k <= 0 or k * k + k != m:
        raise DomainError(f"length {m} is not a (k x k matrix, k vector) pair size")
    return k


def operator_norm(mats: np.ndarray) -> np.ndarray:
    """Largest singular value over the last two axes."""
    mats = np.asarray(mats, dtype=float)
    p, q = mats.shape[-2:]
    if p == 1 or q == 1:
        return np.sqrt(np.sum(mats * mats, axis=(-2, -1)))
    if p == 2 and q == 2:
        a, b = mats[..., 0, 0], mats[..., 0, 1]
        c, d = mats[..., 1, 0], mats[..., 1, 1]
        return 0.5 * (np.hypot(a + d, c - b) + np.hypot(a - d, b + c))
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def batch_norm(values, kind: str, shape: Sequence[int] | None = None) -> np.ndarray:
    """Norms of ``n`` flattened values stacked along the first axis.

    ``values`` may also be a ``(matrices, vectors)`` tuple for ``pair-sum``.
    """
    if kind not in NORM_KINDS:
        raise DomainError(f"unknown norm kind {kind!r}")
    if kind == "pair-sum" and isinstance(values, tuple):
        mats, vecs = values
        mats = np.asarray(mats, dtype=float)
        vecs = np.asarray(vecs, dtype=float)
        if mats.shape[-1] != mats.shape[-2] or vecs.shape[-1] != mats.shape[-1]:
            raise DomainError(
                f"pair shapes {mats.shape[-2:]} and {vecs.shape[-1:]} do not match"
            )
        return operator_norm(mats) + np.sqrt(np.sum(vecs * vecs, axis=-1))
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n, m = values.shape[0], int(np.prod(values.shape[1:]))
    flat = values.reshape(n, m)
    if kind == "euclidean":
        return np.sqrt(np.sum(flat * flat, axis=1))
    if kind == "operator":
        if values.ndim == 3 and shape is None:
            return operator_norm(values)
        if shape is None:
            k = _square_side(m)
            shape = (k, k)
        if int(np.prod(shape)) != m:
            raise DomainError(f"shape {tuple(shape)} does not match length {m}")
        return operator_norm(flat.reshape(n, *shape))
    k = _pair_side(m)
    mats = flat[:, : k * k].reshape(n, k, k)
    vecs = flat[:, k * k :]
    return operator_norm(mats) + np.sqrt(np.sum(vecs * vecs, axis=1))


def norm(value, kind: str = "euclidean", shape: Sequence[int] | None = None) -> float:
    """Norm of a single value.

    ``euclidean`` is root-sum-of-squares, ``operator`` the largest singular
    value (a 2-d array, or a flat array with ``shape`` or a square length),
    and ``pair-sum`` the operator norm of the matrix part plus the Euclidean
    norm of the vector part. A pair is given either as ``(matrix, vector)``
    or flattened as ``concat(matrix.ravel(), vector)``.
    """
    if kind == "pair-sum" and isinstance(value, tuple):
        mat, vec = (np.asarray(v, dtype=float) for v in value)
        if mat.ndim != 2:
            raise DomainError("pair-sum expects a matrix as the first element")
        return float(batch_norm((mat[None], vec[None]), kind)[0])
    arr = np.asarray(value, dtype=float)
    if kind == "operator" and arr.ndim == 2:
        return float(operator_norm(arr))
    return float(batch_norm(arr.reshape(1, -1), kind, shape)[0])


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailIndex:
    alpha: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigurationError(f"tail index must be positive, got {self.alpha}")


def _alpha(tail) -> float:
    a = tail.alpha if isinstance(tail, TailIndex) else float(tail)
    if not a > 0:
        raise DomainError(f"tail index must be positive, got {a}")
    return a


@dataclass(frozen=True)
class SlowlyVaryingSpec:
    """Slowly varying correction: ``constant`` (L = c) or ``log-power`` (L = c (log x)^beta)."""

    family: str = "constant"
    scale: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.family not in SV_FAMILIES:
            raise ConfigurationError(f"unknown slowly varying family {self.family!r}")
        if not self.scale > 0:
            raise ConfigurationError(f"scale must be positive, got {self.scale}")


@dataclass(eq=False)
class SphereDist:
    """A law on the unit sphere of a norm.

    ``atoms``/``probs`` are used by ``discrete-atoms`` and ``custom-table``;
    ``shape`` gives the matrix shape when the norm is ``operator``.
    """

    dimension: int
    norm_kind: str = "euclidean"
    sampler: str = "uniform-sphere"
    atoms: np.ndarray | None = None
    probs: np.ndarray | None = None
    shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.dimension}")
        if self.norm_kind not in NORM_KINDS:
            raise ConfigurationError(f"unknown norm kind {self.norm_kind!r}")
        if self.sampler not in SPHERE_SAMPLERS:
            raise ConfigurationError(f"unknown sphere sampler {self.sampler!r}")
        if self.shape is not None:
            self.shape = tuple(int(s) for s in self.shape)
            if int(np.prod(self.shape)) != self.dimension:
                raise ConfigurationError(
                    f"shape {self.shape} does not match dimension {self.dimension}"
                )
        elif self.norm_kind == "operator":
            try:
                k = _square_side(self.dimension)
            except DomainError as exc:
                raise ConfigurationError(str(exc)) from None
            self.shape = (k, k)
        if self.norm_kind == "pair-sum":
            try:
                _pair_side(self.dimension)
            except DomainError as exc:
                raise ConfigurationError(str(exc)) from None
        if self.sampler == "rotation-group":
            if self.norm_kind != "operator" or self.shape[0] != self.shape[1]:
                raise ConfigurationError("rotation-group needs square matrices with the operator norm")
        if self.sampler in ("discrete-atoms", "custom-table"):
            if self.atoms is None:
                raise ConfigurationError(f"{self.sampler} needs an atom table")
            atoms = np.asarray(self.atoms, dtype=float).reshape(len(self.atoms), -1)
            if atoms.shape[1] != self.dimension:
                raise ConfigurationError(
                    f"atoms have length {atoms.shape[1]}, expected {self.dimension}"
                )
            probs = (
                np.full(len(atoms), 1.0 / len(atoms))
                if self.probs is None
                else np.asarray(self.probs, dtype=float)
            )
            if probs.shape != (len(atoms),) or np.any(probs < 0):
                raise ConfigurationError("atom probabilities must be nonnegative, one per atom")
            if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
                raise ConfigurationError(f"atom probabilities sum to {probs.sum():.15g}, not 1")
            norms = batch_norm(atoms, self.norm_kind, self.shape)
            if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
                raise ConfigurationError("every atom must have unit norm")
            self.atoms, self.probs = atoms, probs

    @property
    def is_discrete(self) -> bool:
        return self.sampler in ("discrete-atoms", "custom-table")

    def atom_table(self):
        """``(atoms, probs)`` for discrete laws, else ``None``."""
        return (self.atoms, self.probs) if self.is_discrete else None

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` unit-norm directions, shape ``(n, dimension)``."""
        if self.is_discrete:
            idx = rng.choice(len(self.atoms), size=n, p=self.probs)
            return self.atoms[idx]
        if self.sampler == "rotation-group":
            k = self.shape[0]
            return haar_orthogonal(k, n, rng).reshape(n, k * k)
        z = rng.standard_normal((n, self.dimension))
        nz = batch_norm(z, self.norm_kind, self.shape)
        return z / nz[:, None]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "dimension": self.dimension,
            "norm_kind": self.norm_kind,
            "sampler": self.sampler,
        }
        if self.shape is not None:
            out["shape"] = list(self.shape)
        if self.is_discrete:
            out["atoms"] = self.atoms.tolist()
            out["probs"] = self.probs.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SphereDist":
        return cls(
            dimension=int(d["dimension"]),
            norm_kind=d.get("norm_kind", "euclidean"),
            sampler=d.get("sampler", "uniform-sphere"),
            atoms=d.get("atoms"),
            probs=d.get("probs"),
            shape=d.get("shape"),
        )


def haar_orthogonal(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` Haar-distributed ``k x k`` orthogonal matrices."""
    if k == 1:
        return np.where(rng.random(n) < 0.5, -1.0, 1.0).reshape(n, 1, 1)
    z = rng.standard_normal((n, k, k))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return q * signs[:, None, :]


def point_atom_sphere(direction) -> SphereDist:
    """A spectral law concentrated on a single Euclidean unit vector."""
    v = np.atleast_1d(np.asarray(direction, dtype=float))
    return SphereDist(len(v), "euclidean", "discrete-atoms", atoms=[v], probs=[1.0])


@dataclass(eq=False)
class RegVarSpec:
    """Parametric regularly varying law ``R * Theta``.

    The radius has survival ``c (x/s)^-alpha L(x/s)`` above ``s * x0`` where
    ``s`` is ``radius_scale`` and ``x0`` the left endpoint of the unscaled
    law; the direction follows ``spectral``.
    """

    dimension: int
    tail: TailIndex
    slowly_varying: SlowlyVaryingSpec = field(default_factory=SlowlyVaryingSpec)
    spectral: SphereDist | None = None
    balance: tuple[float, float] | None = None
    radius_scale: float = 1.0

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.dimension}")
        if not isinstance(self.tail, TailIndex):
            self.tail = TailIndex(float(self.tail))
        if self.spectral is None:
            self.spectral = point_atom_sphere(np.eye(self.dimension)[0])
        if self.spectral.dimension != self.dimension:
            raise ConfigurationError(
                f"spectral dimension {self.spectral.dimension} != {self.dimension}"
            )
        if self.balance is not None:
            p, m = (float(v) for v in self.balance)
            if not (0 <= p <= 1 and 0 <= m <= 1) or abs(p + m - 1) > PROB_SUM_TOL:
                raise ConfigurationError(f"balance weights {self.balance} must sum to 1")
            self.balance = (p, m)
        if not self.radius_scale > 0:
            raise ConfigurationError("radius_scale must be positive")

    @property
    def alpha(self) -> float:
        return self.tail.alpha

    @property
    def norm_kind(self) -> str:
        return self.spectral.norm_kind

    @cached_property
    def _log_x0(self) -> tuple[float, float]:
        """``(log x0, survival just at x0)`` of the unscaled radius."""
        return _left_endpoint(self.alpha, self.slowly_varying)

    @property
    def x0(self) -> float:
        """Left endpoint of the radius law (no mass below it)."""
        return self.radius_scale * math.exp(self._log_x0[0])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_regvar_vector(self, n, rng)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "dimension": self.dimension,
            "alpha": self.alpha,
            "sv_family": self.slowly_varying.family,
            "sv_scale": self.slowly_varying.scale,
            "sv_beta": self.slowly_varying.beta,
            "spectral": self.spectral.to_dict(),
            "balance": None if self.balance is None else list(self.balance),
        }
        if self.radius_scale != 1.0:
            out["radius_scale"] = self.radius_scale
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RegVarSpec":
        try:
            dim = int(d["dimension"])
            sv = SlowlyVaryingSpec(
                d.get("sv_family", "constant"),
                float(d.get("sv_scale", 1.0)),
                float(d.get("sv_beta", 0.0)),
            )
            spectral = SphereDist.from_dict(d["spectral"]) if d.get("spectral") else None
            return cls(
                dim,
                TailIndex(float(d["alpha"])),
                sv,
                spectral,
                d.get("balance"),
                float(d.get("radius_scale", 1.0)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"missing field {exc.args[0]!r} in RegVarSpec") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RegVarSpec":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# simple auxiliary laws (light or bounded factors)
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PointMass:
    """Deterministic law at ``value`` (scalar or flattened vector)."""

    value: Any

    def __post_init__(self):
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float)).ravel()

    @property
    def dimension(self) -> int:
        return len(self.value)

    def sample(self, n, rng):
        return np.broadcast_to(self.value, (n, self.dimension)).copy()

    def atom_table(self):
        return self.value[None, :], np.ones(1)

    def to_dict(self):
        return {"law": "constant", "value": self.value.tolist()}


@dataclass(eq=False)
class DiscreteLaw:
    """Finite law on ``atoms`` (rows) with probabilities ``probs``."""

    atoms: Any
    probs: Any = None

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        self.atoms = a.reshape(len(a), -1)
        p = np.full(len(a), 1.0 / len(a)) if self.probs is None else np.asarray(self.probs, float)
        if p.shape != (len(a),) or np.any(p < 0) or abs(p.sum() - 1) > PROB_SUM_TOL:
            raise ConfigurationError("discrete law probabilities must be nonnegative and sum to 1")
        self.probs = p

    @property
    def dimension(self) -> int:
        return self.atoms.shape[1]

    def sample(self, n, rng):
        return self.atoms[rng.choice(len(self.atoms), size=n, p=self.probs)]

    def atom_table(self):
        return self.atoms, self.probs

    def to_dict(self):
        return {"law": "discrete", "atoms": self.atoms.tolist(), "probs": self.probs.tolist()}


@dataclass(eq=False)
class LognormalLaw:
    """Scalar ``exp(N(mu, sigma^2))``."""

    mu: float = 0.0
    sigma: float = 1.0

    dimension = 1

    def sample(self, n, rng):
        return np.exp(self.mu + self.sigma * rng.standard_normal(n))[:, None]

    def atom_table(self):
        return None

    def moment(self, p: float) -> float:
        return math.exp(p * self.mu + 0.5 * (p * self.sigma) ** 2)

    def to_dict(self):
        return {"law": "lognormal", "mu": self.mu, "sigma": self.sigma}


def law_from_dict(d: dict):
    """Build a law from its JSON form; anything with ``alpha`` is a RegVarSpec."""
    if "alpha" in d:
        return RegVarSpec.from_dict(d)
    kind = d.get("law")
    if kind == "constant":
        return PointMass(d["value"])
    if kind == "discrete":
        return DiscreteLaw(d["atoms"], d.get("probs"))
    if kind == "lognormal":
        return LognormalLaw(float(d.get("mu", 0.0)), float(d.get("sigma", 1.0)))
    raise ConfigurationError(f"unknown law {kind!r}")


def law_to_dict(law) -> dict:
    return law.to_dict()


# ---------------------------------------------------------------------------
# radius law
# ---------------------------------------------------------------------------


def pareto_quantile(tail, u) -> float | np.ndarray:
    """Inverse of the survival ``y^-alpha`` on ``y > 1``."""
    a = _alpha(tail)
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise DomainError("u must lie in the open interval (0, 1)")
    q = u_arr ** (-1.0 / a)
    return float(q) if np.ndim(u) == 0 else q


def _log_surv(y, alpha, sv: SlowlyVaryingSpec):
    """log of the unnormalised survival at ``x = exp(y)``."""
    out = math.log(sv.scale) - alpha * y
    if sv.family == "log-power" and sv.beta != 0:
        out = out + sv.beta * np.log(y)
    return out


def _left_endpoint(alpha: float, sv: SlowlyVaryingSpec) -> tuple[float, float]:
    """Smallest ``y = log x`` where the survival is at most one and decreasing.

    Returns ``(y0, S(x0))``; ``S(x0) < 1`` means an atom at ``x0``.
    """
    if sv.family == "constant" or sv.beta == 0:
        return math.log(sv.scale) / alpha, 1.0
    beta = sv.beta
    if beta < 0:
        # log S decreases from +inf (y -> 0+) to -inf
        f = lambda y: _log_surv(y, alpha, sv)
        lo, hi = 1e-300, 1.0
        while f(hi) > 0:
            hi *= 2.0
        while f(lo) < 0:  # pragma: no cover - only for absurd scales
            lo *= 1e-10
        y0 = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        return y0, 1.0
    y_min = beta / alpha  # survival is decreasing only for y > beta/alpha
    f = lambda y: _log_surv(y, alpha, sv)
    if f(y_min) <= 0:
        return y_min, math.exp(f(y_min))
    hi = 2 * y_min + 1
    while f(hi) > 0:
        hi *= 2.0
    return optimize.brentq(f, y_min, hi, rtol=4 * np.finfo(float).eps, maxiter=500), 1.0


def survival(spec: RegVarSpec, x) -> float | np.ndarray:
    """Analytic survival function ``P(R > x)`` of the radius."""
    x_arr = np.asarray(x, dtype=float)
    z = x_arr / spec.radius_scale
    y0, s0 = spec._log_x0
    out = np.ones_like(z)
    above = z >= math.exp(y0)
    with np.errstate(divide="ignore"):
        ly = np.log(z[above])
    out[above] = np.minimum(np.exp(_log_surv(ly, spec.alpha, spec.slowly_varying)), s0)
    return float(out) if np.ndim(x) == 0 else out


def radius_quantile(spec: RegVarSpec, u) -> float | np.ndarray:
    """Inverse survival of the radius: the ``x`` with ``P(R > x) = u``, ``u`` in (0, 1]."""
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~((u_arr > 0) & (u_arr <= 1))):
        raise DomainError("u must lie in (0, 1]")
    alpha, sv = spec.alpha, spec.slowly_varying
    y0, s0 = spec._log_x0
    lu = np.log(u_arr)
    if sv.family == "constant" or sv.beta == 0:
        y = (math.log(sv.scale) - lu) / alpha
    else:
        y = _solve_log_power(lu, alpha, sv, y0)
    # mass at the left endpoint (or u in the atom when s0 < 1)
    y = np.where(u_arr >= s0, y0, np.maximum(y, y0))
    q = spec.radius_scale * np.exp(y)
    return float(q[0]) if np.ndim(u) == 0 else q


def _solve_log_power(lu, alpha, sv, y0, rtol=1e-15, max_iter=100):
    """Solve ``log S(e^y) = lu`` for ``y`` by Newton's method.

    With ``g(y) = log c - alpha y + beta log y - lu`` decreasing, ``g`` is
    convex for beta < 0 and concave for beta > 0, so Newton iterates are
    monotone once started on the correct side of the root (left for convex,
    right for concave). A bisection step guards against any lapse.
    """
    beta = sv.beta
    logc = math.log(sv.scale)
    g = lambda y: logc - alpha * y + beta * np.log(y) - lu
    # pure power solution, then one fixed-point step
    yp = np.maximum((logc - lu) / alpha, y0)
    y = np.maximum((logc - lu + beta * np.log(yp)) / alpha, y0)
    lo = np.full_like(lu, y0)
    hi = np.maximum(yp, y) + 1.0
    while True:
        bad = g(hi) > 0
        if not bad.any():
            break
        hi[bad] *= 2.0
    y = np.clip(y, lo, hi)
    active = np.arange(len(lu))
    for _ in range(max_iter):
        ya, la, ha, lua = y[active], lo[active], hi[active], lu[active]
        gy = logc - alpha * ya + beta * np.log(ya) - lua
        la = np.where(gy >= 0, ya, la)
        ha = np.where(gy <= 0, ya, ha)
        with np.errstate(divide="ignore", invalid="ignore"):
            y_new = ya - gy / (-alpha + beta / ya)
        out = ~((y_new >= la) & (y_new <= ha))
        y_new[out] = 0.5 * (la[out] + ha[out])
        done = (np.abs(y_new - ya) <= rtol * y_new) | (gy == 0)
        y[active], lo[active], hi[active] = y_new, la, ha
        active = active[~done]
        if active.size == 0:
            break
    return y


def sample_radius(spec: RegVarSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` radius draws by inverse transform."""
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    return np.atleast_1d(radius_quantile(spec, uniform_open(rng, n)))


def sample_regvar_vector(spec: RegVarSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of ``R * Theta``, shape ``(n, dimension)``.

    The radius is drawn first, then the directions, from the same stream.
    """
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    r = sample_radius(spec, n, rng)
    theta = spec.spectral.sample(n, rng)
    return r[:, None] * theta


def sample_tail_balanced_scalar(spec: RegVarSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Signed scalars ``+-R`` with sign ``+1`` w.p. ``p_plus``, independent of ``R``."""
    if spec.balance is None:
        raise ConfigurationError("tail-balanced sampling needs balance weights")
    if spec.dimension != 1:
        raise ConfigurationError("tail-balanced sampling needs dimension 1")
    r = sample_radius(spec, n, rng)
    plus = rng.random(n) < spec.balance[0]
    return np.where(plus, r, -r)


def radius_moment(spec: RegVarSpec, p: float) -> float:
    """``E[R^p]`` by numerical integration of the analytic survival.

    ``E[R^p] = x0^p + int_{x0}^inf p x^(p-1) P(R > x) dx``; infinite when
    ``p > alpha``, or ``p == alpha`` with ``beta >= -1``.
    """
    if p <= 0:
        raise DomainError("moment order must be positive")
    alpha, sv = spec.alpha, spec.slowly_varying
    beta = sv.beta if sv.family == "log-power" else 0.0
    if p > alpha or (p == alpha and beta >= -1):
        return math.inf
    y0, s0 = spec._log_x0
    s = spec.radius_scale
    # substitute x = s e^y
    integrand = lambda y: p * math.exp(p * y + min(_log_surv(y, alpha, sv), math.log(s0)))
    tail, _ = integrate.quad(integrand, y0, math.inf, limit=500, epsabs=0, epsrel=1e-12)
    return s**p * (math.exp(p * y0) + tail)


def asymptotic_tail_constant(spec: RegVarSpec) -> float:
    """``C`` with ``P(R > x) ~ C x^-alpha (log x)^beta``."""
    return spec.slowly_varying.scale * spec.radius_scale**spec.alpha


def scaled_to_moment(spec: RegVarSpec, target: float) -> RegVarSpec:
    """Copy of ``spec`` with ``radius_scale`` set so that ``E[R^alpha] = target``."""
    base = RegVarSpec(spec.dimension, spec.tail, spec.slowly_varying, spec.spectral, spec.balance)
    m = radius_moment(base, spec.alpha)
    if not math.isfinite(m):
        raise ConfigurationError("the alpha-moment is infinite; it cannot be tuned")
    s = (target / m) ** (1.0 / spec.alpha)
    return RegVarSpec(spec.dimension, spec.tail, spec.slowly_varying, spec.spectral, spec.balance, s)
