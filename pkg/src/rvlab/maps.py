"""Bi-homogeneous product maps ``psi(x, y)`` and their norm bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .rv_core import batch_norm

MAP_KINDS = ("matrix-product", "kronecker", "quadratic-form", "custom")
HOMOGENEITY_TOL = 1e-9
BOUND_SLACK = 1e-9


@dataclass(eq=False)
class HomogeneousMap:
    """A map of degree ``a_x`` in its first and ``a_y`` in its second argument.

    Arguments and results are flat arrays. ``shapes`` maps ``"x"``, ``"y"``
    and ``"z"`` to matrix shapes where relevant, and ``norms`` names the norm
    used on each slot.
    """

    kind: str
    d_x: int
    d_y: int
    d_z: int
    a_x: float = 1.0
    a_y: float = 1.0
    shapes: dict = field(default_factory=dict)
    norms: dict = field(default_factory=dict)
    func: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ConfigurationError(f"unknown map kind {self.kind!r}")
        if min(self.d_x, self.d_y, self.d_z) < 1:
            raise ConfigurationError("map dimensions must be positive")
        if not (self.a_x > 0 and self.a_y > 0):
            raise ConfigurationError("homogeneity degrees must be positive")
        self.shapes = {k: tuple(int(s) for s in v) for k, v in self.shapes.items()}
        for slot, dim in (("x", self.d_x), ("y", self.d_y), ("z", self.d_z)):
            shp = self.shapes.get(slot)
            if shp is not None and int(np.prod(shp)) != dim:
                raise ConfigurationError(f"{slot}-shape {shp} does not match dimension {dim}")
            self.norms.setdefault(slot, "euclidean")
        if self.kind == "custom" and self.func is None:
            raise ConfigurationError("custom maps need an evaluation function")
        self._check_kind_invariants()

    def _check_kind_invariants(self):
        if self.kind == "matrix-product":
            (n1, d1), (d1b, m1) = self.shapes["x"], self.shapes["y"]
            ok = d1 == d1b and self.d_z == n1 * m1 and self.a_x == self.a_y == 1
        elif self.kind == "kronecker":
            ok = self.d_z == self.d_x * self.d_y and self.a_x == self.a_y == 1
        elif self.kind == "quadratic-form":
            ok = self.d_y == self.d_x**2 and self.d_z == 1 and self.a_x == 2 and self.a_y == 1
        else:
            ok = True
        if not ok:
            raise ConfigurationError(f"inconsistent metadata for a {self.kind} map")

    @property
    def is_builtin(self) -> bool:
        return self.kind != "custom"

    def norm_x(self, xs) -> np.ndarray:
        return batch_norm(xs, self.norms["x"], self.shapes.get("x"))

    def norm_y(self, ys) -> np.ndarray:
        return batch_norm(ys, self.norms["y"], self.shapes.get("y"))

    def norm_z(self, zs) -> np.ndarray:
        return batch_norm(zs, self.norms["z"], self.shapes.get("z"))

    def to_dict(self) -> dict:
        if self.kind == "custom":
            if self.name not in CUSTOM_MAPS:
                raise ConfigurationError("only registered custom maps can be serialised")
            return {"kind": "custom", "name": self.name, "d_x": self.d_x, "d_y": self.d_y}
        if self.kind == "matrix-product":
            (n1, d1), (_, m1) = self.shapes["x"], self.shapes["y"]
            return {"kind": self.kind, "n1": n1, "d1": d1, "m1": m1}
        if self.kind == "kronecker":
            return {
                "kind": self.kind,
                "x_shape": list(self.shapes["x"]),
                "y_shape": list(self.shapes["y"]),
            }
        return {"kind": self.kind, "d": self.d_x}

    @classmethod
    def from_dict(cls, d: dict) -> "HomogeneousMap":
        kind = d.get("kind")
        try:
            if kind == "matrix-product":
                return matrix_product_map(int(d["n1"]), int(d["d1"]), int(d["m1"]))
            if kind == "kronecker":
                return kronecker_map(x_shape=d["x_shape"], y_shape=d["y_shape"])
            if kind == "quadratic-form":
                return quadratic_form_map(int(d["d"]))
            if kind == "custom":
                factory = CUSTOM_MAPS.get(d.get("name"))
                if factory is None:
                    raise ConfigurationError(f"unknown custom map {d.get('name')!r}")
                return factory(int(d["d_x"]), int(d["d_y"]))
        except KeyError as exc:
            raise ConfigurationError(f"missing map field {exc.args[0]!r}") from None
        raise ConfigurationError(f"unknown map kind {kind!r}")


def matrix_product_map(n1: int, d1: int, m1: int) -> HomogeneousMap:
    """``psi(x, y) = x @ y`` for ``n1 x d1`` and ``d1 x m1`` matrices, operator norms."""
    return HomogeneousMap(
        "matrix-product",
        n1 * d1,
        d1 * m1,
        n1 * m1,
        shapes={"x": (n1, d1), "y": (d1, m1), "z": (n1, m1)},
        norms={"x": "operator", "y": "operator", "z": "operator"},
    )


def kronecker_map(d_x: int | None = None, d_y: int | None = None, *, x_shape=None, y_shape=None) -> HomogeneousMap:
    """``psi(x, y) = kron(x, y)``; vectors are treated as columns.

    The operator norm is multiplicative under the Kronecker product, so the
    map bound is exactly one.
    """
    x_shape = tuple(x_shape) if x_shape is not None else (int(d_x), 1)
    y_shape = tuple(y_shape) if y_shape is not None else (int(d_y), 1)
    z_shape = (x_shape[0] * y_shape[0], x_shape[1] * y_shape[1])
    return HomogeneousMap(
        "kronecker",
        int(np.prod(x_shape)),
        int(np.prod(y_shape)),
        int(np.prod(z_shape)),
        shapes={"x": x_shape, "y": y_shape, "z": z_shape},
        norms={"x": "operator", "y": "operator", "z": "operator"},
    )


def quadratic_form_map(d: int) -> HomogeneousMap:
    """``psi(x, y) = x^T y x`` with ``x`` a vector and ``y`` a ``d x d`` matrix."""
    return HomogeneousMap(
        "quadratic-form",
        d,
        d * d,
        1,
        a_x=2.0,
        a_y=1.0,
        shapes={"y": (d, d)},
        norms={"x": "euclidean", "y": "operator", "z": "euclidean"},
    )


def custom_map(
    func: Callable,
    d_x: int,
    d_y: int,
    d_z: int,
    a_x: float,
    a_y: float,
    norms: dict | None = None,
    shapes: dict | None = None,
    name: str = "",
) -> HomogeneousMap:
    """Wrap a user function ``func(xs, ys) -> zs`` acting on row batches."""
    return HomogeneousMap(
        "custom", d_x, d_y, d_z, a_x, a_y, shapes=dict(shapes or {}), norms=dict(norms or {}), func=func, name=name
    )


def zero_map(d_x: int, d_y: int) -> HomogeneousMap:
    """The degenerate map ``psi == 0`` (homogeneous of every degree)."""
    return custom_map(lambda xs, ys: np.zeros((len(xs), 1)), d_x, d_y, 1, 1.0, 1.0, name="zero")


CUSTOM_MAPS: dict[str, Callable[[int, int], HomogeneousMap]] = {"zero": zero_map}


def _as_batch(arr, dim: int, what: str) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    a = a.reshape(a.shape[0], -1)
    if a.shape[1] != dim:
        raise DomainError(f"{what} has length {a.shape[1]}, expected {dim}")
    return a


def apply_map_batch(m: HomogeneousMap, xs, ys) -> np.ndarray:
    """Evaluate ``psi`` row-wise; returns shape ``(n, d_z)``."""
    xs = _as_batch(xs, m.d_x, "x")
    ys = _as_batch(ys, m.d_y, "y")
    if len(xs) != len(ys):
        raise DomainError(f"batch sizes differ: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if m.kind == "matrix-product":
        out = np.matmul(xs.reshape(n, *m.shapes["x"]), ys.reshape(n, *m.shapes["y"]))
    elif m.kind == "kronecker":
        (p, q), (r, s) = m.shapes["x"], m.shapes["y"]
        out = np.einsum("nij,nkl->nikjl", xs.reshape(n, p, q), ys.reshape(n, r, s))
    elif m.kind == "quadratic-form":
        d = m.d_x
        out = np.einsum("ni,nij,nj->n", xs, ys.reshape(n, d, d), xs)
    else:
        out = np.asarray(m.func(xs, ys), dtype=float)
    return out.reshape(n, m.d_z)


def apply_map(m: HomogeneousMap, x, y) -> np.ndarray:
    """Evaluate ``psi(x, y)`` for one pair; the result is flat of length ``d_z``."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    return apply_map_batch(m, x[None], y[None])[0]


def unit_probes(m: HomogeneousMap, n: int, rng: np.random.Generator):
    """Gaussian directions scaled to unit norm in the map's x and y norms."""
    xs = rng.standard_normal((n, m.d_x))
    ys = rng.standard_normal((n, m.d_y))
    return xs / m.norm_x(xs)[:, None], ys / m.norm_y(ys)[:, None]


@dataclass
class HomogeneityReport:
    max_violation: float
    worst_scale: tuple[float, float]
    n_probe: int

    def ok(self, tol: float = HOMOGENEITY_TOL) -> bool:
        return self.max_violation <= tol


def check_homogeneity(
    m: HomogeneousMap,
    n_probe: int,
    scales: Sequence[tuple[float, float]],
    rng: np.random.Generator,
) -> HomogeneityReport:
    """Largest relative defect of ``psi(sx, ty) = s^a_x t^a_y psi(x, y)`` on unit probes.

    The defect is measured against the homogeneity envelope
    ``s^a_x t^a_y ||x||^a_x ||y||^a_y`` rather than ``||psi(x, y)||``, which
    would amplify rounding error wherever ``psi`` nearly cancels.
    """
    if n_probe < 1:
        raise DomainError("n_probe must be at least 1")
    xs, ys = unit_probes(m, n_probe, rng)
    base = apply_map_batch(m, xs, ys)
    worst, worst_st = 0.0, (1.0, 1.0)
    for s, t in scales:
        if not (s > 0 and t > 0):
            raise DomainError("scales must be positive")
        factor = s**m.a_x * t**m.a_y
        moved = apply_map_batch(m, s * xs, t * ys)
        viol = float(np.max(m.norm_z(moved - factor * base)) / factor)
        if viol > worst:
            worst, worst_st = viol, (s, t)
    return HomogeneityReport(worst, worst_st, n_probe)


DEFAULT_SCALES = [(s, t) for s in (0.5, 1.0, 2.0, 10.0) for t in (0.5, 1.0, 2.0, 10.0)]


def validate_map(m: HomogeneousMap, rng: np.random.Generator, n_probe: int = 200) -> None:
    """Reject a custom map whose declared degrees fail the homogeneity probe."""
    if m.is_builtin:
        return
    rep = check_homogeneity(m, n_probe, DEFAULT_SCALES, rng)
    if not rep.ok():
        raise ConfigurationError(
            f"map is not homogeneous with the declared degrees "
            f"(violation {rep.max_violation:.3g} at s,t={rep.worst_scale})"
        )


def probe_bound(m: HomogeneousMap, n_probe: int, rng: np.random.Generator) -> np.ndarray:
    """Running maximum of ``||psi(theta_x, theta_y)||`` over unit probe pairs."""
    if n_probe < 1:
        raise DomainError("n_probe must be at least 1")
    xs, ys = unit_probes(m, n_probe, rng)
    return np.maximum.accumulate(m.norm_z(apply_map_batch(m, xs, ys)))


def map_bound(m: HomogeneousMap, n_probe: int, rng: np.random.Generator) -> float:
    """``sup ||psi(x, y)||`` over unit ``x`` and ``y``.

    Built-in maps have bound one, confirmed against the probes; for custom
    maps the probe maximum (a lower bound) is returned.
    """
    probed = float(probe_bound(m, n_probe, rng)[-1])
    if m.is_builtin:
        if probed > 1.0 + BOUND_SLACK:
            raise DomainError(f"probe value {probed} exceeds the analytic bound 1")
        return 1.0
    return probed
