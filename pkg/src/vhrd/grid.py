"""Structured grids, nodal fields and Neumann diffusion operators.

Nodes are vertex-centred: an axis of length ``L`` with ``n`` nodes has
spacing ``h = L / (n - 1)`` and nodes at both walls. Node ``(i, j)`` of a
2D grid has flat index ``j * n_x + i`` (x varies fastest).

Two matrices describe ``div(delta grad u)`` with zero normal flux:

* :func:`assemble_diffusion` returns the symmetric flux-form matrix ``K``
  (face conductances, zero row sums, negative semidefinite);
* :func:`diffusion_operator` returns ``L = W^{-1} K`` where ``W`` holds the
  trapezoidal node weights (1/2 per boundary axis). ``L`` is the operator
  used by the model: it is second-order accurate up to the wall, keeps zero
  row sums, and is self-adjoint for the inner product weighted by ``W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

COEFFICIENT_NAMES = ("delta1", "delta2", "lambda_", "beta", "sigma1", "sigma2", "mu", "h_u")


@dataclass(frozen=True)
class Grid:
    """Uniform structured grid on an interval or a rectangle."""

    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if len(self.shape) not in (1, 2) or len(self.shape) != len(self.lengths):
            raise ValueError("grid must be 1D or 2D with one length per axis")
        for n in self.shape:
            if int(n) != n or n < 3:
                raise ValueError(f"node count per axis must be an integer >= 3, got {n}")
        for length in self.lengths:
            if not length > 0:
                raise ValueError(f"axis length must be positive, got {length}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(length / (n - 1) for n, length in zip(self.shape, self.lengths))

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(0.0, length, n) for n, length in zip(self.shape, self.lengths)]

    @property
    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(N, dim)``, in flat-index order."""
        axes = self.axes
        if self.dim == 1:
            return axes[0][:, None]
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="xy")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def index(self, i: int, j: int = 0) -> int:
        if not 0 <= i < self.shape[0]:
            raise IndexError(i)
        if self.dim == 1:
            if j != 0:
                raise IndexError(j)
            return i
        if not 0 <= j < self.shape[1]:
            raise IndexError(j)
        return j * self.shape[0] + i

    @property
    def weights(self) -> np.ndarray:
        """Dimensionless trapezoidal weights (1 interior, 1/2 per boundary axis)."""
        per_axis = []
        for n in self.shape:
            w = np.ones(n)
            w[0] = w[-1] = 0.5
            per_axis.append(w)
        if self.dim == 1:
            return per_axis[0]
        return np.outer(per_axis[1], per_axis[0]).ravel()

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))


def build_grid(dim: int, n_x: int, n_y: int | None = None,
               lengths: Union[float, Sequence[float]] = 1.0) -> Grid:
    if dim == 1:
        if n_y is not None:
            raise ValueError("n_y given for a 1D grid")
        shape = (n_x,)
    elif dim == 2:
        if n_y is None:
            raise ValueError("2D grid needs n_y")
        shape = (n_x, n_y)
    else:
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if np.isscalar(lengths):
        lengths = (float(lengths),) * dim
    lengths = tuple(float(v) for v in lengths)
    if len(lengths) != dim:
        raise ValueError("need one length per axis")
    return Grid(shape=tuple(int(n) for n in shape), lengths=lengths)


@dataclass(frozen=True, eq=False)
class Field:
    """Real values sampled at the nodes of ``grid``."""

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.shape != (self.grid.size,):
            raise ValueError(f"field has {values.size} values, grid has {self.grid.size} nodes")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def scaled(self, factor: float) -> "Field":
        return Field(self.grid, factor * self.values)


# -- profiles ---------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    value: float

    def sample(self, grid: Grid) -> np.ndarray:
        return np.full(grid.size, float(self.value))

    def to_dict(self) -> dict:
        return {"profile": "constant", "value": self.value}


@dataclass(frozen=True)
class Nodes:
    values: tuple[float, ...]

    def sample(self, grid: Grid) -> np.ndarray:
        if len(self.values) != grid.size:
            raise ValueError(f"nodes profile has {len(self.values)} values, grid has {grid.size} nodes")
        return np.array(self.values, dtype=float)

    def to_dict(self) -> dict:
        return {"profile": "nodes", "values": list(self.values)}


@dataclass(frozen=True)
class Ramp:
    """Linear in x from ``start`` at x=0 to ``end`` at the far wall."""

    start: float
    end: float

    def sample(self, grid: Grid) -> np.ndarray:
        s = grid.coordinates[:, 0] / grid.lengths[0]
        return self.start + (self.end - self.start) * s

    def to_dict(self) -> dict:
        return {"profile": "ramp", "start": self.start, "end": self.end}


@dataclass(frozen=True)
class Bump:
    """``base + amplitude * exp(-r^2 / (2 width^2))`` with r the distance to ``center``.

    A scalar ``center`` on a 2D grid places the bump on the line x = center.
    """

    base: float
    amplitude: float
    center: Union[float, tuple[float, ...]]
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("bump width must be positive")

    def sample(self, grid: Grid) -> np.ndarray:
        coords = grid.coordinates
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if center.size == 1:
            r2 = (coords[:, 0] - center[0]) ** 2
        elif center.size == grid.dim:
            r2 = ((coords - center) ** 2).sum(axis=1)
        else:
            raise ValueError("bump center must be a scalar or have one entry per axis")
        return self.base + self.amplitude * np.exp(-0.5 * r2 / self.width ** 2)

    def to_dict(self) -> dict:
        center = list(self.center) if isinstance(self.center, (tuple, list)) else self.center
        return {"profile": "bump", "base": self.base, "amplitude": self.amplitude,
                "center": center, "width": self.width}


Profile = Union[Constant, Nodes, Ramp, Bump]


def profile_from_dict(spec: dict) -> Profile:
    """Build a profile from its JSON form (see :meth:`to_dict` on each profile)."""
    if not isinstance(spec, dict) or "profile" not in spec:
        raise ValueError(f"profile must be an object with a 'profile' key, got {spec!r}")
    kind = spec["profile"]
    keys = set(spec) - {"profile"}
    try:
        if kind == "constant":
            _expect(keys, {"value"})
            return Constant(float(spec["value"]))
        if kind == "nodes":
            _expect(keys, {"values"})
            return Nodes(tuple(float(v) for v in spec["values"]))
        if kind == "ramp":
            _expect(keys, {"start", "end"})
            return Ramp(float(spec["start"]), float(spec["end"]))
        if kind == "bump":
            _expect(keys, {"base", "amplitude", "center", "width"})
            center = spec["center"]
            center = tuple(float(c) for c in center) if isinstance(center, list) else float(center)
            return Bump(float(spec["base"]), float(spec["amplitude"]), center, float(spec["width"]))
    except (TypeError, KeyError) as exc:
        raise ValueError(f"malformed {kind} profile: {exc}") from None
    raise ValueError(f"unknown profile kind {kind!r}")


def _expect(got, want):
    if got != want:
        raise ValueError(f"expected keys {sorted(want)}, got {sorted(got)}")


def field_from_profile(grid: Grid, profile: Profile, *, coefficient: bool = False,
                       name: str = "field") -> Field:
    """Sample ``profile`` at the grid nodes.

    With ``coefficient=True`` the result must be strictly positive; this is
    how model rates and diffusivities are validated on ingestion.
    """
    values = profile.sample(grid)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name}: profile produced non-finite values")
    if coefficient and values.min() <= 0:
        raise ValueError(f"{name}: coefficient must be strictly positive (min {values.min():g})")
    return Field(grid, values)


# -- model coefficients ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelCoefficients:
    """The eight positive coefficient fields of the vector-host model."""

    delta1: Field
    delta2: Field
    lambda_: Field
    beta: Field
    sigma1: Field
    sigma2: Field
    mu: Field
    h_u: Field

    def __post_init__(self):
        grid = self.delta1.grid
        for name in COEFFICIENT_NAMES:
            f = getattr(self, name)
            if not isinstance(f, Field):
                raise TypeError(f"{name} must be a Field")
            if f.grid != grid:
                raise ValueError(f"{name} lives on a different grid")
            if f.values.min() <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def grid(self) -> Grid:
        return self.delta1.grid

    @classmethod
    def constant(cls, grid: Grid, **values: float) -> "ModelCoefficients":
        """Spatially constant coefficients; ``lambda_`` may be spelled ``lam``."""
        if "lam" in values:
            values["lambda_"] = values.pop("lam")
        missing = set(COEFFICIENT_NAMES) - set(values)
        if missing:
            raise ValueError(f"missing coefficients: {sorted(missing)}")
        return cls(**{k: Field(grid, np.full(grid.size, float(v))) for k, v in values.items()})

    def replace(self, **fields) -> "ModelCoefficients":
        current = {name: getattr(self, name) for name in COEFFICIENT_NAMES}
        for name, value in fields.items():
            if name not in current:
                raise KeyError(name)
            current[name] = value if isinstance(value, Field) else Field(self.grid, value)
        return ModelCoefficients(**current)

    def scaled(self, name: str, factor: float) -> "ModelCoefficients":
        return self.replace(**{name: getattr(self, name).scaled(factor)})

    def with_diffusion(self, d1: float, d2: float | None = None) -> "ModelCoefficients":
        d2 = d1 if d2 is None else d2
        n = self.grid.size
        return self.replace(delta1=np.full(n, float(d1)), delta2=np.full(n, float(d2)))


# -- operators ---------------------------------------------------------------

def _faces(grid: Grid):
    """Yield ``(left, right, 1/h^2)`` index arrays for every interior face."""
    idx = np.arange(grid.size).reshape(grid.shape[::-1])  # (n_y, n_x) in 2D
    h = grid.spacing
    if grid.dim == 1:
        yield idx[:-1], idx[1:], 1.0 / h[0] ** 2
    else:
        yield idx[:, :-1].ravel(), idx[:, 1:].ravel(), 1.0 / h[0] ** 2
        yield idx[:-1, :].ravel(), idx[1:, :].ravel(), 1.0 / h[1] ** 2


def assemble_diffusion(grid: Grid, delta: Field) -> sp.csr_matrix:
    """Symmetric flux-form matrix of ``div(delta grad .)`` with zero-flux walls.

    Each face between neighbouring nodes ``p, q`` carries conductance
    ``(delta_p + delta_q) / (2 h^2)``; wall faces carry none, so every row
    sums to zero.
    """
    d = np.asarray(delta, dtype=float)
    if d.shape != (grid.size,):
        raise ValueError("delta does not match grid")
    if d.min() <= 0:
        raise ValueError("diffusion coefficient must be strictly positive")
    rows, cols, vals = [], [], []
    for p, q, inv_h2 in _faces(grid):
        c = 0.5 * (d[p] + d[q]) * inv_h2
        rows += [p, q, p, q]
        cols += [q, p, p, q]
        vals += [c, c, -c, -c]
    n = grid.size
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    return K


def diffusion_operator(grid: Grid, delta: Field) -> sp.csr_matrix:
    """Model diffusion operator ``W^{-1} K`` (see module docstring)."""
    K = assemble_diffusion(grid, delta)
    return (sp.diags(1.0 / grid.weights) @ K).tocsr()


def integrate_field(field: Field, weight: Field | None = None) -> float:
    """Trapezoidal (tensor-trapezoidal in 2D) integral of ``weight * field``."""
    grid = field.grid
    values = field.values
    if weight is not None:
        if weight.grid != grid:
            raise ValueError("field and weight live on different grids")
        values = values * weight.values
    return float(grid.cell_volume * np.dot(grid.weights, values))
