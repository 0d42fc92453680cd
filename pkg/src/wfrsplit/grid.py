"""Uniform Cartesian grids on boxes in 1D/2D, discrete fields and calculus.

Densities live at cell centres; fluxes and gradients live on interior faces.
Boundary faces carry zero normal flux, so ``divergence`` of any face field
integrates to zero and the transport step stays mass conservative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "Grid",
    "DensityField",
    "VectorField",
    "write_snapshot_csv",
    "read_snapshot_csv",
    "write_pgm",
]


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on the box ``origin + [0, lengths]``.

    Parameters
    ----------
    n : tuple of int
        Number of cells per axis (1 or 2 entries, each >= 2).
    lengths : tuple of float, optional
        Box side lengths. Defaults to the unit box.
    origin : tuple of float, optional
        Lower corner of the box. Defaults to zero.
    """

    n: tuple[int, ...]
    lengths: tuple[float, ...] = ()
    origin: tuple[float, ...] = ()

    def __post_init__(self):
        n = tuple(int(k) for k in np.atleast_1d(self.n))
        if len(n) not in (1, 2):
            raise ValueError(f"only dimensions 1 and 2 are supported, got n={n}")
        if min(n) < 2:
            raise ValueError(f"every axis needs at least 2 cells, got n={n}")
        lengths = tuple(float(v) for v in (self.lengths or (1.0,) * len(n)))
        origin = tuple(float(v) for v in (self.origin or (0.0,) * len(n)))
        if len(lengths) != len(n) or len(origin) != len(n):
            raise ValueError("n, lengths and origin must have the same length")
        if min(lengths) <= 0:
            raise ValueError(f"box lengths must be positive, got {lengths}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / k for L, k in zip(self.lengths, self.n))

    @property
    def cellvol(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axes(self) -> list[np.ndarray]:
        """Cell-centre coordinates along each axis."""
        return [o + (np.arange(k) + 0.5) * d
                for o, k, d in zip(self.origin, self.n, self.spacing)]

    def centers(self) -> list[np.ndarray]:
        """Meshgrid (``indexing='ij'``) of cell centres, one array per axis."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def face_measure(self, axis: int) -> float:
        """Measure of a face normal to ``axis`` (1 in 1D)."""
        sp = self.spacing
        return float(np.prod([sp[k] for k in range(self.dim) if k != axis]))

    # ------------------------------------------------------------------
    # integrals
    # ------------------------------------------------------------------
    def check_cell_field(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"cell field has shape {f.shape}, grid expects {self.shape}")
        return f

    def mass(self, f) -> float:
        return float(np.sum(self.check_cell_field(f)) * self.cellvol)

    def integrate(self, f) -> float:
        return self.mass(f)

    def inner(self, f, g) -> float:
        return float(np.sum(self.check_cell_field(f) * self.check_cell_field(g)) * self.cellvol)

    def total_variation(self, f) -> float:
        """Discrete BV norm: jump seminorm over interior faces plus the L1 norm."""
        f = self.check_cell_field(f)
        tv = 0.0
        for axis in range(self.dim):
            tv += np.sum(np.abs(np.diff(f, axis=axis))) * self.face_measure(axis)
        return float(tv + np.sum(np.abs(f)) * self.cellvol)

    # ------------------------------------------------------------------
    # discrete calculus (zero flux through the boundary)
    # ------------------------------------------------------------------
    def gradient(self, f) -> "VectorField":
        f = self.check_cell_field(f)
        comps = tuple(np.diff(f, axis=axis) / dx for axis, dx in enumerate(self.spacing))
        return VectorField(self, comps)

    def divergence(self, v) -> np.ndarray:
        comps = v.components if isinstance(v, VectorField) else tuple(v)
        if len(comps) != self.dim:
            raise ValueError(f"expected {self.dim} face components, got {len(comps)}")
        out = np.zeros(self.shape)
        for axis, (c, dx) in enumerate(zip(comps, self.spacing)):
            expected = list(self.shape)
            expected[axis] -= 1
            c = np.asarray(c, dtype=float)
            if c.shape != tuple(expected):
                raise ValueError(
                    f"face component {axis} has shape {c.shape}, expected {tuple(expected)}")
            pad = [(0, 0)] * self.dim
            pad[axis] = (1, 1)
            out += np.diff(np.pad(c, pad), axis=axis) / dx
        return out

    def face_inner(self, u, v) -> float:
        cu = u.components if isinstance(u, VectorField) else u
        cv = v.components if isinstance(v, VectorField) else v
        return float(sum(np.sum(a * b) for a, b in zip(cu, cv)) * self.cellvol)

    def convolve(self, kernel: Callable[..., np.ndarray], f, method: str = "auto") -> np.ndarray:
        """Midpoint-quadrature convolution ``sum_j K(x_i - x_j) f_j cellvol``.

        ``kernel`` receives one displacement array per axis and must be
        vectorised. ``method='direct'`` evaluates all pairs; ``'fft'`` uses the
        Toeplitz structure of the uniform grid and agrees with the direct sum
        to rounding error.
        """
        f = self.check_cell_field(f)
        if method == "auto":
            method = "direct" if self.size <= 1024 else "fft"
        if method == "direct":
            return self._convolve_direct(kernel, f)
        if method == "fft":
            return self._convolve_fft(kernel, f)
        raise ValueError(f"unknown convolution method {method!r}")

    def _convolve_direct(self, kernel, f):
        pts = np.stack([c.ravel() for c in self.centers()], axis=1)
        fv = f.ravel()
        out = np.empty(len(pts))
        chunk = max(1, 2_000_000 // len(pts))
        for start in range(0, len(pts), chunk):
            x = pts[start:start + chunk]
            disp = [x[:, None, k] - pts[None, :, k] for k in range(self.dim)]
            out[start:start + chunk] = np.asarray(kernel(*disp)) @ fv
        return out.reshape(self.shape) * self.cellvol

    def _convolve_fft(self, kernel, f):
        # displacement table over index offsets -(n-1) .. (n-1) along each axis
        offs = [np.arange(-(k - 1), k) * d for k, d in zip(self.n, self.spacing)]
        table = np.asarray(kernel(*np.meshgrid(*offs, indexing="ij")), dtype=float)
        full = fftconvolve(table, f, mode="full")
        sl = tuple(slice(k - 1, 2 * k - 1) for k in self.n)
        return full[sl] * self.cellvol


@dataclass
class VectorField:
    """Face-centred vector field: component ``k`` has one fewer entry on axis ``k``."""

    grid: Grid
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError("one component per axis required")
        for axis, c in enumerate(self.components):
            expected = list(self.grid.shape)
            expected[axis] -= 1
            if np.shape(c) != tuple(expected):
                raise ValueError(f"component {axis} has shape {np.shape(c)}, expected {tuple(expected)}")


@dataclass
class DensityField:
    """Nonnegative cell-centred density on a grid, optionally time-stamped."""

    grid: Grid
    values: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = self.grid.check_cell_field(self.values)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite")
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")

    @property
    def mass(self) -> float:
        return self.grid.mass(self.values)


# ----------------------------------------------------------------------
# snapshot I/O
# ----------------------------------------------------------------------
def _grid_header(grid: Grid, t: float) -> str:
    n = "x".join(str(k) for k in grid.n)
    box = "x".join(repr(L) for L in grid.lengths)
    return f"# grid d={grid.dim} n={n} box={box} t={t!r}"


def write_snapshot_csv(path, grid: Grid, values, t: float = 0.0) -> Path:
    """Write a cell field as row-major CSV with a one-line grid header."""
    path = Path(path)
    values = grid.check_cell_field(values)
    rows = values.reshape(grid.n[0], -1)
    with open(path, "w") as fh:
        fh.write(_grid_header(grid, t) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def read_snapshot_csv(path) -> DensityField:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# grid"):
            raise ValueError(f"{path}: missing '# grid' header")
        meta = dict(tok.split("=", 1) for tok in header[len("# grid"):].split())
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = tuple(int(k) for k in meta["n"].split("x"))
    lengths = tuple(float(L) for L in meta["box"].split("x"))
    if int(meta["d"]) != len(n):
        raise ValueError(f"{path}: header dimension does not match n")
    grid = Grid(n, lengths)
    return DensityField(grid, data.reshape(n), t=float(meta.get("t", 0.0)))


def write_pgm(path, values, vmax: float | None = None) -> Path:
    """Write a 2D field as 8-bit binary PGM (P5), scaled to ``[0, vmax]``."""
    path = Path(path)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("PGM output needs a 2D field")
    top = float(vmax) if vmax is not None else float(values.max())
    if top <= 0:
        top = 1.0
    img = np.clip(np.rint(255.0 * values / top), 0, 255).astype(np.uint8)
    # first array axis is x: transpose so rows run along y, flipped so y points up
    img = img.T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return path


def as_grid(n: Sequence[int] | int, lengths=None) -> Grid:
    n = (n,) if np.isscalar(n) else tuple(n)
    return Grid(n, tuple(lengths) if lengths is not None else ())
