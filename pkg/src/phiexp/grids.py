"""Discretized densities on radial or two-dimensional Cartesian cells."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


def sphere_area(d: int) -> float:
    """Surface measure of the unit (d-1)-sphere."""
    return 2.0 * math.pi ** (0.5 * d) / math.exp(gammaln(0.5 * d))


@dataclass
class DensityGrid:
    """Cell averages of a density.

    ``geometry`` is ``"radial"`` (isotropic density about the origin in
    dimension ``dim``; ``edges`` holds the radial cell edges) or
    ``"cartesian"`` (``dim == 2``; ``edges`` holds the x and y edges and
    ``values`` has shape ``(ny, nx)``).
    """

    geometry: str
    dim: int
    edges: tuple
    values: np.ndarray

    def __post_init__(self):
        if self.geometry not in ("radial", "cartesian"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.geometry == "cartesian" and self.dim != 2:
            raise ValueError("cartesian grids are two-dimensional")
        self.values = np.asarray(self.values, dtype=float)
        self.edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        if self.values.shape != self.shape:
            raise ValueError(f"values have shape {self.values.shape}, expected {self.shape}")

    @property
    def shape(self):
        if self.geometry == "radial":
            return (self.edges[0].size - 1,)
        return (self.edges[1].size - 1, self.edges[0].size - 1)

    @property
    def nodes(self):
        """Cell centers: radii, or an ``(ny, nx, 2)`` array of points."""
        if self.geometry == "radial":
            e = self.edges[0]
            return 0.5 * (e[:-1] + e[1:])
        xs = 0.5 * (self.edges[0][:-1] + self.edges[0][1:])
        ys = 0.5 * (self.edges[1][:-1] + self.edges[1][1:])
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X, Y], axis=-1)

    @property
    def volumes(self):
        if self.geometry == "radial":
            e = self.edges[0]
            return sphere_area(self.dim) * (e[1:] ** self.dim - e[:-1] ** self.dim) / self.dim
        dx = np.diff(self.edges[0])
        dy = np.diff(self.edges[1])
        return dy[:, None] * dx[None, :]

    def points(self):
        """Cell centers as an ``(n, dim)`` array (radial cells placed on the first axis)."""
        if self.geometry == "radial":
            pts = np.zeros((self.shape[0], self.dim))
            pts[:, 0] = self.nodes
            return pts
        return self.nodes.reshape(-1, 2)

    def with_values(self, values) -> "DensityGrid":
        return DensityGrid(self.geometry, self.dim, self.edges, np.array(values, dtype=float))

    def mass(self) -> float:
        return float(np.sum(self.values * self.volumes))

    def mean(self):
        if self.geometry == "radial":
            return np.zeros(self.dim)
        w = self.values * self.volumes
        pts = self.nodes
        return np.array([np.sum(w * pts[..., 0]), np.sum(w * pts[..., 1])]) / np.sum(w)

    def second_moment(self) -> float:
        """``integral |x|^2 rho`` estimated from the cell averages.

        The midpoint sum over-counts by ``h^2/12`` per axis when the values
        are cell averages of a smooth density; that leading term is removed
        (``d h^2/6`` of mass for radial cells, ``h^2/12`` per Cartesian axis).
        """
        mass = self.mass()
        if self.geometry == "radial":
            e = self.edges[0]
            d = self.dim
            r2 = sphere_area(d) * (e[1:] ** (d + 2) - e[:-1] ** (d + 2)) / (d + 2)
            h = e[1] - e[0]
            return float(np.sum(self.values * r2)) - d * h * h / 6.0 * mass
        return float(np.trace(self.covariance(center=False)) * mass)

    def covariance(self, center: bool = True):
        """Covariance of the normalized density, with the leading cell-averaging bias removed."""
        mass = self.mass()
        if self.geometry == "radial":
            return np.eye(self.dim) * self.second_moment() / (self.dim * mass)
        w = self.values * self.volumes / mass
        pts = self.nodes
        hx = self.edges[0][1] - self.edges[0][0]
        hy = self.edges[1][1] - self.edges[1][0]
        m = self.mean() if center else np.zeros(2)
        xc = pts[..., 0] - m[0]
        yc = pts[..., 1] - m[1]
        sxx = np.sum(w * xc**2) - hx * hx / 12.0
        syy = np.sum(w * yc**2) - hy * hy / 12.0
        sxy = np.sum(w * xc * yc)
        return np.array([[sxx, sxy], [sxy, syy]])

    def l1_distance(self, other_values) -> float:
        return float(np.sum(np.abs(self.values - other_values) * self.volumes))


def radial_grid(dim: int, r_max: float, n: int, values=None) -> DensityGrid:
    edges = np.linspace(0.0, r_max, n + 1)
    vals = np.zeros(n) if values is None else values
    return DensityGrid("radial", dim, (edges,), vals)


def cartesian_grid(half_width: float, n: int, values=None, half_width_y: float | None = None, ny: int | None = None) -> DensityGrid:
    hy = half_width if half_width_y is None else half_width_y
    ny = n if ny is None else ny
    ex = np.linspace(-half_width, half_width, n + 1)
    ey = np.linspace(-hy, hy, ny + 1)
    vals = np.zeros((ny, n)) if values is None else values
    return DensityGrid("cartesian", 2, (ex, ey), vals)
