"""Synthetic dynamic-PET study: phantom, support-error metric and v_cap sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .admm import SolverParams, solve
from .dictionary import (build_kinetic_dictionary, default_decay_grid, default_time_grid,
                         gamma_variate_curve, normalize_columns)
from .model import (CoefficientMatrix, Conv2dOperator, ContractError, add_gaussian_noise,
                    apply_forward, gaussian_kernel, _values)
from .recovery import extract_support

SHAPES = ("disk", "annulus", "rectangle")


@dataclass(frozen=True)
class Region:
    """A rasterized region; geometry is given in pixel units.

    disk: ``center``, ``radius``; annulus: ``center``, ``inner``, ``radius``;
    rectangle: ``corner`` (row, col) and ``size`` (rows, cols).
    """

    shape: str
    basis_index: int
    value: float
    center: tuple = (0.0, 0.0)
    radius: float = 0.0
    inner: float = 0.0
    corner: tuple = (0, 0)
    size: tuple = (0, 0)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ContractError(f"unknown region shape {self.shape!r}")
        if not self.value > 0:
            raise ContractError("region value must be positive")

    def rasterize(self, m1, m2):
        rows, cols = np.mgrid[0:m1, 0:m2]
        if self.shape == "rectangle":
            r0, c0 = self.corner
            h, w = self.size
            if r0 < 0 or c0 < 0 or r0 + h > m1 or c0 + w > m2:
                raise ContractError("rectangle outside the image")
            return (rows >= r0) & (rows < r0 + h) & (cols >= c0) & (cols < c0 + w)
        cy, cx = self.center
        if (cy - self.radius < -0.5 or cx - self.radius < -0.5
                or cy + self.radius > m1 - 0.5 or cx + self.radius > m2 - 0.5):
            raise ContractError(f"{self.shape} outside the image")
        dist = np.hypot(rows - cy, cols - cx)
        inside = dist <= self.radius
        if self.shape == "annulus":
            inside &= dist > self.inner
        return inside


@dataclass(frozen=True)
class Phantom:
    U_true: CoefficientMatrix
    regions: tuple
    spatial_shape: tuple

    @property
    def labels(self):
        """Per-pixel atom index, -1 for background."""
        U = self.U_true.values
        return np.where(U.max(axis=1) > 0, np.argmax(U, axis=1), -1)


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    HEADER = ("v_cap", "wrong_pixel_percent", "weighted_percent", "iterations")

    def as_array(self):
        return np.array([[r[k] for k in self.HEADER] for r in self.rows], dtype=float)


def make_phantom(m1, m2, regions, n_atoms=8) -> Phantom:
    U = np.zeros((m1 * m2, n_atoms))
    owner = np.full(m1 * m2, -1)
    for reg in regions:
        if not 0 <= reg.basis_index < n_atoms:
            raise ContractError(f"basis index {reg.basis_index} out of range")
        hit = reg.rasterize(m1, m2).ravel()
        clash = hit & (owner >= 0) & (owner != reg.basis_index)
        if clash.any():
            raise ContractError("overlapping regions use different basis indices")
        owner[hit] = reg.basis_index
        U[hit, reg.basis_index] = reg.value
    return Phantom(CoefficientMatrix(U, (m1, m2), nonnegative=True), tuple(regions), (m1, m2))


def default_regions(m1, m2, inner_index=1, outer_index=6, value=0.2):
    """Centered disk (atom 1) inside a separated annulus (atom 6), equal amplitudes."""
    m = min(m1, m2)
    center = ((m1 - 1) / 2.0, (m2 - 1) / 2.0)
    return [
        Region("disk", inner_index, value, center=center, radius=0.15 * m),
        Region("annulus", outer_index, value, center=center, inner=0.25 * m, radius=0.38 * m),
    ]


def default_phantom(m1=64, m2=64, n_atoms=8):
    return make_phantom(m1, m2, default_regions(m1, m2), n_atoms)


def default_dictionary(n_atoms=8, n_samples=32, t_end=4.0, decay_low=0.2, decay_high=2.0,
                       peak_time=0.5, normalization="l2"):
    grid = default_time_grid(n_samples, t_end)
    B = build_kinetic_dictionary(gamma_variate_curve(grid, peak_time),
                                 default_decay_grid(n_atoms, decay_low, decay_high), grid)
    return normalize_columns(B, normalization)


def default_kernel_size(m, reference_size=16, reference_pixels=200):
    return max(1, int(round(reference_size * m / reference_pixels)))


def default_operator(m1=64, m2=64, kernel_size=None):
    size = default_kernel_size(min(m1, m2)) if kernel_size is None else kernel_size
    return Conv2dOperator(gaussian_kernel(size), (m1, m2))


def support_error(U_rec, phantom: Phantom, rel_tol=1e-3):
    """Percentage of pixels whose recovered atom label is wrong.

    A pixel's recovered label is its argmax atom when the row is active at
    ``rel_tol`` and background otherwise. The weighted variant multiplies each
    foreground-foreground confusion by the distance between atom indices.
    """
    U_rec = _values(U_rec)
    truth = phantom.labels
    if U_rec.shape != phantom.U_true.shape:
        raise ContractError("recovered coefficients do not match the phantom")
    rec = extract_support(U_rec, rel_tol).argmax
    wrong = rec != truth
    both = wrong & (rec >= 0) & (truth >= 0)
    weights = np.where(both, np.abs(rec - truth), 1) * wrong
    M = truth.size
    return {
        "percent": 100.0 * wrong.sum() / M,
        "weighted_percent": 100.0 * weights.sum() / M,
        "wrong_count": int(wrong.sum()),
    }


def synthesize(A, B, phantom, sigma=0.0, seed=0):
    W = apply_forward(A, phantom.U_true, B)
    return add_gaussian_noise(W, sigma, seed)


def scaled_params(params: SolverParams, v_cap):
    """Params for one sweep entry; the absolute tolerance follows the cap's scale."""
    return replace(params, v_cap=v_cap, eps_abs=params.eps_abs * min(1.0, v_cap))


def sweep_v(A, B, phantom, sigma, seed, v_list, params: SolverParams, rel_tol=1e-3,
            scale_tolerance=True) -> SweepTable:
    v_list = [float(v) for v in v_list]
    if not v_list:
        raise ContractError("v_list must be nonempty")
    if any(b >= a for a, b in zip(v_list, v_list[1:])):
        raise ContractError("v_list must be strictly decreasing")
    W = synthesize(A, B, phantom, sigma, seed)
    table = SweepTable()
    for v in v_list:
        p = scaled_params(params, v) if scale_tolerance else replace(params, v_cap=v)
        U, report = solve(A, B, W, p)
        err = support_error(U, phantom, rel_tol)
        table.rows.append({
            "v_cap": v,
            "wrong_pixel_percent": err["percent"],
            "weighted_percent": err["weighted_percent"],
            "iterations": report.iterations,
        })
    return table
