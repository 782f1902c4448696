"""Kinetic-modeling dictionaries.

Atom ``j`` is the input curve convolved with a decaying exponential,

    b_j(t) = int_0^t C_A(tau) exp(-k_j (t - tau)) dtau,

sampled on the acquisition time grid. The curve is taken to be piecewise
linear between its samples (and constant before the first sample); each
interval is then integrated exactly against the exponential, so constant and
linear curves are reproduced to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ContractError, DictionaryMatrix, Normalization, _values


@dataclass(frozen=True)
class InputCurve:
    samples: np.ndarray
    description: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise ContractError("input curve needs at least one sample")
        if not np.all(np.isfinite(samples)) or np.any(samples < 0):
            raise ContractError("input curve samples must be finite and nonnegative")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class DecayGrid:
    params: np.ndarray

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        if params.ndim != 1 or params.size == 0:
            raise ContractError("decay grid must be a nonempty vector")
        if not np.all(np.isfinite(params)) or np.any(params < 0):
            raise ContractError("decay rates must be finite and nonnegative")
        if np.any(np.diff(params) <= 0):
            raise ContractError("decay rates must be strictly increasing")
        object.__setattr__(self, "params", params)


@dataclass(frozen=True)
class ScalingReport:
    satisfied: bool
    violations: list = field(default_factory=list)


def default_time_grid(n_samples=32, t_end=4.0):
    return np.linspace(0.0, t_end, n_samples)


def gamma_variate_curve(time_grid, peak_time=0.5):
    """``t * exp(-t / peak_time)`` rescaled so its maximum over t >= 0 is 1."""
    t = np.asarray(time_grid, dtype=float)
    x = t / peak_time
    return InputCurve(x * np.exp(1.0 - x), f"gamma variate, peak at t={peak_time}")


def default_decay_grid(n_atoms=8, low=0.2, high=2.0):
    return DecayGrid(np.geomspace(low, high, n_atoms))


def _interval_weights(rate, h):
    """Weights (w_start, w_end) integrating a linear segment against exp decay."""
    x = rate * h
    small = x < 1e-3
    xs = np.where(small, 1.0, x)
    e = np.exp(-xs)
    phi = np.where(small, 1 - x / 2 + x * x / 6 - x ** 3 / 24, -np.expm1(-xs) / xs)
    w0 = np.where(small,
                  0.5 - x / 3 + x * x / 8 - x ** 3 / 30,
                  (1 - e - xs * e) / (xs * xs))
    return h * w0, h * (phi - w0)


def build_kinetic_dictionary(curve, decays, time_grid) -> DictionaryMatrix:
    curve = curve if isinstance(curve, InputCurve) else InputCurve(curve)
    decays = decays if isinstance(decays, DecayGrid) else DecayGrid(decays)
    t = np.asarray(time_grid, dtype=float)
    c = curve.samples
    if t.ndim != 1 or t.size == 0:
        raise ContractError("time grid must be a nonempty vector")
    if t.shape != c.shape:
        raise ContractError(f"time grid has {t.size} points, curve has {c.size}")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ContractError("time grid must be nonnegative and strictly increasing")

    rates = decays.params
    out = np.empty((t.size, rates.size))
    # curve held at its first value on [0, t0]
    w0, w1 = _interval_weights(rates, t[0])
    acc = c[0] * (w0 + w1)
    out[0] = acc
    for k in range(1, t.size):
        h = t[k] - t[k - 1]
        w0, w1 = _interval_weights(rates, h)
        acc = np.exp(-rates * h) * acc + c[k - 1] * w0 + c[k] * w1
        out[k] = acc
    return DictionaryMatrix(out, t, Normalization.RAW, decays=rates)


def normalize_columns(B, mode="l2") -> DictionaryMatrix:
    mode = Normalization(mode)
    if mode is Normalization.RAW:
        raise ContractError("normalization mode must be l2 or l1")
    values = _values(B)
    grid = getattr(B, "time_grid", np.arange(values.shape[0], dtype=float))
    ord_ = 2 if mode is Normalization.L2 else 1
    norms = np.linalg.norm(values, ord=ord_, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ContractError(f"column {int(zero[0])} is zero and cannot be normalized")
    out = values / norms
    # a second pass snaps the norms to 1 within rounding
    out = out / np.linalg.norm(out, ord=ord_, axis=0)
    return DictionaryMatrix(out, grid, mode, decays=getattr(B, "decays", None))


def mutual_incoherence(B) -> float:
    """max over i != j of |<b_i, b_j>| / ||b_i||^2."""
    values = _values(B)
    if values.ndim != 2 or values.shape[1] < 2:
        raise ContractError("mutual incoherence needs at least two atoms")
    gram = values.T @ values
    sq = np.diag(gram).copy()
    if np.any(sq == 0):
        raise ContractError(f"column {int(np.flatnonzero(sq == 0)[0])} is zero")
    ratios = np.abs(gram) / sq[:, None]
    np.fill_diagonal(ratios, -np.inf)
    return float(ratios.max())


def check_scaling_condition(B, support, tol=1e-9) -> ScalingReport:
    """Check unit norm and bounded correlations for every atom used in ``support``.

    ``support`` lists the active atom index of each row; negative entries mark
    empty rows and are ignored.
    """
    values = _values(B)
    n_atoms = values.shape[1]
    idx = np.asarray(support, dtype=int).ravel()
    if np.any(idx >= n_atoms):
        raise ContractError("support index out of range")
    used = np.unique(idx[idx >= 0])
    gram = values.T @ values
    violations = []
    for j in used:
        norm = float(np.sqrt(gram[j, j]))
        if abs(norm - 1.0) > tol:
            violations.append(("norm", int(j), int(j), norm))
        for n in range(n_atoms):
            if n != j and abs(gram[j, n]) > 1.0 + tol:
                violations.append(("inner", int(j), int(n), float(gram[j, n])))
    return ScalingReport(not violations, violations)
