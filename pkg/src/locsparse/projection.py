"""Row-wise prox of nonnegativity + l1 shrinkage + row-sum cap.

For every row ``g`` this returns the minimizer of

    (lam / 2) ||d - g||^2 + beta * sum(d)   s.t.  d >= 0,  sum(d) <= v_cap.

The linear term is folded into a shift ``h = g - beta / lam``; the remaining
problem is the Euclidean projection of ``h`` onto the capped simplex, solved
by sorting (Duchi et al.).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ContractError


@dataclass(frozen=True)
class RowProjectionParams:
    v_cap: float
    beta: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.v_cap > 0:
            raise ContractError("v_cap must be positive")
        if not self.lam > 0:
            raise ContractError("lam must be positive")
        if not self.beta >= 0:
            raise ContractError("beta must be nonnegative")


def _capped_threshold(h, v_cap):
    """Per-row threshold theta for rows of ``h`` whose positive part exceeds the cap."""
    srt = -np.sort(-h, axis=1)
    csum = np.cumsum(srt, axis=1) - v_cap
    ranks = np.arange(1, h.shape[1] + 1)
    cond = srt - csum / ranks > 0
    # rho = last index where the condition holds; index 0 always qualifies here
    rho = h.shape[1] - np.argmax(cond[:, ::-1], axis=1)
    return csum[np.arange(h.shape[0]), rho - 1] / rho


def project_matrix(G, params: RowProjectionParams, mask=None) -> np.ndarray:
    """Apply :func:`project_row` to every row of ``G``.

    ``mask`` (boolean, same shape) pins entries where it is False to zero.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise ContractError("G must be 2-D")
    if not np.all(np.isfinite(G)):
        raise ContractError("projection input must be finite")
    h = G - params.beta / params.lam
    if mask is not None:
        # nonpositive entries never enter the active set (theta > 0 in the capped case)
        h = np.where(mask, h, 0.0)
    d = np.maximum(h, 0.0)
    # rows already on the cap up to rounding stay untouched, so the map is idempotent
    slack = 4.0 * np.finfo(float).eps * params.v_cap * max(G.shape[1], 1)
    over = d.sum(axis=1) > params.v_cap + slack
    if np.any(over):
        theta = _capped_threshold(h[over], params.v_cap)
        d[over] = np.maximum(h[over] - theta[:, None], 0.0)
    return d


def project_row(g, params: RowProjectionParams) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.ndim != 1:
        raise ContractError("project_row expects a vector")
    return project_matrix(g[None, :], params)[0]
