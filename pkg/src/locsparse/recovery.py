"""Optimality certificates and exact-recovery checks for the l1,inf penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.stats import ortho_group

from .model import ContractError, _values, as_operator


@dataclass(frozen=True)
class SupportMap:
    """Active coefficients per row plus the per-row argmax (-1 for empty rows)."""

    mask: np.ndarray
    argmax: np.ndarray
    zero_tol: float = 0.0

    def active_sets(self):
        return [np.flatnonzero(row) for row in self.mask]

    @property
    def labels(self):
        return self.argmax


@dataclass(frozen=True)
class SubgradientCertificate:
    ok: bool
    max_rows: np.ndarray
    weights: np.ndarray
    violation: float


@dataclass(frozen=True)
class SourceConditionResult:
    satisfied: bool
    Q: np.ndarray | None
    residual: float
    P: np.ndarray | None = None


@dataclass(frozen=True)
class RecoveryInstance:
    A: np.ndarray
    B: np.ndarray
    U_hat: np.ndarray
    W: np.ndarray
    J: np.ndarray
    alternative: np.ndarray | None = None


def extract_support(U, rel_tol=1e-3) -> SupportMap:
    """Entries above ``rel_tol * max(U)``; rows with no such entry are empty."""
    if not 0 < rel_tol < 1:
        raise ContractError("rel_tol must lie in (0, 1)")
    U = _values(U)
    top = U.max() if U.size else 0.0
    if top <= 0:
        mask = np.zeros(U.shape, dtype=bool)
    else:
        mask = U > rel_tol * top
    argmax = np.where(mask.any(axis=1), np.argmax(U, axis=1), -1)
    return SupportMap(mask, argmax, rel_tol * max(top, 0.0))


def _max_rows(U, tol):
    sums = np.abs(U).sum(axis=1)
    top = sums.max()
    return sums >= top - tol * max(1.0, top), top


def subgradient_membership(P, U, tol=1e-9):
    """Is ``P`` in the subdifferential of ``||.||_{1,inf}`` at ``U``?"""
    P, U = _values(P), _values(U)
    if P.shape != U.shape:
        raise ContractError("P and U must have the same shape")
    in_I, top = _max_rows(U, tol)
    absP = np.abs(P)
    if top == 0:
        weights = absP.max(axis=1)
        viol = max(weights.sum() - 1.0, 0.0)
        return SubgradientCertificate(viol <= tol, np.arange(U.shape[0]), weights, viol)

    nz = np.abs(U) > tol
    weights = np.where(in_I, absP.max(axis=1), 0.0)
    viol = 0.0
    off = ~in_I
    if off.any():
        viol = max(viol, absP[off].max())
    target = weights[:, None] * np.sign(U)
    on_nz = nz & in_I[:, None]
    if on_nz.any():
        viol = max(viol, np.abs(P - target)[on_nz].max())
    viol = max(viol, abs(weights.sum() - 1.0))
    return SubgradientCertificate(viol <= tol, np.flatnonzero(in_I), weights[in_I], viol)


def nonneg_subgradient_membership(P, U, tol=1e-9):
    """Membership test for the l1,inf norm restricted to nonnegative matrices.

    Entries where ``U`` is zero may additionally carry any nonpositive
    multiplier of the sign constraint, so on maximal rows they are only
    bounded above by the row weight.
    """
    P, U = _values(P), _values(U)
    if P.shape != U.shape:
        raise ContractError("P and U must have the same shape")
    if np.any(U < 0):
        raise ContractError("U must be nonnegative")
    in_I, top = _max_rows(U, tol)
    pos = U > tol
    if top == 0:
        weights = np.maximum(P.max(axis=1), 0.0)
        viol = max(weights.sum() - 1.0, 0.0)
        return SubgradientCertificate(viol <= tol, np.arange(U.shape[0]), weights, viol)

    viol = 0.0
    off = ~in_I[:, None]
    if (off & pos).any():
        viol = max(viol, np.abs(P[off & pos]).max())
    if (off & ~pos).any():
        viol = max(viol, max(P[off & ~pos].max(), 0.0))
    weights = np.zeros(U.shape[0])
    for i in np.flatnonzero(in_I):
        row_pos = pos[i]
        weights[i] = P[i, row_pos].mean() if row_pos.any() else max(P[i].max(), 0.0)
        if row_pos.any():
            viol = max(viol, np.abs(P[i, row_pos] - weights[i]).max())
        if (~row_pos).any():
            viol = max(viol, max((P[i, ~row_pos] - weights[i]).max(), 0.0))
        viol = max(viol, -weights[i])
    viol = max(viol, abs(weights.sum() - 1.0))
    return SubgradientCertificate(viol <= tol, np.flatnonzero(in_I), weights[in_I], viol)


def check_source_condition(U_hat, A, B, tol=1e-8, nonnegative=False, max_size=2_000_000):
    """Search for ``Q`` with ``A^T Q B`` in the subdifferential at ``U_hat``.

    Solved as a linear program minimizing the largest violation ``t`` of the
    subdifferential characterization; ``satisfied`` iff ``t <= tol``.
    """
    U = _values(U_hat)
    A = as_operator(A).to_dense()
    B = _values(B)
    L, M = A.shape
    T, N = B.shape
    if U.shape != (M, N):
        raise ContractError("U_hat shape does not match A and B")
    if M * N * L * T > max_size:
        return SourceConditionResult(False, None, np.inf)

    # row-major vec: vec(A^T Q B) = kron(A^T, B^T) vec(Q)
    K = np.kron(A.T, B.T)
    scale = max(np.abs(U).max(), 1e-300)
    zero = np.abs(U) <= 1e-12 * scale
    sums = np.abs(U).sum(axis=1)
    all_zero = sums.max() == 0
    in_I = np.ones(M, dtype=bool) if all_zero else sums >= sums.max() * (1 - 1e-12)
    rows_I = np.flatnonzero(in_I)
    k = rows_I.size
    nq = L * T
    nvar = nq + k + 1
    col_w = {i: nq + r for r, i in enumerate(rows_I)}
    col_t = nvar - 1
    sign = np.sign(U)

    A_ub, b_ub = [], []

    def add(coef_q, w_idx, w_coef):
        row = np.zeros(nvar)
        row[:nq] = coef_q
        if w_idx is not None:
            row[w_idx] = w_coef
        row[col_t] = -1.0
        A_ub.append(row)
        b_ub.append(0.0)

    for i in range(M):
        for j in range(N):
            kq = K[i * N + j]
            if in_I[i]:
                w = col_w[i]
                if not zero[i, j]:
                    add(kq, w, -sign[i, j])
                    add(-kq, w, sign[i, j])
                else:
                    add(kq, w, -1.0)
                    if not nonnegative:
                        add(-kq, w, -1.0)
            else:
                add(kq, None, 0.0)
                if not (nonnegative and zero[i, j]):
                    add(-kq, None, 0.0)

    w_row = np.zeros(nvar)
    w_row[nq:nq + k] = 1.0
    if all_zero:
        A_ub.append(w_row)
        b_ub.append(1.0)
        A_eq = b_eq = None
    else:
        A_eq, b_eq = w_row[None, :], [1.0]
    bounds = [(None, None)] * nq + [(0, None)] * k + [(0, None)]
    c = np.zeros(nvar)
    c[col_t] = 1.0
    res = linprog(c, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return SourceConditionResult(False, None, np.inf)
    Q = res.x[:nq].reshape(L, T)
    resid = float(res.x[col_t])
    return SourceConditionResult(resid <= tol, Q, resid, A.T @ Q @ B)


def predict_asymptotic_support(A, W, B, tie_tol=1e-9) -> SupportMap:
    """Row-maximum positions of ``Y = A^T W B`` (ties within ``tie_tol * max|Y|``)."""
    A = as_operator(A)
    Y = A.adjoint(_values(W)) @ _values(B)
    scale = np.abs(Y).max() if Y.size else 0.0
    mask = Y >= Y.max(axis=1, keepdims=True) - tie_tol * scale
    return SupportMap(mask, np.argmax(Y, axis=1), tie_tol * scale)


def _unit_nonneg_columns(rng, T, N):
    B = rng.uniform(0.0, 1.0, size=(T, N))
    return B / np.linalg.norm(B, axis=0)


def build_recovery_instance(M, N, T, seed) -> RecoveryInstance:
    """Locally 1-sparse ground truth with an orthogonal ``A`` and unit atoms.

    Nonnegative unit-norm atoms satisfy the scaling condition; ``T >= N``
    keeps ``B`` injective so the ground truth is the unique exact fit.
    """
    if M < 1 or N < 2 or T < N:
        raise ContractError("need M >= 1, N >= 2 and T >= N")
    rng = np.random.default_rng(seed)
    A = ortho_group.rvs(M, random_state=rng) if M > 1 else np.ones((1, 1))
    B = _unit_nonneg_columns(rng, T, N)
    J = rng.integers(0, N, size=M)
    U = np.zeros((M, N))
    U[np.arange(M), J] = rng.uniform(0.5, 1.5, size=M)
    return RecoveryInstance(A, B, U, A @ U @ B.T, J)


def build_negative_instance(seed, M=3, N=4, T=6) -> RecoveryInstance:
    """Single-measurement (L = 1) instance where rows share one atom with unequal values.

    ``alternative`` spreads the same data evenly over all rows, fitting it
    exactly with a strictly smaller l1,inf norm.
    """
    if M < 2:
        raise ContractError("need at least two rows")
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 1.5, size=(1, M))
    B = _unit_nonneg_columns(rng, T, N)
    j0 = int(rng.integers(0, N))
    c = rng.uniform(0.2, 0.8, size=M)
    c[int(rng.integers(0, M))] = 1.0
    U = np.zeros((M, N))
    U[:, j0] = c
    W = a @ U @ B.T
    alt = np.zeros((M, N))
    alt[:, j0] = float((a @ c)[0]) / a.sum()
    return RecoveryInstance(a, B, U, W, np.full(M, j0), alt)


def check_1d_recovery(B, j, alpha_plus_beta, gamma=None, mode="l2", tol=1e-10):
    """Closed-form subgradient for recovering ``c * e_j`` from data ``b_j``.

    With ``c = 1 - (alpha + beta)``, p_n = ((gamma^2 (b_j - c b_j)) B)_n / (alpha + beta).
    Recovery requires ``p_j == 1`` and ``|p_n| <= 1`` elsewhere. In ``kl``
    mode the weights are ``gamma = 1 / sqrt(b_j)``.
    """
    B = _values(B)
    ab = float(alpha_plus_beta)
    if not 0 < ab < 1:
        raise ContractError("alpha + beta must lie in (0, 1)")
    w = B[:, j]
    if mode == "kl":
        if np.any(w <= 0):
            raise ContractError("kl mode needs strictly positive data")
        g2 = 1.0 / w
    elif mode == "l2":
        g2 = np.ones_like(w) if gamma is None else np.asarray(gamma, dtype=float) ** 2
    else:
        raise ContractError(f"unknown mode {mode!r}")
    c = 1.0 - ab
    p = (g2 * (w - c * w)) @ B / ab
    others = np.delete(p, j)
    ok = abs(p[j] - 1.0) <= tol and bool(np.all(np.abs(others) <= 1.0 + tol))
    return ok, p
