"""Double-split ADMM for the row-capped, l1-penalized least-squares problem

    min_U  1/2 ||A U B^T - W||_F^2 + beta * sum(U)
    s.t.   U >= 0,  sum_j U[i, j] <= v_cap  for every row i.

The splits are ``D = U`` (carries the constraints and the l1 term) and
``Z = U B^T`` (carries the data term), with scaled duals ``P`` and ``Q``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as sla
from scipy.optimize import nnls

from .model import ContractError, _values, as_operator
from .projection import RowProjectionParams, project_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    v_cap: float
    beta: float = 0.1
    lambda0: float = 0.5
    mu0: float = 0.1
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    eta1: float = 10.0
    eta2: float = 10.0
    tau_incr: float = 2.0
    tau_decr: float = 2.0
    max_iter: int = 5000
    adapt_freeze_iter: int = 100
    penalty_range: float = 100.0

    def __post_init__(self):
        if not self.v_cap > 0:
            raise ContractError("v_cap must be positive")
        if self.beta < 0:
            raise ContractError("beta must be nonnegative")
        if not (self.lambda0 > 0 and self.mu0 > 0):
            raise ContractError("penalties must be positive")
        if not (self.eps_abs > 0 and self.eps_rel >= 0):
            raise ContractError("tolerances must be positive")
        if not (self.eta1 > 1 and self.eta2 > 1):
            raise ContractError("eta thresholds must exceed 1")
        if not (self.tau_incr > 1 and self.tau_decr > 1):
            raise ContractError("tau factors must exceed 1")
        if not self.penalty_range >= 1:
            raise ContractError("penalty_range must be at least 1")
        if self.max_iter < 1 or self.adapt_freeze_iter < 0:
            raise ContractError("iteration counts must be positive")


@dataclass
class SolverState:
    U: np.ndarray
    D: np.ndarray
    Z: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    lam: float
    mu: float
    R1: np.ndarray
    R2: np.ndarray
    S: np.ndarray
    D_old: np.ndarray
    Z_old: np.ndarray
    iter: int = 0

    @classmethod
    def zeros(cls, M, N, T, lam, mu):
        z_mn = np.zeros((M, N))
        z_mt = np.zeros((M, T))
        return cls(U=z_mn.copy(), D=z_mn.copy(), Z=z_mt.copy(), P=z_mn.copy(),
                   Q=z_mt.copy(), lam=lam, mu=mu, R1=z_mn.copy(), R2=z_mt.copy(),
                   S=z_mn.copy(), D_old=z_mn.copy(), Z_old=z_mt.copy())


@dataclass
class SolveReport:
    iterations: int
    stop_reason: str
    residual_history: np.ndarray
    tolerance_history: np.ndarray
    penalty_history: list
    objective: float
    u_iterate: np.ndarray = field(repr=False, default=None)
    lam: float = 0.0
    mu: float = 0.0


class _Factors:
    """Cached solvers for the two linear subproblems at the current (lam, mu)."""

    def __init__(self, A, B):
        self.A = A
        self.BtB = B.T @ B
        self.key_u = None
        self.key_z = None

    def u_solver(self, lam, mu):
        if self.key_u != (lam, mu):
            n = self.BtB.shape[0]
            self._cho = sla.cho_factor(lam * np.eye(n) + mu * self.BtB)
            self.key_u = (lam, mu)
        return self._cho

    def z_solver(self, mu):
        if self.key_z != mu:
            self._zsolve = self.A.normal_solver(mu)
            self.key_z = mu
        return self._zsolve


def update_U(state: SolverState, B, factor=None) -> np.ndarray:
    """Solve ``U (lam I + mu B^T B) = lam (D - P) + mu (Z - Q) B``."""
    B = _values(B)
    rhs = state.lam * (state.D - state.P) + state.mu * (state.Z - state.Q) @ B
    if factor is None:
        n = B.shape[1]
        factor = sla.cho_factor(state.lam * np.eye(n) + state.mu * B.T @ B)
    # the system matrix is symmetric, so the right solve is a left solve on rhs^T
    return sla.cho_solve(factor, rhs.T).T


def update_D(state: SolverState, params: SolverParams, mask=None) -> np.ndarray:
    p = RowProjectionParams(v_cap=params.v_cap, beta=params.beta, lam=state.lam)
    return project_matrix(state.U + state.P, p, mask=mask)


def update_Z(state: SolverState, A, W, B, solver=None, AtW=None) -> np.ndarray:
    """Solve ``(A^T A + mu I) Z = A^T W + mu (U B^T + Q)``."""
    A = as_operator(A)
    if solver is None:
        solver = A.normal_solver(state.mu)
    if AtW is None:
        AtW = A.adjoint(_values(W))
    return solver(AtW + state.mu * (state.U @ _values(B).T + state.Q))


def compute_residuals(state: SolverState, B):
    B = _values(B)
    R1 = state.lam * (state.D - state.U)
    R2 = state.mu * (state.Z - state.U @ B.T)
    S = state.lam * (state.D_old - state.D) + state.mu * (state.Z_old - state.Z) @ B
    return R1, R2, S


def update_tolerances(state: SolverState, B, eps_abs, eps_rel):
    B = _values(B)
    M, N = state.U.shape
    T = state.Z.shape[1]
    nU = np.linalg.norm(state.U)
    e1 = np.sqrt(M * N) * eps_abs + eps_rel * max(nU, np.linalg.norm(state.D), 0.0)
    e2 = np.sqrt(M * T) * eps_abs + eps_rel * max(
        np.linalg.norm(state.U @ B.T), np.linalg.norm(state.Z), 0.0)
    ed = np.sqrt(M * N) * eps_abs + eps_rel * np.linalg.norm(
        state.lam * state.P + state.mu * state.Q @ B)
    return e1, e2, ed


def dual_updates(state: SolverState, B):
    B = _values(B)
    P = state.P - (state.D - state.U)
    Q = state.Q - (state.Z - state.U @ B.T)
    return P, Q


def adapt_penalties(state: SolverState, params: SolverParams):
    """Residual-balancing update of (lam, mu) with matching rescaling of (P, Q).

    A penalty is only moved while it stays within ``penalty_range`` of its
    initial value.
    """
    lam, mu, P, Q = state.lam, state.mu, state.P, state.Q
    if state.iter >= params.adapt_freeze_iter:
        return lam, mu, P, Q
    r1 = np.linalg.norm(state.R1)
    r2 = np.linalg.norm(state.R2)
    s = np.linalg.norm(state.S)
    lam_hi, lam_lo = params.lambda0 * params.penalty_range, params.lambda0 / params.penalty_range
    mu_hi, mu_lo = params.mu0 * params.penalty_range, params.mu0 / params.penalty_range
    if r1 > params.eta1 * s and lam * params.tau_incr <= lam_hi:
        lam, P = lam * params.tau_incr, P / params.tau_incr
    elif s > params.eta1 * r1 and lam / params.tau_decr >= lam_lo:
        lam, P = lam / params.tau_decr, P * params.tau_decr
    if r2 > params.eta2 * s and mu * params.tau_incr <= mu_hi:
        mu, Q = mu * params.tau_incr, Q / params.tau_incr
    elif s > params.eta2 * r2 and mu / params.tau_decr >= mu_lo:
        mu, Q = mu / params.tau_decr, Q * params.tau_decr
    return lam, mu, P, Q


def suboptimality_bound(state: SolverState, d_estimate) -> float:
    """Upper bound on objective suboptimality given ``||U - U*||_F <= d_estimate``."""
    if d_estimate < 0:
        raise ContractError("d_estimate must be nonnegative")
    return float(np.linalg.norm(state.P) * np.linalg.norm(state.R1)
                 + np.linalg.norm(state.Q) * np.linalg.norm(state.R2)
                 + d_estimate * np.linalg.norm(state.S))


def objective(A, U, B, W, beta) -> float:
    A = as_operator(A)
    U = _values(U)
    resid = A.apply(U @ _values(B).T) - _values(W)
    return float(0.5 * np.sum(resid ** 2) + beta * U.sum())


def data_fidelity(A, U, B, W) -> float:
    return objective(A, U, B, W, 0.0)


def _check_dims(A, B, W):
    L, M = A.out_dim, A.in_dim
    T, N = B.shape
    if W.shape != (L, T):
        raise ContractError(f"W has shape {W.shape}, expected {(L, T)}")
    return L, M, N, T


def solve(A, B, W, params: SolverParams, mask=None, callback=None):
    """Run the ADMM iteration.

    Returns ``(D, report)``. ``D`` is the constrained split variable, which is
    exactly feasible; the unconstrained ``U`` iterate is in ``report.u_iterate``.
    ``mask`` restricts the support (entries where it is False stay zero).
    If ``max_iter`` is reached, the iterate with the smallest normalized
    residual is returned with ``stop_reason == "max_iter"``.
    """
    A = as_operator(A)
    B = _values(B)
    W = _values(W)
    L, M, N, T = _check_dims(A, B, W)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (M, N):
            raise ContractError("mask shape must match U")

    st = SolverState.zeros(M, N, T, params.lambda0, params.mu0)
    factors = _Factors(A, B)
    AtW = A.adjoint(W)
    res_hist, tol_hist = [], []
    penalties = [(0, st.lam, st.mu)]
    best = (np.inf, st.D.copy(), st.U.copy())
    stop_reason = "max_iter"

    for k in range(params.max_iter):
        st.iter = k
        st.D_old, st.Z_old = st.D, st.Z
        st.U = update_U(st, B, factors.u_solver(st.lam, st.mu))
        st.D = update_D(st, params, mask)
        st.Z = update_Z(st, A, W, B, factors.z_solver(st.mu), AtW)
        st.R1, st.R2, st.S = compute_residuals(st, B)
        st.P, st.Q = dual_updates(st, B)

        norms = (np.linalg.norm(st.R1), np.linalg.norm(st.R2), np.linalg.norm(st.S))
        tols = update_tolerances(st, B, params.eps_abs, params.eps_rel)
        res_hist.append(norms)
        tol_hist.append(tols)
        if callback is not None:
            callback(st)

        score = max(n / t for n, t in zip(norms, tols))
        if score < best[0]:
            best = (score, st.D.copy(), st.U.copy())
        if score <= 1.0:
            stop_reason = "converged"
            break

        lam, mu, st.P, st.Q = adapt_penalties(st, params)
        if (lam, mu) != (st.lam, st.mu):
            st.lam, st.mu = lam, mu
            penalties.append((k + 1, lam, mu))

    if stop_reason == "converged":
        D, U = st.D, st.U
    else:
        D, U = best[1], best[2]
        log.info("ADMM stopped at max_iter=%d (best residual ratio %.3g)",
                 params.max_iter, best[0])

    report = SolveReport(
        iterations=len(res_hist),
        stop_reason=stop_reason,
        residual_history=np.asarray(res_hist),
        tolerance_history=np.asarray(tol_hist),
        penalty_history=penalties,
        objective=objective(A, D, B, W, params.beta),
        u_iterate=U,
        lam=st.lam,
        mu=st.mu,
    )
    return D, report


def debias_on_support(A, B, W, support, params: SolverParams | None = None,
                      max_dense=4_000_000):
    """Unregularized nonnegative fit restricted to ``support``.

    ``support`` is a boolean ``M x N`` mask or an object with a ``mask``
    attribute. Returns ``(U, report)``. When the restricted least-squares
    system has at most ``max_dense`` entries it is solved exactly with an
    active-set NNLS and ``report`` is None; otherwise the ADMM runs with
    ``beta = 0``, an inactive row cap and fixed penalties.
    """
    A = as_operator(A)
    B = _values(B)
    W = _values(W)
    mask = np.asarray(getattr(support, "mask", support), dtype=bool)
    M, N = A.in_dim, B.shape[1]
    if mask.shape != (M, N):
        raise ContractError("support mask shape must match U")
    U = np.zeros(mask.shape)
    if not mask.any():
        return U, None
    rows, cols = np.nonzero(mask)
    L, T = W.shape
    if rows.size * L * T <= max_dense:
        Ad = A.to_dense()
        # column k of the system is vec(A[:, i] b_j^T) for the k-th active (i, j)
        K = (Ad[:, rows][:, None, :] * B[:, cols][None, :, :]).reshape(L * T, rows.size)
        x, _ = nnls(K, W.ravel(), maxiter=50 * rows.size)
        U[rows, cols] = x
        return U, None
    cap = 1e6 * max(1.0, float(np.linalg.norm(W)))
    base = params if params is not None else SolverParams(v_cap=cap)
    params = replace(base, v_cap=cap, beta=0.0, adapt_freeze_iter=0)
    return solve(A, B, W, params, mask=mask)
