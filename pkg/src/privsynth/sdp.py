"""Interior-point solver for determinant-maximization programs.

Problem class: minimize ``sum_b w_b * (-log2 det X_b) + c^T x`` over a
parameter vector ``x`` holding symmetric matrix blocks (parameterized by
their lower triangles) and generic affine blocks, subject to

* linear matrix inequalities ``S_j(x) >= margin_j * I`` with ``S_j`` affine,
* scalar affine inequalities ``g_l(x) >= 0``,
* optional per-variable floors ``X_b >= margin_b * I``.

The solver is a log-barrier path-following method: for a decreasing barrier
parameter ``mu`` (schedule ``mu <- mu / 10``) it centers
``f(x) - mu * sum log det(slacks)`` with damped Newton steps and a
backtracking line search that keeps every slack positive definite. A wide
elementwise box barrier around all parameters bounds the subproblems even
when the objective is flat along feasible rays. All runs are deterministic:
the same problem, options and seed reproduce the iteration log bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

LN2 = math.log(2.0)


class SolverStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverOptions:
    """Tolerances and iteration budgets; defaults are the pinned contract values."""

    tol_gap: float = 1e-7          # duality measure mu*nu / max(1, |f|)
    tol_feas: float = 1e-8         # certificate eigenvalue floor
    max_outer: int = 60
    max_inner: int = 50
    mu_factor: float = 10.0
    mu_init: float | None = None   # None: max(1, |f(x0)| / nu)
    inner_tol: float = 1e-2        # decrement^2/2 <= inner_tol * mu ends centering
    armijo: float = 0.01
    backtrack: float = 0.5
    max_backtracks: int = 60
    regularization: float = 1e-12  # Hessian ridge, relative to its diagonal scale
    reg_retries: int = 3
    box_radius: float = 1e6        # times the problem scale, per parameter
    stall_steps: int = 3
    stall_rtol: float = 0.02
    seed: int | None = None        # find_feasible restart randomization only


def sym_param_count(n: int) -> int:
    return n * (n + 1) // 2


def sym_param_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the lower-triangle parameterization."""
    rows, cols = np.tril_indices(n)
    return rows, cols


def sym_to_matrix(params: np.ndarray, n: int) -> np.ndarray:
    rows, cols = sym_param_indices(n)
    M = np.zeros((n, n))
    M[rows, cols] = params
    M[cols, rows] = params
    return M


def matrix_to_sym_params(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    rows, cols = sym_param_indices(n)
    return np.asarray(M, dtype=float)[rows, cols]


@dataclass
class SymVariable:
    """Symmetric matrix block; n*(n+1)/2 parameters (lower triangle)."""

    name: str
    n: int
    logdet_weight: float
    psd_margin: float | None
    offset: int

    def __post_init__(self):
        self.num_params = sym_param_count(self.n)
        self.rows, self.cols = sym_param_indices(self.n)
        # E_a = alpha_a (e_i e_j^T + e_j e_i^T); alpha = 1/2 on the diagonal.
        self.alpha = np.where(self.rows == self.cols, 0.5, 1.0)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return sym_to_matrix(x[self.offset:self.offset + self.num_params], self.n)


@dataclass
class AffineVariable:
    """Generic parameter block entering constraints affinely (no logdet)."""

    name: str
    num_params: int
    offset: int
    shape: tuple | None = None


@dataclass
class LmiConstraint:
    """S(x) = constant + sum_v tensordot(x_v, terms[v]) >= margin * I."""

    name: str
    dim: int
    constant: np.ndarray
    margin: float = 0.0
    terms: dict[str, np.ndarray] = field(default_factory=dict)

    def add_term(self, var_name: str, tensor: np.ndarray) -> None:
        tensor = np.asarray(tensor, dtype=float)
        if tensor.ndim != 3 or tensor.shape[1:] != (self.dim, self.dim):
            raise ValueError(f"term tensor for {var_name} must be (p, {self.dim}, {self.dim})")
        self.terms[var_name] = tensor


@dataclass
class ScalarConstraint:
    """g(x) = constant + sum_v coeffs[v] . x_v >= 0."""

    name: str
    constant: float
    coeffs: dict[str, np.ndarray] = field(default_factory=dict)


class SdpProblem:
    """Container for variables, objective and constraints.

    Variables are registered in order; their parameters are concatenated into
    one global vector. The objective is sum of -log2 det terms (weights on
    symmetric variables) plus an affine term (coefficients per variable, in
    the same reported units as the logdet terms).
    """

    def __init__(self):
        self.sym_vars: dict[str, SymVariable] = {}
        self.affine_vars: dict[str, AffineVariable] = {}
        self.lmis: list[LmiConstraint] = []
        self.scalars: list[ScalarConstraint] = []
        self.affine_objective: dict[str, np.ndarray] = {}
        self._num_params = 0
        self.meta: dict = {}

    # ---- construction -------------------------------------------------

    def add_sym_var(self, name: str, n: int, logdet_weight: float = 0.0,
                    psd_margin: float | None = None) -> SymVariable:
        self._check_name(name)
        v = SymVariable(name=name, n=n, logdet_weight=float(logdet_weight),
                        psd_margin=psd_margin, offset=self._num_params)
        self.sym_vars[name] = v
        self._num_params += v.num_params
        return v

    def add_affine_var(self, name: str, num_params: int, shape: tuple | None = None) -> AffineVariable:
        self._check_name(name)
        v = AffineVariable(name=name, num_params=int(num_params),
                           offset=self._num_params, shape=shape)
        self.affine_vars[name] = v
        self._num_params += v.num_params
        return v

    def add_lmi(self, name: str, dim: int, constant: np.ndarray | None = None,
                margin: float = 0.0) -> LmiConstraint:
        constant = np.zeros((dim, dim)) if constant is None else np.asarray(constant, dtype=float)
        if constant.shape != (dim, dim):
            raise ValueError(f"LMI constant must be {dim}x{dim}")
        con = LmiConstraint(name=name, dim=dim, constant=constant, margin=float(margin))
        self.lmis.append(con)
        return con

    def add_scalar(self, name: str, constant: float,
                   coeffs: dict[str, np.ndarray] | None = None) -> ScalarConstraint:
        con = ScalarConstraint(name=name, constant=float(constant), coeffs=dict(coeffs or {}))
        self.scalars.append(con)
        return con

    def set_affine_objective(self, var_name: str, coeffs: np.ndarray) -> None:
        self.affine_objective[var_name] = np.asarray(coeffs, dtype=float)

    def _check_name(self, name: str) -> None:
        if name in self.sym_vars or name in self.affine_vars:
            raise ValueError(f"duplicate variable name {name!r}")

    # ---- queries -------------------------------------------------------

    @property
    def num_params(self) -> int:
        return self._num_params

    def variable(self, name: str):
        if name in self.sym_vars:
            return self.sym_vars[name]
        return self.affine_vars[name]

    def var_slice(self, name: str) -> slice:
        v = self.variable(name)
        return slice(v.offset, v.offset + v.num_params)

    def values(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Split a global parameter vector into named matrices / param blocks."""
        out: dict[str, np.ndarray] = {}
        for name, v in self.sym_vars.items():
            out[name] = v.matrix(x)
        for name, v in self.affine_vars.items():
            blk = x[v.offset:v.offset + v.num_params]
            out[name] = blk.reshape(v.shape) if v.shape else blk.copy()
        return out

    def scale(self) -> float:
        """Magnitude of the constant data; normalizes margins and box radii."""
        vals = [1.0]
        for con in self.lmis:
            if con.constant.size:
                vals.append(float(np.max(np.abs(con.constant))))
        for sc in self.scalars:
            if math.isfinite(sc.constant):
                vals.append(abs(sc.constant))
        return max(vals)

    def pack(self, values: dict[str, np.ndarray]) -> np.ndarray:
        """Global parameter vector from named matrices / parameter blocks."""
        x = np.zeros(self.num_params)
        for name, v in self.sym_vars.items():
            x[v.offset:v.offset + v.num_params] = matrix_to_sym_params(np.asarray(values[name]))
        for name, v in self.affine_vars.items():
            x[v.offset:v.offset + v.num_params] = np.asarray(values[name], dtype=float).reshape(-1)
        return x

    def dump(self, path: str) -> None:
        """Self-describing JSON dump of the full problem data."""
        import json
        doc = {
            "num_params": self.num_params,
            "sym_vars": [
                {"name": v.name, "n": v.n, "logdet_weight": v.logdet_weight,
                 "psd_margin": v.psd_margin, "offset": v.offset}
                for v in self.sym_vars.values()
            ],
            "affine_vars": [
                {"name": v.name, "num_params": v.num_params, "offset": v.offset,
                 "shape": list(v.shape) if v.shape else None}
                for v in self.affine_vars.values()
            ],
            "affine_objective": {k: v.tolist() for k, v in self.affine_objective.items()},
            "lmis": [
                {"name": c.name, "dim": c.dim, "margin": c.margin,
                 "constant": c.constant.tolist(),
                 "terms": {k: t.tolist() for k, t in c.terms.items()}}
                for c in self.lmis
            ],
            "scalars": [
                {"name": c.name, "constant": c.constant,
                 "coeffs": {k: v.tolist() for k, v in c.coeffs.items()}}
                for c in self.scalars
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class IterationRecord:
    iteration: int
    mu: float
    objective: float      # reported units (bits-equivalent)
    max_residual: float   # max constraint violation at the iterate (0 while interior)
    decrement: float      # Newton decrement, diagnostic only


@dataclass
class Residuals:
    max_psd_violation: float
    max_scalar_violation: float
    duality_measure: float


@dataclass
class SdpSolution:
    status: SolverStatus
    objective: float
    x: np.ndarray
    variables: dict[str, np.ndarray]
    residuals: Residuals
    iterations: list[IterationRecord]
    message: str = ""
    margin: float | None = None      # phase-1 slack margin (find_feasible only)
    mu_final: float = math.nan
    newton_steps: int = 0


# ---------------------------------------------------------------------------
# assembly plan


class _Plan:
    """Per-solve preprocessed views: index maps, stacked tensors, box radii."""

    def __init__(self, problem: SdpProblem, opts: SolverOptions,
                 phase1: bool, x0_hint: np.ndarray | None):
        self.problem = problem
        self.phase1 = phase1
        self.n = problem.num_params + (1 if phase1 else 0)
        self.t_idx = problem.num_params if phase1 else None

        # Internal affine objective in nats (reported values divide by ln 2).
        self.c = np.zeros(self.n)
        for name, coeffs in problem.affine_objective.items():
            sl = problem.var_slice(name)
            self.c[sl] = LN2 * coeffs
        if phase1:
            self.c[:] = 0.0
            self.c[self.t_idx] = LN2

        self.sym_list = list(problem.sym_vars.values())

        # LMI locals: global index array + stacked tensor (+ identity page for t).
        self.lmi_locals: list[tuple[LmiConstraint, np.ndarray, np.ndarray]] = []
        for con in problem.lmis:
            idx_parts = []
            tensor_parts = []
            for var_name, tensor in con.terms.items():
                v = problem.variable(var_name)
                idx_parts.append(np.arange(v.offset, v.offset + v.num_params))
                tensor_parts.append(tensor)
            if phase1:
                idx_parts.append(np.array([self.t_idx]))
                tensor_parts.append(np.eye(con.dim)[None, :, :])
            idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=int)
            tensor = np.concatenate(tensor_parts, axis=0) if tensor_parts \
                else np.zeros((0, con.dim, con.dim))
            self.lmi_locals.append((con, idx, tensor))

        # Scalar locals.
        self.scalar_locals: list[tuple[ScalarConstraint, np.ndarray, np.ndarray]] = []
        for sc in problem.scalars:
            idx_parts, coef_parts = [], []
            for var_name, coeffs in sc.coeffs.items():
                v = problem.variable(var_name)
                idx_parts.append(np.arange(v.offset, v.offset + v.num_params))
                coef_parts.append(np.asarray(coeffs, dtype=float))
            if phase1:
                idx_parts.append(np.array([self.t_idx]))
                coef_parts.append(np.ones(1))
            idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=int)
            coef = np.concatenate(coef_parts) if coef_parts else np.zeros(0)
            self.scalar_locals.append((sc, idx, coef))

        # Barrier degree: LMI dims + PSD floors + scalars + box terms.
        nu = sum(con.dim for con in problem.lmis)
        nu += sum(v.n for v in self.sym_list if v.psd_margin is not None)
        nu += len(problem.scalars)
        nu += 2 * self.n
        self.nu = nu

        # Box radii; widened if the start point is large.
        scale = problem.scale()
        r = opts.box_radius * scale
        if x0_hint is not None and x0_hint.size:
            r = max(r, 10.0 * float(np.max(np.abs(x0_hint))))
        self.box_r = np.full(self.n, r)

    # -- slack evaluation ------------------------------------------------

    def lmi_slack(self, con: LmiConstraint, idx: np.ndarray, tensor: np.ndarray,
                  x: np.ndarray) -> np.ndarray:
        S = con.constant.copy()
        if con.margin:
            S[np.diag_indices_from(S)] -= con.margin
        if idx.size:
            S += np.tensordot(x[idx], tensor, axes=(0, 0))
        return S

    def sym_slack(self, v: SymVariable, x: np.ndarray) -> np.ndarray:
        S = v.matrix(x)
        shift = (v.psd_margin or 0.0) - (x[self.t_idx] if self.phase1 else 0.0)
        if shift:
            S[np.diag_indices_from(S)] -= shift
        return S


def _chol_or_none(M: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None


def _logdet_from_chol(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def _inv_from_chol(L: np.ndarray) -> np.ndarray:
    Linv = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return Linv.T @ Linv


def _sym_gvec(Minv: np.ndarray, v: SymVariable) -> np.ndarray:
    """Gradient of log det along the lower-triangle parameterization."""
    return 2.0 * v.alpha * Minv[v.rows, v.cols]


def _sym_hmat(Minv: np.ndarray, v: SymVariable) -> np.ndarray:
    """Hessian of -log det: H_ab = tr(Minv E_a Minv E_b) via index products."""
    I, J = v.rows, v.cols
    T1 = Minv[np.ix_(I, I)] * Minv[np.ix_(J, J)]
    T1 += Minv[np.ix_(I, J)] * Minv[np.ix_(J, I)]
    T1 *= 2.0 * (v.alpha[:, None] * v.alpha[None, :])
    return T1


def _lmi_newton_parts(L: np.ndarray, tensor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-parameter traces and vectorized congruences for one LMI slack.

    Returns (trvec, V) with trvec[k] = tr(S^{-1} T_k) and V[k] = vec(W_k),
    W_k = L^{-1} T_k L^{-T}, so that the barrier Hessian block is V V^T.
    """
    p, d, _ = tensor.shape
    if p == 0:
        return np.zeros(0), np.zeros((0, 0))
    B = solve_triangular(L, tensor.transpose(1, 0, 2).reshape(d, p * d), lower=True)
    B = B.reshape(d, p, d)
    Ct = solve_triangular(L, B.transpose(2, 1, 0).reshape(d, p * d), lower=True)
    Ct = Ct.reshape(d, p, d)            # Ct[j, k, i] = W_k[i, j]
    W = Ct.transpose(1, 2, 0)           # (p, d, d)
    trvec = np.einsum("kii->k", W)
    return trvec, W.reshape(p, d * d)


class _Infeasible(Exception):
    pass


def _evaluate(plan: _Plan, x: np.ndarray, mu: float, order: int):
    """psi, f, grad, hess at x; raises _Infeasible outside the domain.

    order 0: values only; 1: plus gradient; 2: plus Hessian.
    """
    n = plan.n
    grad = np.zeros(n) if order >= 1 else None
    hess = np.zeros((n, n)) if order >= 2 else None

    # Box barrier.
    hi = plan.box_r - x
    lo = plan.box_r + x
    if np.min(hi) <= 0.0 or np.min(lo) <= 0.0:
        raise _Infeasible("box")
    barrier = -float(np.sum(np.log(hi)) + np.sum(np.log(lo)))
    if order >= 1:
        grad += mu * (1.0 / hi - 1.0 / lo)
    if order >= 2:
        hess[np.diag_indices(n)] += mu * (1.0 / hi ** 2 + 1.0 / lo ** 2)

    f = float(plan.c @ x)
    if order >= 1:
        grad += plan.c

    # Symmetric variables: objective logdet and PSD floor barrier.
    for v in plan.sym_list:
        sl = slice(v.offset, v.offset + v.num_params)
        if v.logdet_weight > 0.0 and not plan.phase1:
            M = v.matrix(x)
            L = _chol_or_none(M)
            if L is None:
                raise _Infeasible(f"logdet domain {v.name}")
            f += v.logdet_weight * (-_logdet_from_chol(L))
            if order >= 1:
                Minv = _inv_from_chol(L)
                grad[sl] += -v.logdet_weight * _sym_gvec(Minv, v)
                if order >= 2:
                    hess[sl, sl] += v.logdet_weight * _sym_hmat(Minv, v)
        if v.psd_margin is not None:
            S = plan.sym_slack(v, x)
            L = _chol_or_none(S)
            if L is None:
                raise _Infeasible(f"psd floor {v.name}")
            barrier += -_logdet_from_chol(L)
            if order >= 1:
                Sinv = _inv_from_chol(L)
                grad[sl] += -mu * _sym_gvec(Sinv, v)
                if plan.phase1:
                    grad[plan.t_idx] += -mu * float(np.trace(Sinv))
                if order >= 2:
                    hess[sl, sl] += mu * _sym_hmat(Sinv, v)
                    if plan.phase1:
                        S2 = Sinv @ Sinv
                        cross = mu * 2.0 * v.alpha * S2[v.rows, v.cols]
                        hess[sl, plan.t_idx] += cross
                        hess[plan.t_idx, sl] += cross
                        hess[plan.t_idx, plan.t_idx] += mu * float(np.trace(S2))

    # General LMIs.
    for con, idx, tensor in plan.lmi_locals:
        S = plan.lmi_slack(con, idx, tensor, x)
        L = _chol_or_none(S)
        if L is None:
            raise _Infeasible(f"lmi {con.name}")
        barrier += -_logdet_from_chol(L)
        if order >= 1 and idx.size:
            trvec, V = _lmi_newton_parts(L, tensor)
            grad[idx] += -mu * trvec
            if order >= 2:
                hess[np.ix_(idx, idx)] += mu * (V @ V.T)

    # Scalar inequalities.
    for sc, idx, coef in plan.scalar_locals:
        g = sc.constant + (float(coef @ x[idx]) if idx.size else 0.0)
        if g <= 0.0:
            raise _Infeasible(f"scalar {sc.name}")
        barrier += -math.log(g)
        if order >= 1 and idx.size:
            grad[idx] += -mu * coef / g
            if order >= 2:
                hess[np.ix_(idx, idx)] += mu * np.outer(coef, coef) / (g * g)

    psi = f + mu * barrier
    return psi, f, grad, hess


def _solve_newton(hess: np.ndarray, grad: np.ndarray, opts: SolverOptions):
    """Newton direction with ridge retries; returns (d, decrement_sq) or None."""
    diag_scale = max(1.0, float(np.max(np.diag(hess))))
    ridge = opts.regularization * diag_scale
    H = hess
    for attempt in range(opts.reg_retries + 1):
        try:
            cf = cho_factor(H, lower=True)
        except np.linalg.LinAlgError:
            H = hess + ridge * np.eye(hess.shape[0])
            ridge *= 1e3
            continue
        d = -cho_solve(cf, grad)
        dec_sq = float(-grad @ d)
        if dec_sq < 0.0:
            # Indefiniteness slipped past the factorization: regularize more.
            H = hess + ridge * np.eye(hess.shape[0])
            ridge *= 1e3
            continue
        return d, dec_sq
    return None


def _barrier_loop(problem: SdpProblem, x0: np.ndarray, opts: SolverOptions,
                  phase1: bool = False, early_exit=None):
    """Shared path-following engine; returns (status, x, log, mu, message, nsteps)."""
    plan = _Plan(problem, opts, phase1, x0)
    x = x0.copy()

    try:
        psi, f, _, _ = _evaluate(plan, x, 1.0, 0)
    except _Infeasible as exc:
        return (SolverStatus.NUMERICAL_FAILURE, x, [], math.nan,
                f"start point outside domain ({exc})", 0, plan)

    mu = opts.mu_init if opts.mu_init is not None else max(1.0, abs(f) / plan.nu)
    log: list[IterationRecord] = []
    it = 0
    status = SolverStatus.MAX_ITERATIONS
    message = "outer iteration limit reached"

    for outer in range(opts.max_outer):
        dec_history: list[float] = []
        for inner in range(opts.max_inner):
            try:
                psi, f, grad, hess = _evaluate(plan, x, mu, 2)
            except _Infeasible as exc:
                return (SolverStatus.NUMERICAL_FAILURE, x, log, mu,
                        f"iterate left the domain ({exc})", it, plan)
            nd = _solve_newton(hess, grad, opts)
            if nd is None:
                return (SolverStatus.NUMERICAL_FAILURE, x, log, mu,
                        "Newton system factorization failed", it, plan)
            d, dec_sq = nd

            if 0.5 * dec_sq <= opts.inner_tol * mu:
                break

            # Backtracking: keep every slack PD, then Armijo decrease.
            alpha = 1.0
            accepted = False
            gd = float(grad @ d)
            for _ in range(opts.max_backtracks):
                try:
                    psi_trial, _, _, _ = _evaluate(plan, x + alpha * d, mu, 0)
                except _Infeasible:
                    alpha *= opts.backtrack
                    continue
                if psi_trial <= psi + opts.armijo * alpha * gd:
                    accepted = True
                    break
                alpha *= opts.backtrack
            if not accepted:
                return (SolverStatus.NUMERICAL_FAILURE, x, log, mu,
                        "line search failed to make progress", it, plan)

            x = x + alpha * d
            it += 1
            _, f, _, _ = _evaluate(plan, x, mu, 0)
            log.append(IterationRecord(iteration=it, mu=mu, objective=f / LN2,
                                       max_residual=0.0, decrement=math.sqrt(dec_sq)))

            if early_exit is not None and early_exit(x):
                return (SolverStatus.OPTIMAL, x, log, mu, "early exit", it, plan)

            # Flat directions stall the decrement; move on to the next mu.
            dec_history.append(dec_sq)
            if len(dec_history) > opts.stall_steps:
                dec_history.pop(0)
                lo, hi = min(dec_history), max(dec_history)
                if hi > 0 and (hi - lo) <= opts.stall_rtol * hi:
                    break

        gap = mu * plan.nu / max(1.0, abs(f))
        if gap <= opts.tol_gap:
            status = SolverStatus.OPTIMAL
            message = "duality measure below tolerance"
            break
        mu /= opts.mu_factor

    return status, x, log, mu, message, it, plan


# ---------------------------------------------------------------------------
# public entry points


def solve(problem: SdpProblem, opts: SolverOptions | None = None,
          init: np.ndarray | dict | None = None) -> SdpSolution:
    """Minimize the determinant-maximization objective over the feasible set.

    ``init`` may be a global parameter vector or a dict of named values; it
    must be strictly feasible. Without an init, a phase-1 search is run
    first. Returns an SdpSolution; the iteration log is deterministic for
    identical problem, options and init/seed.
    """
    opts = opts or SolverOptions()
    x0 = None
    if init is not None:
        x0 = problem.pack(init) if isinstance(init, dict) else np.asarray(init, dtype=float).copy()
        if not _strictly_feasible(problem, x0):
            x0 = None
    if x0 is None:
        feas = find_feasible(problem, opts, seed=opts.seed)
        if feas.status is not SolverStatus.OPTIMAL:
            return SdpSolution(
                status=feas.status if feas.status is SolverStatus.INFEASIBLE
                else SolverStatus.NUMERICAL_FAILURE,
                objective=math.nan, x=feas.x, variables=problem.values(feas.x),
                residuals=_residuals(problem, feas.x, math.nan),
                iterations=feas.iterations, message=f"phase 1: {feas.message}")
        x0 = feas.x

    status, x, log, mu, message, nsteps, plan = _barrier_loop(problem, x0, opts)
    f_bits = _objective_bits(problem, x)
    sol = SdpSolution(
        status=status, objective=f_bits, x=x, variables=problem.values(x),
        residuals=_residuals(problem, x, mu * plan.nu / max(1.0, abs(f_bits * LN2))),
        iterations=log, message=message, mu_final=mu, newton_steps=nsteps)
    return sol


def find_feasible(problem: SdpProblem, opts: SolverOptions | None = None,
                  seed: int | None = None, delta_init: float | None = None) -> SdpSolution:
    """Phase-1 search for a strictly feasible point.

    Minimizes an added slack shift t over the relaxed cones S(x) + t I >= ...,
    stopping as soon as t is safely negative. Status OPTIMAL means a point
    interior by at least ``delta_init`` (default 1e-8 * problem scale) was
    found; INFEASIBLE means the phase-1 optimum proves no such point exists.
    With a ``seed`` the start point is randomized (restart sampling).
    """
    opts = opts or SolverOptions()
    scale = problem.scale()
    target = delta_init if delta_init is not None else 1e-8 * scale

    n = problem.num_params
    rng = np.random.default_rng(seed) if seed is not None else None
    x0 = np.zeros(n + 1)
    if rng is not None:
        x0[:n] = rng.uniform(-0.5 * scale, 0.5 * scale, size=n)

    # Shift t0 until every relaxed slack is comfortably interior.
    t0 = 0.0
    for con in problem.lmis:
        S = con.constant.copy()
        for var_name, tensor in con.terms.items():
            v = problem.variable(var_name)
            blk = x0[v.offset:v.offset + v.num_params]
            S += np.tensordot(blk, tensor, axes=(0, 0))
        w = np.linalg.eigvalsh(0.5 * (S + S.T))
        t0 = max(t0, con.margin - float(w[0]))
    for name, v in problem.sym_vars.items():
        if v.psd_margin is not None:
            w = np.linalg.eigvalsh(v.matrix(x0))
            t0 = max(t0, v.psd_margin - float(w[0]))
    for sc in problem.scalars:
        g = sc.constant
        for var_name, coeffs in sc.coeffs.items():
            v = problem.variable(var_name)
            g += float(np.asarray(coeffs) @ x0[v.offset:v.offset + v.num_params])
        t0 = max(t0, -g)
    x0[n] = t0 + 1.0 + 0.1 * scale

    def reached(xcur: np.ndarray) -> bool:
        return xcur[n] <= -2.0 * target

    status, x, log, mu, message, nsteps, plan = _barrier_loop(
        problem, x0, opts, phase1=True, early_exit=reached)

    t_final = float(x[n])
    x_point = x[:n].copy()
    if t_final <= -target:
        margin = -t_final
        return SdpSolution(status=SolverStatus.OPTIMAL, objective=t_final,
                           x=x_point, variables=problem.values(x_point),
                           residuals=_residuals(problem, x_point, math.nan),
                           iterations=log, message="feasible point found",
                           margin=margin, mu_final=mu, newton_steps=nsteps)
    if status is SolverStatus.OPTIMAL or status is SolverStatus.MAX_ITERATIONS:
        worst = _worst_constraint(problem, x_point)
        final_status = (SolverStatus.INFEASIBLE if status is SolverStatus.OPTIMAL
                        else SolverStatus.MAX_ITERATIONS)
        return SdpSolution(status=final_status, objective=t_final, x=x_point,
                           variables=problem.values(x_point),
                           residuals=_residuals(problem, x_point, math.nan),
                           iterations=log,
                           message=f"no strictly feasible point (worst constraint: {worst})",
                           margin=None, mu_final=mu, newton_steps=nsteps)
    return SdpSolution(status=status, objective=t_final, x=x_point,
                       variables=problem.values(x_point),
                       residuals=_residuals(problem, x_point, math.nan),
                       iterations=log, message=message, margin=None,
                       mu_final=mu, newton_steps=nsteps)


# ---------------------------------------------------------------------------
# independent certificate checking


@dataclass
class ConstraintCheck:
    name: str
    kind: str               # "lmi" | "psd_floor" | "scalar"
    min_slack: float        # min slack eigenvalue (lmi/psd) or slack value (scalar)


@dataclass
class CertificateReport:
    ok: bool
    objective: float
    checks: list[ConstraintCheck]
    max_psd_violation: float
    max_scalar_violation: float


def check_solution(problem: SdpProblem, x: np.ndarray | dict,
                   tol_psd: float = 1e-8, tol_scalar: float = 1e-8) -> CertificateReport:
    """Recompute every residual from scratch (eigenvalue route, slogdet objective).

    Deliberately avoids the solver's Cholesky/assembly code paths so it can
    serve as an independent certificate of the returned point.
    """
    xv = problem.pack(x) if isinstance(x, dict) else np.asarray(x, dtype=float)
    checks: list[ConstraintCheck] = []
    max_psd = 0.0
    max_scalar = 0.0

    for con in problem.lmis:
        S = con.constant.copy()
        for var_name, tensor in con.terms.items():
            v = problem.variable(var_name)
            blk = xv[v.offset:v.offset + v.num_params]
            for k in range(blk.shape[0]):
                S = S + blk[k] * tensor[k]
        S = S - con.margin * np.eye(con.dim)
        w = np.linalg.eigvalsh(0.5 * (S + S.T))
        mins = float(w[0])
        checks.append(ConstraintCheck(con.name, "lmi", mins))
        max_psd = max(max_psd, -mins)

    for name, v in problem.sym_vars.items():
        if v.psd_margin is None:
            continue
        S = v.matrix(xv) - v.psd_margin * np.eye(v.n)
        w = np.linalg.eigvalsh(S)
        mins = float(w[0])
        checks.append(ConstraintCheck(name, "psd_floor", mins))
        max_psd = max(max_psd, -mins)

    for sc in problem.scalars:
        g = sc.constant
        for var_name, coeffs in sc.coeffs.items():
            v = problem.variable(var_name)
            g += float(np.asarray(coeffs) @ xv[v.offset:v.offset + v.num_params])
        checks.append(ConstraintCheck(sc.name, "scalar", g))
        max_scalar = max(max_scalar, -g)

    objective = _objective_bits(problem, xv, use_slogdet=True)
    ok = max_psd <= tol_psd and max_scalar <= tol_scalar
    return CertificateReport(ok=ok, objective=objective, checks=checks,
                             max_psd_violation=max_psd, max_scalar_violation=max_scalar)


# ---------------------------------------------------------------------------
# shared helpers


def _objective_bits(problem: SdpProblem, x: np.ndarray, use_slogdet: bool = False) -> float:
    f = 0.0
    for name, v in problem.sym_vars.items():
        if v.logdet_weight == 0.0:
            continue
        M = v.matrix(x)
        if use_slogdet:
            sign, ld = np.linalg.slogdet(M)
            if sign <= 0:
                return math.inf
            f += v.logdet_weight * (-ld / LN2)
        else:
            L = _chol_or_none(M)
            if L is None:
                return math.inf
            f += v.logdet_weight * (-_logdet_from_chol(L) / LN2)
    for name, coeffs in problem.affine_objective.items():
        sl = problem.var_slice(name)
        f += float(np.asarray(coeffs) @ x[sl])
    return f


def _strictly_feasible(problem: SdpProblem, x: np.ndarray) -> bool:
    rep = check_solution(problem, x, tol_psd=0.0, tol_scalar=0.0)
    if not rep.ok:
        return False
    # logdet domains must also be open.
    for v in problem.sym_vars.values():
        if v.logdet_weight > 0.0 and _chol_or_none(v.matrix(x)) is None:
            return False
    return all(c.min_slack > 0.0 for c in rep.checks)


def _residuals(problem: SdpProblem, x: np.ndarray, duality: float) -> Residuals:
    rep = check_solution(problem, x)
    return Residuals(max_psd_violation=rep.max_psd_violation,
                     max_scalar_violation=rep.max_scalar_violation,
                     duality_measure=duality)


def _worst_constraint(problem: SdpProblem, x: np.ndarray) -> str:
    """Name the constraint to blame for phase-1 infeasibility.

    Among the constraints whose slack is comparable to the most violated
    one, explicit scalar constraints are blamed before LMIs and LMIs before
    structural positivity floors: a floor can only end up binding at the
    phase-1 optimum because some requested constraint pushes against it.
    """
    rep = check_solution(problem, x)
    worst_val = min((c.min_slack for c in rep.checks), default=math.inf)
    cutoff = 0.5 * worst_val if worst_val < 0 else worst_val
    rank = {"scalar": 0, "lmi": 1, "psd_floor": 2}
    candidates = [c for c in rep.checks if c.min_slack <= cutoff]
    if not candidates:
        return ""
    best = min(candidates, key=lambda c: (rank.get(c.kind, 3), c.min_slack))
    return best.name


def write_iteration_csv(solution: SdpSolution, path: str,
                        header_comment: str | None = None) -> None:
    """Iteration log as CSV: iter, mu, objective, max_residual."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("iter,mu,objective,max_residual\n")
        for rec in solution.iterations:
            fh.write(f"{rec.iteration},{rec.mu:.16e},{rec.objective:.16e},"
                     f"{rec.max_residual:.16e}\n")
