"""Privacy mechanism synthesis: program assembly, solving, extraction.

The synthesized mechanism discloses Z = G Y + V (per-step output matrices
G_1..G_K on the block diagonal, V a horizon-correlated zero-mean Gaussian)
and R = U + H (H zero-mean Gaussian over the full input stack). The design
program minimizes the information the disclosed stack leaks about the
private stack minus the entropy injected into the inputs, subject to
output/input distortion budgets, as one determinant-maximization problem.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import __version__ as _version
from . import sdp
from .gauss import GaussianJoint, entropy, mutual_information, HALF_LOG2_2PIE
from .lift import LiftedSystem, build_lift, output_moments, joint_ZS_moments
from .model import SystemModel, SynthesisRequest, ValidationError, content_hash, validate

log = logging.getLogger(__name__)

DET_FLAG_TOL = 1e-10
RECONSTRUCTION_RTOL = 1e-8
BUDGET_ACTIVE_RTOL = 1e-4


class InfeasibleProgram(RuntimeError):
    """No strictly feasible point exists for the requested budgets."""

    def __init__(self, message: str, worst_constraint: str = ""):
        super().__init__(message)
        self.worst_constraint = worst_constraint


class SolverFailure(RuntimeError):
    """The interior-point solve did not reach the optimality criterion."""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class ExtractionFailure(RuntimeError):
    """The correlated output noise covariance recovered from the solution
    is not positive definite."""


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def g_blocks_to_matrix(blocks: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Block-diagonal output matrix from the per-step list."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    n = sum(b.shape[0] for b in blocks)
    G = np.zeros((n, n))
    at = 0
    for b in blocks:
        G[at:at + b.shape[0], at:at + b.shape[1]] = b
        at += b.shape[0]
    return G


@dataclass
class Mechanism:
    """Synthesized disclosure mechanism with cached Cholesky factors."""

    G_blocks: list[np.ndarray]
    Sigma_V: np.ndarray
    Sigma_H: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.G_blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.G_blocks]
        self.Sigma_V = _sym(np.asarray(self.Sigma_V, dtype=float))
        self.Sigma_H = _sym(np.asarray(self.Sigma_H, dtype=float))
        try:
            self.chol_V = np.linalg.cholesky(self.Sigma_V)
        except np.linalg.LinAlgError:
            raise ExtractionFailure("output noise covariance is not positive definite") from None
        try:
            self.chol_H = np.linalg.cholesky(self.Sigma_H)
        except np.linalg.LinAlgError:
            raise ExtractionFailure("input noise covariance is not positive definite") from None

    @property
    def K(self) -> int:
        return len(self.G_blocks)

    @property
    def n_y(self) -> int:
        return self.G_blocks[0].shape[0]

    @property
    def Gtilde(self) -> np.ndarray:
        return g_blocks_to_matrix(self.G_blocks)

    def singular_block_flags(self, tol: float = DET_FLAG_TOL) -> list[int]:
        """Steps whose output matrix is numerically singular (information
        at that step is fully suppressed rather than rescaled)."""
        return [k for k, b in enumerate(self.G_blocks) if abs(np.linalg.det(b)) < tol]

    def to_dict(self) -> dict:
        return {
            "G_blocks": [b.tolist() for b in self.G_blocks],
            "Sigma_V": self.Sigma_V.tolist(),
            "Sigma_H": self.Sigma_H.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mechanism":
        return cls(G_blocks=[np.array(b, dtype=float) for b in data["G_blocks"]],
                   Sigma_V=np.array(data["Sigma_V"], dtype=float),
                   Sigma_H=np.array(data["Sigma_H"], dtype=float),
                   provenance=dict(data.get("provenance", {})))


def save_mechanism(mech: Mechanism, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mech.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_mechanism(path: str) -> Mechanism:
    with open(path, "r", encoding="utf-8") as fh:
        return Mechanism.from_dict(json.load(fh))


@dataclass(frozen=True)
class MechanismMetrics:
    """Closed-form information and distortion figures for one mechanism."""

    mi_bits: float
    entropy_H_bits: float
    cost_bits: float
    distortion_Y: float
    distortion_U: float


@dataclass
class SynthesisReport:
    mechanism: Mechanism
    mi_bits: float
    entropy_H_bits: float
    cost_bits: float
    distortion_Y: float
    distortion_U: float
    solver: dict
    flags: dict
    solution: "sdp.SdpSolution | None" = None   # full solver record, not serialized

    def to_dict(self) -> dict:
        return {
            "mi_bits": self.mi_bits,
            "entropy_H_bits": self.entropy_H_bits,
            "cost_bits": self.cost_bits,
            "distortion_Y": self.distortion_Y,
            "distortion_U": self.distortion_U,
            "solver": self.solver,
            "flags": self.flags,
        }


@dataclass(frozen=True)
class _Context:
    """Constant data shared by assembly, initialization and extraction."""

    K: int
    n_y: int
    n_u: int
    n_s: int
    NY: int
    NU: int
    NS: int
    Sigma_Y: np.ndarray
    Winv: np.ndarray
    cov_YS: np.ndarray
    Sigma_S: np.ndarray
    mu_Y: np.ndarray
    MYq: np.ndarray
    MUq: np.ndarray
    delta: float
    trace_scale: float
    eps_y: float
    eps_u: float


def _build_context(lift: LiftedSystem, model: SystemModel, req: SynthesisRequest) -> _Context:
    mom = output_moments(lift, model)
    NY = req.K * model.n_y
    NU = req.K * model.n_u
    NS = req.K * model.n_s
    cf = cho_factor(mom.Sigma_Y, lower=True)
    Winv = _sym(cho_solve(cf, np.eye(NY)))
    trace_scale = max(1.0, float(np.trace(mom.Sigma_Y)) / NY)
    return _Context(
        K=req.K, n_y=model.n_y, n_u=model.n_u, n_s=model.n_s,
        NY=NY, NU=NU, NS=NS,
        Sigma_Y=mom.Sigma_Y, Winv=Winv, cov_YS=mom.cov_YS,
        Sigma_S=mom.Sigma_S, mu_Y=mom.mu_Y,
        MYq=_sym(req.W_Y.T @ req.W_Y), MUq=_sym(req.W_U.T @ req.W_U),
        delta=1e-8 * trace_scale, trace_scale=trace_scale,
        eps_y=req.eps_y, eps_u=req.eps_u,
    )


def _sym_basis_tensor(n: int, embed_dim: int, row0: int, col0: int, sign: float) -> np.ndarray:
    """Tensor placing +/-E_a of an n-dim symmetric variable inside a larger block."""
    p = sdp.sym_param_count(n)
    rows, cols = sdp.sym_param_indices(n)
    T = np.zeros((p, embed_dim, embed_dim))
    for a, (i, j) in enumerate(zip(rows, cols)):
        T[a, row0 + i, col0 + j] += sign
        if i != j:
            T[a, row0 + j, col0 + i] += sign
    return T


def assemble_program(lift: LiftedSystem, model: SystemModel, req: SynthesisRequest) -> sdp.SdpProblem:
    """Exact constraint system of the synthesis program as one SdpProblem.

    Variables: leakage bound Pi (logdet objective), disclosed covariance
    Sigma_Z, per-step output blocks G (affine), input noise covariance
    Sigma_H (logdet objective). An infinite budget drops the corresponding
    distortion constraint entirely.
    """
    ctx = _build_context(lift, model, req)
    K, n_y, NY, NS, NU = ctx.K, ctx.n_y, ctx.NY, ctx.NS, ctx.NU
    d = ctx.delta

    prob = sdp.SdpProblem()
    prob.add_sym_var("Pi", NS, logdet_weight=1.0, psd_margin=d)
    prob.add_sym_var("Sigma_Z", NY)
    prob.add_affine_var("G", K * n_y * n_y)
    prob.add_sym_var("Sigma_H", NU, logdet_weight=1.0, psd_margin=d)

    M_zs = ctx.cov_YS                   # rows: Y/Z stack, cols: S stack, pre-G
    pg = K * n_y * n_y

    # Leakage LMI: [[Sigma_S - Pi, cov(S,Z)], [cov(Z,S), Sigma_Z]] >= 0.
    dim = NS + NY
    const = np.zeros((dim, dim))
    const[:NS, :NS] = ctx.Sigma_S
    mi = prob.add_lmi("leakage", dim, constant=const, margin=0.0)
    mi.add_term("Pi", _sym_basis_tensor(NS, dim, 0, 0, -1.0))
    mi.add_term("Sigma_Z", _sym_basis_tensor(NY, dim, NS, NS, +1.0))
    Tg = np.zeros((pg, dim, dim))
    for k in range(K):
        for r in range(n_y):
            for c in range(n_y):
                p = (k * n_y + r) * n_y + c
                zrow = NS + k * n_y + r
                Tg[p, zrow, 0:NS] += M_zs[k * n_y + c, :]
                Tg[p, 0:NS, zrow] += M_zs[k * n_y + c, :]
    mi.add_term("G", Tg)

    # Output distortion budget as an epigraph LMI (finite budget only).
    if math.isfinite(ctx.eps_y):
        m_w = req.W_Y.shape[0]
        dimd = 1 + m_w
        Wmu = req.W_Y @ ctx.mu_Y
        const = np.zeros((dimd, dimd))
        const[0, 0] = ctx.eps_y - float(np.sum(ctx.Sigma_Y * ctx.MYq))
        const[0, 1:] = -Wmu
        const[1:, 0] = -Wmu
        const[1:, 1:] = np.eye(m_w)
        dist = prob.add_lmi("output_distortion_budget", dimd, constant=const, margin=0.0)
        Tz = np.zeros((sdp.sym_param_count(NY), dimd, dimd))
        rows, cols = sdp.sym_param_indices(NY)
        for a, (i, j) in enumerate(zip(rows, cols)):
            Tz[a, 0, 0] = -(ctx.MYq[i, j] * (2.0 if i != j else 1.0))
        dist.add_term("Sigma_Z", Tz)
        MS = ctx.MYq @ ctx.Sigma_Y
        Tg = np.zeros((pg, dimd, dimd))
        for k in range(K):
            for r in range(n_y):
                for c in range(n_y):
                    p = (k * n_y + r) * n_y + c
                    rg, cg = k * n_y + r, k * n_y + c
                    Tg[p, 0, 0] = 2.0 * MS[cg, rg]
                    Tg[p, 1:, 0] += req.W_Y[:, rg] * ctx.mu_Y[cg]
                    Tg[p, 0, 1:] += req.W_Y[:, rg] * ctx.mu_Y[cg]
        dist.add_term("G", Tg)

    # Input distortion budget (finite budget only).
    if math.isfinite(ctx.eps_u):
        rows, cols = sdp.sym_param_indices(NU)
        coef = np.array([-(ctx.MUq[i, j] * (2.0 if i != j else 1.0))
                         for i, j in zip(rows, cols)])
        prob.add_scalar("input_distortion_budget", ctx.eps_u, {"Sigma_H": coef})

    # Noise-floor LMI: [[Sigma_Z, G], [G^T, Winv]] strictly positive; its
    # Schur complement is the extracted output noise covariance.
    dimn = 2 * NY
    const = np.zeros((dimn, dimn))
    const[NY:, NY:] = ctx.Winv
    floor = prob.add_lmi("noise_floor", dimn, constant=const, margin=d)
    floor.add_term("Sigma_Z", _sym_basis_tensor(NY, dimn, 0, 0, +1.0))
    Tg = np.zeros((pg, dimn, dimn))
    for k in range(K):
        for r in range(n_y):
            for c in range(n_y):
                p = (k * n_y + r) * n_y + c
                rg, cg = k * n_y + r, k * n_y + c
                Tg[p, rg, NY + cg] = 1.0
                Tg[p, NY + cg, rg] = 1.0
    floor.add_term("G", Tg)

    prob.meta["context"] = ctx
    return prob


def _identity_g_params(K: int, n_y: int) -> np.ndarray:
    g = np.zeros(K * n_y * n_y)
    for k in range(K):
        for r in range(n_y):
            g[(k * n_y + r) * n_y + r] = 1.0
    return g


def analytic_start(problem: sdp.SdpProblem) -> dict | None:
    """Strictly feasible start for the synthesis program, if the budgets
    admit the pass-through construction (G = I, small extra noise)."""
    ctx: _Context = problem.meta["context"]
    d = ctx.delta
    s = ctx.trace_scale

    eps_z = s
    if math.isfinite(ctx.eps_y):
        eps_z = min(s, ctx.eps_y / (2.0 * float(np.trace(ctx.MYq)) + 1.0))
    c_h = s
    if math.isfinite(ctx.eps_u):
        c_h = min(s, ctx.eps_u / (2.0 * float(np.trace(ctx.MUq)) + 1.0))
    if eps_z <= 10.0 * d or c_h <= 10.0 * d:
        return None

    Sigma_Z0 = ctx.Sigma_Y + eps_z * np.eye(ctx.NY)
    cf = cho_factor(Sigma_Z0, lower=True)
    # cov(Z,S) at G=I equals cov(Y,S); conditional covariance of S given Z:
    schur = _sym(ctx.Sigma_S - ctx.cov_YS.T @ cho_solve(cf, ctx.cov_YS))
    lam = float(np.linalg.eigvalsh(schur)[0])
    if lam <= 20.0 * d:
        return None

    values = {
        "Pi": 0.5 * lam * np.eye(ctx.NS),
        "Sigma_Z": Sigma_Z0,
        "G": _identity_g_params(ctx.K, ctx.n_y),
        "Sigma_H": c_h * np.eye(ctx.NU),
    }
    x = problem.pack(values)
    rep = sdp.check_solution(problem, x, tol_psd=0.0, tol_scalar=0.0)
    if not rep.ok or any(c.min_slack <= d for c in rep.checks):
        return None
    return values


def synthesize(model: SystemModel, req: SynthesisRequest,
               solver_opts: sdp.SolverOptions | None = None,
               lift: LiftedSystem | None = None) -> SynthesisReport:
    """Validate, assemble, solve and extract the disclosure mechanism.

    Raises ValidationError, InfeasibleProgram, SolverFailure or
    ExtractionFailure; returns a SynthesisReport on success.
    """
    rep = validate(model, req)
    if not rep.ok:
        raise ValidationError(rep)
    if lift is None:
        lift = build_lift(model, req.K)
    problem = assemble_program(lift, model, req)
    ctx: _Context = problem.meta["context"]

    init = analytic_start(problem)
    if init is None:
        feas = sdp.find_feasible(problem, solver_opts)
        if feas.status is sdp.SolverStatus.INFEASIBLE:
            worst = _worst_from_message(feas.message)
            raise InfeasibleProgram(
                f"{_humanize(worst)} infeasible" if worst else feas.message,
                worst_constraint=worst)
        if feas.status is not sdp.SolverStatus.OPTIMAL:
            raise SolverFailure(f"phase 1 failed: {feas.message}", feas)
        init = feas.x

    sol = sdp.solve(problem, solver_opts, init=init)
    if sol.status is sdp.SolverStatus.INFEASIBLE:
        worst = _worst_from_message(sol.message)
        raise InfeasibleProgram(
            f"{_humanize(worst)} infeasible" if worst else sol.message,
            worst_constraint=worst)
    if sol.status is not sdp.SolverStatus.OPTIMAL:
        raise SolverFailure(f"solver status {sol.status.value}: {sol.message}", sol)

    Gt = _g_matrix_from_params(sol.variables["G"], ctx.K, ctx.n_y)
    Sigma_Z = sol.variables["Sigma_Z"]
    Sigma_V = _sym(Sigma_Z - Gt @ ctx.Sigma_Y @ Gt.T)
    lam_min = float(np.linalg.eigvalsh(Sigma_V)[0])
    if lam_min <= 0.0:
        raise ExtractionFailure(
            f"extracted output noise covariance has min eigenvalue {lam_min:.3e}")
    if lam_min < 10.0 * ctx.delta:
        log.warning("extracted output noise covariance is near singular (min eig %.3e)",
                    lam_min)
    recon = Gt @ ctx.Sigma_Y @ Gt.T + Sigma_V
    rel = float(np.linalg.norm(recon - Sigma_Z) / max(np.linalg.norm(Sigma_Z), 1e-300))
    if rel > RECONSTRUCTION_RTOL:
        raise ExtractionFailure(f"disclosed covariance reconstruction error {rel:.3e}")

    blocks = [Gt[k * ctx.n_y:(k + 1) * ctx.n_y, k * ctx.n_y:(k + 1) * ctx.n_y].copy()
              for k in range(ctx.K)]
    mech = Mechanism(
        G_blocks=blocks, Sigma_V=Sigma_V, Sigma_H=sol.variables["Sigma_H"],
        provenance={
            "model_hash": content_hash(model, req),
            "K": req.K,
            "eps_Y": "inf" if math.isinf(req.eps_y) else req.eps_y,
            "eps_U": "inf" if math.isinf(req.eps_u) else req.eps_u,
            "solver_status": sol.status.value,
            "package_version": _version,
        })

    metrics = evaluate_mechanism(model, req, mech, lift=lift)

    # The solver objective and the reported cost differ by fixed constants:
    # cost = objective/2 + 0.5*log2 det Sigma_S - (K*n_u/2)*log2(2 pi e).
    sign, ld = np.linalg.slogdet(ctx.Sigma_S)
    expected_cost = sol.objective / 2.0 + 0.5 * ld / math.log(2.0) - ctx.NU * HALF_LOG2_2PIE
    reconciliation = metrics.cost_bits - expected_cost
    if abs(reconciliation) > 1e-3 * max(1.0, abs(metrics.cost_bits)):
        log.warning("cost reconciliation drift %.3e bits", reconciliation)

    dist_y_active = (math.isfinite(req.eps_y)
                     and abs(metrics.distortion_Y - req.eps_y) <= BUDGET_ACTIVE_RTOL * req.eps_y)
    dist_u_active = (math.isfinite(req.eps_u)
                     and abs(metrics.distortion_U - req.eps_u) <= BUDGET_ACTIVE_RTOL * req.eps_u)
    if (math.isfinite(req.eps_y) or math.isfinite(req.eps_u)) and not (dist_y_active or dist_u_active):
        log.warning("no distortion budget is active at the optimum")

    return SynthesisReport(
        mechanism=mech,
        mi_bits=metrics.mi_bits,
        entropy_H_bits=metrics.entropy_H_bits,
        cost_bits=metrics.cost_bits,
        distortion_Y=metrics.distortion_Y,
        distortion_U=metrics.distortion_U,
        solver={
            "status": sol.status.value,
            "objective": sol.objective,
            "newton_steps": sol.newton_steps,
            "mu_final": sol.mu_final,
            "duality_measure": sol.residuals.duality_measure,
            "max_psd_violation": sol.residuals.max_psd_violation,
            "max_scalar_violation": sol.residuals.max_scalar_violation,
            "cost_reconciliation_bits": reconciliation,
        },
        flags={
            "singular_output_blocks": mech.singular_block_flags(),
            "min_eig_Sigma_V": lam_min,
            "budget_Y_active": dist_y_active,
            "budget_U_active": dist_u_active,
        },
        solution=sol,
    )


def _g_matrix_from_params(g: np.ndarray, K: int, n_y: int) -> np.ndarray:
    G = np.zeros((K * n_y, K * n_y))
    for k in range(K):
        blk = g[k * n_y * n_y:(k + 1) * n_y * n_y].reshape(n_y, n_y)
        G[k * n_y:(k + 1) * n_y, k * n_y:(k + 1) * n_y] = blk
    return G


def _humanize(name: str) -> str:
    return name.replace("_budget", " budget").replace("_", " ")


def _worst_from_message(message: str) -> str:
    # find_feasible reports "... (worst constraint: <name>)".
    marker = "worst constraint: "
    if marker in message:
        return message.split(marker, 1)[1].rstrip(")")
    return ""


def evaluate_mechanism(model: SystemModel, req: SynthesisRequest, mech: Mechanism,
                       lift: LiftedSystem | None = None) -> MechanismMetrics:
    """Closed-form leakage, injected entropy and distortion for a mechanism.

    The leakage is the mutual information between the private stack and the
    disclosed output stack; the disclosed input stack is independent of the
    private stack once its mean is accounted for and contributes nothing.
    """
    if lift is None:
        lift = build_lift(model, req.K)
    mom = output_moments(lift, model)
    Gt = mech.Gtilde

    joint = joint_ZS_moments(lift, model, Gt, mech.Sigma_V)
    mi = mutual_information(joint)
    ent_h = entropy(mech.Sigma_H)

    MYq = req.W_Y.T @ req.W_Y
    Sigma_Z = joint.Sigma_xx
    trace_term = float(np.sum((Sigma_Z + mom.Sigma_Y - 2.0 * mom.Sigma_Y @ Gt) * MYq.T))
    mean_vec = req.W_Y @ ((Gt - np.eye(Gt.shape[0])) @ mom.mu_Y)
    dist_y = trace_term + float(mean_vec @ mean_vec)

    MUq = req.W_U.T @ req.W_U
    dist_u = float(np.sum(mech.Sigma_H * MUq.T))

    return MechanismMetrics(
        mi_bits=mi,
        entropy_H_bits=ent_h,
        cost_bits=mi - ent_h,
        distortion_Y=dist_y,
        distortion_U=dist_u,
    )


def sample_mechanism(mech: Mechanism, y_seq: np.ndarray, u_seq: np.ndarray,
                     rng: np.random.Generator | int) -> tuple[np.ndarray, np.ndarray]:
    """One draw of the disclosed sequences for given clean (y, u) sequences.

    y_seq is (K, n_y), u_seq is (K, n_u); returns (z_seq, r_seq) of the same
    shapes. An integer rng seeds a counter-based generator.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(rng))))
    K, n_y = mech.K, mech.n_y
    y = np.asarray(y_seq, dtype=float).reshape(K * n_y)
    NU = mech.Sigma_H.shape[0]
    n_u = NU // K
    u = np.asarray(u_seq, dtype=float).reshape(K * n_u)

    z = mech.Gtilde @ y + mech.chol_V @ rng.standard_normal(K * n_y)
    r = u + mech.chol_H @ rng.standard_normal(NU)
    return z.reshape(K, n_y), r.reshape(K, n_u)
