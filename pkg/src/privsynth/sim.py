"""Monte Carlo validation of a synthesized mechanism.

Simulates the closed system, applies the disclosure mechanism, and runs two
adversaries against each trajectory:

* the curious receiver, who sees only the disclosed pair (Z, R) and forms
  the affine estimate of the private sequence by plugging the noisy input
  record R in place of the unknown true input;
* a baseline observer with the clean measurements Y and the true input U,
  whose estimate is the exact conditional mean.

Random draws use counter-based Philox streams keyed by (salt, seed, tag) so
that run i of a batch is identical regardless of the batch size, and serial
or parallel aggregation orders cannot change any reported number.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .lift import LiftedSystem, build_lift, output_moments
from .model import SystemModel, SynthesisRequest
from .synth import Mechanism

_SALT = 0x70726976

_TAG_INITIAL = 0
_TAG_PROCESS = 1
_TAG_MEASURE = 2
_TAG_MECH_OUT = 3
_TAG_MECH_IN = 4


def stream(seed: int, tag: int) -> np.random.Generator:
    """Independent counter-based generator for one draw category."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((_SALT, int(seed), int(tag)))))


@dataclass(frozen=True)
class Trajectory:
    """One realization of the system, plus disclosed sequences once a
    mechanism has been applied (None before that)."""

    x_seq: np.ndarray           # (K, n_x)
    u_seq: np.ndarray           # (K, n_u), deterministic design input
    y_seq: np.ndarray           # (K, n_y)
    s_seq: np.ndarray           # (K, n_s)
    seed: int
    z_seq: np.ndarray | None = None   # (K, n_y)
    r_seq: np.ndarray | None = None   # (K, n_u)


@dataclass(frozen=True)
class AdversaryResult:
    """Estimate plus its exact error statistics (not the realized error)."""

    shat_seq: np.ndarray            # (K, n_s)
    expected_sq_err_per_step: np.ndarray  # (K,) trace of each diagonal block
    expected_sq_err_total: float          # trace of the stacked error covariance
    err_cov: np.ndarray                   # (NS, NS)


@dataclass
class ExperimentSummary:
    """Per-step Monte Carlo error curves and empirical distortion figures."""

    K: int
    n_runs: int
    seed: int
    r_entries: str
    mse_yu: np.ndarray          # (K,) baseline adversary mean squared error
    mse_zr: np.ndarray          # (K,) mechanism adversary mean squared error
    se_mse_zr: np.ndarray       # (K,) batch-means standard error of mse_zr
    s_mean: np.ndarray          # (K,) first private component, sample mean
    shat_zr_mean: np.ndarray    # (K,) first component of the (Z,R) estimate
    mse_yu_total: float
    mse_zr_total: float
    mse_yu_theory: float
    mse_zr_theory: float
    distortion_Y_hat: float
    se_distortion_Y: float
    distortion_U_hat: float
    se_distortion_U: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "n_runs": self.n_runs,
            "seed": self.seed,
            "r_entries": self.r_entries,
            "mse_yu": self.mse_yu.tolist(),
            "mse_zr": self.mse_zr.tolist(),
            "se_mse_zr": self.se_mse_zr.tolist(),
            "s_mean": self.s_mean.tolist(),
            "shat_zr_mean": self.shat_zr_mean.tolist(),
            "mse_yu_total": self.mse_yu_total,
            "mse_zr_total": self.mse_zr_total,
            "mse_yu_theory": self.mse_yu_theory,
            "mse_zr_theory": self.mse_zr_theory,
            "distortion_Y_hat": self.distortion_Y_hat,
            "se_distortion_Y": self.se_distortion_Y,
            "distortion_U_hat": self.distortion_U_hat,
            "se_distortion_U": self.se_distortion_U,
            "extra": self.extra,
        }


def _simulate_state_batch(model: SystemModel, K: int, n_runs: int, seed: int):
    """Vectorized draw of the pre-mechanism system; run index = row index."""
    n_x, n_y = model.n_x, model.n_y
    u_seq = model.input_sequence(K)

    cx = np.linalg.cholesky(model.Sigma_x1)
    ct = np.linalg.cholesky(model.Sigma_T)
    cw = np.linalg.cholesky(model.Sigma_W)

    x = np.empty((n_runs, K, n_x))
    x[:, 0] = model.mu_x1 + stream(seed, _TAG_INITIAL).standard_normal((n_runs, n_x)) @ cx.T
    tnoise = stream(seed, _TAG_PROCESS).standard_normal((n_runs, (K - 1) * n_x))
    tnoise = tnoise.reshape(n_runs, K - 1, n_x) @ ct.T
    for k in range(K - 1):
        x[:, k + 1] = x[:, k] @ model.A.T + model.B @ u_seq[k] + tnoise[:, k]

    w = stream(seed, _TAG_MEASURE).standard_normal((n_runs, K * n_y))
    w = w.reshape(n_runs, K, n_y) @ cw.T
    y = x @ model.C.T + w
    s = x @ model.D.T
    return x, u_seq, y, s


def _mechanism_noise_batch(mech: Mechanism, n_runs: int, seed: int):
    NY = mech.K * mech.n_y
    NU = mech.Sigma_H.shape[0]
    v = stream(seed, _TAG_MECH_OUT).standard_normal((n_runs, NY)) @ mech.chol_V.T
    h = stream(seed, _TAG_MECH_IN).standard_normal((n_runs, NU)) @ mech.chol_H.T
    return v, h


def _simulate_batch(model: SystemModel, mech: Mechanism, n_runs: int, seed: int):
    K, n_y = mech.K, mech.n_y
    x, u_seq, y, s = _simulate_state_batch(model, K, n_runs, seed)
    v, h = _mechanism_noise_batch(mech, n_runs, seed)
    z = y.reshape(n_runs, K * n_y) @ mech.Gtilde.T + v
    r = u_seq.reshape(-1) + h
    n_u = model.n_u
    return x, u_seq, y, s, z.reshape(n_runs, K, n_y), r.reshape(n_runs, K, n_u)


def simulate(model: SystemModel, K: int, seed: int) -> Trajectory:
    """One pre-mechanism trajectory; equals row 0 of any batch of the
    same seed regardless of batch size."""
    x, u_seq, y, s = _simulate_state_batch(model, K, 1, seed)
    return Trajectory(x_seq=x[0], u_seq=u_seq, y_seq=y[0], s_seq=s[0], seed=seed)


def apply_mechanism(traj: Trajectory, mech: Mechanism,
                    seed: int | None = None) -> Trajectory:
    """Trajectory with the disclosed sequences filled in.

    Defaults to the trajectory's own seed so that simulate + apply_mechanism
    reproduces row 0 of the batched experiment exactly.
    """
    if seed is None:
        seed = traj.seed
    K, n_y = mech.K, mech.n_y
    if traj.y_seq.shape[0] != K:
        raise ValueError(f"trajectory horizon {traj.y_seq.shape[0]} does not match mechanism {K}")
    v, h = _mechanism_noise_batch(mech, 1, seed)
    z = traj.y_seq.reshape(K * n_y) @ mech.Gtilde.T + v[0]
    r = traj.u_seq.reshape(-1) + h[0]
    return replace(traj, z_seq=z.reshape(K, n_y), r_seq=r.reshape(K, -1))


class _PlugInEstimator:
    """Affine estimate of the private stack from (Z, R).

    The receiver knows the model and the mechanism but not the realized
    input; it substitutes the first K-1 disclosed input entries for the true
    input when forming the prior means (later entries cannot influence the
    horizon). The extra estimation error caused by that substitution is
    exactly M Sigma_H_used M^T with M mapping input noise through the
    dynamics into the estimate.
    """

    def __init__(self, model: SystemModel, mech: Mechanism,
                 lift: LiftedSystem | None = None):
        K = mech.K
        self.K, self.n_s = K, model.n_s
        if lift is None:
            lift = build_lift(model, K)
        mom = output_moments(lift, model)
        Gt = mech.Gtilde

        Sigma_Z = Gt @ mom.Sigma_Y @ Gt.T + mech.Sigma_V
        cov_ZS = Gt @ mom.cov_YS
        cfz = cho_factor(Sigma_Z, lower=True)
        self.B_z = cho_solve(cfz, cov_ZS).T            # (NS, NY)
        self.cond_cov = mom.Sigma_S - self.B_z @ cov_ZS

        self.F_mu = lift.F @ model.mu_x1               # input-free state mean
        self.L = lift.L                                # (K n_x, (K-1) n_u)
        self.Ct, self.Dt = lift.Ct, lift.Dt
        self.Gt = Gt
        self.n_u = model.n_u

        GC_L = Gt @ self.Ct @ self.L
        M = self.Dt @ self.L - self.B_z @ GC_L         # (NS, (K-1) n_u)
        used = (K - 1) * model.n_u
        Sigma_H_used = mech.Sigma_H[:used, :used]
        self.plugin_cov = M @ Sigma_H_used @ M.T
        self.err_cov = self.cond_cov + self.plugin_cov

    def estimate(self, z_stack: np.ndarray, r_stack: np.ndarray) -> np.ndarray:
        """Batched: z_stack (n, NY), r_stack (n, K n_u) -> (n, NS)."""
        used = (self.K - 1) * self.n_u
        r_used = r_stack[:, :used]
        mu_base = self.F_mu + r_used @ self.L.T        # (n, K n_x)
        mu_S = mu_base @ self.Dt.T
        mu_Z = mu_base @ (self.Gt @ self.Ct).T
        return mu_S + (z_stack - mu_Z) @ self.B_z.T


class _BaselineEstimator:
    """Exact conditional mean of the private stack given clean (Y, U)."""

    def __init__(self, model: SystemModel, K: int, lift: LiftedSystem | None = None):
        if lift is None:
            lift = build_lift(model, K)
        mom = output_moments(lift, model)
        cfy = cho_factor(mom.Sigma_Y, lower=True)
        self.B_y = cho_solve(cfy, mom.cov_YS).T
        self.err_cov = mom.Sigma_S - self.B_y @ mom.cov_YS
        self.mu_Y = mom.mu_Y
        self.mu_S = mom.mu_S

    def estimate(self, y_stack: np.ndarray) -> np.ndarray:
        return self.mu_S + (y_stack - self.mu_Y) @ self.B_y.T


def adversary_estimate(model: SystemModel, lift: LiftedSystem | None,
                       mech: Mechanism, z_seq: np.ndarray,
                       r_seq: np.ndarray) -> AdversaryResult:
    """Private-sequence estimate from one disclosed pair (z_seq, r_seq).

    The reported error statistics are the exact second moments of the
    estimation error, including the input-substitution term.
    """
    est = _PlugInEstimator(model, mech, lift=lift)
    K, n_s = est.K, est.n_s
    shat = est.estimate(np.asarray(z_seq, dtype=float).reshape(1, -1),
                        np.asarray(r_seq, dtype=float).reshape(1, -1))[0]
    block_traces = np.array([
        np.trace(est.err_cov[k * n_s:(k + 1) * n_s, k * n_s:(k + 1) * n_s])
        for k in range(K)])
    return AdversaryResult(
        shat_seq=shat.reshape(K, n_s),
        expected_sq_err_per_step=block_traces,
        expected_sq_err_total=float(np.trace(est.err_cov)),
        err_cov=est.err_cov,
    )


def _batch_se(values: np.ndarray, n_batches: int = 20) -> float:
    """Standard error from batch means along axis 0."""
    n = values.shape[0]
    b = min(n_batches, n)
    if b < 2:
        return float("nan")
    cut = (n // b) * b
    means = values[:cut].reshape(b, cut // b).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(b))


def run_experiment(model: SystemModel, req: SynthesisRequest, mech: Mechanism,
                   n_runs: int, seed: int, r_entries: str = "K") -> ExperimentSummary:
    """Monte Carlo comparison of the two adversaries over n_runs trajectories.

    r_entries selects how many disclosed input steps the receiver is given
    ("K" or "K-1"); only the first K-1 influence the horizon, so both
    settings yield the same estimate and the choice is recorded for the
    run manifest.
    """
    if r_entries not in ("K", "K-1"):
        raise ValueError(f"r_entries must be 'K' or 'K-1', got {r_entries!r}")
    if n_runs < 1:
        raise ValueError("n_runs must be positive")
    K = mech.K
    if req.K != K:
        raise ValueError(f"request horizon {req.K} does not match mechanism horizon {K}")
    n_s = model.n_s

    x, u_seq, y, s, z, r = _simulate_batch(model, mech, n_runs, seed)
    y_stack = y.reshape(n_runs, -1)
    s_stack = s.reshape(n_runs, -1)
    z_stack = z.reshape(n_runs, -1)
    r_stack = r.reshape(n_runs, -1)

    lift = build_lift(model, K)
    plug = _PlugInEstimator(model, mech, lift=lift)
    base = _BaselineEstimator(model, K, lift=lift)

    shat_zr = plug.estimate(z_stack, r_stack)
    shat_yu = base.estimate(y_stack)

    err_zr = (shat_zr - s_stack).reshape(n_runs, K, n_s)
    err_yu = (shat_yu - s_stack).reshape(n_runs, K, n_s)
    sq_zr = np.sum(err_zr * err_zr, axis=2)    # (n_runs, K)
    sq_yu = np.sum(err_yu * err_yu, axis=2)

    mse_zr = sq_zr.mean(axis=0)
    mse_yu = sq_yu.mean(axis=0)
    se_mse_zr = np.array([_batch_se(sq_zr[:, k]) for k in range(K)])

    dy = (z_stack - y_stack) @ req.W_Y.T
    dist_y = np.sum(dy * dy, axis=1)
    u_flat = u_seq.reshape(-1)
    du = (r_stack - u_flat) @ req.W_U.T
    dist_u = np.sum(du * du, axis=1)

    return ExperimentSummary(
        K=K, n_runs=n_runs, seed=seed, r_entries=r_entries,
        mse_yu=mse_yu, mse_zr=mse_zr, se_mse_zr=se_mse_zr,
        s_mean=s[:, :, 0].mean(axis=0),
        shat_zr_mean=shat_zr.reshape(n_runs, K, n_s)[:, :, 0].mean(axis=0),
        mse_yu_total=float(sq_yu.sum(axis=1).mean()),
        mse_zr_total=float(sq_zr.sum(axis=1).mean()),
        mse_yu_theory=float(np.trace(base.err_cov)),
        mse_zr_theory=float(np.trace(plug.err_cov)),
        distortion_Y_hat=float(dist_y.mean()),
        se_distortion_Y=_batch_se(dist_y),
        distortion_U_hat=float(dist_u.mean()),
        se_distortion_U=_batch_se(dist_u),
    )
