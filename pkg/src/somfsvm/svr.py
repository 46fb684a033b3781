"""Zero-bias epsilon-SVR with plain and normalized Gaussian kernels.

The dual is written in the differences ``beta = alpha - alpha*``::

    minimize    1/2 beta' K beta - y' beta + eps * sum |beta_i|
    subject to  sum beta_i = 0,  -C <= beta_i <= C

and solved by pairwise coordinate descent: each step moves ``beta_i`` up and
``beta_j`` down by the same amount, so the equality constraint never breaks.
The pair is the maximal KKT violator and the step is the exact minimizer of
the (piecewise quadratic) objective along that direction.

Targets are centred before solving; the mean is kept as ``offset`` and added
back at prediction, so the kernel expansion itself carries no bias term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, ConvergenceError, DataError, ParameterError

GAUSSIAN = "gaussian"
NORMALIZED = "normalized_gaussian"
# log of the smallest normal double; below it a raw Gaussian response is lost
LOG_UNDERFLOW = math.log(np.finfo(float).tiny)
KERNEL_KINDS = (GAUSSIAN, NORMALIZED)


@dataclass(frozen=True)
class SvrConfig:
    C: float = 10.0
    epsilon: float = 0.05
    sigma: float = 1.0
    tolerance: float = 1e-4
    # passes of n pair updates each; None means 10 * n
    max_passes: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ParameterError("C must be > 0")
        if not self.epsilon >= 0:
            raise ParameterError("epsilon must be >= 0")
        if not self.sigma > 0:
            raise ParameterError("sigma must be > 0")
        if not self.tolerance > 0:
            raise ParameterError("tolerance must be > 0")
        if self.max_passes is not None and self.max_passes < 1:
            raise ParameterError("max_passes must be >= 1")


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    beta: np.ndarray
    sigmas: np.ndarray
    kernel_kind: str = NORMALIZED
    offset: float = 0.0
    bias: float = 0.0
    solver_violation: float = 0.0
    trivial: bool = field(default=False)

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=float)
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        sigmas = np.asarray(self.sigmas, dtype=float).reshape(-1)
        if sv.size == 0:
            sv = sv.reshape(0, sv.shape[-1] if sv.ndim == 2 else 0)
        if not (sv.shape[0] == beta.size == sigmas.size):
            raise ParameterError("support_vectors, beta and sigmas differ in length")
        if self.kernel_kind not in KERNEL_KINDS:
            raise ParameterError(f"unknown kernel kind {self.kernel_kind!r}")
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "trivial", beta.size == 0)

    @property
    def n_sv(self):
        return self.beta.size

    @property
    def dim(self):
        return self.support_vectors.shape[1]


def gaussian_kernel(x, x2, sigma) -> float:
    x, x2 = np.asarray(x, dtype=float), np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ParameterError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    if not sigma > 0:
        raise ParameterError("sigma must be > 0")
    return float(np.exp(-np.sum((x - x2) ** 2) / (2.0 * sigma * sigma)))


def _sq_dists(A, B):
    return ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)


def log_gaussian_matrix(X, centers, sigmas) -> np.ndarray:
    """``out[a, b] = -|X[a] - centers[b]|^2 / (2 sigmas[b]^2)``."""
    sigmas = np.asarray(sigmas, dtype=float)
    return -_sq_dists(X, centers) / (2.0 * sigmas[None, :] ** 2)


def gaussian_matrix(X, centers, sigmas) -> np.ndarray:
    return np.exp(log_gaussian_matrix(X, centers, sigmas))


def normalized_weights(X, centers, sigmas) -> np.ndarray:
    """Row-normalized Gaussian responses; each row sums to one."""
    centers = np.asarray(centers, dtype=float)
    if centers.shape[0] == 0:
        raise ParameterError("normalized kernel needs at least one center")
    L = log_gaussian_matrix(np.atleast_2d(np.asarray(X, dtype=float)), centers, sigmas)
    L -= L.max(axis=1, keepdims=True)
    W = np.exp(L)
    return W / W.sum(axis=1, keepdims=True)


def normalized_gaussian_kernel(x, centers, sigmas, j) -> float:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[0] == 0 or centers.size == 0:
        raise ParameterError("normalized kernel needs at least one center")
    if not 0 <= j < centers.shape[0]:
        raise ParameterError(f"center index {j} out of range")
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (centers.shape[0],))
    if np.any(sigmas <= 0):
        raise ParameterError("sigmas must be > 0")
    x = np.asarray(x, dtype=float)
    if x.shape != (centers.shape[1],):
        raise ParameterError("dimension mismatch between x and centers")
    return float(normalized_weights(x[None, :], centers, sigmas)[0, j])


def kernel_matrix(X, kind, sigma) -> np.ndarray:
    """Training matrix with ``K[a, b]`` = kernel of center ``b`` evaluated at ``X[a]``."""
    sig = np.full(X.shape[0], float(sigma))
    if kind == GAUSSIAN:
        return gaussian_matrix(X, X, sig)
    return normalized_weights(X, X, sig)


def dual_objective(Q, y, beta, epsilon) -> float:
    beta = np.asarray(beta, dtype=float)
    return float(0.5 * beta @ Q @ beta - y @ beta + epsilon * np.abs(beta).sum())


def _directional_bounds(g, beta, C, eps):
    """Derivatives for moving each coordinate up (``up``) and down (``down``)."""
    up = np.where(beta >= 0, g + eps, g - eps)
    down = np.where(beta > 0, g + eps, g - eps)
    up = np.where(beta >= C, np.inf, up)
    down = np.where(beta <= -C, -np.inf, down)
    return up, down


def max_violation(Q, y, beta, C, epsilon) -> float:
    """Largest first-order optimality violation of the pairwise dual."""
    g = Q @ beta - y
    up, down = _directional_bounds(g, beta, C, epsilon)
    viol = float(np.max(down) - np.min(up)) if beta.size > 1 else 0.0
    box = float(np.max(np.abs(beta) - C, initial=0.0))
    return max(viol, box, abs(float(beta.sum())), 0.0)


def _pair_step(bi, bj, gi, gj, eta, eps, tmax):
    """Exact minimizer over t in [0, tmax] of the objective change along
    beta_i += t, beta_j -= t."""

    def phi(t):
        return (
            0.5 * eta * t * t
            + (gi - gj) * t
            + eps * (abs(bi + t) - abs(bi) + abs(bj - t) - abs(bj))
        )

    knots = sorted({0.0, tmax, *(k for k in (-bi, bj) if 0.0 < k < tmax)})
    cands = list(knots)
    if eta > 0:
        for a, b in zip(knots, knots[1:]):
            mid = 0.5 * (a + b)
            si = 1.0 if bi + mid > 0 else -1.0
            sj = 1.0 if bj - mid > 0 else -1.0
            t = -(gi - gj + eps * (si - sj)) / eta
            cands.append(min(max(t, a), b))
    return min(cands, key=phi)


def solve_dual(K, y, C, epsilon, tolerance=1e-4, max_iter=None, seed=0):
    """Pairwise coordinate descent on the zero-sum box-constrained dual.

    ``K`` may be asymmetric (the normalized kernel is); its symmetric part
    defines the quadratic term. Returns ``(beta, violation, iterations)``;
    raises :class:`ConvergenceError` when ``max_iter`` is exhausted.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    Q = 0.5 * (K + K.T)
    beta = np.zeros(n)
    if n < 2:
        return beta, 0.0, 0
    if max_iter is None:
        max_iter = 10 * n * n
    perm = np.random.default_rng(seed).permutation(n)
    Qp = Q[np.ix_(perm, perm)]
    yp = y[perm]
    g = -yp.copy()
    diag = np.diag(Qp)
    best = np.inf
    for it in range(max_iter + 1):
        up, down = _directional_bounds(g, beta, C, epsilon)
        i = int(np.argmin(up))
        viol = float(np.max(down) - up[i])
        best = min(best, viol)
        if viol <= tolerance:
            break
        # second-order choice of the partner: largest predicted decrease
        gap = down - up[i]
        eta_all = np.maximum(diag[i] + diag - 2.0 * Qp[i], 1e-12)
        score = np.where(gap > 0, gap * gap / eta_all, -np.inf)
        score[i] = -np.inf
        j = int(np.argmax(score))
        if it == max_iter:
            out = np.empty(n)
            out[perm] = beta
            raise ConvergenceError(
                f"SVR solver did not reach tolerance {tolerance} in {max_iter} "
                f"iterations (best violation {best:.3g})",
                violation=best,
                beta=out,
            )
        tmax = min(C - beta[i], beta[j] + C)
        eta = diag[i] + diag[j] - 2.0 * Qp[i, j]
        t = _pair_step(beta[i], beta[j], g[i], g[j], eta, epsilon, tmax)
        if t <= 0.0:
            # no representable progress along the best pair
            break
        beta[i] = min(beta[i] + t, C)
        beta[j] = max(beta[j] - t, -C)
        g += t * (Qp[:, i] - Qp[:, j])
    out = np.empty(n)
    out[perm] = beta
    final = max_violation(Q, y, out, C, epsilon)
    return out, final, it


def _solve(X, yc, kind, config):
    n = yc.size
    passes = config.max_passes if config.max_passes is not None else 10 * n
    K = kernel_matrix(X, kind, config.sigma)
    beta, viol, _ = solve_dual(
        K, yc, config.C, config.epsilon, config.tolerance,
        max_iter=passes * n, seed=config.seed,
    )
    if viol > config.tolerance:
        raise ConvergenceError(
            f"SVR solver stalled with violation {viol:.3g} > {config.tolerance}",
            violation=viol, beta=beta,
        )
    return beta, viol


def train_svr(X, y, config: Optional[SvrConfig] = None, kernel_kind: str = NORMALIZED) -> SvrModel:
    """Fit a zero-bias epsilon-SVR.

    With ``kernel_kind="normalized_gaussian"`` (the default) training runs in
    two phases: a plain Gaussian fit picks the support vectors, then the dual
    is solved once more over those points with the kernel normalized across
    them. ``kernel_kind="gaussian"`` stops after the first phase.
    """
    config = config or SvrConfig()
    if kernel_kind not in KERNEL_KINDS:
        raise ParameterError(f"unknown kernel kind {kernel_kind!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ParameterError("X and y differ in length")
    if y.size < 2:
        raise DataError("SVR needs at least two records")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("SVR inputs must be finite")

    offset = float(y.mean())
    yc = y - offset
    beta, viol = _solve(X, yc, GAUSSIAN, config)
    keep = beta != 0
    if kernel_kind == NORMALIZED and keep.any():
        Xs, ys = X[keep], yc[keep]
        beta2, viol = _solve(Xs, ys, NORMALIZED, config)
        keep2 = beta2 != 0
        sv, beta = Xs[keep2], beta2[keep2]
    else:
        sv, beta = X[keep], beta[keep]
    return SvrModel(
        support_vectors=sv,
        beta=beta,
        sigmas=np.full(beta.size, float(config.sigma)),
        kernel_kind=kernel_kind,
        offset=offset,
        solver_violation=viol,
    )


def predict_svr_many(model: SvrModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.trivial:
        return np.full(X.shape[0], model.offset)
    if X.shape[1] != model.dim:
        raise ParameterError(f"expected {model.dim} inputs, got {X.shape[1]}")
    if model.kernel_kind == GAUSSIAN:
        K = gaussian_matrix(X, model.support_vectors, model.sigmas)
        return model.offset + K @ model.beta
    L = log_gaussian_matrix(X, model.support_vectors, model.sigmas)
    top = L.max(axis=1, keepdims=True)
    W = np.exp(L - top)
    out = model.offset + (W @ model.beta) / W.sum(axis=1)
    # every raw response underflows, so the ratio is 0/0: take the nearest center
    dead = top[:, 0] < LOG_UNDERFLOW
    if dead.any():
        out[dead] = model.offset + model.beta[np.argmax(L[dead], axis=1)]
    return out


def predict_svr(model: SvrModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if not model.trivial and x.shape != (model.dim,):
        raise ParameterError(f"expected a {model.dim}-vector, got shape {x.shape}")
    return float(predict_svr_many(model, x[None, :] if x.ndim == 1 else x)[0])


def kkt_report(model: SvrModel, X, y, config: SvrConfig) -> float:
    """Largest KKT violation of ``model`` as a solution of the dual over (X, y).

    Records not among the support vectors count as ``beta = 0``. For the
    normalized kernel the dual lives on the support vectors only, since the
    normalization runs over the centers.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    yc = y - model.offset
    if model.trivial:
        beta = np.zeros(y.size)
        K = kernel_matrix(X, GAUSSIAN, config.sigma)
        return max_violation(0.5 * (K + K.T), yc, beta, config.C, config.epsilon)
    rows = {tuple(r): i for i, r in enumerate(X.tolist())}
    try:
        where = [rows[tuple(sv)] for sv in model.support_vectors.tolist()]
    except KeyError:
        raise ParameterError("model support vectors are not rows of X") from None
    if model.kernel_kind == GAUSSIAN:
        beta = np.zeros(y.size)
        beta[where] = model.beta
        K = gaussian_matrix(X, X, np.full(y.size, config.sigma))
        Q, target = K, yc
    else:
        beta = model.beta.copy()
        K = normalized_weights(model.support_vectors, model.support_vectors, model.sigmas)
        Q, target = 0.5 * (K + K.T), yc[where]
    return max_violation(Q, target, beta, config.C, config.epsilon)


def require_normalized(model: SvrModel):
    if model.kernel_kind != NORMALIZED:
        raise ContractError("rule extraction needs a normalized-kernel model")
    if model.bias != 0:
        raise ContractError("rule extraction needs a zero-bias model")
