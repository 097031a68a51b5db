"""Gradients through the equilibrium of implicit layers.

Notation: ``D = diag(f'(X~))`` evaluated at the fixed point, and ``D W`` is the
row scaling ``f'_i W_ij``. For a one-layer net the parameter Jacobians all
share the factor ``M = (1 - D W)^-1 D``. Rather than building the 3-tensor
Jacobians we contract with ``dL/dY`` first:

    g = M^T dL/dY,   dL/dT = g,   dL/dW = g y^T,   dL/dQ = g x^T

which needs one transposed linear solve per sample. Every function accepts a
leading batch axis on ``x``/``dL_dY`` and then returns batch-averaged gradients.

The second half of the module holds verification oracles: central finite
differences, gradients through a finite chain of iterative updates, and the
truncated Neumann series for ``(1 - D W)^-1``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .equilibrium import NotConvergedError, SolverConfig, relax
from .networks import FeedForwardParams, OneLayerParams, TwoLayerParams, forward_feedforward_hidden, predict
from .numeric import SingularMatrixError, sigmoid, sigmoid_prime_from_output, solve_linear

Grads = dict[str, np.ndarray]


class SensitivityError(ArithmeticError):
    """The implicit linear system ``(1 - D W)`` (or the two-layer S system) is singular."""

    def __init__(self, which: str, cause: SingularMatrixError):
        self.which = which
        self.pivot_index = cause.pivot_index
        self.batch_index = cause.batch_index
        super().__init__(f"non-invertible sensitivity ({which} system): {cause}")


def mse(y: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None):
    """Per-sample MSE over supervised outputs and its gradient w.r.t. ``y``.

    ``L = mean_i (y_i - t_i)^2`` over outputs with ``mask_i`` set, so
    ``dL/dy = 2 (y - t) / n_supervised`` and zero on unsupervised outputs.
    """
    y = np.asarray(y, dtype=float)
    diff = y - np.asarray(target, dtype=float)
    if mask is None:
        mask = np.ones(y.shape[-1], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    diff = np.where(mask, diff, 0.0)
    return (diff**2).sum(axis=-1) / n, 2.0 * diff / n


def _eye_minus_dw(fp: np.ndarray, W: np.ndarray) -> np.ndarray:
    return np.eye(W.shape[0]) - fp[..., :, None] * W


def _solve(which: str, A, B):
    try:
        return solve_linear(A, B)
    except SingularMatrixError as err:
        raise SensitivityError(which, err) from err


def _outer_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        return np.outer(a, b)
    return a.T @ b / a.shape[0]


def _mean(a: np.ndarray) -> np.ndarray:
    return a if a.ndim == 1 else a.mean(axis=0)


# ------------------------------------------------------------------ one layer

def sensitivity_one_layer(params: OneLayerParams, eq) -> np.ndarray:
    """``M`` solving ``(1 - D W) M = D``."""
    fp = eq.fprime
    D = fp[..., :, None] * np.eye(fp.shape[-1])
    return _solve("one-layer", _eye_minus_dw(fp, params.W), D)


def jacobians_one_layer(params: OneLayerParams, x, eq) -> dict[str, np.ndarray]:
    """Materialised Jacobians for a single sample (debug/inspection only).

    ``J["W"][i, j, m] = dY_i/dW_jm``, ``J["Q"][i, j, m] = dY_i/dQ_jm`` and
    ``J["T"][i, j] = dY_i/dT_j``.
    """
    M = sensitivity_one_layer(params, eq)
    x = np.asarray(x, dtype=float)
    return {
        "Q": M[:, :, None] * x[None, None, :],
        "W": M[:, :, None] * eq.y[None, None, :],
        "T": M,
    }


def loss_grads_one_layer(params: OneLayerParams, x, eq, dL_dY) -> Grads:
    x = np.asarray(x, dtype=float)
    dL_dY = np.asarray(dL_dY, dtype=float)
    fp = eq.fprime
    A = _eye_minus_dw(fp, params.W)
    g = fp * _solve("one-layer", np.swapaxes(A, -1, -2), dL_dY)
    return {"Q": _outer_mean(g, x), "W": _outer_mean(g, eq.y), "T": _mean(g)}


def semi_grads_one_layer(params: OneLayerParams, x, eq, dL_dY) -> Grads:
    """Gradient with the equilibrium treated as a constant inside ``f``."""
    x = np.asarray(x, dtype=float)
    g = eq.fprime * np.asarray(dL_dY, dtype=float)
    return {"Q": _outer_mean(g, x), "W": _outer_mean(g, eq.y), "T": _mean(g)}


# ------------------------------------------------------------------ two layer

def sensitivity_two_layer(params: TwoLayerParams, eq) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(S, K)`` with ``K = (1 - D2 W2)^-1 D2`` and
    ``S = (1 - D1 W1 - D1 Q1 K R)^-1``."""
    fp1, fp2 = eq.fprime_l1, eq.fprime_l2
    D2 = fp2[..., :, None] * np.eye(fp2.shape[-1])
    K = _solve("inner", _eye_minus_dw(fp2, params.W_L2), D2)
    S_sys = _eye_minus_dw(fp1, params.W_L1) - fp1[..., :, None] * (params.Q_L1 @ K @ params.R)
    S = _solve("outer", S_sys, np.broadcast_to(np.eye(fp1.shape[-1]), S_sys.shape))
    return S, K


def loss_grads_two_layer(params: TwoLayerParams, x, eq, dL_dY1) -> Grads:
    x = np.asarray(x, dtype=float)
    dL_dY1 = np.asarray(dL_dY1, dtype=float)
    y1, y2 = eq.y_l1, eq.y_l2
    fp1, fp2 = eq.fprime_l1, eq.fprime_l2
    A2 = _eye_minus_dw(fp2, params.W_L2)
    A2T = np.swapaxes(A2, -1, -2)
    # inner solve: (1 - D2 W2)^-1 D2 R, needed to assemble the outer system
    KR = _solve("inner", A2, fp2[..., :, None] * params.R)
    S_sys = _eye_minus_dw(fp1, params.W_L1) - fp1[..., :, None] * (params.Q_L1 @ KR)
    # g1 = D1 S^T dL, g2 = D2 A2^-T Q1^T g1
    g1 = fp1 * _solve("outer", np.swapaxes(S_sys, -1, -2), dL_dY1)
    g2 = fp2 * _solve("inner", A2T, g1 @ params.Q_L1)
    return {
        "Q_L2": _outer_mean(g2, x),
        "W_L2": _outer_mean(g2, y2),
        "R": _outer_mean(g2, y1),
        "T_L2": _mean(g2),
        "Q_L1": _outer_mean(g1, y2),
        "W_L1": _outer_mean(g1, y1),
        "T_L1": _mean(g1),
    }


def semi_grads_two_layer(params: TwoLayerParams, x, eq, dL_dY1) -> Grads:
    """Backprop through the frozen-equilibrium graph.

    Recurrent inputs (``W1 y1``, ``W2 y2``, ``R y1``) are constants; the
    feed-forward path ``Q1 y2`` still carries gradient into layer 2.
    """
    x = np.asarray(x, dtype=float)
    y1, y2 = eq.y_l1, eq.y_l2
    g1 = eq.fprime_l1 * np.asarray(dL_dY1, dtype=float)
    g2 = eq.fprime_l2 * (g1 @ params.Q_L1)
    return {
        "Q_L2": _outer_mean(g2, x),
        "W_L2": _outer_mean(g2, y2),
        "R": _outer_mean(g2, y1),
        "T_L2": _mean(g2),
        "Q_L1": _outer_mean(g1, y2),
        "W_L1": _outer_mean(g1, y1),
        "T_L1": _mean(g1),
    }


def feedforward_grads(params: FeedForwardParams, x, dL_dY1, hidden=None) -> Grads:
    """Plain two-layer backprop. ``hidden`` may pass precomputed ``(y1, y2)``."""
    x = np.asarray(x, dtype=float)
    y1, y2 = hidden if hidden is not None else forward_feedforward_hidden(params, x)
    g1 = sigmoid_prime_from_output(y1) * np.asarray(dL_dY1, dtype=float)
    g2 = sigmoid_prime_from_output(y2) * (g1 @ params.Q_L1)
    return {"Q_L2": _outer_mean(g2, x), "T_L2": _mean(g2), "Q_L1": _outer_mean(g1, y2), "T_L1": _mean(g1)}


# -------------------------------------------------------------------- oracles

ORACLE_SOLVER = SolverConfig(iterations=400, tolerance=1e-12, max_iterations=None)


def _system(p, x):
    """``(M, drive, n_skip)`` of the stacked relaxation; outputs are ``state[..., n_skip:]``."""
    if isinstance(p, OneLayerParams):
        return p.W, x @ p.Q.T + p.T, 0
    M = np.block([[p.W_L2, p.R], [p.Q_L1, p.W_L1]])
    drive2 = x @ p.Q_L2.T + p.T_L2
    drive1 = np.broadcast_to(p.T_L1, drive2.shape[:-1] + p.T_L1.shape)
    return M, np.concatenate([drive2, drive1], axis=-1), p.Q_L2.shape[0]


def _probes(params, step):
    """Yield ``(name, flat index, sign, perturbed copy)`` for every central-difference probe."""
    for name, block in params.blocks().items():
        for k in range(block.size):
            for sign in (1.0, -1.0):
                probe = params.copy()
                probe.blocks()[name].reshape(-1)[k] += sign * step
                yield name, k, sign, probe


def finite_diff_grads(
    params,
    x,
    loss: Callable[[np.ndarray], float],
    step: float = 1e-5,
    cfg: SolverConfig = ORACLE_SOLVER,
) -> Grads:
    """Central differences of ``loss(output)``, re-solving the equilibrium per probe.

    ``loss`` receives the network output (batched if ``x`` is) and must return a
    scalar; for a batch it should already average over samples. All probes of
    an implicit net are relaxed together as one stack of systems, with a fixed
    ``cfg.iterations`` budget.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    probes = list(_probes(params, step))
    if isinstance(params, FeedForwardParams):
        values = [float(loss(predict(p, x)[0])) for *_, p in probes]
    else:
        systems = [_system(p, x) for *_, p in probes]
        M = np.stack([m for m, _, _ in systems])
        drive = np.stack([np.atleast_2d(d) for _, d, _ in systems])
        state, res = relax(M, drive, SolverConfig(cfg.method, cfg.iterations, cfg.step_size, cfg.tolerance, None))
        bad = np.asarray(res) > cfg.tolerance
        if bad.any():
            raise NotConvergedError(float(np.max(res)), cfg.tolerance)
        out = state[..., systems[0][2]:]
        values = [float(loss(out[i] if x.ndim > 1 else out[i, 0])) for i in range(len(probes))]
    grads = {name: np.zeros_like(block) for name, block in params.blocks().items()}
    for (name, k, sign, _), v in zip(probes, values):
        grads[name].reshape(-1)[k] += sign * v / (2.0 * step)
    return grads


def unrolled_grads(params: OneLayerParams, x, n_steps: int, dL_dY) -> Grads:
    """Gradient of ``dL_dY . Y(n)`` through ``n_steps`` iterative updates from ``Y(0) = 0``.

    Forward-mode accumulation of the per-step Jacobians:
    ``J(t) = D(t-1) (W J(t-1) + delta_Y(t-1))`` and the analogues for Q and T.
    """
    x = np.asarray(x, dtype=float)
    n, n_in = params.Q.shape
    drive = params.Q @ x + params.T
    y = np.zeros(n)
    JW = np.zeros((n, n, n))
    JQ = np.zeros((n, n, n_in))
    JT = np.zeros((n, n))
    eye = np.eye(n)
    for t in range(n_steps):
        y_new = sigmoid(drive + params.W @ y)
        fp = sigmoid_prime_from_output(y_new)
        JW = fp[:, None, None] * (np.einsum("ik,kjm->ijm", params.W, JW) + eye[:, :, None] * y[None, None, :])
        JQ = fp[:, None, None] * (np.einsum("ik,kjm->ijm", params.W, JQ) + eye[:, :, None] * x[None, None, :])
        JT = fp[:, None] * (params.W @ JT + eye)
        y = y_new
        if not np.all(np.isfinite(JW)):
            raise ArithmeticError(f"unrolled iteration diverged at step {t + 1}")
    dL_dY = np.asarray(dL_dY, dtype=float)
    return {
        "Q": np.einsum("i,ijm->jm", dL_dY, JQ),
        "W": np.einsum("i,ijm->jm", dL_dY, JW),
        "T": dL_dY @ JT,
    }


def spectral_radius(A: np.ndarray, iterations: int = 400, seed: int = 0) -> float:
    """Power-iteration estimate: mean log growth of ``||A v||`` over the second half of the run.

    Skipping the first half removes the bias from the starting vector's projection.
    """
    v = np.random.default_rng(seed).standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    log_growth = 0.0
    burn_in = iterations // 2
    for k in range(iterations):
        v = A @ v
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            return 0.0
        if k >= burn_in:
            log_growth += np.log(nrm)
        v /= nrm
    return float(np.exp(log_growth / (iterations - burn_in)))


def neumann_inverse(D: np.ndarray, W: np.ndarray, k_max: int) -> np.ndarray:
    """Truncated series ``sum_{k=0}^{k_max} (D W)^k`` approximating ``(1 - D W)^-1``.

    ``D`` is the vector of diagonal entries.
    """
    DW = np.asarray(D, dtype=float)[:, None] * np.asarray(W, dtype=float)
    rho = spectral_radius(DW)
    if rho >= 1.0:
        raise ArithmeticError(f"Neumann series does not converge: spectral radius {rho:.4f} >= 1")
    total = np.eye(DW.shape[0])
    term = np.eye(DW.shape[0])
    for _ in range(k_max):
        term = term @ DW
        total = total + term
    return total
