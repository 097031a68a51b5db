"""Fixed points of implicit layers via relaxation dynamics.

The equilibrium ``Y = f(W Y + Q X + T)`` is the stable rest point of
``dY/dt = f(Q X + W Y + T) - Y``. We integrate that ODE from ``Y = 0`` with a
fixed-step RK4 (or explicit Euler) scheme. All solvers accept either a single
input vector or a batch with a leading sample axis.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .numeric import ShapeError, sigmoid, sigmoid_prime_from_output

GROWTH_LIMIT = 1e6


class DivergenceError(ArithmeticError):
    def __init__(self, iteration: int, reason: str):
        self.iteration = iteration
        super().__init__(f"relaxation diverged at iteration {iteration}: {reason}")


class NotConvergedError(ArithmeticError):
    def __init__(self, residual: float, tolerance: float, sample_index: int | None = None):
        self.residual = residual
        self.tolerance = tolerance
        self.sample_index = sample_index
        where = f" for sample {sample_index}" if sample_index is not None else ""
        super().__init__(f"equilibrium not converged{where}: residual {residual:.3e} > tolerance {tolerance:.1e}")


@dataclass(frozen=True)
class SolverConfig:
    """Relaxation settings.

    Every sample gets exactly ``iterations`` steps. Samples whose residual is
    still above ``tolerance`` afterwards keep stepping (alone) until they
    converge or ``max_iterations`` is reached; ``max_iterations=None``
    disables the extension.
    """

    method: str = "rk4"
    iterations: int = 30
    step_size: float = 1.0
    tolerance: float = 1e-6
    max_iterations: int | None = 5000

    def __post_init__(self):
        if self.method not in ("rk4", "euler"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.max_iterations is not None and self.max_iterations < self.iterations:
            raise ValueError("max_iterations must be >= iterations")
        if not 0.0 < self.step_size <= 1.0:
            raise ValueError("step_size must lie in (0, 1]")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class Equilibrium:
    y: np.ndarray
    residual_norm: float | np.ndarray
    converged: bool

    @property
    def fprime(self) -> np.ndarray:
        return sigmoid_prime_from_output(self.y)

    def check(self, tolerance: float) -> None:
        """Raise :class:`NotConvergedError` naming the worst offending sample."""
        if not self.converged:
            raise _not_converged(self.residual_norm, tolerance)


@dataclass
class TwoLayerEquilibrium:
    y_l1: np.ndarray
    y_l2: np.ndarray
    residual_norm: float | np.ndarray
    converged: bool

    @property
    def fprime_l1(self) -> np.ndarray:
        return sigmoid_prime_from_output(self.y_l1)

    @property
    def fprime_l2(self) -> np.ndarray:
        return sigmoid_prime_from_output(self.y_l2)

    def check(self, tolerance: float) -> None:
        if not self.converged:
            raise _not_converged(self.residual_norm, tolerance)


def _not_converged(residual, tolerance) -> NotConvergedError:
    r = np.atleast_1d(residual)
    if r.size == 1 and np.ndim(residual) == 0:
        return NotConvergedError(float(r[0]), tolerance)
    idx = int(np.argmax(r > tolerance))
    return NotConvergedError(float(r[idx]), tolerance, idx)


def _residual_norm(rhs: np.ndarray):
    norm = np.linalg.norm(rhs, axis=-1)
    return float(norm) if np.ndim(norm) == 0 else norm


class _Relaxation:
    """RK4/Euler stepper for ``dy/dt = f(y M^T + drive) - y`` on preallocated buffers."""

    def __init__(self, M, drive, cfg: SolverConfig):
        self.cfg = cfg
        self.neg_MT = -np.ascontiguousarray(np.swapaxes(M, -1, -2))
        self.neg_drive = -np.asarray(drive, dtype=float)
        self.y = np.zeros_like(self.neg_drive)
        self.k1, self.k2, self.k3, self.k4, self.tmp = (np.empty_like(self.y) for _ in range(5))
        self.rhs(self.y, self.k1)

    def restrict(self, rows: np.ndarray) -> None:
        self.neg_drive = self.neg_drive[rows]
        self.y = self.y[rows]
        self.k1 = self.k1[rows]
        self.k2, self.k3, self.k4, self.tmp = (np.empty_like(self.y) for _ in range(4))

    def rhs(self, s, out):
        np.matmul(s, self.neg_MT, out=out)
        out += self.neg_drive
        with np.errstate(over="ignore"):
            np.exp(out, out=out)
        out += 1.0
        np.reciprocal(out, out=out)
        out -= s

    def step(self, it: int, limit: float) -> None:
        h = self.cfg.step_size
        y, k1, k2, k3, k4, tmp = self.y, self.k1, self.k2, self.k3, self.k4, self.tmp
        if self.cfg.method == "rk4":
            np.multiply(k1, 0.5 * h, out=tmp)
            tmp += y
            self.rhs(tmp, k2)
            np.multiply(k2, 0.5 * h, out=tmp)
            tmp += y
            self.rhs(tmp, k3)
            np.multiply(k3, h, out=tmp)
            tmp += y
            self.rhs(tmp, k4)
            k2 += k3
            k2 *= 2.0
            k2 += k1
            k2 += k4
            k2 *= h / 6.0
            y += k2
        else:
            k1 *= h
            y += k1
        if not np.isfinite(y.sum()):
            raise DivergenceError(it, "non-finite state")
        self.rhs(y, k1)
        if np.abs(k1).max() > limit:
            raise DivergenceError(it, "residual grew by more than 1e6")


def relax(M: np.ndarray, drive: np.ndarray, cfg: SolverConfig):
    """Integrate ``dy/dt = f(y M^T + drive) - y`` from ``y = 0``.

    ``drive`` holds the constant part of the input (one row per sample).
    Returns ``(y, residual_norm)`` with the residual ``||dy/dt||_2`` at the
    final state of each sample.

    ``M`` may also be a stack ``(P, n, n)`` of independent systems with
    ``drive`` of shape ``(P, N, n)``; the extension is unavailable then.
    """
    if M.ndim > 2 and cfg.max_iterations not in (None, cfg.iterations):
        raise ValueError("stacked systems need max_iterations=None")
    r = _Relaxation(M, drive, cfg)
    limit = GROWTH_LIMIT * max(float(np.abs(r.k1).max()), 1e-300)
    for it in range(1, cfg.iterations + 1):
        r.step(it, limit)
    y, k1 = r.y, r.k1
    if cfg.max_iterations is None or cfg.max_iterations == cfg.iterations:
        return y, _residual_norm(k1)

    batched = y.ndim > 1
    y_all = y if batched else y[None, :]
    res_all = np.linalg.norm(k1, axis=-1) if batched else np.atleast_1d(np.linalg.norm(k1))
    active = np.flatnonzero(res_all > cfg.tolerance)
    if active.size:
        if not batched:
            r.y, r.k1, r.neg_drive = r.y[None, :], r.k1[None, :], r.neg_drive[None, :]
        r.restrict(active)
        for it in range(cfg.iterations + 1, cfg.max_iterations + 1):
            r.step(it, limit)
            res = np.linalg.norm(r.k1, axis=-1)
            done = res <= cfg.tolerance
            if done.any() or it == cfg.max_iterations:
                finished = done | (it == cfg.max_iterations)
                y_all[active[finished]] = r.y[finished]
                res_all[active[finished]] = res[finished]
                if finished.all():
                    break
                keep = ~finished
                active = active[keep]
                r.restrict(keep)
    if batched:
        return y_all, res_all
    return y_all[0], float(res_all[0])


def _check_one_layer(params, x):
    n_out, n_in = params.Q.shape
    if x.shape[-1] != n_in:
        raise ShapeError(f"input of shape {x.shape} does not match Q of shape {params.Q.shape}")
    if params.W.shape != (n_out, n_out) or params.T.shape != (n_out,):
        raise ShapeError(f"inconsistent one-layer parameters: W {params.W.shape}, T {params.T.shape}")


def relaxation_rhs_one_layer(params, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_one_layer(params, x)
    drive = x @ params.Q.T + params.T
    return sigmoid(drive + y @ params.W.T) - y


def solve_one_layer(params, x: np.ndarray, cfg: SolverConfig = SolverConfig()) -> Equilibrium:
    x = np.asarray(x, dtype=float)
    _check_one_layer(params, x)
    y, res = relax(params.W, x @ params.Q.T + params.T, cfg)
    return Equilibrium(y, res, bool(np.all(np.asarray(res) <= cfg.tolerance)))


def euler_iterate(params, x: np.ndarray, h: float, steps: int, tolerance: float = 1e-6) -> Equilibrium:
    """Explicit Euler relaxation; ``h = 1`` is the plain iterative update."""
    return solve_one_layer(params, x, SolverConfig("euler", steps, h, tolerance, max_iterations=None))


def solve_two_layer(params, x: np.ndarray, cfg: SolverConfig = SolverConfig()) -> TwoLayerEquilibrium:
    """Relax both coupled layers together as one stacked state ``[y_l2, y_l1]``."""
    x = np.asarray(x, dtype=float)
    n_h, n_in = params.Q_L2.shape
    if x.shape[-1] != n_in:
        raise ShapeError(f"input of shape {x.shape} does not match Q_L2 of shape {params.Q_L2.shape}")
    n_out = params.W_L1.shape[0]
    M = np.block([[params.W_L2, params.R], [params.Q_L1, params.W_L1]])
    drive2 = x @ params.Q_L2.T + params.T_L2
    drive = np.concatenate([drive2, np.broadcast_to(params.T_L1, drive2.shape[:-1] + (n_out,))], axis=-1)
    state, res = relax(M, drive, cfg)
    return TwoLayerEquilibrium(
        state[..., n_h:], state[..., :n_h], res, bool(np.all(np.asarray(res) <= cfg.tolerance))
    )
