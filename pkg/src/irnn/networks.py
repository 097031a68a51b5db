"""Parameter containers, initialisation, forward passes and model files."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .equilibrium import Equilibrium, SolverConfig, TwoLayerEquilibrium, solve_one_layer, solve_two_layer
from .numeric import ShapeError, rng_uniform, sigmoid

MODEL_MAGIC = "IRNN-MODEL v1"


class _Blocks:
    """Mixin giving dataclass parameter sets an ordered name -> array view."""

    def blocks(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self):
        return type(self)(**{k: v.copy() for k, v in self.blocks().items()})

    def n_parameters(self) -> int:
        return sum(v.size for v in self.blocks().values())

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.blocks().values(), other.blocks().values()))


@dataclass(eq=False)
class OneLayerParams(_Blocks):
    Q: np.ndarray
    W: np.ndarray
    T: np.ndarray

    arch = "one-layer"

    @property
    def dims(self):
        return self.Q.shape[1], None, self.Q.shape[0]


@dataclass(eq=False)
class TwoLayerParams(_Blocks):
    Q_L2: np.ndarray
    W_L2: np.ndarray
    R: np.ndarray
    T_L2: np.ndarray
    Q_L1: np.ndarray
    W_L1: np.ndarray
    T_L1: np.ndarray

    arch = "two-layer"

    @property
    def dims(self):
        return self.Q_L2.shape[1], self.Q_L2.shape[0], self.Q_L1.shape[0]


@dataclass(eq=False)
class FeedForwardParams(_Blocks):
    Q_L2: np.ndarray
    T_L2: np.ndarray
    Q_L1: np.ndarray
    T_L1: np.ndarray

    arch = "feedforward"

    @property
    def dims(self):
        return self.Q_L2.shape[1], self.Q_L2.shape[0], self.Q_L1.shape[0]


ARCHS = {cls.arch: cls for cls in (OneLayerParams, TwoLayerParams, FeedForwardParams)}


def _check_dims(*dims):
    if any(int(d) < 1 for d in dims):
        raise ValueError(f"all layer sizes must be positive, got {dims}")


def _uniform(rng, shape):
    return rng_uniform(rng, -0.5, 0.5, shape)


# Draw order is part of the contract: layer 2 before layer 1, Q before T,
# row-major within each block. Recurrent blocks start at zero and draw nothing.

def init_one_layer(n_in: int, n_out: int, rng: np.random.Generator) -> OneLayerParams:
    _check_dims(n_in, n_out)
    Q = _uniform(rng, (n_out, n_in))
    T = _uniform(rng, n_out)
    return OneLayerParams(Q=Q, W=np.zeros((n_out, n_out)), T=T)


def init_two_layer(n_in: int, n_h: int, n_out: int, rng: np.random.Generator) -> TwoLayerParams:
    _check_dims(n_in, n_h, n_out)
    Q_L2 = _uniform(rng, (n_h, n_in))
    T_L2 = _uniform(rng, n_h)
    Q_L1 = _uniform(rng, (n_out, n_h))
    T_L1 = _uniform(rng, n_out)
    return TwoLayerParams(
        Q_L2=Q_L2, W_L2=np.zeros((n_h, n_h)), R=np.zeros((n_h, n_out)), T_L2=T_L2,
        Q_L1=Q_L1, W_L1=np.zeros((n_out, n_out)), T_L1=T_L1,
    )


def init_feedforward(n_in: int, n_h: int, n_out: int, rng: np.random.Generator) -> FeedForwardParams:
    _check_dims(n_in, n_h, n_out)
    Q_L2 = _uniform(rng, (n_h, n_in))
    T_L2 = _uniform(rng, n_h)
    Q_L1 = _uniform(rng, (n_out, n_h))
    T_L1 = _uniform(rng, n_out)
    return FeedForwardParams(Q_L2=Q_L2, T_L2=T_L2, Q_L1=Q_L1, T_L1=T_L1)


def forward_one_layer(params: OneLayerParams, x, cfg: SolverConfig = SolverConfig()) -> Equilibrium:
    return solve_one_layer(params, x, cfg)


def forward_two_layer(params: TwoLayerParams, x, cfg: SolverConfig = SolverConfig()) -> TwoLayerEquilibrium:
    return solve_two_layer(params, x, cfg)


def forward_feedforward_hidden(params: FeedForwardParams, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(y_l1, y_l2)``: output and hidden activations."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.Q_L2.shape[1]:
        raise ShapeError(f"input of shape {x.shape} does not match Q_L2 of shape {params.Q_L2.shape}")
    y2 = sigmoid(x @ params.Q_L2.T + params.T_L2)
    y1 = sigmoid(y2 @ params.Q_L1.T + params.T_L1)
    return y1, y2


def forward_feedforward(params: FeedForwardParams, x) -> np.ndarray:
    return forward_feedforward_hidden(params, x)[0]


def predict(params, x, cfg: SolverConfig = SolverConfig()):
    """Network output for any architecture, plus the equilibrium (None for feed-forward)."""
    if isinstance(params, FeedForwardParams):
        return forward_feedforward(params, x), None
    if isinstance(params, TwoLayerParams):
        eq = solve_two_layer(params, x, cfg)
        return eq.y_l1, eq
    eq = solve_one_layer(params, x, cfg)
    return eq.y, eq


def count_parameters(arch: str, n_in: int, n_h: int | None, n_out: int) -> int:
    if arch == "one-layer":
        _check_dims(n_in, n_out)
        return n_out * n_in + n_out * n_out + n_out
    _check_dims(n_in, n_h or 0, n_out)
    ff = n_h * n_in + n_h + n_out * n_h + n_out
    if arch == "feedforward":
        return ff
    if arch == "two-layer":
        return ff + n_h * n_h + n_out * n_out + n_h * n_out
    raise ValueError(f"unknown architecture {arch!r}")


# ---------------------------------------------------------------- persistence

class ModelFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def save_model(params, path) -> None:
    n_in, n_h, n_out = params.dims
    lines = [MODEL_MAGIC, f"arch {params.arch} n_in {n_in} n_h {'-' if n_h is None else n_h} n_out {n_out}"]
    for name, block in params.blocks().items():
        mat = block.reshape(-1, 1) if block.ndim == 1 else block
        lines.append(f"[matrix {name} {mat.shape[0]} {mat.shape[1]}]")
        for row in mat:
            lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ModelFormatError("empty model file", 1)
    if lines[0].strip() != MODEL_MAGIC:
        if lines[0].startswith("IRNN-MODEL"):
            raise ModelFormatError(f"unsupported version {lines[0].split()[-1]!r}", 1)
        raise ModelFormatError("missing IRNN-MODEL header", 1)
    if len(lines) < 2:
        raise ModelFormatError("missing architecture line", 2)
    head = lines[1].split()
    if len(head) != 8 or head[0] != "arch" or head[2] != "n_in" or head[4] != "n_h" or head[6] != "n_out":
        raise ModelFormatError("malformed architecture line", 2)
    arch = head[1]
    if arch not in ARCHS:
        raise ModelFormatError(f"unknown architecture {arch!r}", 2)
    cls = ARCHS[arch]
    try:
        n_in, n_out = int(head[3]), int(head[7])
        n_h = None if head[5] == "-" else int(head[5])
    except ValueError:
        raise ModelFormatError("non-integer layer size", 2) from None

    expected = {f.name: None for f in fields(cls)}
    blocks = {}
    i = 2
    while i < len(lines):
        lineno = i + 1
        text = lines[i].strip()
        if not text:
            i += 1
            continue
        parts = text.strip("[]").split()
        if not (text.startswith("[") and text.endswith("]")) or len(parts) != 4 or parts[0] != "matrix":
            raise ModelFormatError(f"expected block header, got {text!r}", lineno)
        name = parts[1]
        if name not in expected:
            raise ModelFormatError(f"unexpected block {name!r} for {arch}", lineno)
        try:
            rows, cols = int(parts[2]), int(parts[3])
        except ValueError:
            raise ModelFormatError("non-integer block shape", lineno) from None
        data = np.empty((rows, cols))
        for r in range(rows):
            i += 1
            if i >= len(lines):
                raise ModelFormatError(f"truncated block {name}: expected {rows} rows", i + 1)
            vals = lines[i].split()
            if len(vals) != cols:
                raise ModelFormatError(f"expected {cols} values, found {len(vals)}", i + 1)
            try:
                data[r] = [float(v) for v in vals]
            except ValueError:
                raise ModelFormatError("malformed number", i + 1) from None
        blocks[name] = data
        i += 1

    missing = [k for k in expected if k not in blocks]
    if missing:
        raise ModelFormatError(f"missing blocks {missing}", len(lines))
    for name in ("T", "T_L2", "T_L1"):
        if name in blocks:
            if blocks[name].shape[1] != 1:
                raise ModelFormatError(f"bias block {name} must have one column")
            blocks[name] = blocks[name][:, 0]
    params = cls(**{k: blocks[k] for k in expected})
    if params.dims != (n_in, n_h, n_out):
        raise ModelFormatError(f"block shapes {params.dims} disagree with declared sizes {(n_in, n_h, n_out)}", 2)
    _validate_shapes(params)
    return params


def _validate_shapes(params) -> None:
    n_in, n_h, n_out = params.dims
    want = {
        "Q": (n_out, n_in), "W": (n_out, n_out), "T": (n_out,),
        "Q_L2": (n_h, n_in), "W_L2": (n_h, n_h), "R": (n_h, n_out), "T_L2": (n_h,),
        "Q_L1": (n_out, n_h), "W_L1": (n_out, n_out), "T_L1": (n_out,),
    }
    for name, block in params.blocks().items():
        if block.shape != want[name]:
            raise ModelFormatError(f"block {name} has shape {block.shape}, expected {want[name]}")
