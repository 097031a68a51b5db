"""XOR truth table and damped-oscillator regression data."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numeric import make_rng, rng_normal, rng_uniform

DT = 0.1
DEFAULT_L = 50
CRITICAL_TOL = 1e-9
OMEGA0_RANGE = (1.0, 2.0)
DELTA_RANGE = (0.0, 2.0)
TARGET_RANGE = (0.1, 0.9)
DATASET_MAGIC = "IRNN-PENDULUM v1"


# ------------------------------------------------------------------------ XOR

@dataclass(frozen=True)
class XorSample:
    x: tuple[float, float]
    y_xor: float
    y_nor: float


def xor_dataset() -> list[XorSample]:
    rows = []
    for a in (0, 1):
        for b in (0, 1):
            rows.append(XorSample((float(a), float(b)), float(a ^ b), float(not (a or b))))
    return rows


def xor_arrays() -> tuple[np.ndarray, np.ndarray]:
    """Inputs ``(4, 2)`` and targets ``(4, 2)`` with columns (xor, nor)."""
    rows = xor_dataset()
    X = np.array([r.x for r in rows])
    Y = np.array([[r.y_xor, r.y_nor] for r in rows])
    return X, Y


# ----------------------------------------------------------------- oscillator

def oscillator_trajectory(omega0, delta, x0, v0, L: int = DEFAULT_L, dt: float = DT) -> np.ndarray:
    """Closed-form solution of ``x'' + 2 delta x' + omega0^2 x = 0`` at ``t_k = k dt``.

    Scalar or array parameters are accepted; array inputs give one trajectory
    per row. The overdamped branch is written with cosh/sinh, which equals the
    two-exponential form but stays accurate next to the critical line.
    """
    omega0 = np.asarray(omega0, dtype=float)
    delta = np.asarray(delta, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if np.any(omega0 <= 0) or np.any(delta < 0):
        raise ValueError("need omega0 > 0 and delta >= 0")
    if L < 2 or not dt > 0:
        raise ValueError("need L >= 2 and dt > 0")
    omega0, delta, x0, v0 = np.broadcast_arrays(omega0, delta, x0, v0)
    t = np.arange(L) * dt
    shape = omega0.shape + (L,)
    om, de, a, b = (v[..., None] for v in (omega0, delta, x0, v0))
    c = b + de * a                       # x'(0) + delta x(0)
    decay = np.exp(-de * t)
    gap = om**2 - de**2
    under = (gap > 0) & (np.abs(de - om) > CRITICAL_TOL)
    over = (gap < 0) & (np.abs(de - om) > CRITICAL_TOL)

    out = np.broadcast_to(decay * (a + c * t), shape).copy()  # critical
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.sqrt(np.abs(gap))
        osc = decay * (a * np.cos(w * t) + c * np.sin(w * t) / w)
        hyp = decay * (a * np.cosh(w * t) + c * np.sinh(w * t) / w)
    out = np.where(np.broadcast_to(under, shape), osc, out)
    out = np.where(np.broadcast_to(over, shape), hyp, out)
    return out


def rk4_trajectory(omega0, delta, x0, v0, L: int = DEFAULT_L, dt: float = DT, h: float = 1e-3) -> np.ndarray:
    """Numerical reference: fixed-step RK4 of the first-order system, sampled every ``dt``."""
    sub = int(round(dt / h))
    h = dt / sub

    def f(s):
        return np.array([s[1], -2.0 * delta * s[1] - omega0**2 * s[0]])

    s = np.array([x0, v0], dtype=float)
    out = np.empty(L)
    out[0] = s[0]
    for k in range(1, L):
        for _ in range(sub):
            k1 = f(s)
            k2 = f(s + 0.5 * h * k1)
            k3 = f(s + 0.5 * h * k2)
            k4 = f(s + h * k3)
            s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k] = s[0]
    return out


# ---------------------------------------------------------------- normalising

def _affine(value, lo, hi, name):
    value = np.asarray(value, dtype=float)
    if np.any(value < lo) or np.any(value > hi):
        raise ValueError(f"{name} outside [{lo}, {hi}]")
    a, b = TARGET_RANGE
    return a + (b - a) * (value - lo) / (hi - lo)


def normalize_targets(omega0, delta) -> np.ndarray:
    """Map physical (omega0, delta) into the sigmoid-friendly box [0.1, 0.9]^2."""
    return np.stack(
        [_affine(omega0, *OMEGA0_RANGE, "omega0"), _affine(delta, *DELTA_RANGE, "delta")], axis=-1
    )


def denormalize_targets(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    a, b = TARGET_RANGE
    frac = (y - a) / (b - a)
    lo = np.array([OMEGA0_RANGE[0], DELTA_RANGE[0]])
    hi = np.array([OMEGA0_RANGE[1], DELTA_RANGE[1]])
    return lo + frac * (hi - lo)


# -------------------------------------------------------------------- dataset

@dataclass(frozen=True)
class OscillatorSample:
    trajectory: np.ndarray
    omega0: float
    delta: float
    x0: float
    v0: float


@dataclass
class DatasetMeta:
    L: int
    seed: int
    n_train: int
    n_test: int
    dt: float = DT


@dataclass
class PendulumDataset:
    X: np.ndarray
    omega0: np.ndarray
    delta: np.ndarray
    x0: np.ndarray
    v0: np.ndarray
    meta: DatasetMeta
    targets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.targets = normalize_targets(self.omega0, self.delta)

    def __len__(self):
        return self.X.shape[0]

    @property
    def raw_targets(self) -> np.ndarray:
        return np.stack([self.omega0, self.delta], axis=-1)

    def split(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        n = self.meta.n_train
        sl = slice(0, n) if which == "train" else slice(n, None)
        return self.X[sl], self.targets[sl]

    def sample(self, i: int) -> OscillatorSample:
        return OscillatorSample(self.X[i], self.omega0[i], self.delta[i], self.x0[i], self.v0[i])


def _draw(rng, n):
    omega0 = rng_uniform(rng, *OMEGA0_RANGE, n)
    delta = rng_uniform(rng, *DELTA_RANGE, n)
    x0 = rng_normal(rng, 0.0, 2.0, n)
    v0 = rng_normal(rng, 0.0, 2.0, n)
    return np.stack([omega0, delta, x0, v0], axis=1)


def generate_pendulum_dataset(n_samples: int, L: int = DEFAULT_L, seed: int = 0) -> PendulumDataset:
    """Draw ``n_samples`` unique (omega0, delta, x0, v0) tuples and their trajectories.

    Draws come in blocks (all omega0, then delta, then x0, then v0); any exact
    duplicate tuple is discarded and replaced from a further block. The first
    80% in generation order form the training split.
    """
    if n_samples < 5:
        raise ValueError("need at least 5 samples for a 4:1 split")
    rng = make_rng(seed)
    params = np.empty((0, 4))
    seen = set()
    while params.shape[0] < n_samples:
        keep = []
        for row in _draw(rng, n_samples - params.shape[0]):
            key = tuple(row)
            if key not in seen:
                seen.add(key)
                keep.append(row)
        if keep:
            params = np.vstack([params, keep])
    omega0, delta, x0, v0 = params.T
    X = oscillator_trajectory(omega0, delta, x0, v0, L, DT)
    n_train = (4 * n_samples) // 5
    meta = DatasetMeta(L=L, seed=seed, n_train=n_train, n_test=n_samples - n_train)
    return PendulumDataset(X, omega0, delta, x0, v0, meta)


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def save_dataset(ds: PendulumDataset, path) -> None:
    L = ds.meta.L
    lines = [
        f"# {DATASET_MAGIC}, L={L}, dt={ds.meta.dt:g}, seed={ds.meta.seed}",
        ",".join([f"x_{k}" for k in range(L)] + ["omega0", "delta", "x0", "v0", "split"]),
    ]
    for i in range(len(ds)):
        vals = list(ds.X[i]) + [ds.omega0[i], ds.delta[i], ds.x0[i], ds.v0[i]]
        split = "train" if i < ds.meta.n_train else "test"
        lines.append(",".join(f"{v:.17g}" for v in vals) + "," + split)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path) -> PendulumDataset:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(f"# {DATASET_MAGIC}"):
        raise DatasetFormatError(f"missing '# {DATASET_MAGIC}' header", 1)
    try:
        fields_ = dict(part.strip().split("=") for part in lines[0].split(",")[1:])
        L, seed, dt = int(fields_["L"]), int(fields_["seed"]), float(fields_["dt"])
    except (ValueError, KeyError):
        raise DatasetFormatError("malformed header", 1) from None
    if len(lines) < 2:
        raise DatasetFormatError("missing column header", 2)
    cols = lines[1].split(",")
    if len(cols) != L + 5 or cols[-1] != "split":
        raise DatasetFormatError(f"expected {L + 5} columns ending in 'split'", 2)
    rows, splits = [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != L + 5:
            raise DatasetFormatError(f"expected {L + 5} fields, found {len(parts)}", lineno)
        if parts[-1] not in ("train", "test"):
            raise DatasetFormatError(f"bad split label {parts[-1]!r}", lineno)
        try:
            rows.append([float(v) for v in parts[:-1]])
        except ValueError:
            raise DatasetFormatError("malformed number", lineno) from None
        splits.append(parts[-1])
    if not rows:
        raise DatasetFormatError("no samples", len(lines))
    n_train = splits.count("train")
    if splits != ["train"] * n_train + ["test"] * (len(splits) - n_train):
        raise DatasetFormatError("train rows must precede test rows")
    data = np.array(rows)
    meta = DatasetMeta(L=L, seed=seed, n_train=n_train, n_test=len(rows) - n_train, dt=dt)
    return PendulumDataset(data[:, :L], data[:, L], data[:, L + 1], data[:, L + 2], data[:, L + 3], meta)
