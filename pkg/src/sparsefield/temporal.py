"""Temporal model for the full-sensing coefficients.

A single-layer LSTM with a linear read-out, written in plain numpy and
trained by truncated backpropagation through time with Adam.  Inputs are
``d(t) = [a(t-1), ..., a(t-l_a), u(t), ..., u(t-l_u+1)]`` (or the
``u(t-1)...`` convention when ``current_input`` is off) and the target is
``a(t)``.  With ``residual`` set, the read-out predicts the increment
``a(t) - a(t-1)`` and the lag-1 coefficients are added back, which keeps
slow, smooth dynamics from being swamped by the identity part of the map.
Everything runs in float64 so finite-difference checks are
meaningful.

Gate rows in the stacked weight matrices are ordered forget, input, output,
candidate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, InsufficientDataError, NumericalError, TrainingError

__all__ = [
    "TrainConfig",
    "Standardizer",
    "LstmModel",
    "LstmState",
    "ArModel",
    "build_features",
    "init_model",
    "lstm_step",
    "train",
    "predict_step",
    "predict_sequence",
    "new_state",
    "gate_activations",
    "gradient_check",
    "fit_ar_baseline",
]

log = logging.getLogger(__name__)

PARAM_NAMES = ("W", "U", "b", "V", "c")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 1e-3
    seq_len: int = 50
    batch_size: int = 2
    seed: int = 0
    val_fraction: float = 0.2
    patience: int = 50
    hidden_dim: int = 32
    forget_bias: float = 1.0
    clip_norm: float = 5.0
    lag_a: int = 1
    lag_u: int = 1
    current_input: bool = True
    residual: bool = False

    def __post_init__(self):
        for name in ("epochs", "seq_len", "batch_size", "patience", "hidden_dim", "lag_a"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.lag_u < 0:
            raise ConfigError("lag_u must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.val_fraction <= 0.5:
            raise ConfigError("val_fraction must lie in [0, 0.5]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension affine scaling ``(x - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=float).reshape(-1, np.shape(x)[-1])
        std = x.std(axis=0)
        std[~(std > 1e-12 * np.maximum(1.0, np.abs(x.mean(axis=0))))] = 1.0
        return cls(x.mean(axis=0), std)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def scale(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def descale(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": np.asarray(self.mean).tolist(), "std": np.asarray(self.std).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def _sigmoid(z):
    # split form avoids overflow warnings for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmModel:
    """Weights, scalers and the feature layout of a trained temporal model.

    ``params`` maps ``W`` (4H x D), ``U`` (4H x H), ``b`` (4H), ``V`` (n x H)
    and ``c`` (n) to arrays.
    """

    params: dict
    n_coeffs: int
    n_inputs: int
    in_scaler: Standardizer
    out_scaler: Standardizer
    config: TrainConfig = field(default_factory=TrainConfig)
    report: dict = field(default_factory=dict)

    @property
    def hidden_dim(self) -> int:
        return self.params["U"].shape[1]

    @property
    def input_dim(self) -> int:
        return self.params["W"].shape[1]

    def copy(self) -> "LstmModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()},
                       report=dict(self.report))

    def check_finite(self):
        bad = [k for k, v in self.params.items() if not np.all(np.isfinite(v))]
        if bad:
            raise NumericalError(f"non-finite LSTM parameters: {bad}")


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray
    history_a: np.ndarray  # (lag_a, n) most recent first
    history_u: np.ndarray  # (max(lag_u, 1), n_u) most recent first

    def copy(self) -> "LstmState":
        return LstmState(self.h.copy(), self.c.copy(), self.history_a.copy(), self.history_u.copy())


def feature_dim(n_coeffs: int, n_inputs: int, cfg: TrainConfig) -> int:
    return n_coeffs * cfg.lag_a + n_inputs * cfg.lag_u


def build_features(a: np.ndarray, u: np.ndarray, lag_a: int = 1, lag_u: int = 1,
                   current_input: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Lagged regressors and one-step targets from aligned series.

    Parameters
    ----------
    a : ndarray, shape (n, L)
        Coefficient series.
    u : ndarray, shape (n_u, L)
        Input series aligned column-by-column with ``a``.

    Returns
    -------
    d : ndarray, shape (L - p, n * lag_a + n_u * lag_u)
    target : ndarray, shape (L - p, n)
        where ``p`` is the number of leading samples consumed by the lags.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    if u.shape[1] != a.shape[1]:
        raise DimensionError(f"inputs have {u.shape[1]} columns, coefficients {a.shape[1]}")
    shift = 0 if current_input else 1
    p = max(lag_a, lag_u - 1 + shift)
    length = a.shape[1]
    if length - p < 1:
        raise InsufficientDataError(f"series of length {length} too short for lags")
    t = np.arange(p, length)
    cols = [a[:, t - k].T for k in range(1, lag_a + 1)]
    cols += [u[:, t - k - shift].T for k in range(lag_u)]
    return np.hstack(cols), a[:, t].T.copy()


def init_model(n_coeffs: int, n_inputs: int, cfg: TrainConfig = TrainConfig(),
               rng: np.random.Generator | None = None) -> LstmModel:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    hdim = cfg.hidden_dim
    dim = feature_dim(n_coeffs, n_inputs, cfg)
    k = 1.0 / np.sqrt(hdim)
    params = {
        "W": rng.uniform(-k, k, (4 * hdim, dim)),
        "U": rng.uniform(-k, k, (4 * hdim, hdim)),
        "b": rng.uniform(-k, k, 4 * hdim),
        "V": rng.uniform(-k, k, (n_coeffs, hdim)),
        "c": rng.uniform(-k, k, n_coeffs),
    }
    params["b"][:hdim] = cfg.forget_bias
    return LstmModel(params, n_coeffs, n_inputs, Standardizer.identity(dim),
                     Standardizer.identity(n_coeffs), cfg)


def _cell(p: dict, x, h_prev, c_prev):
    """One gated update on scaled inputs; works on (D,) or (B, D)."""
    hdim = p["U"].shape[1]
    z = x @ p["W"].T + h_prev @ p["U"].T + p["b"]
    f = _sigmoid(z[..., :hdim])
    i = _sigmoid(z[..., hdim:2 * hdim])
    o = _sigmoid(z[..., 2 * hdim:3 * hdim])
    g = np.tanh(z[..., 3 * hdim:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (f, i, o, g, tc)


def lstm_step(model: LstmModel, d, h_prev, c_prev):
    """Advance the cell by one step on an unscaled input vector.

    Returns the new hidden and cell states and the de-scaled prediction.
    """
    d = np.asarray(d, dtype=float)
    if d.shape[-1] != model.input_dim:
        raise DimensionError(f"input has {d.shape[-1]} features, model expects {model.input_dim}")
    if not np.all(np.isfinite(d)):
        raise NumericalError("non-finite LSTM input")
    model.check_finite()
    x = model.in_scaler.scale(d)
    h, c, _ = _cell(model.params, x, np.asarray(h_prev, float), np.asarray(c_prev, float))
    y = h @ model.params["V"].T + model.params["c"]
    a_hat = model.out_scaler.descale(y)
    if model.config.residual:
        a_hat = a_hat + d[..., :model.n_coeffs]
    return h, c, a_hat


def gate_activations(model: LstmModel, d_seq: np.ndarray) -> dict:
    """Gate values over a teacher-forced pass, for range checks."""
    x = model.in_scaler.scale(d_seq)
    h = np.zeros(model.hidden_dim)
    c = np.zeros(model.hidden_dim)
    out = {"f": [], "i": [], "o": [], "g": []}
    for row in x:
        h, c, (f, i, o, g, _) = _cell(model.params, row, h, c)
        for key, val in zip("fiog", (f, i, o, g)):
            out[key].append(val)
    return {k: np.array(v) for k, v in out.items()}


# ----------------------------------------------------------------------------
# sequence forward / backward on scaled data, shapes (T, B, D)


def _forward(p: dict, x: np.ndarray):
    steps, batch, _ = x.shape
    hdim = p["U"].shape[1]
    h = np.zeros((batch, hdim))
    c = np.zeros((batch, hdim))
    hs, cs, caches = [h], [c], []
    for t in range(steps):
        h, c, cache = _cell(p, x[t], h, c)
        hs.append(h)
        cs.append(c)
        caches.append(cache)
    hstack = np.stack(hs[1:])
    y = hstack @ p["V"].T + p["c"]
    return y, (hs, cs, caches)


def _loss(y, target):
    return float(np.mean((y - target) ** 2))


def _backward(p: dict, x: np.ndarray, target: np.ndarray, y, tape) -> dict:
    hs, cs, caches = tape
    steps, batch, _ = x.shape
    hdim = p["U"].shape[1]
    dy = 2.0 * (y - target) / y.size
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    grads["V"] = np.einsum("tbn,tbh->nh", dy, np.stack(hs[1:]))
    grads["c"] = dy.sum(axis=(0, 1))
    dh_next = np.zeros((batch, hdim))
    dc_next = np.zeros((batch, hdim))
    dz_all = np.empty((steps, batch, 4 * hdim))
    for t in range(steps - 1, -1, -1):
        f, i, o, g, tc = caches[t]
        dh = dy[t] @ p["V"] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc ** 2) + dc_next
        df = dc * cs[t]
        di = dc * g
        dg = dc * i
        dz = np.concatenate([df * f * (1 - f), di * i * (1 - i),
                             do * o * (1 - o), dg * (1 - g ** 2)], axis=1)
        dz_all[t] = dz
        dh_next = dz @ p["U"]
        dc_next = dc * f
    grads["W"] = np.einsum("tbz,tbd->zd", dz_all, x)
    grads["U"] = np.einsum("tbz,tbh->zh", dz_all, np.stack(hs[:-1]))
    grads["b"] = dz_all.sum(axis=(0, 1))
    return grads


def loss_and_grads(p: dict, x: np.ndarray, target: np.ndarray):
    y, tape = _forward(p, x)
    return _loss(y, target), _backward(p, x, target, y, tape)


class _Adam:
    def __init__(self, params: dict, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in params:
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * grads[k]
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * grads[k] ** 2
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _windows(x: np.ndarray, y: np.ndarray, seq_len: int, offset: int = 0):
    """Non-overlapping windows, returned as (T, W, D) arrays."""
    n = (x.shape[0] - offset) // seq_len
    if n < 1:
        return None
    stop = offset + n * seq_len
    xw = x[offset:stop].reshape(n, seq_len, -1).transpose(1, 0, 2)
    yw = y[offset:stop].reshape(n, seq_len, -1).transpose(1, 0, 2)
    return xw, yw


def _as_pairs(sequences) -> list[tuple[np.ndarray, np.ndarray]]:
    pairs = []
    for d, target in sequences:
        d = np.atleast_2d(np.asarray(d, dtype=float))
        target = np.asarray(target, dtype=float)
        if target.ndim == 1:
            target = target[:, None]
        if d.shape[0] != target.shape[0]:
            raise DimensionError("regressor and target series differ in length")
        if d.shape[0] < 2:
            raise InsufficientDataError("each training series needs at least 2 steps")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(target))):
            raise NumericalError("training data contains non-finite values")
        pairs.append((d, target))
    if not pairs:
        raise InsufficientDataError("no training sequences")
    return pairs


def train(sequences: Sequence[tuple[np.ndarray, np.ndarray]], cfg: TrainConfig = TrainConfig(),
          n_inputs: int | None = None) -> LstmModel:
    """Fit an LSTM to one-step-ahead targets.

    Parameters
    ----------
    sequences : list of (d, target)
        ``d`` is ``(T, D)`` regressors as produced by :func:`build_features`,
        ``target`` the matching ``(T, n)`` next coefficients.
    cfg : TrainConfig
    n_inputs : int, optional
        Number of exogenous inputs, needed to split ``D`` into its coefficient
        and input parts.  Inferred from ``cfg`` lags when omitted.

    Training windows of ``cfg.seq_len`` start from zero state; the last
    ``val_fraction`` of every series is held out for early stopping and the
    best parameters seen on it are returned.
    """
    pairs = _as_pairs(sequences)
    n_coeffs = pairs[0][1].shape[1]
    dim = pairs[0][0].shape[1]
    if n_inputs is None:
        n_inputs = (dim - n_coeffs * cfg.lag_a) // max(cfg.lag_u, 1) if cfg.lag_u else 0
    if feature_dim(n_coeffs, n_inputs, cfg) != dim:
        raise DimensionError(f"feature width {dim} inconsistent with lags and n={n_coeffs}")

    rng = np.random.default_rng(cfg.seed)
    model = init_model(n_coeffs, n_inputs, cfg, rng)

    fit_parts, val_parts = [], []
    for d, target in pairs:
        split = d.shape[0] - int(np.floor(cfg.val_fraction * d.shape[0]))
        split = max(split, 2)
        fit_parts.append((d[:split], target[:split]))
        if split < d.shape[0]:
            val_parts.append((d[split:], target[split:]))
    model.in_scaler = Standardizer.fit(np.vstack([d for d, _ in fit_parts]))
    if cfg.residual:
        fit_parts = [(d, t - d[:, :n_coeffs]) for d, t in fit_parts]
        val_parts = [(d, t - d[:, :n_coeffs]) for d, t in val_parts]
    model.out_scaler = Standardizer.fit(np.vstack([t for _, t in fit_parts]))
    fit_scaled = [(model.in_scaler.scale(d), model.out_scaler.scale(t)) for d, t in fit_parts]
    val_scaled = [(model.in_scaler.scale(d), model.out_scaler.scale(t)) for d, t in val_parts]

    seq_len = min(cfg.seq_len, min(d.shape[0] for d, _ in fit_scaled))
    val_windows = [w for w in (_windows(d, t, min(seq_len, d.shape[0])) for d, t in val_scaled) if w]

    def evaluate(p) -> float:
        if not val_windows:
            return float("nan")
        total, count = 0.0, 0
        for xw, yw in val_windows:
            y, _ = _forward(p, xw)
            total += float(np.sum((y - yw) ** 2))
            count += yw.size
        return total / count

    params = model.params
    opt = _Adam(params, cfg.learning_rate)
    best = {k: v.copy() for k, v in params.items()}
    best_score, best_epoch, stale = np.inf, 0, 0
    history = []
    for epoch in range(cfg.epochs):
        xs, ys = [], []
        for d, t in fit_scaled:
            w = _windows(d, t, seq_len, int(rng.integers(0, seq_len)) if d.shape[0] >= 2 * seq_len else 0)
            if w is not None:
                xs.append(w[0])
                ys.append(w[1])
        xw = np.concatenate(xs, axis=1)
        yw = np.concatenate(ys, axis=1)
        order = rng.permutation(xw.shape[1])
        epoch_loss, batches = 0.0, 0
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            # divergence is detected below; silence numpy on the way there
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grads(params, xw[:, idx], yw[:, idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"training diverged at epoch {epoch} (loss={loss}); "
                    f"last finite losses {history[-3:]}; try a smaller learning rate"
                )
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > cfg.clip_norm:
                for g in grads.values():
                    g *= cfg.clip_norm / norm
            opt.step(params, grads)
            epoch_loss += loss
            batches += 1
        train_loss = epoch_loss / batches
        with np.errstate(over="ignore", invalid="ignore"):
            val_loss = evaluate(params)
        history.append(train_loss)
        score = val_loss if np.isfinite(val_loss) else train_loss
        if score < best_score:
            best_score, best_epoch, stale = score, epoch, 0
            best = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best
    model.check_finite()

    full = [(model.in_scaler.scale(d), model.out_scaler.scale(t)) for d, t in fit_parts]
    resid = [(_forward(best, w[0])[0] - w[1]).ravel()
             for w in (_windows(d, t, seq_len) for d, t in full) if w]
    fit_mse = float(np.mean(np.concatenate(resid) ** 2))
    model.report = {
        "train_loss": fit_mse,
        "val_loss": float(evaluate(best)),
        "epochs_run": epoch + 1,
        "best_epoch": best_epoch,
    }
    log.debug("lstm trained: %s", model.report)
    return model


def new_state(model: LstmModel) -> LstmState:
    cfg = model.config
    return LstmState(np.zeros(model.hidden_dim), np.zeros(model.hidden_dim),
                     np.zeros((cfg.lag_a, model.n_coeffs)),
                     np.zeros((max(cfg.lag_u, 1), model.n_inputs)))


def predict_step(model: LstmModel, a_prev, u_now, state: LstmState | None = None):
    """One online prediction ``a_hat(t)`` from ``a(t-1)`` and ``u(t)``.

    ``state`` carries the recurrent state and the lag buffers; pass ``None``
    at the start of a stream.  Lags beyond the first are taken from earlier
    calls (zeros before the stream has enough history).  Under the
    ``current_input=False`` convention ``u_now`` should be ``u(t-1)``.
    """
    state = new_state(model) if state is None else state.copy()
    a_prev = np.asarray(a_prev, dtype=float).ravel()
    u_now = np.asarray(u_now, dtype=float).ravel()
    if a_prev.size != model.n_coeffs or u_now.size != model.n_inputs:
        raise DimensionError(
            f"expected {model.n_coeffs} coefficients and {model.n_inputs} inputs, "
            f"got {a_prev.size} and {u_now.size}"
        )
    cfg = model.config
    state.history_a = np.vstack([a_prev[None], state.history_a[:-1]])
    state.history_u = np.vstack([u_now[None], state.history_u[:-1]])
    d = np.concatenate([state.history_a[:cfg.lag_a].ravel(),
                        state.history_u[:cfg.lag_u].ravel()])
    state.h, state.c, a_hat = lstm_step(model, d, state.h, state.c)
    return a_hat, state


def predict_sequence(model: LstmModel, d_seq: np.ndarray) -> np.ndarray:
    """Teacher-forced predictions for a whole regressor sequence ``(T, D)``,
    starting from zero state."""
    d_seq = np.atleast_2d(np.asarray(d_seq, dtype=float))
    x = model.in_scaler.scale(d_seq)[:, None, :]
    y, _ = _forward(model.params, x)
    a_hat = model.out_scaler.descale(y[:, 0, :])
    if model.config.residual:
        a_hat = a_hat + d_seq[:, :model.n_coeffs]
    return a_hat


def gradient_check(model: LstmModel, batch, step: float = 1e-5, floor: float = 1e-6,
                   corrupt: tuple[str, tuple] | None = None) -> float:
    """Largest relative gap between BPTT and central-difference gradients.

    ``batch`` is ``(x, target)`` with shapes ``(T, B, D)`` and ``(T, B, n)`` in
    scaled units.  The per-entry error is ``|g_a - g_n| / max(|g_a|, |g_n|, floor)``.
    ``corrupt=(name, index)`` negates one analytic entry (negative control).
    """
    x, target = (np.asarray(v, dtype=float) for v in batch)
    if x.ndim == 2:
        x, target = x[:, None, :], target[:, None, :]
    p = {k: v.copy() for k, v in model.params.items()}
    _, grads = loss_and_grads(p, x, target)
    if corrupt is not None:
        name, index = corrupt
        grads[name][index] *= -1.0
    worst = 0.0
    for name in PARAM_NAMES:
        arr = p[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            lp = _loss(_forward(p, x)[0], target)
            arr[idx] = orig - step
            lm = _loss(_forward(p, x)[0], target)
            arr[idx] = orig
            num = (lp - lm) / (2.0 * step)
            ana = grads[name][idx]
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            worst = max(worst, err)
    return worst


# ----------------------------------------------------------------------------
# linear autoregressive baseline


@dataclass
class ArModel:
    coef: np.ndarray        # (D, n)
    intercept: np.ndarray   # (n,)
    lag_a: int = 1
    lag_u: int = 1
    current_input: bool = True

    def predict(self, d: np.ndarray) -> np.ndarray:
        return np.atleast_2d(d) @ self.coef + self.intercept


def fit_ar_baseline(sequences, lag_a: int = 1, lag_u: int = 1) -> ArModel:
    """Ordinary least squares from lagged regressors to next coefficients.

    ``sequences`` are ``(a, u)`` pairs of aligned ``(n, L)`` / ``(n_u, L)``
    series; regressors are built with :func:`build_features`.
    """
    ds, ts = [], []
    for a, u in sequences:
        d, t = build_features(a, u, lag_a, lag_u)
        ds.append(d)
        ts.append(t)
    d = np.vstack(ds)
    t = np.vstack(ts)
    design = np.hstack([d, np.ones((d.shape[0], 1))])
    if design.shape[0] < design.shape[1] or np.linalg.matrix_rank(design) < design.shape[1]:
        raise NumericalError("autoregressive design matrix is singular")
    sol, *_ = np.linalg.lstsq(design, t, rcond=None)
    return ArModel(sol[:-1], sol[-1], lag_a, lag_u)
