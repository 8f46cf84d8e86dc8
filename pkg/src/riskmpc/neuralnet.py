"""From-scratch GRU encoder-decoder trajectory regressor.

Architecture: input normalization -> GRU(64) -> layer norm -> dense(64)+ReLU
-> GRU(128) -> dense(2), applied per time step over 30-point sequences.
Training minimizes element-mean MSE with Adam; all gradients are exact
reverse-mode (backpropagation through time), in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WEIGHTS_FORMAT_VERSION = 1


class WeightsFormatError(ValueError):
    """Raised when a weights file fails validation."""


@dataclass
class GruParams:
    """Gate order along the stacked axis: update z, reset r, candidate h."""

    input_weights: np.ndarray      # (3H, F)
    recurrent_weights: np.ndarray  # (3H, H)
    biases: np.ndarray             # (3H,)

    @property
    def hidden_size(self) -> int:
        return self.recurrent_weights.shape[1]


@dataclass
class DenseParams:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray   # (out,)


@dataclass
class LayerNormParams:
    scale: np.ndarray
    offset: np.ndarray
    epsilon: float = 1e-5


@dataclass
class ModelParams:
    """All weights plus the input normalization statistics.

    `input_norm_kind` selects how raw coordinates are normalized:
    "zscore" uses fixed per-feature statistics from the training set
    (scale=std, offset=mean, not trained); "layernorm" standardizes each
    2-vector per step with learnable scale/offset.
    """

    input_norm: LayerNormParams
    encoder: GruParams
    encoder_norm: LayerNormParams
    latent: DenseParams
    decoder: GruParams
    output: DenseParams
    input_norm_kind: str = "zscore"


@dataclass
class AdamState:
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 132
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size) < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def param_list(model: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Learnable tensors in a fixed order (zscore input stats are not trained)."""
    out = []
    if model.input_norm_kind == "layernorm":
        out += [("input_norm.scale", model.input_norm.scale),
                ("input_norm.offset", model.input_norm.offset)]
    out += [("encoder.input_weights", model.encoder.input_weights),
            ("encoder.recurrent_weights", model.encoder.recurrent_weights),
            ("encoder.biases", model.encoder.biases),
            ("encoder_norm.scale", model.encoder_norm.scale),
            ("encoder_norm.offset", model.encoder_norm.offset),
            ("latent.weights", model.latent.weights),
            ("latent.biases", model.latent.biases),
            ("decoder.input_weights", model.decoder.input_weights),
            ("decoder.recurrent_weights", model.decoder.recurrent_weights),
            ("decoder.biases", model.decoder.biases),
            ("output.weights", model.output.weights),
            ("output.biases", model.output.biases)]
    return out


def init_model(seed: int, train_histories: np.ndarray | None = None,
               features: int = 2, enc_hidden: int = 64, latent_size: int = 64,
               dec_hidden: int = 128, outputs: int = 2,
               input_norm_kind: str = "zscore") -> ModelParams:
    """Seeded uniform(+-sqrt(1/fan_in)) weights, zero biases, unit layer norms."""
    if input_norm_kind not in ("zscore", "layernorm"):
        raise ValueError(f"unknown input_norm_kind {input_norm_kind!r}")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        s = math.sqrt(1.0 / fan_in)
        return rng.uniform(-s, s, size=shape)

    def gru(f, h):
        return GruParams(input_weights=uniform((3 * h, f), f),
                         recurrent_weights=uniform((3 * h, h), h),
                         biases=np.zeros(3 * h))

    if input_norm_kind == "zscore":
        if train_histories is None:
            mean = np.zeros(features)
            std = np.ones(features)
        else:
            flat = train_histories.reshape(-1, features)
            mean = flat.mean(axis=0)
            std = np.maximum(flat.std(axis=0), 1e-8)
        input_norm = LayerNormParams(scale=std, offset=mean)
    else:
        input_norm = LayerNormParams(scale=np.ones(features), offset=np.zeros(features))

    return ModelParams(
        input_norm=input_norm,
        encoder=gru(features, enc_hidden),
        encoder_norm=LayerNormParams(scale=np.ones(enc_hidden), offset=np.zeros(enc_hidden)),
        latent=DenseParams(weights=uniform((latent_size, enc_hidden), enc_hidden),
                           biases=np.zeros(latent_size)),
        decoder=gru(latent_size, dec_hidden),
        output=DenseParams(weights=uniform((outputs, dec_hidden), dec_hidden),
                           biases=np.zeros(outputs)),
        input_norm_kind=input_norm_kind)


# ---------------------------------------------------------------------------
# forward passes (with optional caches for backprop)

def _gru_run(p: GruParams, X: np.ndarray, h0: np.ndarray | None, want_cache: bool):
    B, M, _ = X.shape
    H = p.hidden_size
    h = np.zeros((B, H)) if h0 is None else np.broadcast_to(h0, (B, H)).copy()
    Wz, Wr, Wh = p.input_weights[:H], p.input_weights[H:2 * H], p.input_weights[2 * H:]
    Rz, Rr, Rh = (p.recurrent_weights[:H], p.recurrent_weights[H:2 * H],
                  p.recurrent_weights[2 * H:])
    bz, br, bh = p.biases[:H], p.biases[H:2 * H], p.biases[2 * H:]
    XWz, XWr, XWh = X @ Wz.T, X @ Wr.T, X @ Wh.T
    out = np.empty((B, M, H))
    cache = {"hprev": np.empty((B, M, H)), "z": np.empty((B, M, H)),
             "r": np.empty((B, M, H)), "hc": np.empty((B, M, H)),
             "rh": np.empty((B, M, H))} if want_cache else None
    for t in range(M):
        z = _sigmoid(XWz[:, t] + h @ Rz.T + bz)
        r = _sigmoid(XWr[:, t] + h @ Rr.T + br)
        rh = h @ Rh.T
        hc = np.tanh(XWh[:, t] + r * rh + bh)
        if want_cache:
            cache["hprev"][:, t] = h
            cache["z"][:, t] = z
            cache["r"][:, t] = r
            cache["hc"][:, t] = hc
            cache["rh"][:, t] = rh
        h = (1.0 - z) * hc + z * h
        out[:, t] = h
    return out, cache


def _gru_backward(p: GruParams, X: np.ndarray, cache: dict, dH: np.ndarray):
    B, M, _ = X.shape
    H = p.hidden_size
    Wz, Wr, Wh = p.input_weights[:H], p.input_weights[H:2 * H], p.input_weights[2 * H:]
    Rz, Rr, Rh = (p.recurrent_weights[:H], p.recurrent_weights[H:2 * H],
                  p.recurrent_weights[2 * H:])
    dW = np.zeros_like(p.input_weights)
    dR = np.zeros_like(p.recurrent_weights)
    db = np.zeros_like(p.biases)
    dX = np.empty_like(X)
    carry = np.zeros((B, H))
    for t in range(M - 1, -1, -1):
        dh = dH[:, t] + carry
        hprev = cache["hprev"][:, t]
        z, r = cache["z"][:, t], cache["r"][:, t]
        hc, rh = cache["hc"][:, t], cache["rh"][:, t]
        dz = dh * (hprev - hc)
        dhc = dh * (1.0 - z)
        dhp = dh * z
        dah = dhc * (1.0 - hc * hc)
        dr = dah * rh
        drh = dah * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        x = X[:, t]
        dW[:H] += daz.T @ x
        dW[H:2 * H] += dar.T @ x
        dW[2 * H:] += dah.T @ x
        dR[:H] += daz.T @ hprev
        dR[H:2 * H] += dar.T @ hprev
        dR[2 * H:] += drh.T @ hprev
        db[:H] += daz.sum(axis=0)
        db[H:2 * H] += dar.sum(axis=0)
        db[2 * H:] += dah.sum(axis=0)
        dX[:, t] = daz @ Wz + dar @ Wr + dah @ Wh
        carry = dhp + daz @ Rz + dar @ Rr + drh @ Rh
    return dX, dW, dR, db


def gru_forward(params: GruParams, inputs: np.ndarray,
                h0: np.ndarray | None = None) -> np.ndarray:
    """Hidden-state sequence for a (M, F) or batched (B, M, F) input."""
    X = np.asarray(inputs, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    out, _ = _gru_run(params, X, h0, want_cache=False)
    return out[0] if single else out


def layer_norm(params: LayerNormParams, vec: np.ndarray) -> np.ndarray:
    """Standardize over the last axis, then apply scale and offset."""
    v = np.asarray(vec, dtype=float)
    if v.shape[-1] < 2:
        raise ValueError("layer norm needs at least two features")
    mu = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    xhat = (v - mu) / np.sqrt(var + params.epsilon)
    return params.scale * xhat + params.offset


def _layer_norm_cache(params: LayerNormParams, v: np.ndarray):
    mu = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + params.epsilon)
    xhat = (v - mu) * inv
    return params.scale * xhat + params.offset, (xhat, inv)


def _layer_norm_backward(params: LayerNormParams, cache, dY: np.ndarray):
    xhat, inv = cache
    red = tuple(range(dY.ndim - 1))
    dscale = (dY * xhat).sum(axis=red)
    doffset = dY.sum(axis=red)
    dxhat = dY * params.scale
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dX = inv * (dxhat - m1 - xhat * m2)
    return dX, dscale, doffset


def _normalize_input(model: ModelParams, X: np.ndarray):
    if model.input_norm_kind == "zscore":
        X0 = (X - model.input_norm.offset) / model.input_norm.scale
        return X0, None
    return _layer_norm_cache(model.input_norm, X)


def _forward_full(model: ModelParams, X: np.ndarray):
    """Batched forward with every intermediate needed for backprop."""
    X0, in_cache = _normalize_input(model, X)
    Henc, enc_cache = _gru_run(model.encoder, X0, None, want_cache=True)
    Hn, ln_cache = _layer_norm_cache(model.encoder_norm, Henc)
    A1 = Hn @ model.latent.weights.T + model.latent.biases
    Z = np.maximum(A1, 0.0)
    Hdec, dec_cache = _gru_run(model.decoder, Z, None, want_cache=True)
    Y = Hdec @ model.output.weights.T + model.output.biases
    return {"X": X, "X0": X0, "in_cache": in_cache, "Henc": Henc,
            "enc_cache": enc_cache, "Hn": Hn, "ln_cache": ln_cache,
            "A1": A1, "Z": Z, "Hdec": Hdec, "dec_cache": dec_cache, "Y": Y}


def model_forward(model: ModelParams, history: np.ndarray) -> np.ndarray:
    """Predict the future (M, 2) sequence from a calibrated history."""
    X = np.asarray(history, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    X0, _ = _normalize_input(model, X)
    Henc = gru_forward(model.encoder, X0)
    Hn = layer_norm(model.encoder_norm, Henc)
    Z = np.maximum(Hn @ model.latent.weights.T + model.latent.biases, 0.0)
    Hdec = gru_forward(model.decoder, Z)
    Y = Hdec @ model.output.weights.T + model.output.biases
    return Y[0] if single else Y


def mse_loss(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    return math.sqrt(mse_loss(pred, truth))


def loss_gradients(model: ModelParams, histories: np.ndarray,
                   futures: np.ndarray) -> tuple[dict, float]:
    """Exact gradients of the batch-mean MSE; returns (grads, loss)."""
    X = np.asarray(histories, dtype=float)
    T = np.asarray(futures, dtype=float)
    if X.ndim == 2:
        X, T = X[None], T[None]
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    fw = _forward_full(model, X)
    Y = fw["Y"]
    if Y.shape != T.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {T.shape}")
    loss = float(np.mean((Y - T) ** 2))

    grads = {}
    dY = 2.0 * (Y - T) / Y.size
    B, M, _ = X.shape
    dY2 = dY.reshape(B * M, -1)
    grads["output.weights"] = dY2.T @ fw["Hdec"].reshape(B * M, -1)
    grads["output.biases"] = dY2.sum(axis=0)
    dHdec = dY @ model.output.weights

    dZ, dWd, dRd, dbd = _gru_backward(model.decoder, fw["Z"], fw["dec_cache"], dHdec)
    grads["decoder.input_weights"] = dWd
    grads["decoder.recurrent_weights"] = dRd
    grads["decoder.biases"] = dbd

    dA1 = dZ * (fw["A1"] > 0)
    dA12 = dA1.reshape(B * M, -1)
    grads["latent.weights"] = dA12.T @ fw["Hn"].reshape(B * M, -1)
    grads["latent.biases"] = dA12.sum(axis=0)
    dHn = dA1 @ model.latent.weights

    dHenc, dsc, doff = _layer_norm_backward(model.encoder_norm, fw["ln_cache"], dHn)
    grads["encoder_norm.scale"] = dsc
    grads["encoder_norm.offset"] = doff

    dX0, dWe, dRe, dbe = _gru_backward(model.encoder, fw["X0"], fw["enc_cache"], dHenc)
    grads["encoder.input_weights"] = dWe
    grads["encoder.recurrent_weights"] = dRe
    grads["encoder.biases"] = dbe

    if model.input_norm_kind == "layernorm":
        _, dsc_in, doff_in = _layer_norm_backward(model.input_norm, fw["in_cache"], dX0)
        grads["input_norm.scale"] = dsc_in
        grads["input_norm.offset"] = doff_in
    return grads, loss


def adam_update(state: AdamState, model: ModelParams, grads: dict,
                lr: float) -> tuple[ModelParams, AdamState]:
    """One Adam step with bias correction; parameters updated in place."""
    state.step_count += 1
    t = state.step_count
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    for name, arr in param_list(model):
        g = grads[name]
        m = state.first_moment.setdefault(name, np.zeros_like(arr))
        v = state.second_moment.setdefault(name, np.zeros_like(arr))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        arr -= lr * mhat / (np.sqrt(vhat) + eps)
    return model, state


def train(model: ModelParams, histories: np.ndarray, futures: np.ndarray,
          config: TrainConfig) -> tuple[ModelParams, list[tuple[int, int, float]]]:
    """Fixed-order mini-batch loop; returns (model, [(iteration, epoch, rmse)]).

    Batches are taken in order from the already shuffled training set and the
    trailing partial batch is dropped, so the default 3973-sample set at batch
    size 132 yields 30 iterations per epoch.
    """
    n = histories.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    bs = min(config.batch_size, n)
    n_batches = n // bs
    state = AdamState()
    curve = []
    iteration = 0
    for epoch in range(1, config.epochs + 1):
        for b in range(n_batches):
            sl = slice(b * bs, (b + 1) * bs)
            grads, loss = loss_gradients(model, histories[sl], futures[sl])
            iteration += 1
            curve.append((iteration, epoch, math.sqrt(loss)))
            model, state = adam_update(state, model, grads, config.learning_rate)
    return model, curve


def evaluate(model: ModelParams, histories: np.ndarray,
             futures: np.ndarray) -> tuple[float, np.ndarray]:
    """Pooled RMSE over all test elements plus the per-sample RMSE sequence."""
    if histories.shape[0] == 0:
        raise ValueError("empty test set")
    preds = model_forward(model, histories)
    sq = (preds - futures) ** 2
    per_sample = np.sqrt(sq.reshape(sq.shape[0], -1).mean(axis=1))
    overall = math.sqrt(float(sq.mean()))
    return overall, per_sample


# ---------------------------------------------------------------------------
# persistence

def _all_tensors(model: ModelParams) -> list[tuple[str, np.ndarray]]:
    named = dict(param_list(model))
    named.setdefault("input_norm.scale", model.input_norm.scale)
    named.setdefault("input_norm.offset", model.input_norm.offset)
    return sorted(named.items())


def _expected_shapes(F, He, La, Hd, O):
    return {
        "input_norm.scale": (F,), "input_norm.offset": (F,),
        "encoder.input_weights": (3 * He, F),
        "encoder.recurrent_weights": (3 * He, He), "encoder.biases": (3 * He,),
        "encoder_norm.scale": (He,), "encoder_norm.offset": (He,),
        "latent.weights": (La, He), "latent.biases": (La,),
        "decoder.input_weights": (3 * Hd, La),
        "decoder.recurrent_weights": (3 * Hd, Hd), "decoder.biases": (3 * Hd,),
        "output.weights": (O, Hd), "output.biases": (O,),
    }


def save_weights(model: ModelParams, location: str | Path) -> None:
    """Versioned npz container with named float64 arrays and explicit sizes."""
    sizes = np.array([model.encoder.input_weights.shape[1],
                      model.encoder.hidden_size,
                      model.latent.weights.shape[0],
                      model.decoder.hidden_size,
                      model.output.weights.shape[0]], dtype=np.int64)
    payload = {name: np.ascontiguousarray(arr, dtype=np.float64)
               for name, arr in _all_tensors(model)}
    np.savez(location,
             format_version=np.int64(WEIGHTS_FORMAT_VERSION),
             input_norm_kind=np.array(model.input_norm_kind),
             input_norm_epsilon=np.float64(model.input_norm.epsilon),
             encoder_norm_epsilon=np.float64(model.encoder_norm.epsilon),
             sizes=sizes, **payload)


def load_weights(location: str | Path) -> ModelParams:
    try:
        with np.load(location, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise WeightsFormatError(f"{location}: unreadable weights file: {exc}") from None
    version = int(arrays.get("format_version", -1))
    if version != WEIGHTS_FORMAT_VERSION:
        raise WeightsFormatError(
            f"{location}: unsupported format version {version}")
    try:
        F, He, La, Hd, O = (int(s) for s in arrays["sizes"])
        kind = str(arrays["input_norm_kind"])
    except KeyError as exc:
        raise WeightsFormatError(f"{location}: missing field {exc}") from None
    expected = _expected_shapes(F, He, La, Hd, O)
    tensors = {}
    for name, shape in expected.items():
        if name not in arrays:
            raise WeightsFormatError(f"{location}: missing tensor {name}")
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != shape:
            raise WeightsFormatError(
                f"{location}: tensor {name} has shape {arr.shape}, expected {shape}")
        tensors[name] = arr
    return ModelParams(
        input_norm=LayerNormParams(scale=tensors["input_norm.scale"],
                                   offset=tensors["input_norm.offset"],
                                   epsilon=float(arrays["input_norm_epsilon"])),
        encoder=GruParams(tensors["encoder.input_weights"],
                          tensors["encoder.recurrent_weights"],
                          tensors["encoder.biases"]),
        encoder_norm=LayerNormParams(scale=tensors["encoder_norm.scale"],
                                     offset=tensors["encoder_norm.offset"],
                                     epsilon=float(arrays["encoder_norm_epsilon"])),
        latent=DenseParams(tensors["latent.weights"], tensors["latent.biases"]),
        decoder=GruParams(tensors["decoder.input_weights"],
                          tensors["decoder.recurrent_weights"],
                          tensors["decoder.biases"]),
        output=DenseParams(tensors["output.weights"], tensors["output.biases"]),
        input_norm_kind=kind)
