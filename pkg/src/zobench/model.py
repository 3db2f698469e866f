"""Tiny pre-norm transformer classifier on flat parameter vectors.

Forward/backward are hand-written numpy so that every intermediate
buffer can be routed through the allocation ledger: forward_loss runs
in streaming mode (buffers released as soon as their last consumer has
run), while backward retains the per-layer tensors needed for gradient
computation until their backward use, which is exactly the activation
memory that grows with batch size.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigError, NumericError
from .ledger import ensure_ledger
from .rng import normal_stream_fill

LN_EPS = 1e-5
INIT_SCALE = 0.02
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    dim: int
    layers: int
    heads: int
    seq_len: int
    classes: int
    dtype: str = "f32"

    def __post_init__(self):
        for name in ("vocab_size", "dim", "layers", "heads", "seq_len", "classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim={self.dim} not divisible by heads={self.heads}")
        if self.classes < 2:
            raise ConfigError("classes must be >= 2")
        if self.vocab_size < self.classes:
            raise ConfigError("vocab_size must be >= classes")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    @property
    def head_dim(self):
        return self.dim // self.heads


def toy_config(dtype="f32"):
    return ModelConfig(vocab_size=1000, dim=64, layers=2, heads=4,
                       seq_len=32, classes=2, dtype=dtype)


def build_layout(config):
    """Ordered (name, offset, shape) list; a function of the config only."""
    d, v, s, c = config.dim, config.vocab_size, config.seq_len, config.classes
    entries = [("emb", (v, d)), ("pos", (s, d))]
    for i in range(config.layers):
        p = f"blk{i}."
        entries += [
            (p + "ln1.g", (d,)), (p + "ln1.b", (d,)),
            (p + "wq", (d, d)), (p + "bq", (d,)),
            (p + "wk", (d, d)), (p + "bk", (d,)),
            (p + "wv", (d, d)), (p + "bv", (d,)),
            (p + "wo", (d, d)), (p + "bo", (d,)),
            (p + "ln2.g", (d,)), (p + "ln2.b", (d,)),
            (p + "w1", (d, 4 * d)), (p + "b1", (4 * d,)),
            (p + "w2", (4 * d, d)), (p + "b2", (d,)),
        ]
    entries += [("head.w", (d, c)), ("head.b", (c,))]
    layout, offset = [], 0
    for name, shape in entries:
        layout.append((name, offset, shape))
        offset += int(np.prod(shape))
    return layout


def param_count(config):
    layout = build_layout(config)
    name, offset, shape = layout[-1]
    return offset + int(np.prod(shape))


class ParameterVector:
    """Flat parameter array plus the layout map that names its slices."""

    def __init__(self, values, config, ledger=None, ledger_token=None):
        self.values = values
        self.config = config
        self.layout = build_layout(config)
        self.param_count = len(values)
        self._ledger = ledger
        self._token = ledger_token
        self._views = {}
        for name, offset, shape in self.layout:
            n = int(np.prod(shape))
            self._views[name] = values[offset:offset + n].reshape(shape)

    def view(self, name):
        return self._views[name]

    @property
    def nbytes(self):
        return self.values.nbytes

    def clone(self, ledger=None, category="transient"):
        token = None
        if ledger is not None:
            token = ledger.acquire(category, self.values.nbytes)
        return ParameterVector(self.values.copy(), self.config,
                               ledger=ledger, ledger_token=token)

    def release(self):
        if self._ledger is not None and self._token is not None:
            self._ledger.release(self._token)
            self._token = None


def init_model(config, seed, ledger=None):
    """Deterministic scaled-normal init: weights N(0, 0.02^2), layer-norm
    gains 1, all biases 0."""
    led = ensure_ledger(ledger)
    layout = build_layout(config)
    total = param_count(config)
    token = led.acquire("weights", total * np.dtype(config.np_dtype).itemsize)
    values = np.empty(total, dtype=config.np_dtype)
    params = ParameterVector(values, config, ledger=ledger, ledger_token=token)
    for name, offset, shape in layout:
        n = int(np.prod(shape))
        flat = params.view(name).reshape(-1)
        if name.endswith(".g"):
            flat[:] = 1.0
        elif name.endswith(".b") or name.endswith((".bq", ".bk", ".bv", ".bo", ".b1", ".b2")):
            flat[:] = 0.0
        else:
            buf = np.empty(n, dtype=np.float64)
            normal_stream_fill(seed, offset, buf)
            flat[:] = (INIT_SCALE * buf).astype(config.np_dtype)
    return params


@dataclass
class Batch:
    tokens: np.ndarray  # [B, s] integer ids
    labels: np.ndarray  # [B]

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens)
        self.labels = np.asarray(self.labels)
        if self.tokens.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("tokens must be [B, s], labels [B]")
        if len(self.tokens) != len(self.labels):
            raise ValueError("tokens and labels disagree on batch size")

    @property
    def size(self):
        return len(self.labels)

    def validate(self, config):
        if self.tokens.shape[1] != config.seq_len:
            raise ConfigError("batch seq_len does not match model config")
        if self.tokens.min(initial=0) < 0 or self.tokens.max(initial=0) >= config.vocab_size:
            raise ConfigError("token id out of range")
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= config.classes:
            raise ConfigError("label out of range")


class _Tracker:
    """Registers numpy buffers with the ledger and releases them by identity."""

    def __init__(self, ledger, category="activation"):
        self._ledger = ledger
        self._category = category
        self._tokens = {}

    def add(self, arr):
        self._tokens[id(arr)] = self._ledger.acquire(self._category, arr.nbytes)
        return arr

    def drop(self, *arrays):
        for arr in arrays:
            self._ledger.release(self._tokens.pop(id(arr)))

    def drop_all(self):
        for token in self._tokens.values():
            self._ledger.release(token)
        self._tokens.clear()


def _layernorm(x):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(LN_EPS, dtype=x.dtype))
    return xc * inv, inv


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x * np.asarray(_INV_SQRT2, dtype=x.dtype)))


def _gelu_grad(x):
    phi = np.exp(-0.5 * x * x) * np.asarray(_INV_SQRT2PI, dtype=x.dtype)
    return 0.5 * (1.0 + erf(x * np.asarray(_INV_SQRT2, dtype=x.dtype))) + x * phi


def _split_heads(x, heads):
    b, s, d = x.shape
    return x.reshape(b, s, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, s, dh = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, s, h * dh)


def _softmax_rows(x):
    m = x.max(-1, keepdims=True)
    e = np.exp(x - m)
    e /= e.sum(-1, keepdims=True)
    return e


def _check_finite(arr, where):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {where}", where=where)


def _logits_loss(params, pooled, labels):
    logits = pooled @ params.view("head.w") + params.view("head.b")
    probs = _softmax_rows(logits)
    b = len(labels)
    nll = -np.log(probs[np.arange(b), labels])
    loss = float(nll.mean())
    if not np.isfinite(loss):
        raise NumericError("non-finite loss at classifier head", where="head")
    return loss, probs


def forward_loss(params, batch, ledger=None):
    """Mean cross-entropy over the batch, evaluated in streaming mode.

    All intermediates go through the ledger under category=activation and
    are released before return; at no point is more than a fraction of
    one block's full training-mode buffer set alive.
    """
    config = params.config
    batch.validate(config)
    if batch.size < 1:
        raise ValueError("empty batch")
    led = ensure_ledger(ledger)
    acts = _Tracker(led, "activation")
    h, scale = config.heads, 1.0 / np.sqrt(config.head_dim)
    try:
        x = acts.add(params.view("emb")[batch.tokens] + params.view("pos"))
        for i in range(config.layers):
            p = f"blk{i}."
            xhat, _ = _layernorm(x)
            n1 = acts.add(params.view(p + "ln1.g") * xhat + params.view(p + "ln1.b"))
            del xhat
            q = acts.add(_split_heads(n1 @ params.view(p + "wq") + params.view(p + "bq"), h))
            k = acts.add(_split_heads(n1 @ params.view(p + "wk") + params.view(p + "bk"), h))
            v = acts.add(_split_heads(n1 @ params.view(p + "wv") + params.view(p + "bv"), h))
            acts.drop(n1)
            probs = acts.add(q @ k.transpose(0, 1, 3, 2) * np.asarray(scale, dtype=x.dtype))
            probs -= probs.max(-1, keepdims=True)
            np.exp(probs, out=probs)
            probs /= probs.sum(-1, keepdims=True)
            acts.drop(q, k)
            ctx = acts.add(_merge_heads(probs @ v))
            acts.drop(probs, v)
            attnout = acts.add(ctx @ params.view(p + "wo") + params.view(p + "bo"))
            acts.drop(ctx)
            x += attnout
            acts.drop(attnout)
            xhat2, _ = _layernorm(x)
            n2 = acts.add(params.view(p + "ln2.g") * xhat2 + params.view(p + "ln2.b"))
            del xhat2
            hpre = acts.add(n2 @ params.view(p + "w1") + params.view(p + "b1"))
            acts.drop(n2)
            # in-place GELU keeps the MLP working set at one 4d-wide buffer
            hpre *= 0.5 * (1.0 + erf(hpre * np.asarray(_INV_SQRT2, dtype=x.dtype)))
            mlpout = acts.add(hpre @ params.view(p + "w2") + params.view(p + "b2"))
            acts.drop(hpre)
            x += mlpout
            acts.drop(mlpout)
            _check_finite(x, f"blk{i}")
        pooled = acts.add(x.mean(axis=1))
        acts.drop(x)
        loss, _ = _logits_loss(params, pooled, batch.labels)
        return loss
    finally:
        acts.drop_all()


def _forward_train(params, batch, acts):
    """Forward pass retaining exactly the buffers backward needs."""
    config = params.config
    h, scale = config.heads, 1.0 / np.sqrt(config.head_dim)
    cache = []
    x = acts.add(params.view("emb")[batch.tokens] + params.view("pos"))
    for i in range(config.layers):
        p = f"blk{i}."
        xhat1, inv1 = _layernorm(x)
        acts.add(xhat1), acts.add(inv1)
        n1 = acts.add(params.view(p + "ln1.g") * xhat1 + params.view(p + "ln1.b"))
        q = acts.add(_split_heads(n1 @ params.view(p + "wq") + params.view(p + "bq"), h))
        k = acts.add(_split_heads(n1 @ params.view(p + "wk") + params.view(p + "bk"), h))
        v = acts.add(_split_heads(n1 @ params.view(p + "wv") + params.view(p + "bv"), h))
        acts.drop(n1)
        probs = acts.add(q @ k.transpose(0, 1, 3, 2) * np.asarray(scale, dtype=x.dtype))
        probs -= probs.max(-1, keepdims=True)
        np.exp(probs, out=probs)
        probs /= probs.sum(-1, keepdims=True)
        ctx = acts.add(_merge_heads(probs @ v))
        attnout = acts.add(ctx @ params.view(p + "wo") + params.view(p + "bo"))
        x += attnout
        acts.drop(attnout)
        xhat2, inv2 = _layernorm(x)
        acts.add(xhat2), acts.add(inv2)
        n2 = acts.add(params.view(p + "ln2.g") * xhat2 + params.view(p + "ln2.b"))
        hpre = acts.add(n2 @ params.view(p + "w1") + params.view(p + "b1"))
        acts.drop(n2)
        hact = acts.add(_gelu(hpre))
        mlpout = acts.add(hact @ params.view(p + "w2") + params.view(p + "b2"))
        acts.drop(hact)
        x += mlpout
        acts.drop(mlpout)
        _check_finite(x, f"blk{i}")
        cache.append(dict(xhat1=xhat1, inv1=inv1, q=q, k=k, v=v,
                          probs=probs, ctx=ctx, xhat2=xhat2, inv2=inv2, hpre=hpre))
    pooled = acts.add(x.mean(axis=1))
    acts.drop(x)
    loss, out_probs = _logits_loss(params, pooled, batch.labels)
    acts.add(out_probs)
    return loss, pooled, out_probs, cache


def _ln_backward(dn, xhat, inv, gain):
    dxhat = dn * gain
    dg = (dn * xhat).sum((0, 1))
    db = dn.sum((0, 1))
    dx = inv * (dxhat - dxhat.mean(-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def backward(params, batch, ledger=None, grad_out=None):
    """Gradient of mean cross-entropy w.r.t. every parameter.

    Activations are retained for the whole step (ledger category=
    activation) exactly as a training framework would. Returns
    (loss, flat gradient of length param_count).
    """
    config = params.config
    batch.validate(config)
    if batch.size < 1:
        raise ValueError("empty batch")
    led = ensure_ledger(ledger)
    acts = _Tracker(led, "activation")
    dtype = config.np_dtype
    if grad_out is None:
        grad_out = np.zeros(params.param_count, dtype=dtype)
    else:
        grad_out[:] = 0
    gview = ParameterVector(grad_out, config)
    h, scale = config.heads, 1.0 / np.sqrt(config.head_dim)
    bsz = batch.size
    try:
        loss, pooled, out_probs, cache = _forward_train(params, batch, acts)
        dlogits = out_probs.copy()
        dlogits[np.arange(bsz), batch.labels] -= 1.0
        dlogits /= bsz
        gview.view("head.w")[:] = pooled.T @ dlogits
        gview.view("head.b")[:] = dlogits.sum(0)
        dpooled = dlogits @ params.view("head.w").T
        dx = np.broadcast_to(dpooled[:, None, :] / config.seq_len,
                             (bsz, config.seq_len, config.dim)).astype(dtype).copy()
        for i in reversed(range(config.layers)):
            p, c = f"blk{i}.", cache[i]
            # MLP branch
            hact = _gelu(c["hpre"])
            dhact = dx @ params.view(p + "w2").T
            gview.view(p + "w2")[:] = hact.reshape(-1, 4 * config.dim).T @ dx.reshape(-1, config.dim)
            gview.view(p + "b2")[:] = dx.sum((0, 1))
            dhpre = dhact * _gelu_grad(c["hpre"])
            n2 = params.view(p + "ln2.g") * c["xhat2"] + params.view(p + "ln2.b")
            gview.view(p + "w1")[:] = n2.reshape(-1, config.dim).T @ dhpre.reshape(-1, 4 * config.dim)
            gview.view(p + "b1")[:] = dhpre.sum((0, 1))
            dn2 = dhpre @ params.view(p + "w1").T
            dx_ln2, dg2, db2 = _ln_backward(dn2, c["xhat2"], c["inv2"], params.view(p + "ln2.g"))
            gview.view(p + "ln2.g")[:] = dg2
            gview.view(p + "ln2.b")[:] = db2
            dx = dx + dx_ln2
            # attention branch
            gview.view(p + "wo")[:] = c["ctx"].reshape(-1, config.dim).T @ dx.reshape(-1, config.dim)
            gview.view(p + "bo")[:] = dx.sum((0, 1))
            dctx = _split_heads(dx @ params.view(p + "wo").T, h)
            dprobs = dctx @ c["v"].transpose(0, 1, 3, 2)
            dv = c["probs"].transpose(0, 1, 3, 2) @ dctx
            dscores = c["probs"] * (dprobs - (dprobs * c["probs"]).sum(-1, keepdims=True))
            dq = dscores @ c["k"] * np.asarray(scale, dtype=dtype)
            dk = dscores.transpose(0, 1, 3, 2) @ c["q"] * np.asarray(scale, dtype=dtype)
            dq_m, dk_m, dv_m = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
            n1 = params.view(p + "ln1.g") * c["xhat1"] + params.view(p + "ln1.b")
            n1_2d = n1.reshape(-1, config.dim)
            for w, b, dm in ((p + "wq", p + "bq", dq_m), (p + "wk", p + "bk", dk_m),
                             (p + "wv", p + "bv", dv_m)):
                gview.view(w)[:] = n1_2d.T @ dm.reshape(-1, config.dim)
                gview.view(b)[:] = dm.sum((0, 1))
            dn1 = (dq_m @ params.view(p + "wq").T + dk_m @ params.view(p + "wk").T
                   + dv_m @ params.view(p + "wv").T)
            dx_ln1, dg1, db1 = _ln_backward(dn1, c["xhat1"], c["inv1"], params.view(p + "ln1.g"))
            gview.view(p + "ln1.g")[:] = dg1
            gview.view(p + "ln1.b")[:] = db1
            dx = dx + dx_ln1
        np.add.at(gview.view("emb"), batch.tokens.reshape(-1), dx.reshape(-1, config.dim))
        gview.view("pos")[:] = dx.sum(0)
        return loss, grad_out
    finally:
        acts.drop_all()


def central_difference(loss_fn, theta, h, coords=None):
    """Central-difference gradient of a scalar function of a flat vector."""
    if h <= 0:
        raise ValueError("step size h must be > 0")
    coords = list(range(len(theta))) if coords is None else list(coords)
    out = np.empty(len(coords), dtype=np.float64)
    for j, i in enumerate(coords):
        orig = theta[i]
        theta[i] = orig + h
        lp = loss_fn(theta)
        theta[i] = orig - h
        lm = loss_fn(theta)
        theta[i] = orig
        out[j] = (lp - lm) / (2.0 * h)
    return out


def finite_diff_gradient(params, batch, h, coords=None, ledger=None):
    """Finite-difference oracle for backward; 2 forward passes per
    coordinate, so tiny models only."""
    def loss_fn(_theta):
        return forward_loss(params, batch, ledger=ledger)
    return central_difference(loss_fn, params.values, h, coords=coords)
