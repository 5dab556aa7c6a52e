"""Stacked fully connected autoencoder.

Rows are samples, so a layer computes ``phi(H @ W + b)`` with ``W`` of shape
``(d_in, d_out)``.  Hidden layers use relu; the bottleneck and the
reconstruction layer are linear.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, ParameterError, TrainingError
from .optim import Adam
from .tensor import Node, Tape, as_matrix

DEFAULT_HIDDEN = (500, 500, 2000, 10)
MAGIC = b"SDCNPRM1"


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class AutoencoderParams:
    """Encoder/decoder weights keyed ``enc_w{l}``, ``enc_b{l}``, ``dec_w{l}``, ``dec_b{l}``.

    ``dims`` is the encoder stack ``[d, d_1, ..., d_L]``; the decoder runs the
    same widths in reverse.
    """

    dims: list
    tensors: dict = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    @property
    def embed_dim(self) -> int:
        return self.dims[-1]

    def enc(self, l):
        return self.tensors[f"enc_w{l}"], self.tensors[f"enc_b{l}"]

    def dec(self, l):
        return self.tensors[f"dec_w{l}"], self.tensors[f"dec_b{l}"]

    def copy(self) -> "AutoencoderParams":
        return AutoencoderParams(list(self.dims), {k: v.copy() for k, v in self.tensors.items()})

    @classmethod
    def init(cls, dims, rng: np.random.Generator) -> "AutoencoderParams":
        dims = [int(d) for d in dims]
        if len(dims) < 2 or min(dims) < 1:
            raise ParameterError(f"bad layer dims {dims}")
        t = {}
        for l in range(len(dims) - 1):
            t[f"enc_w{l}"] = glorot_uniform(rng, dims[l], dims[l + 1])
            t[f"enc_b{l}"] = np.zeros(dims[l + 1])
        rev = dims[::-1]
        for l in range(len(rev) - 1):
            t[f"dec_w{l}"] = glorot_uniform(rng, rev[l], rev[l + 1])
            t[f"dec_b{l}"] = np.zeros(rev[l + 1])
        return cls(dims, t)

    @classmethod
    def zeros(cls, dims) -> "AutoencoderParams":
        return cls(list(dims), {k: np.zeros(s) for k, s in expected_shapes(dims).items()})


def expected_shapes(dims) -> dict:
    out = {}
    rev = list(dims)[::-1]
    for l in range(len(dims) - 1):
        out[f"enc_w{l}"] = (dims[l], dims[l + 1])
        out[f"enc_b{l}"] = (dims[l + 1],)
        out[f"dec_w{l}"] = (rev[l], rev[l + 1])
        out[f"dec_b{l}"] = (rev[l + 1],)
    return out


def _stack(tape: Tape, h: Node, layers, last_linear=True):
    outs = []
    for l, (w, b) in enumerate(layers):
        h = tape.add_bias(tape.matmul(h, w), b)
        if not (last_linear and l == len(layers) - 1):
            h = tape.relu(h)
        outs.append(h)
    return outs


def encode_nodes(tape: Tape, x: Node, nodes: dict, n_layers: int) -> list:
    layers = [(nodes[f"enc_w{l}"], nodes[f"enc_b{l}"]) for l in range(n_layers)]
    return _stack(tape, x, layers)


def decode_nodes(tape: Tape, h: Node, nodes: dict, n_layers: int) -> Node:
    layers = [(nodes[f"dec_w{l}"], nodes[f"dec_b{l}"]) for l in range(n_layers)]
    return _stack(tape, h, layers)[-1]


def _const_nodes(tape, p: AutoencoderParams):
    return {k: tape.const(v) for k, v in p.tensors.items()}


def encode(x, p: AutoencoderParams) -> list:
    """All encoder layer outputs ``[H1, ..., HL]``."""
    x = as_matrix(x)
    if x.shape[1] != p.dims[0]:
        raise DimensionError(f"input has {x.shape[1]} columns, encoder expects {p.dims[0]}")
    tape = Tape()
    hs = encode_nodes(tape, tape.const(x), _const_nodes(tape, p), p.n_layers)
    return [h.value for h in hs]


def decode(h_last, p: AutoencoderParams) -> np.ndarray:
    h_last = as_matrix(h_last)
    if h_last.shape[1] != p.embed_dim:
        raise DimensionError(f"embedding has {h_last.shape[1]} columns, decoder expects {p.embed_dim}")
    tape = Tape()
    return decode_nodes(tape, tape.const(h_last), _const_nodes(tape, p), p.n_layers).value


def reconstruction_loss(x, xhat) -> float:
    x = as_matrix(x)
    xhat = as_matrix(xhat)
    if x.shape != xhat.shape:
        raise DimensionError(f"{x.shape} vs {xhat.shape}")
    r = x - xhat
    return float(0.5 * np.sum(r * r) / x.shape[0])


def reconstruction_loss_and_grads(x, p: AutoencoderParams):
    tape = Tape()
    nodes = {k: tape.param(v, k) for k, v in p.tensors.items()}
    hs = encode_nodes(tape, tape.const(x), nodes, p.n_layers)
    xhat = decode_nodes(tape, hs[-1], nodes, p.n_layers)
    loss = tape.half_mse(x, xhat)
    tape.backward(loss)
    return float(loss.value), {k: n.grad for k, n in nodes.items()}


@dataclass
class PretrainConfig:
    epochs: int = 30
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple = DEFAULT_HIDDEN


def pretrain(x, config: PretrainConfig, params: AutoencoderParams | None = None, callback=None) -> AutoencoderParams:
    """Minimise the reconstruction loss with mini-batch Adam.

    ``callback(epoch, mean_loss)`` is invoked after every epoch with the
    average batch loss of that epoch.
    """
    x = as_matrix(x)
    if config.epochs < 1:
        raise ParameterError("pretraining needs at least one epoch")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = AutoencoderParams.init([x.shape[1], *config.hidden], rng)
    opt = Adam(params.tensors, lr=config.lr)
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            batch = x[order[start:start + config.batch_size]]
            loss, grads = reconstruction_loss_and_grads(batch, params)
            if not np.isfinite(loss):
                raise TrainingError(f"reconstruction loss diverged at epoch {epoch}",
                                    record={"epoch": epoch, "loss": loss})
            opt.step(grads)
            losses.append(loss)
        if callback is not None:
            callback(epoch, float(np.mean(losses)))
    return params


def write_tensors(path, dims, arrays) -> None:
    """Binary layout: magic, uint32 n_dims, dims, uint32 n_tensors,
    (rows, cols) per tensor, then every tensor as row-major little-endian float64."""
    mats = [np.atleast_2d(np.asarray(a, dtype="<f8")) for a in arrays]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(f"<I{len(dims)}I", len(dims), *dims))
        fh.write(struct.pack("<I", len(mats)))
        for m in mats:
            fh.write(struct.pack("<II", *m.shape))
        for m in mats:
            fh.write(np.ascontiguousarray(m).tobytes())


def read_tensors(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic")
    off = 8
    try:
        (nd,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = list(struct.unpack_from(f"<{nd}I", blob, off))
        off += 4 * nd
        (nt,) = struct.unpack_from("<I", blob, off)
        off += 4
        shapes = [struct.unpack_from("<II", blob, off + 8 * k) for k in range(nt)]
        off += 8 * nt
        arrays = []
        for r, c in shapes:
            arrays.append(np.frombuffer(blob, dtype="<f8", count=r * c, offset=off).reshape(r, c).copy())
            off += 8 * r * c
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated parameter file") from exc
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")
    return dims, arrays


def save_autoencoder(p: AutoencoderParams, path) -> None:
    write_tensors(path, p.dims, [p.tensors[k] for k in sorted_keys(p.n_layers)])


def load_autoencoder(path) -> AutoencoderParams:
    dims, arrays = read_tensors(path)
    keys = sorted_keys(len(dims) - 1)
    if len(arrays) != len(keys):
        raise FormatError(f"{path}: expected {len(keys)} tensors, found {len(arrays)}")
    t = {}
    for k, a in zip(keys, arrays):
        t[k] = a.ravel() if "_b" in k else a
    for k, shape in expected_shapes(dims).items():
        if t[k].shape != shape:
            raise FormatError(f"{path}: tensor {k} has shape {t[k].shape}, expected {shape}")
    return AutoencoderParams(dims, t)


def sorted_keys(n_layers: int) -> list:
    keys = []
    for part in ("enc", "dec"):
        for l in range(n_layers):
            keys += [f"{part}_w{l}", f"{part}_b{l}"]
    return keys
