"""Set scoring model: per-point embedding, multi-head self-attention over
the set, sum pooling, affine regression head.

The forward pass is written once, against an ops namespace: pass the
`numcore` module for plain inference, or a `numcore.Tape` (with leaf
nodes for the tensors) to record gradients. Both routes execute the
same arithmetic in the same order.

Model persistence is a little-endian binary format with a JSON meta
block and named row-major float64 tensors; round-trips are bitwise
exact so trained models can be content-hashed.
"""

import hashlib
import json
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import numcore
from .errors import ConfigError, ParseError, ShapeError

TENSOR_NAMES = ("embed_weight", "embed_bias", "attn_wq", "attn_wk",
                "attn_wv", "head_weight", "head_bias")

POOLINGS = ("sum", "max")

_MAGIC = b"SETG"
_FORMAT_VERSION = 1


@dataclass
class ModelParams:
    input_dim: int
    latent_dim: int
    heads: int
    depth: int
    pooling: str
    embed_weight: np.ndarray    # (latent_dim, input_dim)
    embed_bias: np.ndarray      # (1, latent_dim)
    attn_wq: np.ndarray         # (latent_dim, latent_dim)
    attn_wk: np.ndarray         # (latent_dim, latent_dim)
    attn_wv: np.ndarray         # (latent_dim, latent_dim)
    head_weight: np.ndarray     # (1, latent_dim)
    head_bias: np.ndarray       # (1, 1)

    def tensors(self):
        """Learnable tensors in a fixed, documented order."""
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def with_tensors(self, tensors):
        """Copy of the params with the named tensors replaced."""
        return replace(self, **{n: numcore.matrix(tensors[n]) for n in TENSOR_NAMES})

    def meta(self):
        return {"input_dim": self.input_dim, "latent_dim": self.latent_dim,
                "heads": self.heads, "depth": self.depth, "pooling": self.pooling}


def _validate_config(input_dim, latent_dim, heads, depth, pooling):
    if input_dim < 1:
        raise ConfigError(f"input_dim must be >= 1, got {input_dim}")
    if latent_dim < 1:
        raise ConfigError(f"latent_dim must be >= 1, got {latent_dim}")
    if heads < 1 or latent_dim % heads != 0:
        raise ConfigError(
            f"latent_dim ({latent_dim}) must be divisible by heads ({heads})")
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    if pooling not in POOLINGS:
        raise ConfigError(f"pooling must be one of {POOLINGS}, got {pooling!r}")


def init_params(seed, input_dim, latent_dim=20, heads=2, depth=1,
                pooling="sum"):
    """Fresh parameters: Xavier-uniform weights, zero biases.

    Each weight matrix of shape (fan_out, fan_in) is drawn uniformly from
    [-a, a] with a = sqrt(6 / (fan_in + fan_out)). The same seed always
    produces the same parameters.
    """
    _validate_config(input_dim, latent_dim, heads, depth, pooling)
    rng = np.random.default_rng(seed)

    def xavier(fan_out, fan_in):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_out, fan_in))

    return ModelParams(
        input_dim=input_dim, latent_dim=latent_dim, heads=heads,
        depth=depth, pooling=pooling,
        embed_weight=xavier(latent_dim, input_dim),
        embed_bias=np.zeros((1, latent_dim)),
        attn_wq=xavier(latent_dim, latent_dim),
        attn_wk=xavier(latent_dim, latent_dim),
        attn_wv=xavier(latent_dim, latent_dim),
        head_weight=xavier(1, latent_dim),
        head_bias=np.zeros((1, 1)),
    )


# ---------------------------------------------------------------------------
# forward pass (ops-namespace polymorphic)
# ---------------------------------------------------------------------------

def forward(ops, tensors, config, x):
    """Score one set x (k, input_dim) -> 1x1 through the given ops namespace.

    `tensors` maps TENSOR_NAMES to arrays (eager) or tape nodes (training);
    `config` supplies latent_dim / heads / depth / pooling.
    """
    z = ops.relu(ops.add_rowvec(
        ops.matmul_nt(x, tensors["embed_weight"]), tensors["embed_bias"]))
    for _ in range(config.depth):   # depth > 1 reapplies the same block
        z = _attention_block(ops, tensors, config, z)
    pooled = ops.col_sum(z) if config.pooling == "sum" else ops.col_max(z)
    return ops.add(ops.matmul_nt(pooled, tensors["head_weight"]),
                   tensors["head_bias"])


def _attention_block(ops, tensors, config, z):
    q = ops.matmul_nt(z, tensors["attn_wq"])
    k = ops.matmul_nt(z, tensors["attn_wk"])
    v = ops.matmul_nt(z, tensors["attn_wv"])
    width = config.latent_dim // config.heads
    inv_scale = 1.0 / math.sqrt(width)
    heads_out = []
    for j in range(config.heads):
        lo, hi = j * width, (j + 1) * width
        scores = ops.matmul_nt(ops.slice_cols(q, lo, hi),
                               ops.slice_cols(k, lo, hi))
        weights = ops.softmax_rows(ops.scale(scores, inv_scale))
        heads_out.append(ops.matmul(weights, ops.slice_cols(v, lo, hi)))
    return ops.concat_cols(heads_out)


# ---------------------------------------------------------------------------
# eager public surface
# ---------------------------------------------------------------------------

def _as_points(params, x, what):
    x = numcore.matrix(x)
    if x.shape[0] < 1:
        raise ShapeError(f"{what}: empty set")
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"{what}: points have dim {x.shape[1]}, "
                         f"model expects {params.input_dim}")
    return x


def embed(params, x):
    """Per-point embedding relu(W x + b); rows of x are points."""
    x = _as_points(params, x, "embed")
    return numcore.relu(numcore.add_rowvec(
        numcore.matmul_nt(x, params.embed_weight), params.embed_bias))


def attend(params, z_set):
    """One multi-head self-attention block over embedded rows (k, latent)."""
    z_set = numcore.matrix(z_set)
    if z_set.shape[1] != params.latent_dim:
        raise ShapeError(f"attend: rows have dim {z_set.shape[1]}, "
                         f"model latent dim is {params.latent_dim}")
    return _attention_block(numcore, params.tensors(), params, z_set)


def score_set(params, points):
    """Scalar score for one set of points (k, input_dim)."""
    x = _as_points(params, points, "score_set")
    return float(forward(numcore, params.tensors(), params, x)[0, 0])


def batch_scorer(params):
    """Callable scoring a stack of sets (n, k, input_dim) -> (n,) floats."""
    tensors = params.tensors()

    def score_sets(sets):
        sets = np.asarray(sets, dtype=np.float64)
        if sets.ndim != 3:
            raise ShapeError(f"score_sets: expected (n, k, d), got {sets.shape}")
        if sets.shape[1] < 1:
            raise ShapeError("score_sets: empty sets")
        if sets.shape[2] != params.input_dim:
            raise ShapeError(f"score_sets: points have dim {sets.shape[2]}, "
                             f"model expects {params.input_dim}")
        out = np.empty(sets.shape[0])
        for i in range(sets.shape[0]):
            x = np.ascontiguousarray(sets[i])
            out[i] = forward(numcore, tensors, params, x)[0, 0]
        return out

    return score_sets


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def model_bytes(params):
    """Serialize to the versioned little-endian binary format."""
    meta = json.dumps(params.meta(), sort_keys=True).encode("utf-8")
    out = [_MAGIC, struct.pack("<I", _FORMAT_VERSION),
           struct.pack("<I", len(meta)), meta,
           struct.pack("<I", len(TENSOR_NAMES))]
    for name in TENSOR_NAMES:
        arr = getattr(params, name)
        encoded = name.encode("utf-8")
        out.append(struct.pack("<I", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<II", arr.shape[0], arr.shape[1]))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def save_model(params, path):
    with open(path, "wb") as fh:
        fh.write(model_bytes(params))


def model_hash(params):
    """Content hash (sha256 hex) of the serialized model."""
    return hashlib.sha256(model_bytes(params)).hexdigest()


class _Reader:
    def __init__(self, blob, origin):
        self.blob = blob
        self.pos = 0
        self.origin = origin

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise ParseError(f"{self.origin}: truncated model file")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_model(path):
    """Read a model file back; inverse of save_model, bitwise exact."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob, str(path))
    if r.take(4) != _MAGIC:
        raise ParseError(f"{path}: not a model file (bad magic)")
    version = r.u32()
    if version != _FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported model format version {version}")
    try:
        meta = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: bad meta block ({exc})") from None
    missing = {"input_dim", "latent_dim", "heads", "depth", "pooling"} - set(meta)
    if missing:
        raise ParseError(f"{path}: meta missing keys {sorted(missing)}")

    count = r.u32()
    if count != len(TENSOR_NAMES):
        raise ParseError(f"{path}: expected {len(TENSOR_NAMES)} tensors, "
                         f"found {count}")
    tensors = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rows, cols = struct.unpack("<II", r.take(8))
        data = np.frombuffer(r.take(rows * cols * 8), dtype="<f8")
        tensors[name] = data.reshape(rows, cols).astype(np.float64)
    if set(tensors) != set(TENSOR_NAMES):
        raise ParseError(f"{path}: tensor names {sorted(tensors)} do not match "
                         f"the expected set")
    if r.pos != len(blob):
        raise ParseError(f"{path}: {len(blob) - r.pos} trailing bytes")

    params = ModelParams(
        input_dim=int(meta["input_dim"]), latent_dim=int(meta["latent_dim"]),
        heads=int(meta["heads"]), depth=int(meta["depth"]),
        pooling=str(meta["pooling"]),
        **{name: tensors[name] for name in TENSOR_NAMES})
    _validate_config(params.input_dim, params.latent_dim, params.heads,
                     params.depth, params.pooling)
    _validate_shapes(params, str(path))
    return params


def _validate_shapes(params, origin):
    expect = {
        "embed_weight": (params.latent_dim, params.input_dim),
        "embed_bias": (1, params.latent_dim),
        "attn_wq": (params.latent_dim, params.latent_dim),
        "attn_wk": (params.latent_dim, params.latent_dim),
        "attn_wv": (params.latent_dim, params.latent_dim),
        "head_weight": (1, params.latent_dim),
        "head_bias": (1, 1),
    }
    for name, shape in expect.items():
        got = getattr(params, name).shape
        if got != shape:
            raise ParseError(f"{origin}: tensor {name} has shape {got}, "
                             f"expected {shape}")
