"""Miniature encoder / masker / decoder time-domain separator.

Layout (B = batch, F = frames, N = filters, H = masker width, C = outputs)::

    frames  (B, F, K)   K-sample windows, hop K/2, zero padded at the end
    enc     (B, F, N)   relu(frames @ encoder.T)
    h0      (B, F, H)   enc @ bottleneck_w + bottleneck_b
    h_j     (B, F, H)   h_{j-1} + relu(dilated_conv_j(h_{j-1}))     j = 1..blocks
    logit_c (B, F, N)   h_last @ head_c.w + head_c.b
    mask_c  (B, F, N)   sigmoid(logit_c)
    out_c   (B, T)      overlap_add((mask_c * enc) @ decoder), trimmed to T

The per-channel mask projection (``head_c``) is the only part tied to a
specific output; everything else is the shared body. All arithmetic is
float64 and gradients are derived by hand.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np
from scipy.special import expit

from .signal import StructuralError

CONV_TAPS = 3


@dataclass(frozen=True)
class SeparatorConfig:
    n_filters: int = 64
    kernel: int = 16
    hidden: int = 128
    masker_blocks: int = 2
    n_outputs: int = 2

    def __post_init__(self):
        for name in ("n_filters", "kernel", "hidden", "masker_blocks", "n_outputs"):
            if int(getattr(self, name)) < 1:
                raise StructuralError(f"{name} must be positive")
        if self.kernel % 2:
            raise StructuralError(f"kernel must be even, got {self.kernel}")

    @property
    def hop(self) -> int:
        return self.kernel // 2

    def with_outputs(self, n_outputs: int) -> "SeparatorConfig":
        return SeparatorConfig(self.n_filters, self.kernel, self.hidden,
                               self.masker_blocks, n_outputs)

    def body_shapes(self) -> Dict[str, tuple]:
        n, k, h = self.n_filters, self.kernel, self.hidden
        shapes = {"encoder": (n, k), "bottleneck_w": (n, h), "bottleneck_b": (h,)}
        for j in range(self.masker_blocks):
            shapes[f"block{j}_w"] = (CONV_TAPS, h, h)
            shapes[f"block{j}_b"] = (h,)
        shapes["decoder"] = (n, k)
        return shapes

    def head_shapes(self) -> Dict[str, tuple]:
        return {"w": (self.hidden, self.n_filters), "b": (self.n_filters,)}

    def n_frames(self, length: int) -> int:
        if length < self.kernel:
            raise StructuralError(f"input length {length} shorter than kernel {self.kernel}")
        return -(-length // self.hop) - 1


@dataclass
class SeparatorParams:
    """Trainable tensors split into the shared body and one head per output.

    Also used to carry gradients, which share the same names and shapes.
    """

    body: Dict[str, np.ndarray]
    heads: List[Dict[str, np.ndarray]] = field(default_factory=list)

    def flat(self) -> Dict[str, np.ndarray]:
        out = {f"body/{k}": v for k, v in self.body.items()}
        for c, head in enumerate(self.heads):
            out.update({f"head{c}/{k}": v for k, v in head.items()})
        return out

    @classmethod
    def from_flat(cls, flat: Dict[str, np.ndarray]) -> "SeparatorParams":
        body, heads = {}, {}
        for name, v in flat.items():
            group, key = name.split("/", 1)
            if group == "body":
                body[key] = v
            else:
                heads.setdefault(int(group[4:]), {})[key] = v
        return cls(body, [heads[c] for c in sorted(heads)])

    def map(self, fn) -> "SeparatorParams":
        return SeparatorParams({k: fn(v) for k, v in self.body.items()},
                               [{k: fn(v) for k, v in h.items()} for h in self.heads])

    def zeros_like(self) -> "SeparatorParams":
        return self.map(np.zeros_like)

    def n_params(self) -> int:
        return sum(v.size for v in self.flat().values())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.flat().values())


def _check_congruent(params: SeparatorParams, config: SeparatorConfig):
    if len(params.heads) != config.n_outputs:
        raise StructuralError(
            f"params have {len(params.heads)} heads, config expects {config.n_outputs}")
    for name, shape in config.body_shapes().items():
        got = params.body.get(name)
        if got is None or got.shape != shape:
            raise StructuralError(f"body tensor {name!r}: expected {shape}, got "
                                  f"{None if got is None else got.shape}")
    for c, head in enumerate(params.heads):
        for name, shape in config.head_shapes().items():
            if head.get(name) is None or head[name].shape != shape:
                raise StructuralError(f"head {c} tensor {name!r} has wrong shape")


def _fan_in(name: str, shape: tuple) -> int:
    if name.startswith("block"):
        return shape[0] * shape[1]
    return shape[0] if name in ("bottleneck_w", "decoder", "w") else shape[-1]


def _init_group(shapes: Dict[str, tuple], rng: np.random.Generator) -> Dict[str, np.ndarray]:
    out = {}
    for name, shape in shapes.items():
        if len(shape) == 1:
            out[name] = np.zeros(shape)
        else:
            a = np.sqrt(1.0 / _fan_in(name, shape))
            out[name] = rng.uniform(-a, a, size=shape)
    return out


def init_head(config: SeparatorConfig, seed: int, channel: int) -> Dict[str, np.ndarray]:
    return _init_group(config.head_shapes(), np.random.default_rng([seed, 1, channel]))


def init_params(config: SeparatorConfig, seed: int) -> SeparatorParams:
    """Uniform(-a, a) weights with a = sqrt(1/fan_in), zero biases."""
    body = _init_group(config.body_shapes(), np.random.default_rng([seed, 0]))
    heads = [init_head(config, seed, c) for c in range(config.n_outputs)]
    return SeparatorParams(body, heads)


def fan_in_bounds(config: SeparatorConfig) -> Dict[str, float]:
    """Init bound per flat tensor name (biases map to 0)."""
    out = {}
    for name, shape in config.body_shapes().items():
        out[f"body/{name}"] = 0.0 if len(shape) == 1 else np.sqrt(1.0 / _fan_in(name, shape))
    for c in range(config.n_outputs):
        for name, shape in config.head_shapes().items():
            out[f"head{c}/{name}"] = 0.0 if len(shape) == 1 else np.sqrt(1.0 / _fan_in(name, shape))
    return out


def transfer_params(pretrained: SeparatorParams, pre_cfg: SeparatorConfig,
                    target_cfg: SeparatorConfig, seed: int) -> SeparatorParams:
    """Copy the body from ``pretrained`` and draw every head fresh from ``seed``."""
    if pre_cfg.with_outputs(target_cfg.n_outputs) != target_cfg:
        raise StructuralError(f"configs differ beyond n_outputs: {pre_cfg} vs {target_cfg}")
    shapes = target_cfg.body_shapes()
    if set(pretrained.body) != set(shapes):
        raise StructuralError("pretrained body tensor names do not match the target config")
    for name, shape in shapes.items():
        if pretrained.body[name].shape != shape:
            raise StructuralError(f"body tensor {name!r}: {pretrained.body[name].shape} != {shape}")
    body = {k: v.copy() for k, v in pretrained.body.items()}
    heads = [init_head(target_cfg, seed, c) for c in range(target_cfg.n_outputs)]
    return SeparatorParams(body, heads)


# -- framing -----------------------------------------------------------------

def _frame(x: np.ndarray, config: SeparatorConfig):
    """(B, T) -> (B, F, K) with hop K/2; the signal is zero padded to (F+1)*hop."""
    b, t = x.shape
    f = config.n_frames(t)
    hop = config.hop
    padded = np.zeros((b, (f + 1) * hop))
    padded[:, :t] = x
    blocks = padded.reshape(b, f + 1, hop)
    return np.concatenate([blocks[:, :-1], blocks[:, 1:]], axis=-1)


def _overlap_add(frames: np.ndarray, length: int, hop: int) -> np.ndarray:
    lead = frames.shape[:-2]
    f = frames.shape[-2]
    out = np.zeros(lead + (f + 1, hop))
    out[..., :-1, :] += frames[..., :hop]
    out[..., 1:, :] += frames[..., hop:]
    return out.reshape(lead + ((f + 1) * hop,))[..., :length]


def _frame_grad(g: np.ndarray, n_frames: int, hop: int) -> np.ndarray:
    # adjoint of _overlap_add: pad back to full length, then cut into frames
    lead = g.shape[:-1]
    full = np.zeros(lead + ((n_frames + 1) * hop,))
    full[..., :g.shape[-1]] = g
    blocks = full.reshape(lead + (n_frames + 1, hop))
    return np.concatenate([blocks[..., :-1, :], blocks[..., 1:, :]], axis=-1)


def _shift_pad(h: np.ndarray, d: int) -> np.ndarray:
    b, f, width = h.shape
    hp = np.zeros((b, f + 2 * d, width))
    hp[:, d:d + f] = h
    return hp


def _contract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum over all leading axes of outer products: ``(..., I), (..., J) -> (I, J)``."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _as_batch(x) -> tuple:
    x = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise StructuralError(f"expected (T,) or (B, T) input, got {x.shape}")
    return x, False


# -- forward / backward --------------------------------------------------------

def encode(params: SeparatorParams, config: SeparatorConfig, x):
    """Encoder features ``(B, F, N)`` and a cache for :func:`encode_backward`."""
    xb, _ = _as_batch(x)
    frames = _frame(xb, config)
    pre = frames @ params.body["encoder"].T
    return np.maximum(pre, 0.0), {"frames": frames, "pre": pre}


def encode_backward(params: SeparatorParams, enc_cache: dict, enc_grad: np.ndarray) -> np.ndarray:
    """Gradient of the encoder filters given ``d loss / d features``."""
    da = enc_grad * (enc_cache["pre"] > 0)
    return _contract(da, enc_cache["frames"])


def forward(params: SeparatorParams, config: SeparatorConfig, mixture):
    """Run the separator.

    Args:
        mixture: ``(T,)`` waveform or ``(B, T)`` batch (a Waveform works too).

    Returns:
        ``(outputs, cache)`` with outputs shaped ``(C, T)`` or ``(B, C, T)``.
    """
    _check_congruent(params, config)
    xb, single = _as_batch(mixture)
    length = xb.shape[1]
    p = params.body
    enc, enc_cache = encode(params, config, xb)

    h = enc @ p["bottleneck_w"] + p["bottleneck_b"]
    hs, zs = [h], []
    for j in range(config.masker_blocks):
        d = 2 ** j
        f = h.shape[1]
        hp = _shift_pad(h, d)
        w = p[f"block{j}_w"]
        z = p[f"block{j}_b"] + sum(hp[:, k * d:k * d + f] @ w[k] for k in range(CONV_TAPS))
        h = h + np.maximum(z, 0.0)
        zs.append(z)
        hs.append(h)

    logits = np.stack([h @ hd["w"] + hd["b"] for hd in params.heads], axis=1)
    masks = expit(logits)
    masked = masks * enc[:, None]
    out = _overlap_add(masked @ p["decoder"], length, config.hop)

    cache = {
        "length": length, "enc": enc, "enc_cache": enc_cache, "hs": hs, "zs": zs,
        "logits": logits, "masks": masks, "masked": masked, "single": single,
        "n_outputs": config.n_outputs,
    }
    return (out[0] if single else out), cache


def backward(params: SeparatorParams, config: SeparatorConfig, cache: dict,
             output_grads, logit_grads=None) -> SeparatorParams:
    """Exact gradient of a scalar loss given its gradient w.r.t. the outputs.

    ``logit_grads`` optionally adds a direct gradient on the pre-sigmoid mask
    logits ``(B, C, F, N)``, used by objectives defined on masker features.
    """
    _check_congruent(params, config)
    if cache.get("n_outputs") != config.n_outputs or \
            cache["hs"][-1].shape[-1] != config.hidden or \
            len(cache["zs"]) != config.masker_blocks:
        raise StructuralError("cache does not come from a forward pass with this config")
    g = np.asarray(output_grads, dtype=np.float64)
    if cache["single"] and g.ndim == 2:
        g = g[None]
    if g.shape != cache["masks"].shape[:2] + (cache["length"],):
        raise StructuralError(f"output_grads shape {g.shape} does not match outputs")

    p = params.body
    enc, masks, hs, zs = cache["enc"], cache["masks"], cache["hs"], cache["zs"]
    n_frames = enc.shape[1]

    gy = _frame_grad(g, n_frames, config.hop)                 # (B, C, F, K)
    d_decoder = _contract(cache["masked"], gy)
    d_masked = gy @ p["decoder"].T                            # (B, C, F, N)
    d_enc = np.sum(d_masked * masks, axis=1)
    d_logits = d_masked * enc[:, None] * masks * (1.0 - masks)
    if logit_grads is not None:
        d_logits = d_logits + np.asarray(logit_grads, dtype=np.float64).reshape(d_logits.shape)

    h_last = hs[-1]
    heads = []
    dh = np.zeros_like(h_last)
    for c, hd in enumerate(params.heads):
        dl = d_logits[:, c]
        heads.append({"w": _contract(h_last, dl), "b": dl.sum(axis=(0, 1))})
        dh = dh + dl @ hd["w"].T

    body = {}
    for j in reversed(range(config.masker_blocks)):
        d = 2 ** j
        h_in = hs[j]
        f = h_in.shape[1]
        w = p[f"block{j}_w"]
        dz = dh * (zs[j] > 0)
        hp = _shift_pad(h_in, d)
        body[f"block{j}_w"] = np.stack(
            [_contract(hp[:, k * d:k * d + f], dz) for k in range(CONV_TAPS)])
        body[f"block{j}_b"] = dz.sum(axis=(0, 1))
        dhp = np.zeros_like(hp)
        for k in range(CONV_TAPS):
            dhp[:, k * d:k * d + f] += dz @ w[k].T
        dh = dh + dhp[:, d:d + f]

    body["bottleneck_w"] = _contract(enc, dh)
    body["bottleneck_b"] = dh.sum(axis=(0, 1))
    d_enc = d_enc + dh @ p["bottleneck_w"].T
    body["encoder"] = encode_backward(params, cache["enc_cache"], d_enc)
    body["decoder"] = d_decoder
    names = list(config.body_shapes())
    return SeparatorParams({k: body[k] for k in names}, heads)


# -- checkpoints ---------------------------------------------------------------

_MAGIC = b"PITLAB-CKPT 1\n"


def save_checkpoint(path, params: SeparatorParams, config: SeparatorConfig, extra=None):
    """Header line of JSON, then row-major little-endian float64 tensors in header order.

    Identical params and config always produce identical bytes.
    """
    flat = params.flat()
    tensors = [{"name": k, "shape": list(v.shape)} for k, v in flat.items()]
    header = {"config": asdict(config), "tensors": tensors, "extra": extra or {}}
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for k in flat:
            f.write(np.ascontiguousarray(flat[k], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns ``(params, config, extra)``."""
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise StructuralError(f"{path}: not a checkpoint file")
    nl = data.index(b"\n", len(_MAGIC))
    header = json.loads(data[len(_MAGIC):nl])
    offset = nl + 1
    flat = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        if offset + 8 * count > len(data):
            raise StructuralError(f"{path}: truncated tensor {t['name']!r}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        flat[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)
        offset += 8 * count
    if offset != len(data):
        raise StructuralError(f"{path}: trailing or missing tensor bytes")
    config = SeparatorConfig(**header["config"])
    params = SeparatorParams.from_flat(flat)
    _check_congruent(params, config)
    return params, config, header.get("extra", {})
