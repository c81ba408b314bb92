"""Graph-convolutional Q-network over conflict graphs, in plain numpy.

Two variants share one attention/Q pipeline:

* "edge": a 2-layer observation encoder (24 -> 512 -> L) and a 2-layer edge
  encoder (11 -> 512 -> L); slot features hc_ij = concat(ho_j, he_ij) with
  ho_j gathered through the one-hot adjacency. The second convolution reads
  concat(h1_j, he_ij).
* "se": a single 2-layer encoder over observations augmented with the
  agent's own K edge vectors (24+K*11 -> 512 -> 2L); the second convolution
  reads concat(h1_j, h1_i), keeping the parameter count within a few percent
  of the edge variant.

Each convolution is multi-head dot-product attention: the query comes from
the agent's own slot 0, keys and values from all K+1 slots, padded slots
masked to exact zero weight, followed by a linear map and ReLU back to width
L. Q values are an affine map of concat(slot0, H1, H2).

Forward and reverse passes are written out by hand; gradients are exact and
are validated against central finite differences in the test suite. All
training math is float64.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"DGNCKPT1"


@dataclass(frozen=True)
class DgnConfig:
    variant: str = "edge"  # "edge" or "se"
    obs_dim: int = 24
    edge_dim: int = 11
    n_actions: int = 31
    k_neighbors: int = 3
    enc_hidden: int = 512
    latent: int = 128  # L
    heads: int = 8  # m
    head_dim: int = 16  # d_K
    init_std: float = 0.01

    def __post_init__(self):
        if self.variant not in ("edge", "se"):
            raise ValueError(f"unknown variant {self.variant!r}")
        for name in ("obs_dim", "edge_dim", "n_actions", "k_neighbors",
                     "enc_hidden", "latent", "heads", "head_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.init_std <= 0:
            raise ValueError("init_std must be positive")

    @property
    def slots(self) -> int:
        return self.k_neighbors + 1

    @property
    def conv_in(self) -> int:
        return 2 * self.latent

    @property
    def attn_dim(self) -> int:
        return self.heads * self.head_dim

    @property
    def q_in(self) -> int:
        return 2 * self.latent + 2 * self.latent

    @property
    def se_in(self) -> int:
        return self.obs_dim + self.k_neighbors * self.edge_dim


def _param_shapes(cfg: DgnConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    if cfg.variant == "edge":
        shapes["obs_enc.w1"] = (cfg.obs_dim, cfg.enc_hidden)
        shapes["obs_enc.b1"] = (cfg.enc_hidden,)
        shapes["obs_enc.w2"] = (cfg.enc_hidden, cfg.latent)
        shapes["obs_enc.b2"] = (cfg.latent,)
        shapes["edge_enc.w1"] = (cfg.edge_dim, cfg.enc_hidden)
        shapes["edge_enc.b1"] = (cfg.enc_hidden,)
        shapes["edge_enc.w2"] = (cfg.enc_hidden, cfg.latent)
        shapes["edge_enc.b2"] = (cfg.latent,)
    else:
        shapes["enc.w1"] = (cfg.se_in, cfg.enc_hidden)
        shapes["enc.b1"] = (cfg.enc_hidden,)
        shapes["enc.w2"] = (cfg.enc_hidden, 2 * cfg.latent)
        shapes["enc.b2"] = (2 * cfg.latent,)
    for l in (1, 2):
        shapes[f"conv{l}.wq"] = (cfg.conv_in, cfg.attn_dim)
        shapes[f"conv{l}.bq"] = (cfg.attn_dim,)
        shapes[f"conv{l}.wk"] = (cfg.conv_in, cfg.attn_dim)
        shapes[f"conv{l}.bk"] = (cfg.attn_dim,)
        shapes[f"conv{l}.wv"] = (cfg.conv_in, cfg.attn_dim)
        shapes[f"conv{l}.bv"] = (cfg.attn_dim,)
        shapes[f"conv{l}.wo"] = (cfg.attn_dim, cfg.latent)
        shapes[f"conv{l}.bo"] = (cfg.latent,)
    shapes["q.w"] = (cfg.q_in, cfg.n_actions)
    shapes["q.b"] = (cfg.n_actions,)
    return shapes


def init_params(cfg: DgnConfig, seed: int) -> dict[str, np.ndarray]:
    """Every parameter drawn normal(0, init_std), float64. Random biases
    keep zero-vector inputs (padded slots, self edges) off relu kinks."""
    rng = np.random.default_rng(seed)
    return {name: rng.normal(0.0, cfg.init_std, size=shape)
            for name, shape in _param_shapes(cfg).items()}


def count_parameters(params: dict[str, np.ndarray]) -> int:
    return int(sum(a.size for a in params.values()))


def se_augment(O: np.ndarray, E: np.ndarray) -> np.ndarray:
    """(B,N,obs) + (B,N,K+1,edge) -> (B,N,obs+K*edge): the agent's own edge
    rows 1..K appended to its observation."""
    b, n = O.shape[:2]
    return np.concatenate([O, E[:, :, 1:, :].reshape(b, n, -1)], axis=-1)


# -- layers ------------------------------------------------------------------


def _mlp2_forward(x, w1, b1, w2, b2):
    z1 = x @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2 + b2
    a2 = np.maximum(z2, 0.0)
    return a2, (x, z1, a1, z2)


def _mlp2_backward(d_out, cache, w1, w2):
    x, z1, a1, z2 = cache
    dz2 = d_out * (z2 > 0)
    bd = tuple(range(dz2.ndim - 1))
    gw2 = np.tensordot(a1, dz2, axes=(bd, bd))
    gb2 = dz2.sum(axis=bd)
    da1 = dz2 @ w2.T
    dz1 = da1 * (z1 > 0)
    gw1 = np.tensordot(x, dz1, axes=(bd, bd))
    gb1 = dz1.sum(axis=bd)
    dx = dz1 @ w1.T
    return dx, gw1, gb1, gw2, gb2


def _conv_forward(params, prefix, cfg, slot_feats, query, mask):
    """One attention convolution.

    slot_feats: (B,N,S,2L); query: (B,N,2L); mask: (B,N,S) bool, True for
    slots that carry an agent. Returns (H, A, cache) with H: (B,N,L) and
    A: (B,N,m,S) — rows over S sum to 1 with masked slots exactly 0.
    """
    b, n, s, _ = slot_feats.shape
    m, dk = cfg.heads, cfg.head_dim
    wq, bq = params[f"{prefix}.wq"], params[f"{prefix}.bq"]
    wk, bk = params[f"{prefix}.wk"], params[f"{prefix}.bk"]
    wv, bv = params[f"{prefix}.wv"], params[f"{prefix}.bv"]
    wo, bo = params[f"{prefix}.wo"], params[f"{prefix}.bo"]

    if not np.all(mask[:, :, 0]):
        raise ValueError("self slot must never be masked")

    q_flat = query @ wq + bq  # (B,N,m*dk)
    k_flat = slot_feats @ wk + bk  # (B,N,S,m*dk)
    v_flat = slot_feats @ wv + bv
    qr = q_flat.reshape(b, n, m, dk)
    kr = k_flat.reshape(b, n, s, m, dk)
    vr = v_flat.reshape(b, n, s, m, dk)

    logits = np.einsum("bnmd,bnsmd->bnms", qr, kr) / math.sqrt(dk)
    logits = np.where(mask[:, :, None, :], logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expl = np.exp(shifted)
    attn = expl / expl.sum(axis=-1, keepdims=True)  # (B,N,m,S)

    ctx = np.einsum("bnms,bnsmd->bnmd", attn, vr).reshape(b, n, m * dk)
    zo = ctx @ wo + bo
    h = np.maximum(zo, 0.0)
    cache = (slot_feats, query, qr, kr, vr, attn, ctx, zo)
    return h, attn, cache


def _conv_backward(d_h, cache, params, prefix, cfg, grads):
    slot_feats, query, qr, kr, vr, attn, ctx, zo = cache
    b, n, s, _ = slot_feats.shape
    m, dk = cfg.heads, cfg.head_dim
    wq, wk = params[f"{prefix}.wq"], params[f"{prefix}.wk"]
    wv, wo = params[f"{prefix}.wv"], params[f"{prefix}.wo"]

    dzo = d_h * (zo > 0)
    grads[f"{prefix}.wo"] += np.tensordot(ctx, dzo, axes=((0, 1), (0, 1)))
    grads[f"{prefix}.bo"] += dzo.sum(axis=(0, 1))
    dctx = (dzo @ wo.T).reshape(b, n, m, dk)

    d_attn = np.einsum("bnmd,bnsmd->bnms", dctx, vr)
    dvr = np.einsum("bnms,bnmd->bnsmd", attn, dctx)

    # softmax backward; masked slots have attn = 0, so their logits get 0.
    dlogits = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True))
    dqr = np.einsum("bnms,bnsmd->bnmd", dlogits, kr) / math.sqrt(dk)
    dkr = np.einsum("bnms,bnmd->bnsmd", dlogits, qr) / math.sqrt(dk)

    dq_flat = dqr.reshape(b, n, m * dk)
    dk_flat = dkr.reshape(b, n, s, m * dk)
    dv_flat = dvr.reshape(b, n, s, m * dk)

    grads[f"{prefix}.wq"] += np.tensordot(query, dq_flat,
                                          axes=((0, 1), (0, 1)))
    grads[f"{prefix}.bq"] += dq_flat.sum(axis=(0, 1))
    grads[f"{prefix}.wk"] += np.tensordot(slot_feats, dk_flat,
                                          axes=((0, 1, 2), (0, 1, 2)))
    grads[f"{prefix}.bk"] += dk_flat.sum(axis=(0, 1, 2))
    grads[f"{prefix}.wv"] += np.tensordot(slot_feats, dv_flat,
                                          axes=((0, 1, 2), (0, 1, 2)))
    grads[f"{prefix}.bv"] += dv_flat.sum(axis=(0, 1, 2))

    d_query = dq_flat @ wq.T
    d_slots = dk_flat @ wk.T + dv_flat @ wv.T
    return d_query, d_slots


# -- full network ------------------------------------------------------------


@dataclass
class ForwardResult:
    q: np.ndarray  # (B,N,|actions|)
    attn1: np.ndarray  # (B,N,m,K+1)
    attn2: np.ndarray  # (B,N,m,K+1)
    cache: dict | None = None


def _check_shapes(cfg, O, E, C):
    if O.ndim != 3 or O.shape[2] != cfg.obs_dim:
        raise ValueError(f"O must be (B,N,{cfg.obs_dim}), got {O.shape}")
    b, n = O.shape[:2]
    if E.shape != (b, n, cfg.slots, cfg.edge_dim):
        raise ValueError(f"E must be {(b, n, cfg.slots, cfg.edge_dim)}, "
                         f"got {E.shape}")
    if C.shape != (b, n, cfg.slots, n):
        raise ValueError(f"C must be {(b, n, cfg.slots, n)}, got {C.shape}")


def forward(params: dict, cfg: DgnConfig, O: np.ndarray, E: np.ndarray,
            C: np.ndarray, want_cache: bool = False) -> ForwardResult:
    """Batched Q values. O: (B,N,obs), E: (B,N,K+1,edge), C: (B,N,K+1,N)."""
    O = np.asarray(O, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    _check_shapes(cfg, O, E, C)
    mask = C.sum(axis=-1) > 0  # (B,N,S)

    cache: dict = {"mask": mask, "C": C}
    if cfg.variant == "edge":
        ho, c_obs = _mlp2_forward(O, params["obs_enc.w1"],
                                  params["obs_enc.b1"], params["obs_enc.w2"],
                                  params["obs_enc.b2"])
        he, c_edge = _mlp2_forward(E, params["edge_enc.w1"],
                                   params["edge_enc.b1"],
                                   params["edge_enc.w2"],
                                   params["edge_enc.b2"])
        gathered = np.einsum("bnsc,bcl->bnsl", C, ho)
        hc = np.concatenate([gathered, he], axis=-1)  # (B,N,S,2L)
        cache.update(c_obs=c_obs, c_edge=c_edge, he=he)
    else:
        aug = se_augment(O, E)
        hose, c_enc = _mlp2_forward(aug, params["enc.w1"], params["enc.b1"],
                                    params["enc.w2"], params["enc.b2"])
        hc = np.einsum("bnsc,bcl->bnsl", C, hose)  # (B,N,S,2L)
        cache.update(c_enc=c_enc)

    q1_in = hc[:, :, 0, :]
    h1, a1, c_conv1 = _conv_forward(params, "conv1", cfg, hc, q1_in, mask)

    g2 = np.einsum("bnsc,bcl->bnsl", C, h1)
    if cfg.variant == "edge":
        fc = np.concatenate([g2, cache["he"]], axis=-1)
    else:
        b, n, s = mask.shape
        tiled = np.broadcast_to(h1[:, :, None, :],
                                (b, n, s, h1.shape[-1]))
        fc = np.concatenate([g2, tiled], axis=-1)
    q2_in = fc[:, :, 0, :]
    h2, a2, c_conv2 = _conv_forward(params, "conv2", cfg, fc, q2_in, mask)

    q_input = np.concatenate([q1_in, h1, h2], axis=-1)  # (B,N,4L)
    q = q_input @ params["q.w"] + params["q.b"]

    cache.update(hc=hc, c_conv1=c_conv1, c_conv2=c_conv2, h1=h1, fc=fc,
                 q_input=q_input)
    return ForwardResult(q=q, attn1=a1, attn2=a2,
                         cache=cache if want_cache else None)


def backward(params: dict, cfg: DgnConfig, cache: dict,
             d_q: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss with upstream derivative d_q
    (same shape as the forward q output)."""
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    C = cache["C"]
    twol = cfg.conv_in

    grads["q.w"] += np.tensordot(cache["q_input"], d_q,
                                 axes=((0, 1), (0, 1)))
    grads["q.b"] += d_q.sum(axis=(0, 1))
    d_q_input = d_q @ params["q.w"].T
    d_q1_in = d_q_input[..., :twol].copy()
    d_h1 = d_q_input[..., twol:twol + cfg.latent].copy()
    d_h2 = d_q_input[..., twol + cfg.latent:].copy()

    d_q2_in, d_fc = _conv_backward(d_h2, cache["c_conv2"], params, "conv2",
                                   cfg, grads)
    d_fc = d_fc.copy()
    d_fc[:, :, 0, :] += d_q2_in

    d_g2 = d_fc[..., :cfg.latent]
    d_h1 += np.einsum("bnsc,bnsl->bcl", C, d_g2)
    if cfg.variant == "edge":
        d_he = d_fc[..., cfg.latent:].copy()
    else:
        d_h1 += d_fc[..., cfg.latent:].sum(axis=2)  # broadcast backward

    d_q1_c, d_hc = _conv_backward(d_h1, cache["c_conv1"], params, "conv1",
                                  cfg, grads)
    d_hc = d_hc.copy()
    d_hc[:, :, 0, :] += d_q1_in + d_q1_c

    if cfg.variant == "edge":
        d_gathered = d_hc[..., :cfg.latent]
        d_he += d_hc[..., cfg.latent:]
        d_ho = np.einsum("bnsc,bnsl->bcl", C, d_gathered)
        _, gw1, gb1, gw2, gb2 = _mlp2_backward(d_ho, cache["c_obs"],
                                               params["obs_enc.w1"],
                                               params["obs_enc.w2"])
        grads["obs_enc.w1"] += gw1
        grads["obs_enc.b1"] += gb1
        grads["obs_enc.w2"] += gw2
        grads["obs_enc.b2"] += gb2
        _, gw1, gb1, gw2, gb2 = _mlp2_backward(d_he, cache["c_edge"],
                                               params["edge_enc.w1"],
                                               params["edge_enc.w2"])
        grads["edge_enc.w1"] += gw1
        grads["edge_enc.b1"] += gb1
        grads["edge_enc.w2"] += gw2
        grads["edge_enc.b2"] += gb2
    else:
        d_hose = np.einsum("bnsc,bnsl->bcl", C, d_hc)
        _, gw1, gb1, gw2, gb2 = _mlp2_backward(d_hose, cache["c_enc"],
                                               params["enc.w1"],
                                               params["enc.w2"])
        grads["enc.w1"] += gw1
        grads["enc.b1"] += gb1
        grads["enc.w2"] += gw2
        grads["enc.b2"] += gb2
    return grads


def q_values(params: dict, cfg: DgnConfig, O: np.ndarray, E: np.ndarray,
             C: np.ndarray) -> ForwardResult:
    """Single-snapshot convenience wrapper: adds and strips the batch axis."""
    res = forward(params, cfg, O[None], E[None], C[None])
    return ForwardResult(q=res.q[0], attn1=res.attn1[0], attn2=res.attn2[0])


# -- optimization ------------------------------------------------------------


def soft_update(online: dict, target: dict, beta: float) -> None:
    """target <- beta * online + (1 - beta) * target, in place."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must be in (0, 1]")
    for name, p in online.items():
        target[name] *= 1.0 - beta
        target[name] += beta * p


@dataclass
class Sgd:
    """Plain SGD with optional momentum (velocity kept per parameter)."""
    lr: float = 1e-4
    momentum: float = 0.0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def apply(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            if self.momentum > 0.0:
                v = self.velocity.get(name)
                if v is None:
                    v = np.zeros_like(g)
                v = self.momentum * v + g
                self.velocity[name] = v
                params[name] -= self.lr * v
            else:
                params[name] -= self.lr * g


# -- checkpoints -------------------------------------------------------------


def config_hash(cfg: DgnConfig) -> str:
    doc = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    online: dict[str, np.ndarray]
    target: dict[str, np.ndarray]
    config: DgnConfig
    step: int
    optimizer: Sgd


def save_checkpoint(path, online: dict, target: dict, cfg: DgnConfig,
                    step: int, optimizer: Sgd) -> None:
    """Self-describing container, byte-stable for identical state.

    Layout: magic "DGNCKPT1"; u64 little-endian header length; UTF-8 JSON
    header with sorted keys {version, config, config_hash, step, opt: {lr,
    momentum}, arrays: [{name, dtype, shape, offset, nbytes}]}; then the raw
    C-order little-endian array payload. Array names are "online.<param>",
    "target.<param>" and "velocity.<param>", sorted lexically; offsets are
    relative to the payload start.
    """
    named: dict[str, np.ndarray] = {}
    for pname, arr in online.items():
        named[f"online.{pname}"] = arr
    for pname, arr in target.items():
        named[f"target.{pname}"] = arr
    for pname, arr in optimizer.velocity.items():
        named[f"velocity.{pname}"] = arr

    entries = []
    payload = bytearray()
    for name in sorted(named):
        arr = np.ascontiguousarray(named[name], dtype=np.float64)
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": "<f8",
                        "shape": list(arr.shape),
                        "offset": len(payload), "nbytes": len(raw)})
        payload.extend(raw)
    header = {"version": 1, "config": asdict(cfg),
              "config_hash": config_hash(cfg), "step": int(step),
              "opt": {"lr": optimizer.lr, "momentum": optimizer.momentum},
              "arrays": entries}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        fh.write(bytes(payload))


def load_checkpoint(path, expect_config: DgnConfig | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    cfg = DgnConfig(**header["config"])
    if header.get("config_hash") != config_hash(cfg):
        raise ValueError("checkpoint config hash mismatch (corrupt file)")
    if expect_config is not None and config_hash(expect_config) != \
            header["config_hash"]:
        raise ValueError("checkpoint was trained with a different config")
    online: dict[str, np.ndarray] = {}
    target: dict[str, np.ndarray] = {}
    velocity: dict[str, np.ndarray] = {}
    for ent in header["arrays"]:
        start, n = ent["offset"], ent["nbytes"]
        if start + n > len(payload):
            raise ValueError("checkpoint payload truncated")
        arr = np.frombuffer(payload[start:start + n],
                            dtype=np.dtype(ent["dtype"])).reshape(ent["shape"])
        arr = arr.copy()
        group, pname = ent["name"].split(".", 1)
        {"online": online, "target": target,
         "velocity": velocity}[group][pname] = arr
    expected = set(_param_shapes(cfg))
    if set(online) != expected or set(target) != expected:
        raise ValueError("checkpoint parameter set does not match its config")
    opt = Sgd(lr=header["opt"]["lr"], momentum=header["opt"]["momentum"],
              velocity=velocity)
    return Checkpoint(online=online, target=target, config=cfg,
                      step=header["step"], optimizer=opt)
