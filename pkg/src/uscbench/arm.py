"""Deterministic forward-only reference of the attribute relation module.

Pipeline for an image embedding ``F`` of shape (H, W, C):

1. attention head: conv3x3 -> ReLU -> conv3x3 giving a 3-channel map (B, S, C)
2. intra-sample queries: sigmoid(map channel) gates F, then a learned
   (H*W) -> N projection per attribute yields N x C queries
3. tokens = intra + inter (inter-sample queries are fixed parameters),
   concatenated in salient, camouflaged, background order (3N x C)
4. self-attention, query-to-image cross-attention, residual MLP
5. image-to-query cross-attention enriches F into F'
6. stand-in decoder: mean-pooled prompt, projected, dotted with every
   pixel of F' plus a bias, giving one logit map per attribute
7. per-pixel softmax over (B, S, C)

All attention is single-head, scaled by 1/sqrt(C), with residual addition.
The decoder is a linear stand-in, not a pretrained mask decoder.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, softmax

from .masks import AttributeLabel, TernaryProbMap

B, S, C = int(AttributeLabel.BACKGROUND), int(AttributeLabel.SALIENT), int(AttributeLabel.CAMOUFLAGED)
# token blocks in the concatenated query sequence
TOKEN_ORDER = (S, C, B)


class Queries(NamedTuple):
    salient: np.ndarray
    camouflaged: np.ndarray
    background: np.ndarray

    def by_label(self, label: int) -> np.ndarray:
        return {S: self.salient, C: self.camouflaged, B: self.background}[label]


class MaskTriplet(NamedTuple):
    salient: np.ndarray
    camouflaged: np.ndarray
    background: np.ndarray


@dataclass(frozen=True, eq=False)
class ArmParams:
    seed: int
    height: int
    width: int
    channels: int
    queries: int
    conv1_w: np.ndarray  # (hidden, C, 3, 3)
    conv1_b: np.ndarray
    conv2_w: np.ndarray  # (3, hidden, 3, 3)
    conv2_b: np.ndarray
    down_w: np.ndarray  # (3, N, H*W), indexed by label
    down_b: np.ndarray  # (3, N)
    inter_spq: np.ndarray  # (3, N, C), indexed by label
    sa_q: np.ndarray
    sa_k: np.ndarray
    sa_v: np.ndarray
    q2i_q: np.ndarray
    q2i_k: np.ndarray
    q2i_v: np.ndarray
    mlp_w1: np.ndarray  # (C, 2C)
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray  # (2C, C)
    mlp_b2: np.ndarray
    i2q_q: np.ndarray
    i2q_k: np.ndarray
    i2q_v: np.ndarray
    dec_w: np.ndarray  # (3, C, C), indexed by label
    dec_b: np.ndarray  # (3,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
                if isinstance(getattr(self, f.name), np.ndarray)}

    def to_bytes(self) -> bytes:
        return b"".join(a.tobytes() for a in self.arrays().values())

    def inter(self) -> Queries:
        return Queries(self.inter_spq[S], self.inter_spq[C], self.inter_spq[B])


def init_params(seed: int, height: int, width: int, channels: int, queries: int) -> ArmParams:
    """Uniform(-s, s) weights with s = 1/sqrt(fan_in), drawn in a fixed order
    from PCG64(seed)."""
    if height < 3 or width < 3:
        raise ValueError("height and width must be >= 3")
    if channels < 1 or queries < 1:
        raise ValueError("channels and queries must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    c, hw, hid = channels, height * width, channels

    def draw(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        a = rng.uniform(-s, s, size=shape)
        a.flags.writeable = False
        return a

    return ArmParams(
        seed=seed, height=height, width=width, channels=channels, queries=queries,
        conv1_w=draw((hid, c, 3, 3), 9 * c),
        conv1_b=draw((hid,), 9 * c),
        conv2_w=draw((3, hid, 3, 3), 9 * hid),
        conv2_b=draw((3,), 9 * hid),
        down_w=draw((3, queries, hw), hw),
        down_b=draw((3, queries), hw),
        inter_spq=draw((3, queries, c), c),
        sa_q=draw((c, c), c), sa_k=draw((c, c), c), sa_v=draw((c, c), c),
        q2i_q=draw((c, c), c), q2i_k=draw((c, c), c), q2i_v=draw((c, c), c),
        mlp_w1=draw((c, 2 * c), c),
        mlp_b1=draw((2 * c,), c),
        mlp_w2=draw((2 * c, c), 2 * c),
        mlp_b2=draw((c,), 2 * c),
        i2q_q=draw((c, c), c), i2q_k=draw((c, c), c), i2q_v=draw((c, c), c),
        dec_w=draw((3, c, c), c),
        dec_b=draw((3,), c),
    )


def _check_feature(F: np.ndarray, params: ArmParams) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    want = (params.height, params.width, params.channels)
    if F.shape != want:
        raise ValueError(f"feature map shape {F.shape} does not match params {want}")
    return F


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 convolution (cross-correlation) of (H, W, Cin)."""
    h, wd, _ = x.shape
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    out = np.broadcast_to(b, (h, wd, w.shape[0])).copy()
    for dy in range(3):
        for dx in range(3):
            out += xp[dy:dy + h, dx:dx + wd] @ w[:, :, dy, dx].T
    return out


def attention_head(F: np.ndarray, params: ArmParams) -> np.ndarray:
    """(H, W, 3) attention logits, channels ordered B, S, C."""
    F = _check_feature(F, params)
    hidden = np.maximum(conv3x3(F, params.conv1_w, params.conv1_b), 0.0)
    return conv3x3(hidden, params.conv2_w, params.conv2_b)


def intra_spq_from_map(F: np.ndarray, att_map: np.ndarray, params: ArmParams) -> Queries:
    F = _check_feature(F, params)
    gate = expit(att_map)
    flat_f = F.reshape(-1, params.channels)
    out = {}
    for label in (S, C, B):
        gated = gate[..., label].reshape(-1, 1) * flat_f  # (HW, C)
        out[label] = params.down_w[label] @ gated + params.down_b[label][:, None]
    return Queries(out[S], out[C], out[B])


def intra_spq(F: np.ndarray, params: ArmParams) -> Queries:
    return intra_spq_from_map(F, attention_head(F, params), params)


def _attend(queries, context, wq, wk, wv):
    scale = 1.0 / np.sqrt(queries.shape[1])
    logits = (queries @ wq) @ (context @ wk).T * scale
    weights = softmax(logits, axis=1)
    return queries + weights @ (context @ wv), weights


def self_attention(tokens: np.ndarray, params: ArmParams) -> tuple[np.ndarray, np.ndarray]:
    """Returns (updated tokens, attention weights)."""
    return _attend(tokens, tokens, params.sa_q, params.sa_k, params.sa_v)


def cross_attention(queries: np.ndarray, context: np.ndarray, params: ArmParams,
                    direction: str) -> tuple[np.ndarray, np.ndarray]:
    """Query-to-image ("Q2I": tokens attend to pixels) or image-to-query
    ("I2Q": pixels attend to tokens). Returns (updated queries, weights)."""
    if queries.shape[1] != context.shape[1]:
        raise ValueError(f"width mismatch: {queries.shape[1]} vs {context.shape[1]}")
    if direction == "Q2I":
        return _attend(queries, context, params.q2i_q, params.q2i_k, params.q2i_v)
    if direction == "I2Q":
        return _attend(queries, context, params.i2q_q, params.i2q_k, params.i2q_v)
    raise ValueError(f"direction must be 'Q2I' or 'I2Q', got {direction!r}")


def mlp(tokens: np.ndarray, params: ArmParams) -> np.ndarray:
    hidden = np.maximum(tokens @ params.mlp_w1 + params.mlp_b1, 0.0)
    return tokens + hidden @ params.mlp_w2 + params.mlp_b2


class PromptResult(NamedTuple):
    prompts: Queries
    enriched: np.ndarray  # F', (H, W, C)
    attention_map: np.ndarray  # (H, W, 3)
    intra: Queries
    inter: Queries
    weights: dict  # name -> attention weight matrix


def _stack(q: Queries) -> np.ndarray:
    return np.concatenate([q.by_label(lbl) for lbl in TOKEN_ORDER], axis=0)


def _split(tokens: np.ndarray, n: int) -> Queries:
    parts = {lbl: tokens[i * n:(i + 1) * n] for i, lbl in enumerate(TOKEN_ORDER)}
    return Queries(parts[S], parts[C], parts[B])


def prompt_gen(F: np.ndarray, params: ArmParams) -> PromptResult:
    F = _check_feature(F, params)
    att = attention_head(F, params)
    intra = intra_spq_from_map(F, att, params)
    inter = params.inter()
    tokens = _stack(intra) + _stack(inter)
    tokens, w_sa = self_attention(tokens, params)
    flat_f = F.reshape(-1, params.channels)
    tokens, w_q2i = cross_attention(tokens, flat_f, params, "Q2I")
    tokens = mlp(tokens, params)
    enriched, w_i2q = cross_attention(flat_f, tokens, params, "I2Q")
    return PromptResult(
        prompts=_split(tokens, params.queries),
        enriched=enriched.reshape(F.shape),
        attention_map=att,
        intra=intra,
        inter=inter,
        weights={"SA": w_sa, "Q2I": w_q2i, "I2Q": w_i2q},
    )


def mask_decode_standin(prompts: Queries, enriched: np.ndarray, params: ArmParams) -> MaskTriplet:
    if enriched.shape[-1] != prompts.salient.shape[1]:
        raise ValueError("prompt width does not match feature channels")
    out = {}
    for label in (S, C, B):
        direction = params.dec_w[label] @ prompts.by_label(label).mean(axis=0)
        out[label] = enriched @ direction + params.dec_b[label]
    return MaskTriplet(out[S], out[C], out[B])


def fuse_predictions(m: MaskTriplet) -> TernaryProbMap:
    logits = np.stack([m.background, m.salient, m.camouflaged], axis=-1)
    return TernaryProbMap(softmax(logits, axis=-1))


class ForwardResult(NamedTuple):
    prompt: PromptResult
    masks: MaskTriplet
    probs: TernaryProbMap


def arm_forward(F: np.ndarray, params: ArmParams) -> ForwardResult:
    pr = prompt_gen(F, params)
    masks = mask_decode_standin(pr.prompts, pr.enriched, params)
    return ForwardResult(pr, masks, fuse_predictions(masks))


def random_feature(seed: int, height: int, width: int, channels: int, stream: int = 0) -> np.ndarray:
    """Uniform(-1, 1) embedding from an input stream independent of the params."""
    rng = np.random.Generator(np.random.PCG64([seed, 1 + stream]))
    return rng.uniform(-1.0, 1.0, size=(height, width, channels))


# -- invariant suite ------------------------------------------------------------

class Check(NamedTuple):
    name: str
    passed: bool
    detail: str


def _row_sum_error(w: np.ndarray) -> float:
    return float(np.max(np.abs(w.sum(axis=-1) - 1.0)))


def _outputs_bytes(res: ForwardResult) -> bytes:
    pr = res.prompt
    parts = [*pr.prompts, pr.enriched, pr.attention_map, *pr.intra, *res.masks, res.probs.probs]
    return b"".join(np.ascontiguousarray(p).tobytes() for p in parts)


def _corrupted(params: ArmParams) -> ArmParams:
    w = params.conv1_w.copy()
    w.flat[0] += 1e-3
    w.flags.writeable = False
    return dataclasses.replace(params, conv1_w=w)


def run_invariant_checks(seed: int, height: int, width: int, channels: int, queries: int,
                         corrupt_weight: bool = False, tol: float = 1e-9) -> list[Check]:
    """Run the forward pass on seeded inputs and evaluate each invariant.

    ``corrupt_weight`` perturbs one weight before the second determinism run,
    as a negative control for the determinism check.
    """
    params = init_params(seed, height, width, channels, queries)
    before = params.inter_spq.tobytes()
    f1 = random_feature(seed, height, width, channels, stream=0)
    f2 = random_feature(seed, height, width, channels, stream=1)
    r1 = arm_forward(f1, params)
    r2 = arm_forward(f2, params)
    checks = []

    for name in ("SA", "Q2I", "I2Q"):
        err = max(_row_sum_error(r.prompt.weights[name]) for r in (r1, r2))
        checks.append(Check(f"softmax rows sum to 1 ({name})", err <= tol, f"max |sum-1| = {err:.3e}"))

    err = max(_row_sum_error(r.probs.probs) for r in (r1, r2))
    checks.append(Check("fused probabilities sum to 1", err <= tol, f"max |sum-1| = {err:.3e}"))

    same_inter = (params.inter_spq.tobytes() == before
                  and _stack(r1.prompt.inter).tobytes() == _stack(r2.prompt.inter).tobytes())
    checks.append(Check("inter-sample queries unchanged across inputs", same_inter,
                        "byte-identical" if same_inter else "inter-sample queries changed"))

    diff = float(np.max(np.abs(_stack(r1.prompt.intra) - _stack(r2.prompt.intra))))
    checks.append(Check("intra-sample queries depend on the input", diff > 1e-9, f"max diff = {diff:.3e}"))

    finite = all(np.all(np.isfinite(a)) for r in (r1, r2) for a in
                 (*r.prompt.prompts, r.prompt.enriched, r.prompt.attention_map, *r.masks, r.probs.probs))
    checks.append(Check("all intermediates finite", bool(finite), "ok" if finite else "non-finite value"))

    params_b = init_params(seed, height, width, channels, queries)
    if corrupt_weight:
        params_b = _corrupted(params_b)
    r1b = arm_forward(random_feature(seed, height, width, channels, stream=0), params_b)
    same = params.to_bytes() == params_b.to_bytes() and _outputs_bytes(r1) == _outputs_bytes(r1b)
    checks.append(Check("two runs bit-identical", same, "identical" if same else "outputs differ"))
    return checks
