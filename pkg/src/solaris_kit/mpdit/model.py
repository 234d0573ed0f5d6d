"""Multiplayer video transformer predicting the denoising velocity field.

Input is a joint latent of shape (B, P, T, H, W, C): B sequences, P players,
T frames of H x W x C tile observations. Each player-frame is zero-padded,
cut into patches, and linearly embedded; noise-level and per-tick action
embeddings are added per frame block; a learned player-ID vector is added
at the start of every attention layer. All players' tokens at one time
index form one frame block of the interleaved sequence, over which the
shared self-attention runs with an explicit mask or a rolling KV cache.
First-frame conditioning is per-player cross-attention in the first layer.

Attention layers run through `checkpoint` by default, so a recording tape
retains layer inputs rather than attention internals; `remat=False` tapes
every op (the memory-hungry baseline the trainers compare against).
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..flowmatch import NoiseLevels
from ..masks import AttentionMask, mask_to_bias
from ..substrate import (
    Rng,
    Tensor,
    checkpoint,
    concat,
    gelu,
    layer_norm,
    matmul,
    reshape,
    slice_axis,
    softmax,
    stop_grad,
    tensor,
    transpose,
)
from .cache import KvCache
from .rope import rope_tables, rotate_tensor, token_positions


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 4
    heads: int = 4
    model_dim: int = 128
    P: int = 2
    tokens_per_player_frame: int = 16
    action_dim: int = 25
    window_L_s: int = 6
    obs_height: int = 9
    obs_width: int = 9
    obs_channels: int = 8
    patch: int = 3
    mlp_ratio: int = 2

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ValueError("model_dim must divide evenly across heads")
        if (self.model_dim // self.heads) % 2 != 0:
            raise ValueError("head dim must be even for rotary pairs")
        if self.P < 1 or self.window_L_s < 1 or self.layers < 1:
            raise ValueError("P, window_L_s, and layers must be at least 1")
        grid = math.isqrt(self.tokens_per_player_frame)
        if grid * grid != self.tokens_per_player_frame:
            raise ValueError("tokens_per_player_frame must be a square grid")
        if grid * self.patch < max(self.obs_height, self.obs_width):
            raise ValueError("patch grid too small for the observation")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    @property
    def token_grid(self) -> int:
        return math.isqrt(self.tokens_per_player_frame)

    @property
    def padded_hw(self) -> int:
        return self.token_grid * self.patch

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * self.obs_channels

    @property
    def tokens_per_frame(self) -> int:
        """All players' tokens at one time index (one frame block)."""
        return self.P * self.tokens_per_player_frame


def embed_actions(a, weight: Tensor, bias: Tensor) -> Tensor:
    """Shared per-player linear action embedding: (B,P,T,Da) -> (B,P,T,D)."""
    at = a if isinstance(a, Tensor) else tensor(a)
    if at.shape[-1] != weight.shape[0]:
        raise ValueError(
            f"action feature dim {at.shape[-1]} does not match table {weight.shape[0]}"
        )
    return matmul(at, weight) + bias


def add_player_embeddings(tokens: Tensor, table: Tensor) -> Tensor:
    """Add player p's learned vector to that player's tokens.

    tokens: (B, T, P, tokens_per_player_frame, D); table: (P, D).
    """
    P = tokens.shape[2]
    if table.shape[0] != P:
        raise ValueError(f"player table has {table.shape[0]} rows, tokens have P={P}")
    return tokens + reshape(table, (1, 1, P, 1, table.shape[1]))


def condition_on_first_frame(
    queries: Tensor,
    first_frame_tokens: Tensor,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    heads: int,
) -> Tensor:
    """Per-player cross-attention read of that player's first-frame tokens.

    queries: (B, T, P, tpp, D) sequence tokens; first_frame_tokens:
    (B, P, tpp, D). Player p's queries only ever see player p's reference
    tokens; the player axis rides along as a batch dimension.
    """
    B, T, P, tpp, D = queries.shape
    hd = D // heads
    q_in = transpose(queries, (0, 2, 1, 3, 4))  # (B,P,T,tpp,D)
    q_in = reshape(q_in, (B, P, T * tpp, D))
    q = reshape(matmul(q_in, wq) + bq, (B, P, T * tpp, heads, hd))
    q = transpose(q, (0, 1, 3, 2, 4))  # (B,P,heads,T*tpp,hd)
    kf = reshape(matmul(first_frame_tokens, wk) + bk, (B, P, tpp, heads, hd))
    kf = transpose(kf, (0, 1, 3, 2, 4))
    vf = reshape(matmul(first_frame_tokens, wv) + bv, (B, P, tpp, heads, hd))
    vf = transpose(vf, (0, 1, 3, 2, 4))
    scores = matmul(q * (1.0 / math.sqrt(hd)), transpose(kf, (0, 1, 2, 4, 3)))
    probs = softmax(scores)
    mixed = matmul(probs, vf)  # (B,P,heads,T*tpp,hd)
    mixed = reshape(transpose(mixed, (0, 1, 3, 2, 4)), (B, P, T * tpp, D))
    out = matmul(mixed, wo) + bo
    out = reshape(out, (B, P, T, tpp, D))
    return transpose(out, (0, 2, 1, 3, 4))


class MultiplayerDiT:
    """The velocity model G(x_sigma; sigma, actions) over joint latents."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._init_params(Rng(seed, "model-init"))

    # -- parameters ---------------------------------------------------------

    def _add(self, name: str, array: np.ndarray, trainable: bool = True) -> Tensor:
        t = Tensor(array, requires_grad=trainable, name=name)
        self._params[name] = t
        return t

    def _init_params(self, rng: Rng) -> None:
        cfg = self.config
        D = cfg.model_dim
        scale = 0.02

        def normal(name, shape):
            return self._add(name, rng.spawn(name).normal(shape) * scale)

        def zeros(name, shape):
            return self._add(name, np.zeros(shape, dtype=np.float32))

        def ones(name, shape):
            return self._add(name, np.ones(shape, dtype=np.float32))

        normal("patch_w", (cfg.patch_dim, D))
        zeros("patch_b", (D,))
        normal("act_w", (cfg.action_dim, D))
        zeros("act_b", (D,))
        normal("sig_w1", (1, D))
        zeros("sig_b1", (D,))
        normal("sig_w2", (D, D))
        zeros("sig_b2", (D,))
        normal("player_table", (cfg.P, D))
        for i in range(cfg.layers):
            p = f"l{i}."
            ones(p + "ln1_g", (D,))
            zeros(p + "ln1_b", (D,))
            for nm in ("wq", "wk", "wv", "wo"):
                normal(p + nm, (D, D))
            for nm in ("bq", "bk", "bv", "bo"):
                zeros(p + nm, (D,))
            if i == 0:
                ones(p + "lnx_g", (D,))
                zeros(p + "lnx_b", (D,))
                for nm in ("xwq", "xwk", "xwv", "xwo"):
                    normal(p + nm, (D, D))
                for nm in ("xbq", "xbk", "xbv", "xbo"):
                    zeros(p + nm, (D,))
            ones(p + "ln2_g", (D,))
            zeros(p + "ln2_b", (D,))
            normal(p + "mlp_w1", (D, cfg.mlp_ratio * D))
            zeros(p + "mlp_b1", (cfg.mlp_ratio * D,))
            normal(p + "mlp_w2", (cfg.mlp_ratio * D, D))
            zeros(p + "mlp_b2", (D,))
        ones("head_ln_g", (D,))
        zeros("head_ln_b", (D,))
        # small random head, not zeros: a fresh model must produce informative
        # outputs or the equivalence and symmetry tests pass vacuously
        normal("head_w", (D, cfg.patch_dim))
        zeros("head_b", (cfg.patch_dim,))

    def params(self) -> list[Tensor]:
        return list(self._params.values())

    def named_params(self) -> "OrderedDict[str, Tensor]":
        return self._params

    def state_dict(self) -> dict:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state(self, state: dict) -> None:
        missing = set(self._params) ^ set(state)
        if missing:
            raise ValueError(f"state does not match model params: {sorted(missing)}")
        for k, t in self._params.items():
            arr = np.ascontiguousarray(state[k], dtype=np.float32)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}")
            t.data = arr

    def clone(self, frozen: bool = False) -> "MultiplayerDiT":
        twin = MultiplayerDiT(self.config)
        twin.load_state(self.state_dict())
        if frozen:
            for t in twin.params():
                t.requires_grad = False
        return twin

    # -- embedding stages ---------------------------------------------------

    def _patchify(self, x: Tensor) -> Tensor:
        """(B,P,T,H,W,C) -> patch tokens (B,P,T,tpp,patch_dim)."""
        cfg = self.config
        B, P, T, H, W, C = x.shape
        pad_h = cfg.padded_hw - H
        pad_w = cfg.padded_hw - W
        if pad_h < 0 or pad_w < 0:
            raise ValueError(f"observation {H}x{W} exceeds padded grid {cfg.padded_hw}")
        if pad_h:
            x = concat([x, tensor(np.zeros((B, P, T, pad_h, W, C), np.float32))], axis=3)
        if pad_w:
            x = concat(
                [x, tensor(np.zeros((B, P, T, cfg.padded_hw, pad_w, C), np.float32))],
                axis=4,
            )
        g, s = cfg.token_grid, cfg.patch
        x = reshape(x, (B, P, T, g, s, g, s, C))
        x = transpose(x, (0, 1, 2, 3, 5, 4, 6, 7))  # (B,P,T,g,g,s,s,C)
        return reshape(x, (B, P, T, g * g, s * s * C))

    def _unpatchify(self, tokens: Tensor) -> Tensor:
        """(B,T,P,tpp,patch_dim) -> (B,P,T,obs_h,obs_w,C)."""
        cfg = self.config
        B, T, P, tpp, pd = tokens.shape
        g, s, C = cfg.token_grid, cfg.patch, cfg.obs_channels
        x = reshape(tokens, (B, T, P, g, g, s, s, C))
        x = transpose(x, (0, 2, 1, 3, 5, 4, 6, 7))  # (B,P,T,g,s,g,s,C)
        x = reshape(x, (B, P, T, g * s, g * s, C))
        x = slice_axis(x, 3, 0, cfg.obs_height)
        return slice_axis(x, 4, 0, cfg.obs_width)

    def embed_actions(self, a) -> Tensor:
        return embed_actions(a, self._params["act_w"], self._params["act_b"])

    def _embed_sigma(self, sigma: np.ndarray) -> Tensor:
        """(P,T) noise levels -> (T,P,D) additive embedding."""
        P, T = sigma.shape
        s = tensor(sigma.reshape(P, T, 1))
        h = gelu(matmul(s, self._params["sig_w1"]) + self._params["sig_b1"])
        emb = matmul(h, self._params["sig_w2"]) + self._params["sig_b2"]
        return transpose(emb, (1, 0, 2))

    def condition_tokens(self, first_frame) -> Tensor:
        """Reference tokens from the real initial frame: (B,P,H,W,C) -> (B,P,tpp,D)."""
        ff = first_frame if isinstance(first_frame, Tensor) else tensor(first_frame)
        B, P, H, W, C = ff.shape
        patches = self._patchify(reshape(ff, (B, P, 1, H, W, C)))
        tok = matmul(patches, self._params["patch_w"]) + self._params["patch_b"]
        return reshape(tok, (B, P, self.config.tokens_per_player_frame, self.config.model_dim))

    # -- attention layers ----------------------------------------------------

    def _make_layer_fn(
        self,
        i: int,
        cos: np.ndarray,
        sin: np.ndarray,
        bias: np.ndarray | None,
        cache: KvCache | None,
        kv_stop_grad: bool,
        clean_tokens: int,
        append_to_cache: bool,
    ):
        cfg = self.config
        pm = self._params
        p = f"l{i}."
        heads, hd = cfg.heads, cfg.head_dim

        def fn(x: Tensor, fft: Tensor | None = None) -> Tensor:
            B, T, P, tpp, D = x.shape
            S = T * P * tpp
            x = add_player_embeddings(x, pm["player_table"])
            h = layer_norm(x, pm[p + "ln1_g"], pm[p + "ln1_b"])
            q = reshape(matmul(h, pm[p + "wq"]) + pm[p + "bq"], (B, S, heads, hd))
            k = reshape(matmul(h, pm[p + "wk"]) + pm[p + "bk"], (B, S, heads, hd))
            v = reshape(matmul(h, pm[p + "wv"]) + pm[p + "bv"], (B, S, heads, hd))
            q = transpose(q, (0, 2, 1, 3))  # (B,heads,S,hd)
            k = transpose(k, (0, 2, 1, 3))
            v = transpose(v, (0, 2, 1, 3))
            q = rotate_tensor(q, cos, sin)
            k = rotate_tensor(k, cos, sin)
            q = q * (1.0 / math.sqrt(hd))

            if cache is not None:
                ctx = cache.context(i)
                if append_to_cache:
                    k_store, v_store = (stop_grad(k), stop_grad(v)) if kv_stop_grad else (k, v)
                    cache.append(i, k_store, v_store)
                if ctx:
                    k_all = concat([e[0] for e in ctx] + [k], axis=2)
                    v_all = concat([e[1] for e in ctx] + [v], axis=2)
                else:
                    k_all, v_all = k, v
                scores = matmul(q, transpose(k_all, (0, 1, 3, 2)))
                probs = softmax(scores)
                o = matmul(probs, v_all)
            else:
                if kv_stop_grad and clean_tokens > 0:
                    k = concat(
                        [stop_grad(slice_axis(k, 2, 0, clean_tokens)),
                         slice_axis(k, 2, clean_tokens, S)],
                        axis=2,
                    )
                    v = concat(
                        [stop_grad(slice_axis(v, 2, 0, clean_tokens)),
                         slice_axis(v, 2, clean_tokens, S)],
                        axis=2,
                    )
                scores = matmul(q, transpose(k, (0, 1, 3, 2)))
                if bias is not None:
                    scores = scores + bias
                probs = softmax(scores)
                o = matmul(probs, v)

            o = reshape(transpose(o, (0, 2, 1, 3)), (B, T, P, tpp, D))
            x = x + (matmul(o, pm[p + "wo"]) + pm[p + "bo"])

            if fft is not None:
                hx = layer_norm(x, pm[p + "lnx_g"], pm[p + "lnx_b"])
                x = x + condition_on_first_frame(
                    hx, fft,
                    pm[p + "xwq"], pm[p + "xbq"], pm[p + "xwk"], pm[p + "xbk"],
                    pm[p + "xwv"], pm[p + "xbv"], pm[p + "xwo"], pm[p + "xbo"],
                    heads,
                )

            h2 = layer_norm(x, pm[p + "ln2_g"], pm[p + "ln2_b"])
            m = gelu(matmul(h2, pm[p + "mlp_w1"]) + pm[p + "mlp_b1"])
            m = matmul(m, pm[p + "mlp_w2"]) + pm[p + "mlp_b2"]
            return x + m

        return fn

    # -- forward -------------------------------------------------------------

    def forward(
        self,
        x_sigma,
        sigma,
        a,
        mask: AttentionMask | None = None,
        cache: KvCache | None = None,
        kv_stop_grad: bool = False,
        first_frame_tokens: Tensor | None = None,
        append_to_cache: bool = False,
        remat: bool = True,
    ) -> Tensor:
        """Velocity prediction with the shape of x_sigma.

        Exactly one of `mask` (parallel pass over the whole token sequence)
        or `cache` (one new frame block against the rolling window) must be
        given. With a cache, keys/values of this block are appended only
        when `append_to_cache` is set (the clean caching pass); plain
        denoise evaluations leave the cache untouched.
        """
        cfg = self.config
        if (mask is None) == (cache is None):
            raise ValueError("provide exactly one of mask or cache")
        xt = x_sigma if isinstance(x_sigma, Tensor) else tensor(x_sigma)
        if xt.ndim != 6:
            raise ValueError(f"expected (B,P,T,H,W,C), got {xt.shape}")
        B, P, T, H, W, C = xt.shape
        if P != cfg.P:
            raise ValueError(f"config has P={cfg.P}, input has P={P}")
        if (H, W, C) != (cfg.obs_height, cfg.obs_width, cfg.obs_channels):
            raise ValueError(f"observation dims {(H, W, C)} do not match config")

        sig = sigma.sigma if isinstance(sigma, NoiseLevels) else np.asarray(sigma, np.float32)
        if sig.ndim == 0:
            sig = np.full((P, T), float(sig), dtype=np.float32)
        if sig.shape != (P, T):
            raise ValueError(f"noise levels {sig.shape} do not match (P={P}, T={T})")

        at = a if isinstance(a, Tensor) else tensor(a)
        if at.shape != (B, P, T, cfg.action_dim):
            raise ValueError(f"actions {at.shape} do not match (B,P,T,{cfg.action_dim})")

        S = T * cfg.tokens_per_frame
        if mask is not None:
            if mask.size != S:
                raise ValueError(f"mask covers {mask.size} tokens, input has {S}")
            frame_index = mask.frame_of[:: cfg.tokens_per_frame].astype(np.int64)
            bias = None if mask.allow.all() else mask_to_bias(mask)
            clean_tokens = int((~mask.is_noisy).sum()) if mask.is_noisy.any() else 0
            if clean_tokens and not mask.is_noisy[clean_tokens:].all():
                raise ValueError("noisy tokens must form a contiguous trailing block")
        else:
            if T != 1:
                raise ValueError("cached forward takes exactly one new frame block")
            if cache.layers != cfg.layers:
                raise ValueError("cache layer count does not match the model")
            frame_index = np.array([cache.frames_seen], dtype=np.int64)
            bias = None
            clean_tokens = 0

        pos_t, pos_h, pos_w = token_positions(
            frame_index, cfg.tokens_per_player_frame, cfg.token_grid, P
        )
        cos, sin = rope_tables(pos_t, pos_h, pos_w, cfg.head_dim)

        # embed: patches + noise level + actions, then frame-major layout
        tok = matmul(self._patchify(xt), self._params["patch_w"]) + self._params["patch_b"]
        sig_emb = self._embed_sigma(sig)  # (T,P,D)
        act_emb = self.embed_actions(at)  # (B,P,T,D)
        x = transpose(tok, (0, 2, 1, 3, 4))  # (B,T,P,tpp,D)
        x = x + reshape(sig_emb, (1, T, P, 1, cfg.model_dim))
        x = x + reshape(transpose(act_emb, (0, 2, 1, 3)), (B, T, P, 1, cfg.model_dim))

        live = any(t.requires_grad for t in self._params.values())
        for i in range(cfg.layers):
            fn = self._make_layer_fn(
                i, cos, sin, bias, cache, kv_stop_grad, clean_tokens, append_to_cache
            )
            fft = first_frame_tokens if i == 0 else None
            if remat and cache is None:
                if fft is not None:
                    x = checkpoint(fn, x, fft, has_params=live)
                else:
                    x = checkpoint(fn, x, has_params=live)
            else:
                x = fn(x, fft) if fft is not None else fn(x)

        h = layer_norm(x, self._params["head_ln_g"], self._params["head_ln_b"])
        patches = matmul(h, self._params["head_w"]) + self._params["head_b"]
        return self._unpatchify(patches)
