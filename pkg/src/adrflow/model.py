"""The full advection-diffusion-reaction network.

A forward pass embeds the channel-stacked history window into ``c`` hidden
channels with a pointwise MLP, applies ``layer_count`` split steps, then
projects back to the data channels:

    reaction (1x1 residual MLP, possibly several substeps)
    -> implicit diffusion (per-channel trainable diffusivity)
    -> displacement prediction (residual conv stack, zero-initialized head)
    -> semi-Lagrangian push of the hidden state.

The displacement net reads the hidden state after diffusion-reaction by
default; ``flow_from_history`` switches its input to the raw stacked
history.  ``fused_dr`` replaces the split reaction/diffusion pair with one
residual 3x3 convolution block, and ``advection=False`` drops the push
entirely, leaving a plain residual conv network (the ablation baseline).

Because the displacement head starts at exactly zero, a freshly initialized
network contains no advection at all: its forward pass equals the pure
diffusion-reaction network's.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .container import load_container, save_container
from .diffusion import DctPlan, diffuse_implicit, softplus_inverse
from .errors import ConfigError, ShapeMismatchError
from .fields import PushMode
from .advection import push
from .reaction import (Conv3x3Params, Mlp1x1Params, apply_mlp, conv3x3,
                       reaction_step, residual_conv_block)
from .tape import Tape, Var, reshape, softplus, value_of

INITIAL_DIFFUSIVITY = 1e-3  # effective kappa right after init; near-zero but positive


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    hidden_channels: int = 8
    layer_count: int = 1
    h: float = 1.0
    push_mode: PushMode = PushMode.COLOR
    history_len: int = 0            # j: the window holds j+1 frames
    reaction_substeps: int = 1
    reaction_hidden: int | None = None   # defaults to hidden_channels
    flow_width: int | None = None        # defaults to hidden_channels
    flow_blocks: int = 2
    fused_dr: bool = False
    shared_flow: bool = False
    flow_from_history: bool = False
    advection: bool = True
    use_fft_dct: bool = False

    def __post_init__(self):
        if self.layer_count < 1:
            raise ConfigError("layer_count must be >= 1")
        if self.hidden_channels < self.in_channels:
            raise ConfigError("hidden_channels must be >= in_channels")
        if self.history_len < 0 or self.reaction_substeps < 1 or self.flow_blocks < 0:
            raise ConfigError("history_len >= 0, reaction_substeps >= 1, flow_blocks >= 0")
        if self.h <= 0:
            raise ConfigError("step size h must be positive")
        object.__setattr__(self, "push_mode", PushMode.parse(self.push_mode))

    @property
    def window_frames(self) -> int:
        return self.history_len + 1

    @property
    def stacked_channels(self) -> int:
        return self.in_channels * self.window_frames


@dataclass(frozen=True, eq=False)
class DisplacementNetParams:
    """Residual conv stack ending in a zero-initialized displacement head."""

    conv_in: Conv3x3Params
    blocks: tuple
    conv_out: Conv3x3Params


@dataclass(frozen=True, eq=False)
class AdrLayerParams:
    reaction: Mlp1x1Params | None
    fused: tuple | None          # (Conv3x3Params, Conv3x3Params) in fused mode
    kappa_raw: object | None     # (c,) raw diffusivities; effective = softplus
    flow: DisplacementNetParams | None


@dataclass(frozen=True, eq=False)
class AdrModel:
    config: ModelConfig
    m_in: Mlp1x1Params
    layers: tuple
    m_out: Mlp1x1Params
    denoiser: object = None      # optional post-projection hook, unused by default


@dataclass(frozen=True)
class HistoryWindow:
    """j+1 consecutive frames, (batch, frames, channels, height, width)."""

    frames: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 5:
            raise ShapeMismatchError("HistoryWindow", f.shape, ("B", "T", "m", "H", "W"))
        object.__setattr__(self, "frames", f)


# ---------------------------------------------------------------------------
# initialization


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_mlp(rng, c_in, hidden, c_out) -> Mlp1x1Params:
    return Mlp1x1Params(w1=_uniform(rng, (hidden, c_in), c_in),
                        b1=_uniform(rng, (hidden,), c_in),
                        w2=_uniform(rng, (c_out, hidden), hidden),
                        b2=_uniform(rng, (c_out,), hidden))


def _init_conv(rng, c_in, c_out, zero=False) -> Conv3x3Params:
    if zero:
        return Conv3x3Params(np.zeros((c_out, c_in, 3, 3)), np.zeros(c_out))
    fan = c_in * 9
    return Conv3x3Params(_uniform(rng, (c_out, c_in, 3, 3), fan),
                         _uniform(rng, (c_out,), fan))


def _init_flow(rng, cfg: ModelConfig) -> DisplacementNetParams:
    c = cfg.hidden_channels
    width = cfg.flow_width or c
    c_in = cfg.stacked_channels if cfg.flow_from_history else c
    c_out = 2 if cfg.shared_flow else 2 * c
    blocks = tuple((_init_conv(rng, width, width), _init_conv(rng, width, width))
                   for _ in range(cfg.flow_blocks))
    return DisplacementNetParams(conv_in=_init_conv(rng, c_in, width),
                                 blocks=blocks,
                                 conv_out=_init_conv(rng, width, c_out, zero=True))


def init_model(cfg: ModelConfig, seed: int = 0,
               kappa_init: float = INITIAL_DIFFUSIVITY) -> AdrModel:
    """Uniform fan-in weights, with two zero-initialized heads.

    The displacement head starts at zero (no advection at initialization)
    and so does the projection MLP's output layer: a fresh network predicts
    exactly zero, which keeps early training from suppressing the input
    signal instead of learning to transport it.
    """
    rng = np.random.default_rng(seed)
    c = cfg.hidden_channels
    m_in = _init_mlp(rng, cfg.stacked_channels, c, c)
    layers = []
    for _ in range(cfg.layer_count):
        if cfg.fused_dr:
            reaction, fused, kappa = None, (_init_conv(rng, c, c), _init_conv(rng, c, c)), None
        else:
            hidden = cfg.reaction_hidden or c
            reaction = _init_mlp(rng, c, hidden, c)
            fused = None
            kappa = np.full(c, softplus_inverse(kappa_init))
        flow = _init_flow(rng, cfg) if cfg.advection else None
        layers.append(AdrLayerParams(reaction=reaction, fused=fused,
                                     kappa_raw=kappa, flow=flow))
    m_out = _init_mlp(rng, c, c, cfg.in_channels)
    m_out = Mlp1x1Params(w1=m_out.w1, b1=m_out.b1,
                         w2=np.zeros((cfg.in_channels, c)),
                         b2=np.zeros(cfg.in_channels))
    return AdrModel(config=cfg, m_in=m_in, layers=tuple(layers), m_out=m_out)


# ---------------------------------------------------------------------------
# forward pass


@lru_cache(maxsize=32)
def grid_plan(height: int, width: int, use_fft: bool = False) -> DctPlan:
    return DctPlan.create(height, width, use_fft)


def displacement_net(x, p: DisplacementNetParams):
    """Residual conv stack producing per-pixel displacements (B, c, 2, H, W).

    The head is zero at initialization, so a fresh net outputs exactly zero
    flow for any input.
    """
    h = conv3x3(x, p.conv_in)
    for first, second in p.blocks:
        h = residual_conv_block(h, first, second)
    u = conv3x3(h, p.conv_out)
    B, two_c, H, W = value_of(u).shape
    return reshape(u, (B, two_c // 2, 2, H, W))


def adr_layer(x, p: AdrLayerParams, cfg: ModelConfig, history_stack, plan: DctPlan):
    """One split step: reaction(s) -> diffusion -> displacement -> push."""
    if cfg.fused_dr:
        x = residual_conv_block(x, p.fused[0], p.fused[1], cfg.h)
    else:
        for _ in range(cfg.reaction_substeps):
            x = reaction_step(x, p.reaction, cfg.h)
        x = diffuse_implicit(x, softplus(p.kappa_raw), cfg.h, plan)
    if p.flow is not None:
        flow_input = history_stack if cfg.flow_from_history else x
        u = displacement_net(flow_input, p.flow)
        x = push(x, u, cfg.push_mode)
    return x


def _history_stack(history, cfg: ModelConfig) -> np.ndarray:
    frames = history.frames if isinstance(history, HistoryWindow) else np.asarray(history)
    if frames.ndim != 5:
        raise ShapeMismatchError("history", frames.shape, ("B", "T", "m", "H", "W"))
    B, T, m, H, W = frames.shape
    if T != cfg.window_frames or m != cfg.in_channels:
        raise ShapeMismatchError("history window", (T, m),
                                 (cfg.window_frames, cfg.in_channels))
    return frames.reshape(B, T * m, H, W)


def forward(model: AdrModel, history):
    """Predict the next frame (B, m, H, W) from a (B, j+1, m, H, W) window.

    Deterministic for fixed parameters; returns a tracked Var when the model
    parameters are tape variables.
    """
    cfg = model.config
    stacked = _history_stack(history, cfg)
    H, W = stacked.shape[2], stacked.shape[3]
    plan = grid_plan(H, W, cfg.use_fft_dct)
    x = apply_mlp(stacked, model.m_in)
    for layer in model.layers:
        x = adr_layer(x, layer, cfg, stacked, plan)
    out = apply_mlp(x, model.m_out)
    if model.denoiser is not None:
        out = model.denoiser(out)
    return out


def rollout(model: AdrModel, history, steps: int) -> np.ndarray:
    """Autoregressive prediction: repeatedly shift the window and re-predict.

    Returns (B, steps, m, H, W); steps=1 equals a single forward pass.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    frames = history.frames if isinstance(history, HistoryWindow) else np.asarray(history)
    window = np.array(frames, dtype=np.float64)
    preds = []
    for _ in range(steps):
        nxt = np.asarray(forward(model, window))
        preds.append(nxt)
        window = np.concatenate([window[:, 1:], nxt[:, None]], axis=1)
    return np.stack(preds, axis=1)


# ---------------------------------------------------------------------------
# parameter plumbing


def _mlp_items(prefix, p):
    return [(f"{prefix}.w1", p.w1), (f"{prefix}.b1", p.b1),
            (f"{prefix}.w2", p.w2), (f"{prefix}.b2", p.b2)]


def _conv_items(prefix, p):
    return [(f"{prefix}.kernel", p.kernel), (f"{prefix}.bias", p.bias)]


def named_parameters(model: AdrModel) -> list:
    """Stable (name, array) ordering used by the optimizer and checkpoints."""
    items = _mlp_items("m_in", model.m_in)
    for i, lay in enumerate(model.layers):
        pre = f"layers.{i}"
        if lay.reaction is not None:
            items += _mlp_items(f"{pre}.reaction", lay.reaction)
        if lay.fused is not None:
            items += _conv_items(f"{pre}.fused.0", lay.fused[0])
            items += _conv_items(f"{pre}.fused.1", lay.fused[1])
        if lay.kappa_raw is not None:
            items.append((f"{pre}.kappa_raw", lay.kappa_raw))
        if lay.flow is not None:
            items += _conv_items(f"{pre}.flow.conv_in", lay.flow.conv_in)
            for k, (a, b) in enumerate(lay.flow.blocks):
                items += _conv_items(f"{pre}.flow.blocks.{k}.0", a)
                items += _conv_items(f"{pre}.flow.blocks.{k}.1", b)
            items += _conv_items(f"{pre}.flow.conv_out", lay.flow.conv_out)
    items += _mlp_items("m_out", model.m_out)
    return items


def count_parameters(model: AdrModel) -> int:
    return sum(int(np.asarray(a).size) for _, a in named_parameters(model))


def watch_model(tape: Tape, model: AdrModel):
    """Rebuild the model with every parameter as a tape leaf.

    Returns the tracked model and a name -> Var map for gradient lookup.
    """
    params: dict[str, Var] = {}

    def mk(name, arr):
        v = tape.leaf(np.asarray(arr))
        params[name] = v
        return v

    def mlp(prefix, p):
        return Mlp1x1Params(*(mk(n, a) for n, a in _mlp_items(prefix, p)))

    def conv(prefix, p):
        return Conv3x3Params(*(mk(n, a) for n, a in _conv_items(prefix, p)))

    m_in = mlp("m_in", model.m_in)
    layers = []
    for i, lay in enumerate(model.layers):
        pre = f"layers.{i}"
        reaction = mlp(f"{pre}.reaction", lay.reaction) if lay.reaction is not None else None
        fused = None
        if lay.fused is not None:
            fused = (conv(f"{pre}.fused.0", lay.fused[0]), conv(f"{pre}.fused.1", lay.fused[1]))
        kappa = mk(f"{pre}.kappa_raw", lay.kappa_raw) if lay.kappa_raw is not None else None
        flow = None
        if lay.flow is not None:
            flow = DisplacementNetParams(
                conv_in=conv(f"{pre}.flow.conv_in", lay.flow.conv_in),
                blocks=tuple((conv(f"{pre}.flow.blocks.{k}.0", a),
                              conv(f"{pre}.flow.blocks.{k}.1", b))
                             for k, (a, b) in enumerate(lay.flow.blocks)),
                conv_out=conv(f"{pre}.flow.conv_out", lay.flow.conv_out))
        layers.append(AdrLayerParams(reaction, fused, kappa, flow))
    m_out = mlp("m_out", model.m_out)
    watched = AdrModel(config=model.config, m_in=m_in, layers=tuple(layers),
                       m_out=m_out, denoiser=model.denoiser)
    return watched, params


def matched_ablation_config(cfg: ModelConfig, tolerance: float = 0.2) -> ModelConfig:
    """Equal-depth, no-advection residual conv config with a matched budget.

    Keeps the layer count and widens the hidden channels until the parameter
    counts agree within the tolerance: the baseline keeps the capacity but
    not the receptive field, which is the comparison the transport
    experiment is about.  Raises if no width matches.
    """
    target = count_parameters(init_model(cfg, seed=0))
    best, best_dev = None, None
    for width in range(max(cfg.in_channels * cfg.window_frames, 1), 4096):
        cand = dataclasses.replace(cfg, advection=False, fused_dr=True,
                                   hidden_channels=width)
        n = count_parameters(init_model(cand, seed=0))
        dev = abs(n / target - 1.0)
        if best_dev is None or dev < best_dev:
            best, best_dev = cand, dev
        if n > target * (1.0 + tolerance):
            break
    if best_dev > tolerance:
        raise ConfigError(f"no ablation width matches the parameter budget "
                          f"within {tolerance:.0%} (best deviation {best_dev:.0%})")
    return best


# ---------------------------------------------------------------------------
# checkpoints

_CONFIG_KEY = "__config_utf8__"


def config_to_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["push_mode"] = cfg.push_mode.value
    return d


def config_from_dict(d: dict) -> ModelConfig:
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    return ModelConfig(**d)


def save_checkpoint(model: AdrModel, path):
    """Write every parameter tensor plus the config header to one container."""
    header = json.dumps(config_to_dict(model.config), sort_keys=True).encode("utf-8")
    tensors = {_CONFIG_KEY: np.frombuffer(header, dtype=np.uint8).astype(np.float64)}
    for name, arr in named_parameters(model):
        tensors[name] = np.asarray(arr)
    save_container(path, tensors)


def load_checkpoint(path) -> AdrModel:
    tensors = load_container(path)
    if _CONFIG_KEY not in tensors:
        raise ConfigError(f"{path} is not a model checkpoint (missing config header)")
    header = bytes(tensors.pop(_CONFIG_KEY).astype(np.uint8)).decode("utf-8")
    cfg = config_from_dict(json.loads(header))
    model = init_model(cfg, seed=0)
    for name, arr in named_parameters(model):
        if name not in tensors:
            raise ConfigError(f"checkpoint missing parameter {name}")
        loaded = tensors[name]
        if loaded.shape != np.asarray(arr).shape:
            raise ShapeMismatchError(f"checkpoint parameter {name}",
                                     loaded.shape, np.asarray(arr).shape)
        np.copyto(arr, loaded)
    return model
