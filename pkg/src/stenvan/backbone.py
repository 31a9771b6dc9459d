"""ResNet-50 video backbone with non-local insertion points.

Convolutional stages run frame-by-frame with shared weights (frames act as
the batch axis, layout ``(T, C, H, W)``). Non-local layers see the whole clip
as ``(C, T, H, W)``; under temporal reduction, adjacent-frame max pooling is
applied right after the configured non-local layers.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError
from .nonlocal_layer import NonLocalParams, StripeConfig, nonlocal_forward, stripe_nonlocal_forward
from .tensor import as_tensor, batchnorm_infer, conv2d, load_nvt1, pool, save_nvt1

VARIANTS = ("baseline", "baseline_max", "nvan", "nvan_spatial", "nvan_temporal", "ste_nvan")

_NONLOCAL_VARIANTS = {"nvan", "nvan_spatial", "nvan_temporal", "ste_nvan"}
_STRIPE_VARIANTS = {"nvan_spatial", "ste_nvan"}
_TEMPORAL_VARIANTS = {"nvan_temporal", "ste_nvan"}


@dataclass(frozen=True)
class StageSpec:
    index: int  # 2..5, as in conv2_x..conv5_x
    blocks: int
    mid: int
    out: int
    stride: int


def stage_specs(conv5_stride: int = 1) -> tuple[StageSpec, ...]:
    """Full-width ResNet-50 stages."""
    return (
        StageSpec(2, 3, 64, 256, 1),
        StageSpec(3, 4, 128, 512, 2),
        StageSpec(4, 6, 256, 1024, 2),
        StageSpec(5, 3, 512, 2048, conv5_stride),
    )


STEM_CHANNELS = 64
STEM_KERNEL, STEM_STRIDE, STEM_PAD = 7, 2, 3
MAXPOOL_KERNEL, MAXPOOL_STRIDE, MAXPOOL_PAD = 3, 2, 1


def conv_out(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def scale_channels(c: int, width: float) -> int:
    return max(1, math.ceil(c * width))


@dataclass(frozen=True)
class BackboneConfig:
    variant: str = "ste_nvan"
    frames: int = 8
    input_hw: tuple[int, int] = (256, 128)
    width_multiplier: float = 1.0
    stripes: int = 16
    nonlocal_points: tuple[tuple[int, int], ...] = ((3, 3), (3, 4), (4, 4), (4, 5), (4, 6))
    temporal_pool_points: tuple[int, ...] = (2, 5)
    conv5_stride: int = 1

    def __post_init__(self):
        # normalize JSON lists into tuples
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        object.__setattr__(self, "nonlocal_points", tuple(tuple(int(v) for v in p) for p in self.nonlocal_points))
        object.__setattr__(self, "temporal_pool_points", tuple(int(v) for v in self.temporal_pool_points))
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0 < self.width_multiplier <= 1:
            raise ConfigError(f"width_multiplier must be in (0, 1], got {self.width_multiplier}")
        if self.frames < 1:
            raise ConfigError(f"frames must be positive, got {self.frames}")
        if len(self.input_hw) != 2 or min(self.input_hw) < 1:
            raise ConfigError(f"input_hw must be two positive ints, got {self.input_hw}")
        if self.stripes < 1:
            raise ConfigError(f"stripes must be positive, got {self.stripes}")
        if self.conv5_stride not in (1, 2):
            raise ConfigError(f"conv5_stride must be 1 or 2, got {self.conv5_stride}")
        blocks = {s.index: s.blocks for s in stage_specs()}
        for pt in self.nonlocal_points:
            if len(pt) != 2 or pt[0] not in blocks or not 1 <= pt[1] <= blocks[pt[0]]:
                raise ConfigError(f"non-local point {pt} does not name an existing (stage, block)")
        if len(set(self.nonlocal_points)) != len(self.nonlocal_points):
            raise ConfigError(f"duplicate non-local points in {self.nonlocal_points}")
        n = len(self.nonlocal_points)
        for o in self.temporal_pool_points:
            if not 1 <= o <= n:
                raise ConfigError(f"temporal pool point {o} is not a non-local layer ordinal in 1..{n}")
        sizes = feature_sizes(self)
        if min(min(hw) for hw in sizes.values()) < 1:
            raise ConfigError(f"input {self.input_hw} too small for the network")
        if self.uses_stripes:
            for st, _ in self.nonlocal_points:
                if sizes[st][0] < self.stripes:
                    raise ConfigError(f"stage {st} feature height {sizes[st][0]} is smaller than stripes={self.stripes}")

    @property
    def uses_nonlocal(self) -> bool:
        return self.variant in _NONLOCAL_VARIANTS

    @property
    def uses_stripes(self) -> bool:
        return self.variant in _STRIPE_VARIANTS

    @property
    def uses_temporal_pool(self) -> bool:
        return self.variant in _TEMPORAL_VARIANTS

    @property
    def fpl_kind(self) -> str:
        return "max" if self.variant == "baseline_max" else "avg"

    @property
    def active_nonlocal_points(self) -> tuple[tuple[int, int], ...]:
        """Insertion points in network order (empty for baselines)."""
        if not self.uses_nonlocal:
            return ()
        return tuple(sorted(self.nonlocal_points))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_hw"] = list(self.input_hw)
        d["nonlocal_points"] = [list(p) for p in self.nonlocal_points]
        d["temporal_pool_points"] = list(self.temporal_pool_points)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e


def feature_sizes(cfg: BackboneConfig) -> dict[int, tuple[int, int]]:
    """Spatial size at the output of each stage (1 = stem after max pool)."""
    h, w = cfg.input_hw
    h, w = (conv_out(v, STEM_KERNEL, STEM_STRIDE, STEM_PAD) for v in (h, w))
    h, w = (conv_out(v, MAXPOOL_KERNEL, MAXPOOL_STRIDE, MAXPOOL_PAD) for v in (h, w))
    sizes = {1: (h, w)}
    for st in stage_specs(cfg.conv5_stride):
        h, w = conv_out(h, 1, st.stride, 0), conv_out(w, 1, st.stride, 0)
        sizes[st.index] = (h, w)
    return sizes


@dataclass(eq=False)
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    @classmethod
    def identity(cls, c: int) -> "BatchNorm":
        return cls(np.ones(c), np.zeros(c), np.zeros(c), np.ones(c))

    def __call__(self, x: np.ndarray, axis: int = 1) -> np.ndarray:
        return batchnorm_infer(x, self.gamma, self.beta, self.mean, self.var, self.eps, axis=axis)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(eq=False)
class Bottleneck:
    """1x1 reduce (carries the stride) -> 3x3 -> 1x1 expand, projection shortcut optional."""

    conv1: np.ndarray
    bn1: BatchNorm
    conv2: np.ndarray
    bn2: BatchNorm
    conv3: np.ndarray
    bn3: BatchNorm
    stride: int = 1
    down: np.ndarray | None = None
    down_bn: BatchNorm | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = relu(self.bn1(conv2d(x, self.conv1, stride=self.stride)))
        out = relu(self.bn2(conv2d(out, self.conv2, stride=1, pad=1)))
        out = self.bn3(conv2d(out, self.conv3))
        if self.down is not None:
            x = self.down_bn(conv2d(x, self.down, stride=self.stride))
        return relu(out + x)


@dataclass(eq=False)
class NonLocalLayer:
    params: NonLocalParams
    stripes: StripeConfig | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.stripes is None:
            return nonlocal_forward(x, self.params)[0]
        return stripe_nonlocal_forward(x, self.params, self.stripes)


@dataclass(eq=False)
class Model:
    cfg: BackboneConfig
    stem: np.ndarray
    stem_bn: BatchNorm
    blocks: dict[tuple[int, int], Bottleneck]
    nonlocal_layers: dict[tuple[int, int], NonLocalLayer] = field(default_factory=dict)

    @property
    def out_channels(self) -> int:
        return self.blocks[(5, stage_specs()[-1].blocks)].conv3.shape[0]

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {"stem.w": self.stem}
        out.update(_bn_tensors("stem.bn", self.stem_bn))
        for (st, b), blk in self.blocks.items():
            pre = f"stage{st}.block{b}"
            for i in (1, 2, 3):
                out[f"{pre}.conv{i}"] = getattr(blk, f"conv{i}")
                out.update(_bn_tensors(f"{pre}.bn{i}", getattr(blk, f"bn{i}")))
            if blk.down is not None:
                out[f"{pre}.down"] = blk.down
                out.update(_bn_tensors(f"{pre}.down_bn", blk.down_bn))
        for (st, b), layer in self.nonlocal_layers.items():
            for name in ("theta_w", "phi_w", "g_w", "wz_w"):
                out[f"nonlocal.stage{st}.block{b}.{name}"] = getattr(layer.params, name)
        return out


def _bn_tensors(prefix: str, bn: BatchNorm) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": getattr(bn, k) for k in ("gamma", "beta", "mean", "var")}


def _he(rng: np.random.Generator, c_out: int, c_in: int, k: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / (c_in * k * k)), size=(c_out, c_in, k, k))


def build_model(cfg: BackboneConfig, seed: int = 0) -> Model:
    """Seeded random initialization of the configured network.

    Convolutions use He-normal weights, batch norms identity statistics.
    The last BN of each residual branch is scaled down so activations stay
    O(1) through 16 blocks without trained statistics.
    """
    rng = np.random.default_rng(seed)
    w = cfg.width_multiplier
    stem_c = scale_channels(STEM_CHANNELS, w)
    stem = _he(rng, stem_c, 3, STEM_KERNEL)

    blocks: dict[tuple[int, int], Bottleneck] = {}
    c_in = stem_c
    for st in stage_specs(cfg.conv5_stride):
        mid, out = scale_channels(st.mid, w), scale_channels(st.out, w)
        for b in range(1, st.blocks + 1):
            first = b == 1
            bn3 = BatchNorm.identity(out)
            bn3.gamma = np.full(out, 0.5)
            blk = Bottleneck(
                conv1=_he(rng, mid, c_in, 1), bn1=BatchNorm.identity(mid),
                conv2=_he(rng, mid, mid, 3), bn2=BatchNorm.identity(mid),
                conv3=_he(rng, out, mid, 1), bn3=bn3,
                stride=st.stride if first else 1,
            )
            if first:
                blk.down = _he(rng, out, c_in, 1)
                blk.down_bn = BatchNorm.identity(out)
            blocks[(st.index, b)] = blk
            c_in = out

    layers = {}
    stripes = StripeConfig(cfg.stripes) if cfg.uses_stripes else None
    for pt in cfg.active_nonlocal_points:
        c = blocks[pt].conv3.shape[0]
        sub_seed = int(rng.integers(2**31))
        layers[pt] = NonLocalLayer(NonLocalParams.init(c, max(1, c // 2), seed=sub_seed), stripes)
    return Model(cfg, stem, BatchNorm.identity(stem_c), blocks, layers)


def temporal_halve(x: np.ndarray) -> np.ndarray:
    """Max over frame pairs ``(2t, 2t+1)`` of a ``(C, T, H, W)`` tensor; an odd last frame passes through."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"temporal_halve expects (C, T, H, W), got {x.shape}")
    t = x.shape[1]
    if t < 2:
        raise DimensionError(f"temporal_halve needs at least 2 frames, got shape {x.shape}")
    paired = pool(x[:, : t - t % 2], "max", (1, 2, 1, 1))
    if t % 2:
        paired = np.concatenate([paired, x[:, t - 1 :]], axis=1)
    return paired


@dataclass(eq=False)
class VideoFeatures:
    """Stage-5 output ``(C, T', H, W)`` plus the shape after every recorded step."""

    tensor: np.ndarray
    trace: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)

    @property
    def temporal_trace(self) -> list[int]:
        """Temporal length at each step with consecutive repeats collapsed."""
        out: list[int] = []
        for _, shape in self.trace:
            if not out or out[-1] != shape[1]:
                out.append(shape[1])
        return out


def forward_video(m: Model, frames: np.ndarray) -> VideoFeatures:
    """Run a ``(T, 3, H, W)`` clip through the network."""
    cfg = m.cfg
    frames = as_tensor(frames)
    expect = (cfg.frames, 3, *cfg.input_hw)
    if frames.shape != expect:
        raise DimensionError(f"frames have shape {frames.shape}, config expects {expect}")

    x = relu(m.stem_bn(conv2d(frames, m.stem, stride=STEM_STRIDE, pad=STEM_PAD)))
    x = pool(x, "max", (1, 1, MAXPOOL_KERNEL, MAXPOOL_KERNEL),
             (1, 1, MAXPOOL_STRIDE, MAXPOOL_STRIDE), (0, 0, MAXPOOL_PAD, MAXPOOL_PAD))
    trace = [("stem", _cthw(x))]

    last_block = {st.index: st.blocks for st in stage_specs()}
    nl_ordinal = 0
    for (st, b), blk in m.blocks.items():
        x = blk(x)
        layer = m.nonlocal_layers.get((st, b))
        if layer is None:
            if b == last_block[st]:
                trace.append((f"stage{st}", _cthw(x)))
            continue
        nl_ordinal += 1
        xc = layer(x.transpose(1, 0, 2, 3))
        trace.append((f"nonlocal{nl_ordinal}", xc.shape))
        if cfg.uses_temporal_pool and nl_ordinal in cfg.temporal_pool_points and xc.shape[1] > 2:
            xc = temporal_halve(xc)
            trace.append((f"temporal_pool{nl_ordinal}", xc.shape))
        x = np.ascontiguousarray(xc.transpose(1, 0, 2, 3))
        if b == last_block[st]:
            trace.append((f"stage{st}", _cthw(x)))

    return VideoFeatures(np.ascontiguousarray(x.transpose(1, 0, 2, 3)), trace)


def _cthw(x_tchw: np.ndarray) -> tuple[int, ...]:
    t, c, h, w = x_tchw.shape
    return (c, t, h, w)


def save_model(m: Model, directory) -> None:
    """Weights as one NVT1 file per tensor plus ``manifest.json`` with the config."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, arr in m.named_tensors().items():
        fname = f"{name}.nvt1"
        save_nvt1(d / fname, arr)
        files[name] = fname
    manifest = {"config": m.cfg.to_dict(), "files": files}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_model(directory) -> Model:
    """Rebuild a model from :func:`save_model` output (weights at float32 precision)."""
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    m = build_model(BackboneConfig.from_dict(manifest["config"]), seed=0)
    tensors = {name: load_nvt1(d / f) for name, f in manifest["files"].items()}
    expected = m.named_tensors()
    if set(tensors) != set(expected):
        raise ConfigError("weight manifest does not match the configured architecture")
    for name, arr in tensors.items():
        if arr.shape != expected[name].shape:
            raise DimensionError(f"{name}: stored shape {arr.shape}, architecture needs {expected[name].shape}")
        # in-place copy keeps every owning object consistent
        expected[name][...] = arr
    return m
