"""Analytical multiply-accumulate counts for the backbone variants.

Convention: one multiply-accumulate is one FLOP. Batch norm, ReLU, softmax,
pooling and residual additions are not counted. The model is always
evaluated at full width, whatever ``width_multiplier`` the config carries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .backbone import (
    MAXPOOL_KERNEL,
    MAXPOOL_PAD,
    MAXPOOL_STRIDE,
    STEM_CHANNELS,
    STEM_KERNEL,
    STEM_PAD,
    STEM_STRIDE,
    BackboneConfig,
    conv_out,
    scale_channels,
    stage_specs,
)
from .errors import ConfigError

# Published totals in GFLOP for T=8 clips at 256x128, S=16.
REFERENCE_GFLOPS = {
    "baseline": 30.4,
    "baseline_max": 30.4,
    "nvan": 60.0,
    "nvan_spatial": 30.4,
    "nvan_temporal": 40.4,
    "ste_nvan": 16.5,
}

VARIANT_LABELS = {
    "baseline": "ResNet-50 (FPL)",
    "baseline_max": "ResNet-50 (max-FPL)",
    "nvan": "NVAN",
    "nvan_spatial": "NVAN+Spatial Reduc.",
    "nvan_temporal": "NVAN+Temporal Reduc.",
    "ste_nvan": "STE-NVAN",
}


def flops_conv2d(c_in: int, c_out: int, k: int, h_out: int, w_out: int, t_frames: int = 1) -> int:
    return t_frames * c_in * c_out * k * k * h_out * w_out


def flops_nonlocal_dense(c: int, c_embed: int, t: int, h: int, w: int) -> int:
    """theta/phi/g/W_z projections plus the two N x N x C' products, N = t*h*w."""
    n = t * h * w
    return 4 * c * c_embed * n + 2 * c_embed * n * n


def flops_nonlocal_stripe(c: int, c_embed: int, t: int, s: int) -> int:
    """Same accounting over the t*s stripe vectors; independent of H and W."""
    m = t * s
    return 4 * c * c_embed * m + 2 * c_embed * m * m


@dataclass
class CostReport:
    variant: str
    per_layer: list[tuple[str, int]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(f for _, f in self.per_layer)

    def add(self, name: str, flops: int) -> None:
        if flops < 0:
            raise ValueError(f"negative cost for {name}")
        self.per_layer.append((name, int(flops)))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "total": self.total,
            "per_layer": [{"name": n, "flops": f} for n, f in self.per_layer],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self, per_layer: bool = True) -> str:
        width = max([len(n) for n, _ in self.per_layer] + [len("total")])
        lines = [f"variant: {self.variant}"]
        if per_layer:
            lines += [f"{n:<{width}}  {f:>16,d}" for n, f in self.per_layer]
            lines.append("-" * (width + 18))
        lines.append(f"{'total':<{width}}  {self.total:>16,d}  ({self.total / 1e9:.1f} G)")
        return "\n".join(lines)


def flops_model(cfg: BackboneConfig, executed_width: bool = False) -> CostReport:
    """Per-layer MAC counts of the configured variant.

    Counts are at full width unless ``executed_width`` is set, in which case
    channels are scaled by ``cfg.width_multiplier`` the way
    :func:`~stenvan.backbone.build_model` scales them. Frame counts follow
    temporal reduction: every layer after a pool point runs on half as many
    frames.
    """
    if not isinstance(cfg, BackboneConfig):
        raise ConfigError(f"expected a BackboneConfig, got {type(cfg).__name__}")
    cfg.validate()
    rep = CostReport(cfg.variant)
    wm = cfg.width_multiplier if executed_width else 1.0
    t = cfg.frames
    h, w = (conv_out(v, STEM_KERNEL, STEM_STRIDE, STEM_PAD) for v in cfg.input_hw)
    c_in = scale_channels(STEM_CHANNELS, wm)
    rep.add("conv1", flops_conv2d(3, c_in, STEM_KERNEL, h, w, t))
    h, w = (conv_out(v, MAXPOOL_KERNEL, MAXPOOL_STRIDE, MAXPOOL_PAD) for v in (h, w))

    points = cfg.active_nonlocal_points
    nl_ordinal = 0
    for st in stage_specs(cfg.conv5_stride):
        mid, out = scale_channels(st.mid, wm), scale_channels(st.out, wm)
        for b in range(1, st.blocks + 1):
            s = st.stride if b == 1 else 1
            ho, wo = conv_out(h, 1, s, 0), conv_out(w, 1, s, 0)
            pre = f"conv{st.index}_{b}"
            rep.add(f"{pre}.1x1a", flops_conv2d(c_in, mid, 1, ho, wo, t))
            rep.add(f"{pre}.3x3", flops_conv2d(mid, mid, 3, ho, wo, t))
            rep.add(f"{pre}.1x1b", flops_conv2d(mid, out, 1, ho, wo, t))
            if b == 1:
                rep.add(f"{pre}.proj", flops_conv2d(c_in, out, 1, ho, wo, t))
            h, w, c_in = ho, wo, out

            if (st.index, b) in points:
                nl_ordinal += 1
                ce = max(1, out // 2)
                if cfg.uses_stripes:
                    cost = flops_nonlocal_stripe(out, ce, t, cfg.stripes)
                else:
                    cost = flops_nonlocal_dense(out, ce, t, h, w)
                rep.add(f"nonlocal{nl_ordinal}@{pre}", cost)
                if cfg.uses_temporal_pool and nl_ordinal in cfg.temporal_pool_points and t > 2:
                    t = (t + 1) // 2
    return rep


def variant_reports(frames: int = 8, input_hw=(256, 128), stripes: int = 16) -> list[CostReport]:
    """Cost reports for every variant under a shared configuration."""
    base = BackboneConfig(frames=frames, input_hw=tuple(input_hw), stripes=stripes)
    return [flops_model(replace(base, variant=v)) for v in REFERENCE_GFLOPS]


def format_variant_table(reports: list[CostReport]) -> str:
    width = max(len(VARIANT_LABELS[r.variant]) for r in reports)
    lines = [f"{'Method':<{width}}  {'# FLOP':>8}  {'reported':>8}"]
    for r in reports:
        lines.append(f"{VARIANT_LABELS[r.variant]:<{width}}  {r.total / 1e9:>6.1f} G  {REFERENCE_GFLOPS[r.variant]:>6.1f} G")
    return "\n".join(lines)
