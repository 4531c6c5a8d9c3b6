"""Pipeline configuration: every tunable with its default, a key = value
file loader that rejects unknown keys, and validation."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class PipelineConfig:
    # clustering / scales
    alpha: float = 1.0  # clustering cutoff multiplier on r1
    r1_mode: str = "global"  # "global" (median over frames) or "per_frame"
    # temporal linking
    link_radius_r1: float = 1.0  # point-link radius in units of r1
    assign_gate_r0: float = 5.0  # assignment gate in units of r0
    # occlusion solving
    pad: int = 3  # frames kept before/after an occlusion span
    beta: float = 2.2  # static weight decay exponent
    static_pad_r1: float = 3.0  # repulsion cap distance: d_max = r0 + this * r1
    dynamic_max_r1: float = 5.0  # dynamic pair cutoff in units of r1
    exact_max_nodes: int = 18  # windows this small are solved exactly
    sdp_rank: int = 8
    sdp_iterations: int = 500
    sdp_tol: float = 1e-7
    seed: int = 0
    # ghost handling
    ghost_min: int = 10  # minimum trajectory life span, frames
    # evaluation
    mot_gate: float = 0.3  # meters
    # multicamera front-end
    seg_tau: float = 20.0 / 255.0
    seg_window: int = 21
    match_max_error: float = 1.5  # pixels
    # orchestration
    threads: int = 1

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.r1_mode not in ("global", "per_frame"):
            raise ValueError("r1_mode must be 'global' or 'per_frame'")
        if self.link_radius_r1 <= 0:
            raise ValueError("link_radius_r1 must be positive")
        if self.assign_gate_r0 <= 0:
            raise ValueError("assign_gate_r0 must be positive")
        if self.pad < 0:
            raise ValueError("pad must be >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.static_pad_r1 <= 0 or self.dynamic_max_r1 <= 0:
            raise ValueError("cutoff multipliers must be positive")
        if not (0 < self.exact_max_nodes <= 20):
            raise ValueError("exact_max_nodes must be in 1..20")
        if self.sdp_rank < 2:
            raise ValueError("sdp_rank must be >= 2")
        if self.sdp_iterations < 1 or self.sdp_tol <= 0:
            raise ValueError("invalid solver settings")
        if self.ghost_min < 1:
            raise ValueError("ghost_min must be >= 1")
        if self.mot_gate <= 0:
            raise ValueError("mot_gate must be positive")
        if self.seg_tau <= 0 or self.seg_window < 3 or self.seg_window % 2 == 0:
            raise ValueError("invalid segmentation settings")
        if self.match_max_error <= 0:
            raise ValueError("match_max_error must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def load_config(path) -> PipelineConfig:
    values = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#")[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _TYPES:
                raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
            kind = _TYPES[key]
            try:
                if kind == "int":
                    values[key] = int(val)
                elif kind == "float":
                    values[key] = float(val)
                else:
                    values[key] = val
            except ValueError:
                raise ValueError(f"{path}:{line_no}: bad value for {key}") from None
    config = PipelineConfig(**values)
    config.validate()
    return config


def config_lines(config: PipelineConfig) -> list[str]:
    return [f"{f.name} = {getattr(config, f.name)}" for f in fields(PipelineConfig)]
