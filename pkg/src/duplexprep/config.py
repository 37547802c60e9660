"""Pipeline configuration: one declarative JSON tree + dotted overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_CONFIG = {
    "inputs": [],
    "output_dir": "out",
    "worker_count": 1,
    "stages": {
        "standardize": True,
        "chunk": True,
        "diarize": True,
        "overlap_resolve": True,
        "bgm": True,
        "denoise": False,  # optional, off by default
        "asr": True,
        "caption": False,
        "duplex_select": True,
    },
    "standardize": {"target_hz": 16000, "target_dbfs": -20.0},
    "vad": {
        "on_thresh": 0.5,
        "off_thresh": 0.35,
        "min_silence_s": 0.3,
        "min_speech_s": 0.2,
        "max_chunk_s": 300.0,
    },
    "overlap": {
        "mode": "case4_separate",
        "min_overlap_s": 0.0,
        "crossfade_s": 0.010,
        "min_ref_s": 2.0,
    },
    "bgm": {"threshold": 0.3, "window_s": 120.0, "lead_s": 30.0},
    "asr": {
        "models": [
            {"model_id": "asr_alpha", "primary": True},
            {"model_id": "asr_beta", "primary": False},
            {"model_id": "asr_gamma", "primary": False},
        ],
        "min_agreement": 2,
        "repetition_n": 15,
        "repetition_count": 5,
    },
    "duplex": {"max_turn_s": 10.0, "min_turns": 3, "max_gap_s": 10.0},
    "backends": {
        "mode": "mock",  # mock | cmd | tcp
        "fixture_dir": None,
        "seed": 1234,
        "asr_noise_rate": 0.0,
        "hallucination_rate": {},
        "command": None,  # cmd mode: argv list or shell string
        "endpoints": [],  # tcp mode: ["host:port", ...]
        "inline_threshold_s": 10.0,
        "timeout_s": 60.0,
        "retries": 1,
    },
    "decode_hook": None,  # e.g. "ffmpeg -i {input} -ac 1 {output}"
}

BACKEND_STAGES = ("chunk", "diarize", "overlap_resolve", "bgm", "denoise", "asr", "caption")


class ConfigError(ValueError):
    pass


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, dotted: str) -> None:
    """Apply one `a.b.c=value` override in place (value parsed as JSON)."""
    if "=" not in dotted:
        raise ConfigError(f"override must look like key.path=value: {dotted!r}")
    path, _, raw = dotted.partition("=")
    keys = path.strip().split(".")
    node = config
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = _parse_value(raw.strip())


@dataclass
class PipelineConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG))

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def stages(self) -> dict:
        return self.raw["stages"]

    def stage_on(self, name: str) -> bool:
        return bool(self.raw["stages"].get(name, False))

    def validate(self) -> None:
        raw = self.raw
        if not isinstance(raw.get("inputs"), list):
            raise ConfigError("inputs must be a list of paths or globs")
        if raw.get("worker_count", 1) < 1:
            raise ConfigError("worker_count must be >= 1")
        backends = raw["backends"]
        mode = backends.get("mode")
        needs_backend = any(self.stage_on(s) for s in BACKEND_STAGES)
        if needs_backend:
            if mode == "mock":
                if not backends.get("fixture_dir"):
                    raise ConfigError("mock backends need backends.fixture_dir")
            elif mode == "cmd":
                if not backends.get("command"):
                    raise ConfigError("cmd backends need backends.command")
            elif mode == "tcp":
                if not backends.get("endpoints"):
                    raise ConfigError("tcp backends need backends.endpoints")
            else:
                raise ConfigError(f"unknown backends.mode: {mode!r}")
        asr_models = raw["asr"]["models"]
        primaries = [m for m in asr_models if m.get("primary")]
        if self.stage_on("asr"):
            if len(asr_models) < 1:
                raise ConfigError("asr stage needs at least one model")
            if len(primaries) != 1:
                raise ConfigError("exactly one asr model must be primary")
        mode_name = raw["overlap"]["mode"]
        if mode_name not in (
            "case1_cut", "case2_assign_first", "case3_assign_second", "case4_separate"
        ):
            raise ConfigError(f"unknown overlap.mode: {mode_name!r}")

    @staticmethod
    def load(path=None, overrides=()) -> "PipelineConfig":
        raw = copy.deepcopy(DEFAULT_CONFIG)
        if path is not None:
            try:
                file_cfg = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(file_cfg, dict):
                raise ConfigError("config root must be an object")
            raw = _deep_merge(raw, file_cfg)
        for dotted in overrides:
            apply_override(raw, dotted)
        cfg = PipelineConfig(raw)
        cfg.validate()
        return cfg
