"""Per-source manifest records: schema, atomic persistence, validation.

One JSON manifest per source file captures everything the pipeline did:
chunks, per-segment speaker/timing/transcript/flags, duplex regions with
their emitted artifacts, and backend-attributed stage timings. Writes are
atomic (temp file + rename) and the content is deterministic given the
same inputs and mock backends: keys are sorted and timings come from the
backends, not wall clock.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import jsonschema

SCHEMA_VERSION = 1

_number = {"type": "number"}
_string = {"type": "string"}

WORD_SCHEMA = {
    "type": "object",
    "properties": {
        "surface": _string,
        "start_s": _number,
        "end_s": _number,
    },
    "required": ["surface", "start_s", "end_s"],
}

SEGMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "segment_id": _string,
        "speaker_id": _string,
        "start_s": _number,
        "end_s": _number,
        "flags": {"type": "array", "items": _string},
        "music_prob": {"type": ["number", "null"]},
        "words": {"type": ["array", "null"], "items": WORD_SCHEMA},
        "repetition": {
            "type": ["object", "null"],
            "properties": {
                "n": {"type": "integer"},
                "max_count": {"type": "integer"},
                "discarded": {"type": "boolean"},
            },
            "required": ["n", "max_count", "discarded"],
        },
        "caption": {"type": ["string", "null"]},
    },
    "required": ["segment_id", "speaker_id", "start_s", "end_s", "flags"],
}

CHUNK_SCHEMA = {
    "type": "object",
    "properties": {
        "chunk_id": _string,
        "start_s": _number,
        "end_s": _number,
        "forced_cut": {"type": "boolean"},
        "segments": {"type": "array", "items": SEGMENT_SCHEMA},
        "overlaps": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "start_s": _number,
                    "end_s": _number,
                    "kind": {"enum": ["containment", "partial"]},
                    "speakers": {"type": "array", "items": _string},
                    "s1": {"type": ["number", "null"]},
                    "s2": {"type": ["number", "null"]},
                    "flags": {"type": "array", "items": _string},
                },
                "required": ["start_s", "end_s", "kind", "speakers", "flags"],
            },
        },
    },
    "required": ["chunk_id", "start_s", "end_s", "forced_cut", "segments", "overlaps"],
}

MANIFEST_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "source": {
            "type": "object",
            "properties": {
                "path": _string,
                "source_id": _string,
                "duration_s": _number,
                "loudness": {
                    "type": ["object", "null"],
                    "properties": {
                        "input_dbfs": _number,
                        "output_dbfs": _number,
                        "clipped_sample_count": {"type": "integer"},
                    },
                    "required": ["input_dbfs", "output_dbfs", "clipped_sample_count"],
                },
            },
            "required": ["path", "source_id", "duration_s"],
        },
        "status": {"enum": ["complete", "failed"]},
        "error": {"type": ["string", "null"]},
        "chunks": {"type": "array", "items": CHUNK_SCHEMA},
        "duplex_regions": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "region_id": _string,
                    "start_s": _number,
                    "end_s": _number,
                    "turn_count": {"type": "integer"},
                    "left_speaker_id": _string,
                    "stereo_wav": _string,
                    "words_json": _string,
                },
                "required": [
                    "region_id", "start_s", "end_s", "turn_count",
                    "left_speaker_id", "stereo_wav", "words_json",
                ],
            },
        },
        "stage_timings": {"type": "object", "additionalProperties": _number},
        "flags": {"type": "array", "items": _string},
    },
    "required": [
        "schema_version", "source", "status", "chunks",
        "duplex_regions", "stage_timings", "flags",
    ],
}


def dumps_manifest(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=2) + "\n"


def write_manifest(manifest: dict, path) -> None:
    """Atomic write via temp file + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_manifest(manifest), encoding="utf-8")
    os.replace(tmp, path)


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def validate_manifest(manifest: dict, base_dir=None) -> list[str]:
    """Schema check plus existence of referenced audio artifacts."""
    problems = []
    validator = jsonschema.Draft7Validator(MANIFEST_SCHEMA)
    for err in validator.iter_errors(manifest):
        problems.append(f"{'/'.join(str(p) for p in err.path)}: {err.message}")
    if base_dir is not None and not problems:
        for region in manifest.get("duplex_regions", []):
            for key in ("stereo_wav", "words_json"):
                rel = region[key]
                if not (Path(base_dir) / rel).exists():
                    problems.append(f"missing artifact: {rel}")
    return problems


def manifest_digest(path) -> str:
    """Stable content digest for golden comparisons."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def is_complete(path) -> bool:
    """True when the manifest exists, parses, validates, and is complete."""
    try:
        manifest = load_manifest(path)
    except (OSError, json.JSONDecodeError):
        return False
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(
            f"{path}: manifest schema version {manifest.get('schema_version')} "
            f"does not match {SCHEMA_VERSION}; refusing to resume"
        )
    if validate_manifest(manifest):
        return False
    return manifest.get("status") == "complete"
