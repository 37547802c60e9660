"""End-to-end batch orchestration.

Per file: standardize -> silence-aware chunking -> diarization -> overlap
resolution -> background-music gating and vocal extraction -> optional
denoising -> three-model ASR voting -> optional context captioning ->
duplex region selection, then one atomically written manifest. Files are
processed in parallel by a worker pool; everything within a file runs in
stage order. With mock backends the manifests are byte-identical across
runs and worker counts: mocks are pure functions of their requests and
manifests carry backend-reported timings, never wall clock.
"""

from __future__ import annotations

import concurrent.futures
import glob as globlib
import json
import shlex
import subprocess
import sys
import tempfile
import threading
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from duplexprep import bgm as bgm_mod
from duplexprep import rover
from duplexprep.audio import (
    AudioBuffer,
    normalize_loudness,
    read_wav,
    resample,
    to_mono,
    write_wav,
    measure_dbfs,
)
from duplexprep.backend.dispatch import Dispatcher, InProcessHandle, SubprocessHandle, TcpHandle
from duplexprep.backend.mocks import MockWorker
from duplexprep.backend.protocol import (
    TaskRequest,
    file_audio_payload,
    inline_audio_payload,
    pcm16_b64_decode,
)
from duplexprep.config import PipelineConfig
from duplexprep.duplex import build_stereo, interleave_stereo, select_regions
from duplexprep.manifest import (
    is_complete,
    load_manifest,
    write_manifest,
)
from duplexprep.metrics.rtf import StageTiming, rtf_report
from duplexprep.overlap import (
    OverlapPolicy,
    collect_references,
    multispeaker_windows,
    resolve_overlap,
    splice_overlays,
)
from duplexprep.timeline import (
    SpeakerSegment,
    TimeInterval,
    Turn,
    find_overlaps,
    intersect,
)
from duplexprep.vad import VadFrameSeries, chunk_regions, detect_regions

UNSEPARATED_FLAGS = {
    "no_reference_fallback_case1",
    "separation_failed_unresolved",
    "multi_speaker_unresolved",
}


class BackendCallError(RuntimeError):
    def __init__(self, kind, error):
        super().__init__(f"{kind} backend failed: {error}")
        self.kind = kind
        self.error = error


@dataclass
class RunSummary:
    manifests: list = field(default_factory=list)  # (source path, manifest path)
    failed: list = field(default_factory=list)
    stage_timings: dict = field(default_factory=dict)
    audio_duration_s: float = 0.0
    wall_s: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failed

    def rtf(self):
        stages = [StageTiming(k, v) for k, v in sorted(self.stage_timings.items())]
        if self.audio_duration_s <= 0:
            return None
        return rtf_report(stages, self.audio_duration_s)

    def as_dict(self) -> dict:
        report = self.rtf()
        return {
            "files": [str(p) for p, _ in self.manifests],
            "failed": [str(p) for p in self.failed],
            "audio_duration_s": self.audio_duration_s,
            "stage_timings": {k: round(v, 6) for k, v in sorted(self.stage_timings.items())},
            "rtf": report.as_dict() if report else None,
        }


class _Separator:
    def __init__(self, runner, source_id, std_path=None, inline_threshold_s=10.0):
        self.runner = runner
        self.source_id = source_id
        self.std_path = std_path
        self.inline_threshold_s = inline_threshold_s

    def separate(self, audio, interval):
        # the overlap slice equals the standardized file content, so large
        # payloads can travel as a file reference
        if self.std_path is not None and audio.duration_s > self.inline_threshold_s:
            audio_payload = file_audio_payload(self.std_path, interval)
        else:
            audio_payload = inline_audio_payload(audio)
        payload = self.runner.call(
            "separate2",
            audio=audio_payload,
            params={
                "source_id": self.source_id,
                "interval": [interval.start_s, interval.end_s],
            },
        )
        rate = payload["sample_rate_hz"]
        return (
            AudioBuffer(pcm16_b64_decode(payload["cand1_pcm16_b64"]), rate, 1),
            AudioBuffer(pcm16_b64_decode(payload["cand2_pcm16_b64"]), rate, 1),
        )


class _Embedder:
    def __init__(self, runner, source_id):
        self.runner = runner
        self.source_id = source_id

    def embed(self, audio, intervals):
        payload = self.runner.call(
            "embed",
            audio=inline_audio_payload(audio),
            params={
                "source_id": self.source_id,
                "intervals": [[iv.start_s, iv.end_s] for iv in intervals],
            },
        )
        return np.asarray(payload["vector"], dtype=np.float64)


class _AsrBackend:
    """One recognizer bound to a segment's interval and speaker."""

    def __init__(self, runner, source_id, model_id, is_primary, interval, speaker_id):
        self.runner = runner
        self.source_id = source_id
        self.model_id = model_id
        self.is_primary = is_primary
        self.interval = interval
        self.speaker_id = speaker_id

    def transcribe(self, audio) -> rover.Hypothesis:
        payload = self.runner.call(
            "asr",
            audio=inline_audio_payload(audio),
            params={
                "source_id": self.source_id,
                "model_id": self.model_id,
                "interval": [self.interval.start_s, self.interval.end_s],
                "speaker_id": self.speaker_id,
            },
        )
        words = []
        offset = self.interval.start_s
        for w in payload["words"]:
            interval = None
            if w.get("start_s") is not None:
                interval = TimeInterval(offset + w["start_s"], offset + w["end_s"])
            words.append(rover.WordToken.make(w["surface"], self.model_id, interval))
        return rover.Hypothesis(model_id=self.model_id, is_primary=self.is_primary, words=words)


def build_dispatcher(config: PipelineConfig) -> Dispatcher:
    backends = config["backends"]
    dispatcher = Dispatcher(
        timeout_s=backends.get("timeout_s", 60.0),
        retries=backends.get("retries", 1),
    )
    mode = backends.get("mode")
    if mode == "mock":
        asr_ids = [m["model_id"] for m in config["asr"]["models"]]
        worker = MockWorker(
            backends["fixture_dir"],
            seed=backends.get("seed", 1234),
            asr_noise_rate=backends.get("asr_noise_rate", 0.0),
            hallucination_rate=backends.get("hallucination_rate", {}),
            asr_model_ids=asr_ids,
        )
        dispatcher.add_handle(InProcessHandle(worker))
    elif mode == "cmd":
        cmd = backends["command"]
        if isinstance(cmd, str):
            cmd = shlex.split(cmd)
        dispatcher.add_handle(SubprocessHandle(cmd))
    elif mode == "tcp":
        for endpoint in backends["endpoints"]:
            host, _, port = endpoint.rpartition(":")
            dispatcher.add_handle(TcpHandle(host or "127.0.0.1", int(port)))
    else:
        raise ValueError(f"unknown backends.mode {mode!r}")
    return dispatcher


@dataclass
class _SegmentState:
    segment: SpeakerSegment
    segment_id: str
    intervals: list  # surviving sub-intervals after geometry policies
    overlays: list = field(default_factory=list)  # (TimeInterval, AudioBuffer)
    flags: list = field(default_factory=list)
    music_prob: float | None = None
    words: list | None = None
    repetition: dict | None = None
    caption: str | None = None

    def audio_pieces(self, base: AudioBuffer, crossfade_s: float, origin_s: float):
        """Final single-speaker (interval, audio) pieces for this segment."""
        return [
            (iv, splice_overlays(base, iv, self.overlays, crossfade_s, origin_s))
            for iv in self.intervals
            if iv.duration_s > 0
        ]


class PipelineRunner:
    def __init__(self, config: PipelineConfig, log=None):
        self.config = config
        self.dispatcher = build_dispatcher(config)
        self.log = log or (lambda msg: print(msg, file=sys.stderr))
        self._tl = threading.local()  # per-worker-thread, reset per file

    # -- backend plumbing ------------------------------------------------

    def call(self, kind: str, audio=None, params=None) -> dict:
        req = TaskRequest(task_kind=kind, audio=audio, params=params or {})
        resp = self.dispatcher.dispatch(req)
        self._record_timing(kind, resp.timing_s)
        if not resp.ok:
            raise BackendCallError(kind, resp.error)
        return resp.payload

    def _record_timing(self, kind: str, timing_s: float):
        timings = getattr(self._tl, "timings", None)
        if timings is not None:
            timings[kind] = timings.get(kind, 0.0) + timing_s

    # -- top level ---------------------------------------------------------

    def expand_inputs(self) -> list[Path]:
        paths = []
        for pattern in self.config["inputs"]:
            matches = sorted(globlib.glob(str(pattern)))
            if matches:
                paths.extend(Path(m) for m in matches)
            elif Path(pattern).exists():
                paths.append(Path(pattern))
        # de-dupe preserving order
        seen = set()
        unique = []
        for p in paths:
            rp = p.resolve()
            if rp not in seen:
                seen.add(rp)
                unique.append(p)
        return unique

    def run(self) -> RunSummary:
        started = time.monotonic()
        summary = RunSummary()
        inputs = self.expand_inputs()
        stems = [p.stem for p in inputs]
        dupes = sorted({s for s in stems if stems.count(s) > 1})
        if dupes:
            raise ValueError(
                f"input stems collide on output directories: {dupes}; rename inputs"
            )
        out_dir = Path(self.config["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)

        todo = []
        for path in inputs:
            manifest_path = out_dir / path.stem / "manifest.json"
            if manifest_path.exists() and is_complete(manifest_path):
                self.log(f"skip (complete manifest): {path}")
                manifest = load_manifest(manifest_path)
                summary.manifests.append((path, manifest_path))
                summary.audio_duration_s += manifest["source"]["duration_s"]
                for k, v in manifest["stage_timings"].items():
                    summary.stage_timings[k] = summary.stage_timings.get(k, 0.0) + v
                continue
            todo.append((path, manifest_path))

        def work(item):
            path, manifest_path = item
            return path, manifest_path, self.process_file(path, manifest_path)

        workers = max(int(self.config["worker_count"]), 1)
        if todo:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                for path, manifest_path, manifest in pool.map(work, todo):
                    summary.manifests.append((path, manifest_path))
                    if manifest["status"] != "complete":
                        summary.failed.append(path)
                        self.log(f"FAILED {path}: {manifest.get('error')}")
                    summary.audio_duration_s += manifest["source"]["duration_s"]
                    for k, v in manifest["stage_timings"].items():
                        summary.stage_timings[k] = summary.stage_timings.get(k, 0.0) + v

        summary.manifests.sort(key=lambda pair: str(pair[0]))
        summary.wall_s = time.monotonic() - started
        return summary

    # -- per-file processing ------------------------------------------------

    def _load_input(self, path: Path) -> AudioBuffer:
        if path.suffix.lower() == ".wav":
            return read_wav(path)
        hook = self.config.raw.get("decode_hook")
        if not hook:
            raise ValueError(f"{path}: not a WAV and no decode_hook configured")
        with tempfile.NamedTemporaryFile(suffix=".wav", delete=False) as tmp:
            tmp_path = tmp.name
        cmd = hook.format(input=shlex.quote(str(path)), output=shlex.quote(tmp_path))
        subprocess.run(cmd, shell=True, check=True, capture_output=True)
        try:
            return read_wav(tmp_path)
        finally:
            Path(tmp_path).unlink(missing_ok=True)

    def process_file(self, path: Path, manifest_path: Path) -> dict:
        self._tl.timings = {}
        source_id = path.stem
        file_dir = manifest_path.parent
        file_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "schema_version": 1,
            "source": {"path": str(path), "source_id": source_id, "duration_s": 0.0,
                       "loudness": None},
            "status": "failed",
            "error": None,
            "chunks": [],
            "duplex_regions": [],
            "stage_timings": {},
            "flags": [],
        }
        try:
            self._process_file_inner(path, source_id, file_dir, manifest)
            manifest["status"] = "complete"
        except Exception as exc:
            manifest["error"] = f"{type(exc).__name__}: {exc}"
            self.log(traceback.format_exc())
        manifest["stage_timings"] = {
            k: round(v, 6) for k, v in sorted(self._tl.timings.items())
        }
        write_manifest(manifest, manifest_path)
        return manifest

    def _process_file_inner(self, path, source_id, file_dir, manifest):
        cfg = self.config
        raw = self._load_input(path)

        # (a) standardization
        mono = to_mono(raw)
        input_dbfs = measure_dbfs(mono).dbfs
        if cfg.stage_on("standardize"):
            std = cfg.raw["standardize"]
            mono = resample(mono, std["target_hz"])
            audio, report = normalize_loudness(mono, std["target_dbfs"])
            manifest["source"]["loudness"] = {
                "input_dbfs": round(input_dbfs, 6),
                "output_dbfs": round(report.dbfs, 6),
                "clipped_sample_count": report.clipped_sample_count,
            }
            if report.clipped_sample_count:
                manifest["flags"].append("loudness_clipped")
        else:
            audio = mono
        manifest["source"]["duration_s"] = round(audio.duration_s, 6)
        std_path = file_dir / "audio.wav"
        write_wav(std_path, audio)
        # re-read: downstream slices must match the quantized file bit-for-bit
        audio = read_wav(std_path)

        # (b) silence-aware chunking
        if cfg.stage_on("chunk"):
            vcfg = cfg.raw["vad"]
            payload = self.call(
                "vad",
                audio=file_audio_payload(std_path, TimeInterval(0.0, audio.duration_s)),
                params={"source_id": source_id,
                        "interval": [0.0, audio.duration_s]},
            )
            series = VadFrameSeries(hop_s=payload["hop_s"],
                                    probs=np.asarray(payload["probs"]))
            regions = detect_regions(
                series,
                on_thresh=vcfg["on_thresh"],
                off_thresh=vcfg["off_thresh"],
                min_silence_s=vcfg["min_silence_s"],
                min_speech_s=vcfg["min_speech_s"],
            )
            chunks = chunk_regions(regions, max_chunk_s=vcfg["max_chunk_s"])
        else:
            from duplexprep.vad import Chunk

            chunks = [Chunk("chunk0000", TimeInterval(0.0, audio.duration_s), False)]

        all_turns = []
        speaker_pieces: dict = {}
        segment_flag_index: list = []

        for chunk in chunks:
            chunk_entry = {
                "chunk_id": chunk.chunk_id,
                "start_s": round(chunk.interval.start_s, 6),
                "end_s": round(chunk.interval.end_s, 6),
                "forced_cut": chunk.forced_cut,
                "segments": [],
                "overlaps": [],
            }
            manifest["chunks"].append(chunk_entry)
            self._process_chunk(
                source_id, std_path, audio, chunk, chunk_entry,
                all_turns, speaker_pieces, segment_flag_index,
            )

        # (i) duplex region selection
        if cfg.stage_on("duplex_select"):
            self._select_duplex(
                source_id, file_dir, audio, all_turns, speaker_pieces,
                segment_flag_index, manifest,
            )

    # -- chunk stages -------------------------------------------------------

    def _process_chunk(self, source_id, std_path, audio, chunk, chunk_entry,
                       all_turns, speaker_pieces, segment_flag_index):
        cfg = self.config
        origin = 0.0  # all intervals are absolute on the standardized file

        # (c) diarization
        states: list[_SegmentState] = []
        if cfg.stage_on("diarize"):
            payload = self.call(
                "diarize",
                audio=file_audio_payload(std_path, chunk.interval),
                params={"source_id": source_id,
                        "interval": [chunk.interval.start_s, chunk.interval.end_s]},
            )
            for i, seg in enumerate(payload["segments"]):
                interval = TimeInterval(
                    chunk.interval.start_s + seg["start_s"],
                    chunk.interval.start_s + seg["end_s"],
                )
                segment = SpeakerSegment(
                    speaker_id=seg["speaker_id"], interval=interval,
                    chunk_id=chunk.chunk_id,
                )
                states.append(_SegmentState(
                    segment=segment,
                    segment_id=f"{chunk.chunk_id}_seg{i:03d}",
                    intervals=[interval],
                ))

        segments = [st.segment for st in states]
        by_segment = {id(st.segment): st for st in states}

        # (d) overlap resolution
        crossfade_s = cfg.raw["overlap"]["crossfade_s"]
        if cfg.stage_on("overlap_resolve") and segments:
            ocfg = cfg.raw["overlap"]
            policy = OverlapPolicy(
                mode=ocfg["mode"],
                min_overlap_s=ocfg["min_overlap_s"],
                crossfade_s=ocfg["crossfade_s"],
            )
            relations = find_overlaps(segments)
            relations = [r for r in relations
                         if r.overlap.duration_s >= policy.min_overlap_s]
            crowded = multispeaker_windows(segments)
            for st in states:
                if any(intersect(st.segment.interval, w) for w in crowded):
                    st.flags.append("multi_speaker_unresolved")
            refs = collect_references(
                segments, relations, audio, min_ref_s=ocfg["min_ref_s"], origin_s=origin
            )
            separator = _Separator(
                self, source_id, std_path,
                self.config.raw["backends"].get("inline_threshold_s", 10.0),
            )
            embedder = _Embedder(self, source_id)
            for rel in relations:
                st_a = by_segment[id(rel.seg_a)]
                st_b = by_segment[id(rel.seg_b)]
                overlap_entry = {
                    "start_s": round(rel.overlap.start_s, 6),
                    "end_s": round(rel.overlap.end_s, 6),
                    "kind": rel.kind,
                    "speakers": sorted({rel.seg_a.speaker_id, rel.seg_b.speaker_id}),
                    "s1": None,
                    "s2": None,
                    "flags": [],
                }
                chunk_entry["overlaps"].append(overlap_entry)
                if "multi_speaker_unresolved" in st_a.flags + st_b.flags:
                    overlap_entry["flags"].append("multi_speaker_unresolved")
                    continue
                resolution = resolve_overlap(
                    rel, audio, policy, separator, embedder, refs, origin_s=origin
                )
                overlap_entry["flags"].extend(resolution.flags)
                for st in (st_a, st_b):
                    for flag in resolution.flags:
                        if flag not in st.flags:
                            st.flags.append(flag)
                if resolution.outcome is not None:
                    outcome = resolution.outcome
                    overlap_entry["s1"] = round(outcome.s1, 6)
                    overlap_entry["s2"] = round(outcome.s2, 6)
                    cand_for = {
                        outcome.assignment["cand1"]: outcome.cand1_audio,
                        outcome.assignment["cand2"]: outcome.cand2_audio,
                    }
                    for st in (st_a, st_b):
                        st.overlays.append(
                            (outcome.overlap, cand_for[st.segment.speaker_id])
                        )
                else:
                    # geometry policy or fallback: keep each segment's
                    # surviving sub-intervals (intersection across relations)
                    for st in (st_a, st_b):
                        surviving = [
                            p.interval for p in resolution.pieces
                            if p.speaker_id == st.segment.speaker_id
                        ]
                        st.intervals = _intersect_families(st.intervals, surviving)

        # (e)/(f) background music gating and vocal extraction
        working = audio
        if cfg.stage_on("bgm") and states:
            working = self._bgm_stage(source_id, std_path, audio, chunk, states,
                                      chunk_entry, origin)

        # optional denoising of the chunk audio
        if cfg.stage_on("denoise"):
            payload = self.call(
                "denoise",
                audio=inline_audio_payload(working.slice_interval(chunk.interval, origin)),
                params={"source_id": source_id,
                        "interval": [chunk.interval.start_s, chunk.interval.end_s]},
            )
            denoised = pcm16_b64_decode(payload["pcm16_b64"])
            out = working.samples.copy()
            a = int(round(chunk.interval.start_s * working.sample_rate_hz))
            out[a: a + len(denoised)] = denoised
            working = AudioBuffer(out, working.sample_rate_hz, 1)

        # (g) ASR ensemble over final single-speaker segment audio
        acfg = cfg.raw["asr"]
        prev_payloads = []
        for st in sorted(states, key=lambda s: s.segment.interval.start_s):
            pieces = st.audio_pieces(working, crossfade_s, origin)
            if not pieces:
                continue
            if cfg.stage_on("asr"):
                self._asr_segment(source_id, st, pieces, acfg)
            if cfg.stage_on("caption"):
                self._caption_segment(source_id, std_path, st, prev_payloads)
            prev_payloads.append(file_audio_payload(std_path, st.segment.interval))
            prev_payloads = prev_payloads[-2:]

            spk = st.segment.speaker_id
            speaker_pieces.setdefault(spk, []).extend(pieces)
            word_refs = tuple(
                f"{st.segment_id}:{k}" for k in range(len(st.words or []))
            )
            for iv in st.intervals:
                all_turns.append((Turn(spk, iv, word_refs), st))

        # manifest segment entries
        for st in sorted(states, key=lambda s: s.segment_id):
            entry = {
                "segment_id": st.segment_id,
                "speaker_id": st.segment.speaker_id,
                "start_s": round(st.segment.interval.start_s, 6),
                "end_s": round(st.segment.interval.end_s, 6),
                "flags": sorted(set(st.flags)),
                "music_prob": None if st.music_prob is None else round(st.music_prob, 6),
                "words": st.words,
                "repetition": st.repetition,
                "caption": st.caption,
            }
            chunk_entry["segments"].append(entry)
            segment_flag_index.append((st.segment.interval, set(st.flags)))

    def _bgm_stage(self, source_id, std_path, audio, chunk, states, chunk_entry, origin):
        bcfg = self.config.raw["bgm"]
        tags = []
        for st in states:
            payload = self.call(
                "tag_audio",
                audio=file_audio_payload(std_path, st.segment.interval),
                params={
                    "source_id": source_id,
                    "segment_id": st.segment_id,
                    "interval": [st.segment.interval.start_s, st.segment.interval.end_s],
                },
            )
            st.music_prob = payload["music_prob"]
            tags.append(bgm_mod.MusicTag(st.segment_id, st.music_prob))
        flagged_ids = bgm_mod.flag_music(tags, threshold=bcfg["threshold"])
        for st in states:
            if st.segment_id in flagged_ids:
                st.flags.append("music_flagged")
        if not flagged_ids:
            return audio

        member_intervals = {st.segment_id: st.segment.interval for st in states}
        flagged = [(st.segment_id, st.segment.interval)
                   for st in states if st.segment_id in flagged_ids]
        windows = bgm_mod.plan_windows(
            flagged, chunk.interval, window_s=bcfg["window_s"], lead_s=bcfg["lead_s"]
        )
        working = audio
        for window in windows:
            payload = self.call(
                "extract_vocals",
                audio=file_audio_payload(std_path, window.interval),
                params={
                    "source_id": source_id,
                    "interval": [window.interval.start_s, window.interval.end_s],
                },
            )
            vocal = AudioBuffer(
                pcm16_b64_decode(payload["pcm16_b64"]), payload["sample_rate_hz"], 1
            )
            working = bgm_mod.splice_extracted(
                working, window, vocal, member_intervals, origin_s=origin
            )
            if window.split_extraction:
                for seg_id in window.member_segment_ids:
                    st = next(s for s in states if s.segment_id == seg_id)
                    if "split_extraction" not in st.flags:
                        st.flags.append("split_extraction")
        return working

    def _asr_segment(self, source_id, st: _SegmentState, pieces, acfg):
        # transcribe the segment's main surviving piece; geometry cuts can
        # leave flanks whose words are not recovered
        if len(pieces) > 1:
            st.flags.append("partial_transcript")
        interval, piece_audio = max(pieces, key=lambda p: p[0].duration_s)
        backends = [
            _AsrBackend(
                self, source_id, m["model_id"], bool(m.get("primary")),
                interval, st.segment.speaker_id,
            )
            for m in acfg["models"]
        ]
        result = rover.ensemble_transcribe(
            piece_audio,
            backends,
            min_agreement=acfg["min_agreement"],
            rep_n=acfg["repetition_n"],
            rep_count_threshold=acfg["repetition_count"],
            segment_interval=interval,
        )
        for flag in result.flags:
            if flag not in st.flags:
                st.flags.append(flag)
        st.words = [
            {
                "surface": w.surface,
                "start_s": round(w.interval.start_s, 6),
                "end_s": round(w.interval.end_s, 6),
            }
            for w in result.words
        ]
        if result.repetition is not None:
            st.repetition = {
                "n": result.repetition.n,
                "max_count": result.repetition.max_count,
                "discarded": result.repetition.discarded,
            }

    def _caption_segment(self, source_id, std_path, st: _SegmentState, prev_payloads):
        try:
            payload = self.call(
                "caption",
                audio=file_audio_payload(std_path, st.segment.interval),
                params={
                    "source_id": source_id,
                    "interval": [st.segment.interval.start_s, st.segment.interval.end_s],
                    "context": list(prev_payloads),
                },
            )
            st.caption = payload["text"]
        except BackendCallError:
            st.caption = None
            st.flags.append("caption_failed")

    # -- duplex selection -----------------------------------------------------

    def _select_duplex(self, source_id, file_dir, audio, all_turns, speaker_pieces,
                       segment_flag_index, manifest):
        dcfg = self.config.raw["duplex"]
        turns = [t for t, _ in sorted(all_turns, key=lambda p: p[0].interval.start_s)]
        regions = select_regions(
            turns,
            max_turn_s=dcfg["max_turn_s"],
            min_turns=dcfg["min_turns"],
            max_gap_s=dcfg["max_gap_s"],
        )
        duplex_dir = file_dir / "duplex"
        words_by_turn = {
            id(t): st for t, st in all_turns
        }
        for idx, region in enumerate(regions):
            blocked = any(
                intersect(region.interval, iv) and (flags & UNSEPARATED_FLAGS)
                for iv, flags in segment_flag_index
            )
            if blocked:
                manifest["flags"].append(f"duplex_region_dropped_missing_separation:{idx}")
                continue
            region_speakers = region.speaker_ids
            pieces = {
                spk: [
                    (iv, buf) for iv, buf in speaker_pieces.get(spk, [])
                    if intersect(iv, region.interval)
                ]
                for spk in region_speakers
            }
            if any(not v for v in pieces.values()):
                manifest["flags"].append(f"duplex_region_dropped_missing_audio:{idx}")
                continue
            word_tokens = {spk: [] for spk in region_speakers}
            for turn in region.turns:
                st = words_by_turn.get(id(turn))
                if st is None or not st.words:
                    continue
                for w in st.words:
                    word_tokens[turn.speaker_id].append(
                        rover.WordToken(
                            w["surface"], rover.normalize_word(w["surface"]),
                            TimeInterval(w["start_s"], w["end_s"]),
                            st.segment.speaker_id,
                        )
                    )
            sample = build_stereo(region, pieces, audio.sample_rate_hz, word_tokens)
            duplex_dir.mkdir(parents=True, exist_ok=True)
            region_id = f"region{idx:03d}"
            wav_rel = f"duplex/{region_id}.wav"
            words_rel = f"duplex/{region_id}.words.json"
            write_wav(file_dir / wav_rel, interleave_stereo(sample))
            words_doc = {
                "region_id": region_id,
                "start_s": round(region.interval.start_s, 6),
                "end_s": round(region.interval.end_s, 6),
                "left_speaker_id": region.left_speaker_id,
                "left_words": [
                    {"surface": w.surface, "start_s": round(w.interval.start_s, 6),
                     "end_s": round(w.interval.end_s, 6)}
                    for w in sample.left_words
                ],
                "right_words": [
                    {"surface": w.surface, "start_s": round(w.interval.start_s, 6),
                     "end_s": round(w.interval.end_s, 6)}
                    for w in sample.right_words
                ],
            }
            (file_dir / words_rel).write_text(
                json.dumps(words_doc, sort_keys=True, indent=2) + "\n"
            )
            manifest["duplex_regions"].append(
                {
                    "region_id": region_id,
                    "start_s": round(region.interval.start_s, 6),
                    "end_s": round(region.interval.end_s, 6),
                    "turn_count": len(region.turns),
                    "left_speaker_id": region.left_speaker_id,
                    "stereo_wav": wav_rel,
                    "words_json": words_rel,
                }
            )


def _intersect_families(current: list, incoming: list) -> list:
    """Intersection of two unions of intervals."""
    out = []
    for a in current:
        for b in incoming:
            iv = intersect(a, b)
            if iv is not None:
                out.append(iv)
    return out


def run_pipeline(config: PipelineConfig, log=None) -> RunSummary:
    runner = PipelineRunner(config, log=log)
    try:
        return runner.run()
    finally:
        runner.dispatcher.close()
