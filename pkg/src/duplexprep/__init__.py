"""duplexprep: batch curation of conversational audio for full-duplex training.

Turns raw long-form conversational recordings into speaker-separated,
word-timestamped manifests: loudness standardization, silence-aware
chunking, overlap separation with speaker identity assignment, background
music gating, multi-model ASR voting, duplex region selection, and the
diarization/separation evaluation metrics that go with them.

Inference models (VAD, diarizer, separator, embedder, tagger, ASR,
captioner) are consumed through a versioned wire protocol; deterministic
mock backends ship in :mod:`duplexprep.backend.mocks` for desk-scale runs.
"""

from duplexprep.timeline import TimeInterval, SpeakerSegment, OverlapRelation, Turn

__version__ = "0.1.0"

__all__ = [
    "TimeInterval",
    "SpeakerSegment",
    "OverlapRelation",
    "Turn",
    "__version__",
]
