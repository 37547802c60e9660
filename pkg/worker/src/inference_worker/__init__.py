"""Reference inference worker for the duplexprep batch pipeline.

Serves VAD, diarization, two-speaker separation, speaker embedding,
audio tagging, vocal extraction, denoising, ASR and captioning behind
the documented wire protocol (newline-delimited JSON over stdio or TCP).
Ships with lightweight signal-processing stand-ins for every task kind
so protocol and shape conformance can be exercised without GPU weights;
production models plug in through dotted-path factories in the worker
config.
"""

__version__ = "0.1.0"
