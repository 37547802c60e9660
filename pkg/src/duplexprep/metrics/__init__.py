"""Evaluation machinery: WER, DER/JER with collar, restricted DERs,
SI-SDR, controlled overlap mixture synthesis, and RTF accounting."""

from duplexprep.metrics.wer import wer, WerBreakdown
from duplexprep.metrics.der import der, jer, der_short, der_turn, DerBreakdown
from duplexprep.metrics.sisdr import si_sdr
from duplexprep.metrics.mixture import synth_overlap_mixture, MixtureSpec, MixtureResult
from duplexprep.metrics.rtf import rtf_report, RtfReport, StageTiming
from duplexprep.metrics.rttm import RttmSegment, load_rttm, dump_rttm

__all__ = [
    "wer",
    "WerBreakdown",
    "der",
    "jer",
    "der_short",
    "der_turn",
    "DerBreakdown",
    "si_sdr",
    "synth_overlap_mixture",
    "MixtureSpec",
    "MixtureResult",
    "rtf_report",
    "RtfReport",
    "StageTiming",
    "RttmSegment",
    "load_rttm",
    "dump_rttm",
]
