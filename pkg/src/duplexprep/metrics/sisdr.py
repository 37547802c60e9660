"""Scale-invariant signal-to-distortion ratio."""

from __future__ import annotations

import math

import numpy as np

from duplexprep.audio import AudioBuffer


def si_sdr(estimate: AudioBuffer, reference: AudioBuffer) -> float:
    """SI-SDR in dB between an estimate and its clean reference.

    The estimate is projected onto the reference (alpha = <est, ref> /
    <ref, ref>) so that output gain does not matter. A zero residual
    returns +inf.
    """
    est = np.asarray(estimate.samples, dtype=np.float64)
    ref = np.asarray(reference.samples, dtype=np.float64)
    if len(est) != len(ref):
        raise ValueError(f"length mismatch: estimate {len(est)} vs reference {len(ref)}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ValueError("silent reference: SI-SDR undefined")
    alpha = float(np.dot(est, ref)) / ref_energy
    target = alpha * ref
    residual = target - est
    target_power = float(np.dot(target, target))
    residual_power = float(np.dot(residual, residual))
    if residual_power == 0.0:
        return math.inf
    return 10.0 * math.log10(target_power / residual_power)
