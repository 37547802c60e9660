import math

import numpy as np
import pytest

from duplexprep.audio import AudioBuffer
from duplexprep.metrics import (
    RttmSegment,
    StageTiming,
    dump_rttm,
    load_rttm,
    rtf_report,
    si_sdr,
    synth_overlap_mixture,
)
from duplexprep.metrics.rttm import format_rttm, parse_rttm
from duplexprep.timeline import TimeInterval


def tone(freq, duration_s, rate=16000, amp=0.4, phase=0.0):
    t = np.arange(int(duration_s * rate)) / rate
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t + phase), rate, 1)


class TestSiSdr:
    def test_identical_is_infinite(self):
        ref = tone(440, 0.5)
        assert si_sdr(ref, ref) == math.inf

    def test_pure_scaling_is_infinite(self):
        ref = tone(440, 0.5)
        est = AudioBuffer(0.3 * ref.samples, 16000, 1)
        assert si_sdr(est, ref) == math.inf

    def test_equal_power_orthogonal_noise_is_zero_db(self):
        rate = 16000
        n = rate  # whole number of 440 Hz and 880 Hz periods
        t = np.arange(n) / rate
        ref = np.sin(2 * np.pi * 440 * t)
        noise = np.sin(2 * np.pi * 880 * t)
        # exact orthogonalization and power match
        noise = noise - (np.dot(noise, ref) / np.dot(ref, ref)) * ref
        noise *= np.sqrt(np.dot(ref, ref) / np.dot(noise, noise))
        out = si_sdr(AudioBuffer(ref + noise, rate, 1), AudioBuffer(ref, rate, 1))
        assert out == pytest.approx(0.0, abs=0.1)

    def test_scale_invariance_on_noisy_estimate(self):
        rng = np.random.default_rng(9)
        ref = rng.standard_normal(4000)
        est = ref + 0.3 * rng.standard_normal(4000)
        base = si_sdr(AudioBuffer(est, 16000, 1), AudioBuffer(ref, 16000, 1))
        for a in (0.25, 1.0, 7.5, 1e3):
            scaled = si_sdr(AudioBuffer(a * est, 16000, 1), AudioBuffer(ref, 16000, 1))
            assert abs(scaled - base) <= 1e-6

    def test_zero_reference_raises(self):
        ref = AudioBuffer(np.zeros(100), 16000, 1)
        with pytest.raises(ValueError):
            si_sdr(ref, ref)

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            si_sdr(tone(440, 0.5), tone(440, 0.6))


class TestSynthOverlapMixture:
    def test_full_overlap_equal_durations(self):
        s1, s2 = tone(300, 4.0), tone(500, 4.0)
        out = synth_overlap_mixture(s1, s2, sir_db=0.0, overlap_ratio=1.0)
        assert out.spec.t1 == out.spec.t_start == 0.0
        assert out.spec.t2 == out.spec.t_end == pytest.approx(4.0)

    def test_overlap_duration_arithmetic(self):
        s1, s2 = tone(300, 10.0), tone(500, 10.0)
        out = synth_overlap_mixture(s1, s2, sir_db=5.0, overlap_ratio=0.2)
        assert out.spec.overlap_duration_s == pytest.approx(2.0, rel=0.01)
        assert out.spec.t1 == pytest.approx(8.0, rel=0.01)
        assert out.spec.t_end == pytest.approx(18.0, rel=0.01)

    @pytest.mark.parametrize("sir_db", [0.0, 5.0, 10.0])
    @pytest.mark.parametrize("ratio", [0.2, 0.5, 1.0])
    def test_achieved_sir_and_overlap(self, sir_db, ratio):
        rng = np.random.default_rng(int(sir_db * 10 + ratio * 100))
        rate = 16000
        s1 = AudioBuffer(0.3 * rng.standard_normal(rate * 6), rate, 1)
        s2 = AudioBuffer(0.2 * rng.standard_normal(rate * 5), rate, 1)
        out = synth_overlap_mixture(s1, s2, sir_db=sir_db, overlap_ratio=ratio)
        i1 = int(round(out.spec.t1 * rate))
        i2 = int(round(out.spec.t2 * rate))
        p1 = np.mean(np.square(out.track1.samples[i1:i2]))
        p2 = np.mean(np.square(out.track2.samples[i1:i2]))
        achieved = 10 * np.log10(p1 / p2)
        assert achieved == pytest.approx(sir_db, abs=0.1)
        want_overlap = ratio * min(s1.duration_s, s2.duration_s)
        assert out.spec.overlap_duration_s == pytest.approx(want_overlap, rel=0.01)
        np.testing.assert_allclose(
            out.mixture.samples, out.track1.samples + out.track2.samples
        )

    def test_ratio_out_of_range(self):
        s1, s2 = tone(300, 2.0), tone(500, 2.0)
        with pytest.raises(ValueError):
            synth_overlap_mixture(s1, s2, 0.0, 0.0)
        with pytest.raises(ValueError):
            synth_overlap_mixture(s1, s2, 0.0, 1.2)


class TestRtf:
    def test_paper_total(self):
        report = rtf_report([StageTiming("all", 20.95)], 120.0)
        assert round(report.total_rtf, 4) == 0.1746

    def test_stage_breakdown(self):
        stages = [
            StageTiming("vad_diarize", 1.91),
            StageTiming("separation", 0.15),
            StageTiming("asr_ensemble", 13.91),
            StageTiming("denoise", 4.99),
        ]
        report = rtf_report(stages, 120.0)
        # the individually rounded stage times sum to 20.96
        assert report.total_processing_s == pytest.approx(20.96)
        assert round(report.total_rtf, 4) == 0.1747
        rtfs = {name: round(r, 4) for name, _, r in report.stages}
        assert rtfs == {
            "vad_diarize": 0.0159,
            "separation": 0.0013,
            "asr_ensemble": 0.1159,
            "denoise": 0.0416,
        }
        # dropping the optional denoise stage lands at 0.133
        no_denoise = rtf_report(stages[:3], 120.0)
        assert round(no_denoise.total_rtf, 3) == 0.133

    def test_zero_stage_time(self):
        report = rtf_report([StageTiming("noop", 0.0)], 30.0)
        assert report.stages[0][2] == 0.0

    def test_three_stages(self):
        report = rtf_report([StageTiming(f"s{i}", 1.0) for i in range(3)], 30.0)
        assert report.total_rtf == pytest.approx(0.1)

    def test_render_contains_stages(self):
        text = rtf_report([StageTiming("asr", 2.0)], 20.0).render()
        assert "asr" in text and "Total" in text and "0.1000" in text


class TestRttmIo:
    def test_roundtrip(self, tmp_path):
        segs = [
            RttmSegment("rec1", "alice", TimeInterval(0.5, 2.25)),
            RttmSegment("rec1", "bob", TimeInterval(3.0, 4.5)),
        ]
        path = tmp_path / "ref.rttm"
        dump_rttm(segs, path)
        back = load_rttm(path)
        assert back == segs

    def test_tolerates_extra_columns_and_comments(self):
        text = (
            "; header comment\n"
            "SPEAKER rec1 1 0.50 1.75 <NA> <NA> alice <NA> <NA> extra cols here\n"
            "SPKR-INFO rec1 1 <NA> <NA> <NA> unknown alice <NA>\n"
            "SPEAKER rec1 1 3.00 1.50 <NA> <NA> bob\n"
        )
        segs = parse_rttm(text)
        assert len(segs) == 2
        assert segs[0].speaker_id == "alice"
        assert segs[0].interval.end_s == pytest.approx(2.25)
        assert segs[1].speaker_id == "bob"

    def test_short_line_rejected(self):
        with pytest.raises(ValueError):
            parse_rttm("SPEAKER rec1 1 0.5\n")

    def test_format_fields(self):
        line = format_rttm([RttmSegment("r", "s", TimeInterval(1.0, 2.5))]).strip()
        fields = line.split()
        assert fields[0] == "SPEAKER"
        assert fields[3] == "1.000"
        assert fields[4] == "1.500"
        assert fields[7] == "s"
