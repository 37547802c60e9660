import random

import numpy as np
import pytest

from duplexprep.timeline import TimeInterval
from duplexprep.vad import (
    Chunk,
    VadFrameSeries,
    chunk_regions,
    detect_regions,
    speech_probs_from_energy,
)


def series(probs, hop_s=0.1):
    return VadFrameSeries(hop_s=hop_s, probs=np.asarray(probs, dtype=float))


class TestDetectRegions:
    def test_all_silence(self):
        assert detect_regions(series([0.0] * 50)) == []

    def test_all_speech(self):
        regions = detect_regions(series([1.0] * 100, hop_s=0.1))
        assert regions == [TimeInterval(0.0, 10.0)]

    def test_two_regions_hand_traced(self):
        # Speech on [0, 3) and [4, 7), silence elsewhere, hop 0.1, min_silence 0.5.
        probs = [1.0] * 30 + [0.0] * 10 + [1.0] * 30 + [0.0] * 10
        regions = detect_regions(series(probs), min_silence_s=0.5)
        assert len(regions) == 2
        assert regions[0].start_s == 0.0
        assert regions[0].end_s == pytest.approx(3.0)
        assert regions[1].start_s == pytest.approx(4.0)
        assert regions[1].end_s == pytest.approx(7.0)

    def test_short_silence_bridged(self):
        # 0.2 s dip < min_silence 0.3 keeps one region.
        probs = [1.0] * 10 + [0.0] * 2 + [1.0] * 10
        regions = detect_regions(series(probs), min_silence_s=0.3)
        assert len(regions) == 1
        assert regions[0].start_s == 0.0
        assert regions[0].end_s == pytest.approx(2.2)

    def test_min_speech_discards_blips(self):
        probs = [0.0] * 10 + [1.0] * 1 + [0.0] * 10
        assert detect_regions(series(probs), min_speech_s=0.2) == []

    def test_hysteresis_band_keeps_speech(self):
        # 0.4 sits between off (0.35) and on (0.5): keeps an open region alive
        # but never starts one.
        probs = [0.4] * 10 + [0.9] * 5 + [0.4] * 5 + [0.9] * 5 + [0.0] * 10
        regions = detect_regions(series(probs), min_silence_s=0.3)
        assert len(regions) == 1
        assert regions[0].start_s == pytest.approx(1.0)
        assert regions[0].end_s == pytest.approx(2.5)

    def test_threshold_order_enforced(self):
        with pytest.raises(ValueError):
            detect_regions(series([0.5]), on_thresh=0.3, off_thresh=0.4)


class TestChunkRegions:
    def test_single_short_region(self):
        chunks = chunk_regions([TimeInterval(0, 60)])
        assert len(chunks) == 1
        assert chunks[0].interval == TimeInterval(0, 60)
        assert not chunks[0].forced_cut

    def test_cut_before_region_that_overflows(self):
        # 290 s of accumulated speech, then a 20 s region: it must start a
        # new chunk because 310 >= 300.
        regions = [TimeInterval(0, 290), TimeInterval(292, 312)]
        chunks = chunk_regions(regions)
        assert len(chunks) == 2
        assert chunks[0].interval == TimeInterval(0, 290)
        assert chunks[1].interval == TimeInterval(292, 312)
        assert not chunks[0].forced_cut and not chunks[1].forced_cut

    def test_force_cut_long_region(self):
        chunks = chunk_regions([TimeInterval(0, 700)])
        assert [c.interval for c in chunks] == [
            TimeInterval(0, 300),
            TimeInterval(300, 600),
            TimeInterval(600, 700),
        ]
        assert [c.forced_cut for c in chunks] == [True, True, False]

    def test_remainder_accumulates_following_regions(self):
        chunks = chunk_regions([TimeInterval(0, 310), TimeInterval(320, 330)])
        assert chunks[0] == Chunk("chunk0000", TimeInterval(0, 300), True)
        assert chunks[1].interval == TimeInterval(300, 330)
        assert not chunks[1].forced_cut

    def test_random_series_invariants(self):
        rng = random.Random(97)
        for _ in range(50):
            regions = []
            t = 0.0
            for _ in range(rng.randint(0, 40)):
                t += rng.uniform(0.5, 30)
                start = t
                t += rng.uniform(1, 120)
                regions.append(TimeInterval(start, t))
            chunks = chunk_regions(regions)
            # speech is covered exactly once
            for r in regions:
                covering = [c for c in chunks if c.interval.start_s <= r.start_s and r.end_s <= c.interval.end_s]
                if r.duration_s < 300:
                    assert len(covering) == 1
            # duration bound
            for c in chunks:
                if not c.forced_cut:
                    assert c.interval.duration_s < 300
            # chunks are disjoint and ordered
            for a, b in zip(chunks, chunks[1:]):
                assert a.interval.end_s <= b.interval.start_s


class TestEnergyVad:
    def test_tone_with_gap(self):
        rate = 16000
        x = np.concatenate([
            0.3 * np.sin(2 * np.pi * 220 * np.arange(rate) / rate),
            np.zeros(rate),
            0.3 * np.sin(2 * np.pi * 220 * np.arange(rate) / rate),
        ])
        vad = speech_probs_from_energy(x, rate)
        regions = detect_regions(vad)
        assert len(regions) == 2
        assert regions[0].start_s == pytest.approx(0.0, abs=0.1)
        assert regions[0].end_s == pytest.approx(1.0, abs=0.1)
        assert regions[1].start_s == pytest.approx(2.0, abs=0.1)
