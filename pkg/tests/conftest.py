import sys
from pathlib import Path

import pytest

# Make the oracle helpers importable from any test module.
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """Conversation fixtures + sidecars shared across the suite."""
    from duplexprep.synthfix import build_conversation_fixture

    root = tmp_path_factory.mktemp("corpus")
    build_conversation_fixture(root, "conv_a", seed=11, n_turns=10, with_music=True)
    build_conversation_fixture(root, "conv_b", seed=23, n_turns=8, with_music=False)
    return root


@pytest.fixture(scope="session")
def overlap_grid(tmp_path_factory):
    """27 controlled overlap mixtures: SIR {0,5,10} x rho {0.2,0.5,1.0} x 3."""
    from duplexprep.synthfix import build_overlap_grid

    root = tmp_path_factory.mktemp("grid")
    build_overlap_grid(root, variants=3, seed=7)
    return root


@pytest.fixture(scope="session")
def asr_corpus(tmp_path_factory):
    """100+ transcribed segments for the ensemble-vs-primary WER check.

    Returns (fixture_dir, [(source_id, segment, normalized_truth_words)]).
    """
    import json

    from duplexprep.rover import normalize_word
    from duplexprep.synthfix import build_conversation_fixture

    root = tmp_path_factory.mktemp("asr_corpus")
    segments = []
    for i in range(10):
        stem = f"talk{i:02d}"
        build_conversation_fixture(root, stem, seed=500 + i, n_turns=12)
        truth = json.loads((root / f"{stem}.truth.json").read_text())
        for seg in truth["segments"]:
            words = [
                normalize_word(w["surface"])
                for w in truth["words"]
                if w["speaker_id"] == seg["speaker_id"]
                and seg["start_s"] <= w["start_s"]
                and w["end_s"] <= seg["end_s"]
            ]
            if len(words) >= 3:
                segments.append((stem, seg, words))
    assert len(segments) >= 100
    return root, segments
