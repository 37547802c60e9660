"""
Three-model word voting and the repetition filter
=================================================

Aligns three recognizer outputs into a word transition network, votes
slot by slot (two agreeing models beat the primary, otherwise the
primary stands), and shows the n-gram filter discarding a hallucinated
loop that voting alone cannot remove.
"""

from duplexprep.rover import (
    Hypothesis,
    WordToken,
    ensemble_hypotheses,
    repetition_filter,
)
from duplexprep.timeline import TimeInterval


def hyp(model_id, text, primary=False):
    words = []
    t = 0.0
    tokens = []
    for w in text.split():
        tokens.append(WordToken.make(w, model_id, TimeInterval(t, t + 0.3)))
        t += 0.4
    return Hypothesis(model_id=model_id, is_primary=primary, words=tokens)


# the primary mishears one word; the other two agree on the right one
out = ensemble_hypotheses([
    hyp("backbone", "yeah big decision for dan", primary=True),
    hyp("model-b", "yeah big decision for stan"),
    hyp("model-c", "yeah big decision for stan"),
])
print("majority overrides the primary:")
print(" ", out.text)

# with three different answers, the primary backbone wins the slot
out = ensemble_hypotheses([
    hyp("backbone", "the cap sat", primary=True),
    hyp("model-b", "the cat sat"),
    hyp("model-c", "the carp sat"),
])
print("\nno majority, primary stands:")
print(" ", out.text)

# a short loop is outvoted word by word
out = ensemble_hypotheses([
    hyp("backbone", "yeah yeah yeah", primary=True),
    hyp("model-b", "yeah big decision for dan"),
    hyp("model-c", "yeah big decision for dan"),
])
print("\nshort hallucination corrected by voting:")
print(" ", out.text)

# a long loop survives voting (primary-only insertions win their slots)
# and is caught by the repetition filter instead
looped = ["yeah"] * 100
report = repetition_filter(looped, n=15, count_threshold=5)
print(f"\nrepetition filter on 'yeah' x100: max 15-gram count = "
      f"{report.max_count}, discarded = {report.discarded}")

out = ensemble_hypotheses([
    hyp("backbone", " ".join(looped), primary=True),
    hyp("model-b", "yeah big decision"),
    hyp("model-c", "yeah big decision"),
])
print(f"full ensemble on the long loop: {len(out.words)} words kept, "
      f"flags = {out.flags}")
