#!/usr/bin/env python3
# Regenerates tests/data/bleu_vectors.json with the reference scorer.
#
#   python3 -m venv venv && venv/bin/pip install sacrebleu==1.5.0
#   venv/bin/python tests/oracle/make_bleu_vectors.py > tests/data/bleu_vectors.json
#
# Each vector is a small corpus: a list of segments, each with a candidate and
# one or more references. Scored with corpus BLEU, 13a tokenization, exp
# smoothing, no lowercasing, no effective order.
import json
import sacrebleu

assert sacrebleu.__version__ == "1.5.0", sacrebleu.__version__

VECTORS = [
    ("identity", [("A man is walking.", ["A man is walking."])]),
    ("extra_token", [("a b c d e", ["a b c d"])]),
    ("brevity_penalty", [("a b c d", ["a b c d e f g h"])]),
    ("no_4gram_match", [("the cat is on the mat", ["there is a cat on a mat"])]),
    ("no_bigram_match", [("cat dog bird fish", ["fish bird dog cat"])]),
    ("zero_overlap", [("one two three four five", ["six seven eight nine ten"])]),
    ("two_refs_closest_len", [("the dog runs fast", ["a dog is running quickly in the park", "the dog runs"])]),
    ("two_refs_max_clip", [("the the the cat", ["the cat sat", "the the mat"])]),
    ("punctuation_13a", [("Not all birds are a duck.", ["Not all birds are ducks."])]),
    ("commas_numbers", [("He paid 1,000 dollars, then left.", ["He paid 1,000 dollars and then left."])]),
    ("dash_after_digit", [("The 3-year-old girl plays.", ["A 3-year-old girl is playing."])]),
    ("special_chars", [("Tom's \"big\" (red) dog: yes!", ["Tom's big red dog, yes?"])]),
    ("html_entities", [("fish &amp; chips &quot;tasty&quot;", ["fish & chips \"tasty\""])]),
    ("multi_segment", [
        ("A person is outside.", ["A man is outside.", "Someone is outdoors."]),
        ("Not all dogs are brown.", ["Dogs can be other colors than brown."]),
        ("The woman is sleeping.", ["A woman who sleeps cannot be running.", "The woman is sleeping."]),
    ]),
    ("multi_segment_short", [
        ("yes", ["yes it is"]),
        ("a b", ["a b"]),
        ("c d e", ["c d e f"]),
    ]),
    ("longer_candidate", [("a man in a red shirt is walking down the busy street today", ["a man is walking down the street"])]),
    ("repeated_ngrams", [("the cat the cat the cat", ["the cat sat on the cat"])]),
    ("case_sensitive", [("The Cat Sat down", ["the cat sat down"])]),
    ("trailing_space_and_tokenized_period", [("A boy plays soccer . ", ["A boy is playing soccer."])]),
    ("esnli_like", [
        ("A man playing a guitar is a man playing an instrument.", ["A guitar is an instrument.", "A man playing guitar is playing an instrument."]),
        ("The girl cannot be swimming and running at the same time.", ["One cannot swim and run simultaneously."]),
        ("Just because a child is smiling does not mean he is happy.", ["A smiling child is not necessarily happy.", "Smiling does not imply happiness."]),
        ("Two people are not a crowd.", ["Two people are not a crowd."]),
    ]),
]


def score(segments):
    sys = [c for c, _ in segments]
    n_refs = max(len(r) for _, r in segments)
    streams = [[(r[k] if k < len(r) else "") for _, r in segments] for k in range(n_refs)]
    return sacrebleu.corpus_bleu(sys, streams, smooth_method="exp", tokenize="13a").score


out = []
for name, segments in VECTORS:
    out.append({
        "name": name,
        "segments": [{"candidate": c, "references": r} for c, r in segments],
        "bleu": score(segments),
    })
print(json.dumps({"scorer": "sacrebleu 1.5.0, tok 13a, smooth exp", "vectors": out}, indent=2))
