#!/usr/bin/env python3
"""Regenerate the bundled offline fixtures under fixtures/.

The synthetic sentiment task is engineered so that prompt quality is a pure
function of how many distinct "good" adverbs the prompt carries:

  hits = |{good tokens} ∩ {whitespace tokens of the rendered text}|
  an example of difficulty d is answered correctly iff hits >= d

Per class the 32 examples split 16/8/8 across difficulties 0/1/2, so a prompt
with no good token scores 0.5, one good token scores 0.75, and two or more
score 1.0.  The script verifies those invariants exhaustively (every single
substitution of a vocabulary token into the seed prompt) before writing
anything, so a fixture edit that breaks the difficulty ladder fails loudly.
"""

import json
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures"

GOOD_TOKENS = ["carefully", "precisely", "thoroughly", "rigorously"]
TRANSFER_EXTRA = ["judge"]  # rewarded only by the transfer backend
SEED_PROMPT = "just judge the overall sentiment"
SURFACES = ["<negative>", "<positive>"]

FILLER = [
    "about", "above", "across", "actually", "almost", "along", "already",
    "although", "always", "anyway", "around", "basically", "before", "behind",
    "below", "beneath", "beside", "between", "beyond", "briefly", "broadly",
    "clearly", "closely", "commonly", "deeply", "directly", "during", "early",
    "easily", "equally", "evenly", "exactly", "fairly", "finally", "firmly",
    "frankly", "freely", "fully", "gently", "gladly", "greatly", "happily",
    "hardly", "highly", "honestly", "usually",
]
GOOD_AT = 20  # good tokens sit at vocabulary indices 20..23, adjacent

NEG_ADJ = ["gloomy", "hollow", "tedious", "clumsy", "stale", "bleak", "flat", "dreary"]
POS_ADJ = ["vivid", "warm", "crisp", "lively", "tender", "bright", "deft", "radiant"]

TEMPLATE = "{prompt} input: {input} answer:"


def build_vocab():
    vocab = FILLER[:GOOD_AT] + GOOD_TOKENS + FILLER[GOOD_AT:]
    assert len(vocab) == 50 and len(set(vocab)) == 50
    assert vocab[GOOD_AT:GOOD_AT + 4] == GOOD_TOKENS
    return vocab


def build_examples():
    """64 examples, labels interleaved, per-class difficulty cycle 0,0,1,2."""
    examples = []
    per_class_count = [0, 0]
    difficulty_cycle = [0, 0, 1, 2]
    for i in range(64):
        label = i % 2
        j = per_class_count[label]
        per_class_count[label] += 1
        adj = (POS_ADJ if label else NEG_ADJ)[j % 8]
        mood = "delightful" if label else "disappointing"
        text = f"critics say item{i:02d} felt {adj} and {mood}"
        examples.append({"text": text, "label": label,
                         "difficulty": difficulty_cycle[j % 4]})
    return examples


def accuracy(prompt_tokens, examples):
    """Mirror of the mock prediction rule, for pre-build verification."""
    for ex in examples:
        rendered = TEMPLATE.replace("{prompt}", " ".join(prompt_tokens)) \
                           .replace("{input}", ex["text"])
        hits = len(set(GOOD_TOKENS) & set(rendered.split()))
        ex["_correct"] = hits >= ex["difficulty"]
    return sum(ex.pop("_correct") for ex in examples) / len(examples)


def verify(vocab, examples):
    reserved = set(GOOD_TOKENS) | set(TRANSFER_EXTRA)
    texts = [ex["text"] for ex in examples]
    assert len(set(texts)) == len(texts), "example texts must be unique"
    for ex in examples:
        words = set(ex["text"].split())
        assert not (words & reserved), f"reserved word inside: {ex['text']}"

    for label in (0, 1):
        counts = {}
        for ex in examples:
            if ex["label"] == label:
                counts[ex["difficulty"]] = counts.get(ex["difficulty"], 0) + 1
        assert counts == {0: 16, 1: 8, 2: 8}, counts

    seed = SEED_PROMPT.split()
    assert not (set(seed) & set(GOOD_TOKENS))
    assert math.isclose(accuracy(seed, examples), 0.5)

    # Exhaustive: no single substitution of any vocabulary token beats 0.75.
    best_single = 0.0
    for pos in range(len(seed)):
        for tok in vocab:
            cand = seed[:pos] + [tok] + seed[pos + 1:]
            best_single = max(best_single, accuracy(cand, examples))
    assert math.isclose(best_single, 0.75), best_single

    # ...while two distinct good tokens reach 1.0.
    double = [GOOD_TOKENS[0], GOOD_TOKENS[1]] + seed[2:]
    assert math.isclose(accuracy(double, examples), 1.0)


def embedding_rows(vocab):
    """55 rows, d=8. Geometry tuned for k-means aggregation on prompts built
    from this table: the five seed-prompt tokens sit on separate axes at
    radius 6 (pairwise distance ~8.5), fillers on a radius-4 ring in the last
    two coordinates, and each good token far out (radius 25) on its own
    direction.  Good tokens are therefore the most expensive points to merge
    into any other cluster, so once a client adopts one it survives
    aggregation as its own cluster representative instead of being absorbed
    into a seed-token cluster and dropped."""
    rows = []
    good_dirs = [(0, 25.0), (6, 25.0), (7, 25.0), (0, -25.0)]
    for (axis, r), tok in zip(good_dirs, GOOD_TOKENS):
        v = [0.0] * 8
        v[axis] = r
        rows.append((tok, v))
    for axis, tok in enumerate(SEED_PROMPT.split(), start=1):
        v = [0.0] * 8
        v[axis] = 6.0
        v[0] = -1.0
        rows.append((tok, v))
    ring = [tok for tok in vocab if tok not in GOOD_TOKENS]
    for i, tok in enumerate(ring):
        theta = 2.0 * math.pi * i / len(ring)
        v = [0.1, 0, 0, 0, 0, 0, 4.0 * math.cos(theta), 4.0 * math.sin(theta)]
        rows.append((tok, v))
    assert len({tok for tok, _ in rows}) == len(rows)
    return rows


def fmt(x):
    return f"{x:.6f}".rstrip("0").rstrip(".") if x else "0"


def main():
    vocab = build_vocab()
    examples = build_examples()
    verify(vocab, examples)

    OUT.mkdir(exist_ok=True)

    with open(OUT / "sentiment.tsv", "w") as f:
        for ex in examples:
            f.write(f"{ex['text']}\t{ex['label']}\n")

    def rules(name, good):
        return {"name": name, "surfaces": SURFACES, "good_tokens": good,
                "examples": examples}

    with open(OUT / "mock_rules.json", "w") as f:
        json.dump(rules("sentiment-mock", GOOD_TOKENS), f, indent=2)
        f.write("\n")
    with open(OUT / "mock_rules_transfer.json", "w") as f:
        json.dump(rules("sentiment-transfer", GOOD_TOKENS + TRANSFER_EXTRA), f,
                  indent=2)
        f.write("\n")

    with open(OUT / "vocab.txt", "w") as f:
        f.write("# fill-mask proposal vocabulary\n")
        f.write("\n".join(vocab) + "\n")

    with open(OUT / "embeddings.txt", "w") as f:
        f.write("# token embeddings, d=8\n")
        for tok, v in embedding_rows(vocab):
            f.write(tok + " " + " ".join(fmt(x) for x in v) + "\n")

    print("fixtures written to", OUT)


if __name__ == "__main__":
    sys.exit(main())
