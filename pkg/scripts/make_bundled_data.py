#!/usr/bin/env python3
"""Regenerate the small treebanks and lexicons shipped in ``canonseg/resources``.

toy_treebank.tsv       50 words, no orthographic changes, unambiguous affixes
toy_lexicon.txt        200 words
synthetic_treebank.tsv 300 words with e-deletion (hope+ing -> hoping) and
                       able+ly -> ably
synthetic_lexicon.txt  attested surface forms of every derived Word span
"""
import random
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "canonseg" / "resources"

VOWELS = set("aeiou")


def surface_join(word, suffix):
    if suffix == "ly" and word.endswith("le"):
        return word[:-2] + "ly"
    if suffix[0] in VOWELS and word.endswith("e"):
        return word[:-1] + suffix
    return word + suffix


def derive(stem, ops):
    """Apply affixation ops in order; returns (surface, sexpr, surface forms of Word spans)."""
    sexpr = f"(Word {stem})"
    surface = stem
    spans = [stem]
    for kind, affix in ops:
        if kind == "P":
            sexpr = f"(Word (Prefix {affix}) {sexpr})"
            surface = affix + surface
        else:
            sexpr = f"(Word {sexpr} (Suffix {affix}))"
            surface = surface_join(surface, affix)
        spans.append(surface)
    return surface, sexpr, spans


TOY_STEMS = [
    "lock", "test", "play", "kind", "help", "read", "walk", "talk", "paint", "dark",
    "soft", "cold", "fair", "hard", "teach", "sing", "work", "think", "build", "mark",
]
TOY_OPS = [
    [("S", "er")], [("S", "ing")], [("S", "ness")], [("P", "un")], [("P", "re")],
    [("S", "able"), ("P", "un")], [("S", "ing"), ("P", "re")], [("S", "less"), ("S", "ness")],
    [("S", "ful"), ("S", "ness")], [("P", "re"), ("S", "able")],
]
TOY_FILLER = [
    "apple", "river", "stone", "cloud", "green", "table", "chair", "window", "garden", "bread",
    "water", "light", "night", "house", "music", "paper", "money", "story", "field", "plant",
    "horse", "cable", "metal", "glass", "smile", "dream", "ocean", "train", "storm", "brick",
    "candle", "forest", "market", "pencil", "silver", "winter", "summer", "flower", "letter", "number",
]

SYN_STEMS = [
    "hope", "care", "like", "move", "use", "love", "save", "close", "write", "make",
    "bake", "shape", "name", "trace", "blame", "cure", "note", "wire", "rate", "price",
    "lock", "test", "play", "kind", "help", "read", "walk", "talk", "paint", "dark",
    "soft", "cold", "fair", "hard", "teach", "work", "think", "build", "mark", "pay",
    "drink", "wash", "load", "fold", "print", "pack", "turn", "count", "claim", "view",
]
SYN_E_STEMS = {s for s in SYN_STEMS if s.endswith("e")}
SYN_PREFIXES = ["un", "re", "pre", "mis", "dis"]
SYN_SUFFIXES = ["able", "ing", "er", "ed", "less", "ful", "ness", "ly", "ment"]


def toy():
    rng = random.Random(7)
    pairs = [(s, ops) for s in TOY_STEMS for ops in TOY_OPS]
    rng.shuffle(pairs)
    entries, seen, lexicon = [], set(), set()
    for stem, ops in pairs:
        surface, sexpr, spans = derive(stem, ops)
        if surface in seen:
            continue
        seen.add(surface)
        entries.append((surface, sexpr))
        lexicon.update(spans)
        if len(entries) == 50:
            break
    lexicon.update(TOY_STEMS)
    for w in TOY_FILLER:
        if len(lexicon) >= 200:
            break
        lexicon.add(w)
    # pad with more derived-but-unseen words so the lexicon has exactly 200 entries
    for stem, ops in pairs:
        if len(lexicon) >= 200:
            break
        lexicon.update(derive(stem, ops)[2][:2])
    lexicon = sorted(lexicon)[:200]
    return entries, lexicon


def synthetic():
    rng = random.Random(11)
    entries, seen, lexicon = [], set(), set()
    while len(entries) < 300:
        stem = rng.choice(SYN_STEMS)
        depth = rng.choice([1, 1, 2, 2, 2, 3])
        ops = []
        for _ in range(depth):
            if rng.random() < 0.3 and not any(k == "P" for k, _ in ops):
                ops.append(("P", rng.choice(SYN_PREFIXES)))
            else:
                ops.append(("S", rng.choice(SYN_SUFFIXES)))
        if len({a for _, a in ops}) < len(ops):
            continue
        surface, sexpr, spans = derive(stem, ops)
        if surface in seen:
            continue
        seen.add(surface)
        entries.append((surface, sexpr))
        lexicon.update(spans)
    return entries, sorted(lexicon)


def write(name, lines):
    (OUT / name).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    entries, lexicon = toy()
    write("toy_treebank.tsv", [f"{w}\t{t}" for w, t in entries])
    write("toy_lexicon.txt", lexicon)
    entries, lexicon = synthetic()
    write("synthetic_treebank.tsv", [f"{w}\t{t}" for w, t in entries])
    write("synthetic_lexicon.txt", lexicon)
