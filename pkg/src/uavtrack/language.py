"""Instruction vocabulary: colour naming, prompt generation, zero-shot substitution, tokenising."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from itertools import product

import numpy as np

# 18 coloured anchors, then the three base tones picked out by luminance/saturation.
COLOR_ANCHORS = (
    ("red", (255, 0, 0)),
    ("orange", (255, 140, 0)),
    ("yellow", (230, 200, 0)),
    ("green", (30, 160, 40)),
    ("cyan", (0, 190, 200)),
    ("blue", (30, 60, 220)),
    ("purple", (128, 0, 128)),
    ("pink", (255, 130, 180)),
    ("brown", (140, 80, 30)),
    ("dark red", (120, 10, 10)),
    ("dark blue", (20, 40, 150)),
    ("dark green", (0, 90, 20)),
    ("dark gray", (80, 80, 110)),
    ("light gray", (165, 165, 195)),
    ("gold", (210, 170, 40)),
    ("silver", (190, 195, 225)),
    ("beige", (225, 200, 160)),
    ("olive", (128, 128, 0)),
)
BASE_TONES = (("black", (0, 0, 0)), ("white", (255, 255, 255)), ("gray", (128, 128, 128)))
BLACK_LUMA = 40.0
WHITE_LUMA = 215.0
GRAY_SATURATION = 25.0

_ANCHOR_RGB = np.array([rgb for _, rgb in COLOR_ANCHORS], dtype=np.float64)


@dataclass(frozen=True)
class ColorAnchor:
    name: str
    rgb: tuple[int, int, int]


def color_anchors() -> list[ColorAnchor]:
    return [ColorAnchor(n, rgb) for n, rgb in COLOR_ANCHORS + BASE_TONES]


def color_name(rgb) -> str:
    """Map an RGB triple to one of the 21 colour words."""
    r, g, b = (float(c) for c in rgb)
    if not all(0.0 <= c <= 255.0 for c in (r, g, b)):
        raise ValueError(f"rgb components must lie in [0, 255], got {rgb}")
    luma = 0.299 * r + 0.587 * g + 0.114 * b
    if luma < BLACK_LUMA:
        return "black"
    if luma > WHITE_LUMA:
        return "white"
    if max(r, g, b) - min(r, g, b) < GRAY_SATURATION:
        return "gray"
    d2 = ((_ANCHOR_RGB - np.array([r, g, b])) ** 2).sum(axis=1)
    return COLOR_ANCHORS[int(np.argmin(d2))][0]  # argmin keeps the first of equal minima


AGES = ("adult", "teenager", "child")
GENDERS = ("male", "female")


def pedestrian_phrase(age: str, gender: str) -> str:
    if age not in AGES or gender not in GENDERS:
        raise ValueError(f"unknown pedestrian attributes {(age, gender)!r}")
    return f"{age} {gender} pedestrian"


COLOR_WORDS = tuple(n for n, _ in COLOR_ANCHORS + BASE_TONES)
VEHICLE_NOUNS = ("vehicle", "bicycle", "motorcycle")
BASE_VERB = "Track"
DISTANCE_PHRASES = {
    "close": "at a close distance",
    "suitable": "at a suitable distance",
    "far": "at a long distance",
}

VERB_SYNONYMS = {"Track": ("Focus on", "Keep an eye on", "Pursue")}
DISTANCE_SYNONYMS = {
    "at a long distance": ("from afar",),
    "at a suitable distance": ("nearby",),
    "at a close distance": ("at a close range",),
}
# whole-attribute replacements first, then noun replacements that keep the colour
PHRASE_SYNONYMS = {
    "pedestrian": ("human", "walker"),
    "adult male pedestrian": ("male adult", "man"),
    "adult female pedestrian": ("woman",),
    "child female pedestrian": ("little girl",),
    "child male pedestrian": ("boy",),
}
NOUN_SYNONYMS = {
    "vehicle": ("auto", "automobile"),
    "motorcycle": ("motorbike",),
    "bicycle": ("pedal cycle", "cycle"),
}

_TIER_OF_PHRASE = {p: t for t, p in DISTANCE_PHRASES.items()}
for _base, _alts in DISTANCE_SYNONYMS.items():
    for _alt in _alts:
        _TIER_OF_PHRASE[_alt] = _TIER_OF_PHRASE[_base]

_PEDESTRIAN_WORDS = {"pedestrian", "human", "walker", "man", "woman", "boy", "little girl", "male adult"}
_TWO_WHEELER_WORDS = {"bicycle", "motorcycle", "motorbike", "pedal cycle", "cycle"}

SUBSTITUTION_KINDS = ("none", "verb", "object", "distance")


@dataclass(frozen=True)
class PromptSpec:
    verb: str
    target_attribute: str
    distance_constraint: str
    split: str = "seen"
    substitution_kind: str = "none"
    base: str | None = None

    def __post_init__(self):
        if self.split not in ("seen", "unseen"):
            raise ValueError(f"split must be seen or unseen, got {self.split!r}")
        if self.substitution_kind not in SUBSTITUTION_KINDS:
            raise ValueError(f"unknown substitution kind {self.substitution_kind!r}")
        if (self.split == "seen") != (self.substitution_kind == "none"):
            raise ValueError("seen prompts carry no substitution and unseen prompts always do")

    @property
    def text(self) -> str:
        return f"{self.verb} the {self.target_attribute} {self.distance_constraint}."

    @property
    def tier(self) -> str:
        return _TIER_OF_PHRASE[self.distance_constraint]

    @property
    def target_class(self) -> str:
        attr = self.target_attribute
        if attr in _PEDESTRIAN_WORDS or attr.endswith("pedestrian"):
            return "pedestrian"
        if any(attr == w or attr.endswith(" " + w) for w in _TWO_WHEELER_WORDS):
            return "two_wheeler"
        return "vehicle"


def seen_prompt(attribute: str, tier: str) -> PromptSpec:
    return PromptSpec(BASE_VERB, attribute, DISTANCE_PHRASES[tier])


def _split_attribute(attr: str) -> tuple[str, str]:
    """``(colour prefix, noun)``; the prefix is empty for uncoloured attributes."""
    for noun in VEHICLE_NOUNS:
        if attr == noun:
            return "", noun
        if attr.endswith(" " + noun):
            return attr[: -len(noun) - 1], noun
    return "", attr


def _object_options(attr: str) -> list[str]:
    if attr in PHRASE_SYNONYMS:
        return list(PHRASE_SYNONYMS[attr])
    color, noun = _split_attribute(attr)
    if noun in NOUN_SYNONYMS:
        return [f"{color} {alt}".strip() for alt in NOUN_SYNONYMS[noun]]
    return []


def block_options(base: PromptSpec, kind: str) -> list[str]:
    """Synonyms available for one block of a seen prompt."""
    if kind == "verb":
        return list(VERB_SYNONYMS.get(base.verb, ()))
    if kind == "object":
        return _object_options(base.target_attribute)
    if kind == "distance":
        return list(DISTANCE_SYNONYMS.get(base.distance_constraint, ()))
    raise ValueError(f"unknown block kind {kind!r}")


def apply_block(base: PromptSpec, kind: str, replacement: str) -> PromptSpec:
    if base.split != "seen":
        raise ValueError("substitution needs a seen base prompt")
    options = block_options(base, kind)
    if replacement not in options:
        raise ValueError(f"{replacement!r} is not a {kind} synonym for {base.text!r}")
    field_name = {"verb": "verb", "object": "target_attribute", "distance": "distance_constraint"}[kind]
    return replace(base, **{field_name: replacement}, split="unseen", substitution_kind=kind, base=base.text)


def substitute_block(base: PromptSpec, kind: str, rng) -> PromptSpec:
    """Replace exactly one block of ``base`` with a synonym drawn from ``rng``."""
    options = block_options(base, kind)
    if not options:
        raise ValueError(f"no {kind} synonym for {base.text!r}")
    return apply_block(base, kind, options[int(rng.integers(len(options)))])


# Reference unseen prompts as (kind, base attribute, base tier, replacement).
ZERO_SHOT_TABLE = (
    ("verb", "child male pedestrian", "far", "Focus on"),
    ("verb", "red bicycle", "far", "Keep an eye on"),
    ("verb", "vehicle", "far", "Focus on"),
    ("verb", "child female pedestrian", "far", "Focus on"),
    ("verb", "black motorcycle", "suitable", "Pursue"),
    ("verb", "orange motorcycle", "far", "Pursue"),
    ("verb", "orange motorcycle", "suitable", "Pursue"),
    ("verb", "red bicycle", "suitable", "Focus on"),
    ("verb", "child female pedestrian", "suitable", "Focus on"),
    ("verb", "child male pedestrian", "suitable", "Keep an eye on"),
    ("verb", "black motorcycle", "far", "Pursue"),
    ("verb", "black vehicle", "suitable", "Pursue"),
    ("verb", "pedestrian", "far", "Keep an eye on"),
    ("verb", "adult female pedestrian", "far", "Focus on"),
    ("object", "black vehicle", "far", "black auto"),
    ("object", "adult male pedestrian", "far", "male adult"),
    ("object", "green motorcycle", "far", "green motorbike"),
    ("object", "child female pedestrian", "far", "little girl"),
    ("object", "black motorcycle", "far", "black motorbike"),
    ("object", "dark blue vehicle", "suitable", "dark blue auto"),
    ("object", "pedestrian", "suitable", "human"),
    ("object", "dark red vehicle", "suitable", "dark red automobile"),
    ("object", "blue bicycle", "far", "blue pedal cycle"),
    ("object", "pedestrian", "suitable", "walker"),
    ("object", "light gray vehicle", "suitable", "light gray auto"),
    ("object", "adult male pedestrian", "suitable", "man"),
    ("object", "child male pedestrian", "suitable", "boy"),
    ("object", "dark red vehicle", "suitable", "dark red automobile"),
    ("object", "red bicycle", "far", "red cycle"),
    ("object", "adult female pedestrian", "suitable", "woman"),
    ("object", "child male pedestrian", "far", "boy"),
    ("distance", "adult female pedestrian", "suitable", "nearby"),
    ("distance", "adult male pedestrian", "close", "at a close range"),
    ("distance", "orange motorcycle", "suitable", "nearby"),
    ("distance", "blue bicycle", "suitable", "nearby"),
    ("distance", "black vehicle", "close", "at a close range"),
    ("distance", "red bicycle", "suitable", "nearby"),
    ("distance", "dark gray motorcycle", "close", "at a close range"),
    ("distance", "dark red vehicle", "far", "from afar"),
    ("distance", "white vehicle", "suitable", "nearby"),
)

N_SEEN = 136
N_UNSEEN = 40


def attribute_pool() -> list[str]:
    peds = ["pedestrian"] + [pedestrian_phrase(a, g) for a, g in product(AGES, GENDERS)]
    colored = [f"{c} {n}" for n, c in product(VEHICLE_NOUNS, COLOR_WORDS)]
    return peds + ["vehicle"] + colored


def generate_vocabulary(seed: int = 0) -> list[PromptSpec]:
    """136 seen prompts followed by 40 unseen ones.

    The seen set always contains every pedestrian prompt and every base of the
    reference unseen table; the remainder is a seeded draw from the template
    expansion.  Repeated unseen entries are replaced by a fresh seeded object
    substitution so all 176 strings stay distinct.
    """
    rng = np.random.default_rng(seed)
    pool = [seen_prompt(a, t) for a, t in product(attribute_pool(), DISTANCE_PHRASES)]
    required = [p for p in pool if p.target_class == "pedestrian"]
    required += [seen_prompt(attr, tier) for _, attr, tier, _ in ZERO_SHOT_TABLE]
    seen = list(dict.fromkeys(required))
    rest = [p for p in pool if p not in set(seen)]
    order = rng.permutation(len(rest))
    seen += [rest[i] for i in order[: N_SEEN - len(seen)]]
    seen_set = set(seen)

    unseen, texts = [], set()
    for kind, attr, tier, replacement in ZERO_SHOT_TABLE:
        u = apply_block(seen_prompt(attr, tier), kind, replacement)
        while u.text in texts:
            candidates = [p for p in seen if block_options(p, kind)]
            u = substitute_block(candidates[int(rng.integers(len(candidates)))], kind, rng)
        unseen.append(u)
        texts.add(u.text)
    assert len(seen_set) == N_SEEN and len(unseen) == N_UNSEEN
    return seen + unseen


def prompts_for(vocab, target_class: str, tier: str, split: str = "seen") -> list[PromptSpec]:
    return [p for p in vocab if p.split == split and p.target_class == target_class and p.tier == tier]


def write_prompt_list(path, vocab) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(p.text + "\n" for p in vocab))


def write_task_table(path, vocab) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, p in enumerate(vocab):
            row = {"id": i, "text": p.text, "split": p.split, "substitution_kind": p.substitution_kind}
            fh.write(json.dumps(row) + "\n")


PAD, UNK = "<pad>", "<unk>"
MAX_TEXT_LEN = 16
_WORD = re.compile(r"[a-z0-9]+")


def words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[:2] != (PAD, UNK):
            raise ValueError("vocab must start with the pad and unknown tokens")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def id(self, word: str) -> int:
        return self._index.get(word, 1)

    @classmethod
    def build(cls, texts) -> "Vocab":
        found = sorted({w for t in texts for w in words(t)})
        return cls((PAD, UNK, *found))


def default_vocab(seed: int = 0) -> Vocab:
    return Vocab.build(p.text for p in generate_vocabulary(seed))


@dataclass(frozen=True)
class Instruction:
    text: str
    token_ids: tuple[int, ...]

    @property
    def mask(self) -> np.ndarray:
        return np.array(self.token_ids) != 0


def tokenize(text: str, vocab: Vocab, max_len: int = MAX_TEXT_LEN) -> Instruction:
    ids = [vocab.id(w) for w in words(text)][:max_len]
    return Instruction(text, tuple(ids + [0] * (max_len - len(ids))))
