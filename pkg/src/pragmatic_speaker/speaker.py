"""Literal speaker: candidate utterances grounded in the target scene."""

from dataclasses import dataclass
from typing import Tuple

from .scenes import Scene
from .taxonomy import Taxonomy, hypernym_of

BEAM_SIZE = 30

WORD = "word"
SENTENCE = "sentence"
MODES = (WORD, SENTENCE)


@dataclass(frozen=True)
class Utterance:
    tokens: Tuple[str, ...]
    mode: str = WORD

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.mode == WORD and len(self.tokens) != 1:
            raise ValueError("word utterances carry exactly one token")
        if self.mode == SENTENCE and not 1 <= len(self.tokens) <= 2:
            raise ValueError("sentence utterances carry one or two content tokens")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def surface(self):
        if self.mode == WORD:
            return self.tokens[0]
        return "there is a " + " and a ".join(self.tokens)

    def __str__(self):
        return self.surface


@dataclass(frozen=True)
class CandidateSet:
    candidates: Tuple[Utterance, ...]
    source_scene_id: int

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]


def _word_tokens(target: Scene, tax: Taxonomy):
    objects = sorted(target.objects)
    hypernyms = sorted({hypernym_of(o, tax) for o in objects})
    return objects + hypernyms


def word_candidates(target: Scene, tax: Taxonomy, beam_size: int = BEAM_SIZE) -> CandidateSet:
    tokens = _word_tokens(target, tax)[:beam_size]
    return CandidateSet(tuple(Utterance((w,), WORD) for w in tokens), target.id)


def sentence_candidates(target: Scene, tax: Taxonomy, beam_size: int = BEAM_SIZE) -> CandidateSet:
    """Template captions: "there is a <x>" first, then "there is a <x> and a <y>".

    Two-token captions enumerate ordered pairs (x, y), x != y, in the order
    of the word candidates.
    """
    words = _word_tokens(target, tax)
    out = [Utterance((w,), SENTENCE) for w in words]
    for x in words:
        if len(out) >= beam_size:
            break
        out.extend(Utterance((x, y), SENTENCE) for y in words if y != x)
    return CandidateSet(tuple(out[:beam_size]), target.id)


def candidates_for(target: Scene, tax: Taxonomy, mode: str = WORD) -> CandidateSet:
    if mode == WORD:
        return word_candidates(target, tax)
    if mode == SENTENCE:
        return sentence_candidates(target, tax)
    raise ValueError(f"unknown mode {mode!r}")
