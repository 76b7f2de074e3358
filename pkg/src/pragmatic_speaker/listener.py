"""Rational listener and disparity listeners.

Listeners ground an utterance by exact symbolic matching: an object token
matches itself, a hypernym token matches every perceived object of its
category. Disparities act in two places, perception (which objects are seen)
and interpretation (which tokens are understood; the rest become ``[UNK]``).
"""

from dataclasses import dataclass
from typing import FrozenSet

from .scenes import Scene
from .taxonomy import HYPERNYMS, Taxonomy, in_category

UNK = "[UNK]"

FULL = "full"
HYPERNYM_ONLY = "hypernym"
LIMITED_VISUAL = "limited_visual"
KINDS = (FULL, HYPERNYM_ONLY, LIMITED_VISUAL)


@dataclass(frozen=True)
class ListenerProfile:
    kind: str = FULL
    blocked_categories: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "blocked_categories", frozenset(self.blocked_categories))
        if self.kind not in KINDS:
            raise ValueError(f"unknown listener kind {self.kind!r}")
        if self.blocked_categories and self.kind != LIMITED_VISUAL:
            raise ValueError("only limited-visual listeners block categories")
        unknown = self.blocked_categories - set(HYPERNYMS)
        if unknown:
            raise ValueError(f"unknown categories {sorted(unknown)}")

    @classmethod
    def full(cls):
        return cls(FULL)

    @classmethod
    def hypernym_only(cls):
        return cls(HYPERNYM_ONLY)

    @classmethod
    def limited_visual(cls, blocked=("animal",)):
        return cls(LIMITED_VISUAL, frozenset(blocked))

    def to_dict(self):
        return {"kind": self.kind, "blocked_categories": sorted(self.blocked_categories)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], frozenset(d.get("blocked_categories", ())))


@dataclass(frozen=True)
class Choice:
    picked: int
    tie: bool


def perceive(scene: Scene, profile: ListenerProfile, tax: Taxonomy) -> FrozenSet[str]:
    """Objects the listener actually sees. May be empty."""
    if profile.kind != LIMITED_VISUAL:
        return scene.objects
    return frozenset(o for o in scene.objects
                     if tax.mapping[o] not in profile.blocked_categories)


def interpret_token(token: str, profile: ListenerProfile, tax: Taxonomy) -> str:
    if token not in tax:
        return UNK
    if profile.kind == HYPERNYM_ONLY:
        return token if tax.is_hypernym(token) else UNK
    if profile.kind == LIMITED_VISUAL:
        if any(in_category(token, c, tax) for c in profile.blocked_categories):
            return UNK
    return token


def ground(utt, scene: Scene, profile: ListenerProfile, tax: Taxonomy) -> int:
    """Count of (token, perceived object) matches."""
    seen = perceive(scene, profile, tax)
    score = 0
    for w in utt.tokens:
        w = interpret_token(w, profile, tax)
        if w == UNK:
            continue
        if w in seen:
            score += 1
        elif tax.is_hypernym(w):
            score += sum(1 for o in seen if tax.mapping[o] == w)
    return score


def choose(utt, pair, profile: ListenerProfile, rng, tax: Taxonomy) -> Choice:
    s0 = ground(utt, pair.scene_a, profile, tax)
    s1 = ground(utt, pair.scene_b, profile, tax)
    if s0 == s1:
        return Choice(int(rng.integers(2)), True)
    return Choice(0 if s0 > s1 else 1, False)


def reward(choice: Choice, target: int) -> int:
    return 1 if choice.picked == target else -1
