import numpy as np
import pytest
from hypothesis import given, strategies as st

from pragmatic_speaker.listener import (UNK, Choice, ListenerProfile, choose, ground,
                                        interpret_token, perceive, reward)
from pragmatic_speaker.scenes import Scene, ScenePair
from pragmatic_speaker.speaker import Utterance
from pragmatic_speaker.taxonomy import load_taxonomy

TAX = load_taxonomy()
FULL = ListenerProfile.full()
HYP = ListenerProfile.hypernym_only()
LV = ListenerProfile.limited_visual()


def W(tok):
    return Utterance((tok,))


def pair(target, distractor, t=0):
    a, b = (target, distractor) if t == 0 else (distractor, target)
    return ScenePair(0, Scene(0, a), Scene(1, b), t, "Hard")


def test_profile_validation():
    with pytest.raises(ValueError):
        ListenerProfile("hypernym", frozenset({"animal"}))
    with pytest.raises(ValueError):
        ListenerProfile.limited_visual({"mammal"})
    assert LV.blocked_categories == {"animal"}


def test_perceive():
    assert perceive(Scene(0, {"owl", "pizza"}), LV, TAX) == {"pizza"}
    assert perceive(Scene(0, {"owl", "pizza"}), FULL, TAX) == {"owl", "pizza"}
    assert perceive(Scene(0, {"bear", "cat"}), LV, TAX) == frozenset()


def test_interpret_token():
    assert interpret_token("pizza", HYP, TAX) == UNK
    assert interpret_token("food", HYP, TAX) == "food"
    assert interpret_token("dog", LV, TAX) == UNK
    assert interpret_token("animal", LV, TAX) == UNK
    assert interpret_token("pizza", LV, TAX) == "pizza"
    assert interpret_token("pizza", FULL, TAX) == "pizza"
    assert interpret_token("spaceship", FULL, TAX) == UNK


def test_ground_examples():
    assert ground(W("food"), Scene(0, {"pizza", "pie", "sun"}), FULL, TAX) == 2
    assert ground(W("pizza"), Scene(0, {"pizza", "sun"}), FULL, TAX) == 1
    assert ground(W("pizza"), Scene(0, {"pizza", "sun"}), HYP, TAX) == 0
    assert ground(Utterance(("pizza", "food"), "sentence"), Scene(0, {"pizza", "pie"}), FULL, TAX) == 3


def test_choose_examples():
    rng = np.random.default_rng(0)
    c = choose(W("pizza"), pair({"pizza", "owl"}, {"owl"}, t=1), FULL, rng, TAX)
    assert c == Choice(1, False)
    c = choose(W("food"), pair({"pizza", "owl"}, {"owl", "sun"}), HYP, rng, TAX)
    assert c == Choice(0, False)
    c = choose(W("pizza"), pair({"pizza", "owl"}, {"owl"}), HYP, rng, TAX)
    assert c.tie


def test_reward():
    assert reward(Choice(1, False), 1) == 1
    assert reward(Choice(0, False), 1) == -1
    assert reward(Choice(0, True), 0) in (-1, 1)


objsets = st.frozensets(st.sampled_from(TAX.objects), min_size=1, max_size=9)
scenes = objsets.map(lambda o: Scene(0, o))
utts = st.sampled_from(TAX.vocabulary).map(W)


@given(utts, scenes)
def test_disparity_monotone(u, scene):
    full = ground(u, scene, FULL, TAX)
    assert ground(u, scene, HYP, TAX) <= full
    assert ground(u, scene, LV, TAX) <= full
    assert 0 <= full <= len(scene.objects) * len(u.tokens)


@given(objsets, objsets, st.integers(0, 1), st.data())
def test_full_listener_soundness(target, distractor, t, data):
    only = sorted(target - distractor)
    if not only:
        return
    tok = data.draw(st.sampled_from(only))
    c = choose(W(tok), pair(target, distractor, t), FULL, np.random.default_rng(0), TAX)
    assert c == Choice(t, False)


@given(utts, objsets, objsets, st.integers(0, 2**31))
def test_rng_only_on_ties(u, a, b, seed):
    p = ScenePair(0, Scene(0, a), Scene(1, b), 0, "Hard")
    c1 = choose(u, p, FULL, np.random.default_rng(seed), TAX)
    c2 = choose(u, p, FULL, np.random.default_rng(seed + 1), TAX)
    if not c1.tie:
        assert c1 == c2
