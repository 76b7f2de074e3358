"""Symbolic scenes, scene pairs and split datasets.

A scene is a set of inventory objects. A pair holds a target and a
distractor built by mutating the target; pairs whose object sets differ by
at most four objects are Hard, the rest Easy.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import FrozenSet, List, Optional

import numpy as np

from .taxonomy import Taxonomy

MAX_OBJECTS = 9
HARD_MAX_DIFF = 4
FORMAT_VERSION = 1

HARD = "Hard"
EASY = "Easy"
DIFFICULTIES = (HARD, EASY)


class ConfigError(ValueError):
    """Invalid or unsatisfiable generation settings."""


class InvalidPairError(ValueError):
    pass


class DatasetParseError(ValueError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Scene:
    id: int
    objects: FrozenSet[str]

    def __post_init__(self):
        object.__setattr__(self, "objects", frozenset(self.objects))
        if not 1 <= len(self.objects) <= MAX_OBJECTS:
            raise ValueError(f"scene {self.id} has {len(self.objects)} objects")

    def tokens(self):
        return sorted(self.objects)


@dataclass(frozen=True)
class ScenePair:
    id: int
    scene_a: Scene
    scene_b: Scene
    target: int
    difficulty: str

    @property
    def scenes(self):
        return (self.scene_a, self.scene_b)

    @property
    def target_scene(self):
        return self.scenes[self.target]

    @property
    def distractor_scene(self):
        return self.scenes[1 - self.target]

    @property
    def difference(self):
        return len(self.scene_a.objects ^ self.scene_b.objects)


@dataclass(frozen=True)
class GenerationConfig:
    size_min: int = 6
    size_max: int = 7
    easy_max_diff: int = 8
    # distractor must drop at least one target object, so the target is never
    # a subset of the distractor and some description always separates them
    require_unique_target: bool = True

    def validate(self):
        if not 1 <= self.size_min <= self.size_max:
            raise ConfigError(f"need 1 <= size_min <= size_max, got {self.size_min}, {self.size_max}")
        if self.size_max > MAX_OBJECTS:
            raise ConfigError(f"size_max {self.size_max} exceeds {MAX_OBJECTS}")
        if self.easy_max_diff <= HARD_MAX_DIFF:
            raise ConfigError("easy_max_diff must exceed the Hard threshold")


@dataclass
class Dataset:
    train: List[ScenePair]
    val: List[ScenePair]
    test: List[ScenePair]
    seed: int
    config: dict = field(default_factory=dict)

    def splits(self):
        return {"train": self.train, "val": self.val, "test": self.test}


def classify_difficulty(pair: ScenePair) -> str:
    d = len(pair.scene_a.objects ^ pair.scene_b.objects)
    if d == 0:
        raise InvalidPairError(f"pair {pair.id}: scenes are identical")
    return HARD if d <= HARD_MAX_DIFF else EASY


def generate_scene(rng: np.random.Generator, size_min: int, size_max: int,
                   tax: Taxonomy, scene_id: int = 0) -> Scene:
    GenerationConfig(size_min, size_max).validate()
    inventory = tax.objects
    n = int(rng.integers(size_min, size_max + 1))
    picks = rng.choice(len(inventory), size=n, replace=False)
    return Scene(scene_id, frozenset(inventory[i] for i in picks))


def _mutation_plans(n_t, difficulty, config, n_inventory):
    """All (d, n_d, removed, added) reachable from a target of size n_t."""
    if difficulty == HARD:
        diffs = range(1, HARD_MAX_DIFF + 1)
    else:
        diffs = range(HARD_MAX_DIFF + 1, config.easy_max_diff + 1)
    plans = {}
    for d in diffs:
        for n_d in range(config.size_min, config.size_max + 1):
            if (d + n_t - n_d) % 2:
                continue
            removed = (d + n_t - n_d) // 2
            added = d - removed
            min_removed = 1 if config.require_unique_target else 0
            if min_removed <= removed <= n_t and 0 <= added <= n_inventory - n_t:
                plans.setdefault(d, []).append((n_d, removed, added))
    return plans


def generate_pair(rng: np.random.Generator, difficulty: str, config: GenerationConfig,
                  tax: Taxonomy, pair_id: int = 0) -> ScenePair:
    """Build a target scene and a distractor at the requested difficulty.

    The distractor is the target with ``removed`` objects dropped and
    ``added`` fresh ones drawn in. Among distractor sizes reaching the drawn
    difference, the one closest to the target size wins, so most of the
    difference comes from swaps.
    """
    if difficulty not in DIFFICULTIES:
        raise ConfigError(f"unknown difficulty {difficulty!r}")
    config.validate()
    inventory = tax.objects
    target = generate_scene(rng, config.size_min, config.size_max, tax)
    plans = _mutation_plans(len(target.objects), difficulty, config, len(inventory))
    if not plans:
        raise ConfigError(
            f"cannot build a {difficulty} pair with scene sizes "
            f"[{config.size_min}, {config.size_max}]")
    diffs = sorted(plans)
    d = diffs[int(rng.integers(len(diffs)))]
    n_d, removed, added = min(plans[d], key=lambda p: (abs(p[0] - len(target.objects)), p[0]))

    kept = sorted(target.objects)
    drop = set(rng.choice(len(kept), size=removed, replace=False).tolist()) if removed else set()
    outside = [o for o in inventory if o not in target.objects]
    new = [outside[i] for i in rng.choice(len(outside), size=added, replace=False)] if added else []
    distractor_objects = frozenset([o for i, o in enumerate(kept) if i not in drop] + new)

    t = int(rng.integers(2))
    a, b = (target.objects, distractor_objects) if t == 0 else (distractor_objects, target.objects)
    pair = ScenePair(pair_id, Scene(2 * pair_id, a), Scene(2 * pair_id + 1, b), t, difficulty)
    assert classify_difficulty(pair) == difficulty
    return pair


def split_sizes(n):
    """8:1:1 split sizes with rounding remainders going to train."""
    n_val = n // 10
    return n - 2 * n_val, n_val, n_val


def assemble_dataset(rng: np.random.Generator, n_pairs: int, hard_fraction: float = 0.58,
                     config: Optional[GenerationConfig] = None, tax: Taxonomy = None,
                     seed: Optional[int] = None) -> Dataset:
    """Generate ``n_pairs`` distinct pairs and split them 8:1:1.

    ``rng`` may be an integer seed, in which case it is recorded on the
    dataset.
    """
    from .taxonomy import load_taxonomy

    if n_pairs < 10:
        raise ConfigError(f"n_pairs must be at least 10, got {n_pairs}")
    if not 0.0 <= hard_fraction <= 1.0:
        raise ConfigError(f"hard_fraction must be in [0, 1], got {hard_fraction}")
    config = config or GenerationConfig()
    config.validate()
    tax = tax or load_taxonomy()
    if isinstance(rng, (int, np.integer)):
        seed = int(rng) if seed is None else seed
        rng = np.random.default_rng(seed)

    n_hard = int(round(n_pairs * hard_fraction))
    kinds = [HARD] * n_hard + [EASY] * (n_pairs - n_hard)
    order = rng.permutation(n_pairs)
    seen = set()
    pairs = []
    for pair_id, k in enumerate(order):
        difficulty = kinds[k]
        for _ in range(1000):
            pair = generate_pair(rng, difficulty, config, tax, pair_id=pair_id)
            key = (pair.scene_a.objects, pair.scene_b.objects)
            if key not in seen:
                break
        else:
            raise ConfigError("could not draw enough distinct pairs")
        seen.add(key)
        pairs.append(pair)

    n_train, n_val, _ = split_sizes(n_pairs)
    return Dataset(
        train=pairs[:n_train],
        val=pairs[n_train:n_train + n_val],
        test=pairs[n_train + n_val:],
        seed=seed,
        config={"n_pairs": n_pairs, "hard_fraction": hard_fraction, **asdict(config)},
    )


def _pair_record(pair, split):
    return {
        "id": pair.id,
        "scene_a": pair.scene_a.tokens(),
        "scene_b": pair.scene_b.tokens(),
        "target": pair.target,
        "difficulty": pair.difficulty,
        "split": split,
    }


def dumps_dataset(ds: Dataset) -> str:
    lines = [json.dumps({"format_version": FORMAT_VERSION, "seed": ds.seed,
                         "config": ds.config}, sort_keys=True)]
    for split, pairs in ds.splits().items():
        lines.extend(json.dumps(_pair_record(p, split), sort_keys=True) for p in pairs)
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


def loads_dataset(text: str) -> Dataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    else:
        raise DatasetParseError(len(lines), "file does not end with a newline (truncated?)")
    if not lines:
        raise DatasetParseError(1, "missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DatasetParseError(1, f"bad header: {e}") from None
    if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
        raise DatasetParseError(1, "missing or unsupported format_version")

    splits = {"train": [], "val": [], "test": []}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            split = rec["split"]
            pair = ScenePair(
                rec["id"],
                Scene(2 * rec["id"], frozenset(rec["scene_a"])),
                Scene(2 * rec["id"] + 1, frozenset(rec["scene_b"])),
                rec["target"],
                rec["difficulty"],
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DatasetParseError(lineno, f"bad pair record: {e}") from None
        if split not in splits:
            raise DatasetParseError(lineno, f"unknown split {split!r}")
        if pair.target not in (0, 1):
            raise DatasetParseError(lineno, f"bad target {pair.target!r}")
        try:
            if classify_difficulty(pair) != pair.difficulty:
                raise DatasetParseError(lineno, "difficulty does not match the scenes")
        except InvalidPairError as e:
            raise DatasetParseError(lineno, str(e)) from None
        splits[split].append(pair)
    return Dataset(seed=header.get("seed"), config=header.get("config", {}), **splits)


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))
