"""Fixed object inventory and its hyponym -> hypernym map.

The table covers 70 clip-art objects in 8 categories. Multiword names use
underscores so every token is a single whitespace-free unit.
"""

from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional, Union

HYPERNYMS = (
    "boy",
    "girl",
    "clothing",
    "large_objects",
    "toys",
    "food",
    "sky_objects",
    "animal",
)

_TABLE = {
    "boy": ("mike_reach", "mike_kick", "mike_run", "mike_sit",
            "mike_fall_over", "mike_wave", "mike_up"),
    "girl": ("jenny_reach", "jenny_kick", "jenny_run", "jenny_sit",
             "jenny_fall_over", "jenny_wave", "jenny_up"),
    "clothing": ("blue_hat", "crown", "chef_hat", "pirate_hat", "sweater_hat",
                 "silly_hat", "wizzard_hat", "horn_hat", "glasses",
                 "sunglasses"),
    # bee is listed with the large objects in the source table; kept as is.
    "large_objects": ("bee", "slide", "sand", "grill", "swing", "tent",
                      "bench", "christmas_tree", "tree", "apple_tree"),
    "toys": ("baseball", "glove", "shovel", "racket", "kite", "fire", "bucket",
             "colorful_ball", "basketball", "soccer", "tennis_ball",
             "football", "frisbee", "baseball_poll", "balloon"),
    "food": ("pie", "pizza", "hotdog", "ketchup", "mustard", "burger", "coke"),
    "sky_objects": ("helicopter", "hotair_balloon", "cloud", "sun",
                    "lightening", "rain", "rocket", "plane"),
    "animal": ("bear", "cat", "dog", "duck", "owl", "snake"),
}

CATEGORY_SIZES = {
    "boy": 7, "girl": 7, "clothing": 10, "large_objects": 10,
    "toys": 15, "food": 7, "sky_objects": 8, "animal": 6,
}

DATA_FILE = Path(__file__).with_name("data") / "taxonomy.tsv"


class TaxonomyError(ValueError):
    """Raised for a corrupt taxonomy table."""


class UnknownTokenError(KeyError):
    """Raised when a token is neither an inventory object nor a hypernym."""


@dataclass(frozen=True)
class Taxonomy:
    mapping: Mapping[str, str]
    inverse: Mapping[str, frozenset] = field(init=False)

    def __post_init__(self):
        inverse = {h: set() for h in HYPERNYMS}
        for obj, hyp in self.mapping.items():
            inverse[hyp].add(obj)
        object.__setattr__(self, "mapping", MappingProxyType(dict(self.mapping)))
        object.__setattr__(
            self, "inverse",
            MappingProxyType({h: frozenset(v) for h, v in inverse.items()}))

    @property
    def objects(self):
        """Inventory objects in sorted order."""
        return sorted(self.mapping)

    @property
    def hypernyms(self):
        return list(HYPERNYMS)

    @property
    def vocabulary(self):
        """Communication vocabulary: sorted objects followed by sorted hypernyms."""
        return self.objects + sorted(HYPERNYMS)

    def is_object(self, token: str) -> bool:
        return token in self.mapping

    def is_hypernym(self, token: str) -> bool:
        return token in self.inverse

    def __contains__(self, token) -> bool:
        return token in self.mapping or token in self.inverse


def default_rows():
    """Rows of the compiled-in table, in file order."""
    return [(obj, hyp) for hyp in HYPERNYMS for obj in _TABLE[hyp]]


def render_table(rows=None) -> str:
    rows = default_rows() if rows is None else rows
    return "".join(f"{obj}\t{hyp}\n" for obj, hyp in rows)


def _parse_table(text: str, source: str):
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split("\t")
        if len(parts) != 2 or not all(parts):
            raise TaxonomyError(f"{source}:{lineno}: expected 'object<TAB>hypernym', got {line!r}")
        obj, hyp = parts
        if any(c.isspace() for c in obj) or obj != obj.lower():
            raise TaxonomyError(f"{source}:{lineno}: bad object token {obj!r}")
        if hyp not in HYPERNYMS:
            raise TaxonomyError(f"{source}:{lineno}: unknown hypernym {hyp!r}")
        if obj in HYPERNYMS:
            raise TaxonomyError(f"{source}:{lineno}: object {obj!r} collides with a hypernym")
        rows.append((lineno, obj, hyp))
    return rows


def _validate(mapping):
    sizes = {h: 0 for h in HYPERNYMS}
    for hyp in mapping.values():
        sizes[hyp] += 1
    if sizes != CATEGORY_SIZES:
        raise TaxonomyError(f"category sizes {sizes} do not match {CATEGORY_SIZES}")


def load_taxonomy(path: Optional[Union[str, Path]] = None) -> Taxonomy:
    """Load the taxonomy, from the compiled-in table or from a TSV file."""
    if path is None:
        mapping = dict(default_rows())
    else:
        path = Path(path)
        mapping = {}
        for lineno, obj, hyp in _parse_table(path.read_text(encoding="utf-8"), str(path)):
            if obj in mapping:
                raise TaxonomyError(f"{path}:{lineno}: duplicate object {obj!r}")
            mapping[obj] = hyp
    _validate(mapping)
    return Taxonomy(mapping)


def hypernym_of(token: str, tax: Taxonomy) -> str:
    if token in tax.inverse:
        return token
    try:
        return tax.mapping[token]
    except KeyError:
        raise UnknownTokenError(token) from None


def in_category(token: str, category: str, tax: Taxonomy) -> bool:
    if category not in tax.inverse:
        raise UnknownTokenError(category)
    if token == category:
        return True
    return tax.mapping.get(token) == category
