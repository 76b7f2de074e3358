"""Experiment orchestration: training repeats, speaker evaluation and reports."""

import csv
import io
import json
import logging
import math
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .listener import FULL, ListenerProfile, choose, reward
from .pragmatic import (EVAL, DisparityPolicy, TrainConfig, TrainingHistory, compile_pairs,
                        pragmatic_select, rational_select, train)
from .scenes import EASY, HARD, ConfigError, Dataset, GenerationConfig, assemble_dataset
from .speaker import MODES, candidates_for
from .taxonomy import Taxonomy, in_category, load_taxonomy

log = logging.getLogger(__name__)

SPEAKERS = ("S0", "S1", "S1d", "S1nd")
SLICES = (HARD, EASY, "Combined")
DISPARITIES = ("hypernym", "limited_visual")
DEFAULT_RATIOS = ((8, 1), (4, 1), (2, 1), (1, 1), (1, 2), (1, 4), (1, 8))


def listener_for(disparity: str) -> ListenerProfile:
    if disparity == "hypernym":
        return ListenerProfile.hypernym_only()
    if disparity == "limited_visual":
        return ListenerProfile.limited_visual()
    if disparity == "none":
        return ListenerProfile.full()
    raise ConfigError(f"unknown disparity {disparity!r}")


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_pairs: int = 2000
    hard_fraction: float = 0.58
    mode: str = "word"
    disparity: str = "hypernym"
    lambda_l: float = 1.0
    lambda_d: float = 1.0
    epochs: Optional[int] = None
    batch_size: int = 128
    lr_0: Optional[float] = None
    lr_scale: Optional[float] = None
    patience: Optional[int] = None
    decay: float = 0.8
    n_repeats: int = 3

    def __post_init__(self):
        self.disparity = self.disparity.replace("-", "_")
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.disparity not in DISPARITIES + ("none",):
            raise ConfigError(f"disparity must be one of {DISPARITIES}, got {self.disparity!r}")
        if self.n_repeats < 1:
            raise ConfigError("n_repeats must be at least 1")
        if self.n_pairs < 10:
            raise ConfigError("n_pairs must be at least 10")
        if not 0 <= self.hard_fraction <= 1:
            raise ConfigError("hard_fraction must lie in [0, 1]")
        if self.lambda_l < 0 or self.lambda_d < 0:
            raise ConfigError("lambda exponents must be non-negative")
        self.train_config(0).validate()

    def train_config(self, repeat: int) -> TrainConfig:
        return TrainConfig.for_mode(
            self.mode, epochs=self.epochs, batch_size=self.batch_size, lr=self.lr_0,
            lr_scale=self.lr_scale, patience=self.patience, decay=self.decay,
            lambda_l=self.lambda_l, lambda_d=self.lambda_d, seed=self.seed + repeat)

    @property
    def listener(self):
        return listener_for(self.disparity)

    @classmethod
    def from_file(cls, path, **overrides):
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a flat key/value document")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        return cls.from_dict({**data, **{k: v for k, v in overrides.items() if v is not None}})

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self):
        return asdict(self)


# -- evaluation ----------------------------------------------------------------

@dataclass
class SpeakerRun:
    """Choices and rewards of one speaker on one split."""
    kind: str
    utterances: list
    rewards: List[int]
    difficulties: List[str]

    def accuracy(self) -> Dict[str, float]:
        r = np.array(self.rewards) > 0
        d = np.array(self.difficulties)
        out = {}
        for s in (HARD, EASY):
            sel = r[d == s]
            out[s] = float(sel.mean()) if len(sel) else math.nan
        out["Combined"] = float(r.mean()) if len(r) else math.nan
        return out


def evaluate_speaker(kind: str, pairs, listener_profile: ListenerProfile, tax: Taxonomy,
                     rng: np.random.Generator, policy: Optional[DisparityPolicy] = None,
                     mode: str = "word") -> SpeakerRun:
    """Play every pair once with the given speaker against the real listener.

    S0 picks a random candidate, S1 ranks by a full-knowledge simulated
    listener, S1nd by a simulated listener sharing the real listener's
    disparity, S1d by the trained policy.
    """
    if kind not in SPEAKERS:
        raise ConfigError(f"unknown speaker {kind!r}")
    if kind == "S1d" and policy is None:
        raise ConfigError("S1d needs a trained policy")
    full = ListenerProfile(FULL)
    utts, rewards = [], []
    for pair in pairs:
        cands = candidates_for(pair.target_scene, tax, mode)
        if kind == "S0":
            u = cands[int(rng.integers(len(cands)))]
        elif kind == "S1":
            u = rational_select(pair, cands, tax, full)
        elif kind == "S1nd":
            u = rational_select(pair, cands, tax, listener_profile)
        else:
            u = pragmatic_select(pair, cands, policy, EVAL, None, tax, full).utterance
        utts.append(u)
        rewards.append(reward(choose(u, pair, listener_profile, rng, tax), pair.target))
    return SpeakerRun(kind, utts, rewards, [p.difficulty for p in pairs])


# -- reports -------------------------------------------------------------------

def _mean_std(values):
    """Mean and population std, ignoring NaNs."""
    v = np.array([x for x in values if not math.isnan(x)], dtype=float)
    if not len(v):
        return math.nan, math.nan
    return float(v.mean()), float(v.std())


def fmt(x) -> str:
    return f"{x:.6g}"


@dataclass
class AccuracyReport:
    # speaker -> slice -> per-repeat accuracies
    per_repeat: Dict[str, Dict[str, List[float]]]
    n_hard: int
    n_easy: int

    def mean(self, speaker, slice_="Combined"):
        return _mean_std(self.per_repeat[speaker][slice_])[0]

    def std(self, speaker, slice_="Combined"):
        return _mean_std(self.per_repeat[speaker][slice_])[1]

    def rows(self):
        for sp in SPEAKERS:
            if sp not in self.per_repeat:
                continue
            for sl in SLICES:
                m, s = _mean_std(self.per_repeat[sp][sl])
                yield {"speaker": sp, "slice": sl, "mean": m, "std": s}

    csv_columns = ("speaker", "slice", "mean", "std")

    def to_dict(self):
        return {"per_repeat": self.per_repeat, "n_hard": self.n_hard, "n_easy": self.n_easy}

    @classmethod
    def from_dict(cls, d):
        return cls(d["per_repeat"], d["n_hard"], d["n_easy"])


def token_shares(utterances, tax: Taxonomy) -> Dict[str, float]:
    counts = dict.fromkeys(tax.vocabulary, 0)
    for u in utterances:
        for w in u.tokens:
            counts[w] += 1
    total = sum(counts.values())
    return {w: c / total for w, c in counts.items()} if total else {w: 0.0 for w in counts}


def shift_aggregates(freqs: Dict[str, float], tax: Taxonomy) -> Dict[str, float]:
    return {
        "hyponym_share": sum(f for w, f in freqs.items() if tax.is_object(w)),
        "hypernym_share": sum(f for w, f in freqs.items() if tax.is_hypernym(w)),
        "animal_token_share": sum(f for w, f in freqs.items() if in_category(w, "animal", tax)),
    }


@dataclass
class ShiftReport:
    # speaker -> name -> per-repeat values; names are tokens or aggregate keys
    per_repeat: Dict[str, Dict[str, List[float]]]
    aggregates: Tuple[str, ...] = ("hyponym_share", "hypernym_share", "animal_token_share")

    def mean(self, speaker, name):
        return _mean_std(self.per_repeat[speaker][name])[0]

    def frequencies(self, speaker):
        return {k: _mean_std(v)[0] for k, v in self.per_repeat[speaker].items()
                if k not in self.aggregates}

    def rows(self):
        for sp in SPEAKERS:
            if sp not in self.per_repeat:
                continue
            for name, vals in self.per_repeat[sp].items():
                m, s = _mean_std(vals)
                kind = "aggregate" if name in self.aggregates else "token"
                yield {"speaker": sp, "kind": kind, "name": name, "mean": m, "std": s}

    csv_columns = ("speaker", "kind", "name", "mean", "std")

    def to_dict(self):
        return {"per_repeat": self.per_repeat}

    @classmethod
    def from_dict(cls, d):
        return cls(d["per_repeat"])


@dataclass
class GainReport:
    rows_: List[dict]
    csv_columns = ("slice", "vs", "gain", "std")

    def rows(self):
        return iter(self.rows_)

    def to_dict(self):
        return {"rows": self.rows_}

    @classmethod
    def from_dict(cls, d):
        return cls(d["rows"])


@dataclass
class LambdaSweepReport:
    points: List[dict]
    csv_columns = ("lambda_l", "lambda_d", "mean", "std")

    def rows(self):
        for p in self.points:
            yield {k: p[k] for k in self.csv_columns}

    def accuracy(self, lambda_l, lambda_d):
        for p in self.points:
            if (p["lambda_l"], p["lambda_d"]) == (lambda_l, lambda_d):
                return p["mean"]
        raise KeyError((lambda_l, lambda_d))

    def to_dict(self):
        return {"points": self.points}

    @classmethod
    def from_dict(cls, d):
        return cls(d["points"])


def gain_report(acc: AccuracyReport) -> GainReport:
    """S1d minus S1 and S1d minus S1nd per slice, stds added in quadrature."""
    rows = []
    for sl in SLICES:
        for other in ("S1", "S1nd"):
            gain = acc.mean("S1d", sl) - acc.mean(other, sl)
            std = math.hypot(acc.std("S1d", sl), acc.std(other, sl))
            rows.append({"slice": sl, "vs": other, "gain": gain, "std": std})
    return GainReport(rows)


def export(report, fmt_: str, path) -> Path:
    """Write a report as CSV (6 significant digits) or JSON (full precision)."""
    path = Path(path)
    if fmt_ == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=report.csv_columns, lineterminator="\n")
        w.writeheader()
        for row in report.rows():
            w.writerow({k: fmt(v) if isinstance(v, float) else v for k, v in row.items()})
        text = buf.getvalue()
    elif fmt_ == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown export format {fmt_!r}")
    path.write_text(text, encoding="utf-8")
    return path


# -- experiments -----------------------------------------------------------------

@dataclass
class ExperimentResult:
    accuracy: AccuracyReport
    shift: ShiftReport
    policies: List[DisparityPolicy]
    histories: List[TrainingHistory]
    dataset: Dataset


def make_dataset(config: ExperimentConfig, tax: Taxonomy) -> Dataset:
    return assemble_dataset(config.seed, config.n_pairs, config.hard_fraction,
                            GenerationConfig(), tax)


def train_repeats(config: ExperimentConfig, dataset: Dataset, tax: Taxonomy):
    profile = config.listener
    vocab = tax.vocabulary
    compiled = (compile_pairs(dataset.train, tax, config.mode, profile, vocab=vocab),
                compile_pairs(dataset.val, tax, config.mode, profile, vocab=vocab))
    out = []
    for r in range(config.n_repeats):
        out.append(train(dataset, profile, config.train_config(r), tax, compiled=compiled))
    return out


def run_experiment(config: ExperimentConfig, out_dir=None, dataset: Optional[Dataset] = None,
                   policies: Optional[Sequence[DisparityPolicy]] = None,
                   tax: Optional[Taxonomy] = None, outputs=("accuracy", "shift", "train")) -> ExperimentResult:
    """Train S1d ``n_repeats`` times and play all four speakers on the test split.

    Repeat ``r`` trains with seed ``config.seed + r``; the dataset is shared.
    When ``out_dir`` is given, reports and checkpoints are written there, and
    nothing is left behind if the run fails.
    """
    tax = tax or load_taxonomy()
    dataset = dataset or make_dataset(config, tax)
    profile = config.listener
    if policies is None:
        trained = train_repeats(config, dataset, tax)
        policies = [p for p, _ in trained]
        histories = [h for _, h in trained]
    else:
        if len(policies) != config.n_repeats:
            raise ConfigError(f"expected {config.n_repeats} policies, got {len(policies)}")
        histories = []

    acc = {sp: {sl: [] for sl in SLICES} for sp in SPEAKERS}
    shift = {sp: {} for sp in SPEAKERS}
    for r, policy in enumerate(policies):
        for k, sp in enumerate(SPEAKERS):
            rng = np.random.default_rng([config.seed, r, k])
            run = evaluate_speaker(sp, dataset.test, profile, tax, rng, policy, config.mode)
            for sl, v in run.accuracy().items():
                acc[sp][sl].append(v)
            freqs = token_shares(run.utterances, tax)
            for name, v in {**freqs, **shift_aggregates(freqs, tax)}.items():
                shift[sp].setdefault(name, []).append(v)

    n_hard = sum(p.difficulty == HARD for p in dataset.test)
    result = ExperimentResult(
        AccuracyReport(acc, n_hard, len(dataset.test) - n_hard),
        ShiftReport(shift), list(policies), histories, dataset)
    if out_dir is not None:
        write_outputs(result, out_dir, outputs)
    return result


def _atomic_write(out_dir, writer):
    """Run ``writer(tmp_dir)`` and move its files into ``out_dir`` on success."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=out_dir))
    try:
        writer(tmp)
        for f in sorted(tmp.iterdir()):
            f.replace(out_dir / f.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def write_outputs(result: ExperimentResult, out_dir, outputs=("accuracy", "shift", "train")):
    def writer(tmp):
        if "accuracy" in outputs:
            export(result.accuracy, "csv", tmp / "accuracy.csv")
            export(result.accuracy, "json", tmp / "accuracy.json")
            export(gain_report(result.accuracy), "csv", tmp / "gain.csv")
        if "shift" in outputs:
            export(result.shift, "csv", tmp / "shift.csv")
            export(result.shift, "json", tmp / "shift.json")
        if "train" in outputs:
            for r, policy in enumerate(result.policies):
                policy.save(tmp / f"policy_{r}.json")
            for r, hist in enumerate(result.histories):
                (tmp / f"history_{r}.json").write_text(
                    json.dumps(hist.to_dict(), indent=2, sort_keys=True) + "\n")
    _atomic_write(out_dir, writer)


def lambda_sweep(config: ExperimentConfig, ratio_grid=DEFAULT_RATIOS, out_dir=None,
                 dataset: Optional[Dataset] = None, tax: Optional[Taxonomy] = None) -> LambdaSweepReport:
    """Train and evaluate S1d at each lambda_l : lambda_d ratio.

    Every grid point reuses the same dataset, training seeds and evaluation
    seeds, so points differ only in the exponents.
    """
    if not ratio_grid:
        raise ConfigError("empty ratio grid")
    tax = tax or load_taxonomy()
    dataset = dataset or make_dataset(config, tax)
    profile = config.listener
    vocab = tax.vocabulary
    compiled = (compile_pairs(dataset.train, tax, config.mode, profile, vocab=vocab),
                compile_pairs(dataset.val, tax, config.mode, profile, vocab=vocab))
    points = []
    for lam_l, lam_d in ratio_grid:
        cfg = ExperimentConfig.from_dict({**config.to_dict(), "lambda_l": float(lam_l),
                                          "lambda_d": float(lam_d)})
        accs = []
        for r in range(cfg.n_repeats):
            policy, _ = train(dataset, profile, cfg.train_config(r), tax, compiled=compiled)
            rng = np.random.default_rng([cfg.seed, r, SPEAKERS.index("S1d")])
            run = evaluate_speaker("S1d", dataset.test, profile, tax, rng, policy, cfg.mode)
            accs.append(run.accuracy()["Combined"])
        m, s = _mean_std(accs)
        points.append({"lambda_l": float(lam_l), "lambda_d": float(lam_d), "mean": m, "std": s,
                       "per_repeat": accs})
    report = LambdaSweepReport(points)
    if out_dir is not None:
        _atomic_write(out_dir, lambda tmp: (export(report, "csv", tmp / "sweep.csv"),
                                            export(report, "json", tmp / "sweep.json")))
    return report
