"""Rational speaker and the learned disparity-adjustment layer.

The rational speaker ranks literal candidates by how reliably a simulated
listener resolves them to the target. The pragmatic speaker multiplies that
score by a per-token preference ``q`` learned with REINFORCE from the real
listener's +1/-1 feedback:

    a_i = ([[t_i == t*]] * p_i) ** lambda_l * q_i ** lambda_d

Candidate generation and the simulated listener stay frozen; only the token
weights ``theta`` (and the learning-rate schedule) change during training.
"""

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .listener import FULL, ListenerProfile, ground
from .scenes import HARD, ConfigError, Dataset, ScenePair
from .speaker import WORD, CandidateSet, Utterance, candidates_for
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)

TIE = None
CHECKPOINT_VERSION = 1

TRAIN = "train"
EVAL = "eval"


def logistic(x):
    return 1.0 / (1.0 + math.exp(-x))


@dataclass(frozen=True)
class ScoredCandidate:
    utterance: Utterance
    index: int
    t: Optional[int]
    p: float
    q: float
    a: float


@dataclass
class ScheduleState:
    best_val_accuracy: float = -1.0
    epochs_since_improve: int = 0
    decay_factor: float = 0.8
    patience: int = 50


@dataclass
class DisparityPolicy:
    theta: Dict[str, float]
    lambda_l: float = 1.0
    lambda_d: float = 1.0
    lr: float = 2.0
    schedule_state: ScheduleState = field(default_factory=ScheduleState)
    mode: str = WORD
    seed: Optional[int] = None

    @classmethod
    def uniform(cls, tax: Taxonomy, **kw):
        return cls(theta={w: 0.0 for w in tax.vocabulary}, **kw)

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        return {
            "format_version": CHECKPOINT_VERSION,
            "mode": self.mode,
            "lambda_l": self.lambda_l,
            "lambda_d": self.lambda_d,
            "lr": self.lr,
            "theta": dict(sorted(self.theta.items())),
            "schedule_state": asdict(self.schedule_state),
            "best_val_accuracy": self.schedule_state.best_val_accuracy,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('format_version')!r}")
        return cls(
            theta={k: float(v) for k, v in d["theta"].items()},
            lambda_l=d["lambda_l"],
            lambda_d=d["lambda_d"],
            lr=d.get("lr", 2.0),
            schedule_state=ScheduleState(**d["schedule_state"]),
            mode=d["mode"],
            seed=d.get("seed"),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- rational speaker --------------------------------------------------------

def simulate_listener(candidate: Utterance, pair: ScenePair, sim_profile: ListenerProfile,
                      tax: Taxonomy) -> Tuple[Optional[int], float]:
    """Simulated listener's pick and confidence for one candidate.

    Confidence is the target's share of the total grounding evidence; equal
    evidence (including none) is a tie with confidence 0.5.
    """
    s_t = ground(candidate, pair.target_scene, sim_profile, tax)
    s_d = ground(candidate, pair.distractor_scene, sim_profile, tax)
    if s_t + s_d == 0:
        return TIE, 0.5
    p = s_t / (s_t + s_d)
    if s_t > s_d:
        return pair.target, p
    if s_t < s_d:
        return 1 - pair.target, p
    return TIE, p


def rational_select(pair: ScenePair, candidates: CandidateSet, tax: Taxonomy,
                    sim_profile: ListenerProfile = ListenerProfile(FULL)) -> Utterance:
    if not len(candidates):
        raise ValueError("empty candidate set")
    best, best_score = 0, -1.0
    for i, c in enumerate(candidates):
        t, p = simulate_listener(c, pair, sim_profile, tax)
        score = p if t == pair.target else 0.0
        if score > best_score:
            best, best_score = i, score
    return candidates[best]


# -- disparity adjustment ----------------------------------------------------

def q_score(candidate: Utterance, policy: DisparityPolicy) -> float:
    try:
        weights = [policy.theta[w] for w in candidate.tokens]
    except KeyError as e:
        raise KeyError(f"token {e.args[0]!r} not in policy vocabulary") from None
    return logistic(sum(weights) / len(weights))


def combined_score(t, p, q, lambda_l, lambda_d, target) -> float:
    """``([[t == target]] * p) ** lambda_l * q ** lambda_d``, with 0 ** 0 == 1."""
    task = p if t == target else 0.0
    return task ** lambda_l * q ** lambda_d


def score_candidates(pair: ScenePair, candidates: CandidateSet, policy: DisparityPolicy,
                     tax: Taxonomy,
                     sim_profile: ListenerProfile = ListenerProfile(FULL)) -> List[ScoredCandidate]:
    out = []
    for i, c in enumerate(candidates):
        t, p = simulate_listener(c, pair, sim_profile, tax)
        q = q_score(c, policy)
        a = combined_score(t, p, q, policy.lambda_l, policy.lambda_d, pair.target)
        out.append(ScoredCandidate(c, i, t, p, q, a))
    return out


def pragmatic_select(pair: ScenePair, candidates: CandidateSet, policy: DisparityPolicy,
                     mode: str, rng: Optional[np.random.Generator], tax: Taxonomy,
                     sim_profile: ListenerProfile = ListenerProfile(FULL)) -> ScoredCandidate:
    """Eval takes the argmax of ``a`` (first wins ties); Train samples
    proportionally to ``a``, uniformly if every score is zero."""
    if not len(candidates):
        raise ValueError("empty candidate set")
    scored = score_candidates(pair, candidates, policy, tax, sim_profile)
    if mode == EVAL:
        best = 0
        for i, s in enumerate(scored):
            if s.a > scored[best].a:
                best = i
        return scored[best]
    if mode != TRAIN:
        raise ValueError(f"unknown selection mode {mode!r}")
    a = np.array([s.a for s in scored])
    total = a.sum()
    if total <= 0:
        return scored[int(rng.integers(len(scored)))]
    return scored[int(rng.choice(len(scored), p=a / total))]


def reinforce_loss(a: float, r: int) -> float:
    return -math.log(a) * r


def reinforce_update(policy: DisparityPolicy, chosen: ScoredCandidate, r: int,
                     lr: Optional[float] = None) -> DisparityPolicy:
    """One gradient step on ``-log(a) * r`` with respect to the token weights.

    Only the ``q`` factor depends on ``theta``, so the step is
    ``lr * r * lambda_d * (1 - q) / n_tokens`` on each token of the chosen
    utterance.
    """
    lr = policy.lr if lr is None else lr
    new = policy.copy()
    if chosen.a <= 0:
        log.debug("skipping update for zero-score candidate %s", chosen.utterance)
        return new
    q = q_score(chosen.utterance, policy)
    n = len(chosen.utterance.tokens)
    step = lr * r * policy.lambda_d * (1.0 - q) / n
    for w in chosen.utterance.tokens:
        new.theta[w] += step
    return new


# -- vectorised training -----------------------------------------------------

@dataclass
class CompiledPairs:
    """Frozen per-pair candidate data padded into arrays.

    ``base`` holds ``[[t_i == t*]] * p_i`` from the simulated listener;
    ``outcome`` holds the real listener's verdict per candidate
    (+1 correct, -1 wrong, 0 tie).
    """
    pairs: List[ScenePair]
    candidates: List[CandidateSet]
    tokens: np.ndarray
    token_mask: np.ndarray
    n_tokens: np.ndarray
    cand_mask: np.ndarray
    n_cand: np.ndarray
    base: np.ndarray
    outcome: np.ndarray
    hard: np.ndarray


def compile_pairs(pairs, tax: Taxonomy, mode: str, listener_profile: ListenerProfile,
                  sim_profile: ListenerProfile = ListenerProfile(FULL), vocab=None) -> CompiledPairs:
    vocab = vocab or tax.vocabulary
    index = {w: i for i, w in enumerate(vocab)}
    cands = [candidates_for(p.target_scene, tax, mode) for p in pairs]
    n, c_max = len(pairs), max((len(c) for c in cands), default=1)
    k_max = max((len(u.tokens) for cs in cands for u in cs), default=1)
    tokens = np.zeros((n, c_max, k_max), dtype=np.int64)
    token_mask = np.zeros((n, c_max, k_max), dtype=bool)
    cand_mask = np.zeros((n, c_max), dtype=bool)
    base = np.zeros((n, c_max))
    outcome = np.zeros((n, c_max), dtype=np.int64)
    for j, (pair, cs) in enumerate(zip(pairs, cands)):
        for i, u in enumerate(cs):
            cand_mask[j, i] = True
            for k, w in enumerate(u.tokens):
                tokens[j, i, k] = index[w]
                token_mask[j, i, k] = True
            t, p = simulate_listener(u, pair, sim_profile, tax)
            base[j, i] = p if t == pair.target else 0.0
            s_t = ground(u, pair.target_scene, listener_profile, tax)
            s_d = ground(u, pair.distractor_scene, listener_profile, tax)
            outcome[j, i] = np.sign(s_t - s_d)
    return CompiledPairs(
        pairs=list(pairs), candidates=cands, tokens=tokens, token_mask=token_mask,
        n_tokens=np.maximum(token_mask.sum(-1), 1), cand_mask=cand_mask,
        n_cand=cand_mask.sum(-1), base=base, outcome=outcome,
        hard=np.array([p.difficulty == HARD for p in pairs], dtype=bool),
    )


def batch_q(cp: CompiledPairs, theta_vec: np.ndarray, rows=slice(None)) -> np.ndarray:
    w = np.where(cp.token_mask[rows], theta_vec[cp.tokens[rows]], 0.0)
    return 1.0 / (1.0 + np.exp(-(w.sum(-1) / cp.n_tokens[rows])))


def batch_scores(cp: CompiledPairs, theta_vec, lambda_l, lambda_d, rows=slice(None)):
    q = batch_q(cp, theta_vec, rows)
    a = np.power(cp.base[rows], lambda_l) * np.power(q, lambda_d)
    return np.where(cp.cand_mask[rows], a, 0.0), q


def eval_indices(a: np.ndarray) -> np.ndarray:
    return np.argmax(a, axis=-1)


def sample_indices(a: np.ndarray, n_cand: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    total = a.sum(-1)
    u = rng.random(len(a))
    proportional = np.argmax(np.cumsum(a, -1) > (u * total)[:, None], axis=-1)
    uniform = np.minimum((u * n_cand).astype(np.int64), n_cand - 1)
    return np.where(total > 0, proportional, uniform)


@dataclass
class TrainConfig:
    mode: str = WORD
    epochs: int = 200
    batch_size: int = 128
    lr: float = 2.0
    # None applies the batch-mean gradient (lr / batch_size on the summed one)
    lr_scale: Optional[float] = None
    patience: int = 50
    decay: float = 0.8
    lambda_l: float = 1.0
    lambda_d: float = 1.0
    seed: int = 0

    @classmethod
    def for_mode(cls, mode, **overrides):
        defaults = {
            "word": dict(epochs=200, lr=2.0, patience=50),
            "sentence": dict(epochs=150, lr=0.5, patience=20),
        }
        if mode not in defaults:
            raise ConfigError(f"unknown mode {mode!r}")
        kw = {**defaults[mode], **{k: v for k, v in overrides.items() if v is not None}}
        return cls(mode=mode, **kw)

    @property
    def step_scale(self):
        return 1.0 / self.batch_size if self.lr_scale is None else self.lr_scale

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("epochs, batch_size and patience must be positive")
        if self.lr <= 0 or self.step_scale <= 0:
            raise ConfigError("lr and lr_scale must be positive")
        if not 0 < self.decay < 1:
            raise ConfigError("decay must lie in (0, 1)")
        if self.lambda_l < 0 or self.lambda_d < 0:
            raise ConfigError("lambda exponents must be non-negative")


@dataclass
class TrainingHistory:
    train_accuracy: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    mean_loss: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    initial_val_accuracy: Optional[float] = None
    best_epoch: int = 0

    def __len__(self):
        return len(self.val_accuracy)

    def to_dict(self):
        return asdict(self)


def _val_accuracy(cp, theta_vec, lambda_l, lambda_d, coin):
    a, _ = batch_scores(cp, theta_vec, lambda_l, lambda_d)
    idx = eval_indices(a)
    out = cp.outcome[np.arange(len(idx)), idx]
    r = np.where(out == 0, coin, out)
    return float(np.mean(r > 0))


def train(dataset: Dataset, listener_profile: ListenerProfile, config: TrainConfig,
          tax: Taxonomy, sim_profile: ListenerProfile = ListenerProfile(FULL),
          compiled=None) -> Tuple[DisparityPolicy, TrainingHistory]:
    """Fit the token weights against ``listener_profile`` with batched REINFORCE.

    Validation accuracy is played with one frozen coin per validation pair,
    so it changes only when the speaker's choices change. The returned policy
    is the snapshot with the best validation accuracy (the untrained policy
    counts as epoch 0).
    """
    config.validate()
    if not dataset.train or not dataset.val:
        raise ConfigError("training needs nonempty train and val splits")
    vocab = tax.vocabulary
    if compiled is None:
        compiled = (compile_pairs(dataset.train, tax, config.mode, listener_profile, sim_profile, vocab),
                    compile_pairs(dataset.val, tax, config.mode, listener_profile, sim_profile, vocab))
    tr, va = compiled
    rng = np.random.default_rng(config.seed)
    val_coin = 2 * rng.integers(2, size=len(dataset.val)) - 1

    theta = np.zeros(len(vocab))
    lr = config.lr
    lam_l, lam_d = config.lambda_l, config.lambda_d
    state = ScheduleState(decay_factor=config.decay, patience=config.patience)
    history = TrainingHistory()
    state.best_val_accuracy = history.initial_val_accuracy = _val_accuracy(va, theta, lam_l, lam_d, val_coin)
    best_theta = theta.copy()
    best_lr = lr

    n = len(dataset.train)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        wins, losses, decisions = 0, 0.0, 0
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            a, q = batch_scores(tr, theta, lam_l, lam_d, rows)
            idx = sample_indices(a, tr.n_cand[rows], rng)
            ar = np.arange(len(rows))
            out = tr.outcome[rows, idx]
            coin = 2 * rng.integers(2, size=len(rows)) - 1
            r = np.where(out == 0, coin, out)
            wins += int((r > 0).sum())
            decisions += len(rows)

            a_c, q_c = a[ar, idx], q[ar, idx]
            live = a_c > 0
            losses += float(np.sum(-np.log(a_c[live]) * r[live]))
            step = np.where(live, r * lam_d * (1.0 - q_c) / tr.n_tokens[rows, idx], 0.0)
            toks = tr.tokens[rows, idx]
            mask = tr.token_mask[rows, idx]
            grad = np.zeros_like(theta)
            np.add.at(grad, toks[mask], np.broadcast_to(step[:, None], toks.shape)[mask])
            theta += lr * config.step_scale * grad

        val = _val_accuracy(va, theta, lam_l, lam_d, val_coin)
        history.train_accuracy.append(wins / decisions)
        history.val_accuracy.append(val)
        history.mean_loss.append(losses / decisions)
        history.lr.append(lr)
        if val > state.best_val_accuracy:
            state.best_val_accuracy = val
            state.epochs_since_improve = 0
            best_theta = theta.copy()
            best_lr = lr
            history.best_epoch = epoch
        else:
            state.epochs_since_improve += 1
            if state.epochs_since_improve >= config.patience:
                lr *= config.decay
                state.epochs_since_improve = 0

    policy = DisparityPolicy(
        theta={w: float(v) for w, v in zip(vocab, best_theta)},
        lambda_l=lam_l, lambda_d=lam_d, lr=best_lr,
        schedule_state=state, mode=config.mode, seed=config.seed,
    )
    return policy, history
