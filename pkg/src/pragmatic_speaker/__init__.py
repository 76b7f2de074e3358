"""Pragmatic rational speaker simulator for referential games with listener disparities."""

from .taxonomy import Taxonomy, hypernym_of, in_category, load_taxonomy
from .scenes import (Dataset, GenerationConfig, Scene, ScenePair, assemble_dataset,
                     classify_difficulty, generate_pair, generate_scene, load_dataset,
                     save_dataset)
from .speaker import CandidateSet, Utterance, sentence_candidates, word_candidates
from .listener import UNK, Choice, ListenerProfile, choose, ground, interpret_token, perceive, reward
from .pragmatic import (DisparityPolicy, ScoredCandidate, TrainConfig, TrainingHistory,
                        combined_score, pragmatic_select, q_score, rational_select,
                        reinforce_update, simulate_listener, train)
from .harness import (AccuracyReport, ExperimentConfig, LambdaSweepReport, ShiftReport,
                      evaluate_speaker, export, gain_report, lambda_sweep, run_experiment)

__version__ = "0.1.0"
