"""Learning attributed spatial And-Or grammars of indoor scenes and
synthesizing layouts by simulated annealing."""
from .datasets import bedroom_rules, make_bedroom_corpus, make_bedroom_grammar
from .energy import SLOTS, HeatmapCache, Weights, loss_features, total_energy, tree_energy
from .estimator import SceneSynthesizer
from .formats import (CorpusInstance, CorpusScene, export_scene, load_corpus, load_model, load_scene,
                      save_corpus, save_model)
from .learning import GroupingRules, LearnedModel, cd_learn, collect_stats, fit_model
from .metrics import hellinger, tv_distance
from .sampler import SamplerConfig, sample_structure, synthesize
from .scene import Grammar, NodeSpec, ObjectInstance, Room, SceneLayout, TreeChoices

__version__ = "0.1.0"
