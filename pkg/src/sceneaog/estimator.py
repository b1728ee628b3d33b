"""scikit-learn style front end: fit a scene grammar, sample and score scenes."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import learning, sampler
from .datasets import bedroom_rules, make_bedroom_grammar
from .energy import total_energy
from .validation import check_corpus, check_layouts, check_positive_int


class SceneSynthesizer(BaseEstimator):
    """Learn an attributed spatial grammar from a corpus and synthesize layouts.

    Parameters
    ----------
    grammar : Grammar, optional
        Defaults to the bedroom fixture grammar.
    rules : GroupingRules, optional
        Furniture grouping associations; defaults to the bedroom rules.
    scene_type : str
        Scene type sampled by :meth:`sample`.
    n_iter : int
        Annealing iterations per synthesized scene.
    T0 : float
        Initial annealing temperature.
    cd_epochs : int
        Contrastive-divergence epochs; 0 keeps all weights at zero.
    initial_weights : sequence of 8 floats, optional
        Starting loss weights for contrastive divergence.
    random_state : int or None
    """

    def __init__(self, grammar=None, rules=None, scene_type="bedroom", n_iter=20000, T0=5.0,
                 cd_epochs=10, cd_batch_size=32, cd_steps=20, initial_weights=None,
                 n_vm_components=4, humans_per_object=3, random_state=None):
        self.grammar = grammar
        self.rules = rules
        self.scene_type = scene_type
        self.n_iter = n_iter
        self.T0 = T0
        self.cd_epochs = cd_epochs
        self.cd_batch_size = cd_batch_size
        self.cd_steps = cd_steps
        self.initial_weights = initial_weights
        self.n_vm_components = n_vm_components
        self.humans_per_object = humans_per_object
        self.random_state = random_state

    def _grammar_rules(self):
        grammar = self.grammar if self.grammar is not None else make_bedroom_grammar()
        rules = self.rules if self.rules is not None else bedroom_rules()
        return grammar, rules

    def _config(self, seed):
        return sampler.SamplerConfig(iterations=self.n_iter, T0=self.T0, seed=seed,
                                     humans_per_object=self.humans_per_object)

    def fit(self, X, y=None):
        """Fit distributions by maximum likelihood, then weights by CD."""
        corpus = check_corpus(X)
        check_positive_int(self.cd_epochs, "cd_epochs", minimum=0)
        grammar, rules = self._grammar_rules()
        rng = np.random.default_rng(self.random_state)
        stats = learning.collect_stats(corpus, grammar, rules)
        model = learning.fit_model(stats, grammar, rules, self.n_vm_components)
        if self.initial_weights is not None:
            model = model.with_weights(self.initial_weights)
        self.stats_ = stats
        self.cd_trace_ = []
        if self.cd_epochs > 0:
            data = learning.fill_humans(stats.scenes, model, self.humans_per_object, rng)
            res = learning.cd_learn(data, model, epochs=self.cd_epochs, batch_size=self.cd_batch_size,
                                    steps_per_cd=self.cd_steps, rng=rng,
                                    planner_seed=int(rng.integers(2 ** 31)))
            model = model.with_weights(res.weights)
            self.cd_trace_ = res.trace
        self.model_ = model
        return self

    def sample(self, n_samples=1, random_state=None):
        """Synthesize ``n_samples`` scenes; returns a list of SceneLayout."""
        check_is_fitted(self, "model_")
        check_positive_int(n_samples, "n_samples")
        seeds = np.random.SeedSequence(self.random_state if random_state is None else random_state)
        out = []
        for child in seeds.spawn(n_samples):
            rng = np.random.default_rng(child)
            scene, _ = sampler.synthesize(self.model_, self.scene_type, self._config(0), rng)
            out.append(scene)
        return out

    def score_samples(self, X):
        """Negative total energy (unnormalized log density) of each scene."""
        check_is_fitted(self, "model_")
        grammar, rules = self._grammar_rules()
        layouts = check_layouts(X, grammar, rules)
        energy = sampler.scene_energy_fn(self.model_)
        return np.array([-energy(s) for s in layouts])

    def energy(self, scene):
        check_is_fitted(self, "model_")
        return total_energy(scene, self.model_)
