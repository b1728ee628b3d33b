import math

import numpy as np
import pytest

from sceneaog import datasets
from sceneaog.affordance import AffordanceWarning
from sceneaog.energy import SLOTS
from sceneaog.formats import CorpusInstance, CorpusScene
from sceneaog.learning import (CDDivergenceError, LearningRate, SchemaError, cd_learn, cd_update,
                               collect_stats, corpus_to_layout, fill_humans, fit_model)
from sceneaog.prob import FitError, SIGMA_MIN
from sceneaog.sampler import SamplerConfig, relax, sample_structure

from toy import toy_model, toy_scene

RULES = datasets.bedroom_rules()


def inst(cat, x, y, yaw=0.0, supported_by=None):
    return CorpusInstance(cat, datasets.BASE_SIZES[cat], (x, y, 0.0), yaw, supported_by)


def bedroom(sid, *insts, room=(4.0, 4.0, 2.7)):
    return CorpusScene(sid, "bedroom", room, tuple(insts))


def test_occurrence_frequency(bedroom_grammar):
    corpus = [bedroom("a", inst("bed", 2, 2)), bedroom("b", inst("bed", 2, 2)),
              bedroom("c", inst("bed", 2, 2)), bedroom("d", inst("desk", 1, 0.5))]
    stats = collect_stats(corpus, bedroom_grammar, RULES)
    assert stats.occurrences["bedroom"]["bed"] / sum(stats.scene_types.values()) == 0.75
    with pytest.warns(AffordanceWarning, match="desk"):
        model = fit_model(stats, bedroom_grammar, RULES)
    bed_counts = model.set_count_dists["furniture>bed"]
    assert bed_counts.prob(1) == 0.75 and bed_counts.prob(0) == 0.25


def test_grouping_within_threshold(bedroom_grammar):
    near = bedroom("a", inst("desk", 2, 0.5), inst("chair", 2, 1.2, math.pi))
    far = bedroom("b", inst("desk", 0.7, 0.5), inst("chair", 3.3, 3.3, math.pi))
    stats = collect_stats([near], bedroom_grammar, RULES)
    assert stats.grouping_counts[("chair", "desk")] == 1
    stats = collect_stats([far], bedroom_grammar, RULES)
    assert stats.grouping_counts[("chair", "desk")] == 0
    assert stats.address_counts["chair"]["nil"] == 1


def test_support_read_from_corpus(bedroom_grammar):
    scene = bedroom("a", inst("nightstand", 1, 0.3), inst("lamp", 1, 0.3, supported_by=0))
    layout = corpus_to_layout(scene, bedroom_grammar, RULES)
    assert layout.supported_objects[0].address == 0
    assert collect_stats([scene], bedroom_grammar, RULES).support_counts[("lamp", "nightstand")] == 1


def test_schema_errors_name_the_scene(bedroom_grammar):
    with pytest.raises(SchemaError, match="scene x"):
        collect_stats([bedroom("x", inst("bed", 2, 2), inst("lamp", 2, 2, supported_by=5))],
                      bedroom_grammar, RULES)
    sofa = CorpusInstance("sofa", (2, 1, 1), (2, 2, 0))
    with pytest.raises(SchemaError, match="sofa"):
        collect_stats([bedroom("y", sofa)], bedroom_grammar, RULES)


def test_stats_order_independent(small_corpus, bedroom_grammar):
    a = collect_stats(small_corpus, bedroom_grammar, RULES)
    b = collect_stats(small_corpus[::-1], bedroom_grammar, RULES)
    assert a.summary() == b.summary()
    assert a.sizes == b.sizes and a.wall_dists == b.wall_dists and a.set_counts == b.set_counts
    assert fit_model(a, bedroom_grammar, RULES) == fit_model(b, bedroom_grammar, RULES)


def test_degenerate_wall_distance_fit(bedroom_grammar):
    # three beds, each exactly e metres from the -x wall
    room = (8.0, 8.0, 2.7)
    corpus = [bedroom(str(i), inst("bed", math.e, 4.0, -math.pi / 2), room=room) for i in range(3)]
    model = fit_model(collect_stats(corpus, bedroom_grammar, RULES), bedroom_grammar, RULES)
    d = model.wall_dist["bed"]
    assert d.mu == pytest.approx(1.0) and d.sigma == SIGMA_MIN


def test_fit_model_rejects_empty_stats(bedroom_grammar):
    with pytest.raises(FitError, match="empty"):
        fit_model(collect_stats([], bedroom_grammar, RULES), bedroom_grammar, RULES)


def test_weights_start_at_zero(small_stats, bedroom_grammar):
    model = fit_model(small_stats, bedroom_grammar, RULES)
    assert np.array_equal(model.weights.as_array(), np.zeros(len(SLOTS)))
    assert len(model.config["fingerprint"]) == 16


def layout_to_corpus(sid, layout):
    insts = [CorpusInstance(f.category, f.size, f.position, f.yaw) for f in layout.furniture]
    insts += [CorpusInstance(o.category, o.size, o.position, o.yaw, o.address) for o in layout.supported_objects]
    return CorpusScene(sid, layout.room.scene_type, layout.room.size, tuple(insts))


@pytest.mark.slow
def test_categorical_tables_survive_generate_refit(small_model, bedroom_grammar):
    rng = np.random.default_rng(7)
    corpus = [layout_to_corpus(f"s{i:05d}", sample_structure(small_model, "bedroom", rng, 0))
              for i in range(10_000)]
    refit = fit_model(collect_stats(corpus, bedroom_grammar, RULES), bedroom_grammar, RULES)
    for key, want in small_model.set_count_dists.items():
        got = refit.set_count_dists[key]
        support = set(want.outcomes) | set(got.outcomes)
        tv = 0.5 * sum(abs(want.prob(v) - got.prob(v)) for v in support)
        assert tv <= 0.02, key


def test_fill_humans(small_model, rng):
    layout = toy_scene([(2, 2, 0)])
    assert fill_humans([layout], toy_model(), 0, rng)[0] is layout
    scene = sample_structure(small_model, "bedroom", rng, humans_per_object=0)
    filled, = fill_humans([scene], small_model, 2, rng)
    assert all(len(o.humans) == 2 for o in filled.instances)


# --- contrastive divergence ---------------------------------------------------

def test_cd_update_fixed_point():
    losses = np.random.default_rng(0).random((32, 8))
    assert np.array_equal(cd_update(losses, losses.copy(), 0.1), np.zeros(8))


def test_cd_update_sign():
    data = np.zeros((4, 8))
    samples = np.zeros((4, 8))
    samples[:, 0] = 2.0
    step = cd_update(data, samples, 0.1)
    assert step[0] == pytest.approx(0.2)
    assert np.all(step[1:] == 0)


def test_learning_rate_schedule():
    eta = LearningRate(0.1, 50)
    assert eta(0) == 0.1 and eta(50) == pytest.approx(0.05)


def test_cd_raises_collision_weight_when_chains_collide():
    # data scenes have no overlap; a chain that piles boxes together must push the collision weight up
    model = toy_model(count=2, room=(4.0, 4.0, 3.0))
    data = [toy_scene([(1, 1, 0), (3, 3, 0)], (4.0, 4.0, 3.0))] * 4
    piled = toy_scene([(2, 2, 0), (2.3, 2, 0)], (4.0, 4.0, 3.0))
    result = cd_learn(data, model, lambda s, m, n, r: piled, epochs=1, batch_size=4, rng=0,
                      active=[True] + [False] * 7)
    assert result.weights.lambda_f[0] > 0
    assert result.trace[0]["sample_loss"][0] > result.trace[0]["data_loss"][0]


def test_cd_inactive_slots_stay_fixed():
    model = toy_model(count=2, room=(4.0, 4.0, 3.0), weights=[0, 0, 0, 0, 0, 0, 0.7, 0])
    data = [toy_scene([(1, 1, 0), (3, 3, 0)], (4.0, 4.0, 3.0))]
    result = cd_learn(data, model, lambda s, m, n, r: s, epochs=2, rng=0, active=[True] + [False] * 7)
    assert result.weights.as_array()[6] == 0.7
    assert len(result.trace) == 2


def test_cd_divergence_guard():
    model = toy_model(count=2, room=(4.0, 4.0, 3.0))
    data = [toy_scene([(1, 1, 0), (3, 3, 0)], (4.0, 4.0, 3.0))]
    piled = toy_scene([(2, 2, 0), (2.0, 2, 0)], (4.0, 4.0, 3.0))
    with pytest.raises(CDDivergenceError) as err:
        cd_learn(data, model, lambda s, m, n, r: piled, LearningRate(1e5, 50), epochs=3, rng=0,
                 active=[True] + [False] * 7)
    assert len(err.value.trace) == 1


PLANTED_ROOM = (4.0, 4.0, 3.0)
PLANTED_CONFIG = SamplerConfig(move_probs=(0.5, 0.5, 0.0))


def planted_trial(seed, lam_star, n_scenes=48, burn_in=400, epochs=40):
    """Draw a corpus from ``lam_star`` with long chains, then learn collision and wall-distance weights."""
    rng = np.random.default_rng(seed)
    base = toy_model(count=3, room=PLANTED_ROOM)
    planted = base.with_weights(lam_star)
    corpus = []
    for _ in range(n_scenes):
        start = toy_scene([(rng.uniform(0.5, 3.5), rng.uniform(0.5, 3.5), rng.uniform(0, 2 * math.pi))
                           for _ in range(3)], PLANTED_ROOM)
        corpus.append(relax(start, planted, burn_in, rng, PLANTED_CONFIG))
    active = np.zeros(len(SLOTS), bool)
    active[[SLOTS.index("f-col"), SLOTS.index("r-dis")]] = True
    result = cd_learn(corpus, base, lambda s, m, n, r: relax(s, m, n, r, PLANTED_CONFIG),
                      LearningRate(0.5, 50), epochs=epochs, rng=rng, active=active)
    return result.weights.as_array()[active]


def recovers(learned, planted):
    return bool(np.all(np.sign(learned) == np.sign(planted)) and
                (learned[0] > learned[1]) == (planted[0] > planted[1]))


@pytest.mark.slow
def test_planted_weights_recovered_once():
    lam = np.zeros(len(SLOTS))
    lam[SLOTS.index("f-col")], lam[SLOTS.index("r-dis")] = 4.0, 1.0
    assert recovers(planted_trial(11, lam), np.array([4.0, 1.0]))
