"""A one-category model built by hand, for tests that need exact numbers."""
import numpy as np

from sceneaog.affordance import AffordanceMap
from sceneaog.energy import total_energy
from sceneaog.learning import LearnedModel
from sceneaog.prob import Categorical, KDEDist, LogNormalDist, VonMisesMixture
from sceneaog.scene import Grammar, NodeSpec, ObjectInstance, Room, SceneLayout, TreeChoices

BOX = (1.0, 1.0, 1.0)


def toy_grammar():
    nodes = [NodeSpec("room", "And", ("furniture",)),
             NodeSpec("furniture", "Set", ("box",)),
             NodeSpec("box", "RegularTerminal", category="box", role="furniture")]
    return Grammar("room", {n.id: n for n in nodes})


def toy_model(count=1, size_bw=0.1, weights=None, room=(8.0, 8.0, 3.0), orient_kappa=0.0):
    amap = AffordanceMap("box", 3.0, 0.1, np.full((60, 60), 1 / 3600), 0.15)
    model = LearnedModel(
        grammar=toy_grammar(), or_dists={},
        set_count_dists={"furniture>box": Categorical((count,), (1.0,))},
        address_dists={},
        size_kdes={"box": KDEDist((BOX,), (size_bw,) * 3)},
        room_size_kdes={"room": KDEDist((room,), (1e-3,) * 3)},
        wall_dist={"box": LogNormalDist(0.0, 1.0)},
        wall_orient={"box": VonMisesMixture(((1.0, 0.0, orient_kappa),))},
        affordances={"box": amap},
        category_index={"box": 1})
    if weights is not None:
        model = model.with_weights(weights)
    return model


def toy_scene(positions, room=(8.0, 8.0, 3.0)):
    furn = tuple(ObjectInstance("box", BOX, (x, y, 0.0), yaw) for x, y, yaw in positions)
    return SceneLayout(Room(room, "room"), furn, (),
                       TreeChoices((), (("furniture", "box", len(furn)),)))


GIBBS_SHAPE = (8, 8, 4)


def gibbs_toy():
    """One box on an 8 x 8 grid of centers with 4 yaws: 256 states.

    Returns ``(energy, propose)`` for :func:`sceneaog.sampler.run_chain`;
    states are index triples and ``propose`` steps one coordinate by
    +-1 with wrap-around, a symmetric move.
    """
    model = toy_model(weights=[1, 0, 0, 0, 0, 0, 1, 1], orient_kappa=2.0)
    # layouts are built once; the energy itself is recomputed from scratch on every call
    scenes = {(i, j, k): toy_scene([(0.5 + i, 0.5 + j, k * np.pi / 2)])
              for i in range(GIBBS_SHAPE[0]) for j in range(GIBBS_SHAPE[1]) for k in range(GIBBS_SHAPE[2])}

    def energy(state):
        return total_energy(scenes[state], model)

    def propose(state, rng):
        axis = int(rng.integers(3))
        new = list(state)
        new[axis] = (new[axis] + (1 if rng.random() < 0.5 else -1)) % GIBBS_SHAPE[axis]
        return tuple(new), "q1", 0.0

    return energy, propose


def gibbs_distribution(energy):
    e = np.array([[[energy((i, j, k)) for k in range(4)] for j in range(8)] for i in range(8)])
    p = np.exp(-(e - e.min()))
    return p / p.sum()
