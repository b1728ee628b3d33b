"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

from .formats import CorpusScene
from .scene import SceneLayout


def check_corpus(X, name="X"):
    """Return ``X`` as a non-empty list of :class:`CorpusScene`."""
    if isinstance(X, CorpusScene):
        X = [X]
    try:
        scenes = list(X)
    except TypeError:
        raise TypeError(f"{name} must be a sequence of CorpusScene, got {type(X).__name__}") from None
    if not scenes:
        raise ValueError(f"{name} is empty: at least one scene is needed")
    for i, s in enumerate(scenes):
        if not isinstance(s, CorpusScene):
            raise TypeError(f"{name}[{i}] is a {type(s).__name__}, expected CorpusScene")
    return scenes


def check_layouts(X, grammar=None, rules=None, name="X"):
    """Return ``X`` as a list of :class:`SceneLayout`, converting corpus scenes."""
    if isinstance(X, (SceneLayout, CorpusScene)):
        X = [X]
    out = []
    for i, s in enumerate(X):
        if isinstance(s, SceneLayout):
            out.append(s)
        elif isinstance(s, CorpusScene):
            if grammar is None:
                raise ValueError(f"{name}[{i}]: corpus scenes need a grammar to be parsed")
            from .learning import GroupingRules, corpus_to_layout
            out.append(corpus_to_layout(s, grammar, rules or GroupingRules()))
        else:
            raise TypeError(f"{name}[{i}] is a {type(s).__name__}, expected SceneLayout or CorpusScene")
    return out


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value
