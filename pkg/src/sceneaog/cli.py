"""Command line: learn, sample, render, eval, plan-debug."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import affordance, formats, learning, metrics, planner, raster, sampler

log = logging.getLogger("sceneaog")


class CLIError(Exception):
    pass


def _rules_from_config(model):
    g = model.config.get("grouping")
    if not g:
        return learning.GroupingRules()
    return learning.GroupingRules({k: tuple(v) for k, v in g["associations"].items()}, g["threshold"])


def cmd_learn(args):
    corpus = formats.load_corpus(args.corpus)
    grammar = formats.load_grammar(args.grammar)
    rules = formats.load_rules(args.rules) if args.rules else learning.GroupingRules()
    stats = learning.collect_stats(corpus, grammar, rules)
    model = learning.fit_model(stats, grammar, rules, args.vm_components)
    if args.init_weights:
        model = model.with_weights([float(v) for v in args.init_weights.split(",")])
    if args.cd_epochs > 0:
        rng = np.random.default_rng(args.seed)
        data = learning.fill_humans(stats.scenes, model, args.humans, rng)
        try:
            res = learning.cd_learn(data, model, epochs=args.cd_epochs, batch_size=args.batch,
                                    steps_per_cd=args.cd_steps, rng=rng, planner_seed=args.seed)
        except learning.CDDivergenceError as e:
            _write_trace(args, e.trace)
            raise
        model = model.with_weights(res.weights)
        _write_trace(args, res.trace)
    formats.save_model(args.out, model)
    print(f"wrote {args.out}: {json.dumps(stats.summary(), sort_keys=True)}")
    return 0


def _write_trace(args, trace):
    path = args.trace or f"{args.out}.trace.jsonl"
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in trace))


def _chain_path(path, k, n):
    if n == 1:
        return Path(path)
    p = Path(path)
    return p.with_name(f"{p.stem}_chain{k}{p.suffix}")


def _run_chain(job):
    model_path, scene_type, cfg, seed, out, trace = job
    model = formats.load_model(model_path)
    scene, tr = sampler.synthesize(model, scene_type, cfg, np.random.default_rng(seed))
    formats.export_scene(out, scene)
    if trace:
        Path(trace).write_text(tr.to_csv())
    return str(out), tr.best


def cmd_sample(args):
    model = formats.load_model(args.model)
    if args.type not in model.grammar.scene_types:
        raise CLIError(f"unknown scene type {args.type!r}; model has {list(model.grammar.scene_types)}")
    cfg = sampler.SamplerConfig(iterations=args.iters, T0=args.t0, seed=args.seed,
                                annealing=not args.no_anneal, humans_per_object=args.humans)
    seeds = [args.seed] + [int(s.generate_state(1)[0]) for s in
                           np.random.SeedSequence(args.seed).spawn(args.chains - 1)]
    jobs = [(args.model, args.type, cfg, seeds[k], _chain_path(args.out, k, args.chains),
             _chain_path(args.trace, k, args.chains) if args.trace else None)
            for k in range(args.chains)]
    if args.jobs > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_run_chain, jobs))
    else:
        results = [_run_chain(j) for j in jobs]
    for out, best in results:
        print(f"wrote {out} (energy {best:.6g})")
    return 0


def cmd_render(args):
    if not (args.seg or args.afford):
        raise CLIError("render needs --seg and/or --afford")
    scene = formats.load_scene(args.scene)
    model = formats.load_model(args.model) if args.model else None
    if args.afford and model is None:
        raise CLIError("--afford needs --model")
    if args.seg:
        index = model.category_index if model is not None else None
        raster.write_pgm(args.seg, raster.rasterize_segmentation(scene, args.res, index))
    if args.afford:
        raster.write_pgm(args.afford, raster.rasterize_affordance(scene, model, args.res))
    return 0


def _load_eval_scenes(path, model):
    p = Path(path)
    files = sorted(p.glob("*.json")) if p.is_dir() else [p]
    if not files:
        raise CLIError(f"{path}: no scene files")
    first = formats.read_json(files[0])
    if isinstance(first, dict) and first.get("schema") == formats.CORPUS_SCHEMA or "scenes" in first:
        rules = _rules_from_config(model)
        return [learning.corpus_to_layout(cs, model.grammar, rules) for cs in formats.load_corpus(path)]
    return formats.load_scenes(path)


def cmd_eval(args):
    model = formats.load_model(args.model)
    scenes = _load_eval_scenes(args.scenes, model)
    some = next(iter(model.affordances.values()))
    maps = affordance.estimate_maps(scenes, some.extent, some.resolution, some.smoothing,
                                    categories=sorted(model.affordances))
    counts = {}
    for s in scenes:
        for o in s.instances:
            counts[o.category] = counts.get(o.category, 0) + 1
    table = metrics.compare_maps(model.affordances, maps)
    for cat, row in table.items():
        row["instances"] = counts.get(cat, 0)
    report = {"n_scenes": len(scenes), "categories": table}
    formats.write_json(args.report, report)
    print(f"{'category':<14}{'TV':>10}{'Hellinger':>12}{'n':>7}")
    for cat, row in table.items():
        print(f"{cat:<14}{row['tv']:>10.4f}{row['hellinger']:>12.4f}{row['instances']:>7d}")
    return 0


def cmd_plan_debug(args):
    scene = formats.load_scene(args.scene)
    hm = planner.activity_heatmap(scene, seed=args.seed)
    raster.write_pgm(args.heatmap, raster.heatmap_raster(hm))
    print(f"trajectories {hm.n_trajectories}, entropy {planner.heatmap_entropy(hm):.6f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="sceneaog", description="Learn and sample indoor scene grammars.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("learn", help="fit a model from a corpus")
    a.add_argument("--corpus", required=True)
    a.add_argument("--grammar", required=True)
    a.add_argument("--rules")
    a.add_argument("--out", required=True)
    a.add_argument("--cd-epochs", type=int, default=10)
    a.add_argument("--cd-steps", type=int, default=20)
    a.add_argument("--batch", type=int, default=32)
    a.add_argument("--humans", type=int, default=3)
    a.add_argument("--vm-components", type=int, default=4)
    a.add_argument("--init-weights", help="comma-separated starting weights (8 values)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--trace", help="learning trace (JSON lines); default <out>.trace.jsonl")
    a.set_defaults(func=cmd_learn)

    s = sub.add_parser("sample", help="synthesize scenes")
    s.add_argument("--model", required=True)
    s.add_argument("--type", required=True)
    s.add_argument("--iters", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t0", type=float, default=5.0)
    s.add_argument("--no-anneal", action="store_true")
    s.add_argument("--humans", type=int, default=3)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--trace")
    s.set_defaults(func=cmd_sample)

    r = sub.add_parser("render", help="rasterize a scene to PGM")
    r.add_argument("--scene", required=True)
    r.add_argument("--model")
    r.add_argument("--seg")
    r.add_argument("--afford")
    r.add_argument("--res", type=float, default=0.1)
    r.set_defaults(func=cmd_render)

    e = sub.add_parser("eval", help="compare affordance maps of scenes with the model's")
    e.add_argument("--model", required=True)
    e.add_argument("--scenes", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("plan-debug", help="write the trajectory heatmap of a scene")
    d.add_argument("--scene", required=True)
    d.add_argument("--heatmap", required=True)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_plan_debug)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("iters", "chains", "jobs", "cd_steps", "batch"):
        if getattr(args, name, 1) < 1:
            parser.error(f"--{name.replace('_', '-')} must be >= 1")
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001 - every failure becomes a one-line message
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"sceneaog {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
