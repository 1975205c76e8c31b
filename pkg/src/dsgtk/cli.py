"""Command-line surface.

Subcommands: synth, train, eval, segment, export-graph, gradcheck.
Every failure path exits nonzero and prints one diagnostic line
prefixed ``error:`` to stderr. DSG_DETERMINISTIC=1 pins numeric library
thread pools to one thread before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys

if os.environ.get("DSG_DETERMINISTIC") == "1":
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(_var, "1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dsgtk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--regions", type=int, default=4, help="planted clusters per frame")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--rule", default="combination",
                   choices=["combination", "temporal-marker", "low-saliency"])
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--clips", type=int, default=200)
    p.add_argument("--grid", default="4x4")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained run on a dataset split")
    p.add_argument("--run", required=True, help="training output directory")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--checkpoint", default="best.dsgw")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("segment", help="render segmentation maps via prototype matching")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--support", type=int, default=5, help="annotated frames per class")
    p.add_argument("--per-frame-labels", action="store_true",
                   help="re-label clusters per frame instead of per window")
    p.add_argument("--out", default=None, help="directory for rendered maps")
    p.add_argument("--checkpoint", default="best.dsgw")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("export-graph", help="export a clip's dynamic graph")
    p.add_argument("--data", required=True)
    p.add_argument("--clip", default=None, help="clip id (default: first clip)")
    p.add_argument("--ws", type=int, default=None, help="truncate to the last N frames")
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--format", default="json", choices=["json", "dot"])
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.set_defaults(func=_cmd_export_graph)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every op")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def _parse_grid(text: str):
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError as exc:
        from .errors import DSGError

        raise DSGError(f"bad grid {text!r}, expected ROWSxCOLS") from exc


def _cmd_synth(args) -> int:
    from .data import SyntheticSpec, generate_synthetic

    spec = SyntheticSpec(
        n_classes=args.classes, clusters_per_frame=args.regions,
        feature_dim=args.dim, noise=args.noise, rule=args.rule,
        window_size=args.window, clips=args.clips,
        grid=_parse_grid(args.grid), seed=args.seed,
    )
    ds = generate_synthetic(spec)
    ds.save(args.out)
    print(f"wrote {args.out}: {ds.summary()}")
    return 0


def _cmd_train(args) -> int:
    from pathlib import Path

    from .checkpoint import save_optimizer, save_parameters, save_tensors
    from .config import load_config, save_config
    from .data import load_dataset
    from .training import train, write_history_csv

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    ds = load_dataset(args.data)
    log = None
    if not args.quiet:
        log = lambda row: print(
            f"epoch {row.epoch:3d}  L_u {row.L_u:+.4f}  L_CE {row.L_CE:.4f}  "
            f"L_joint {row.L_joint:+.4f}  val_acc {row.val_acc:.3f}  val_f1 {row.val_f1:.3f}"
        )
    result = train(ds, cfg, log=log)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.toml")
    write_history_csv(out / "metrics.csv", result.history)
    save_parameters(out / "final.dsgw", result.model.parameters())
    save_optimizer(out / "final.dsgw.opt", result.optimizer)
    best = dict(result.best_params)
    save_tensors(out / "best.dsgw", best)
    print(f"trained {cfg.epochs} epochs in {result.seconds:.1f}s; "
          f"best epoch {result.best_epoch}; artifacts in {out}")
    return 0


def _load_run(run_dir, data_dir, checkpoint):
    from pathlib import Path

    from .checkpoint import load_parameters
    from .config import load_config
    from .data import load_dataset
    from .errors import DSGError
    from .training import GraphCache, model_from_config, prepare_dataset

    run = Path(run_dir)
    cfg = load_config(run / "config.toml")
    ds = prepare_dataset(load_dataset(data_dir), cfg)
    model = model_from_config(cfg, ds.feature_dim, ds.phase_count)
    ckpt = run / checkpoint
    if not ckpt.exists():
        raise DSGError(f"{ckpt}: checkpoint not found")
    load_parameters(ckpt, model.parameters())
    return cfg, ds, model, GraphCache(ds, cfg)


def _cmd_eval(args) -> int:
    from .training import evaluate_split

    _, ds, model, cache = _load_run(args.run, args.data, args.checkpoint)
    scores = evaluate_split(model, ds, cache, args.split)
    print(f"split={args.split} accuracy={scores['accuracy']:.4f} "
          f"macro_f1={scores['macro_f1']:.4f} micro_f1={scores['micro_f1']:.4f}")
    return 0


def _cmd_segment(args) -> int:
    from pathlib import Path

    from .clustering import scene_graph_to_dot
    from .training import segment_split

    _, ds, model, cache = _load_run(args.run, args.data, args.checkpoint)
    report = segment_split(model, ds, cache, args.split, support_per_class=args.support,
                           per_frame_labels=args.per_frame_labels)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for clip_id, seg, sg in report.maps:
            (out / f"{clip_id}.json").write_text(seg.to_json())
            (out / f"{clip_id}.pgm").write_text(seg.to_pgm(frame=seg.w - 1))
            (out / f"{clip_id}.dot").write_text(scene_graph_to_dot(sg))
    if report.scores is not None:
        s = report.scores
        print(f"split={args.split} PAC={s.pac:.4f} mIoU={s.miou:.4f} "
              f"mIoU_ana={s.miou_ana:.4f} mIoU_ins={s.miou_ins:.4f} "
              f"mean_NMI={report.mean_nmi:.4f}")
    else:
        print(f"split={args.split} rendered {len(report.maps)} maps (no ground truth)")
    return 0


def _cmd_export_graph(args) -> int:
    from pathlib import Path

    from .config import Config
    from .data import load_dataset
    from .errors import DSGError
    from .graphs import graph_to_dot, graph_to_json
    from .training import GraphCache, prepare_dataset

    ds = load_dataset(args.data)
    cfg = Config(
        window_size=args.ws if args.ws else ds.window_size,
        tau=args.tau,
        clusters=2,
        epochs=0,
    )
    ds = prepare_dataset(ds, cfg)
    if args.clip is None:
        index = 0
    else:
        ids = [c.id for c in ds.clips]
        if args.clip not in ids:
            raise DSGError(f"clip {args.clip!r} not in dataset ({len(ids)} clips)")
        index = ids.index(args.clip)
    graph = GraphCache(ds, cfg).graph(index)
    text = graph_to_json(graph) if args.format == "json" else graph_to_dot(graph)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_all

    results = run_all(seeds=args.seeds, base_seed=args.seed)
    failed = False
    for name, err in results.items():
        status = "ok" if err <= TOLERANCE else "FAIL"
        print(f"{name:24s} max_rel_err={err:.3e}  {status}")
        failed |= err > TOLERANCE
    if failed:
        from .errors import DSGError

        raise DSGError(f"gradient checks exceeded tolerance {TOLERANCE}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # noqa: BLE001 - single-line CLI error contract
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
