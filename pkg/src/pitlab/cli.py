"""``pit-lab`` command line: gen | pretrain | train | evaluate | report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import datagen, harness
from . import separator as sep
from .presets import desk_separation_spec, desk_ssl_spec
from .signal import StructuralError

PRESETS = {
    "sep": datagen.default_separation_spec,
    "ssl": datagen.default_ssl_spec,
    "desk-sep": desk_separation_spec,
    "desk-ssl": desk_ssl_spec,
}


def _load_run_config(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out_dir"] = args.out
    if getattr(args, "switch_mode", None):
        over["switch_mode"] = args.switch_mode
    if getattr(args, "clip", False):
        over["clip_norm"] = 5.0
    return replace(cfg, **over) if over else cfg


def cmd_gen(args):
    if args.spec:
        spec = datagen.load_spec_file(args.spec)
    else:
        spec = PRESETS[args.preset]()
    if args.seed is not None:
        spec = replace(spec, master_seed=args.seed)
    manifest = datagen.gen_corpus(spec, args.out)
    print(f"wrote {len(manifest)} examples to {args.out}")


def cmd_pretrain(args):
    cfg = _load_run_config(args)
    if not cfg.out_dir:
        raise harness.ConfigError("out_dir: required (set it in the config or pass --out)")
    out = Path(cfg.out_dir)
    harness._fresh_dir(out)
    if not cfg.ssl_corpus:
        raise harness.ConfigError("ssl_corpus: required for pretrain")
    manifest = datagen.Manifest.load(Path(cfg.ssl_corpus) / "manifest.tsv")
    train = harness.SslData.from_manifest(manifest, "train")
    valid = harness.SslData.from_manifest(manifest, "valid") if manifest.split("valid") else None
    params, records = harness.pretrain(cfg, train, valid)
    out.mkdir(parents=True, exist_ok=True)
    sep.save_checkpoint(out / "pretrained.ckpt", params, cfg.model_config(1),
                        {"task": cfg.ssl_task, "seed": cfg.seed})
    (out / "pretrain_epochs.csv").write_text(harness.pretrain_csv(records))
    print(f"pre-trained {cfg.ssl_task} for {len(records)} epochs -> {out / 'pretrained.ckpt'}")


def cmd_train(args):
    cfg = _load_run_config(args)
    res = harness.run_experiment(cfg, pretrained_path=args.init)
    summ = harness.read_summary(Path(cfg.out_dir) / "summary.txt")
    print(f"{summ['strategy']}: test SI-SNRi {summ['test_si_snri_db']:.3f} dB, "
          f"SDRi {summ['test_sdri_db']:.3f} dB, {res.separation_updates} separation updates")


def cmd_evaluate(args):
    params, cfg, _ = sep.load_checkpoint(args.checkpoint)
    manifest = datagen.Manifest.load(Path(args.corpus) / "manifest.tsv")
    data = harness.SepData.from_manifest(manifest, args.split)
    result = harness.evaluate(params, cfg, data)
    if args.out:
        harness._write_rows(args.out, result.rows)
    print(json.dumps({"si_snri_db": result.si_snri, "sdri_db": result.sdri, "n": len(data)}))


def cmd_report(args):
    n = harness.report(args.runs, args.out)
    print(f"wrote {n} rows to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pit-lab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic corpus")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--spec", help="JSON corpus spec")
    src.add_argument("--preset", choices=tuple(PRESETS), default="sep",
                     help="built-in corpus recipe (spec defaults or the smaller desk-scale ones)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen)

    for name, func, hlp in (("pretrain", cmd_pretrain, "SSL pre-training only"),
                            ("train", cmd_train, "full run for the configured strategy")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", required=True)
        s.add_argument("--out")
        s.add_argument("--seed", type=int)
        if name == "train":
            s.add_argument("--init", help="pre-trained checkpoint for PT-FT")
            s.add_argument("--switch-mode", choices=("pass", "online"))
            s.add_argument("--clip", action="store_true", help="clip gradient norm at 5")
        s.set_defaults(func=func)

    e = sub.add_parser("evaluate", help="SI-SNRi / SDRi of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--out", help="per-example CSV")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="merge run directories into a long-format CSV")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except harness.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (StructuralError, OSError, harness.TrainingDiverged) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
