"""Command line entry point: ``smre <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import instrument
from . import tensor as T
from .checkpoint import load_checkpoint
from .config import TrainConfig, load_config
from .data import CorpusSpec, generate_corpus, load_dataset, split, write_dataset
from .errors import SMREError
from .training import evaluate, decode_records, format_table, run_ablation, sweep_y, train

log = logging.getLogger("smre")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
# raised for bad input rather than a failure mid-run
_VALIDATION = (ValueError, KeyError, FileNotFoundError, IsADirectoryError, NotADirectoryError,
               PermissionError)

class UsageError(Exception):
    pass

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")

def _add_common(p, data=False, config=False, checkpoint=False, beam=False, out=False):
    if config:
        p.add_argument("--config", metavar="PATH", help="flat key = value config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable), e.g. --set sst.y_signal=0.8")
    if data:
        p.add_argument("--data", metavar="PATH", required=True, help="corpus file (JSON lines)")
    if checkpoint:
        p.add_argument("--checkpoint", metavar="PATH", required=True)
    if beam:
        p.add_argument("--beam-size", type=int, metavar="N")
    p.add_argument("--seed", type=int, metavar="N")
    if out:
        p.add_argument("--out", metavar="PATH")

def build_parser():
    parser = _Parser(prog="smre", description="Support-set video captioning toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="write a synthetic corpus")
    for f in dataclasses.fields(CorpusSpec):
        if f.name != "seed":
            p.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=f.default)
    _add_common(p, out=True)

    p = sub.add_parser("train", help="train and write checkpoints plus a loss log")
    _add_common(p, data=True, config=True, out=True)
    p.add_argument("--resume", metavar="PATH", help="continue from a last.ckpt")

    p = sub.add_parser("eval", help="beam-decode a split and print metrics")
    _add_common(p, data=True, checkpoint=True, beam=True, out=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("decode", help="print captions for the given video ids")
    _add_common(p, data=True, checkpoint=True, beam=True)
    p.add_argument("video_ids", nargs="+")

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    _add_common(p)

    for name, help_ in (("ablate", "train the five loss settings"),
                        ("sweep-y", "train once per control-signal value")):
        p = sub.add_parser(name, help=help_)
        _add_common(p, data=True, config=True, out=True)
        p.add_argument("--split", default="test")
    return parser

def _config(args):
    cfg = load_config(args.config) if args.config else TrainConfig()
    changes = {}
    for item in args.overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            changes[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            changes[key.strip()] = raw
    if args.seed is not None:
        changes["seed"] = args.seed
    if T.deterministic():
        changes["determinism"] = True
    return cfg.replace(**changes) if changes else cfg

def cmd_gen_data(args):
    fields = {f.name: getattr(args, f.name) for f in dataclasses.fields(CorpusSpec) if f.name != "seed"}
    spec = CorpusSpec(seed=args.seed or 0, **fields)
    records = generate_corpus(spec)
    out = args.out or "corpus.jsonl"
    write_dataset(records, out)
    counts = {s: len(split(records, s)) for s in ("train", "val", "test")}
    print(f"wrote {len(records)} videos to {out} {counts}")

def cmd_train(args):
    cfg = _config(args)
    records = load_dataset(args.data)
    out = args.out or "run"
    res = train(records, cfg, out_dir=out, resume=args.resume)
    last = res.epochs[-1] if res.epochs else {}
    print(json.dumps({"out": out, "epochs": len(res.epochs), "final": last}, sort_keys=True))

def _eval_records(records, name):
    recs = split(records, name)
    if not recs:
        raise ValueError(f"split {name!r} is empty")
    return recs

def cmd_eval(args):
    ck = load_checkpoint(args.checkpoint)
    records = _eval_records(load_dataset(args.data), args.split)
    instrument.reset()
    report = evaluate(records, ck.params, ck.cfg, ck.vocab, beam_size=args.beam_size)
    counters = instrument.snapshot()
    payload = dict(report.as_dict(), split=args.split, n_videos=len(records),
                   support_set_calls=counters.get("compute_weights", 0)
                   + counters.get("build_support_set", 0),
                   text_encoder_calls=counters.get("encode_text_gt", 0))
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(dict(payload, per_video=report.per_video), fh, sort_keys=True, indent=1)

def cmd_decode(args):
    ck = load_checkpoint(args.checkpoint)
    by_id = {r.video_id: r for r in load_dataset(args.data)}
    missing = [v for v in args.video_ids if v not in by_id]
    if missing:
        raise ValueError(f"unknown video ids: {', '.join(missing)}")
    recs = [by_id[v] for v in args.video_ids]
    for rec, caption in zip(recs, decode_records(recs, ck.params, ck.cfg, ck.vocab, args.beam_size)):
        print(f"{rec.video_id}\t{' '.join(caption)}")

def cmd_gradcheck(args):
    from .verify import run_suite

    results = run_suite(seed=args.seed or 0)
    for name, err, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<32} max_rel_err={err:.3e}")
    if not all(ok for _, _, ok in results):
        print("gradient check failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK

def _emit_rows(rows, out):
    print(format_table(rows))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")

def cmd_ablate(args):
    cfg = _config(args)
    _emit_rows(run_ablation(load_dataset(args.data), cfg, args.split), args.out)

def cmd_sweep_y(args):
    cfg = _config(args)
    _emit_rows(sweep_y(load_dataset(args.data), cfg, eval_split=args.split), args.out)

COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "decode": cmd_decode,
            "gradcheck": cmd_gradcheck, "ablate": cmd_ablate, "sweep-y": cmd_sweep_y}

def main(argv=None):
    logging.basicConfig(level=os.environ.get("SMRE_LOG", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    try:
        with T.deterministic_reductions():
            code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"smre {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except _VALIDATION as exc:
        print(f"smre {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SMREError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"smre {args.command}: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        log.exception("smre %s: unexpected failure", args.command)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code

if __name__ == "__main__":
    sys.exit(main())
