"""Command-line interface: ``eegconv <subcommand> ...``.

Exit codes: 0 success, 1 invalid arguments or data, 2 unreadable or
unwritable files.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import io as fio
from .exceptions import ParseError
from .experiment import (VOTE_N, RunReport, cohort_from_epochs, format_table,
                         per_sample_accuracy, per_subject_accuracy, raw_input_scale,
                         split_subjects)
from .models import (MODEL_NAMES, PUBLISHED_PARAMETER_COUNTS, flatten_width,
                     model_spec, parameter_count, shape_trace)
from .nn import INIT_SCHEMES
from .preprocessing import PreprocessConfig, default_montage, preprocess, stack_samples
from .spectral import LAYOUTS
from .synth import SynthSpec, generate_recording, subject_id
from .training import TrainConfig, train

log = logging.getLogger("eegconv")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _merged(cls, config_path, overrides):
    """Dataclass defaults, then a JSON config file, then explicit flags."""
    values = {}
    if config_path:
        values.update(fio.read_config(config_path))
    unknown = set(values) - set(cls.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    for k, v in values.items():
        if isinstance(v, list):
            values[k] = tuple(v)
    return cls(**values)


# --- subcommands -----------------------------------------------------------

def cmd_synth(args):
    spec = _merged(SynthSpec, args.config, dict(
        n_subjects=args.n_subjects, female_fraction=args.female_fraction, delta=args.delta,
        jitter=args.jitter, noise=args.noise, n_periods=args.n_periods, seed=args.seed))
    if spec.n_subjects < 2:
        raise ValueError("a cohort needs at least two subjects")
    os.makedirs(args.out, exist_ok=True)
    montage = default_montage()
    entries = []
    for i in range(spec.n_subjects):
        rec = generate_recording(spec, i, montage)
        name = f"{subject_id(i)}.eegb"
        fio.write_eegb(os.path.join(args.out, name), rec)
        entries.append({"path": name, "subject_id": rec.subject_id, "sex": rec.sex})
    fio.write_manifest(os.path.join(args.out, "manifest.json"), entries)
    with open(os.path.join(args.out, "synth.json"), "w", encoding="utf-8") as f:
        f.write(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(entries)} recordings to {args.out}")


def cmd_preprocess(args):
    cfg = PreprocessConfig(trim_s=args.trim_s, fir_order=args.fir_order)
    montage = default_montage()
    samples = []
    for e in fio.read_manifest(args.manifest):
        rec = fio.read_eegb(e["path"])
        if rec.sex is None:
            rec.sex = int(e["sex"])
        samples.extend(preprocess(rec, montage, cfg))
    X, y, subjects = stack_samples(samples)
    cohort = cohort_from_epochs(X, y, subjects, "raw", montage)
    cohort.provenance = {"manifest": os.path.abspath(args.manifest), "trim_s": cfg.trim_s}
    fio.write_dataset(args.out, cohort)
    print(f"wrote {len(cohort)} samples from {len(cohort.subject_table())} subjects to {args.out}")


def cmd_featurize(args):
    raw = fio.read_dataset(args.input)
    if raw.kind != "raw":
        raise ValueError(f"featurize expects a raw dataset, got {raw.kind}")
    cohort = cohort_from_epochs(raw.X[:, 0], raw.y, raw.subjects, args.layout)
    cohort.provenance = dict(raw.provenance, layout=args.layout)
    fio.write_dataset(args.out, cohort)
    print(f"wrote {len(cohort)} {args.layout} images to {args.out}")


def cmd_inspect(args):
    spec = model_spec(args.model, width=args.width)
    count = parameter_count(spec)
    trace = shape_trace(spec)
    if args.json:
        print(json.dumps({"model": args.model, "width": args.width, "input_shape": spec.input_shape,
                          "parameter_count": count, "flatten_width": flatten_width(spec),
                          "trace": [[n, list(s)] for n, s in trace]}, indent=2))
        return
    print(f"{args.model}: input {'x'.join(map(str, spec.input_shape))}")
    for name, shape in trace:
        print(f"  {name:<10s} {'x'.join(map(str, shape))}")
    print(f"flatten width: {flatten_width(spec)}")
    print(f"trainable parameters: {count:,d}")
    if args.width == 1.0 and count != PUBLISHED_PARAMETER_COUNTS[args.model]:
        print("warning: count differs from the published constant", file=sys.stderr)


def _number(text, flag):
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"{flag} expects a number or 'auto', got {text!r}") from None
    return value


def _splits(cohort, split_seed):
    return [cohort.select(s for s, _ in part)
            for part in split_subjects(cohort.subject_table(), seed=split_seed)]


def cmd_train(args):
    scale = args.input_scale
    auto = scale == "auto"
    cfg = _merged(TrainConfig, args.config, dict(
        model=args.model, width=args.width, init=args.init,
        input_scale=None if auto or scale is None else _number(scale, "--input-scale"),
        batch_size=args.batch_size,
        epochs=args.epochs, eval_epoch=args.eval_epoch, lr=args.lr, decay=args.decay,
        decay_mode=args.decay_mode, selection=args.selection, seed=args.seed,
        split_seed=args.split_seed, keep_checkpoints="all" if args.keep_all else None))
    cohort = fio.read_dataset(args.dataset)
    if cohort.kind != cfg.input_kind:
        raise ValueError(f"{cfg.model} needs a {cfg.input_kind} dataset, got {cohort.kind}")
    tr, va, _ = _splits(cohort, cfg.split_seed)
    if auto:
        cfg = replace(cfg, input_scale=raw_input_scale(tr))
    net = cfg.build_network()
    result = train(net, tr.X, tr.y, cfg, va.X, va.y)
    os.makedirs(args.out, exist_ok=True)
    fio.write_curves(os.path.join(args.out, "curves.csv"), result.curves)
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as f:
        f.write(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    for epoch, params in sorted(result.checkpoints.items()):
        fio.save_checkpoint(os.path.join(args.out, f"epoch_{epoch:03d}.eegc"), net, epoch,
                            config=cfg.to_dict(), params=params)
    final = fio.save_checkpoint(os.path.join(args.out, "selected.eegc"), net,
                                result.selected_epoch, config=cfg.to_dict(),
                                params=result.checkpoints[result.selected_epoch])
    print(f"trained {cfg.model} seed {cfg.seed}; selected epoch {final.epoch}; "
          f"outputs in {args.out}")


def cmd_eval(args):
    ck = fio.load_checkpoint(args.checkpoint)
    net = fio.network_from_checkpoint(ck)
    cohort = fio.read_dataset(args.dataset)
    split_seed = args.split_seed if args.split_seed is not None else \
        int(ck.config.get("split_seed", 0))
    if args.split != "all":
        cohort = _splits(cohort, split_seed)[("train", "val", "test").index(args.split)]
    p = net.predict_proba(cohort.X)[:, 1]
    doc = fio.metrics_document(
        ck.model, ck.seed, ck.epoch, per_sample_accuracy(p, cohort.y),
        per_subject_accuracy(p, cohort.y, cohort.subjects, args.vote_n, args.strict_ties),
        len(cohort), len(cohort.subject_table()),
        dict(ck.config, split=args.split, vote_n=args.vote_n))
    if args.out:
        fio.write_metrics(args.out, doc)
    print(json.dumps(doc, indent=2, sort_keys=True))


def reports_from_metrics(docs):
    """Group metrics documents by model (seed order) into RunReports."""
    by_model = {}
    for d in docs:
        by_model.setdefault(d["model"], []).append(d)
    order = [m for m in MODEL_NAMES if m in by_model] + sorted(set(by_model) - set(MODEL_NAMES))
    reports = []
    for m in order:
        rows = sorted(by_model[m], key=lambda d: d["seed"])
        epochs = {d["eval_epoch"] for d in rows}
        if len(epochs) != 1:
            raise ValueError(f"{m}: metrics mix evaluation epochs {sorted(epochs)}")
        reports.append(RunReport(m, epochs.pop(), [d["seed"] for d in rows],
                                 [d["per_sample"] for d in rows],
                                 [d["per_subject"] for d in rows]))
    return reports


def cmd_report(args):
    paths = list(args.metrics)
    if not paths:
        raise ValueError("no metrics files given")
    reports = reports_from_metrics([fio.read_metrics(p) for p in paths])
    if args.json:
        text = json.dumps({"format": "report", "version": 1,
                           "models": [r.to_dict() for r in reports]}, indent=2, sort_keys=True)
    else:
        text = format_table(reports)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    print(text)


# --- parser ----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="eegconv", description="Sex classification from resting-state EEG.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic cohort (EEGB files + manifest)")
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--n-subjects", type=int)
    s.add_argument("--female-fraction", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--jitter", type=float)
    s.add_argument("--noise", type=float)
    s.add_argument("--n-periods", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="manifest of recordings -> raw-sample dataset")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--trim-s", type=float, default=3.0)
    s.add_argument("--fir-order", type=int, help="FIR tap count (odd); default from transition width")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("featurize", help="raw-sample dataset -> spectral image dataset")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--layout", choices=LAYOUTS, default="chromatic")
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("inspect", help="print the shape trace and parameter count of a model")
    s.add_argument("model", choices=MODEL_NAMES)
    s.add_argument("--width", type=float, default=1.0)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("train", help="train one model/seed; writes checkpoints and curves.csv")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--model", choices=MODEL_NAMES)
    s.add_argument("--width", type=float)
    s.add_argument("--init", choices=INIT_SCHEMES)
    s.add_argument("--input-scale", metavar="GAIN|auto",
                   help="fixed input gain; 'auto' uses 1/std of the training split")
    s.add_argument("--batch-size", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--eval-epoch", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--decay", type=float)
    s.add_argument("--decay-mode", choices=("l2", "lr"))
    s.add_argument("--selection", choices=("fixed", "best_val"))
    s.add_argument("--seed", type=int)
    s.add_argument("--split-seed", type=int)
    s.add_argument("--keep-all", action="store_true", help="save a checkpoint every epoch")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a checkpoint; writes metrics JSON")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out")
    s.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    s.add_argument("--split-seed", type=int)
    s.add_argument("--vote-n", type=int, default=VOTE_N)
    s.add_argument("--strict-ties", action="store_true",
                   help="a subject mean of exactly 0.5 counts as male")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="aggregate metrics JSON files into a table with 95%% CIs")
    s.add_argument("metrics", nargs="*")
    s.add_argument("--out")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as e:             # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        args.func(args)
    except (ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main():
    sys.exit(run_cli())
