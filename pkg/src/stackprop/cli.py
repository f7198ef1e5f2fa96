"""Command-line entry point: ``stackprop {train,parse,evaluate,compare,oracle-dump}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from typing import Sequence

from .conllu import Sentence, build_vocabularies, is_projective, read_conllu, save_conllu, write_conllu
from .network import ModelConfig, ParserModel
from .numerics import OptimizerConfig
from .runtime import (
    bundled_table,
    compare_report,
    decode,
    evaluate,
    load_model,
    read_score_table,
    save_model,
)
from .training import TrainPlan, train
from .transitions import derivation

logger = logging.getLogger("stackprop")

_CONFIG_TYPES = (ModelConfig, OptimizerConfig, TrainPlan)


class UsageError(Exception):
    pass


def _coerce(raw: str, default):
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if default is None:
        return None if raw.lower() in ("", "none") else int(raw)
    return raw


def _field_defaults() -> dict[str, tuple[type, object]]:
    out = {}
    for cls in _CONFIG_TYPES:
        for f in dataclasses.fields(cls):
            if f.name == "optimizer":
                continue
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            out[f.name] = (cls, default)
    return out


def parse_config_text(text: str) -> dict[str, object]:
    """Flat ``key = value`` lines naming ModelConfig, OptimizerConfig or TrainPlan fields."""
    known = _field_defaults()
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(raw, known[key][1])
        except ValueError as e:
            raise UsageError(f"config line {lineno}: {e}") from None
    return values


def build_configs(values: dict[str, object]) -> tuple[ModelConfig, TrainPlan]:
    known = _field_defaults()
    groups: dict[type, dict] = {cls: {} for cls in _CONFIG_TYPES}
    for key, value in values.items():
        groups[known[key][0]][key] = value
    opt = OptimizerConfig(**groups[OptimizerConfig])
    return ModelConfig(optimizer=opt, **groups[ModelConfig]), TrainPlan(**groups[TrainPlan])


def _read(path) -> list[Sentence]:
    try:
        return read_conllu(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None


def cmd_train(args) -> int:
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                values.update(parse_config_text(f.read()))
        except FileNotFoundError:
            raise UsageError(f"no such file: {args.config}") from None
    if args.seed is not None:
        values["seed"] = args.seed
    if args.workers is not None:
        values["workers"] = args.workers
    for item in args.set or []:
        values.update(parse_config_text(item))
    config, plan = build_configs(values)
    treebank = _read(args.train)
    dev = _read(args.dev) if args.dev else None
    model = ParserModel(config, build_vocabularies(treebank))
    log_sink = open(args.log, "a", encoding="utf-8") if args.log else None
    try:
        log = train(treebank, dev, model, plan, log_file=log_sink)
    finally:
        if log_sink is not None:
            log_sink.close()
    save_model(model, args.model_out)
    if log.dev:
        best = max(log.dev, key=lambda r: r.las)
        print(f"best dev UAS {best.uas:.2f} LAS {best.las:.2f} at update {best.step}")
    print(f"{len(log.updates)} updates ({log.parser_updates} parser); "
          f"skipped {log.skipped_nonprojective} non-projective; model written to {args.model_out}")
    return 0


def cmd_parse(args) -> int:
    model = load_model(args.model)
    sentences = _read(args.input)
    preds = decode(sentences, model, beam_size=args.beam)
    out = [s.with_predictions(p.heads, p.labels) for s, p in zip(sentences, preds)]
    if args.output == "-":
        sys.stdout.write(write_conllu(out))
    else:
        save_conllu(out, args.output)
    return 0


def cmd_evaluate(args) -> int:
    gold, pred = _read(args.gold), _read(args.pred)
    print(evaluate(gold, pred))
    return 0


def cmd_compare(args) -> int:
    ours = read_score_table(args.ours)
    baseline = read_score_table(args.baseline) if args.baseline else bundled_table("parsey_cousins_ud13")
    report = compare_report(ours, baseline)
    sys.stdout.write(report.render())
    return 0


def cmd_oracle_dump(args) -> int:
    for k, sent in enumerate(_read(args.input), start=1):
        print(f"# sentence {k}")
        if not is_projective(sent):
            print("# non-projective, skipped")
        else:
            labels = sorted(set(sent.deprels))
            ids = [labels.index(d) for d in sent.deprels]
            for t in derivation(sent.heads, ids):
                print(t.kind.name if t.label is None else f"{t.kind.name}\t{labels[t.label]}")
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stackprop", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a parser on a CoNLL-U treebank")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--model-out", required=True)
    p.add_argument("--config", help="file of key=value lines")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config value")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--log", help="append the training log to this file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse a CoNLL-U file with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output path, or - for stdout")
    p.add_argument("--beam", type=int, help="beam width (greedy decoding when omitted)")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("evaluate", help="UAS/LAS of predicted against gold CoNLL-U")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare per-treebank scores against a baseline table")
    p.add_argument("--ours", required=True, help="tab-separated treebank, uas, las")
    p.add_argument("--baseline", help="defaults to the bundled Parsey's Cousins UD v1.3 table")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle-dump", help="print gold arc-standard derivations")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_oracle_dump)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError) as e:
        print(f"stackprop {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
