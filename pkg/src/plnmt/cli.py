"""``plnmt`` command line: the planner-code pipeline from raw text to BLEU.

Typical toy run::

    plnmt make-toy --count 2000 --out data/toy
    plnmt train-codes --src data/toy.src --tags data/toy.tgt.pos --out codes.ckpt
    plnmt extract-codes --model codes.ckpt --src data/toy.src --tags data/toy.tgt.pos --out toy.codes
    plnmt augment --tgt data/toy.tgt --codes toy.codes --out data/toy.aug.tgt
    plnmt train-nmt --src data/toy.src --tgt data/toy.aug.tgt --out nmt.ckpt
    plnmt translate --model nmt.ckpt --input data/toy.src --output hyp.txt --codes-out hyp.codes
    plnmt bleu --hyp hyp.txt --ref data/toy.tgt
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from plnmt import __version__, checkpoint, metrics, structann
from plnmt.config import PipelineConfig, load_config_file, resolve
from plnmt.errors import ConfigError, ContractError, IngestionError, PlnmtError
from plnmt.textpipe import (
    BpeModel, SentenceRecord, augment_targets_with_codes, build_vocab, code_prefix,
    learn_bpe, read_lines, tokenize, write_lines,
)
from plnmt.textpipe.vocab import Vocabulary, is_code_token, is_eoc, parse_code_token

log = logging.getLogger("plnmt")


# ---------------------------------------------------------------------- helpers

def _config(args) -> PipelineConfig:
    file_values = load_config_file(args.config) if args.config else {}
    flags = {f.name: getattr(args, f.name, None) for f in fields(PipelineConfig)}
    return resolve(file_values, flags)


def _dtype(cfg: PipelineConfig):
    return np.float64 if cfg.float64 else np.float32


def _read_tokens(path) -> list[tuple[str, ...]]:
    return [tokenize(line) for line in read_lines(path)]


def _check_counts(**named):
    sizes = {k: len(v) for k, v in named.items()}
    if len(set(sizes.values())) > 1:
        desc = ", ".join(f"{k}={n}" for k, n in sizes.items())
        raise IngestionError(f"line counts differ: {desc}")


def _records(src_path, tags_path, tgt_path=None) -> list[SentenceRecord]:
    sources = _read_tokens(src_path)
    tags = _read_tokens(tags_path)
    _check_counts(source=sources, tags=tags)
    targets = _read_tokens(tgt_path) if tgt_path else [()] * len(sources)
    _check_counts(source=sources, target=targets)
    return [SentenceRecord(s, t, g) for s, t, g in zip(sources, targets, tags)]


def _read_codes(path) -> list[tuple[int, ...]]:
    return [metrics.parse_code_line(line) for line in read_lines(path)]


def parse_code_arg(text: str) -> list[int]:
    """``"<c2>,<c1>"``, ``"⟨c2⟩ ⟨c1⟩"`` or ``"1,0"`` to 0-based code values."""
    parts = [p for p in text.replace(",", " ").split() if not is_eoc(p)]
    if not parts:
        raise ContractError("empty --code value")
    return [parse_code_token(p) for p in parts]


def _figure_path(out, suffix: str) -> Path:
    out = Path(out)
    return out.with_name(out.name + suffix) if out.suffix == "" else out.with_suffix(suffix)


# ---------------------------------------------------------------------- subcommands

def cmd_make_toy(args, cfg):
    from plnmt import toy
    examples = toy.generate(args.count, orderings=args.orderings, seed=cfg.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    toy.write_corpus(examples, args.out)
    print(f"wrote {len(examples)} pairs to {args.out}.{{src,tgt,tgt.pos,label}}")


def cmd_preprocess(args, cfg):
    sources = _read_tokens(args.src)
    targets = _read_tokens(args.tgt)
    _check_counts(source=sources, target=targets)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    models = {}
    for side, corpus, given in (("src", sources, args.bpe_src), ("tgt", targets, args.bpe_tgt)):
        if given:
            models[side] = BpeModel.load(given)
        else:
            models[side] = learn_bpe(corpus, cfg.bpe_merges)
            models[side].save(f"{out}.bpe.{side}")
    seg_src = [models["src"].apply(s) for s in sources]
    seg_tgt = [models["tgt"].apply(t) for t in targets]
    write_lines(f"{out}.src", (" ".join(s) for s in seg_src))
    write_lines(f"{out}.tgt", (" ".join(t) for t in seg_tgt))
    if not args.bpe_src:
        build_vocab(seg_src, cfg.src_vocab_size).save(f"{out}.vocab.src")
    print(f"segmented {len(sources)} pairs -> {out}.src, {out}.tgt")


def cmd_simplify_tags(args, cfg):
    if args.tags:
        lines = [" ".join(args.tags)]
    elif args.input and args.input != "-":
        lines = read_lines(args.input)
    else:
        lines = [line.rstrip("\n") for line in sys.stdin]
    outputs = [structann.simplify_line(line) for line in lines]
    if args.output:
        write_lines(args.output, outputs)
    else:
        for line in outputs:
            print(line)


def cmd_train_codes(args, cfg):
    from plnmt.codemodel import train_code_model
    records = _records(args.src, args.tags)
    src_vocab = Vocabulary.load(args.src_vocab) if args.src_vocab else \
        build_vocab([r.source for r in records], cfg.src_vocab_size)
    valid = _records(args.valid_src, args.valid_tags) if args.valid_src else None
    config = cfg.code_config()

    def progress(e):
        print(f"epoch {e['epoch']:3d}  train {e['train_loss']:.4f}  valid {e['valid_loss']:.4f}")

    model = train_code_model(records, config, src_vocab, dtype=_dtype(cfg),
                             valid_records=valid, progress=progress)
    checkpoint.save_checkpoint(checkpoint.from_code_model(model), args.out)
    from plnmt.plotting import loss_curve_figure
    loss_curve_figure(model.history[1:], _figure_path(args.out, ".loss.png"),
                      title=f"code model N={config.n} K={config.k}")
    acc = metrics.structure_reconstruction_accuracy(model, records)
    print(f"saved {args.out}; training S_Y accuracy {acc:.4f}")


def cmd_extract_codes(args, cfg):
    ckpt = checkpoint.load_checkpoint(args.model, kind="code-model")
    model = checkpoint.to_code_model(ckpt)
    records = _records(args.src, args.tags)
    codes = model.extract(records)
    write_lines(args.out, (" ".join(code_prefix(c)[:-1]) for c in codes))
    if args.labels:
        labels = [line.strip() for line in read_lines(args.labels)]
        _check_counts(codes=codes, labels=labels)
        print(f"cluster purity {metrics.cluster_purity(codes, labels):.4f}")
    print(f"wrote {len(codes)} code assignments to {args.out}")


def cmd_augment(args, cfg):
    targets = _read_tokens(args.tgt)
    codes = _read_codes(args.codes)
    _check_counts(target=targets, codes=codes)
    records = [SentenceRecord((), t) for t in targets]
    out = augment_targets_with_codes(records, codes)
    write_lines(args.out, (" ".join(r.target) for r in out))


def _target_vocab(targets, cap, code_k):
    """Target vocabulary; reserves all ``code_k`` code tokens when the data carries codes."""
    values = [parse_code_token(t) for seq in targets for t in seq if is_code_token(t)]
    if not values:
        return build_vocab(targets, cap)
    return build_vocab(targets, cap, num_codes=max(max(values) + 1, code_k), with_eoc=True)


def cmd_train_nmt(args, cfg):
    from plnmt import nmt
    sources = _read_tokens(args.src)
    targets = _read_tokens(args.tgt)
    _check_counts(source=sources, target=targets)
    if args.init:
        ckpt = checkpoint.load_checkpoint(args.init, kind="nmt")
        base = checkpoint.to_nmt_model(ckpt)
        src_vocab, tgt_vocab, params = base.src_vocab, base.tgt_vocab, base.params
        config = cfg.nmt_config()
        if config.hidden != base.config.hidden:
            raise ConfigError(f"--init model has hidden={base.config.hidden}, "
                              f"config asks for {config.hidden}")
    else:
        src_vocab = Vocabulary.load(args.src_vocab) if args.src_vocab else \
            build_vocab(sources, cfg.src_vocab_size)
        tgt_vocab = _target_vocab(targets, cfg.tgt_vocab_size, cfg.code_k)
        config = cfg.nmt_config()
        params = nmt.init_params(config, len(src_vocab), len(tgt_vocab), dtype=_dtype(cfg))
    model = nmt.NmtModel(params, config, src_vocab, tgt_vocab)
    pairs = nmt.encode_pairs(src_vocab, tgt_vocab, sources, targets)
    valid = None
    if args.valid_src:
        vs, vt = _read_tokens(args.valid_src), _read_tokens(args.valid_tgt)
        _check_counts(valid_source=vs, valid_target=vt)
        valid = nmt.encode_pairs(src_vocab, tgt_vocab, vs, vt)

    def progress(e):
        print(f"epoch {e['epoch']:3d}  step {e['step']:6d}  valid {e['valid_loss']:.4f}")

    nmt.train_nmt(pairs, model, valid, progress=progress)
    checkpoint.save_checkpoint(checkpoint.from_nmt_model(model), args.out)
    steps = [h for h in model.history if "loss" in h]
    if args.trace:
        write_lines(args.trace, (f"{h['step']}\t{h['loss']!r}\t{h['lr']!r}" for h in steps))
    from plnmt.plotting import loss_curve_figure
    loss_curve_figure(model.history, _figure_path(args.out, ".loss.png"), title="nmt")
    print(f"saved {args.out} after {len(steps)} steps")


def cmd_translate(args, cfg):
    from plnmt.decode import translate
    src_vocab = Vocabulary.load(args.src_vocab) if args.src_vocab else None
    tgt_vocab = Vocabulary.load(args.tgt_vocab) if args.tgt_vocab else None
    ckpt = checkpoint.load_checkpoint(args.model, kind="nmt", src_vocab=src_vocab,
                                      tgt_vocab=tgt_vocab)
    model = checkpoint.to_nmt_model(ckpt)
    sources = _read_tokens(args.input)
    if args.bpe:
        bpe = BpeModel.load(args.bpe)
        sources = [tuple(bpe.apply(s)) for s in sources]
    forced: list | None = None
    if args.code:
        forced = [parse_code_arg(args.code)] * len(sources)
    elif args.codes_in:
        forced = _read_codes(args.codes_in)
        _check_counts(source=sources, codes=forced)
    hyps, emitted = [], []
    for i, src in enumerate(sources):
        words, codes = translate(model, src, beam_size=cfg.beam_size,
                                 forced_codes=forced[i] if forced else None, max_len=cfg.max_len)
        hyps.append(" ".join(words))
        emitted.append(" ".join(codes))
    write_lines(args.output, hyps)
    if args.codes_out:
        write_lines(args.codes_out, emitted)
    print(f"translated {len(hyps)} sentences -> {args.output}")


def cmd_bleu(args, cfg):
    hyps = _read_tokens(args.hyp)
    refs = _read_tokens(args.ref)
    _check_counts(hypotheses=hyps, references=refs)
    print(metrics.corpus_bleu(hyps, refs).format())


def cmd_code_stats(args, cfg):
    codes = _read_codes(args.codes)
    n = args.n if args.n is not None else (len(codes[0]) if codes else cfg.code_n)
    k = args.k if args.k is not None else cfg.code_k
    if any(len(c) != n for c in codes):
        raise IngestionError(f"every line must hold {n} codes")
    bins = metrics.code_distribution(codes, n, k)
    text = metrics.distribution_csv(bins)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        from plnmt.plotting import code_distribution_figure
        fig = _figure_path(args.out, ".png")
        code_distribution_figure(bins, fig, title=f"code usage (N={n}, K={k})")
        print(f"wrote {args.out} and {fig}")
    else:
        sys.stdout.write(text)


def cmd_gradcheck(args, cfg):
    from plnmt.diagnostics import code_model_gradcheck, nmt_gradcheck
    ok = True
    for which, fn in (("code-model", code_model_gradcheck), ("nmt", nmt_gradcheck)):
        if args.model not in ("all", which):
            continue
        report = fn(tolerance=args.tolerance, seed=cfg.seed)
        print(f"[{which}]")
        print(report.format())
        ok &= report.passed
    return 0 if ok else 1


# ---------------------------------------------------------------------- parser

def _settings_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("settings (override the --config file)")
    group.add_argument("--config", help="key = value settings file")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        group.add_argument(flag, dest=f.name, default=None, metavar="V")
    group.add_argument("-v", "--verbose", action="store_true")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plnmt", description="planner-code NMT pipeline")
    parser.add_argument("--version", action="version", version=f"plnmt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = [_settings_parent()]

    def add(name, fn, help_text):
        p = sub.add_parser(name, parents=common, help=help_text, description=help_text)
        p.set_defaults(func=fn)
        return p

    p = add("make-toy", cmd_make_toy, "generate the template-grammar toy corpus")
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--orderings", type=int, default=2, choices=(2, 4))
    p.add_argument("--out", required=True, help="output prefix")

    p = add("preprocess", cmd_preprocess, "learn or apply BPE to a parallel corpus")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--bpe-src", help="existing source BPE model to apply")
    p.add_argument("--bpe-tgt", help="existing target BPE model to apply")

    p = add("simplify-tags", cmd_simplify_tags, "reduce POS tag lines to the coarse structure")
    p.add_argument("tags", nargs="*", help="one tag line given inline")
    p.add_argument("--input", "-i")
    p.add_argument("--output", "-o")

    p = add("train-codes", cmd_train_codes, "train the planner-code autoencoder")
    p.add_argument("--src", required=True)
    p.add_argument("--tags", required=True, help="target POS tags, one line per sentence")
    p.add_argument("--src-vocab")
    p.add_argument("--valid-src")
    p.add_argument("--valid-tags")
    p.add_argument("--out", required=True, help="checkpoint path")

    p = add("extract-codes", cmd_extract_codes, "assign planner codes with a trained code model")
    p.add_argument("--model", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tags", required=True)
    p.add_argument("--labels", help="gold structure labels, for a purity report")
    p.add_argument("--out", required=True)

    p = add("augment", cmd_augment, "prefix target sentences with their codes and <eoc>")
    p.add_argument("--tgt", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--out", required=True)

    p = add("train-nmt", cmd_train_nmt, "train the attentional translation model")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--valid-src")
    p.add_argument("--valid-tgt")
    p.add_argument("--src-vocab")
    p.add_argument("--init", help="continue from an nmt checkpoint")
    p.add_argument("--trace", help="write step, loss, lr per optimisation step")
    p.add_argument("--out", required=True)

    p = add("translate", cmd_translate, "beam-search translation, optionally with forced codes")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--bpe", help="source BPE model applied before decoding")
    p.add_argument("--code", help='forced codes for every sentence, e.g. "<c2>,<c1>"')
    p.add_argument("--codes-in", help="forced codes per sentence, one line each")
    p.add_argument("--codes-out", help="side file with the emitted code prefixes")
    p.add_argument("--src-vocab", help="verify the checkpoint against this vocabulary")
    p.add_argument("--tgt-vocab")

    p = add("bleu", cmd_bleu, "corpus BLEU-4 of a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)

    p = add("code-stats", cmd_code_stats, "histogram of code assignments (CSV + PNG)")
    p.add_argument("--codes", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--out", help="CSV path; the bar chart goes next to it")

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of both models")
    p.add_argument("--model", choices=("all", "code-model", "nmt"), default="all")
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.verbose:
            print(json.dumps(cfg.to_dict(), sort_keys=True), file=sys.stderr)
        status = args.func(args, cfg)
    except (PlnmtError, OSError, ValueError) as exc:
        print(f"plnmt {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
