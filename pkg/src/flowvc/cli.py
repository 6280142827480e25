"""Command-line front end.

Subcommands: synth-corpus, train, convert, eval.  Exit codes: 0 success,
2 bad arguments, 3 invalid input file, 4 invalid checkpoint.
"""

import argparse
import sys

from . import corpus as corpus_mod
from . import dsp, evaluate, pipeline
from .checkpoint import CheckpointError, load_checkpoint
from .config import RunConfig, load_config


def _read_config(path) -> RunConfig:
    try:
        return load_config(path)
    except (OSError, ValueError) as exc:
        raise dsp.FileFormatError(f"bad config file {path}: {exc}") from exc


def _read_wav(path) -> dsp.Waveform:
    try:
        return dsp.load_wav(path)
    except OSError as exc:
        raise dsp.FileFormatError(f"cannot read {path}: {exc}") from exc


def _cmd_synth_corpus(args) -> int:
    cfg = _read_config(args.config) if args.config else RunConfig()
    f0s = None
    if args.base_f0s:
        f0s = [float(x) for x in args.base_f0s.split(",")]
    corpus = corpus_mod.synth_corpus(cfg, args.speakers, args.utts,
                                     args.seed, base_f0s=f0s)
    corpus_mod.save_corpus(corpus, args.out)
    print(f"wrote {len(corpus.utterances)} utterances for "
          f"{args.speakers} speakers to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _read_config(args.config) if args.config else RunConfig()
    corpus = corpus_mod.load_corpus(args.corpus)
    resume = load_checkpoint(args.resume) if args.resume else None

    def progress(step, total, l_cfm, l_vq):
        if step % 50 == 0 or step + 1 == (args.steps or cfg.steps):
            print(f"step {step}: total={total:.4f} cfm={l_cfm:.4f} "
                  f"vq={l_vq:.4f}", file=sys.stderr)

    result = pipeline.train(cfg, corpus, out_path=args.out,
                            log_path=args.log, resume=resume,
                            steps=args.steps, progress=progress)
    print(f"trained to step {result.checkpoint.step}; wrote {args.out}")
    return 0


def _cmd_convert(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    source = _read_wav(args.source)
    reference = _read_wav(args.ref)
    result = pipeline.convert(source, reference, ckpt, n_steps=args.steps,
                              cfg_gamma=args.cfg, seed=args.seed,
                              ref_seconds=args.ref_seconds)
    dsp.save_wav(args.out, result.wave)
    print(f"wrote {args.out}: {result.audio_seconds:.2f}s audio, "
          f"rtf field={result.field_seconds / result.audio_seconds:.3f} "
          f"vocoder={result.vocoder_seconds / result.audio_seconds:.3f}")
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    corpus = corpus_mod.load_corpus(args.corpus)
    report, items = evaluate.evaluate_pairs(corpus, ckpt, seed=args.seed,
                                            max_pairs=args.pairs)
    text = report.to_text()
    with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    print(text, end="")
    print(f"evaluated {len(items)} conversions; wrote {args.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowvc",
        description="zero-shot voice conversion on synthetic corpora")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="render a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, required=True)
    p.add_argument("--utts", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--base-f0s", default=None,
                   help="comma-separated Hz values, one per speaker")
    p.set_defaults(func=_cmd_synth_corpus)

    p = sub.add_parser("train", help="train on a corpus directory")
    p.add_argument("--config", default=None)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--log", default=None)
    p.add_argument("--resume", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("convert", help="convert source to reference timbre")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--cfg", type=float, default=None,
                   help="guidance strength override")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ref-seconds", type=float, default=None,
                   help="fix the reference segment length")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("eval", help="run and score conversions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"error: invalid checkpoint: {exc}", file=sys.stderr)
        return 4
    except (dsp.FileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
