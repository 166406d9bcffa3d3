"""Command-line entry point.

Every command reads one JSON config (``--config``), applies the targeted
overrides ``--seed``, ``--out`` and ``--steps``, writes the effective config
to ``<out>/config.json`` and then does its work. Failures print one JSON
line ``{"error": kind, "message": ...}`` on stderr and exit with status 2.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import checkpoint as ck
from .config import ConfigError, RunConfig, load_config
from .corpus import TokenFileError, decode, read_token_file, read_vocab, write_token_file
from .metrics import evaluate_bleu
from .numerics import RngStream
from .oracle import generate_dataset, make_oracle, nll_oracle
from .policy import GenDims, N_RESERVED, init_generator, sample_batch, validate_tokens
from .reward import RewardDims, init_reward
from .trainer import TrainingDiverged, pretrain_mle, run_irl

log = logging.getLogger("irlgen")

EXIT_ERROR = 2


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    return out


def _require(path: Optional[str], what: str) -> str:
    if not path:
        raise UsageError(f"no {what} given (set it in the config or pass the matching flag)")
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _read_dataset(path: str, vocab_size: Optional[int], mode: str) -> List[List[int]]:
    seqs = read_token_file(path)
    if not seqs:
        raise UsageError(f"{path}: dataset is empty")
    if vocab_size is not None:
        for i, s in enumerate(seqs):
            try:
                validate_tokens(s, vocab_size, mode)
            except ValueError as exc:
                raise TokenFileError(f"{path}: line {i + 1}: {exc}") from None
    return seqs


def _vocab_size(cfg: RunConfig, data: Sequence[Sequence[int]] = ()) -> int:
    if cfg.model.vocab_size is not None:
        return cfg.model.vocab_size
    if cfg.data.vocab:
        return len(read_vocab(_require(cfg.data.vocab, "vocabulary file")))
    if cfg.data.oracle:
        return load_oracle_ck(cfg).params.dims.vocab_size
    if data:
        return max(N_RESERVED + 1, max(max(s) for s in data if s) + 1)
    raise UsageError("cannot infer the vocabulary size; set model.vocab_size")


def load_oracle_ck(cfg: RunConfig):
    return ck.load_oracle(_require(cfg.data.oracle, "oracle checkpoint"))


def _generator(cfg: RunConfig, vocab_size: int):
    if cfg.data.generator:
        gp = ck.load_generator(_require(cfg.data.generator, "generator checkpoint"))
        if gp.dims.vocab_size != vocab_size:
            raise ck.ShapeMismatchError(
                f"generator vocabulary {gp.dims.vocab_size} does not match data vocabulary {vocab_size}")
        return gp
    dims = GenDims(vocab_size, cfg.model.emb_dim, cfg.model.hid_dim)
    return init_generator(dims, RngStream(cfg.seed, ("init", "generator")))


def _reward(cfg: RunConfig, vocab_size: int):
    if cfg.data.reward:
        return ck.load_reward(_require(cfg.data.reward, "reward checkpoint"))
    m = cfg.model
    dims = RewardDims(vocab_size, m.emb_dim, m.hid_dim, m.mlp_dim or m.hid_dim)
    return init_reward(dims, RngStream(cfg.seed, ("init", "reward")), m.keep_prob)


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_oracle_gen(cfg: RunConfig, args) -> None:
    oc = cfg.oracle
    seed = cfg.seed if oc.seed is None else oc.seed
    n_train = args.steps if args.steps is not None else oc.n_train
    out = _out_dir(cfg)
    oracle = make_oracle(seed, oc.n_content, oc.emb_dim, oc.hid_dim)
    rng = RngStream(cfg.seed, ("oracle-gen",))
    train = generate_dataset(oracle, n_train, oc.seq_len, rng.child("train"))
    ck.save_oracle(out / "oracle.ckpt", oracle)
    write_token_file(out / "oracle_train.txt", train)
    result = {"oracle": str(out / "oracle.ckpt"), "train": str(out / "oracle_train.txt"),
              "n_train": n_train, "seq_len": oc.seq_len}
    if oc.n_test > 0:
        test = generate_dataset(oracle, oc.n_test, oc.seq_len, rng.child("test"))
        write_token_file(out / "oracle_test.txt", test)
        result.update(test=str(out / "oracle_test.txt"), n_test=oc.n_test)
    _emit(result)


def cmd_pretrain(cfg: RunConfig, args) -> None:
    tc = cfg.train_config()
    train = read_token_file(_require(cfg.data.train, "training set"))
    V = _vocab_size(cfg, train)
    train = _read_dataset(cfg.data.train, V, tc.mode)
    gp = _generator(cfg, V)
    epochs = args.steps if args.steps is not None else tc.pretrain_epochs
    out = _out_dir(cfg)
    with open(out / "pretrain_log.jsonl", "w", encoding="utf-8") as sink:
        def on_epoch(epoch, loss, params):
            sink.write(json.dumps({"epoch": epoch, "loss": loss}, sort_keys=True) + "\n")

        gp, losses = pretrain_mle(gp, train, epochs, tc.pretrain_batch or tc.N,
                                  tc.pretrain_lr or tc.beta, tc.mode,
                                  RngStream(cfg.seed, ("pretrain",)), tc.clip_norm, on_epoch)
    ck.save_generator(out / "generator.ckpt", gp)
    _emit({"generator": str(out / "generator.ckpt"), "epochs": epochs,
           "final_loss": losses[-1] if losses else None})


def cmd_train(cfg: RunConfig, args) -> None:
    tc = cfg.train_config()
    if args.steps is not None:
        tc = dataclasses.replace(tc, total_iterations=args.steps)
    if cfg.data.generator:
        # starting from a checkpoint means pretraining already happened
        tc = dataclasses.replace(tc, pretrain_epochs=0)
    train = read_token_file(_require(cfg.data.train, "training set"))
    V = _vocab_size(cfg, train)
    train = _read_dataset(cfg.data.train, V, tc.mode)
    gp = _generator(cfg, V)
    rp = _reward(cfg, V)
    oracle = load_oracle_ck(cfg) if cfg.data.oracle else None
    out = _out_dir(cfg)
    ckdir = out / "checkpoints"
    ckdir.mkdir(exist_ok=True)

    def on_iteration(it, g, r, record):
        ck.save_generator(ckdir / f"generator_{it:04d}.ckpt", g)
        ck.save_reward(ckdir / f"reward_{it:04d}.ckpt", r)

    gp, rp, report = run_irl(gp, rp, train, tc, oracle=oracle, log_path=str(out / "train_log.jsonl"),
                             on_iteration=on_iteration, log_wall_time=cfg.log_wall_time)
    ck.save_generator(out / "generator.ckpt", gp)
    ck.save_reward(out / "reward.ckpt", rp)
    last = report.records[-1] if report.records else None
    _emit({"generator": str(out / "generator.ckpt"), "reward": str(out / "reward.ckpt"),
           "iterations": len(report.records),
           "final_nll_oracle": last.nll_oracle if last else None})


def cmd_sample(cfg: RunConfig, args) -> None:
    tc = cfg.train_config()
    gp = ck.load_generator(_require(cfg.data.generator, "generator checkpoint"))
    n = args.steps if args.steps is not None else cfg.sample.n
    trajs = sample_batch(gp, n, tc.max_len, tc.mode, RngStream(cfg.seed, ("sample",)))
    out = _out_dir(cfg)
    seqs = [t.tokens for t in trajs]
    write_token_file(out / "samples.txt", seqs)
    result = {"samples": str(out / "samples.txt"), "n": n}
    if cfg.sample.decode:
        vocab = read_vocab(_require(cfg.data.vocab, "vocabulary file"))
        if len(vocab) != gp.dims.vocab_size:
            raise ck.ShapeMismatchError("vocabulary file does not match the generator")
        text = "".join(" ".join(decode(vocab, s, tc.mode)) + "\n" for s in seqs)
        (out / "samples_text.txt").write_text(text, encoding="utf-8", newline="\n")
        result["text"] = str(out / "samples_text.txt")
    _emit(result)


def cmd_eval_nll(cfg: RunConfig, args) -> None:
    oracle = load_oracle_ck(cfg)
    samples = _read_dataset(_require(cfg.data.samples, "samples file"), oracle.params.dims.vocab_size,
                            "fixed-length")
    _out_dir(cfg)
    _emit({"nll_oracle": nll_oracle(oracle, samples), "n": len(samples), "seq_len": len(samples[0])})


def cmd_eval_bleu(cfg: RunConfig, args) -> None:
    generated = _read_dataset(_require(cfg.data.samples, "samples file"), None, "eos-terminated")
    test = _read_dataset(_require(cfg.data.test, "test set"), None, "eos-terminated")
    strip = lambda seqs: [[t for t in s if t >= N_RESERVED] for s in seqs]  # noqa: E731
    generated = [s for s in strip(generated) if s]
    test = [s for s in strip(test) if s]
    if not generated or not test:
        raise UsageError("nothing to score after removing reserved ids")
    m = cfg.metrics
    _out_dir(cfg)
    report = evaluate_bleu(generated, test, tuple(m.orders), cfg.seed, m.n_hyp, m.n_ref, m.eps,
                           m.cumulative)
    sys.stdout.write(report.to_json() + "\n")


COMMANDS = {
    "oracle-gen": (cmd_oracle_gen, "create an oracle and sample a token-file dataset"),
    "pretrain": (cmd_pretrain, "MLE pretraining of the generator"),
    "train": (cmd_train, "alternating reward / generator training"),
    "sample": (cmd_sample, "draw sequences from a generator checkpoint"),
    "eval-nll": (cmd_eval_nll, "per-token NLL of samples under an oracle"),
    "eval-bleu": (cmd_eval_bleu, "forward / backward / harmonic BLEU against a test set"),
}


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so usage errors get the JSON error line too."""

    def error(self, message):
        raise _ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="irlgen", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run config; defaults apply when omitted")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--steps", type=int,
                       help="override the main count (samples, epochs or iterations)")
        p.add_argument("--train", help="override data.train")
        p.add_argument("--test", help="override data.test")
        p.add_argument("--vocab", help="override data.vocab")
        p.add_argument("--generator", help="override data.generator")
        p.add_argument("--reward", help="override data.reward")
        p.add_argument("--oracle", help="override data.oracle")
        p.add_argument("--samples", help="override data.samples")
    return parser


def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.steps is not None and args.steps < 0:
        raise ConfigError("--steps must be non-negative")
    for key in ("train", "test", "vocab", "generator", "reward", "oracle", "samples"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg.data, key, value)
    return cfg


def _error_kind(exc: BaseException) -> str:
    if isinstance(exc, ck.CheckpointError):
        return exc.kind
    if isinstance(exc, FileNotFoundError):
        return "missing_file"
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, TokenFileError):
        return "token_file"
    if isinstance(exc, TrainingDiverged):
        return "diverged"
    if isinstance(exc, _ArgumentError):
        return "usage"
    return "invalid_argument"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _effective_config(args)
        COMMANDS[args.command][0](cfg, args)
    except (_ArgumentError, ConfigError, UsageError, FileNotFoundError, ck.CheckpointError,
            TokenFileError, TrainingDiverged, ValueError, OSError) as exc:
        msg = str(exc) if not isinstance(exc, OSError) or not exc.filename else \
            f"{exc.strerror}: {exc.filename}"
        sys.stderr.write(json.dumps({"error": _error_kind(exc), "message": msg}) + "\n")
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
