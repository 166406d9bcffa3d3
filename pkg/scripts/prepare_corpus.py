"""Turn a raw text file (one sentence per line) into vocab + train/test token files.

    python3 scripts/prepare_corpus.py captions.txt out/ --min-freq 10 --min-len 8 --max-len 20 --n-test 5000
"""
import argparse
import json
from pathlib import Path

from irlgen.corpus import (build_vocab_and_filter, encode, split_train_test, tokenize, with_eos,
                           write_token_file, write_vocab)
from irlgen.numerics import RngStream


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("text")
    ap.add_argument("out")
    ap.add_argument("--min-freq", type=int, default=10)
    ap.add_argument("--min-len", type=int, default=1)
    ap.add_argument("--max-len", type=int, default=10**9)
    ap.add_argument("--n-test", type=int, default=5000)
    ap.add_argument("--n-train", type=int, default=None, help="cap on training sentences")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    lines = Path(args.text).read_text(encoding="utf-8").splitlines()
    texts = [tokenize(line) for line in lines if line.strip()]
    vocab, kept = build_vocab_and_filter(texts, args.min_freq, args.min_len, args.max_len)
    ids = with_eos(encode(vocab, s) for s in kept)
    train, test = split_train_test(ids, min(args.n_test, len(ids)), RngStream(args.seed, ("split",)))
    if args.n_train is not None:
        train = train[:args.n_train]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_vocab(out / "vocab.txt", vocab)
    write_token_file(out / "train.txt", train)
    write_token_file(out / "test.txt", test)
    print(json.dumps({"sentences_in": len(texts), "kept": len(kept), "vocab": len(vocab),
                      "content_vocab": vocab.n_content, "train": len(train), "test": len(test)}))


if __name__ == "__main__":
    main()
