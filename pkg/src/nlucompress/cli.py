"""Command-line entry point: train, compress, query, predict, eval, stats, bench.

Exit codes: 0 ok, 2 usage, 3 bad data, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import linear_model as lm
from .compressed_map import MAGIC, CompressedWeightMap, ContainerError
from .quantizer import DEFAULT_K

EXIT_USAGE, EXIT_DATA, EXIT_IO = 2, 3, 4

# Probe keys start with the separator, i.e. they carry an empty class label,
# which model ingest rejects; so they can never be members.
PROBE_PREFIX = lm.SEP.encode() + b"probe:"


class DataError(Exception):
    pass


# -- output helpers -----------------------------------------------------------


def format_kv(report: dict) -> str:
    return "".join(f"{k}={_kv_value(v)}\n" for k, v in report.items())


def _kv_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_kv(text: str) -> dict:
    """Inverse of :func:`format_kv`; numbers come back as int or float."""
    out = {}
    for line in text.splitlines():
        if not line or "=" not in line:
            continue
        key, _, raw = line.partition("=")
        for conv in (int, float):
            try:
                out[key] = conv(raw)
                break
            except ValueError:
                continue
        else:
            out[key] = raw
    return out


def format_text(report: dict, title: str | None = None) -> str:
    width = max(map(len, report)) if report else 0
    lines = [title] if title else []
    for k, v in report.items():
        shown = f"{v:.6g}" if isinstance(v, float) else str(v)
        lines.append(f"  {k:<{width}}  {shown}")
    return "\n".join(lines) + "\n"


def emit(report: dict, fmt: str, title: str | None = None) -> None:
    sys.stdout.write(format_kv(report) if fmt == "kv" else format_text(report, title))


# -- model loading ------------------------------------------------------------


def meta_path(container: str | Path) -> Path:
    return Path(str(container) + ".meta.json")


def is_container(path: str | Path) -> bool:
    with open(path, "rb") as f:
        return f.read(len(MAGIC)) == MAGIC


def load_container(path: str | Path) -> CompressedWeightMap:
    with open(path, "rb") as f:
        return CompressedWeightMap.load(f)


def load_any_model(path: str | Path) -> lm.Model:
    """A model TSV, or a container with its ``.meta.json`` class/bias sidecar."""
    if not is_container(path):
        return lm.load_model_tsv(path)
    cmap = load_container(path)
    meta = json.loads(meta_path(path).read_text(encoding="utf-8"))
    return lm.CompressedModel(meta["classes"], meta["biases"], cmap)


def mean_key_bytes(model: lm.SourceModel) -> float:
    if not model.weights:
        return 0.0
    return sum(len(k.encode("utf-8")) for k in model.weights) / len(model.weights)


def probe_keys(n: int, seed: int) -> list[bytes]:
    return [PROBE_PREFIX + b"%d:%d" % (seed, i) for i in range(n)]


def parse_key(raw: str, sep: str) -> bytes:
    return (raw.replace(sep, lm.SEP) if sep else raw).encode("utf-8")


# -- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    data = lm.load_dataset_tsv(args.data)
    trainer = lm.SgdTrainer(args.epochs, args.lr, args.l1, args.seed, args.max_ngram)
    model = trainer.fit(data)
    model.save_tsv(args.out)
    report = {
        "n_examples": len(data),
        "n_classes": len(model.classes),
        "n_weights": len(model.weights),
        "final_loss": trainer.epoch_losses[-1] if trainer.epoch_losses else float("nan"),
        "train_accuracy": lm.accuracy(model, data, args.max_ngram),
        "out": str(args.out),
    }
    emit(report, args.format, "train")
    return 0


def cmd_compress(args) -> int:
    src = lm.load_model_tsv(args.model)
    model = lm.compress_model(src, args.k, args.epsilon)
    with open(args.out, "wb") as f:
        written = model.cmap.save(f)
    meta_path(args.out).write_text(
        json.dumps({"classes": src.classes, "biases": src.biases}, indent=1), encoding="utf-8")
    stats = model.cmap.stats(avg_key_bytes=mean_key_bytes(src))
    report = {
        "n_entries": stats["n_keys"],
        "k": args.k,
        "epsilon": args.epsilon,
        "fingerprint_width": stats["fingerprint_width"],
        "input_bits": stats["baseline_bits"],
        "output_bits": stats["memory_bits"],
        "file_bytes": written,
        "bits_per_entry": stats["bits_per_entry"],
        "fold_reduction": stats["fold_reduction"],
    }
    emit(report, args.format, f"compressed {args.model} -> {args.out}")
    return 0


def cmd_query(args) -> int:
    cmap = load_container(args.container)
    for raw in args.keys:
        res = cmap.lookup(parse_key(raw, args.sep))
        print(f"{raw}\t{res.weight!r}\t{res.status}")
    if args.probes:
        _, present = cmap.lookup_many(probe_keys(args.probes, args.seed))
        report = {
            "probes": args.probes,
            "false_positives": int(present.sum()),
            "fp_rate": float(present.mean()),
            "fp_rate_expected": cmap.effective_epsilon,
        }
        emit(report, args.format, "non-member probes")
    return 0


def cmd_predict(args) -> int:
    model = load_any_model(args.model)
    data = lm.load_dataset_tsv(args.data)
    texts = [t for _, t in data]
    for pred, text in zip(lm.predict_many(model, texts, args.max_ngram), texts):
        print(f"{pred}\t{text}")
    return 0


def cmd_eval(args) -> int:
    src = lm.load_model_tsv(args.model)
    data = lm.load_dataset_tsv(args.data)
    runs: list[tuple[str, lm.Model]] = []
    for path in args.compressed or []:
        runs.append((str(path), load_any_model(path)))
    if not runs:
        for eps in args.epsilon:
            runs.append((f"k={args.k},epsilon={eps}", lm.compress_model(src, args.k, eps)))
    for name, comp in runs:
        try:
            report = lm.evaluate_agreement(src, comp, data, args.max_ngram)
        except ValueError as e:
            raise DataError(str(e)) from None
        emit({"model": name, **report.as_dict()}, args.format, f"eval {name}")
    return 0


def cmd_stats(args) -> int:
    cmap = load_container(args.container)
    emit(cmap.stats(avg_key_bytes=args.key_bytes), args.format, f"stats {args.container}")
    return 0


def _timed(fn, probes: list[bytes], threads: int) -> float:
    if threads <= 1:
        t0 = time.perf_counter()
        fn(probes)
        return time.perf_counter() - t0
    parts = [probes[i::threads] for i in range(threads)]
    with ThreadPoolExecutor(threads) as pool:
        t0 = time.perf_counter()
        list(pool.map(fn, parts))
        return time.perf_counter() - t0


def run_bench(cmap: CompressedWeightMap, plain: dict[bytes, float], n_probes: int,
              iterations: int = 5, threads: int = 1, seed: int = 0) -> dict:
    """Lookups/second for compressed vs. plain dict over member/non-member mixes."""
    rng = np.random.default_rng(seed)
    members = list(plain)
    mem = [members[i] for i in rng.integers(0, len(members), n_probes)]
    non = probe_keys(n_probes, seed)
    mixed = [mem[i] if i % 2 else non[i] for i in range(n_probes)]
    order = rng.permutation(n_probes)
    mixed = [mixed[i] for i in order]

    def comp(keys):
        cmap.lookup_many(keys)

    def base(keys):
        get = plain.get
        return [get(k, 0.0) for k in keys]

    report: dict = {"probes": n_probes, "iterations": iterations, "threads": threads}
    for label, probes in (("member", mem), ("nonmember", non), ("mixed", mixed)):
        tc = [_timed(comp, probes, threads) for _ in range(iterations)]
        tb = [_timed(base, probes, threads) for _ in range(iterations)]
        report[f"{label}_compressed_per_s"] = n_probes / statistics.median(tc)
        report[f"{label}_plain_per_s"] = n_probes / statistics.median(tb)
        report[f"{label}_ratio"] = statistics.median(tb) / statistics.median(tc)
        if label == "mixed":
            report["mixed_compressed_spread"] = (max(tc) - min(tc)) / statistics.median(tc)
    return report


def cmd_bench(args) -> int:
    cmap = load_container(args.container)
    src = lm.load_model_tsv(args.model)
    plain = {k.encode("utf-8"): w for k, w in src.weights.items()}
    report = run_bench(cmap, plain, args.probes, args.iterations, args.threads, args.seed)
    emit(report, args.format, f"bench {args.container}")
    return 0


# -- argument parsing ---------------------------------------------------------


def _positive_int(raw: str) -> int:
    v = int(raw)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _epsilon(raw: str) -> float:
    v = float(raw)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"epsilon must be in (0, 1], got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlucompress", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--format", choices=["text", "kv"], default="text")

    t = sub.add_parser("train", help="train an n-gram MaxEnt model from class<TAB>utterance rows")
    t.add_argument("data")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--l1", type=float, default=0.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-ngram", type=_positive_int, default=lm.DEFAULT_MAX_NGRAM)
    common(t)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compress", help="compress a model TSV into a container")
    c.add_argument("model")
    c.add_argument("out")
    c.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    c.add_argument("--epsilon", type=_epsilon, default=1e-4)
    common(c)
    c.set_defaults(func=cmd_compress)

    q = sub.add_parser("query", help="look up keys in a container")
    q.add_argument("container")
    q.add_argument("keys", nargs="*", help="class<SEP>feature keys")
    q.add_argument("--sep", default="\t", help="separator between class and feature in KEYS")
    q.add_argument("--probes", type=int, default=0, help="also measure FP rate on N non-members")
    q.add_argument("--seed", type=int, default=0)
    common(q)
    q.set_defaults(func=cmd_query)

    pr = sub.add_parser("predict", help="predict a class per utterance")
    pr.add_argument("model", help="model TSV or container")
    pr.add_argument("data")
    pr.add_argument("--max-ngram", type=_positive_int, default=lm.DEFAULT_MAX_NGRAM)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="prediction agreement between a model and its compression")
    e.add_argument("model")
    e.add_argument("data")
    e.add_argument("--compressed", action="append", help="container path (repeatable)")
    e.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    e.add_argument("--epsilon", type=_epsilon, nargs="+", default=[1e-4])
    e.add_argument("--max-ngram", type=_positive_int, default=lm.DEFAULT_MAX_NGRAM)
    common(e)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="section sizes of a container")
    s.add_argument("container")
    s.add_argument("--key-bytes", type=float, default=None, help="mean key length for the baseline")
    common(s)
    s.set_defaults(func=cmd_stats)

    b = sub.add_parser("bench", help="lookup throughput vs. a plain dict")
    b.add_argument("container")
    b.add_argument("--model", required=True, help="model TSV the container was built from")
    b.add_argument("--probes", type=_positive_int, default=1_000_000)
    b.add_argument("--iterations", type=_positive_int, default=5)
    b.add_argument("--threads", type=_positive_int, default=1)
    b.add_argument("--seed", type=int, default=0)
    common(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ContainerError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
