"""Command-line entry point wiring the pipeline stages into subcommands.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
divergence.  Every subcommand is deterministic given --seed; file outputs
are written atomically (temp file + rename).  --threads 1 pins the BLAS
thread pools before numpy is imported, which makes reductions bitwise
stable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile

log = logging.getLogger("mathtrans")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def atomic_write(path, data) -> None:
    path = os.fspath(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _set_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _config_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def _parser_options(args):
    from .parser import ParserOptions
    return ParserOptions(command_end=args.command_end,
                         concat_end=args.concat_end,
                         infix_to_prefix=args.infix_to_prefix)


def _add_parse_flags(p, default_markers=False):
    p.add_argument("--command-end", action="store_true",
                   default=default_markers)
    p.add_argument("--concat-end", action="store_true",
                   default=default_markers)
    p.add_argument("--infix-to-prefix", action="store_true", default=False)


def build_argparser() -> _Parser:
    top = _Parser(prog="mathtrans",
                  description="tree-to-tree translation of LaTeX formulae")
    top.add_argument("--version", action="store_true",
                     help="print version and build info")
    top.add_argument("--threads", type=int, default=1,
                     help="worker/BLAS thread cap (1 = fully deterministic)")
    top.add_argument("--verbose", action="store_true")
    sub = top.add_subparsers(dest="command")

    p = sub.add_parser("gen-corpus", help="write a synthetic paired corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("augment", help="comparator-split augmentation")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("parse", help="parse formulas to canonical JSON trees")
    p.add_argument("--input", required=True,
                   help="one formula per line")
    p.add_argument("--out", required=True, help="one JSON tree per line")
    _add_parse_flags(p)
    p.add_argument("--no-swap", action="store_true",
                   help="skip the right-child-biggest traversal")

    p = sub.add_parser("cluster", help="cluster tree topologies")
    p.add_argument("--in", dest="input", required=True,
                   help="jsonl of trees or [tree_in, tree_out] pairs")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--report", action="store_true",
                   help="print #clusters, total hull size, cost proxy")

    p = sub.add_parser("train", help="train the translator")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="flat key=value file of TrainConfig keys")
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--log", help="metrics.csv path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--val-corpus")
    p.add_argument("--augment", action="store_true",
                   help="augment the training pairs before parsing")
    _add_parse_flags(p, default_markers=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint directory (or model.ckpt path)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--content-only-bow", action="store_true")

    p = sub.add_parser("translate", help="translate one generic formula")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--formula", help="the formula (default: read stdin)")
    p.add_argument("--formula-file")

    p = sub.add_parser("disambiguate",
                       help="classify a symbol's semantic macro")
    p.add_argument("--train", action="store_true")
    p.add_argument("--corpus", help="paired corpus for --train")
    p.add_argument("--checkpoint", help="model file (read, or written with "
                                        "--train)")
    p.add_argument("--symbol")
    p.add_argument("--formula")
    p.add_argument("--formula-file")
    p.add_argument("--hidden-layers", type=int, default=2)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("demo", help="gen-corpus -> augment -> parse -> "
                                    "cluster -> train -> eval, end to end")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=48)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--state-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    return top


# -- handlers ---------------------------------------------------------------

def cmd_gen_corpus(args) -> int:
    from .corpus import format_pairs, gen_synthetic_corpus
    pairs = gen_synthetic_corpus(args.seed, args.n)
    atomic_write(args.out, format_pairs(pairs))
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    from .corpus import augment_corpus, format_pairs, read_pairs
    pairs = read_pairs(args.input)
    out = augment_corpus(pairs)
    atomic_write(args.out, format_pairs(out))
    print(f"augmented {len(pairs)} pairs into {len(out)} terms")
    return EXIT_OK


def cmd_parse(args) -> int:
    from .parser import parse_formula
    opts = _parser_options(args)
    lines_out = []
    with open(args.input, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            tree = parse_formula(line, opts,
                                 swap_traversal=not args.no_swap)
            lines_out.append(tree.to_json())
    atomic_write(args.out, "".join(s + "\n" for s in lines_out))
    print(f"parsed {len(lines_out)} formulas")
    return EXIT_OK


def cmd_cluster(args) -> int:
    from .clustering import (Schedules, cost_proxy, pick_clustering,
                             total_padded_size)
    from .trees import BinTree
    masks = []
    with open(args.input, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            trees = obj if isinstance(obj, list) else [obj]
            mask = tuple(BinTree.from_obj(t).topology() for t in trees)
            masks.append((lineno, mask))
    clustering = pick_clustering(
        masks, Schedules.default(len(masks), steps=args.steps))
    atomic_write(args.out, clustering.to_json())
    if args.report:
        total = total_padded_size(clustering)
        proxy = cost_proxy(clustering, 1.0)
        print(f"clusters: {len(clustering.clusters)}")
        print(f"total padded size: {total}")
        print(f"cost proxy (alpha=1, x1e-6): {proxy * 1e-6:.0f}")
    print(f"wrote {len(clustering.clusters)} clusters for {len(masks)} "
          f"trees to {args.out}")
    return EXIT_OK


def _read_config_file(path) -> dict:
    from dataclasses import fields

    from .training import TrainConfig
    known = {f.name: f.type for f in fields(TrainConfig)}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            current = getattr(TrainConfig, key, None)
            if isinstance(current, bool):
                out[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                out[key] = int(value)
            elif isinstance(current, float):
                out[key] = float(value)
            else:
                out[key] = value
    return out


def _write_metrics_csv(path, logs) -> None:
    rows = ["epoch,train_loss,train_pf,train_pm,val_pf,val_pm,val_pb,"
            "wall_seconds"]
    for r in logs:
        rows.append(f"{r.epoch},{r.train_loss:.6f},{r.train_pf:.6f},"
                    f"{r.train_pm:.6f},{r.val_pf:.6f},{r.val_pm:.6f},"
                    f"{r.val_pb:.6f},{r.wall_seconds:.3f}")
    atomic_write(path, "".join(s + "\n" for s in rows))


def _save_run(ckpt_dir, result, opts, config) -> None:
    from dataclasses import asdict

    from .treelstm import save_checkpoint
    os.makedirs(ckpt_dir, exist_ok=True)
    meta = {
        "vocab_hash": result.vocab.content_hash(),
        "parser_options": asdict(opts),
        "train_config": asdict(config),
        "config_hash": _config_hash(asdict(config)),
    }
    save_checkpoint(os.path.join(ckpt_dir, "model.ckpt"), result.model, meta)
    atomic_write(os.path.join(ckpt_dir, "vocab.json"), result.vocab.to_json())
    atomic_write(os.path.join(ckpt_dir, "clusters.json"),
                 result.clustering.to_json())


def cmd_train(args) -> int:
    from .corpus import augment_corpus, read_pairs
    from .training import Diverged, TrainConfig, pretrain_autoencoders, train
    overrides = _read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    try:
        config = TrainConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))
    opts = _parser_options(args)
    pairs = read_pairs(args.corpus)
    if args.augment:
        pairs = augment_corpus(pairs)
    val_pairs = read_pairs(args.val_corpus) if args.val_corpus else None
    try:
        if config.mode == "autoencoder-pretrain":
            result, _, _ = pretrain_autoencoders(pairs, config, opts,
                                                 val_pairs=val_pairs)
        else:
            result = train(pairs, config, opts, val_pairs=val_pairs)
    except Diverged as exc:
        log.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    _save_run(args.checkpoint_dir, result, opts, config)
    if args.log:
        _write_metrics_csv(args.log, result.logs)
    last = result.logs[-1] if result.logs else None
    if last:
        print(f"trained {last.epoch} epochs ({result.updates} updates), "
              f"final train loss {last.train_loss:.3f}, "
              f"p_f {last.train_pf:.3f}, p_m {last.train_pm:.3f}")
    return EXIT_OK


def _load_run(checkpoint):
    from .encoding import Vocabulary
    from .parser import ParserOptions
    from .treelstm import load_checkpoint
    path = checkpoint
    if os.path.isdir(path):
        path = os.path.join(path, "model.ckpt")
    ckpt_dir = os.path.dirname(path)
    with open(os.path.join(ckpt_dir, "vocab.json"), encoding="utf-8") as fh:
        vocab = Vocabulary.from_json(fh.read())
    model, meta = load_checkpoint(path,
                                  expect_vocab_hash=vocab.content_hash())
    opts = ParserOptions(**meta["parser_options"])
    clusters_path = os.path.join(ckpt_dir, "clusters.json")
    clustering = None
    if os.path.exists(clusters_path):
        from .clustering import Clustering
        with open(clusters_path, encoding="utf-8") as fh:
            clustering = Clustering.from_json(fh.read())
    return model, vocab, opts, clustering


def cmd_eval(args) -> int:
    from .corpus import read_pairs
    from .training import evaluate_model, prepare
    model, vocab, opts, _ = _load_run(args.checkpoint)
    pairs = read_pairs(args.corpus)
    prep = prepare(pairs, opts, vocab=vocab)
    report = evaluate_model(model, prep.batches,
                            content_only_bow=args.content_only_bow)
    atomic_write(args.report,
                 json.dumps(report.to_dict(), sort_keys=True, indent=2)
                 + "\n")
    print(f"p_f={report.p_f:.4f} p_m={report.p_m:.4f} p_b={report.p_b:.4f} "
          f"({report.n_trees} trees, {report.n_positions} positions)")
    return EXIT_OK


def translate_formula(model, vocab, opts, clustering, formula: str) -> str:
    """parse -> pad to a matched cluster hull -> encode -> decode -> strip
    -> detokenize.

    Cluster matching prefers a cluster that trained on this exact input
    topology (the member shapes are recorded in the cluster file), then the
    smallest input hull that subsumes it; a match beyond twice the input
    size falls back to the input's own topology.  The input tree's swap
    bits transfer to the decoder hull where positions align.
    """
    import numpy as np

    from .clustering import subsumes
    from .encoding import encode_tree, pad_to, strip_prediction
    from .parser import detokenize, parse_formula
    from .trees import BinTree, bleaf, bnode

    tree = parse_formula(formula, opts)
    enc = encode_tree(tree, vocab)
    hull_in = hull_out = enc.topo
    if clustering is not None:
        def order_key(c):
            return (c.hulls[0].size, c.hulls[0].struct)

        exact = [c for c in clustering.clusters
                 if any(m[0] == enc.topo for m in c.member_masks)]
        subsuming = [c for c in clustering.clusters
                     if subsumes(c.hulls[0], enc.topo)]
        best = min(exact, key=order_key) if exact \
            else (min(subsuming, key=order_key) if subsuming else None)
        if best is not None and best.hulls[0].size <= 2 * enc.topo.size:
            hull_in = best.hulls[0]
            hull_out = best.hulls[-1]
    padded_in = pad_to(hull_in, enc)
    if subsumes(hull_out, enc.topo):
        swaps_out = pad_to(hull_out, enc).swaps
    else:
        swaps_out = np.zeros(hull_out.size, dtype=np.int64)
    enc_roots = model.encode(padded_in.values[None, :],
                             padded_in.swaps[None, :].astype(float), hull_in)
    init = model.bridge(enc_roots)
    _, preds = model.decode(init, hull_out,
                            swaps_out[None, :].astype(float))
    stripped = strip_prediction(hull_out, preds[0], swaps_out)
    if stripped is None:
        return ""
    left, right = stripped.topo.child_arrays()

    def build(i: int) -> BinTree:
        if left[i] < 0:
            return bleaf(vocab.decode(int(stripped.values[i])))
        return bnode(build(int(left[i])), build(int(right[i])),
                     swap=int(stripped.swaps[i]))

    return detokenize(build(0))


def cmd_translate(args) -> int:
    model, vocab, opts, clustering = _load_run(args.checkpoint)
    if args.formula:
        formula = args.formula
    elif args.formula_file:
        with open(args.formula_file, encoding="utf-8") as fh:
            formula = fh.read().strip()
    else:
        formula = sys.stdin.read().strip()
    print(translate_formula(model, vocab, opts, clustering, formula))
    return EXIT_OK


def cmd_disambiguate(args) -> int:
    from .corpus import read_pairs
    from .disambig import (BowFeaturizer, DisambigModel, build_candidates,
                           extract_instances)
    if args.train:
        if not args.corpus or not args.checkpoint:
            raise UsageError("--train needs --corpus and --checkpoint")
        pairs = read_pairs(args.corpus)
        table = build_candidates(pairs)
        instances = extract_instances(pairs)
        feat = BowFeaturizer.from_formulas([p.generic for p in pairs])
        model = DisambigModel(table, feat, hidden_layers=args.hidden_layers,
                              seed=args.seed)
        model.train(instances, epochs=args.epochs, seed=args.seed)
        model.save(args.checkpoint)
        acc = model.accuracy(instances)
        print(f"trained on {len(instances)} instances, "
              f"{len(table.symbols())} symbols; training accuracy "
              f"{acc:.3f}")
        return EXIT_OK
    if not args.checkpoint or not args.symbol:
        raise UsageError("need --checkpoint and --symbol (or --train)")
    if args.formula:
        formula = args.formula
    elif args.formula_file:
        with open(args.formula_file, encoding="utf-8") as fh:
            formula = fh.read().strip()
    else:
        raise UsageError("need --formula or --formula-file")
    model = DisambigModel.load(args.checkpoint)
    print(model.classify(args.symbol, formula))
    return EXIT_OK


def cmd_demo(args) -> int:
    """The whole pipeline on a small synthetic corpus, deterministically."""
    from .corpus import (augment_corpus, format_pairs, gen_synthetic_corpus,
                         split_train_val)
    from .parser import ParserOptions, parse_formula
    from .training import (Diverged, TrainConfig, evaluate_model, prepare,
                           train)
    out = args.out
    os.makedirs(out, exist_ok=True)
    opts = ParserOptions()
    pairs = gen_synthetic_corpus(args.seed, args.n)
    atomic_write(os.path.join(out, "corpus.tsv"), format_pairs(pairs))
    train_pairs, val_pairs = split_train_val(pairs, 0.9, args.seed)
    train_pairs = augment_corpus(train_pairs)
    atomic_write(os.path.join(out, "train_aug.tsv"),
                 format_pairs(train_pairs))
    trees = [parse_formula(p.generic, opts).to_json()
             for p in train_pairs]
    atomic_write(os.path.join(out, "trees.jsonl"),
                 "".join(s + "\n" for s in trees))
    config = TrainConfig(epochs=args.epochs, seed=args.seed,
                         state_size=args.state_size,
                         learning_rate=args.learning_rate)
    try:
        result = train(train_pairs, config, opts, val_pairs=val_pairs)
    except Diverged as exc:
        log.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    _save_run(out, result, opts, config)
    _write_metrics_csv(os.path.join(out, "metrics.csv"), result.logs)
    val_prep = prepare(val_pairs, opts, vocab=result.vocab)
    report = evaluate_model(result.model, val_prep.batches)
    atomic_write(os.path.join(out, "report.json"),
                 json.dumps(report.to_dict(), sort_keys=True, indent=2)
                 + "\n")
    print(f"demo complete: {len(train_pairs)} training terms, "
          f"{len(result.clustering.clusters)} clusters, "
          f"val p_f={report.p_f:.3f} p_m={report.p_m:.3f} "
          f"p_b={report.p_b:.3f}")
    return EXIT_OK


HANDLERS = {
    "gen-corpus": cmd_gen_corpus,
    "augment": cmd_augment,
    "parse": cmd_parse,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "eval": cmd_eval,
    "translate": cmd_translate,
    "disambiguate": cmd_disambiguate,
    "demo": cmd_demo,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    top = build_argparser()
    try:
        args = top.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(top.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    _set_threads(args.threads)
    if args.version:
        from . import __version__, kernel_backend
        print(f"mathtrans {__version__} (kernels: {kernel_backend()})")
        return EXIT_OK
    if not args.command:
        print(top.format_help(), end="")
        return EXIT_USAGE
    try:
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        from .corpus import CorpusError
        from .disambig import DisambigError
        from .encoding import EncodingError
        from .metrics import MetricError
        from .parser import ParseError
        from .trees import TreeError
        if isinstance(exc, (ParseError, CorpusError, EncodingError,
                            TreeError, MetricError, DisambigError,
                            ValueError, json.JSONDecodeError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise


if __name__ == "__main__":
    sys.exit(main())
