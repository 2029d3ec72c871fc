"""Command-line entry point: ``diffurank <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data
from .config import EngineConfig, load_config
from .corruption import CorruptionConfig, MaskStrategy
from .errors import DiffuRankError
from .evaluation import filling_dynamics, ndcg_at_k, paired_ttest, write_dynamics_csv, write_metrics_csv
from .orchestrate import rerank_many
from .provider import (
    MaskPredictor,
    OracleConfig,
    RecordingProvider,
    RemoteProvider,
    ReplayProvider,
    SyntheticOracle,
)
from .sampler import read_traces, write_traces

log = logging.getLogger("diffurank")


def _build_provider(cfg: EngineConfig) -> MaskPredictor:
    if cfg.provider == "synthetic":
        if cfg.oracle is None:
            raise DiffuRankError("synthetic provider needs an oracle file ([oracle] path or --oracle)")
        raw = json.loads(Path(cfg.oracle).read_text(encoding="utf-8"))
        raw.update(cfg.oracle_overrides)
        return SyntheticOracle(OracleConfig.from_dict(raw))
    if cfg.provider == "replay":
        if cfg.replay_file is None:
            raise DiffuRankError("replay provider needs --replay-file")
        return ReplayProvider(cfg.replay_file)
    return RemoteProvider(cfg.resolved_remote_url, timeout=cfg.timeout)


def _engine_config(args) -> EngineConfig:
    overrides = {
        "strategy": args.strategy,
        "provider": args.provider,
        "k": args.k,
        "sampling_mode": args.mode,
        "window": args.window,
        "step_size": args.step_size,
        "top_k": args.top_k,
        "seed": args.seed,
        "jobs": args.jobs,
        "corpus": args.corpus,
        "queries": args.queries,
        "candidates": args.candidates,
        "oracle": args.oracle,
        "replay_file": args.replay_file,
        "remote_url": args.remote_url,
        "template_id": args.template_id,
    }
    return load_config(args.config, overrides)


def _run_rerank(args, *, record: bool = False) -> int:
    cfg = _engine_config(args)
    for name in ("corpus", "queries", "candidates"):
        if getattr(cfg, name) is None:
            raise DiffuRankError(f"missing data path: {name}")
    corpus = data.load_corpus(cfg.corpus)
    queries = data.load_queries(cfg.queries)
    cands = data.load_candidates(cfg.candidates, cfg.top_k, corpus)
    lists = data.build_candidate_lists(queries, cands, corpus, cfg.max_words)
    provider = _build_provider(cfg)
    if record:
        if args.replay_file is None:
            raise DiffuRankError("record needs --replay-file")
        provider = RecordingProvider(provider, ReplayProvider(args.replay_file, create=True))
    outcomes = rerank_many(lists, cfg.job(), provider, jobs=cfg.jobs)

    if args.out:
        data.write_run([o.ranking for o in outcomes], args.out, tag=args.tag)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            write_traces(
                fh,
                (
                    ({"query_id": o.ranking.query_id, "window": w}, tr)
                    for o in outcomes
                    for w, tr in o.traces
                ),
            )
    if args.run_log:
        with open(args.run_log, "w", encoding="utf-8") as fh:
            for o in outcomes:
                fh.write(json.dumps(o.log_record()) + "\n")
    failed = [o for o in outcomes if o.failed]
    log.info("reranked %d queries, %d failed", len(outcomes), len(failed))
    return 1 if failed else 0


def cmd_rerank(args) -> int:
    return _run_rerank(args)


def cmd_record(args) -> int:
    return _run_rerank(args, record=True)


def cmd_replay(args) -> int:
    store = ReplayProvider(args.replay_file)
    counts: dict[str, int] = {}
    for key in store.keys():
        strategy = store.request_of(key).get("strategy", "?")
        counts[strategy] = counts.get(strategy, 0) + 1
    problems = store.problems()
    for line in problems:
        print(f"invalid record {line}", file=sys.stderr)
    print(json.dumps({"file": str(store.path), "records": len(store), "by_strategy": counts, "invalid": len(problems)}))
    return 1 if problems else 0


def _parse_metric(metric: str) -> int:
    name, _, k = metric.partition("@")
    if name.lower() != "ndcg" or not k.isdigit():
        raise DiffuRankError(f"unsupported metric {metric!r}; use ndcg@K")
    return int(k)


def cmd_eval(args) -> int:
    k = _parse_metric(args.metric)
    run = data.load_run(args.run)
    qrels = data.load_qrels(args.qrels)
    per_query = {qid: ndcg_at_k(r, qrels, k, args.gain) for qid, r in run.items()}
    extra = []
    if args.compare:
        other = data.load_run(args.compare)
        other_scores = {qid: ndcg_at_k(r, qrels, k, args.gain) for qid, r in other.items()}
        common = [qid for qid in per_query if qid in other_scores]
        extra.append(("all", f"{args.metric}_compare", float(np.mean([other_scores[q] for q in common]))))
        if args.ttest:
            t, p = paired_ttest([per_query[q] for q in common], [other_scores[q] for q in common])
            extra += [("all", "ttest_t", t), ("all", "ttest_p", p)]
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        write_metrics_csv(out, per_query, args.metric, extra)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_dynamics(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        traces = [tr for _, tr in read_traces(fh)]
    dyn = filling_dynamics(traces, args.k)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_dynamics_csv(fh, dyn)
    return 0


def cmd_train_toy(args) -> int:
    from . import train

    records = data.load_training_data(args.data)
    if not records:
        raise DiffuRankError("training file is empty")
    if args.loss == "sft":
        sequences = []
        labels: set[str] = set()
        for rec in records:
            cands = data.assign_identifiers(rec.docs, rec.query)
            label_of = dict(zip((d.doc_id for d in cands.docs), cands.labels))
            labels.update(cands.labels)
            sequences.append(
                train.ranking_sequence(cands.labels, [label_of[d] for d in rec.teacher.doc_ids])
            )
        cfg = CorruptionConfig(strategy=MaskStrategy(args.mask), seed=args.seed)
        result = train.train_denoiser(sequences, sorted(labels), cfg, args.epochs, args.lr, args.seed)
        model, losses = result.params.to_dict(), result.losses
    else:
        fmap = train.HashedFeatureMap()
        instances = []
        for rec in records:
            feats = np.array([fmap(rec.query.text, d.text) for d in rec.docs])
            instances.append(
                train.TrainingInstance(rec.query.query_id, feats, rec.teacher.ranks_for([d.doc_id for d in rec.docs]))
            )
        result = train.train_toy(instances, args.loss, args.epochs, args.lr, args.seed, fmap)
        model, losses = result.scorer.to_dict(), result.losses
        model["training_ndcg@10"] = train.training_ndcg(result.scorer, instances)
    model["loss"] = args.loss
    Path(args.out).write_text(json.dumps(model) + "\n", encoding="utf-8")
    if args.curve:
        with open(args.curve, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "loss"])
            for epoch, value in enumerate(losses):
                writer.writerow([epoch, f"{value:.10g}"])
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    losses = args.loss or ["ce", "ranknet", "sft"]
    worst = run_gradcheck(losses, instances=args.instances, seed=args.seed)
    ok = True
    for name, dev in worst.items():
        status = "ok" if dev < args.tol else "FAIL"
        ok &= dev < args.tol
        print(f"{name}: max relative deviation {dev:.3e} [{status}]")
    return 0 if ok else 1


def cmd_synth(args) -> int:
    ds = data.generate_synthetic(
        args.queries, args.docs, args.seed, beta=args.beta, gamma=args.gamma, end_bias=args.end_bias
    )
    data.write_synthetic(ds, args.out_dir)
    return 0


def _add_rerank_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config")
    p.add_argument("--strategy", choices=["pointwise", "logits_list", "perm_samp", "perm_assign"])
    p.add_argument("--provider", choices=["synthetic", "replay", "remote"])
    p.add_argument("--k", type=int, help="sampling steps for perm_samp")
    p.add_argument("--mode", choices=["constrained", "vanilla"], help="perm_samp fill rule")
    p.add_argument("--window", type=int)
    p.add_argument("--step-size", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--candidates")
    p.add_argument("--oracle", help="oracle JSON for the synthetic provider")
    p.add_argument("--replay-file")
    p.add_argument("--remote-url")
    p.add_argument("--template-id")
    p.add_argument("--out", help="TREC run file to write")
    p.add_argument("--tag", default="diffurank")
    p.add_argument("--trace", help="JSON-lines sampler traces")
    p.add_argument("--run-log", help="JSON-lines per-query log")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffurank", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rerank", help="rerank candidate lists")
    _add_rerank_args(p)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("record", help="rerank while recording provider fixtures")
    _add_rerank_args(p)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", help="summarise a replay fixture file")
    p.add_argument("--replay-file", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("eval", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metric", default="ndcg@10")
    p.add_argument("--gain", choices=["exp", "linear"], default="exp")
    p.add_argument("--compare")
    p.add_argument("--ttest", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dynamics", help="first-fill statistics from sampler traces")
    p.add_argument("--trace", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("train-toy", help="train the toy scorer or denoiser")
    p.add_argument("--loss", choices=["ce", "ranknet", "sft"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask", choices=["random_mask", "docid_mask"], default="docid_mask")
    p.add_argument("--out", required=True)
    p.add_argument("--curve", help="loss-curve CSV")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("gradcheck", help="finite-difference check of all loss gradients")
    p.add_argument("--loss", action="append", choices=["ce", "ranknet", "sft"])
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--docs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=5.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--end-bias", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (DiffuRankError, OSError) as exc:
        print(f"diffurank {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
