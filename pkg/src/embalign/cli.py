"""Command-line interface; every pipeline stage is independently invocable.

    embalign pipeline    --config cfg.json --out runs/a      # all stages
    embalign gen-data    --config cfg.json --out runs/a
    embalign embed       --config cfg.json --out runs/a --which trained
    embalign judge       --config cfg.json --out runs/a
    embalign mine        --config cfg.json --out runs/a
    embalign train-embed --config cfg.json --out runs/a
    embalign train-baseline --config cfg.json --out runs/a   # one-hot ablation
    embalign train-rerank --config cfg.json --out runs/a
    embalign retrieve    --config cfg.json --out runs/a --which trained
    embalign rerank      --config cfg.json --out runs/a
    embalign eval        --config cfg.json --out runs/a
    embalign sweep       --config cfg.json --out runs/sweeps --axis tau --values 0.01,0.02,0.03

Global flags: --seed, --threads, and the per-stage overrides --tau,
--k-negatives, --delta, --beta, --rerank-depth. Stages write artifacts
under --out and refuse inputs whose fingerprint does not match the
current config. The remote judge endpoint comes from the environment
variable EMBALIGN_JUDGE_URL when judge.kind is "remote".
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .checkpoint import encoder_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .corpus import derive_seed
from .encoder import encode_batch, init_encoder_params
from .judge import ScoreCache, judge_batch
from .metrics import build_report
from .miner import build_pool


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--out", required=True, help="artifact directory for this run")
    parser.add_argument("--seed", type=int, default=None, help="override the root seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (results are thread-invariant)")
    parser.add_argument("--tau", type=float, default=None, help="override align.tau")
    parser.add_argument("--k-negatives", type=int, default=None, help="override align.k_negatives")
    parser.add_argument("--delta", type=float, default=None, help="override miner.delta")
    parser.add_argument("--beta", type=float, default=None, help="override miner.beta")
    parser.add_argument("--rerank-depth", type=int, default=None, help="override eval.rerank_depth")


def _load(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "threads": args.threads,
        "tau": args.tau,
        "k_negatives": args.k_negatives,
        "delta": args.delta,
        "beta": args.beta,
        "rerank_depth": args.rerank_depth,
    }
    return load_config(args.config, overrides)


def _run(args: argparse.Namespace) -> pl.PipelineRun:
    run = pl.PipelineRun(_load(args), args.out)
    run.ensure_out()
    return run


def _data(run: pl.PipelineRun):
    if not run.path("corpus.jsonl").exists():
        corpus, gt = pl.stage_gen_data(run)
    else:
        corpus, gt = pl.load_data(run)
    if run.path("splits.json").exists():
        train_ids, eval_ids = pl.load_splits(run)
    else:
        train_ids, eval_ids = pl.stage_split(run, corpus)
    return corpus, gt, train_ids, eval_ids


def _baseline(run: pl.PipelineRun, corpus, train_ids):
    if run.path("baseline.ckpt").exists():
        return pl.load_encoder(run, "baseline.ckpt")
    return pl.stage_baseline(run, corpus, train_ids)


def _encoder_for(run: pl.PipelineRun, corpus, train_ids, which: str):
    if which == "baseline":
        return _baseline(run, corpus, train_ids)
    if which == "init":
        params = init_encoder_params(pl.encoder_dims(run.cfg), derive_seed(run.cfg.seed, "encoder-init"))
        return params
    name = {"trained": "encoder.ckpt", "onehot": "encoder_onehot.ckpt"}[which]
    return pl.load_encoder(run, name)


def cmd_gen_data(args) -> int:
    run = _run(args)
    corpus, _, train_ids, eval_ids = _data(run)
    print(f"corpus: {len(corpus.queries)} queries, {len(corpus.candidates)} candidates "
          f"({len(train_ids)} train / {len(eval_ids)} eval) -> {run.out}")
    return 0


def cmd_embed(args) -> int:
    run = _run(args)
    corpus, _, train_ids, _ = _data(run)
    params = _encoder_for(run, corpus, train_ids, args.which)
    ids = [it.id for it in corpus.items]
    embs = encode_batch(params, corpus.items).embeddings
    out = run.path(f"embeddings_{args.which}.npz")
    np.savez(out, ids=np.array(ids), embeddings=embs, fingerprint=np.array(run.fp))
    run.record(out.name)
    print(f"embedded {len(ids)} items with {args.which} encoder -> {out}")
    return 0


def cmd_judge(args) -> int:
    run = _run(args)
    corpus, gt, train_ids, _ = _data(run)
    baseline = _baseline(run, corpus, train_ids)
    judge = pl.make_judge(run.cfg, gt)
    cache = ScoreCache(run.path("judge_cache.jsonl"))
    index = pl.candidate_index(baseline, corpus)
    targets = dict(corpus.queries)
    n_pairs = 0
    for qid in train_ids:
        query = corpus.item(qid)
        pool = build_pool(query, targets[qid], index, baseline, run.cfg.miner)
        pairs = [(query, corpus.item(targets[qid]))]
        pairs += [(query, corpus.item(cid)) for cid, _ in pool.entries]
        judge_batch(judge, pairs, cache=cache)
        n_pairs += len(pairs)
    cache.flush()
    run.record("judge_cache.jsonl")
    print(f"judged {n_pairs} pairs across {len(train_ids)} queries -> {run.path('judge_cache.jsonl')}")
    return 0


def cmd_mine(args) -> int:
    run = _run(args)
    corpus, gt, train_ids, _ = _data(run)
    baseline = _baseline(run, corpus, train_ids)
    mined = pl.stage_mine(run, corpus, gt, baseline, train_ids)
    n_fallback = sum(1 for m in mined.values() if m.fallback_used)
    print(f"mined {len(mined)} queries ({n_fallback} via fallback) -> {run.path('mined.jsonl')}")
    return 0


def cmd_train_embed(args) -> int:
    run = _run(args)
    corpus, _, train_ids, _ = _data(run)
    mined = pl.load_mined_sets(run)
    _, trained = pl.stage_train_embed(run, corpus, mined, train_ids)
    print(f"trained encoder ({run.cfg.align.mode}, {run.cfg.align.steps} steps) -> {run.path('encoder.ckpt')}")
    return 0


def cmd_train_baseline(args) -> int:
    run = _run(args)
    corpus, _, train_ids, _ = _data(run)
    mined = pl.load_mined_sets(run)
    init = init_encoder_params(pl.encoder_dims(run.cfg), derive_seed(run.cfg.seed, "encoder-init"))
    params, trace = pl.baseline_infonce_train(corpus, mined, run.cfg.align, init, run.cfg.seed,
                                              query_ids=train_ids)
    save_checkpoint(run.path("encoder_onehot.ckpt"), encoder_checkpoint(params, run.cfg.seed, run.fp))
    with run.path("trace_embed_onehot.jsonl").open("w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps({"step": rec.step, "loss": rec.loss}) + "\n")
    run.record("encoder_onehot.ckpt", "trace_embed_onehot.jsonl")
    print(f"trained one-hot baseline encoder -> {run.path('encoder_onehot.ckpt')}")
    return 0


def cmd_train_rerank(args) -> int:
    run = _run(args)
    corpus, _, train_ids, _ = _data(run)
    mined = pl.load_mined_sets(run)
    trained = pl.load_encoder(run, "encoder.ckpt")
    pl.stage_train_rerank(run, corpus, mined, trained, train_ids)
    print(f"trained reranker -> {run.path('reranker.ckpt')}")
    return 0


def cmd_retrieve(args) -> int:
    run = _run(args)
    corpus, _, train_ids, eval_ids = _data(run)
    params = _encoder_for(run, corpus, train_ids, args.which)
    depth = max(max(run.cfg.eval.recall_ks), run.cfg.eval.rerank_depth)
    lists = pl.retrieve_all(params, corpus, eval_ids, depth)
    name = "retrieval.jsonl" if args.which == "trained" else f"retrieval_{args.which}.jsonl"
    pl.save_ranked_lists(run.path(name), lists)
    run.record(name)
    print(f"retrieved top-{depth} for {len(lists)} eval queries with {args.which} encoder -> {run.path(name)}")
    return 0


def cmd_rerank(args) -> int:
    run = _run(args)
    corpus, _, _, _ = _data(run)
    trained = pl.load_encoder(run, "encoder.ckpt")
    reranker = pl.load_reranker(run)
    lists = pl.load_ranked_lists(run.require("retrieval.jsonl"))
    reranked = pl.rerank_lists(reranker, trained, corpus, lists, run.cfg.eval.rerank_depth)
    pl.save_ranked_lists(run.path("reranked.jsonl"), reranked)
    run.record("reranked.jsonl")
    print(f"reranked {len(reranked)} lists at depth {run.cfg.eval.rerank_depth} -> {run.path('reranked.jsonl')}")
    return 0


def cmd_eval(args) -> int:
    run = _run(args)
    corpus, gt, train_ids, eval_ids = _data(run)
    init = _encoder_for(run, corpus, train_ids, "init")
    trained = pl.load_encoder(run, "encoder.ckpt")
    reranker = pl.load_reranker(run)
    reports = pl.stage_eval(run, corpus, gt, eval_ids, init, trained, reranker)
    print(pl.report_table(reports), end="")
    return 0


def cmd_pipeline(args) -> int:
    result = pl.run_pipeline(_load(args), args.out, verbose=True)
    print(pl.report_table(result.reports), end="")
    return 0


def _parse_values(axis: str, raw: str) -> list:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("--values must list at least one value")
    if axis == "k_negatives":
        return [int(p) for p in parts]
    if axis in ("tau", "judge_noise"):
        return [float(p) for p in parts]
    return parts  # components: strings


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = _parse_values(args.axis, args.values)
    result = pl.ablation_sweep(cfg, args.axis, values, args.out)
    print(result.table_path.read_text(encoding="utf-8"), end="")
    failures = [row for row in result.rows if not row.ok]
    return 1 if failures else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="embalign",
        description="judge-scored hard-negative mining, distribution-alignment training, and reranking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    specs = [
        ("gen-data", cmd_gen_data, "generate the synthetic corpus and split"),
        ("embed", cmd_embed, "embed every item with a chosen encoder"),
        ("judge", cmd_judge, "judge all pool pairs into the score cache"),
        ("mine", cmd_mine, "mine hard negatives for the training queries"),
        ("train-embed", cmd_train_embed, "train the encoder on mined sets"),
        ("train-baseline", cmd_train_baseline, "train the one-hot ablation encoder"),
        ("train-rerank", cmd_train_rerank, "train the reranker"),
        ("retrieve", cmd_retrieve, "retrieve eval queries with a chosen encoder"),
        ("rerank", cmd_rerank, "rerank the retrieval lists"),
        ("eval", cmd_eval, "evaluate and write the report"),
        ("pipeline", cmd_pipeline, "run every stage in order"),
        ("sweep", cmd_sweep, "run an ablation sweep"),
    ]
    for name, fn, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(fn=fn)
        if name in ("embed", "retrieve"):
            p.add_argument("--which", default="trained",
                           choices=["baseline", "init", "trained", "onehot"],
                           help="which encoder to use")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=list(pl.SWEEP_AXES))
            p.add_argument("--values", required=True, help="comma-separated sweep values")

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
