"""End-to-end orchestration: generate -> mine -> train -> retrieve -> rerank -> eval.

Every run is a pure function of (config, seed): all randomness flows from
the root seed through named derivations (stage name, query id), stages
execute sequentially with fixed reduction orders, and reports carry no
wall-clock state. out/MANIFEST.json records the config fingerprint plus
every artifact written; loading a stage input under a different
fingerprint is refused rather than silently mixed.

Artifacts (all under the --out directory):
    corpus.jsonl, ground_truth.json    synthetic data + oracle relevance
    splits.json                        train/eval query split
    baseline.ckpt                      frozen pool-construction encoder
    judge_cache.jsonl                  (query, candidate) -> score cache
    mined.jsonl                        per-query mined negative sets
    encoder_init.ckpt, encoder.ckpt    random-init and trained encoder
    trace_embed.jsonl                  per-step loss records
    reranker.ckpt, trace_rerank.jsonl  reranker training artifacts
    retrieval_untrained.jsonl, retrieval.jsonl, reranked.jsonl
    report.json, report.txt            eval sections (see build_report)
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import aligner
from .aligner import AlignConfig, TraceRecord
from .checkpoint import (
    Checkpoint,
    encoder_checkpoint,
    encoder_from_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .config import JUDGE_ENDPOINT_ENV, ConfigError, RunConfig, fingerprint
from .corpus import Corpus, derive_rng, derive_seed, load_corpus, save_corpus
from .datagen import GroundTruth, generate, load_ground_truth, save_ground_truth
from .encoder import EncoderDims, EncoderParams, encode_batch, init_encoder_params
from .judge import Judge, OracleJudge, RemoteJudge, ScoreCache
from .metrics import EvalReport, build_report
from .miner import MinedSet, load_mined, mine_corpus, persist_mined
from .reranker import (
    RerankerDims,
    RerankerParams,
    rerank,
    train_reranker,
)
from .retrieval import Index, RankedList, build_index, top_k


class FingerprintMismatch(Exception):
    """An on-disk artifact belongs to a different (config, seed) run."""


MANIFEST_NAME = "MANIFEST.json"


@dataclass
class PipelineResult:
    fingerprint: str
    out_dir: Path
    reports: dict[str, EvalReport]
    corpus: Corpus
    ground_truth: GroundTruth
    train_ids: list[str]
    eval_ids: list[str]
    mined: dict[str, MinedSet]
    init_params: EncoderParams
    trained_params: EncoderParams
    reranker_params: RerankerParams


class PipelineRun:
    """One (config, out-dir) run; owns the manifest and artifact paths."""

    def __init__(self, cfg: RunConfig, out_dir: str | Path):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.fp = fingerprint(cfg)

    def path(self, name: str) -> Path:
        return self.out / name

    def ensure_out(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        manifest = self.path(MANIFEST_NAME)
        if manifest.exists():
            payload = json.loads(manifest.read_text(encoding="utf-8"))
            if payload.get("fingerprint") != self.fp:
                raise FingerprintMismatch(
                    f"{self.out} holds artifacts for fingerprint {payload.get('fingerprint')!r}, "
                    f"current config is {self.fp!r}"
                )
        else:
            self._write_manifest({})

    def _write_manifest(self, artifacts: dict) -> None:
        payload = {"fingerprint": self.fp, "config": self.cfg.to_json(), "artifacts": artifacts}
        self.path(MANIFEST_NAME).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    def _artifacts(self) -> dict:
        manifest = self.path(MANIFEST_NAME)
        if not manifest.exists():
            return {}
        return json.loads(manifest.read_text(encoding="utf-8")).get("artifacts", {})

    def record(self, *names: str) -> None:
        arts = self._artifacts()
        for name in names:
            arts[name] = True
        self._write_manifest(arts)

    def require(self, name: str) -> Path:
        self.ensure_out()
        if not self.path(name).exists():
            raise FileNotFoundError(f"stage input {name} missing under {self.out}; run the earlier stage first")
        return self.path(name)


# ---------------------------------------------------------------------------
# Stage: data generation and loading
# ---------------------------------------------------------------------------


def stage_gen_data(run: PipelineRun) -> tuple[Corpus, GroundTruth]:
    run.ensure_out()
    corpus, gt = generate(run.cfg.data)
    save_corpus(run.path("corpus.jsonl"), corpus)
    save_ground_truth(run.path("ground_truth.json"), gt)
    run.record("corpus.jsonl", "ground_truth.json")
    return corpus, gt


def load_data(run: PipelineRun) -> tuple[Corpus, GroundTruth]:
    run.require("corpus.jsonl")
    run.require("ground_truth.json")
    gt = load_ground_truth(run.path("ground_truth.json"))
    queries = sorted(gt.targets.items())  # generation emits ids in ascending order
    corpus = load_corpus(run.path("corpus.jsonl"), queries)
    return corpus, gt


def split_queries(cfg: RunConfig, corpus: Corpus) -> tuple[list[str], list[str]]:
    """Seeded train/eval split over the corpus queries."""
    qids = [qid for qid, _ in corpus.queries]
    rng = derive_rng(cfg.seed, "split")
    order = rng.permutation(len(qids))
    n_eval = max(1, int(round(cfg.eval.eval_fraction * len(qids))))
    if n_eval >= len(qids):
        raise ConfigError("eval_fraction leaves no training queries")
    eval_ids = sorted(qids[i] for i in order[:n_eval])
    train_ids = sorted(qids[i] for i in order[n_eval:])
    return train_ids, eval_ids


def stage_split(run: PipelineRun, corpus: Corpus) -> tuple[list[str], list[str]]:
    train_ids, eval_ids = split_queries(run.cfg, corpus)
    run.path("splits.json").write_text(
        json.dumps({"fingerprint": run.fp, "train": train_ids, "eval": eval_ids}), encoding="utf-8"
    )
    run.record("splits.json")
    return train_ids, eval_ids


def load_splits(run: PipelineRun) -> tuple[list[str], list[str]]:
    payload = json.loads(run.require("splits.json").read_text(encoding="utf-8"))
    if payload.get("fingerprint") != run.fp:
        raise FingerprintMismatch("splits.json belongs to a different run")
    return list(payload["train"]), list(payload["eval"])


# ---------------------------------------------------------------------------
# Stage: baseline encoder (pool construction), embedding, judging, mining
# ---------------------------------------------------------------------------


def make_judge(cfg: RunConfig, gt: GroundTruth) -> Judge:
    if cfg.judge.kind == "oracle":
        return OracleJudge(gt, noise=cfg.judge.noise, seed=derive_seed(cfg.seed, "judge"))
    endpoint = os.environ.get(JUDGE_ENDPOINT_ENV)
    if not endpoint:
        raise ConfigError(f"judge.kind is 'remote' but {JUDGE_ENDPOINT_ENV} is not set")
    return RemoteJudge(endpoint, retries=cfg.judge.retries, timeout=cfg.judge.timeout)


def encoder_dims(cfg: RunConfig) -> EncoderDims:
    return EncoderDims(
        raw_dim=cfg.data.raw_dim, hidden_dim=cfg.encoder.hidden_dim, embed_dim=cfg.encoder.embed_dim
    )


def warmup_baseline(cfg: RunConfig, corpus: Corpus, train_ids: list[str]) -> EncoderParams:
    """Frozen pool-construction encoder: random init, then one-hot warm-up
    against seeded random negatives (never mined ones)."""
    init = init_encoder_params(encoder_dims(cfg), derive_seed(cfg.seed, "baseline-init"))
    steps = cfg.baseline.warmup_steps
    if steps == 0:
        return init
    targets = dict(corpus.queries)
    cand_ids = np.array(corpus.candidates)
    pos_of = {cid: i for i, cid in enumerate(corpus.candidates)}
    k = min(cfg.baseline.n_random_negatives, len(cand_ids) - 1)
    pseudo: dict[str, MinedSet] = {}
    for qid in train_ids:
        target = targets[qid]
        rng = derive_rng(cfg.seed, "baseline-negs", qid)
        draw = rng.choice(len(cand_ids) - 1, size=k, replace=False)
        skip = pos_of[target]
        negs = [str(cand_ids[i if i < skip else i + 1]) for i in sorted(draw)]
        pseudo[qid] = MinedSet(
            query_id=qid, target_id=target, target_score=1.0,
            negatives=[(cid, 0.0) for cid in negs], fallback_used=False,
        )
    warm_cfg = AlignConfig(
        tau=cfg.align.tau, k_negatives=k, batch_size=cfg.baseline.batch_size,
        steps=steps, lr=cfg.baseline.lr, mode="one_hot",
    )
    params, _ = aligner.train(
        corpus, pseudo, warm_cfg, init, derive_seed(cfg.seed, "baseline-warmup"), query_ids=train_ids
    )
    return params


def stage_baseline(run: PipelineRun, corpus: Corpus, train_ids: list[str]) -> EncoderParams:
    params = warmup_baseline(run.cfg, corpus, train_ids)
    save_checkpoint(run.path("baseline.ckpt"), encoder_checkpoint(params, run.cfg.seed, run.fp))
    run.record("baseline.ckpt")
    return params


def load_encoder(run: PipelineRun, name: str) -> EncoderParams:
    ckpt = load_checkpoint(run.require(name))
    if ckpt.fingerprint != run.fp:
        raise FingerprintMismatch(f"{name} belongs to fingerprint {ckpt.fingerprint!r}")
    return encoder_from_checkpoint(ckpt)


def candidate_index(params: EncoderParams, corpus: Corpus) -> Index:
    embs = encode_batch(params, [corpus.item(cid) for cid in corpus.candidates]).embeddings
    return build_index(corpus.candidates, embs)


def stage_mine(run: PipelineRun, corpus: Corpus, gt: GroundTruth, baseline_params: EncoderParams,
               train_ids: list[str]) -> dict[str, MinedSet]:
    judge = make_judge(run.cfg, gt)
    cache = ScoreCache(run.path("judge_cache.jsonl"))
    index = candidate_index(baseline_params, corpus)
    mined = mine_corpus(
        corpus, train_ids, index, baseline_params, judge, run.cfg.miner, run.cfg.seed, cache
    )
    cache.flush()
    persist_mined(run.path("mined.jsonl"), [mined[qid] for qid in train_ids])
    run.record("judge_cache.jsonl", "mined.jsonl")
    return mined


def load_mined_sets(run: PipelineRun) -> dict[str, MinedSet]:
    sets = load_mined(run.require("mined.jsonl"))
    return {s.query_id: s for s in sets}


# ---------------------------------------------------------------------------
# Stage: training
# ---------------------------------------------------------------------------


def _write_trace(path: Path, trace: list[TraceRecord]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in trace:
            row = {"step": rec.step, "loss": rec.loss}
            if rec.p_at_1 is not None:
                row["p_at_1"] = rec.p_at_1
            fh.write(json.dumps(row) + "\n")


def stage_train_embed(run: PipelineRun, corpus: Corpus, mined: dict[str, MinedSet],
                      train_ids: list[str]) -> tuple[EncoderParams, EncoderParams]:
    """Train the encoder per config.align.mode; returns (init, trained)."""
    init = init_encoder_params(encoder_dims(run.cfg), derive_seed(run.cfg.seed, "encoder-init"))
    trained, trace = aligner.train(
        corpus, mined, run.cfg.align, init, run.cfg.seed, query_ids=train_ids
    )
    save_checkpoint(run.path("encoder_init.ckpt"), encoder_checkpoint(init, run.cfg.seed, run.fp))
    save_checkpoint(run.path("encoder.ckpt"), encoder_checkpoint(trained, run.cfg.seed, run.fp))
    _write_trace(run.path("trace_embed.jsonl"), trace)
    run.record("encoder_init.ckpt", "encoder.ckpt", "trace_embed.jsonl")
    return init, trained


def baseline_infonce_train(corpus: Corpus, mined_sets: dict[str, MinedSet], config: AlignConfig,
                           init_params: EncoderParams, seed: int,
                           query_ids: list[str] | None = None):
    """One-hot cross-entropy ablation: identical pipeline, Q replaced by the
    target indicator."""
    one_hot_cfg = dataclasses.replace(config, mode="one_hot")
    return aligner.train(corpus, mined_sets, one_hot_cfg, init_params, seed, query_ids=query_ids)


def stage_train_rerank(run: PipelineRun, corpus: Corpus, mined: dict[str, MinedSet],
                       encoder_params: EncoderParams, train_ids: list[str]) -> RerankerParams:
    params, trace = train_reranker(
        corpus, mined, encoder_params, run.cfg.rerank, run.cfg.seed, query_ids=train_ids
    )
    ckpt = Checkpoint(
        format_version=1, kind="reranker", arrays=params.arrays(),
        config={"embed_dim": params.dims.embed_dim, "hidden_dim": params.dims.hidden_dim},
        rng_seed=run.cfg.seed, fingerprint=run.fp,
    )
    save_checkpoint(run.path("reranker.ckpt"), ckpt)
    with run.path("trace_rerank.jsonl").open("w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps({"step": rec.step, "loss": rec.loss}) + "\n")
    run.record("reranker.ckpt", "trace_rerank.jsonl")
    return params


def load_reranker(run: PipelineRun) -> RerankerParams:
    ckpt = load_checkpoint(run.require("reranker.ckpt"))
    if ckpt.fingerprint != run.fp:
        raise FingerprintMismatch(f"reranker.ckpt belongs to fingerprint {ckpt.fingerprint!r}")
    if ckpt.kind != "reranker":
        raise ValueError(f"expected a reranker checkpoint, got {ckpt.kind!r}")
    dims = RerankerDims(embed_dim=int(ckpt.config["embed_dim"]), hidden_dim=int(ckpt.config["hidden_dim"]))
    return RerankerParams(
        w1=ckpt.arrays["w1"], b1=ckpt.arrays["b1"], w2=ckpt.arrays["w2"],
        b2=float(ckpt.arrays["b2"][0]), dims=dims,
    )


# ---------------------------------------------------------------------------
# Stage: retrieval, reranking, evaluation
# ---------------------------------------------------------------------------


def retrieve_all(params: EncoderParams, corpus: Corpus, query_ids: list[str], depth: int,
                 ) -> dict[str, RankedList]:
    index = candidate_index(params, corpus)
    query_embs = encode_batch(params, [corpus.item(qid) for qid in query_ids]).embeddings
    return {qid: top_k(index, query_embs[i], depth) for i, qid in enumerate(query_ids)}


def save_ranked_lists(path: Path, lists: dict[str, RankedList]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for qid in sorted(lists):
            entries = [[cid, score] for cid, score in lists[qid].entries]
            fh.write(json.dumps({"query_id": qid, "entries": entries}) + "\n")


def load_ranked_lists(path: Path) -> dict[str, RankedList]:
    lists: dict[str, RankedList] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                lists[rec["query_id"]] = RankedList(
                    entries=tuple((cid, float(score)) for cid, score in rec["entries"])
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"malformed ranked-list record at line {lineno}: {exc}") from exc
    return lists


def rerank_lists(reranker_params: RerankerParams, encoder_params: EncoderParams, corpus: Corpus,
                 lists: dict[str, RankedList], depth: int) -> dict[str, RankedList]:
    out: dict[str, RankedList] = {}
    for qid, ranked in lists.items():
        head = RankedList(entries=ranked.entries[:depth])
        out[qid] = rerank(reranker_params, encoder_params, corpus.item(qid), head, corpus)
    return out


def report_table(reports: dict[str, EvalReport]) -> str:
    ks = sorted({k for rep in reports.values() for k in rep.recall_at_k})
    header = ["section".ljust(22), "P@1".rjust(8)] + [f"R@{k}".rjust(8) for k in ks]
    lines = ["".join(header)]
    for name, rep in reports.items():
        row = [name.ljust(22), f"{rep.precision_at_1:8.4f}"]
        for k in ks:
            val = rep.recall_at_k.get(k)
            row.append(f"{val:8.4f}" if val is not None else "       -")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def stage_eval(run: PipelineRun, corpus: Corpus, gt: GroundTruth, eval_ids: list[str],
               init_params: EncoderParams, trained_params: EncoderParams,
               reranker_params: RerankerParams) -> dict[str, EvalReport]:
    cfg = run.cfg
    depth = max(max(cfg.eval.recall_ks), cfg.eval.rerank_depth)
    targets = {qid: gt.targets[qid] for qid in eval_ids}
    ks = list(cfg.eval.recall_ks)

    untrained_lists = retrieve_all(init_params, corpus, eval_ids, depth)
    trained_lists = retrieve_all(trained_params, corpus, eval_ids, depth)
    reranked = rerank_lists(reranker_params, trained_params, corpus, trained_lists, cfg.eval.rerank_depth)

    reports = {
        "untrained_retrieval": build_report(untrained_lists, targets, ks, run.fp),
        "retrieval": build_report(trained_lists, targets, ks, run.fp),
        "reranked": build_report(reranked, targets, ks, run.fp),
    }
    save_ranked_lists(run.path("retrieval_untrained.jsonl"), untrained_lists)
    save_ranked_lists(run.path("retrieval.jsonl"), trained_lists)
    save_ranked_lists(run.path("reranked.jsonl"), reranked)
    run.path("report.json").write_text(
        json.dumps(
            {"fingerprint": run.fp, "sections": {name: rep.to_json() for name, rep in reports.items()}},
            indent=2, sort_keys=True,
        ),
        encoding="utf-8",
    )
    run.path("report.txt").write_text(report_table(reports), encoding="utf-8")
    run.record("retrieval_untrained.jsonl", "retrieval.jsonl", "reranked.jsonl", "report.json", "report.txt")
    return reports


# ---------------------------------------------------------------------------
# Full pipeline and sweeps
# ---------------------------------------------------------------------------


def run_pipeline(cfg: RunConfig, out_dir: str | Path, verbose: bool = False) -> PipelineResult:
    run = PipelineRun(cfg, out_dir)
    run.ensure_out()

    def say(msg: str) -> None:
        if verbose:
            print(f"[pipeline] {msg}")

    say(f"fingerprint {run.fp[:12]} -> {run.out}")
    corpus, gt = stage_gen_data(run)
    say(f"generated {len(corpus.queries)} queries / {len(corpus.candidates)} candidates")
    train_ids, eval_ids = stage_split(run, corpus)
    baseline_params = stage_baseline(run, corpus, train_ids)
    say("baseline encoder ready")
    mined = stage_mine(run, corpus, gt, baseline_params, train_ids)
    n_fallback = sum(1 for m in mined.values() if m.fallback_used)
    say(f"mined {len(mined)} queries ({n_fallback} fallback)")
    init_params, trained_params = stage_train_embed(run, corpus, mined, train_ids)
    say("encoder trained")
    reranker_params = stage_train_rerank(run, corpus, mined, trained_params, train_ids)
    say("reranker trained")
    reports = stage_eval(run, corpus, gt, eval_ids, init_params, trained_params, reranker_params)
    say("\n" + report_table(reports))
    return PipelineResult(
        fingerprint=run.fp, out_dir=run.out, reports=reports, corpus=corpus, ground_truth=gt,
        train_ids=train_ids, eval_ids=eval_ids, mined=mined, init_params=init_params,
        trained_params=trained_params, reranker_params=reranker_params,
    )


SWEEP_AXES = ("k_negatives", "tau", "components", "judge_noise")


def _config_for_axis(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis == "k_negatives":
        return dataclasses.replace(cfg, align=dataclasses.replace(cfg.align, k_negatives=int(value)))
    if axis == "tau":
        return dataclasses.replace(cfg, align=dataclasses.replace(cfg.align, tau=float(value)))
    if axis == "components":
        if value not in ("soft", "one_hot"):
            raise ValueError(f"components axis takes 'soft' or 'one_hot', got {value!r}")
        return dataclasses.replace(cfg, align=dataclasses.replace(cfg.align, mode=str(value)))
    if axis == "judge_noise":
        return dataclasses.replace(cfg, judge=dataclasses.replace(cfg.judge, noise=float(value)))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass
class SweepRow:
    value: object
    ok: bool
    reports: dict[str, EvalReport] | None = None
    error: str | None = None


@dataclass
class SweepResult:
    axis: str
    rows: list[SweepRow]
    table_path: Path
    records_path: Path


def sweep_table(axis: str, rows: list[SweepRow]) -> str:
    header = f"{axis:>14}  {'P@1(untrained)':>15}  {'P@1(retrieval)':>15}  {'P@1(reranked)':>14}  status"
    lines = [header]
    for row in rows:
        if row.ok and row.reports is not None:
            lines.append(
                f"{row.value!s:>14}  "
                f"{row.reports['untrained_retrieval'].precision_at_1:>15.4f}  "
                f"{row.reports['retrieval'].precision_at_1:>15.4f}  "
                f"{row.reports['reranked'].precision_at_1:>14.4f}  ok"
            )
        else:
            lines.append(f"{row.value!s:>14}  {'-':>15}  {'-':>15}  {'-':>14}  failed: {row.error}")
    return "\n".join(lines) + "\n"


def ablation_sweep(base_cfg: RunConfig, axis: str, values: list, out_root: str | Path,
                   verbose: bool = False) -> SweepResult:
    """One full run per value, shared seed; failures recorded per cell."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    rows: list[SweepRow] = []
    for value in values:
        cell_dir = out_root / f"{axis}={value}"
        try:
            cfg = _config_for_axis(base_cfg, axis, value)
            result = run_pipeline(cfg, cell_dir, verbose=verbose)
            rows.append(SweepRow(value=value, ok=True, reports=result.reports))
        except Exception as exc:  # noqa: BLE001 - sweep must carry on per cell
            rows.append(SweepRow(value=value, ok=False, error=f"{type(exc).__name__}: {exc}"))
    table_path = out_root / f"sweep_{axis}.txt"
    table_path.write_text(sweep_table(axis, rows), encoding="utf-8")
    records_path = out_root / f"sweep_{axis}.jsonl"
    with records_path.open("w", encoding="utf-8") as fh:
        for row in rows:
            rec = {"axis": axis, "value": row.value, "ok": row.ok, "error": row.error}
            if row.reports is not None:
                rec["reports"] = {name: rep.to_json() for name, rep in row.reports.items()}
            fh.write(json.dumps(rec) + "\n")
    return SweepResult(axis=axis, rows=rows, table_path=table_path, records_path=records_path)
