import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import pandas as pd

from finwork.fin_data.loader import QueryRecord
from finwork.policy.rules import PolicySet
from finwork.retrieval.methods import KnowledgeBase, RETRIEVAL_METHODS, get_method, retrieve
from finwork.agent.clients import LlmClient
from finwork.agent.pipeline import (GENERATION_CONFIGS, PipelineClients, PipelineSettings,
                                    answer_question)
from finwork.evaluation.metrics import Relevance, RetrievalMetrics, score_ranking, mean_metrics, relative_improvement
from finwork.evaluation.judge import JudgeVerdict, judge_generation

logger = logging.getLogger(__name__)

Mode = Literal['retrieval', 'generation']
RETRIEVAL_COLUMNS = ['method', 'recall@3', 'ndcg@3', 'mrr@3', 'hit@3']
GENERATION_COLUMNS = ['method', 'factual_correctness', 'completeness']
REFERENCE_GENERATION_CONFIG = "Dense + Reranker"


@dataclass
class QueryOutcome:
  query_id: str
  method: str
  ranked: tuple[str, ...] = ()
  metrics: RetrievalMetrics | None = None
  verdict: JudgeVerdict | None = None
  answer: str = ''
  error: str | None = None


@dataclass
class EvaluationReport:
  "Mean rows per compared configuration plus the per-query outcomes behind them"
  mode: Mode
  k: int
  relevance: Relevance
  rows: pd.DataFrame
  outcomes: list[QueryOutcome] = field(default_factory = list)
  exclusions: dict[str, int] = field(default_factory = dict)

  @property
  def columns(self) -> list[str]:
    return list(self.rows.columns)

  def per_query_frame(self) -> pd.DataFrame:
    records = []
    for o in self.outcomes:
      rec = {'method': o.method, 'query_id': o.query_id, 'error': o.error or ''}
      if o.metrics is not None:
        rec.update(o.metrics.as_row())
      if o.verdict is not None:
        rec.update({'factual_correctness': o.verdict.factual_correctness, 'completeness': o.verdict.completeness})
      records.append(rec)
    return pd.DataFrame.from_records(records)

  def metadata(self) -> dict[str, Any]:
    return {'mode': self.mode, 'k': self.k, 'relevance': self.relevance,
            'methods': list(self.rows['method']),
            'n_queries': len({o.query_id for o in self.outcomes}),
            'exclusions': dict(self.exclusions),
            'errors': [{'method': o.method, 'query_id': o.query_id, 'error': o.error}
                       for o in self.outcomes if o.error]}

  def to_text(self) -> str:
    "human-readable table; the generation table adds relative improvement over dense retrieval with reranking"
    table = self.rows.copy()
    table['excluded'] = [self.exclusions.get(m, 0) for m in table['method']]
    if self.mode == 'generation' and REFERENCE_GENERATION_CONFIG in set(table['method']):
      ref = float(table.loc[table['method'] == REFERENCE_GENERATION_CONFIG, 'factual_correctness'].iloc[0])
      table[f"vs {REFERENCE_GENERATION_CONFIG}"] = [
        f"{relative_improvement(v, ref):+.0%}" if ref and pd.notna(v) else '' for v in table['factual_correctness']]
    return table.to_string(index = False, float_format = lambda v: f"{v:.3f}")

  def write(self, out_dir: str | Path # directory for the report files
           ) -> dict[str, Path]: # written file paths
    "writes <mode>_report.csv, <mode>_report.json and <mode>_report.txt"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents = True, exist_ok = True)
    paths = {'csv': out_dir / f"{self.mode}_report.csv", 'json': out_dir / f"{self.mode}_report.json",
             'txt': out_dir / f"{self.mode}_report.txt"}
    self.rows.to_csv(paths['csv'], index = False, float_format = '%.6f', lineterminator = '\n')
    paths['json'].write_text(json.dumps(self.metadata(), indent = 2, sort_keys = True) + '\n', encoding = 'utf-8')
    paths['txt'].write_text(self.to_text() + '\n', encoding = 'utf-8')
    return paths


def _retrieval_outcome(record: QueryRecord, method: str, kb: KnowledgeBase, clients: PipelineClients,
                       settings: PipelineSettings, k: int, relevance: Relevance) -> QueryOutcome:
  if not record.gold_evidence:
    return QueryOutcome(record.query_id, method, error = "no gold evidence")
  try:
    docs = retrieve(kb, record.question, method, clients.embedder, clients.reranker, settings.k_dense,
                    max(settings.k_final, k), settings.rrf_k, settings.query_instruction, settings.rerank_fallback)
    ranked = tuple(chunk.chunk_id for chunk, _ in docs)
    chunk_to_doc = {c.chunk_id: c.doc_id for c in kb.chunks}
    metrics = score_ranking(list(ranked), record.gold_evidence, k, relevance, chunk_to_doc)
  except Exception as e:
    return QueryOutcome(record.query_id, method, error = f"{type(e).__name__}: {e}")
  return QueryOutcome(record.query_id, method, ranked = ranked, metrics = metrics)


def _generation_outcome(record: QueryRecord, label: str, kb: KnowledgeBase, clients: PipelineClients,
                        settings: PipelineSettings, policies: PolicySet | None, judge: LlmClient,
                        judge_retries: int) -> QueryOutcome:
  try:
    result = answer_question(record.question, kb, clients, policies, GENERATION_CONFIGS[label], settings)
    verdict = judge_generation(record.query_id, record.question, result.answer.text,
                               [chunk.text for chunk, _ in result.docs], record.gold_answer, judge, judge_retries)
  except Exception as e:
    return QueryOutcome(record.query_id, label, error = f"{type(e).__name__}: {e}")
  return QueryOutcome(record.query_id, label, ranked = tuple(c.chunk_id for c, _ in result.docs),
                      verdict = verdict, answer = result.answer.text)


def _mean_row(label: str, outcomes: list[QueryOutcome], mode: Mode, k: int) -> dict[str, Any]:
  ok = [o for o in outcomes if o.error is None]
  if mode == 'retrieval':
    means = mean_metrics([o.metrics for o in ok])
    return {'method': label, **{f"{name}@{k}": v for name, v in means.items()}}
  if not ok:
    return {'method': label, 'factual_correctness': float('nan'), 'completeness': float('nan')}
  return {'method': label,
          'factual_correctness': sum(o.verdict.factual_correctness for o in ok) / len(ok),
          'completeness': sum(o.verdict.completeness for o in ok) / len(ok)}


def run_comparison(dataset: list[QueryRecord], # evaluation queries
                   configurations: list[str], # RETRIEVAL_METHODS labels or GENERATION_CONFIGS labels
                   kb: KnowledgeBase, # indexed corpus
                   clients: PipelineClients, # embedder, reranker, llm, search
                   mode: Mode = 'retrieval', # which comparison to run
                   settings: PipelineSettings | None = None, # retrieval and agent parameters
                   policies: PolicySet | None = None, # needed by the neurosymbolic configuration
                   judge: LlmClient | None = None, # needed in generation mode
                   k: int = 3, # metric cutoff
                   relevance: Relevance = 'chunk', # gold evidence granularity
                   parallelism: int = 1, # concurrent queries per configuration
                   judge_retries: int = 2 # extra judge attempts per query
                  ) -> EvaluationReport:
  "Runs every configuration over the dataset and aggregates mean rows; failed queries are excluded and counted"
  settings = settings or PipelineSettings()
  if parallelism < 1:
    raise ValueError(f"parallelism has to be a positive integer, got {parallelism}")
  if mode == 'retrieval':
    for label in configurations:
      get_method(label)
  elif mode == 'generation':
    unknown = [label for label in configurations if label not in GENERATION_CONFIGS]
    if unknown:
      raise ValueError(f"Unknown generation configuration(s) {unknown}; choose from {list(GENERATION_CONFIGS)}")
    if judge is None:
      raise ValueError("generation mode needs a judge client")
  else:
    raise ValueError(f"mode must be 'retrieval' or 'generation', got {mode!r}")
  if not configurations:
    raise ValueError("no configurations to compare")
  records = sorted(dataset, key = lambda r: r.query_id)
  rows, outcomes, exclusions = [], [], {}
  for label in configurations:
    if mode == 'retrieval':
      def task(record, label = label):
        return _retrieval_outcome(record, label, kb, clients, settings, k, relevance)
    else:
      def task(record, label = label):
        return _generation_outcome(record, label, kb, clients, settings, policies, judge, judge_retries)
    if parallelism == 1:
      results = [task(r) for r in records]
    else:
      with ThreadPoolExecutor(max_workers = parallelism) as pool:
        results = list(pool.map(task, records))
    results.sort(key = lambda o: o.query_id)
    failed = [o for o in results if o.error is not None]
    for o in failed:
      logger.warning("query %s failed under %s: %s", o.query_id, label, o.error)
    exclusions[label] = len(failed)
    rows.append(_mean_row(label, results, mode, k))
    outcomes.extend(results)
  columns = [c.replace('@3', f"@{k}") for c in RETRIEVAL_COLUMNS] if mode == 'retrieval' else GENERATION_COLUMNS
  frame = pd.DataFrame.from_records(rows, columns = columns)
  logger.info("comparison finished", extra = {'stage': 'evaluation', 'mode': mode, 'n_configs': len(configurations),
                                              'n_queries': len(records)})
  return EvaluationReport(mode, k, relevance, frame, outcomes, exclusions)


def default_configurations(mode: Mode) -> list[str]:
  "all compared methods for a mode, in reporting order"
  return list(RETRIEVAL_METHODS) if mode == 'retrieval' else list(GENERATION_CONFIGS)
