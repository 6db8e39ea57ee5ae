import logging
from dataclasses import dataclass, asdict
from typing import Literal

import numpy as np

logger = logging.getLogger(__name__)

Relevance = Literal['chunk', 'doc']
METRIC_NAMES = ('recall', 'ndcg', 'mrr', 'hit')


@dataclass(frozen = True)
class RetrievalMetrics:
  recall: float
  ndcg: float
  mrr: float
  hit: float
  k: int = 3

  def as_row(self) -> dict[str, float]:
    "column names as reported, e.g. recall@3"
    return {f"{name}@{self.k}": getattr(self, name) for name in METRIC_NAMES}


def _discounts(n: int) -> np.ndarray:
  return 1.0 / np.log2(np.arange(2, n + 2))


def compute_retrieval_metrics(ranked: list[str], # retrieved ids, best first, no duplicates
                              gold: set[str] | frozenset[str], # relevant ids
                              k: int = 3 # cutoff
                             ) -> RetrievalMetrics: # Recall, NDCG, MRR and Hit Rate at k with binary relevance
  "scores one ranking against its gold evidence"
  if k < 1:
    raise ValueError(f"k has to be a positive integer, got {k}")
  if not gold:
    raise ValueError("gold evidence must be non-empty")
  if len(set(ranked)) != len(ranked):
    raise ValueError("ranked list contains duplicate ids")
  rel = np.array([1.0 if cid in gold else 0.0 for cid in ranked[:k]])
  n_rel = int(rel.sum())
  recall = n_rel / len(gold)
  hit = 1.0 if n_rel else 0.0
  mrr = 1.0 / (int(np.argmax(rel)) + 1) if n_rel else 0.0
  dcg = float((rel * _discounts(len(rel))).sum()) if len(rel) else 0.0
  idcg = float(_discounts(min(len(gold), k)).sum())
  return RetrievalMetrics(recall = recall, ndcg = dcg / idcg, mrr = mrr, hit = hit, k = k)


def to_doc_level(ranked_chunk_ids: list[str], # retrieved chunk ids
                 chunk_to_doc: dict[str, str] # chunk_id:doc_id
                ) -> list[str]: # doc ids, first occurrence kept
  "maps a chunk ranking onto documents for document-level gold evidence"
  return list(dict.fromkeys(chunk_to_doc[cid] for cid in ranked_chunk_ids))


def score_ranking(ranked_chunk_ids: list[str], # retrieved chunk ids, best first
                  gold: set[str] | frozenset[str], # gold chunk ids, or doc ids in doc mode
                  k: int = 3, # cutoff
                  relevance: Relevance = 'chunk', # gold granularity
                  chunk_to_doc: dict[str, str] | None = None # needed for doc mode
                 ) -> RetrievalMetrics:
  "scores a chunk ranking at chunk or document granularity"
  if relevance == 'doc':
    if chunk_to_doc is None:
      raise ValueError("document-level relevance needs a chunk_id to doc_id mapping")
    return compute_retrieval_metrics(to_doc_level(ranked_chunk_ids[:k], chunk_to_doc), gold, k)
  if relevance != 'chunk':
    raise ValueError(f"relevance must be 'chunk' or 'doc', got {relevance!r}")
  return compute_retrieval_metrics(ranked_chunk_ids, gold, k)


def mean_metrics(per_query: list[RetrievalMetrics] # one entry per scored query
                ) -> dict[str, float]: # metric:arithmetic mean
  "averages per-query metrics"
  if not per_query:
    return {name: float('nan') for name in METRIC_NAMES}
  return {name: float(np.mean([asdict(m)[name] for m in per_query])) for name in METRIC_NAMES}


def relative_improvement(new: float, # score of the improved system
                         old: float # score of the reference system
                        ) -> float: # (new - old) / old
  "relative gain of one score over another"
  if old == 0:
    raise ValueError("relative improvement is undefined for a zero reference score")
  return (new - old) / old
