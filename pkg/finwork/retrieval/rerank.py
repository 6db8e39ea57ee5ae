import math
import logging
from dataclasses import dataclass
from typing import Protocol

from finwork.retrieval.ranking import RetrievalCandidate

logger = logging.getLogger(__name__)


class RerankerClient(Protocol):
  "Service contract for cross-encoders: one finite score per passage, same order"

  def score_pairs(self, query: str, passages: list[str]) -> list[float]:
    ...


@dataclass(frozen = True)
class RerankedResult:
  chunk_id: str
  cross_score: float
  rank: int
  original_rank: int


class RerankError(RuntimeError):
  def __init__(self, message: str, query: str, n_candidates: int):
    super().__init__(f"{message} (query={query!r}, candidates={n_candidates})")
    self.query = query
    self.n_candidates = n_candidates


def _score(query: str, texts: list[str], client: RerankerClient, batch_size: int | None) -> list[float]:
  step = batch_size or max(len(texts), 1)
  scores = []
  for i in range(0, len(texts), step):
    batch = texts[i:i + step]
    out = [float(s) for s in client.score_pairs(query, batch)]
    if len(out) != len(batch):
      raise ValueError(f"reranker returned {len(out)} scores for {len(batch)} passages")
    if not all(math.isfinite(s) for s in out):
      raise ValueError("reranker returned non-finite scores")
    scores.extend(out)
  return scores


def rerank(query: str, # user question
          candidates: list[RetrievalCandidate], # first-stage candidates
          chunk_texts: dict[str, str], # chunk_id:text
          client: RerankerClient, # cross-encoder service
          k: int = 3, # number of results to keep
          batch_size: int | None = None, # passages per client call; default all at once
          max_length: int | None = None, # truncate passages to this many characters
          fallback_to_dense: bool = False # on client failure keep first-stage order instead of raising
         ) -> list[RerankedResult]: # top-k by cross-encoder score
  "Re-scores first-stage candidates with a cross-encoder and keeps the best k"
  if k < 1:
    raise ValueError(f"k has to be a positive integer, got {k}")
  missing = [c.chunk_id for c in candidates if c.chunk_id not in chunk_texts]
  if missing:
    raise ValueError(f"No text available for candidate chunks: {missing}")
  texts = [chunk_texts[c.chunk_id] for c in candidates]
  if max_length is not None:
    texts = [t[:max_length] for t in texts]
  try:
    scores = _score(query, texts, client, batch_size) if candidates else []
  except Exception as e:
    if not fallback_to_dense:
      raise RerankError(f"Reranking failed: {e}", query, len(candidates)) from e
    logger.warning("reranker failed, keeping first-stage order: %s", e, extra = {'stage': 'rerank'})
    scores = [c.score for c in candidates]
  order = sorted(zip(candidates, scores), key = lambda cs: (-cs[1], cs[0].rank, cs[0].chunk_id))[:k]
  results = [RerankedResult(chunk_id = c.chunk_id, cross_score = s, rank = i + 1, original_rank = c.rank)
             for i, (c, s) in enumerate(order)]
  logger.info("rerank", extra = {'stage': 'rerank', 'k': k, 'n_candidates': len(candidates), 'n_results': len(results)})
  return results
