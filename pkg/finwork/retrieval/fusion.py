import logging

from finwork.retrieval.ranking import RetrievalCandidate, rank_scores

logger = logging.getLogger(__name__)


def reciprocal_rank_scores(rankings: list[list[RetrievalCandidate]], # ranked lists to fuse
                          rrf_k: float = 60 # rank offset
                         ) -> dict[str, float]: # chunk_id:fused score
  "Sums 1/(rrf_k + rank) over every list a chunk appears in"
  fused = {}
  for ranking in rankings:
    seen = set()
    for cand in ranking:
      if cand.chunk_id in seen:
        continue
      seen.add(cand.chunk_id)
      fused[cand.chunk_id] = fused.get(cand.chunk_id, 0.0) + 1.0 / (rrf_k + cand.rank)
  return fused


def hybrid_search(dense: list[RetrievalCandidate], # dense ranking
                 lexical: list[RetrievalCandidate], # BM25 ranking
                 k: int = 15, # number of fused candidates
                 rrf_k: float = 60 # rank offset
                ) -> list[RetrievalCandidate]: # fused ranking, tagged 'hybrid'
  "Fuses a dense and a lexical ranking with reciprocal rank fusion"
  if rrf_k < 0:
    raise ValueError(f"rrf_k has to be non-negative, got {rrf_k}")
  candidates = rank_scores(reciprocal_rank_scores([dense, lexical], rrf_k), k, 'hybrid')
  logger.info("hybrid search", extra = {'stage': 'hybrid_search', 'k': k, 'n_results': len(candidates)})
  return candidates
