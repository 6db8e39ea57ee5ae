import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from finwork.fin_data.chunking import DocumentChunk
from finwork.retrieval.dense import DenseIndex, EmbedderClient, build_dense_index, dense_search
from finwork.retrieval.lexical import Bm25Index, build_bm25_index, bm25_search
from finwork.retrieval.fusion import hybrid_search
from finwork.retrieval.ranking import RetrievalCandidate
from finwork.retrieval.rerank import RerankerClient, rerank

logger = logging.getLogger(__name__)


@dataclass(frozen = True)
class RetrievalMethod:
  label: str
  first_stage: str
  use_rerank: bool


# compared methods, in reporting order
RETRIEVAL_METHODS = {m.label: m for m in (
  RetrievalMethod('Dense+Rerank', 'dense', True),
  RetrievalMethod('Dense', 'dense', False),
  RetrievalMethod('BM25+Rerank', 'bm25', True),
  RetrievalMethod('Hybrid+Rerank', 'hybrid', True),
  RetrievalMethod('BM25', 'bm25', False),
  RetrievalMethod('Hybrid', 'hybrid', False)
  )}


def get_method(label: str # one of RETRIEVAL_METHODS
              ) -> RetrievalMethod:
  "looks up a retrieval method by its report label"
  try:
    return RETRIEVAL_METHODS[label]
  except KeyError:
    raise ValueError(f"Unknown retrieval method {label!r}; choose from {list(RETRIEVAL_METHODS)}") from None


@dataclass
class KnowledgeBase:
  "Chunks plus the dense and BM25 indices built over them"
  chunks: list[DocumentChunk]
  dense_index: DenseIndex
  bm25_index: Bm25Index
  snapshot_path: str = field(default = '', compare = False)

  @cached_property
  def chunk_by_id(self) -> dict[str, DocumentChunk]:
    return {c.chunk_id: c for c in self.chunks}

  @cached_property
  def chunk_texts(self) -> dict[str, str]:
    return {c.chunk_id: c.text for c in self.chunks}

  @classmethod
  def build(cls, chunks: list[DocumentChunk], # chunked corpus
            embedder: EmbedderClient, # passage embedder
            k1: float = 1.2, # BM25 saturation
            b: float = 0.75, # BM25 length normalization
            min_token_length: int = 1 # tokenizer setting
           ) -> "KnowledgeBase":
    if not chunks:
      raise ValueError("Cannot build a knowledge base without chunks")
    return cls(list(chunks), build_dense_index(chunks, embedder), build_bm25_index(chunks, k1, b, min_token_length))

  @classmethod
  def load(cls, path: str | Path # snapshot written by SnapshotSerializer
          ) -> "KnowledgeBase":
    from finwork.fin_data.loader import SnapshotSerializer
    chunks, dense_index, bm25_index = SnapshotSerializer.deserialize(path)
    return cls(chunks, dense_index, bm25_index, str(path))

  def save(self, path: str | Path) -> None:
    from finwork.fin_data.loader import SnapshotSerializer
    SnapshotSerializer.serialize(path, self.chunks, self.dense_index, self.bm25_index)


def first_stage_search(kb: KnowledgeBase, # indices to search
                       question: str, # user question
                       first_stage: str, # 'dense', 'bm25' or 'hybrid'
                       embedder: EmbedderClient, # query embedder for dense and hybrid
                       k: int = 15, # candidates to return
                       rrf_k: float = 60, # fusion offset for hybrid
                       instruction: str | None = None # query instruction for the embedder
                      ) -> list[RetrievalCandidate]:
  "runs one first-stage retriever"
  if first_stage == 'bm25':
    return bm25_search(kb.bm25_index, question, k)
  if first_stage not in ('dense', 'hybrid'):
    raise ValueError(f"Unknown first stage {first_stage!r}")
  dense = dense_search(kb.dense_index, embedder.embed_query(question, instruction), k)
  if first_stage == 'dense':
    return dense
  return hybrid_search(dense, bm25_search(kb.bm25_index, question, k), k, rrf_k)


def retrieve(kb: KnowledgeBase, # indices to search
             question: str, # user question
             method: str | RetrievalMethod, # label from RETRIEVAL_METHODS
             embedder: EmbedderClient, # query embedder
             reranker: RerankerClient | None = None, # required for +Rerank methods
             k_dense: int = 15, # first-stage candidate count
             k_final: int = 3, # documents handed to generation
             rrf_k: float = 60, # fusion offset
             instruction: str | None = None, # query instruction for the embedder
             fallback_to_dense: bool = False # keep first-stage order if the reranker fails
            ) -> list[tuple[DocumentChunk, int]]: # (chunk, 1-based rank), best first
  "retrieves the k_final chunks for a question with one of the compared methods"
  if k_final > k_dense:
    raise ValueError(f"k_final ({k_final}) cannot exceed k_dense ({k_dense})")
  method = get_method(method) if isinstance(method, str) else method
  candidates = first_stage_search(kb, question, method.first_stage, embedder, k_dense, rrf_k, instruction)
  if method.use_rerank:
    if reranker is None:
      raise ValueError(f"Method {method.label} needs a reranker client")
    ranked = [r.chunk_id for r in rerank(question, candidates, kb.chunk_texts, reranker, k_final,
                                         fallback_to_dense = fallback_to_dense)]
  else:
    ranked = [c.chunk_id for c in candidates[:k_final]]
  return [(kb.chunk_by_id[cid], i + 1) for i, cid in enumerate(ranked)]
