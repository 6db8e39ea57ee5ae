import logging
import numpy as np
from typing import Protocol

from finwork.retrieval.ranking import RetrievalCandidate, rank_scores, check_unique_ids

logger = logging.getLogger(__name__)


class EmbedderClient(Protocol):
  "Service contract for embedding models; identical text and role give identical vectors"
  dim: int

  def embed_query(self, text: str, instruction: str | None = None) -> np.ndarray:
    ...

  def embed_passage(self, text: str) -> np.ndarray:
    ...


def as_vector(values: list[float] | np.ndarray, # raw embedding values
             dim: int | None = None # expected dimension, if known
            ) -> np.ndarray: # 1-D float array
  "Validates an embedding vector: one dimension, expected length, finite values"
  vec = np.asarray(values, dtype = float)
  if vec.ndim == 2 and vec.shape[0] == 1:
    vec = vec[0]
  if vec.ndim != 1 or vec.size == 0:
    raise ValueError(f"An embedding has to be a non-empty 1-D vector, got shape {vec.shape}")
  if dim is not None and vec.size != dim:
    raise ValueError(f"Dimension mismatch: expected {dim}, got {vec.size}")
  if not np.all(np.isfinite(vec)):
    raise ValueError("Embedding contains non-finite values")
  return vec


def cosine_similarity(a: list[float] | np.ndarray, # first vector
                     b: list[float] | np.ndarray # second vector, same dimension
                    ) -> float: # cosine in [-1, 1]
  "Calculates the cosine similarity of two vectors"
  a, b = as_vector(a), as_vector(b)
  if a.size != b.size:
    raise ValueError(f"Dimension mismatch: {a.size} vs {b.size}")
  na, nb = np.linalg.norm(a), np.linalg.norm(b)
  if na == 0 or nb == 0:
    raise ValueError("Cosine similarity is undefined for zero-norm vectors")
  return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class DenseIndex:
  def __init__(self, chunk_ids: list[str], # one id per row
               matrix: np.ndarray, # (n_chunks, dim) embedding matrix
               dim: int # embedding dimension
              ) -> None:
    "In-memory exhaustive-scan vector store; immutable after construction"
    check_unique_ids(chunk_ids)
    matrix = np.array(matrix, dtype = float)
    if matrix.ndim != 2 or matrix.shape != (len(chunk_ids), dim):
      raise ValueError(f"Expected a ({len(chunk_ids)}, {dim}) matrix, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
      raise ValueError("Index contains non-finite values")
    norms = np.linalg.norm(matrix, axis = 1)
    if len(norms) and np.any(norms == 0):
      zero = [chunk_ids[i] for i in np.where(norms == 0)[0]]
      raise ValueError(f"Zero-norm embeddings cannot be indexed: {zero}")
    matrix.setflags(write = False)
    norms.setflags(write = False)
    self.chunk_ids = tuple(chunk_ids)
    self.matrix = matrix
    self.dim = dim
    self._norms = norms

  @classmethod
  def from_vectors(cls, chunk_ids: list[str], # one id per vector
                   vectors: list[list[float]] | np.ndarray, # embeddings in id order
                   dim: int | None = None # embedding dimension; inferred if omitted
                  ) -> 'DenseIndex':
    "Builds an index from already computed vectors"
    if dim is None:
      if not len(vectors):
        raise ValueError("Cannot infer the dimension of an empty index")
      dim = len(vectors[0])
    matrix = np.array([as_vector(v, dim) for v in vectors], dtype = float).reshape(len(chunk_ids), dim)
    return cls(list(chunk_ids), matrix, dim)

  @property
  def entries(self) -> dict[str, np.ndarray]:
    return {cid: self.matrix[i] for i, cid in enumerate(self.chunk_ids)}

  def __len__(self) -> int:
    return len(self.chunk_ids)

  def scores(self, query: np.ndarray # query embedding
            ) -> dict[str, float]: # chunk_id:cosine similarity
    "Cosine similarity of the query against every stored vector"
    q = as_vector(query)
    if q.size != self.dim:
      raise ValueError(f"Dimension mismatch: index has dim {self.dim}, query has {q.size}")
    qn = np.linalg.norm(q)
    if qn == 0:
      raise ValueError("Cosine similarity is undefined for zero-norm vectors")
    sims = np.clip((self.matrix @ q) / (self._norms * qn), -1.0, 1.0)
    return dict(zip(self.chunk_ids, sims.tolist()))


def build_dense_index(chunks: list, # DocumentChunks to embed
                     embedder: EmbedderClient # passage embedding client
                    ) -> DenseIndex: # one entry per chunk
  "Embeds every chunk and stores the vectors"
  if not chunks:
    raise ValueError("Cannot build a dense index without chunks")
  check_unique_ids([c.chunk_id for c in chunks])
  vectors = []
  dim = None
  for chunk in chunks:
    try:
      vec = as_vector(embedder.embed_passage(chunk.text), dim)
    except Exception as e:
      raise RuntimeError(f"Embedding failed for chunk {chunk.chunk_id}: {e}") from e
    dim = vec.size
    vectors.append(vec)
  logger.info("built dense index", extra = {'stage': 'index_build', 'n_chunks': len(chunks), 'dim': dim})
  return DenseIndex([c.chunk_id for c in chunks], np.vstack(vectors), dim)


def dense_search(index: DenseIndex, # vector store
                query: np.ndarray, # query embedding
                k: int = 15 # number of candidates
               ) -> list[RetrievalCandidate]: # ranked candidates by cosine similarity
  "Returns the k chunks most similar to the query"
  candidates = rank_scores(index.scores(query), k, 'dense')
  logger.info("dense search", extra = {'stage': 'dense_search', 'k': k, 'n_results': len(candidates)})
  return candidates
