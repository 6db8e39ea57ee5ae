import os
import hashlib
import logging
import numpy as np

from finwork.retrieval.lexical import tokenize

logger = logging.getLogger(__name__)

DEFAULT_QUERY_INSTRUCTION = "Given a financial question, retrieve passages from company filings that contain the figures and statements needed to answer it"


def _live_import_error() -> ImportError:
  return ImportError("You must install the 'live' dependencies to use this feature. Try 'pip install finwork[live]'.")


class HashingEmbedder:
  def __init__(self, dim: int = 384 # output dimension
              ) -> None:
    "Deterministic offline embedder: signed hashed bag-of-words, so shared tokens correlate"
    if dim < 1:
      raise ValueError(f"dim has to be a positive integer, got {dim}")
    self.dim = dim

  def _bucket(self, token: str) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode('utf-8'), digest_size = 8).digest()
    h = int.from_bytes(digest, 'big')
    return h % self.dim, (1.0 if (h >> 63) & 1 else -1.0)

  def _embed(self, text: str) -> np.ndarray:
    vec = np.zeros(self.dim, dtype = float)
    tokens = tokenize(text) or [text]
    for tok in tokens:
      idx, sign = self._bucket(tok)
      vec[idx] += sign
    if not vec.any():
      # all buckets cancelled out
      idx, _ = self._bucket(text)
      vec[idx] = 1.0
    return vec

  def embed_query(self, text: str, # query text
                  instruction: str | None = None # ignored; kept for contract compatibility
                 ) -> np.ndarray:
    return self._embed(text)

  def embed_passage(self, text: str) -> np.ndarray:
    return self._embed(text)


class HuggingFaceEmbedder:
  def __init__(self, model: str = "Qwen/Qwen3-Embedding-4B", # model id served by the inference endpoint
               instruction: str = DEFAULT_QUERY_INSTRUCTION, # task instruction for queries
               token: str | None = None, # API token; default HF_TOKEN
               dim: int | None = None # expected dimension; learned from the first call if omitted
              ) -> None:
    "Live embedder backed by the Hugging Face inference API"
    from huggingface_hub import InferenceClient
    self.model = model
    self.instruction = instruction
    self.dim = dim
    self.client = InferenceClient(model = model, token = token or os.environ.get("HF_TOKEN"))

  def _embed(self, text: str) -> np.ndarray:
    vec = np.asarray(self.client.feature_extraction(text), dtype = float)
    if vec.ndim == 2:
      vec = vec.mean(axis = 0) if vec.shape[0] > 1 else vec[0]
    if self.dim is None:
      self.dim = int(vec.size)
    return vec

  def embed_query(self, text: str, instruction: str | None = None) -> np.ndarray:
    return self._embed(f"Instruct: {instruction or self.instruction}\nQuery: {text}")

  def embed_passage(self, text: str) -> np.ndarray:
    return self._embed(text)


class LexicalOverlapReranker:
  "Deterministic offline reranker: share of distinct query tokens present in the passage"

  def score_pairs(self, query: str, # query text
                  passages: list[str] # passages to score
                 ) -> list[float]: # one score in [0, 1] per passage
    q = set(tokenize(query))
    if not q:
      return [0.0 for _ in passages]
    return [len(q & set(tokenize(p))) / len(q) for p in passages]


class CrossEncoderReranker:
  def __init__(self, model: str = "jinaai/jina-reranker-v2-base-multilingual", # cross-encoder checkpoint
               max_length: int | None = None # token limit passed to the model
              ) -> None:
    "Live reranker backed by a sentence-transformers CrossEncoder"
    try:
      from sentence_transformers import CrossEncoder
    except ImportError:
      raise _live_import_error()
    self.model_name = model
    self.model = CrossEncoder(model, max_length = max_length, trust_remote_code = True,
                              token = os.environ.get("HF_TOKEN"))

  def score_pairs(self, query: str, passages: list[str]) -> list[float]:
    if not passages:
      return []
    scores = self.model.predict([(query, p) for p in passages], convert_to_numpy = True)
    return [float(s) for s in np.asarray(scores).ravel()]
