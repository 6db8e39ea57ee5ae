import re
import math
import logging
from dataclasses import dataclass
from collections import Counter, defaultdict

from finwork.retrieval.ranking import RetrievalCandidate, rank_scores, check_unique_ids

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str, # text to tokenize
            min_token_length: int = 1 # shorter tokens are dropped
           ) -> list[str]: # lowercased alphanumeric tokens, digits kept
  "Lowercases and splits on non-alphanumeric runs"
  return [t for t in _TOKEN.findall(text.lower()) if len(t) >= min_token_length]


@dataclass(frozen = True)
class Bm25Index:
  "Inverted index with the statistics Okapi BM25 needs"
  postings: dict[str, tuple[tuple[str, int], ...]]
  doc_length: dict[str, int]
  avg_doc_length: float
  corpus_size: int
  k1: float = 1.2
  b: float = 0.75
  min_token_length: int = 1

  def idf(self, term: str # query term
         ) -> float: # Okapi IDF with +1 inside the log, never negative
    "Inverse document frequency of a term"
    df = len(self.postings.get(term, ()))
    return math.log((self.corpus_size - df + 0.5) / (df + 0.5) + 1)


def build_bm25_index(chunks: list, # DocumentChunks to index
                    k1: float = 1.2, # term-frequency saturation
                    b: float = 0.75, # length normalization in [0, 1]
                    min_token_length: int = 1 # tokenizer setting
                   ) -> Bm25Index:
  "Builds postings and length statistics over chunks"
  if not chunks:
    raise ValueError("Cannot build a BM25 index without chunks")
  if k1 < 0:
    raise ValueError(f"k1 has to be non-negative, got {k1}")
  if not 0 <= b <= 1:
    raise ValueError(f"b has to be in [0, 1], got {b}")
  check_unique_ids([c.chunk_id for c in chunks])
  postings = defaultdict(list)
  doc_length = {}
  for chunk in chunks:
    tokens = tokenize(chunk.text, min_token_length)
    doc_length[chunk.chunk_id] = len(tokens)
    for term, tf in Counter(tokens).items():
      postings[term].append((chunk.chunk_id, tf))
  avgdl = sum(doc_length.values()) / len(doc_length)
  logger.info("built bm25 index", extra = {'stage': 'index_build', 'n_chunks': len(chunks), 'n_terms': len(postings)})
  return Bm25Index(postings = {t: tuple(p) for t, p in postings.items()}, doc_length = doc_length,
                   avg_doc_length = avgdl, corpus_size = len(doc_length), k1 = k1, b = b,
                   min_token_length = min_token_length)


def bm25_scores(index: Bm25Index, # inverted index
               query_terms: list[str] # tokenized query; repeated terms count repeatedly
              ) -> dict[str, float]: # chunk_id:score for chunks containing any query term
  "Okapi BM25 score of every chunk sharing at least one term with the query"
  scores = {}
  avgdl = index.avg_doc_length or 1.0
  for term in query_terms:
    plist = index.postings.get(term)
    if not plist:
      continue
    idf = index.idf(term)
    for cid, tf in plist:
      norm = index.k1 * (1 - index.b + index.b * index.doc_length[cid] / avgdl)
      scores[cid] = scores.get(cid, 0.0) + idf * tf * (index.k1 + 1) / (tf + norm)
  return scores


def bm25_search(index: Bm25Index, # inverted index
               query_text: str, # raw query
               k: int = 15 # number of candidates
              ) -> list[RetrievalCandidate]: # ranked candidates; only chunks matching a query term
  "Returns the k best BM25 matches for a query"
  terms = tokenize(query_text, index.min_token_length)
  if not terms:
    raise ValueError(f"Query {query_text!r} contains no searchable terms")
  candidates = rank_scores(bm25_scores(index, terms), k, 'bm25')
  logger.info("bm25 search", extra = {'stage': 'bm25_search', 'k': k, 'n_results': len(candidates)})
  return candidates
