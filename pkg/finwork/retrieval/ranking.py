from dataclasses import dataclass
from typing import Literal

Method = Literal['dense', 'bm25', 'hybrid']


@dataclass(frozen = True)
class RetrievalCandidate:
  "A scored chunk reference at a 1-based rank"
  chunk_id: str
  score: float
  rank: int
  method: Method


def rank_scores(scores: dict[str, float], # chunk_id:score
               k: int, # number of results to keep
               method: Method # tag for the produced candidates
              ) -> list[RetrievalCandidate]: # top-k candidates, ranks 1..n
  "Orders scores descending, breaking ties by ascending chunk_id"
  if k < 1:
    raise ValueError(f"k has to be a positive integer, got {k}")
  ordered = sorted(scores.items(), key = lambda kv: (-kv[1], kv[0]))[:k]
  return [RetrievalCandidate(chunk_id = cid, score = float(s), rank = i + 1, method = method)
          for i, (cid, s) in enumerate(ordered)]


def check_unique_ids(chunk_ids: list[str] # ids to check
                    ) -> None:
  "Raises if chunk ids repeat"
  seen = set()
  for cid in chunk_ids:
    if cid in seen:
      raise ValueError(f"Duplicate chunk_id '{cid}'; chunk ids have to be unique within an index.")
    seen.add(cid)
