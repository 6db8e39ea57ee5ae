import json
from dataclasses import dataclass, field
from pathlib import Path
from itertools import chain
from importlib import resources
from typing import Any


@dataclass(frozen = True)
class SourceDocument:
  "One source filing with its pages in order"
  doc_id: str
  title: str
  pages: tuple[tuple[int, str], ...]
  source_path: str

  @property
  def text(self) -> str:
    return '\n\n'.join(t for _, t in self.pages)


@dataclass(frozen = True)
class QueryRecord:
  "One evaluation question with gold evidence and reference answer"
  query_id: str
  question: str
  gold_evidence: frozenset[str] = field(default_factory = frozenset)
  gold_answer: str = ''


def unwrap(nested_list: list[Any] # list to be flattened
         ) -> list[Any]: # flattened list
  "converts a nested list into a flat list"
  return list(chain(*nested_list))


def get_fixture_path(name: str # file name inside finwork.fin_data
                    ) -> Path: # path to the packaged file
  "Returns the path of a packaged fixture file"
  path = resources.files("finwork.fin_data").joinpath(name)
  if not path.is_file():
    raise FileNotFoundError(f"No packaged fixture named {name} available under finwork.fin_data.")
  return Path(str(path))


def read_jsonl(path: str | Path # line-delimited JSON file
              ) -> list[tuple[int, dict[str, Any]]]: # (record index, record) pairs, blank lines skipped
  "Reads a line-delimited JSON file, reporting the record index of malformed lines"
  records = []
  idx = 0
  with open(path, 'r', encoding = 'utf-8') as f:
    for line in f:
      if not line.strip():
        continue
      try:
        rec = json.loads(line)
      except json.JSONDecodeError as e:
        raise ValueError(f"{path}: record {idx} is not valid JSON ({e.msg})") from e
      if not isinstance(rec, dict):
        raise ValueError(f"{path}: record {idx} must be an object, got {type(rec).__name__}")
      records.append((idx, rec))
      idx += 1
  return records


def _corpus_files(path: Path) -> list[Path]:
  if not path.exists():
    raise FileNotFoundError(f"Corpus path {path} does not exist.")
  if path.is_dir():
    return sorted(p for p in path.iterdir() if p.suffix.lower() == '.jsonl' and p.is_file())
  return [path]


def parse_document_record(rec: dict[str, Any], # one corpus record
                         where: str # file/record label for error messages
                        ) -> SourceDocument:
  "Validates one corpus record and turns it into a SourceDocument"
  doc_id = rec.get('doc_id')
  if not isinstance(doc_id, str) or not doc_id.strip():
    raise ValueError(f"{where}: missing or empty 'doc_id'")
  pages_raw = rec.get('pages')
  if not isinstance(pages_raw, list):
    raise ValueError(f"{where} ({doc_id}): 'pages' must be a list of {{page_number, text}} objects")
  pages = []
  last = 0
  for p in pages_raw:
    if not isinstance(p, dict) or 'page_number' not in p or 'text' not in p:
      raise ValueError(f"{where} ({doc_id}): every page needs 'page_number' and 'text'")
    num, text = p['page_number'], p['text']
    if isinstance(num, bool) or not isinstance(num, int) or num < 1:
      raise ValueError(f"{where} ({doc_id}): page_number must be a positive integer, got {num!r}")
    if num <= last:
      raise ValueError(f"{where} ({doc_id}): page numbers must be strictly increasing ({num} after {last})")
    if not isinstance(text, str):
      raise ValueError(f"{where} ({doc_id}): text of page {num} must be a string")
    pages.append((num, text))
    last = num
  title = rec.get('title', doc_id)
  source_path = rec.get('source_path', '')
  if not isinstance(title, str) or not isinstance(source_path, str):
    raise ValueError(f"{where} ({doc_id}): 'title' and 'source_path' must be strings")
  return SourceDocument(doc_id = doc_id, title = title, pages = tuple(pages), source_path = source_path)


def ingest_documents(path: str | Path # a corpus .jsonl file or a directory of them
                    ) -> list[SourceDocument]: # one SourceDocument per record, in file order
  "Loads source documents from line-delimited JSON corpus files"
  docs = []
  seen = {}
  for file in _corpus_files(Path(path)):
    for idx, rec in read_jsonl(file):
      where = f"{file}: record {idx}"
      doc = parse_document_record(rec, where)
      if doc.doc_id in seen:
        raise ValueError(f"{where}: duplicate doc_id '{doc.doc_id}' (first seen in {seen[doc.doc_id]})")
      seen[doc.doc_id] = where
      docs.append(doc)
  return docs


def load_dataset(path: str | Path # evaluation dataset .jsonl
                ) -> list[QueryRecord]: # query records in file order
  "Loads evaluation queries with gold evidence and reference answers"
  path = Path(path)
  if not path.is_file():
    raise FileNotFoundError(f"Dataset file {path} does not exist.")
  out = []
  seen = set()
  for idx, rec in read_jsonl(path):
    where = f"{path}: record {idx}"
    qid, question = rec.get('query_id'), rec.get('question')
    if not isinstance(qid, str) or not qid:
      raise ValueError(f"{where}: missing or empty 'query_id'")
    if qid in seen:
      raise ValueError(f"{where}: duplicate query_id '{qid}'")
    if not isinstance(question, str) or not question.strip():
      raise ValueError(f"{where} ({qid}): missing or empty 'question'")
    gold = rec.get('gold_evidence', [])
    if isinstance(gold, str):
      gold = [gold]
    if not isinstance(gold, list) or not all(isinstance(g, str) for g in gold):
      raise ValueError(f"{where} ({qid}): 'gold_evidence' must be a list of ids")
    seen.add(qid)
    out.append(QueryRecord(query_id = qid, question = question, gold_evidence = frozenset(gold),
                           gold_answer = str(rec.get('gold_answer', ''))))
  return out


class SnapshotSerializer:
  """Writes and reads versioned index snapshots (chunks, dense vectors, BM25 settings)
  so that a reloaded index is identical to the one that was saved."""
  format_version = 1

  @staticmethod
  def _serialize_chunk(chunk) -> dict[str, Any]:
    return {'chunk_id': chunk.chunk_id, 'doc_id': chunk.doc_id, 'page_number': chunk.page_number,
            'text': chunk.text, 'char_start': chunk.char_start, 'char_end': chunk.char_end}

  @staticmethod
  def _deserialize_chunk(data: dict[str, Any]):
    from finwork.fin_data.chunking import DocumentChunk  # Lazy import to avoid circular dependencies
    return DocumentChunk(**data)

  @classmethod
  def to_dict(cls, chunks: list, # DocumentChunks covered by the indices
              dense_index, # DenseIndex over the chunks
              bm25_index # Bm25Index over the chunks
             ) -> dict[str, Any]: # JSON-ready snapshot
    "Serialize indices into a plain dictionary"
    return {
      'format_version': cls.format_version,
      'chunks': [cls._serialize_chunk(c) for c in chunks],
      'dense': {'dim': dense_index.dim,
                'chunk_ids': list(dense_index.chunk_ids),
                'vectors': dense_index.matrix.tolist()},
      'bm25': {'k1': bm25_index.k1, 'b': bm25_index.b, 'min_token_length': bm25_index.min_token_length}
      }

  @classmethod
  def serialize(cls, path: str | Path, # file path to save the snapshot
                chunks: list, dense_index, bm25_index) -> None:
    "Serialize indices to JSON; identical inputs give byte-identical files"
    data = cls.to_dict(chunks, dense_index, bm25_index)
    Path(path).parent.mkdir(parents = True, exist_ok = True)
    with open(path, 'w', encoding = 'utf-8') as f:
      json.dump(data, f, sort_keys = True, separators = (',', ':'))

  @classmethod
  def deserialize(cls, path: str | Path # file path of a saved snapshot
                 ) -> tuple[list, Any, Any]: # (chunks, DenseIndex, Bm25Index)
    "Deserialize a snapshot and rebuild the indices"
    from finwork.retrieval.dense import DenseIndex
    from finwork.retrieval.lexical import build_bm25_index
    path = Path(path)
    if not path.is_file():
      raise FileNotFoundError(f"Index snapshot {path} does not exist; run 'finwork ingest' first.")
    with open(path, 'r', encoding = 'utf-8') as f:
      data = json.load(f)
    version = data.get('format_version')
    if version != cls.format_version:
      raise ValueError(f"Unsupported snapshot format_version {version!r}; expected {cls.format_version}.")
    chunks = [cls._deserialize_chunk(c) for c in data['chunks']]
    dense = DenseIndex.from_vectors(data['dense']['chunk_ids'], data['dense']['vectors'], dim = data['dense']['dim'])
    bm25 = build_bm25_index(chunks, k1 = data['bm25']['k1'], b = data['bm25']['b'],
                            min_token_length = data['bm25']['min_token_length'])
    return chunks, dense, bm25


serializer = SnapshotSerializer()
