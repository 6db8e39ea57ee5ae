from dataclasses import dataclass

from finwork.fin_data.loader import SourceDocument, unwrap

DEFAULT_SEPARATORS = ("\n\n", "\n", ". ", " ")


@dataclass(frozen = True)
class ChunkingConfig:
  "Settings for recursive character splitting"
  chunk_size: int = 500
  overlap: int = 50
  separator_hierarchy: tuple[str, ...] = DEFAULT_SEPARATORS
  strip_whitespace: bool = True

  def __post_init__(self):
    if self.chunk_size < 1:
      raise ValueError(f"chunk_size has to be a positive integer, got {self.chunk_size}")
    if self.overlap < 0 or self.overlap >= self.chunk_size:
      raise ValueError(f"overlap has to be in [0, chunk_size); got overlap={self.overlap}, chunk_size={self.chunk_size}")
    if any(not sep for sep in self.separator_hierarchy):
      raise ValueError("Separators have to be non-empty strings.")
    object.__setattr__(self, 'separator_hierarchy', tuple(self.separator_hierarchy))


@dataclass(frozen = True)
class DocumentChunk:
  "A passage of one page with its character offsets into that page"
  chunk_id: str
  doc_id: str
  page_number: int
  text: str
  char_start: int
  char_end: int

  def __post_init__(self):
    if not self.text:
      raise ValueError(f"Chunk {self.chunk_id} is empty")
    if self.char_end - self.char_start != len(self.text):
      raise ValueError(f"Chunk {self.chunk_id}: offsets [{self.char_start}, {self.char_end}) do not match text length {len(self.text)}")


def _split_on(text: str, start: int, end: int, sep: str) -> list[tuple[int, int]]:
  "Cuts text[start:end] after every occurrence of sep; the separator stays with the preceding piece"
  pieces = []
  pos = start
  while True:
    idx = text.find(sep, pos, end)
    if idx == -1:
      break
    cut = idx + len(sep)
    pieces.append((pos, cut))
    pos = cut
  if pos < end:
    pieces.append((pos, end))
  return pieces


def _window(start: int, end: int, size: int, overlap: int) -> list[tuple[int, int, bool]]:
  spans = []
  pos = start
  while True:
    stop = min(pos + size, end)
    spans.append((pos, stop, True))
    if stop >= end:
      return spans
    pos += size - overlap


def _merge(spans: list[tuple[int, int, bool]], size: int) -> list[tuple[int, int, bool]]:
  "Greedily joins adjacent separator pieces while they fit; windows are left alone"
  merged = []
  for s, e, is_window in spans:
    if merged and not is_window and not merged[-1][2] and e - merged[-1][0] <= size:
      merged[-1] = (merged[-1][0], e, False)
    else:
      merged.append((s, e, is_window))
  return merged


def split_span(text: str, # page text
              start: int, # span start offset
              end: int, # span end offset (exclusive)
              separators: tuple[str, ...], # remaining separator hierarchy
              size: int, # maximum chunk length
              overlap: int # overlap of fallback windows
             ) -> list[tuple[int, int, bool]]: # (start, end, is_fallback_window) spans
  "Recursively splits a span on the separator hierarchy, falling back to character windows"
  if end - start <= size:
    return [(start, end, False)]
  for i, sep in enumerate(separators):
    if text.find(sep, start, end) == -1:
      continue
    spans = []
    for ps, pe in _split_on(text, start, end, sep):
      if pe - ps <= size:
        spans.append((ps, pe, False))
      else:
        spans.extend(split_span(text, ps, pe, separators[i + 1:], size, overlap))
    return _merge(spans, size)
  return _window(start, end, size, overlap)


def _strip(text: str, s: int, e: int) -> tuple[int, int]:
  while s < e and text[s].isspace():
    s += 1
  while e > s and text[e - 1].isspace():
    e -= 1
  return s, e


def chunk_page(doc_id: str, # owning document
              page_number: int, # page provenance
              text: str, # page text
              cfg: ChunkingConfig | None = None # chunking settings
             ) -> list[DocumentChunk]: # chunks of this page in text order
  "Splits a single page into chunks"
  if cfg is None:
    cfg = ChunkingConfig()
  if not text:
    return []
  chunks = []
  for s, e, is_window in split_span(text, 0, len(text), cfg.separator_hierarchy, cfg.chunk_size, cfg.overlap):
    if cfg.strip_whitespace:
      if is_window:
        if text[s:e].isspace():
          continue
      else:
        s, e = _strip(text, s, e)
    if e <= s:
      continue
    chunks.append(DocumentChunk(chunk_id = f"{doc_id}::p{page_number}::c{len(chunks)}", doc_id = doc_id,
                                page_number = page_number, text = text[s:e], char_start = s, char_end = e))
  return chunks


def chunk_document(doc: SourceDocument, # document to split
                  cfg: ChunkingConfig | None = None # chunking settings; default 500/50
                 ) -> list[DocumentChunk]: # chunks of all pages, page by page
  "Splits a document page by page into overlapping-window or separator-based chunks"
  return unwrap([chunk_page(doc.doc_id, num, text, cfg) for num, text in doc.pages])


def chunk_corpus(docs: list[SourceDocument], # documents to split
                cfg: ChunkingConfig | None = None # chunking settings
               ) -> list[DocumentChunk]: # all chunks, document by document
  "Chunks every document of a corpus"
  return unwrap([chunk_document(d, cfg) for d in docs])
