import os
import re
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

from finwork.retrieval.lexical import tokenize
from finwork.agent.tools import ToolSpec, ToolInvocation, SearchResult, SearchError

logger = logging.getLogger(__name__)

DEFAULT_AGENT_MODEL = "claude-sonnet-4-20250514"
TAVILY_ENDPOINT = "https://api.tavily.com/search"
NO_ANSWER = "The provided documents do not contain the information needed to answer this question."


def _live_import_error() -> ImportError:
  return ImportError("You must install the 'live' dependencies to use this feature. Try 'pip install finwork[live]'.")


@dataclass(frozen = True)
class ModelTurn:
  "One model response: text plus zero or more tool calls"
  text: str
  tool_calls: tuple[ToolInvocation, ...] = ()
  stop_reason: str = 'end_turn'

  @property
  def message(self) -> str:
    return self.text


class LlmClient(Protocol):
  def chat(self, messages: list[dict[str, Any]], tool_specs: list[ToolSpec]) -> ModelTurn:
    ...


def turn_from_dict(raw: dict[str, Any] # {"text": ..., "tool_calls": [{"id", "name", "arguments"}]}
                  ) -> ModelTurn:
  "builds a ModelTurn from its fixture representation"
  calls = tuple(ToolInvocation(call_id = c.get('id') or f"call-{i + 1}", name = c['name'],
                               arguments = dict(c.get('arguments', {})))
                for i, c in enumerate(raw.get('tool_calls', [])))
  return ModelTurn(text = raw.get('text', ''), tool_calls = calls,
                   stop_reason = 'tool_use' if calls else 'end_turn')


def turn_to_dict(turn: ModelTurn) -> dict[str, Any]:
  return {'text': turn.text,
          'tool_calls': [{'id': c.call_id, 'name': c.name, 'arguments': c.arguments} for c in turn.tool_calls]}


def _last_tool_output(messages: list[dict[str, Any]]) -> str:
  for msg in reversed(messages):
    if msg.get('role') == 'tool':
      return str(msg.get('content', ''))
  return ''


class ScriptedLlmClient:
  def __init__(self, turns: list[ModelTurn], # canned turns consumed one per call
               cycle: bool = False # restart from the first turn when exhausted
              ) -> None:
    "Offline LLM that replays canned turns; '{last_tool_output}' in a turn's text is filled from the conversation"
    if not turns:
      raise ValueError("ScriptedLlmClient needs at least one turn")
    self.turns = list(turns)
    self.cycle = cycle
    self._position = 0
    self._lock = threading.Lock()

  @classmethod
  def from_file(cls, path: str | Path, cycle: bool = False) -> "ScriptedLlmClient":
    data = json.loads(Path(path).read_text(encoding = 'utf-8'))
    raw_turns = data['turns'] if isinstance(data, dict) else data
    return cls([turn_from_dict(t) for t in raw_turns], cycle = cycle)

  def reset(self) -> None:
    with self._lock:
      self._position = 0

  def _next(self, allow_tools: bool) -> ModelTurn:
    if not allow_tools and all(t.tool_calls for t in self.turns):
      raise RuntimeError("scripted LLM client has only tool-calling turns but no tools were offered")
    with self._lock:
      while True:
        if self._position >= len(self.turns):
          if not self.cycle:
            raise RuntimeError("scripted LLM client has no turns left")
          self._position = 0
        turn = self.turns[self._position]
        self._position += 1
        if allow_tools or not turn.tool_calls:
          return turn

  def chat(self, messages: list[dict[str, Any]], # conversation so far
           tool_specs: list[ToolSpec] # declared tools; tool-calling turns are skipped when empty
          ) -> ModelTurn:
    turn = self._next(bool(tool_specs))
    if '{last_tool_output}' in turn.text:
      turn = ModelTurn(turn.text.replace('{last_tool_output}', _last_tool_output(messages)),
                       turn.tool_calls, turn.stop_reason)
    return turn


_DOC_BLOCK = re.compile(r"^\[Document (\d+)\] \(([^()\n]+), page (\d+)\)\n(.*?)(?=\n\n\[Document \d+\] |\n\nInstructions:|\Z)",
                        re.S | re.M)
_QUESTION = re.compile(r"^Question: (.*)$", re.M)
_SENTENCE = re.compile(r"(?<=[.!?])\s+")


class ExtractiveLlmClient:
  "Stateless offline LLM: answers with the sentence of the top-ranked document that best matches the question"

  def chat(self, messages: list[dict[str, Any]], tool_specs: list[ToolSpec]) -> ModelTurn:
    prompt = next((str(m.get('content', '')) for m in messages if m.get('role') == 'user'), '')
    q = _QUESTION.search(prompt)
    question_terms = set(tokenize(q.group(1))) if q else set()
    blocks = sorted(_DOC_BLOCK.findall(prompt), key = lambda b: int(b[0]))
    if not blocks:
      return ModelTurn(NO_ANSWER)
    _, doc_id, page, text = blocks[0]
    sentences = [s.strip() for s in _SENTENCE.split(text.strip()) if s.strip()]
    if not sentences:
      return ModelTurn(NO_ANSWER)
    best = max(sentences, key = lambda s: len(question_terms & set(tokenize(s))))
    return ModelTurn(f"{best} ({doc_id.strip()}, page {page})")


class AnthropicLlmClient:
  def __init__(self, model: str = DEFAULT_AGENT_MODEL, # Claude model id
               temperature: float = 0.0, # decoding temperature
               max_tokens: int = 4096, # response token cap
               api_key: str | None = None # default ANTHROPIC_API_KEY
              ) -> None:
    "Live LLM backed by the Anthropic messages API with tool use"
    try:
      import anthropic
    except ImportError:
      raise _live_import_error()
    self.model = model
    self.temperature = temperature
    self.max_tokens = max_tokens
    self.client = anthropic.Anthropic(api_key = api_key or os.getenv("ANTHROPIC_API_KEY"))

  @staticmethod
  def to_anthropic_messages(messages: list[dict[str, Any]] # neutral conversation format
                           ) -> list[dict[str, Any]]:
    "converts the neutral message list into Anthropic content blocks; tool outputs become tool_result blocks"
    out = []
    for msg in messages:
      role = msg.get('role')
      if role == 'assistant':
        blocks = [{'type': 'text', 'text': msg['content']}] if msg.get('content') else []
        blocks += [{'type': 'tool_use', 'id': c.call_id, 'name': c.name, 'input': c.arguments}
                   for c in msg.get('tool_calls', ())]
        out.append({'role': 'assistant', 'content': blocks})
      elif role == 'tool':
        block = {'type': 'tool_result', 'tool_use_id': msg['call_id'], 'content': str(msg['content']),
                 'is_error': not msg.get('success', True)}
        if out and out[-1]['role'] == 'user' and isinstance(out[-1]['content'], list):
          out[-1]['content'].append(block)
        else:
          out.append({'role': 'user', 'content': [block]})
      else:
        out.append({'role': 'user', 'content': str(msg.get('content', ''))})
    return out

  def chat(self, messages: list[dict[str, Any]], tool_specs: list[ToolSpec]) -> ModelTurn:
    kwargs = dict(model = self.model, max_tokens = self.max_tokens, temperature = self.temperature,
                  messages = self.to_anthropic_messages(messages))
    if tool_specs:
      kwargs['tools'] = [{'name': s.name, 'description': s.description, 'input_schema': s.parameters}
                         for s in tool_specs]
    response = self.client.messages.create(**kwargs)
    text = ''.join(b.text for b in response.content if b.type == 'text')
    calls = tuple(ToolInvocation(b.id, b.name, dict(b.input)) for b in response.content if b.type == 'tool_use')
    return ModelTurn(text, calls, response.stop_reason or ('tool_use' if calls else 'end_turn'))


def normalize_query(query: str # raw search query
                   ) -> str: # lowercased tokens joined by single spaces
  "canonical fixture key for a search query"
  return ' '.join(tokenize(query))


class FixtureSearchClient:
  def __init__(self, fixtures: dict[str, list[SearchResult]] # query:recorded results
              ) -> None:
    "Offline web search serving recorded results keyed by normalized query"
    self.fixtures = {normalize_query(q): list(hits) for q, hits in fixtures.items()}

  @classmethod
  def from_file(cls, path: str | Path) -> "FixtureSearchClient":
    data = json.loads(Path(path).read_text(encoding = 'utf-8'))
    return cls({q: [SearchResult(h['title'], h['url'], h['snippet']) for h in hits]
                for q, hits in data['queries'].items()})

  def search(self, query: str, max_results: int = 5) -> list[SearchResult]:
    return self.fixtures.get(normalize_query(query), [])[:max_results]


class TavilySearchClient:
  def __init__(self, api_key: str | None = None, # default TAVILY_API_KEY
               timeout: float = 30.0, # seconds
               endpoint: str = TAVILY_ENDPOINT
              ) -> None:
    "Live web search over the Tavily HTTP API"
    import requests
    self.session = requests.Session()
    self.api_key = api_key or os.getenv("TAVILY_API_KEY")
    self.timeout = timeout
    self.endpoint = endpoint

  def search(self, query: str, max_results: int = 5) -> list[SearchResult]:
    import requests
    try:
      response = self.session.post(self.endpoint, json = {'query': query, 'max_results': max_results},
                                   headers = {'Authorization': f"Bearer {self.api_key}"}, timeout = self.timeout)
      response.raise_for_status()
      payload = response.json()
    except (requests.RequestException, ValueError) as e:
      raise SearchError(f"Web search failed: {e}", query) from e
    return [SearchResult(r.get('title', ''), r.get('url', ''), r.get('content', ''))
            for r in payload.get('results', [])][:max_results]
