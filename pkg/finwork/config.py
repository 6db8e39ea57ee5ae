import os
import json
import logging
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Any, Mapping

from finwork.fin_data.loader import get_fixture_path
from finwork.fin_data.chunking import ChunkingConfig, DEFAULT_SEPARATORS
from finwork.retrieval.clients import DEFAULT_QUERY_INSTRUCTION

logger = logging.getLogger(__name__)

ENV_PREFIX = "FINWORK_"
CLIENT_CHOICES = {
  'embedder': ('mock', 'huggingface'),
  'reranker': ('mock', 'cross-encoder'),
  'llm': ('mock', 'scripted', 'anthropic'),
  'judge': ('mock', 'anthropic'),
  'search': ('fixture', 'tavily')
  }


@dataclass
class ChunkingSettings:
  chunk_size: int = 500
  overlap: int = 50
  separators: list[str] = field(default_factory = lambda: list(DEFAULT_SEPARATORS))
  strip_whitespace: bool = True


@dataclass
class RetrievalSettings:
  k_dense: int = 15
  k_final: int = 3
  k1: float = 1.2
  b: float = 0.75
  rrf_k: float = 60.0
  min_token_length: int = 1
  rerank_fallback: bool = False
  query_instruction: str = DEFAULT_QUERY_INSTRUCTION


@dataclass
class PolicySettings:
  path: str | None = None
  extra_paths: list[str] = field(default_factory = list)
  max_rules: int = 40
  tolerance: float = 1e-6
  audit: bool = False


@dataclass
class AgentSettings:
  template: str = 'neurosymbolic_agent'
  max_iterations: int = 10
  temperature: float = 0.0
  max_tokens: int = 4096
  step_budget: int = 10_000
  max_results: int = 5


@dataclass
class ClientSettings:
  embedder: str = 'mock'
  reranker: str = 'mock'
  llm: str = 'mock'
  judge: str = 'mock'
  search: str = 'fixture'
  embedding_model: str = "Qwen/Qwen3-Embedding-4B"
  embedding_dim: int = 384
  reranker_model: str = "jinaai/jina-reranker-v2-base-multilingual"
  llm_model: str = "claude-sonnet-4-20250514"
  judge_model: str = "claude-3-7-sonnet-20250219"
  search_timeout: float = 30.0


@dataclass
class PathSettings:
  corpus: str | None = None
  snapshot: str = "finwork_index.json"
  dataset: str | None = None
  report_dir: str = "reports"
  search_fixtures: str | None = None
  scripted_turns: str | None = None


@dataclass
class EvalSettings:
  k: int = 3
  relevance: str = 'chunk'
  judge_retries: int = 2
  parallelism: int = 1
  methods: list[str] = field(default_factory = list)


_SECTIONS = {'chunking': ChunkingSettings, 'retrieval': RetrievalSettings, 'policy': PolicySettings,
             'agent': AgentSettings, 'clients': ClientSettings, 'paths': PathSettings, 'eval': EvalSettings}


@dataclass
class PipelineConfig:
  "All settings of a run; paths are resolved relative to base_dir"
  chunking: ChunkingSettings = field(default_factory = ChunkingSettings)
  retrieval: RetrievalSettings = field(default_factory = RetrievalSettings)
  policy: PolicySettings = field(default_factory = PolicySettings)
  agent: AgentSettings = field(default_factory = AgentSettings)
  clients: ClientSettings = field(default_factory = ClientSettings)
  paths: PathSettings = field(default_factory = PathSettings)
  eval: EvalSettings = field(default_factory = EvalSettings)
  base_dir: str = '.'

  def validate(self) -> "PipelineConfig":
    "checks cross-field invariants, raising ValueError on the first violation"
    checks = [
      (self.retrieval.k_final <= self.retrieval.k_dense, f"retrieval.k_final ({self.retrieval.k_final}) must not exceed retrieval.k_dense ({self.retrieval.k_dense})"),
      (self.retrieval.k_final >= 1, "retrieval.k_final must be at least 1"),
      (0 <= self.chunking.overlap < self.chunking.chunk_size, "chunking.overlap must be in [0, chunk_size)"),
      (0 <= self.retrieval.b <= 1, "retrieval.b must be in [0, 1]"),
      (self.retrieval.k1 >= 0, "retrieval.k1 must be non-negative"),
      (self.policy.max_rules >= 1, "policy.max_rules must be at least 1"),
      (self.policy.tolerance >= 0, "policy.tolerance must be non-negative"),
      (self.agent.max_iterations >= 1, "agent.max_iterations must be at least 1"),
      (self.agent.template in ('rag_only', 'baseline_agent', 'neurosymbolic_agent'), f"agent.template {self.agent.template!r} is not a prompt kind"),
      (self.eval.k >= 1, "eval.k must be at least 1"),
      (self.eval.relevance in ('chunk', 'doc'), "eval.relevance must be 'chunk' or 'doc'"),
      (self.eval.parallelism >= 1, "eval.parallelism must be at least 1"),
      (self.eval.judge_retries >= 0, "eval.judge_retries must be non-negative")
      ]
    for ok, message in checks:
      if not ok:
        raise ValueError(message)
    for name, choices in CLIENT_CHOICES.items():
      value = getattr(self.clients, name)
      if value not in choices:
        raise ValueError(f"clients.{name} must be one of {choices}, got {value!r}")
    return self

  def resolve(self, value: str | None, # configured path
              fixture: str | None = None # packaged fallback file
             ) -> Path | None:
    "resolves a configured path against the config directory, falling back to a packaged fixture"
    if value is None:
      return get_fixture_path(fixture) if fixture else None
    path = Path(os.path.expanduser(value))
    return path if path.is_absolute() else Path(self.base_dir) / path

  @property
  def corpus_path(self) -> Path:
    return self.resolve(self.paths.corpus, 'fixture_corpus.jsonl')

  @property
  def dataset_path(self) -> Path:
    return self.resolve(self.paths.dataset, 'fixture_dataset.jsonl')

  @property
  def snapshot_path(self) -> Path:
    return self.resolve(self.paths.snapshot)

  @property
  def report_dir(self) -> Path:
    return self.resolve(self.paths.report_dir)

  @property
  def policy_paths(self) -> list[Path]:
    return [self.resolve(self.policy.path, 'policies_core.json')] + [self.resolve(p) for p in self.policy.extra_paths]

  def chunking_config(self) -> ChunkingConfig:
    return ChunkingConfig(chunk_size = self.chunking.chunk_size, overlap = self.chunking.overlap,
                          separator_hierarchy = tuple(self.chunking.separators),
                          strip_whitespace = self.chunking.strip_whitespace)

  def pipeline_settings(self):
    from finwork.agent.pipeline import PipelineSettings  # Lazy import to keep config import light
    return PipelineSettings(k_dense = self.retrieval.k_dense, k_final = self.retrieval.k_final,
                            rrf_k = self.retrieval.rrf_k, max_rules = self.policy.max_rules,
                            tolerance = self.policy.tolerance, max_iterations = self.agent.max_iterations,
                            max_results = self.agent.max_results, audit = self.policy.audit,
                            rerank_fallback = self.retrieval.rerank_fallback,
                            query_instruction = self.retrieval.query_instruction)

  def to_dict(self) -> dict[str, Any]:
    return {name: asdict(getattr(self, name)) for name in _SECTIONS}


def _coerce(raw: str, current: Any, key: str) -> Any:
  if isinstance(current, bool):
    if raw.lower() in ('1', 'true', 'yes', 'on'):
      return True
    if raw.lower() in ('0', 'false', 'no', 'off'):
      return False
    raise ValueError(f"{key}: cannot read {raw!r} as a boolean")
  try:
    if isinstance(current, int):
      return int(raw)
    if isinstance(current, float):
      return float(raw)
  except ValueError:
    raise ValueError(f"{key}: cannot read {raw!r} as {type(current).__name__}") from None
  if isinstance(current, list):
    value = json.loads(raw) if raw.strip().startswith('[') else [p.strip() for p in raw.split(',') if p.strip()]
    return value
  return raw


def _build_section(name: str, values: Mapping[str, Any]):
  cls = _SECTIONS[name]
  if not isinstance(values, Mapping):
    raise ValueError(f"Config section '{name}' must be an object")
  known = {f.name for f in fields(cls)}
  unknown = sorted(set(values) - known)
  if unknown:
    raise ValueError(f"Unknown key(s) {unknown} in config section '{name}'")
  return cls(**values)


def apply_env_overrides(config: PipelineConfig, # config to update in place
                        env: Mapping[str, str] # environment, usually os.environ
                       ) -> PipelineConfig:
  "applies FINWORK_<SECTION>_<KEY> overrides, e.g. FINWORK_RETRIEVAL_K_DENSE=20"
  for var, raw in env.items():
    if not var.startswith(ENV_PREFIX):
      continue
    rest = var[len(ENV_PREFIX):].lower()
    section = next((s for s in _SECTIONS if rest.startswith(s + '_')), None)
    if section is None:
      continue
    key = rest[len(section) + 1:]
    target = getattr(config, section)
    if key not in {f.name for f in fields(target)}:
      raise ValueError(f"{var} does not name a setting of section '{section}'")
    setattr(target, key, _coerce(raw, getattr(target, key), var))
  return config


def load_config(path: str | Path | None = None, # JSON config file; None uses the packaged defaults
                env: Mapping[str, str] | None = None # environment for overrides; default os.environ
               ) -> PipelineConfig:
  "Loads, overrides and validates a pipeline configuration"
  source = Path(path) if path is not None else get_fixture_path('default_config.json')
  if not source.is_file():
    raise FileNotFoundError(f"Config file {source} does not exist.")
  try:
    data = json.loads(source.read_text(encoding = 'utf-8'))
  except json.JSONDecodeError as e:
    raise ValueError(f"{source}: config is not valid JSON ({e.msg})") from e
  if not isinstance(data, dict):
    raise ValueError(f"{source}: config must be a JSON object")
  unknown = sorted(set(data) - set(_SECTIONS))
  if unknown:
    raise ValueError(f"{source}: unknown config section(s) {unknown}")
  sections = {name: _build_section(name, data.get(name, {})) for name in _SECTIONS}
  base_dir = str(source.parent) if path is not None else '.'
  config = PipelineConfig(**sections, base_dir = base_dir)
  apply_env_overrides(config, os.environ if env is None else env)
  return config.validate()


def _fallback(kind: str, choice: str, variable: str) -> None:
  logger.warning("clients.%s is '%s' but %s is not set; using the offline client instead", kind, choice, variable)


def build_embedder(config: PipelineConfig, env: Mapping[str, str] | None = None):
  "embedder client per clients.embedder"
  from finwork.retrieval.clients import HashingEmbedder, HuggingFaceEmbedder
  env = os.environ if env is None else env
  if config.clients.embedder == 'huggingface':
    if env.get('HF_TOKEN'):
      return HuggingFaceEmbedder(config.clients.embedding_model, config.retrieval.query_instruction, env['HF_TOKEN'])
    _fallback('embedder', 'huggingface', 'HF_TOKEN')
  return HashingEmbedder(config.clients.embedding_dim)


def build_reranker(config: PipelineConfig):
  "reranker client per clients.reranker"
  from finwork.retrieval.clients import LexicalOverlapReranker, CrossEncoderReranker
  if config.clients.reranker == 'cross-encoder':
    return CrossEncoderReranker(config.clients.reranker_model)
  return LexicalOverlapReranker()


def build_llm(config: PipelineConfig, env: Mapping[str, str] | None = None):
  "generation client per clients.llm"
  from finwork.agent.clients import ExtractiveLlmClient, ScriptedLlmClient, AnthropicLlmClient
  env = os.environ if env is None else env
  if config.clients.llm == 'anthropic':
    if env.get('ANTHROPIC_API_KEY'):
      return AnthropicLlmClient(config.clients.llm_model, config.agent.temperature, config.agent.max_tokens,
                                env['ANTHROPIC_API_KEY'])
    _fallback('llm', 'anthropic', 'ANTHROPIC_API_KEY')
  if config.clients.llm == 'scripted':
    return ScriptedLlmClient.from_file(config.resolve(config.paths.scripted_turns, 'scripted_turns.json'), cycle = True)
  return ExtractiveLlmClient()


def build_judge(config: PipelineConfig, env: Mapping[str, str] | None = None):
  "judge client per clients.judge"
  from finwork.agent.clients import AnthropicLlmClient
  from finwork.evaluation.judge import ReferenceJudge
  env = os.environ if env is None else env
  if config.clients.judge == 'anthropic':
    if env.get('ANTHROPIC_API_KEY'):
      return AnthropicLlmClient(config.clients.judge_model, 0.0, 1024, env['ANTHROPIC_API_KEY'])
    _fallback('judge', 'anthropic', 'ANTHROPIC_API_KEY')
  return ReferenceJudge()


def build_search(config: PipelineConfig, env: Mapping[str, str] | None = None):
  "web search client per clients.search"
  from finwork.agent.clients import FixtureSearchClient, TavilySearchClient
  env = os.environ if env is None else env
  if config.clients.search == 'tavily':
    if env.get('TAVILY_API_KEY'):
      return TavilySearchClient(env['TAVILY_API_KEY'], config.clients.search_timeout)
    _fallback('search', 'tavily', 'TAVILY_API_KEY')
  return FixtureSearchClient.from_file(config.resolve(config.paths.search_fixtures, 'search_fixtures.json'))


def build_clients(config: PipelineConfig, env: Mapping[str, str] | None = None):
  "all pipeline clients for a configuration"
  from finwork.agent.pipeline import PipelineClients
  from finwork.agent.tools import ArithmeticSandbox
  return PipelineClients(embedder = build_embedder(config, env), reranker = build_reranker(config),
                         llm = build_llm(config, env), search = build_search(config, env),
                         executor = ArithmeticSandbox(config.agent.step_budget))
