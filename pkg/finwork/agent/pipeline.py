import logging
from dataclasses import dataclass, field

from finwork.fin_data.chunking import DocumentChunk
from finwork.policy.rules import PolicySet, format_policy_context
from finwork.policy.evaluate import RuleVerdict, audit_text
from finwork.retrieval.dense import EmbedderClient
from finwork.retrieval.rerank import RerankerClient
from finwork.retrieval.methods import KnowledgeBase, retrieve, get_method
from finwork.agent.prompts import PromptKind, PROMPT_KINDS, assemble_prompt
from finwork.agent.tools import SearchClient, CodeExecutor, build_tool_registry
from finwork.agent.clients import LlmClient
from finwork.agent.loop import AgentTranscript, AgentAnswer, run_agent, build_answer

logger = logging.getLogger(__name__)


@dataclass(frozen = True)
class GenerationConfig:
  label: str
  retrieval_method: str
  prompt_kind: PromptKind
  use_tools: bool


# compared generation configurations, in reporting order
GENERATION_CONFIGS = {g.label: g for g in (
  GenerationConfig("RAG (Dense) + Reranker + Agent (+ Web Search) + Neurosymbolic", 'Dense+Rerank', 'neurosymbolic_agent', True),
  GenerationConfig("RAG (Dense) + Reranker + Agent (+ Web Search)", 'Dense+Rerank', 'baseline_agent', True),
  GenerationConfig("Dense + Reranker", 'Dense+Rerank', 'rag_only', False),
  GenerationConfig("Only Dense", 'Dense', 'rag_only', False),
  GenerationConfig("Hybrid + Reranker", 'Hybrid+Rerank', 'rag_only', False),
  GenerationConfig("BM25 + Reranker", 'BM25+Rerank', 'rag_only', False),
  GenerationConfig("Only BM25", 'BM25', 'rag_only', False),
  GenerationConfig("Only Hybrid", 'Hybrid', 'rag_only', False)
  )}


def generation_config_for(prompt_kind: PromptKind # template used by a single question run
                         ) -> GenerationConfig:
  "dense retrieval with reranking followed by the given prompt; tools for the agent prompts"
  if prompt_kind not in PROMPT_KINDS:
    raise ValueError(f"Unknown prompt kind {prompt_kind!r}; choose one of {PROMPT_KINDS}")
  return GenerationConfig(prompt_kind, 'Dense+Rerank', prompt_kind, prompt_kind != 'rag_only')


@dataclass(frozen = True)
class PipelineSettings:
  k_dense: int = 15
  k_final: int = 3
  rrf_k: float = 60
  max_rules: int = 40
  tolerance: float = 1e-6
  max_iterations: int = 10
  max_results: int = 5
  audit: bool = False
  rerank_fallback: bool = False
  query_instruction: str | None = None


@dataclass
class PipelineClients:
  embedder: EmbedderClient
  reranker: RerankerClient
  llm: LlmClient
  search: SearchClient | None = None
  executor: CodeExecutor | None = None


@dataclass
class PipelineResult:
  question: str
  config: GenerationConfig
  docs: list[tuple[DocumentChunk, int]]
  prompt: str
  transcript: AgentTranscript
  answer: AgentAnswer
  verdicts: list[RuleVerdict] = field(default_factory = list)


class StageError(RuntimeError):
  def __init__(self, stage: str, cause: Exception):
    super().__init__(f"{stage} failed: {type(cause).__name__}: {cause}")
    self.stage = stage


def answer_question(question: str, # user question
                    kb: KnowledgeBase, # indexed corpus
                    clients: PipelineClients, # service clients
                    policies: PolicySet | None = None, # required by the neurosymbolic prompt and the audit
                    config: GenerationConfig | str = 'neurosymbolic_agent', # generation config or prompt kind
                    settings: PipelineSettings | None = None # retrieval and agent parameters
                   ) -> PipelineResult:
  "Policy loading, retrieval with reranking, the agent loop and answer extraction for one question"
  settings = settings or PipelineSettings()
  if isinstance(config, str):
    config = GENERATION_CONFIGS[config] if config in GENERATION_CONFIGS else generation_config_for(config)
  if not question or not question.strip():
    raise ValueError("question must be non-empty")
  policy_context = None
  if config.prompt_kind == 'neurosymbolic_agent':
    if policies is None:
      raise ValueError("The neurosymbolic prompt needs a loaded policy set")
    policy_context = format_policy_context(policies, settings.max_rules)
    logger.info("policy context", extra = {'stage': 'policy_loading', 'n_rules': len(policies),
                                           'max_rules': settings.max_rules})
  method = get_method(config.retrieval_method)
  try:
    docs = retrieve(kb, question, method, clients.embedder, clients.reranker, settings.k_dense, settings.k_final,
                    settings.rrf_k, settings.query_instruction, settings.rerank_fallback)
  except Exception as e:
    raise StageError('retrieval', e) from e
  if not docs:
    raise StageError('retrieval', ValueError(f"no chunks retrieved for {question!r}"))
  prompt = assemble_prompt(config.prompt_kind, question, docs, policy_context)
  tools = build_tool_registry(clients.search, clients.executor, settings.max_results) if config.use_tools else None
  try:
    transcript = run_agent(prompt, tools, clients.llm, settings.max_iterations)
  except Exception as e:
    raise StageError('agent_loop', e) from e
  answer = build_answer(transcript.final_turn)
  verdicts = []
  if settings.audit and policies is not None:
    evidence = '\n'.join([answer.text] + [o.payload for o in transcript.tool_outputs if o.success])
    verdicts = audit_text(evidence, policies, settings.tolerance)
  return PipelineResult(question, config, docs, prompt, transcript, answer, verdicts)
