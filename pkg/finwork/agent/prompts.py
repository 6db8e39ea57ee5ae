import re
from typing import Literal

from finwork.fin_data.chunking import DocumentChunk

PromptKind = Literal['rag_only', 'baseline_agent', 'neurosymbolic_agent']
PROMPT_KINDS = ('rag_only', 'baseline_agent', 'neurosymbolic_agent')

POLICY_INSTRUCTION = "Use policy guidelines to verify calculations. Cite sources clearly."

BASELINE_AGENT_TEMPLATE = """You are a financial analyst. Answer this question using ONLY the provided documents.

Question: {question}

Retrieved Financial Documents:
{formatted_docs}

Instructions:
- Use only the information in the provided documents
- Use calculator for basic math operations
- Use python_repl for complex calculations or data analysis
- Show your calculations clearly
- Cite document sources in your answer
- If information is missing, state that clearly

Provide a complete analysis with calculations and citations."""

NEUROSYMBOLIC_AGENT_TEMPLATE = """You are a professional financial analyst. Answer this question using the provided documents.

{policy_context}

Question: {question}

Retrieved Financial Documents:
{formatted_docs}

Instructions:
- Provide a clear, concise financial analysis based solely on the provided documents
- Use calculator for basic math operations and python_repl for complex calculations
- Use the validation rules above to internally verify your calculations (DO NOT mention rule IDs or validation details in your response)
- Present a professional analysis focused on business insights
- Cite document sources clearly
- If calculations don't align with validation rules, note any discrepancies briefly
- Keep your response focused and avoid unnecessary technical details

Your response should read like a professional financial report, not a technical validation log.
""" + POLICY_INSTRUCTION

RAG_ONLY_TEMPLATE = """You are a financial analyst. Answer the following question using ONLY the information provided in the retrieved documents.

Question: {query}

Retrieved Documents:
{context}

Instructions:
- Provide specific numerical answers when requested
- Cite the document source when possible
- If the information is not available in the documents, state that clearly
- Show calculations when relevant
- Focus only on information from the retrieved documents

Answer:"""

PROMPT_TEMPLATES = {
  'rag_only': RAG_ONLY_TEMPLATE,
  'baseline_agent': BASELINE_AGENT_TEMPLATE,
  'neurosymbolic_agent': NEUROSYMBOLIC_AGENT_TEMPLATE
  }

_PLACEHOLDER = re.compile(r"\{([A-Za-z_]\w*)\}")
_CITATION = re.compile(r"\(([^(),\n]+?),\s*page\s+(\d+)\)")


def template_placeholders(template: str # prompt template
                         ) -> list[str]: # placeholder names in order of first appearance
  "lists the {name} placeholders of a template"
  return list(dict.fromkeys(_PLACEHOLDER.findall(template)))


def render_template(template: str, # prompt template with {name} placeholders
                    bindings: dict[str, str] # name:replacement
                   ) -> str: # template with every placeholder replaced exactly once
  "substitutes placeholders in a single pass, so braces inside bound text are left alone"
  missing = [name for name in template_placeholders(template) if name not in bindings]
  if missing:
    raise ValueError(f"Missing binding for placeholder(s) {missing}")
  return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template)


def format_document(chunk: DocumentChunk, # retrieved chunk
                    rank: int # 1-based rerank position
                   ) -> str:
  "renders one chunk with its provenance header"
  return f"[Document {rank}] ({chunk.doc_id}, page {chunk.page_number})\n{chunk.text}"


def format_documents(docs: list[tuple[DocumentChunk, int]] # (chunk, rerank rank) pairs
                    ) -> str: # documents in rank order, separated by blank lines
  "formats retrieved chunks for a prompt"
  return '\n\n'.join(format_document(chunk, rank) for chunk, rank in sorted(docs, key = lambda d: d[1]))


def assemble_prompt(kind: PromptKind, # which prompt listing to use
                    question: str, # user question
                    docs: list[tuple[DocumentChunk, int]], # (chunk, rerank rank) pairs
                    policy_context: str | None = None # output of format_policy_context; neurosymbolic only
                   ) -> str: # fully rendered prompt
  "builds the generation prompt for one question"
  if kind not in PROMPT_TEMPLATES:
    raise ValueError(f"Unknown prompt kind {kind!r}; choose one of {PROMPT_KINDS}")
  if not question or not question.strip():
    raise ValueError("question must be non-empty")
  if not docs:
    raise ValueError(f"Prompt kind {kind!r} needs at least one retrieved document")
  if kind == 'neurosymbolic_agent' and policy_context is None:
    raise ValueError("policy_context is required for the neurosymbolic agent prompt")
  if kind != 'neurosymbolic_agent' and policy_context is not None:
    raise ValueError(f"policy_context is only used by the neurosymbolic agent prompt, not {kind!r}")
  formatted = format_documents(docs)
  if kind == 'rag_only':
    bindings = {'query': question, 'context': formatted}
  else:
    bindings = {'question': question, 'formatted_docs': formatted}
    if policy_context is not None:
      bindings['policy_context'] = policy_context
  return render_template(PROMPT_TEMPLATES[kind], bindings)


def parse_citations(text: str # answer text
                   ) -> list[tuple[str, int]]: # (doc_id, page) pairs, first occurrence order, no duplicates
  "finds '(doc_id, page N)' citations in generated text"
  return list(dict.fromkeys((m.group(1).strip(), int(m.group(2))) for m in _CITATION.finditer(text)))
