import re
import logging
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Any

from finwork.retrieval.lexical import tokenize
from finwork.agent.prompts import render_template
from finwork.agent.clients import LlmClient, ModelTurn
from finwork.agent.loop import extract_answer

logger = logging.getLogger(__name__)

DEFAULT_JUDGE_MODEL = "claude-3-7-sonnet-20250219"

JUDGE_TEMPLATE = """You are evaluating the answer of a financial question-answering system.

Question:
{question}

Reference answer:
{gold_answer}

Evidence:
{evidence}

Candidate answer:
{answer}

Decide two binary verdicts:
- factual: 1 if every figure and claim in the candidate answer agrees with the reference answer and the evidence, otherwise 0
- complete: 1 if the candidate answer addresses everything the question asks for, otherwise 0

Reply with exactly these two lines:
factual: <0 or 1>, complete: <0 or 1>
rationale: <one sentence>"""

_VERDICT = re.compile(r"factual\s*:\s*([01])\s*,\s*complete\s*:\s*([01])", re.I)
_RATIONALE = re.compile(r"rationale\s*:\s*(.+)", re.I)
_REFERENCE = re.compile(r"\nReference answer:\n(.*?)\n\nEvidence:\n", re.S)
_CANDIDATE = re.compile(r"\nCandidate answer:\n(.*?)\n\nDecide two binary verdicts:", re.S)
_NUMBER = re.compile(r"-?\d[\d,]*(?:\.\d+)?")


@dataclass(frozen = True)
class JudgeVerdict:
  query_id: str
  factual_correctness: int
  completeness: int
  rationale: str = ''


class JudgeError(RuntimeError):
  def __init__(self, message: str, query_id: str, attempts: int):
    super().__init__(f"{message} (query_id={query_id!r}, attempts={attempts})")
    self.query_id = query_id
    self.attempts = attempts


def render_judge_prompt(question: str, answer: str, evidence_texts: list[str], gold_answer: str) -> str:
  evidence = '\n\n'.join(evidence_texts) if evidence_texts else '(none)'
  return render_template(JUDGE_TEMPLATE, {'question': question, 'gold_answer': gold_answer,
                                          'evidence': evidence, 'answer': answer})


def parse_verdict(reply: str # judge reply text
                 ) -> tuple[int, int, str] | None: # (factual, complete, rationale), None if no verdict block
  "reads the 'factual: X, complete: Y' block of a judge reply"
  m = _VERDICT.search(reply)
  if m is None:
    return None
  r = _RATIONALE.search(reply)
  return int(m.group(1)), int(m.group(2)), (r.group(1).strip() if r else '')


def judge_generation(query_id: str, # query being judged
                     question: str, # user question
                     answer: str, # generated answer
                     evidence_texts: list[str], # retrieved chunk texts shown to the generator
                     gold_answer: str, # reference answer
                     judge: LlmClient, # judge model
                     retries: int = 2 # extra attempts after an unparseable reply or client failure
                    ) -> JudgeVerdict:
  "LLM-as-judge verdicts on factual correctness and completeness"
  prompt = render_judge_prompt(question, answer, evidence_texts, gold_answer)
  attempts = 0
  last = ''
  for attempts in range(1, retries + 2):
    try:
      reply = extract_answer(judge.chat([{'role': 'user', 'content': prompt}], []))
    except Exception as e:
      last = f"{type(e).__name__}: {e}"
      logger.warning("judge call failed for %s (attempt %d): %s", query_id, attempts, e)
      continue
    parsed = parse_verdict(reply)
    if parsed is not None:
      return JudgeVerdict(query_id, *parsed)
    last = reply[:200]
    logger.info("no verdict block in judge reply for %s (attempt %d)", query_id, attempts)
  raise JudgeError(f"No parseable verdict after {attempts} attempts; last reply: {last!r}", query_id, attempts)


def _numbers(text: str) -> set[str]:
  out = set()
  for raw in _NUMBER.findall(text):
    try:
      out.add(format(Decimal(raw.replace(',', '')).normalize(), 'f'))
    except InvalidOperation:
      continue
  return out


class ReferenceJudge:
  """Stateless offline judge comparing the candidate answer with the reference answer in the judge prompt.
  factual: every number of the reference appears in the candidate (half of the reference terms if it has no numbers).
  complete: at least 60% of the reference terms appear in the candidate."""

  def __init__(self, term_share: float = 0.5, complete_share: float = 0.6) -> None:
    self.term_share = term_share
    self.complete_share = complete_share

  def chat(self, messages: list[dict[str, Any]], tool_specs: list) -> ModelTurn:
    prompt = next((str(m.get('content', '')) for m in messages if m.get('role') == 'user'), '')
    ref, cand = _REFERENCE.search(prompt), _CANDIDATE.search(prompt)
    if ref is None or cand is None:
      return ModelTurn("The prompt does not contain a reference and a candidate answer.")
    reference, candidate = ref.group(1), cand.group(1)
    ref_terms, cand_terms = set(tokenize(reference)), set(tokenize(candidate))
    share = len(ref_terms & cand_terms) / len(ref_terms) if ref_terms else 0.0
    ref_numbers = _numbers(reference)
    if ref_numbers:
      factual = int(ref_numbers <= _numbers(candidate))
    else:
      factual = int(share >= self.term_share)
    complete = int(share >= self.complete_share)
    return ModelTurn(f"factual: {factual}, complete: {complete}\n"
                     f"rationale: {len(ref_numbers & _numbers(candidate))} of {len(ref_numbers)} reference figures "
                     f"and {share:.0%} of reference terms found in the answer")
