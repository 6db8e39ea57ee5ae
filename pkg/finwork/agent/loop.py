import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from finwork.agent.tools import ToolRegistry, ToolOutput
from finwork.agent.clients import LlmClient, ModelTurn, turn_to_dict
from finwork.agent.prompts import parse_citations

logger = logging.getLogger(__name__)

ANSWER_KEYS = ('message', 'content', 'text', 'answer')
EMPTY_ANSWER = "No answer was produced."


@dataclass
class AgentTranscript:
  "Ordered model turns and tool outputs of one agent run"
  events: list[ModelTurn | ToolOutput] = field(default_factory = list)
  iterations: int = 0
  truncated: bool = False

  @property
  def final_turn(self) -> ModelTurn | None:
    for event in reversed(self.events):
      if isinstance(event, ModelTurn):
        return event
    return None

  @property
  def tool_outputs(self) -> list[ToolOutput]:
    return [e for e in self.events if isinstance(e, ToolOutput)]

  def to_dict(self) -> dict[str, Any]:
    events = []
    for e in self.events:
      if isinstance(e, ModelTurn):
        events.append({'type': 'model_turn', **turn_to_dict(e)})
      else:
        events.append({'type': 'tool_output', 'call_id': e.call_id, 'name': e.name,
                       'success': e.success, 'payload': e.payload})
    return {'iterations': self.iterations, 'truncated': self.truncated, 'events': events}


@dataclass(frozen = True)
class AgentAnswer:
  text: str
  cited_sources: tuple[tuple[str, int], ...] = ()


class AgentError(RuntimeError):
  def __init__(self, message: str, transcript: AgentTranscript):
    super().__init__(message)
    self.transcript = transcript


def check_alternation(transcript: AgentTranscript # finished run
                     ) -> bool: # True if every tool-calling turn is followed by its outputs before the next turn
  "verifies the turn / tool-output alternation of a transcript"
  pending = None
  for event in transcript.events:
    if isinstance(event, ModelTurn):
      if pending:
        return False
      pending = [c.call_id for c in event.tool_calls]
    else:
      if not pending or event.call_id != pending[0]:
        return False
      pending.pop(0)
  if pending:
    return False
  final = transcript.final_turn
  return final is not None and (transcript.truncated or not final.tool_calls)


def run_agent(prompt: str, # fully assembled prompt
              tools: ToolRegistry | None, # tools the model may call; None offers no tools
              llm: LlmClient, # chat service
              max_iterations: int = 10 # cap on model calls
             ) -> AgentTranscript:
  "Runs the tool-use loop until the model answers without tool calls or the iteration cap is hit"
  if max_iterations < 1:
    raise ValueError(f"max_iterations has to be a positive integer, got {max_iterations}")
  tools = tools if tools is not None else ToolRegistry()
  specs = tools.specs
  messages: list[dict[str, Any]] = [{'role': 'user', 'content': prompt}]
  transcript = AgentTranscript()
  while True:
    try:
      turn = llm.chat(list(messages), specs)
    except Exception as e:
      raise AgentError(f"LLM call failed at iteration {transcript.iterations + 1}: {e}", transcript) from e
    transcript.iterations += 1
    transcript.events.append(turn)
    messages.append({'role': 'assistant', 'content': turn.text, 'tool_calls': turn.tool_calls})
    if not turn.tool_calls:
      break
    for call in turn.tool_calls:
      output = tools.execute(call)
      transcript.events.append(output)
      messages.append({'role': 'tool', 'call_id': output.call_id, 'name': output.name,
                       'content': output.payload, 'success': output.success})
    if transcript.iterations >= max_iterations:
      transcript.truncated = True
      logger.warning("agent stopped after %d iterations without a final answer", max_iterations,
                     extra = {'stage': 'agent_loop'})
      break
  logger.info("agent loop", extra = {'stage': 'agent_loop', 'iterations': transcript.iterations,
                                     'truncated': transcript.truncated,
                                     'n_tool_calls': len(transcript.tool_outputs)})
  return transcript


def extract_answer(response: Any # model output: object with .message, mapping, or anything else
                  ) -> str: # never raises
  "pulls the answer text out of a model response"
  try:
    if not isinstance(response, Mapping):
      message = getattr(response, 'message', None)
      if message is not None:
        answer = str(message)
      else:
        answer = str(response)
    else:
      key = next((k for k in ANSWER_KEYS if k in response), None)
      answer = str(response[key]) if key is not None else str(response)
  except Exception:
    answer = object.__repr__(response)
  logger.info("extract answer", extra = {'stage': 'extract_answer', 'n_chars': len(answer)})
  return answer


def build_answer(response: Any # final model turn or any response structure
                ) -> AgentAnswer:
  "extracts the answer text and its cited sources"
  text = extract_answer(response)
  if not text.strip():
    text = EMPTY_ANSWER
  return AgentAnswer(text, tuple(parse_citations(text)))
