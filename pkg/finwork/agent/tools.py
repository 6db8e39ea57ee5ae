import ast
import re
import json
import logging
from decimal import Decimal, localcontext, ROUND_HALF_EVEN
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Protocol

from finwork.policy.smtlib import exact_decimal

logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12
DEFAULT_STEP_BUDGET = 10_000
MAX_NUMBER_BITS = 10_000
_NUMBER_LITERAL = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)$")


@dataclass(frozen = True)
class ToolSpec:
  name: str
  description: str
  parameters: dict[str, Any] = field(default_factory = dict, compare = False)


@dataclass(frozen = True)
class ToolInvocation:
  call_id: str
  name: str
  arguments: dict[str, Any] = field(default_factory = dict, compare = False)


@dataclass(frozen = True)
class ToolOutput:
  call_id: str
  name: str
  success: bool
  payload: str


@dataclass(frozen = True)
class SearchResult:
  title: str
  url: str
  snippet: str


class SearchError(RuntimeError):
  def __init__(self, message: str, query: str):
    super().__init__(f"{message} (query={query!r})")
    self.query = query


class SearchClient(Protocol):
  def search(self, query: str, max_results: int) -> list[SearchResult]:
    ...


class CodeExecutor(Protocol):
  "Anything that runs a program text and returns its printed result"

  def run(self, program: str) -> str:
    ...


def render_number(value: Fraction # exact rational
                 ) -> str: # exact decimal when terminating, else 12 significant digits
  "renders an exact rational for tool output"
  text = exact_decimal(value)
  if text is not None:
    return text
  with localcontext() as ctx:
    ctx.prec = SIGNIFICANT_DIGITS
    ctx.rounding = ROUND_HALF_EVEN
    return format(Decimal(value.numerator) / Decimal(value.denominator), 'f')


def _where(node: ast.AST) -> str:
  return f"line {getattr(node, 'lineno', '?')}, column {getattr(node, 'col_offset', -1) + 1}"


def _literal(node: ast.Constant, source: str) -> Fraction:
  segment = ast.get_source_segment(source, node)
  if isinstance(node.value, bool) or not isinstance(node.value, (int, float)) or segment is None \
     or not _NUMBER_LITERAL.match(segment):
    raise ValueError(f"unsupported literal {segment or node.value!r} at {_where(node)}")
  return Fraction(segment)


def _parse(source: str, mode: str) -> ast.AST:
  if not source or not source.strip():
    raise ValueError("empty expression")
  try:
    return ast.parse(source, mode = mode)
  except SyntaxError as e:
    raise ValueError(f"parse error at line {e.lineno}, column {e.offset}: {e.msg}") from e


_CALC_OPS = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
             ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b}


def _calc(node: ast.AST, source: str) -> Fraction:
  if isinstance(node, ast.Expression):
    return _calc(node.body, source)
  if isinstance(node, ast.Constant):
    return _literal(node, source)
  if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
    v = _calc(node.operand, source)
    return -v if isinstance(node.op, ast.USub) else v
  if isinstance(node, ast.BinOp) and type(node.op) in _CALC_OPS:
    left, right = _calc(node.left, source), _calc(node.right, source)
    if isinstance(node.op, ast.Div) and right == 0:
      raise ZeroDivisionError(f"division by zero at {_where(node)}")
    return _CALC_OPS[type(node.op)](left, right)
  raise ValueError(f"unsupported syntax {type(node).__name__} at {_where(node)}")


def evaluate_arithmetic(expression: str # +, -, *, /, unary minus, parentheses, integer and decimal literals
                       ) -> Fraction:
  "evaluates a calculator expression exactly"
  return _calc(_parse(expression, 'eval'), expression)


def tool_calculator(expression: str # arithmetic expression, e.g. "(365-100)/365"
                   ) -> str: # exact result, 12 significant digits when the decimal does not terminate
  "symbolic calculator for basic arithmetic"
  return render_number(evaluate_arithmetic(expression))


def _builtin_sum(*args):
  values = args[0] if len(args) == 1 and isinstance(args[0], tuple) else args
  return sum(values, Fraction(0))


def _builtin_minmax(fn):
  def inner(*args):
    values = args[0] if len(args) == 1 and isinstance(args[0], tuple) else args
    if not values:
      raise ValueError(f"{fn.__name__}() needs at least one value")
    return fn(values)
  return inner


def _builtin_round(value, ndigits = None):
  if ndigits is not None and abs(ndigits) > 1000:
    raise ValueError("round() ndigits too large")
  out = round(value) if ndigits is None else round(value, int(ndigits))
  return Fraction(out)


def _builtin_pow(base, exponent):
  if not isinstance(exponent, Fraction) or exponent.denominator != 1:
    raise ValueError("pow() only supports integer exponents")
  if abs(exponent) > 1000:
    raise ValueError("pow() exponent too large")
  if base == 0 and exponent < 0:
    raise ZeroDivisionError("division by zero in pow()")
  if abs(exponent) * max(base.numerator.bit_length(), base.denominator.bit_length()) > MAX_NUMBER_BITS:
    raise ValueError(f"pow() result exceeds {MAX_NUMBER_BITS} bits")
  return base ** int(exponent)


SANDBOX_BUILTINS: dict[str, Callable] = {
  'abs': abs, 'min': _builtin_minmax(min), 'max': _builtin_minmax(max),
  'sum': _builtin_sum, 'round': _builtin_round, 'pow': _builtin_pow
  }

_COMPARE = {ast.Lt: lambda a, b: a < b, ast.LtE: lambda a, b: a <= b, ast.Gt: lambda a, b: a > b,
            ast.GtE: lambda a, b: a >= b, ast.Eq: lambda a, b: a == b, ast.NotEq: lambda a, b: a != b}


def _bounded(value: Fraction, node: ast.AST) -> Fraction:
  if max(value.numerator.bit_length(), value.denominator.bit_length()) > MAX_NUMBER_BITS:
    raise ValueError(f"intermediate result exceeds {MAX_NUMBER_BITS} bits at {_where(node)}")
  return value


class ArithmeticSandbox:
  def __init__(self, step_budget: int = DEFAULT_STEP_BUDGET # maximum number of evaluated nodes per program
              ) -> None:
    "Restricted numeric interpreter: assignments, arithmetic, comparisons and a few built-ins over exact rationals"
    if step_budget < 1:
      raise ValueError(f"step_budget has to be a positive integer, got {step_budget}")
    self.step_budget = step_budget

  def run(self, program: str # statements separated by newlines or ';', ending in an expression
         ) -> str: # rendered value of the final expression
    tree = _parse(program, 'exec')
    for stmt in tree.body:
      if not isinstance(stmt, (ast.Assign, ast.Expr)):
        raise ValueError(f"unsupported statement {type(stmt).__name__} at {_where(stmt)}")
    if not tree.body:
      raise ValueError("program contains no statements")
    if not isinstance(tree.body[-1], ast.Expr):
      raise ValueError(f"program must end with an expression, found assignment at {_where(tree.body[-1])}")
    env = {}
    state = {'steps': 0}
    value = None
    for stmt in tree.body:
      if isinstance(stmt, ast.Assign) and len(stmt.targets) == 1 and isinstance(stmt.targets[0], ast.Name):
        name = stmt.targets[0].id
        if name in SANDBOX_BUILTINS:
          raise ValueError(f"cannot assign to built-in {name!r} at {_where(stmt)}")
        env[name] = self._eval(stmt.value, program, env, state)
      elif isinstance(stmt, ast.Expr):
        value = self._eval(stmt.value, program, env, state)
      else:
        raise ValueError(f"unsupported statement {type(stmt).__name__} at {_where(stmt)}")
    return self.render(value)

  @staticmethod
  def render(value) -> str:
    if isinstance(value, bool):
      return str(value)
    if isinstance(value, tuple):
      return '[' + ', '.join(ArithmeticSandbox.render(v) for v in value) + ']'
    return render_number(value)

  def _eval(self, node: ast.AST, source: str, env: dict, state: dict):
    state['steps'] += 1
    if state['steps'] > self.step_budget:
      raise ValueError(f"step budget of {self.step_budget} exceeded at {_where(node)}")
    if isinstance(node, ast.Constant):
      if isinstance(node.value, bool):
        return node.value
      return _literal(node, source)
    if isinstance(node, ast.Name):
      if node.id in env:
        return env[node.id]
      if node.id in SANDBOX_BUILTINS:
        raise ValueError(f"built-in {node.id!r} can only be called, at {_where(node)}")
      raise ValueError(f"name {node.id!r} is not defined at {_where(node)}")
    if isinstance(node, (ast.Tuple, ast.List)):
      return tuple(self._eval(e, source, env, state) for e in node.elts)
    if isinstance(node, ast.UnaryOp):
      v = self._eval(node.operand, source, env, state)
      if isinstance(node.op, ast.Not):
        return not v
      if isinstance(node.op, (ast.USub, ast.UAdd)):
        v = self._number(v, node)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
      left = self._number(self._eval(node.left, source, env, state), node)
      right = self._number(self._eval(node.right, source, env, state), node)
      if isinstance(node.op, ast.Pow):
        return _builtin_pow(left, right)
      if isinstance(node.op, (ast.Div, ast.FloorDiv, ast.Mod)) and right == 0:
        raise ZeroDivisionError(f"division by zero at {_where(node)}")
      if isinstance(node.op, ast.FloorDiv):
        return Fraction(left // right)
      if isinstance(node.op, ast.Mod):
        return left % right
      if type(node.op) in _CALC_OPS:
        return _bounded(_CALC_OPS[type(node.op)](left, right), node)
    if isinstance(node, ast.Compare):
      left = self._eval(node.left, source, env, state)
      for op, comp in zip(node.ops, node.comparators):
        right = self._eval(comp, source, env, state)
        if type(op) not in _COMPARE:
          break
        if not _COMPARE[type(op)](left, right):
          return False
        left = right
      else:
        return True
    if isinstance(node, ast.BoolOp):
      is_and = isinstance(node.op, ast.And)
      for v in node.values:
        if bool(self._eval(v, source, env, state)) != is_and:
          return not is_and
      return is_and
    if isinstance(node, ast.IfExp):
      branch = node.body if self._eval(node.test, source, env, state) else node.orelse
      return self._eval(branch, source, env, state)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
      fn = SANDBOX_BUILTINS.get(node.func.id)
      if fn is None:
        raise ValueError(f"call to {node.func.id!r} is not allowed at {_where(node)}")
      args = [self._eval(a, source, env, state) for a in node.args]
      return fn(*args)
    raise ValueError(f"unsupported syntax {type(node).__name__} at {_where(node)}")

  @staticmethod
  def _number(v, node: ast.AST) -> Fraction:
    if isinstance(v, bool) or not isinstance(v, Fraction):
      raise ValueError(f"arithmetic needs numbers, got {v!r} at {_where(node)}")
    return v


def tool_code_eval(program: str, # sandboxed numeric program
                   executor: CodeExecutor | None = None # default ArithmeticSandbox()
                  ) -> str: # printed value of the final expression
  "runs a program in the code-evaluation sandbox"
  return (executor or ArithmeticSandbox()).run(program)


def tool_web_search(query: str, # search query
                    client: SearchClient, # live or fixture-backed search client
                    max_results: int = 5 # cap on returned entries
                   ) -> list[SearchResult]:
  "searches the web for additional financial data"
  if max_results < 1:
    raise ValueError(f"max_results has to be a positive integer, got {max_results}")
  if not query or not query.strip():
    raise ValueError("query must be non-empty")
  return list(client.search(query, max_results))[:max_results]


class ToolRegistry:
  def __init__(self) -> None:
    "Name-unique set of tools the agent may call; aliases resolve to canonical names"
    self._tools: dict[str, tuple[ToolSpec, Callable[[dict], str]]] = {}
    self._aliases: dict[str, str] = {}

  def register(self, spec: ToolSpec, # declared tool
               handler: Callable[[dict], str], # arguments -> payload text
               aliases: tuple[str, ...] = () # additional names that call this tool
              ) -> None:
    for name in (spec.name, *aliases):
      if name in self._tools or name in self._aliases:
        raise ValueError(f"Tool name {name!r} is already registered")
    self._tools[spec.name] = (spec, handler)
    for alias in aliases:
      self._aliases[alias] = spec.name

  def resolve(self, name: str) -> str | None:
    if name in self._tools:
      return name
    return self._aliases.get(name)

  def __contains__(self, name: str) -> bool:
    return self.resolve(name) is not None

  @property
  def specs(self) -> list[ToolSpec]:
    return [spec for spec, _ in self._tools.values()]

  @property
  def names(self) -> list[str]:
    return list(self._tools) + list(self._aliases)

  def execute(self, invocation: ToolInvocation # tool call from a model turn
             ) -> ToolOutput: # failures come back as success = False with a diagnostic
    "runs one tool call, never raising for tool-level failures"
    canonical = self.resolve(invocation.name)
    if canonical is None:
      return ToolOutput(invocation.call_id, invocation.name, False,
                        f"error: unknown tool {invocation.name!r}; available tools: {sorted(self.names)}")
    _, handler = self._tools[canonical]
    try:
      payload = handler(dict(invocation.arguments))
    except Exception as e:
      logger.info("tool %s failed: %s", canonical, e, extra = {'stage': 'agent_loop'})
      return ToolOutput(invocation.call_id, invocation.name, False, f"error: {type(e).__name__}: {e}")
    return ToolOutput(invocation.call_id, invocation.name, True, payload)


def _argument(arguments: dict, *keys: str) -> str:
  for key in keys:
    if isinstance(arguments.get(key), str):
      return arguments[key]
  if len(arguments) == 1:
    value = next(iter(arguments.values()))
    if isinstance(value, str):
      return value
  raise ValueError(f"missing string argument {keys[0]!r}")


CALCULATOR_SPEC = ToolSpec('calculator', "Evaluate an arithmetic expression exactly (+, -, *, /, parentheses).",
                           {'type': 'object', 'properties': {'expression': {'type': 'string'}}, 'required': ['expression']})
CODE_EVAL_SPEC = ToolSpec('code_eval', "Run a short Python-style numeric program (python_repl): assignments, arithmetic, "
                          "comparisons and abs/min/max/sum/round/pow. The value of the last line is returned.",
                          {'type': 'object', 'properties': {'program': {'type': 'string'}}, 'required': ['program']})
WEB_SEARCH_SPEC = ToolSpec('web_search', "Search the web for financial data missing from the documents.",
                           {'type': 'object', 'properties': {'query': {'type': 'string'}}, 'required': ['query']})


def build_tool_registry(search_client: SearchClient | None = None, # web search backend; None leaves the tool out
                        executor: CodeExecutor | None = None, # code_eval backend; default ArithmeticSandbox
                        max_results: int = 5 # web search cap
                       ) -> ToolRegistry:
  "registers calculator, code_eval (alias python_repl) and web_search (alias tavily)"
  executor = executor or ArithmeticSandbox()
  registry = ToolRegistry()
  registry.register(CALCULATOR_SPEC, lambda args: tool_calculator(_argument(args, 'expression', 'input')))
  registry.register(CODE_EVAL_SPEC, lambda args: tool_code_eval(_argument(args, 'program', 'code', 'input'), executor),
                    aliases = ('python_repl',))
  if search_client is not None:
    def search(args: dict) -> str:
      hits = tool_web_search(_argument(args, 'query', 'input'), search_client, max_results)
      return json.dumps([{'title': h.title, 'url': h.url, 'snippet': h.snippet} for h in hits], ensure_ascii = False)
    registry.register(WEB_SEARCH_SPEC, search, aliases = ('tavily',))
  return registry
