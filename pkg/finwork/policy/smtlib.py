import re
from dataclasses import dataclass
from fractions import Fraction

# operator:(min arity, max arity or None for n-ary)
OPERATORS = {
  '=': (2, None), '+': (2, None), '*': (2, None), 'and': (2, None), 'or': (2, None),
  '-': (2, 2), '/': (2, 2), '<': (2, 2), '<=': (2, 2), '>': (2, 2), '>=': (2, 2), '=>': (2, 2),
  'not': (1, 1)
  }

_TOKEN = re.compile(r";[^\n]*|\(|\)|[^\s();]+")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?$")


@dataclass(frozen = True)
class Symbol:
  name: str


@dataclass(frozen = True)
class NumberLiteral:
  value: Fraction


@dataclass(frozen = True)
class BoolLiteral:
  value: bool


@dataclass(frozen = True)
class Apply:
  op: str
  args: tuple


PolicyAst = Symbol | NumberLiteral | BoolLiteral | Apply


class PolicyParseError(ValueError):
  def __init__(self, message: str, position: int):
    super().__init__(f"{message} at position {position}")
    self.position = position


def tokenize_smtlib(text: str # s-expression text
                   ) -> list[tuple[str, int]]: # (token, character offset); comments dropped
  "Splits s-expression text into parentheses and atoms"
  return [(m.group(), m.start()) for m in _TOKEN.finditer(text) if not m.group().startswith(';')]


def _atom(tok: str, at: int) -> PolicyAst:
  if _NUMBER.match(tok):
    return NumberLiteral(Fraction(tok))
  if tok in ('true', 'false'):
    return BoolLiteral(tok == 'true')
  if tok in OPERATORS:
    raise PolicyParseError(f"operator {tok!r} used outside head position", at)
  return Symbol(tok)


def _parse(tokens: list[tuple[str, int]], i: int, end: int) -> tuple[PolicyAst, int]:
  if i >= len(tokens):
    raise PolicyParseError("unexpected end of input", end)
  tok, at = tokens[i]
  if tok == ')':
    raise PolicyParseError("unexpected ')'", at)
  if tok != '(':
    return _atom(tok, at), i + 1
  if i + 1 >= len(tokens):
    raise PolicyParseError("unclosed parenthesis", at)
  head, head_at = tokens[i + 1]
  if head in ('(', ')'):
    raise PolicyParseError("operator expected in head position", head_at)
  if head not in OPERATORS:
    raise PolicyParseError(f"unknown operator {head!r}", head_at)
  args = []
  j = i + 2
  while True:
    if j >= len(tokens):
      raise PolicyParseError("unclosed parenthesis", at)
    if tokens[j][0] == ')':
      break
    arg, j = _parse(tokens, j, end)
    args.append(arg)
  lo, hi = OPERATORS[head]
  if len(args) < lo or (hi is not None and len(args) > hi):
    expected = f"exactly {lo}" if lo == hi else f"at least {lo}"
    raise PolicyParseError(f"operator {head!r} expects {expected} argument(s), got {len(args)}", at)
  return Apply(head, tuple(args)), j + 1


def parse_smtlib(text: str # SMT-lib s-expression, e.g. "(= returnOnAssets (/ netIncome averageTotalAssets))"
                ) -> PolicyAst: # expression tree with exact rational literals
  "Parses one SMT-lib expression into a PolicyAst"
  tokens = tokenize_smtlib(text or '')
  if not tokens:
    raise PolicyParseError("empty expression", 0)
  node, pos = _parse(tokens, 0, len(text))
  if pos < len(tokens):
    tok, at = tokens[pos]
    raise PolicyParseError(f"unexpected token {tok!r} after complete expression", at)
  return node


def exact_decimal(value: Fraction # rational number
                 ) -> str | None: # exact decimal string, or None if the expansion does not terminate
  "Renders a rational as an exact decimal when its denominator has only factors 2 and 5"
  den = value.denominator
  twos = fives = 0
  while den % 2 == 0:
    den //= 2
    twos += 1
  while den % 5 == 0:
    den //= 5
    fives += 1
  if den != 1:
    return None
  places = max(twos, fives)
  scaled = abs(value.numerator) * 10 ** places // value.denominator
  digits = str(scaled).rjust(places + 1, '0')
  sign = '-' if value < 0 else ''
  if not places:
    return f"{sign}{digits}"
  return f"{sign}{digits[:-places]}.{digits[-places:]}".rstrip('0').rstrip('.')


def render_smtlib(node: PolicyAst # expression tree
                 ) -> str: # s-expression text that parses back to the same tree
  "Renders a PolicyAst as SMT-lib text"
  if isinstance(node, Symbol):
    return node.name
  if isinstance(node, BoolLiteral):
    return 'true' if node.value else 'false'
  if isinstance(node, NumberLiteral):
    text = exact_decimal(node.value)
    if text is None:
      return f"(/ {node.value.numerator} {node.value.denominator})"
    return text
  return '(' + ' '.join([node.op] + [render_smtlib(a) for a in node.args]) + ')'


def collect_symbols(node: PolicyAst # expression tree
                   ) -> list[str]: # symbol names in order of first appearance
  "Lists the symbols of an expression"
  out = []
  stack = [node]
  while stack:
    n = stack.pop()
    if isinstance(n, Symbol):
      if n.name not in out:
        out.append(n.name)
    elif isinstance(n, Apply):
      stack.extend(reversed(n.args))
  return out
