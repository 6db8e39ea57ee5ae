import re
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

from finwork.policy.smtlib import Symbol, NumberLiteral, BoolLiteral, Apply, PolicyAst, render_smtlib, collect_symbols

logger = logging.getLogger(__name__)

ENUM_CONSTANT = re.compile(r"^[A-Z][A-Z0-9_]*$")
Status = Literal['Satisfied', 'Violated', 'Indeterminate']
Value = Fraction | bool | str

_COMPARE = {'<': lambda a, b: a < b, '<=': lambda a, b: a <= b,
            '>': lambda a, b: a > b, '>=': lambda a, b: a >= b}


@dataclass(frozen = True)
class RuleVerdict:
  rule_id: str
  status: Status
  missing_symbols: tuple[str, ...] = ()
  diagnostic: str | None = None


class _Unknown:
  __slots__ = ('missing',)

  def __init__(self, missing: frozenset):
    self.missing = missing


class _DivisionByZero(Exception):
  pass


def is_enum_constant(name: str # symbol name
                    ) -> bool:
  "ALL_CAPS names such as SEC_FILING denote enum constants when an operand of = is not numeric"
  return bool(ENUM_CONSTANT.match(name))


def coerce_value(value: object # raw binding value
                ) -> Value: # exact rational, boolean or enum name
  "Converts a binding value into the evaluator's value domain"
  if isinstance(value, bool):
    return value
  if isinstance(value, Fraction):
    return value
  if isinstance(value, int):
    return Fraction(value)
  if isinstance(value, float):
    return Fraction(repr(value))
  if isinstance(value, str):
    text = value.strip()
    if text in ('true', 'false'):
      return text == 'true'
    try:
      return Fraction(text)
    except ValueError:
      return text
  raise TypeError(f"Unsupported binding value {value!r} of type {type(value).__name__}")


def coerce_bindings(bindings: dict # symbol:value, values as numbers, booleans, numeric strings, fractions or enum names
                   ) -> dict[str, Value]:
  "Normalizes an environment so every value is a Fraction, bool or enum name"
  return {str(k): coerce_value(v) for k, v in bindings.items()}


def _merge(*values) -> _Unknown:
  missing = frozenset()
  for v in values:
    if isinstance(v, _Unknown):
      missing |= v.missing
  return _Unknown(missing)


def _expect_bool(v, op: str):
  if not isinstance(v, (bool, _Unknown)):
    raise TypeError(f"Operator {op!r} expects boolean operands, got {v!r}")


def _expect_number(v, op: str):
  if not isinstance(v, (Fraction, _Unknown)):
    raise TypeError(f"Operator {op!r} expects numeric operands, got {v!r}")


def _close(a: Fraction, b: Fraction, tolerance: Fraction) -> bool:
  return a == b or abs(a - b) <= tolerance * max(abs(a), abs(b))


def _equal(values: list, tolerance: Fraction) -> bool:
  kinds = {type(v) for v in values}
  if len(kinds) > 1:
    raise TypeError(f"Cannot compare values of different types: {values!r}")
  if isinstance(values[0], Fraction):
    return all(_close(a, b, tolerance) for a, b in zip(values, values[1:]))
  return all(a == b for a, b in zip(values, values[1:]))


def _enum_operand(node: PolicyAst, env: dict[str, Value], value):
  # unbound ALL_CAPS operands of = stand for themselves unless compared with a number
  if isinstance(node, Symbol) and node.name not in env and is_enum_constant(node.name):
    return node.name
  return value


def _eval(node: PolicyAst, env: dict[str, Value], tolerance: Fraction):
  if isinstance(node, (NumberLiteral, BoolLiteral)):
    return node.value
  if isinstance(node, Symbol):
    if node.name in env:
      return env[node.name]
    return _Unknown(frozenset([node.name]))
  op, args = node.op, node.args
  if op == 'not':
    v = _eval(args[0], env, tolerance)
    _expect_bool(v, op)
    return v if isinstance(v, _Unknown) else not v
  if op == '=>':
    ante = _eval(args[0], env, tolerance)
    _expect_bool(ante, op)
    if ante is False:
      return True
    cons = _eval(args[1], env, tolerance)
    _expect_bool(cons, op)
    if ante is True or cons is True:
      return cons
    return _merge(ante, cons)
  if op in ('and', 'or'):
    decisive = op == 'or'
    unknowns = []
    for a in args:
      v = _eval(a, env, tolerance)
      _expect_bool(v, op)
      if isinstance(v, _Unknown):
        unknowns.append(v)
      elif v is decisive:
        return decisive
    return _merge(*unknowns) if unknowns else not decisive
  values = [_eval(a, env, tolerance) for a in args]
  if op == '=' and not any(isinstance(v, Fraction) for v in values):
    values = [_enum_operand(a, env, v) for a, v in zip(args, values)]
  if op != '=':
    for v in values:
      _expect_number(v, op)
  if any(isinstance(v, _Unknown) for v in values):
    return _merge(*values)
  if op == '=':
    return _equal(values, tolerance)
  if op in _COMPARE:
    return _COMPARE[op](values[0], values[1])
  if op == '+':
    return sum(values, Fraction(0))
  if op == '*':
    out = Fraction(1)
    for v in values:
      out *= v
    return out
  if op == '-':
    return values[0] - values[1]
  if op == '/':
    if values[1] == 0:
      raise _DivisionByZero(f"division by zero in {render_smtlib(node)}")
    return values[0] / values[1]
  raise ValueError(f"Unknown operator {op!r}")


def evaluate_expression(ast: PolicyAst, # parsed expression
                        env: dict, # symbol:value
                        tolerance: float = 1e-6, # relative tolerance for numeric equality
                        rule_id: str = '' # id reported in the verdict
                       ) -> RuleVerdict:
  "Evaluates a boolean policy expression under an environment with exact rational arithmetic"
  if tolerance < 0:
    raise ValueError(f"tolerance has to be non-negative, got {tolerance}")
  bindings = coerce_bindings(env)
  try:
    result = _eval(ast, bindings, Fraction(repr(float(tolerance))))
  except _DivisionByZero as e:
    return RuleVerdict(rule_id, 'Violated', (), str(e))
  if isinstance(result, _Unknown):
    order = collect_symbols(ast)
    return RuleVerdict(rule_id, 'Indeterminate', tuple(s for s in order if s in result.missing))
  if not isinstance(result, bool):
    raise TypeError(f"Rule {rule_id or render_smtlib(ast)} evaluates to {result!r}, not a boolean")
  return RuleVerdict(rule_id, 'Satisfied' if result else 'Violated')


def evaluate_rule(rule, # parsed PolicyRule
                  env: dict, # symbol:value
                  tolerance: float = 1e-6 # relative tolerance for numeric equality
                 ) -> RuleVerdict: # Satisfied, Violated or Indeterminate with the missing symbols
  "Checks one policy rule against an environment of extracted values"
  if rule.ast is None:
    raise ValueError(f"Rule {rule.id} has no parsed expression")
  return evaluate_expression(rule.ast, env, tolerance, rule.id)


def evaluate_policies(policies, # PolicySet
                      env: dict, # symbol:value
                      tolerance: float = 1e-6 # relative tolerance for numeric equality
                     ) -> list[RuleVerdict]: # one verdict per rule, file order
  "Evaluates every rule of a policy set"
  return [evaluate_rule(rule, env, tolerance) for rule in policies.rules]


_AMOUNT = r"\$?\s*(-?[\d,]*\.?\d+)\s*(%)?"


def extract_bindings(text: str, # free text such as a generated answer or tool output
                     symbols: list[str] # symbol names to look for
                    ) -> dict[str, Fraction]: # symbol:value for every 'symbol = number' or 'symbol: number' found
  "Best-effort extraction of numeric bindings for known symbols; the last mention wins"
  out = {}
  for sym in symbols:
    pattern = re.compile(rf"\b{re.escape(sym)}\s*(?:=|:|is)\s*{_AMOUNT}")
    for m in pattern.finditer(text):
      raw = m.group(1).replace(',', '')
      try:
        value = Fraction(raw)
      except ValueError:
        continue
      out[sym] = value / 100 if m.group(2) else value
  return out


def audit_text(text: str, # answer text plus any tool outputs
               policies, # PolicySet
               tolerance: float = 1e-6 # relative tolerance for numeric equality
              ) -> list[RuleVerdict]: # verdicts of rules that could be decided
  "Post-hoc policy audit over values mentioned in generated text"
  symbols = sorted({s for rule in policies.rules if rule.ast is not None for s in collect_symbols(rule.ast)})
  env = extract_bindings(text, symbols)
  verdicts = []
  for rule in policies.rules:
    try:
      verdict = evaluate_rule(rule, env, tolerance)
    except (TypeError, ValueError) as e:
      logger.warning("rule %s skipped in audit: %s", rule.id, e, extra = {'stage': 'policy_audit'})
      continue
    if verdict.status != 'Indeterminate':
      verdicts.append(verdict)
  logger.info("policy audit", extra = {'stage': 'policy_audit', 'n_bindings': len(env), 'n_verdicts': len(verdicts)})
  return verdicts
