import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

from finwork.policy.smtlib import PolicyAst, PolicyParseError, parse_smtlib, collect_symbols
from finwork.policy.evaluate import is_enum_constant

logger = logging.getLogger(__name__)

CONTEXT_HEADER = "FINANCIAL VALIDATION RULES:"


@dataclass(frozen = True)
class PolicyRule:
  "One formal rule: SMT-lib expression plus its natural-language alternate"
  id: str
  expression: str
  alternate_expression: str
  ast: PolicyAst | None = None
  parse_error: PolicyParseError | None = field(default = None, compare = False)
  extra: dict[str, Any] = field(default_factory = dict, compare = False)


@dataclass(frozen = True)
class PolicySet:
  rules: tuple[PolicyRule, ...]
  source_path: str = ''

  def __len__(self) -> int:
    return len(self.rules)

  @property
  def ids(self) -> list[str]:
    return [r.id for r in self.rules]


@dataclass(frozen = True)
class Diagnostic:
  rule_id: str
  severity: Literal['error', 'warning']
  message: str

  def __str__(self) -> str:
    return f"{self.severity}: {self.rule_id}: {self.message}"


def parse_rule(raw: dict[str, Any], # rule object with id, alternateExpression, expression
               where: str = '', # location used in error messages
               strict: bool = True # raise on unparseable expressions instead of recording them
              ) -> PolicyRule:
  "Builds a PolicyRule from its JSON object"
  if not isinstance(raw, dict):
    raise ValueError(f"{where}: rule must be an object, got {type(raw).__name__}")
  for key in ('id', 'alternateExpression', 'expression'):
    if not isinstance(raw.get(key), str):
      raise ValueError(f"{where}: rule is missing string field '{key}'")
  rule_id = raw['id'].strip()
  if not rule_id:
    raise ValueError(f"{where}: rule id must be non-empty")
  extra = {k: v for k, v in raw.items() if k not in ('id', 'alternateExpression', 'expression')}
  try:
    ast = parse_smtlib(raw['expression'])
  except PolicyParseError as e:
    if strict:
      raise PolicyParseError(f"rule {rule_id}: {e.args[0].rsplit(' at position', 1)[0]}", e.position) from e
    return PolicyRule(rule_id, raw['expression'], raw['alternateExpression'], None, e, extra)
  return PolicyRule(rule_id, raw['expression'], raw['alternateExpression'], ast, None, extra)


def load_policies(path: str | Path, # JSON policy file with a top-level "rules" list
                  strict: bool = True # if False, keep unparseable and duplicate rules for linting
                 ) -> PolicySet: # rules in file order
  "Loads and parses a policy file"
  path = Path(path)
  if not path.is_file():
    raise FileNotFoundError(f"Policy file {path} does not exist.")
  try:
    doc = json.loads(path.read_text(encoding = 'utf-8'))
  except json.JSONDecodeError as e:
    raise ValueError(f"{path}: policy file is not valid JSON ({e.msg})") from e
  if not isinstance(doc, dict) or not isinstance(doc.get('rules'), list):
    raise ValueError(f"{path}: policy file needs a top-level 'rules' list")
  rules = [parse_rule(raw, f"{path}: rule {i}", strict) for i, raw in enumerate(doc['rules'])]
  if strict:
    dupes = [rid for rid, n in Counter(r.id for r in rules).items() if n > 1]
    if dupes:
      raise ValueError(f"{path}: duplicate rule ids {dupes}")
  logger.info("loaded policies", extra = {'stage': 'policy_loading', 'n_rules': len(rules)})
  return PolicySet(tuple(rules), str(path))


def merge_policy_sets(*sets: PolicySet # policy sets in priority order
                     ) -> PolicySet: # concatenation; later duplicates of an id are errors
  "Concatenates policy sets, e.g. the core rules followed by an extension file"
  rules = tuple(r for s in sets for r in s.rules)
  dupes = [rid for rid, n in Counter(r.id for r in rules).items() if n > 1]
  if dupes:
    raise ValueError(f"duplicate rule ids across policy files: {dupes}")
  return PolicySet(rules, ';'.join(s.source_path for s in sets))


def format_policy_context(policies: PolicySet, # loaded rules
                          max_rules: int = 40 # only the first max_rules rules are listed
                         ) -> str: # context block for the neurosymbolic prompt
  "Renders the natural-language alternates of the first max_rules rules under the rules header"
  if max_rules < 1:
    raise ValueError(f"max_rules has to be a positive integer, got {max_rules}")
  selected = policies.rules[:max_rules]
  lines = [CONTEXT_HEADER] + [r.alternate_expression for r in selected]
  remaining = len(policies.rules) - len(selected)
  if remaining > 0:
    lines.append(f"... and {remaining} additional validation rules")
  return '\n'.join(lines)


def lint_policy_set(policies: PolicySet # rules, ideally loaded with strict = False
                   ) -> list[Diagnostic]: # empty when clean
  "Reports unparseable rules, duplicate ids and symbols used by a single rule"
  diagnostics = []
  for rid, n in Counter(r.id for r in policies.rules).items():
    if n > 1:
      diagnostics.append(Diagnostic(rid, 'error', f"duplicate rule id used {n} times"))
  usage = {}
  for rule in policies.rules:
    if rule.ast is None:
      err = rule.parse_error
      msg = str(err) if err is not None else "expression was not parsed"
      diagnostics.append(Diagnostic(rule.id, 'error', f"unparseable expression: {msg}"))
      continue
    for sym in collect_symbols(rule.ast):
      if not is_enum_constant(sym):
        usage.setdefault(sym, []).append(rule.id)
  for sym, owners in usage.items():
    if len(owners) == 1:
      diagnostics.append(Diagnostic(owners[0], 'warning', f"symbol '{sym}' appears in no other rule"))
  return diagnostics
