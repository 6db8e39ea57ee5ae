import sys
import json
import logging
import argparse
from pathlib import Path

from finwork.config import PipelineConfig, load_config, build_clients, build_embedder, build_judge

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
  pass


class FinworkArgumentParser(argparse.ArgumentParser):
  "argparse parser whose usage errors exit with status 1"

  def error(self, message: str):
    self.print_usage(sys.stderr)
    self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_policy_set(config: PipelineConfig, strict: bool = True):
  from finwork.policy.rules import load_policies, merge_policy_sets
  sets = [load_policies(p, strict = strict) for p in config.policy_paths]
  return sets[0] if len(sets) == 1 else merge_policy_sets(*sets)


def cmd_ingest(config: PipelineConfig, args: argparse.Namespace) -> int:
  "chunks the corpus, builds both indices and writes the snapshot"
  from finwork.fin_data.loader import ingest_documents
  from finwork.fin_data.chunking import chunk_corpus
  from finwork.retrieval.methods import KnowledgeBase
  docs = ingest_documents(config.corpus_path)
  if not docs:
    raise ValueError(f"no documents found in {config.corpus_path}")
  chunks = chunk_corpus(docs, config.chunking_config())
  kb = KnowledgeBase.build(chunks, build_embedder(config), config.retrieval.k1, config.retrieval.b,
                           config.retrieval.min_token_length)
  kb.save(config.snapshot_path)
  print(f"Indexed {len(chunks)} chunks from {len(docs)} documents into {config.snapshot_path}")
  return EXIT_OK


def cmd_ask(config: PipelineConfig, args: argparse.Namespace) -> int:
  "answers one question with retrieval, the policy-guided agent and answer extraction"
  from finwork.retrieval.methods import KnowledgeBase
  from finwork.agent.pipeline import answer_question
  question = (args.question or '').strip()
  if not question:
    raise UsageError("--question must be a non-empty string")
  template = args.template or config.agent.template
  kb = KnowledgeBase.load(config.snapshot_path)
  policies = _load_policy_set(config) if template == 'neurosymbolic_agent' or config.policy.audit else None
  result = answer_question(question, kb, build_clients(config), policies, template, config.pipeline_settings())
  print(result.answer.text)
  if args.verbose:
    print("\nRetrieved chunks:")
    for chunk, rank in result.docs:
      print(f"  [{rank}] {chunk.chunk_id} ({chunk.doc_id}, page {chunk.page_number})")
    if result.answer.cited_sources:
      print("Cited sources: " + ', '.join(f"{d} p.{p}" for d, p in result.answer.cited_sources))
    print("\nTranscript:")
    print(json.dumps(result.transcript.to_dict(), indent = 2, ensure_ascii = False))
    if result.verdicts:
      print("\nPolicy audit:")
      for v in result.verdicts:
        print(f"  {v.rule_id}: {v.status}" + (f" ({v.diagnostic})" if v.diagnostic else ''))
  return EXIT_OK


def cmd_eval(config: PipelineConfig, args: argparse.Namespace) -> int:
  "runs the retrieval or generation comparison and writes the report"
  from finwork.fin_data.loader import load_dataset
  from finwork.retrieval.methods import KnowledgeBase
  from finwork.evaluation.comparison import run_comparison, default_configurations
  if args.methods:
    methods = [m.strip() for m in args.methods.split(',') if m.strip()]
  else:
    methods = list(config.eval.methods) or default_configurations(args.mode)
  dataset = load_dataset(config.dataset_path)
  kb = KnowledgeBase.load(config.snapshot_path)
  clients = build_clients(config)
  policies = _load_policy_set(config) if args.mode == 'generation' else None
  judge = build_judge(config) if args.mode == 'generation' else None
  report = run_comparison(dataset, methods, kb, clients, args.mode, config.pipeline_settings(), policies, judge,
                          config.eval.k, config.eval.relevance, config.eval.parallelism, config.eval.judge_retries)
  paths = report.write(Path(args.out) if args.out else config.report_dir)
  print(report.to_text())
  print(f"\nReport written to {paths['csv']}")
  return EXIT_OK


def cmd_policy(config: PipelineConfig, args: argparse.Namespace) -> int:
  "policy utilities: validate, render and eval"
  from finwork.policy.rules import format_policy_context, lint_policy_set
  from finwork.policy.evaluate import evaluate_policies
  if args.policy_command == 'validate':
    policies = _load_policy_set(config, strict = False)
    diagnostics = lint_policy_set(policies)
    for d in diagnostics:
      print(str(d), file = sys.stderr)
    errors = [d for d in diagnostics if d.severity == 'error']
    if errors:
      print(f"{len(errors)} error(s) in {len(policies)} rules", file = sys.stderr)
      return EXIT_RUNTIME
    print(f"{len(policies)} rules OK")
    return EXIT_OK
  policies = _load_policy_set(config)
  if args.policy_command == 'render':
    print(format_policy_context(policies, args.max_rules or config.policy.max_rules))
    return EXIT_OK
  bindings_path = Path(args.bindings)
  if not bindings_path.is_file():
    raise FileNotFoundError(f"Bindings file {bindings_path} does not exist.")
  bindings = json.loads(bindings_path.read_text(encoding = 'utf-8'))
  if not isinstance(bindings, dict):
    raise ValueError(f"{bindings_path}: bindings must be a JSON object of symbol:value")
  for v in evaluate_policies(policies, bindings, config.policy.tolerance):
    line = f"{v.rule_id}: {v.status}"
    if v.missing_symbols:
      line += f" (missing: {', '.join(v.missing_symbols)})"
    if v.diagnostic:
      line += f" ({v.diagnostic})"
    print(line)
  return EXIT_OK


def build_parser() -> FinworkArgumentParser:
  common = argparse.ArgumentParser(add_help = False)
  common.add_argument('--config', help = "JSON config file; packaged defaults if omitted")
  common.add_argument('--verbose', '-v', action = 'store_true', help = "log pipeline stages and print details")
  parser = FinworkArgumentParser(prog = 'finwork', description = "Verified, policy-guided financial question answering")
  sub = parser.add_subparsers(dest = 'command', required = True, parser_class = FinworkArgumentParser)
  sub.add_parser('ingest', parents = [common], help = "chunk the corpus and build the index snapshot")
  ask = sub.add_parser('ask', parents = [common], help = "answer one question")
  ask.add_argument('--question', '-q', required = True)
  ask.add_argument('--template', choices = ['rag_only', 'baseline_agent', 'neurosymbolic_agent'],
                   help = "prompt kind; defaults to agent.template")
  ev = sub.add_parser('eval', parents = [common], help = "compare retrieval methods or generation configurations")
  ev.add_argument('--mode', choices = ['retrieval', 'generation'], required = True)
  ev.add_argument('--methods', help = "comma-separated method labels; all methods of the mode if omitted")
  ev.add_argument('--out', help = "report directory; defaults to paths.report_dir")
  pol = sub.add_parser('policy', help = "policy file utilities")
  pol_sub = pol.add_subparsers(dest = 'policy_command', required = True, parser_class = FinworkArgumentParser)
  pol_sub.add_parser('validate', parents = [common], help = "lint the policy files")
  render = pol_sub.add_parser('render', parents = [common], help = "print the policy context block")
  render.add_argument('--max-rules', type = int)
  peval = pol_sub.add_parser('eval', parents = [common], help = "evaluate rules against a bindings file")
  peval.add_argument('--bindings', required = True, help = "JSON object of symbol:value")
  return parser


COMMANDS = {'ingest': cmd_ingest, 'ask': cmd_ask, 'eval': cmd_eval, 'policy': cmd_policy}


def main(argv: list[str] | None = None) -> int:
  parser = build_parser()
  args = parser.parse_args(argv)
  logging.basicConfig(level = logging.INFO if args.verbose else logging.WARNING, stream = sys.stderr,
                      format = "%(levelname)s %(name)s: %(message)s")
  if getattr(args, 'max_rules', None) is not None and args.max_rules < 1:
    parser.error("--max-rules must be a positive integer")
  try:
    config = load_config(args.config)
    return COMMANDS[args.command](config, args)
  except UsageError as e:
    parser.error(str(e))
  except Exception as e:
    stage = getattr(e, 'stage', None)
    print(f"error{f' in {stage}' if stage else ''}: {e}", file = sys.stderr)
    return EXIT_RUNTIME


if __name__ == '__main__':
  sys.exit(main())
