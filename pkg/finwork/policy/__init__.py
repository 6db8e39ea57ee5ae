def __getattr__(name):
  if name == "smtlib":
    import finwork.policy.smtlib as smtlib
    globals()[name] = smtlib
    return smtlib
  elif name == "evaluate":
    import finwork.policy.evaluate as evaluate
    globals()[name] = evaluate
    return evaluate
  elif name == "rules":
    import finwork.policy.rules as rules
    globals()[name] = rules
    return rules
  raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
