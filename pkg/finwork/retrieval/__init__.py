def __getattr__(name):
  if name == "ranking":
    import finwork.retrieval.ranking as ranking
    globals()[name] = ranking
    return ranking
  elif name == "dense":
    import finwork.retrieval.dense as dense
    globals()[name] = dense
    return dense
  elif name == "lexical":
    import finwork.retrieval.lexical as lexical
    globals()[name] = lexical
    return lexical
  elif name == "fusion":
    import finwork.retrieval.fusion as fusion
    globals()[name] = fusion
    return fusion
  elif name == "clients":
    import finwork.retrieval.clients as clients
    globals()[name] = clients
    return clients
  elif name == "rerank":
    import finwork.retrieval.rerank as rerank
    globals()[name] = rerank
    return rerank
  elif name == "methods":
    import finwork.retrieval.methods as methods
    globals()[name] = methods
    return methods
  raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
