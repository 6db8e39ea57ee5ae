__version__ = "0.1.0"


def __getattr__(name):
  if name == "fin_data":
    import finwork.fin_data as fin_data
    globals()[name] = fin_data
    return fin_data
  elif name == "retrieval":
    import finwork.retrieval as retrieval
    globals()[name] = retrieval
    return retrieval
  elif name == "policy":
    import finwork.policy as policy
    globals()[name] = policy
    return policy
  elif name == "agent":
    import finwork.agent as agent
    globals()[name] = agent
    return agent
  elif name == "evaluation":
    import finwork.evaluation as evaluation
    globals()[name] = evaluation
    return evaluation
  raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
