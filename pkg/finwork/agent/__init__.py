def __getattr__(name):
  if name == "prompts":
    import finwork.agent.prompts as prompts
    globals()[name] = prompts
    return prompts
  elif name == "tools":
    import finwork.agent.tools as tools
    globals()[name] = tools
    return tools
  elif name == "clients":
    import finwork.agent.clients as clients
    globals()[name] = clients
    return clients
  elif name == "loop":
    import finwork.agent.loop as loop
    globals()[name] = loop
    return loop
  elif name == "pipeline":
    import finwork.agent.pipeline as pipeline
    globals()[name] = pipeline
    return pipeline
  raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
