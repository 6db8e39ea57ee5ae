def __getattr__(name):
  if name == "loader":
    import finwork.fin_data.loader as loader
    globals()[name] = loader
    return loader
  elif name == "chunking":
    import finwork.fin_data.chunking as chunking
    globals()[name] = chunking
    return chunking
  raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
