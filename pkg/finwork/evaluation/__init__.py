def __getattr__(name):
  if name == "metrics":
    import finwork.evaluation.metrics as metrics
    globals()[name] = metrics
    return metrics
  elif name == "judge":
    import finwork.evaluation.judge as judge
    globals()[name] = judge
    return judge
  elif name == "comparison":
    import finwork.evaluation.comparison as comparison
    globals()[name] = comparison
    return comparison
  raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
