"""Address clustering heuristics."""
