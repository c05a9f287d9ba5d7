"""Model-based isolated testing of self-organizing partitioning algorithms."""
