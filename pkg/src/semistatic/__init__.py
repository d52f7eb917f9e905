"""Semi-static utility maximization on finite scenario-tree markets."""
