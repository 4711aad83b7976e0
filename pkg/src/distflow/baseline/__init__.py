"""Single-controller baseline dataflow."""
