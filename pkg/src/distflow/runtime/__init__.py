"""DAG Worker runtime: function registry, synthetic stage functions, execution loop."""
