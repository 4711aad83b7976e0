"""Data Coordinator: distributed dataloader and per-node databuffers."""
