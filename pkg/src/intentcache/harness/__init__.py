"""Benchmark harness: intents, workloads, baselines and experiment drivers."""
