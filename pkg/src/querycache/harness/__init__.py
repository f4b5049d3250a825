"""Benchmark harness: workloads, policies, experiments, reports and oracles."""
