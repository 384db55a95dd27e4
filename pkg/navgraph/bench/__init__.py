"""Experiment harness: plans, the CSV runner, validation suites and curves."""
