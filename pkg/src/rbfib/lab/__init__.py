"""Experiment harness: configuration, simulation loop, diagnostics and CLI."""
