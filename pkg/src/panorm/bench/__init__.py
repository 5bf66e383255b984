"""Experiment harness and command-line interface."""
