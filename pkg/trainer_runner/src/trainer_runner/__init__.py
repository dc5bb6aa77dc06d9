"""Subprocess worker for training LLM-generated model code over NDJSON stdio.

Requests arrive one JSON object per stdin line; each produces exactly one
JSON response line on stdout. ``define`` compiles and introspects a
``make_model_and_optimizer`` function, ``run`` trains it on the configured
dataset, ``eval`` fits a named sklearn model family, and ``ping`` answers
``pong``. All diagnostics go to stderr; stdout carries only protocol lines.
"""

from trainer_runner.server import RunnerConfig, Server

__all__ = ["RunnerConfig", "Server"]
