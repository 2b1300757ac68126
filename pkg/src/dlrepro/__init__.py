"""Reproduce deep-learning bug reports from a codebase and a bug description.

The pipeline indexes a repository (syntax-aware chunks, sparse and dense
indices), retrieves and reranks code against the report, assembles training
loop centred contexts, restructures the report, drafts per-context plans, and
runs a budgeted generate-validate-refine agent whose output is checked by a
seeded multi-trial verification harness.
"""

__version__ = "0.1.0"
