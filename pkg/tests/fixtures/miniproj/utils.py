"""Seeding and metric logging helpers for the toy trainer."""

import random

_STATE = {"seed": 0}


def set_seed(seed):
    """Seed every RNG the project uses. Must run before data or weights."""
    _STATE["seed"] = seed
    random.seed(seed)


def current_seed():
    return _STATE["seed"]


def log_phase(name):
    print(f"PHASE {name}", flush=True)


def log_metric(name, value):
    print(f"METRIC {name} {value}", flush=True)
