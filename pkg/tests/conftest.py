"""Shared fixtures. The suite must run with no external network access, so a
session-wide guard fails any DNS resolution that leaves loopback."""

from __future__ import annotations

import socket

import pytest

_REAL_GETADDRINFO = socket.getaddrinfo
_LOOPBACK_HOSTS = {"localhost", "127.0.0.1", "::1", None, ""}


@pytest.fixture(autouse=True, scope="session")
def _no_external_network():
    def guarded(host, *args, **kwargs):
        if host not in _LOOPBACK_HOSTS:
            raise OSError(f"network access to {host!r} blocked by the test suite")
        return _REAL_GETADDRINFO(host, *args, **kwargs)

    socket.getaddrinfo = guarded
    try:
        yield
    finally:
        socket.getaddrinfo = _REAL_GETADDRINFO


class FixedClock:
    """Deterministic stand-in for time.time."""

    def __init__(self, start: float = 1_700_000_000.0, step: float = 0.25):
        self.now = start
        self.step = step

    def __call__(self) -> float:
        t = self.now
        self.now += self.step
        return t


@pytest.fixture
def fixed_clock():
    return FixedClock()
