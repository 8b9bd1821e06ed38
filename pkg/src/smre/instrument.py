"""Invocation counters used to prove which branches ran."""
from collections import Counter

COUNTERS = Counter()


def bump(name):
    COUNTERS[name] += 1


def reset():
    COUNTERS.clear()


def snapshot():
    return dict(COUNTERS)
