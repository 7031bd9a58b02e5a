"""Process-wide counters for numerical safeguards that fired.

Clamping a p-value before a log or clipping an overflowing e-value changes
the value that gets combined, so every such event is counted here.  Tests
reset the counters and assert they stayed at zero at desk-scale settings.
"""

from collections import Counter

counters = Counter()


def record(event, count=1):
    if count:
        counters[event] += int(count)


def reset():
    counters.clear()


def snapshot():
    return dict(counters)
