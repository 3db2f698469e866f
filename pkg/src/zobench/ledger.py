"""Runtime allocation ledger.

Every numeric buffer in the package is acquired and released through
one of these, giving per-category current and peak byte counts plus an
optional simulated budget: exceeding the budget raises SimulatedOOMError
before any counter changes, which models a device OOM crash.
"""

import threading
from contextlib import contextmanager

from .errors import LedgerError, SimulatedOOMError

CATEGORIES = ("weights", "grads", "optstate", "activation", "transient", "other")


class AllocationLedger:
    def __init__(self, simulated_budget=None):
        if simulated_budget is not None and simulated_budget < 0:
            raise ValueError("simulated_budget must be >= 0")
        self.simulated_budget = simulated_budget
        self._lock = threading.Lock()
        self._current = {c: 0 for c in CATEGORIES}
        self._peak = {c: 0 for c in CATEGORIES}
        self._total = 0
        self._peak_total = 0
        self._next_token = 0
        self._live = {}  # token -> (category, bytes)

    def acquire(self, category, nbytes):
        """Record an allocation; returns a token for release()."""
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r}")
        nbytes = int(nbytes)
        if nbytes < 0:
            raise ValueError("nbytes must be >= 0")
        with self._lock:
            if self.simulated_budget is not None and self._total + nbytes > self.simulated_budget:
                raise SimulatedOOMError(
                    f"allocating {nbytes} bytes ({category}) would exceed budget "
                    f"{self.simulated_budget} (current {self._total})",
                    requested=nbytes, current=self._total, budget=self.simulated_budget)
            self._current[category] += nbytes
            self._total += nbytes
            if self._current[category] > self._peak[category]:
                self._peak[category] = self._current[category]
            if self._total > self._peak_total:
                self._peak_total = self._total
            token = self._next_token
            self._next_token += 1
            self._live[token] = (category, nbytes)
            return token

    def release(self, token):
        with self._lock:
            try:
                category, nbytes = self._live.pop(token)
            except KeyError:
                raise LedgerError(f"token {token} already released or unknown") from None
            self._current[category] -= nbytes
            self._total -= nbytes

    @contextmanager
    def scoped(self, category, nbytes):
        token = self.acquire(category, nbytes)
        try:
            yield
        finally:
            self.release(token)

    def current(self, category=None):
        with self._lock:
            return self._total if category is None else self._current[category]

    def peak(self, category=None):
        with self._lock:
            return self._peak_total if category is None else self._peak[category]

    def peak_snapshot(self):
        """Dict of per-category peaks plus 'total' (high-water of the sum)."""
        with self._lock:
            snap = dict(self._peak)
            snap["total"] = self._peak_total
            return snap


class NullLedger(AllocationLedger):
    """Accepts the same calls but never fails and costs almost nothing."""

    def __init__(self):
        super().__init__(simulated_budget=None)

    def acquire(self, category, nbytes):
        return -1

    def release(self, token):
        pass


def ensure_ledger(ledger):
    return ledger if ledger is not None else NullLedger()


def tracked(ledger, category, shape, dtype):
    """Allocate a numpy array whose bytes are charged to the ledger."""
    import numpy as np
    nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
    token = ledger.acquire(category, nbytes)
    return np.empty(shape, dtype=dtype), token
