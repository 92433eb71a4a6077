"""Independent reference computations the tests compare the library against."""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from math import comb


def exact_pmf(k: int, w: int, p: Fraction) -> Fraction:
    return comb(w, k) * p**k * (1 - p) ** (w - k)


def loop_select_j(ratio: Fraction, w: int, p: Fraction) -> int:
    """Walk the cumulative intervals one at a time, as the pseudo-code loop does."""
    j = 0
    lower = Fraction(0)
    upper = exact_pmf(0, w, p)
    while not (lower <= ratio < upper):
        if j == w:
            return w
        j += 1
        lower = upper
        upper += exact_pmf(j, w, p)
    return j


def bfs_depths(adjacency: dict, source) -> dict:
    depth = {source: 0}
    queue = deque([source])
    while queue:
        n = queue.popleft()
        for m in adjacency[n]:
            if m not in depth:
                depth[m] = depth[n] + 1
                queue.append(m)
    return depth


class AclOracle:
    """Rebuilds who-may-read-what by replaying a plain event list."""

    def __init__(self):
        self.events: list[tuple] = []

    def record(self, *event):
        self.events.append(event)

    def readable(self, pk, h) -> bool:
        owned: dict = {}
        grants: dict = {}
        for ev in self.events:
            kind = ev[0]
            if kind == "register":
                _, owner, x = ev
                owned.setdefault(owner, set()).add(x)
            elif kind == "grant":
                _, owner, grantee, x = ev
                grants.setdefault((owner, grantee), set()).add(x)
            elif kind == "revoke":
                _, owner, grantee, x = ev
                grants.get((owner, grantee), set()).discard(x)
            elif kind == "update":
                _, owner, old, new = ev
                owned[owner].discard(old)
                owned[owner].add(new)
                for (o, _), s in grants.items():
                    if o == owner and old in s:
                        s.discard(old)
                        s.add(new)
        if h in owned.get(pk, set()):
            return True
        return any(g == pk and h in s for (_, g), s in grants.items())
