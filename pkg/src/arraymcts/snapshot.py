"""Layout-independent dump of a finished search tree.

Every implementation numbers the nodes of each depth by creation order, so
two searches that made the same decisions produce the same snapshot no matter
how their nodes are stored. The text form is one record per line::

    <depth> <kind> <index> <parent> <slot> <visits> <value> <coords>

``kind`` is ``S`` (state) or ``A`` (action). ``parent`` indexes the previous
node kind (action in the same depth for states, state one depth up for
actions), ``-1`` for the root. ``slot`` is the action row for action nodes
and the position inside the parent's child list for state nodes. ``value``
is ``-`` for state nodes, ``coords`` is ``-`` for action nodes. Records are
ordered by depth, then actions before states, then index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple


class NodeEntry(NamedTuple):
    depth: int
    kind: str
    index: int
    parent: int
    slot: int
    visits: int
    value: float | None
    coords: tuple | None

    def to_line(self) -> str:
        value = "-" if self.value is None else repr(float(self.value))
        coords = "-" if self.coords is None else ",".join(str(c) for c in self.coords)
        return f"{self.depth} {self.kind} {self.index} {self.parent} {self.slot} {self.visits} {value} {coords}"

    @classmethod
    def from_line(cls, line: str) -> "NodeEntry":
        depth, kind, index, parent, slot, visits, value, coords = line.split()
        return cls(
            int(depth), kind, int(index), int(parent), int(slot), int(visits),
            None if value == "-" else float(value),
            None if coords == "-" else tuple(int(c) for c in coords.split(",")),
        )


@dataclass(frozen=True)
class Divergence:
    position: int
    depth: int
    kind: str
    index: int
    field: str
    left: object
    right: object

    def __str__(self) -> str:
        return (f"first divergence at record {self.position} (depth {self.depth}, "
                f"{'state' if self.kind == 'S' else 'action'} {self.index}): "
                f"{self.field} {self.left!r} != {self.right!r}")


def _sort_key(e: NodeEntry):
    return (e.depth, e.kind != "A", e.index)


@dataclass(frozen=True)
class TreeSnapshot:
    entries: tuple

    @classmethod
    def from_entries(cls, entries: Iterable[NodeEntry]) -> "TreeSnapshot":
        return cls(tuple(sorted(entries, key=_sort_key)))

    def to_text(self) -> str:
        return "".join(e.to_line() + "\n" for e in self.entries)

    @classmethod
    def from_text(cls, text: str) -> "TreeSnapshot":
        return cls(tuple(NodeEntry.from_line(ln) for ln in text.splitlines() if ln.strip()))

    def nodes(self, depth: int, kind: str) -> list[NodeEntry]:
        return [e for e in self.entries if e.depth == depth and e.kind == kind]

    @property
    def max_depth(self) -> int:
        return max(e.depth for e in self.entries)

    def compare(self, other: "TreeSnapshot", rel_tol: float = 1e-9) -> Divergence | None:
        """First difference against ``other``; integers exact, values to ``rel_tol``."""
        for pos, (a, b) in enumerate(zip(self.entries, other.entries)):
            for name in NodeEntry._fields:
                x, y = getattr(a, name), getattr(b, name)
                if name == "value" and x is not None and y is not None:
                    same = math.isclose(x, y, rel_tol=rel_tol, abs_tol=rel_tol * 1e-3)
                else:
                    same = x == y
                if not same:
                    return Divergence(pos, a.depth, a.kind, a.index, name, x, y)
        if len(self.entries) != len(other.entries):
            pos = min(len(self.entries), len(other.entries))
            longer = self.entries if len(self.entries) > pos else other.entries
            e = longer[pos]
            return Divergence(pos, e.depth, e.kind, e.index, "length",
                              len(self.entries), len(other.entries))
        return None
