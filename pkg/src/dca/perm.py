"""Permutations of element identifiers: rank queries, insertion moves, diffs.

Assignments are immutable tuples of distinct small positive integers. All
ranks are 1-based throughout the package, matching the trace and fixture
formats. Operations never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import ElementNotFoundError, IncompatibleAssignmentsError, InvalidRankError

Assignment = tuple[int, ...]

INSERTION = "insertion"
ADJACENT_TRANSPOSITION = "adjacent-transposition"


@dataclass(frozen=True, order=True)
class Move:
    """One insertion move: take `element` from `from_rank` to `to_rank`.

    Moves by exactly one position are tagged as adjacent transpositions,
    since removing an element and reinserting it one slot away swaps it
    with a single neighbour.
    """

    element: int
    from_rank: int
    to_rank: int

    @property
    def kind(self) -> str:
        return ADJACENT_TRANSPOSITION if abs(self.from_rank - self.to_rank) == 1 else INSERTION


def as_assignment(order: Iterable[int]) -> Assignment:
    """Validate and freeze an element ordering into an Assignment."""
    x = tuple(int(e) for e in order)
    if len(x) < 2:
        raise InvalidRankError(f"assignment needs at least 2 elements, got {len(x)}")
    if len(set(x)) != len(x):
        raise IncompatibleAssignmentsError(f"duplicate elements in assignment {x}")
    if any(e <= 0 for e in x):
        raise ElementNotFoundError(f"element identifiers must be positive: {x}")
    return x


def format_assignment(x: Sequence[int]) -> str:
    """Serialize as a space-separated integer list, e.g. '2 3 10 11 9 6 4 5 7 8'."""
    return " ".join(str(e) for e in x)


def parse_assignment(text: str) -> Assignment:
    try:
        return as_assignment(int(tok) for tok in text.split())
    except ValueError as err:
        raise IncompatibleAssignmentsError(f"unparseable assignment {text!r}") from err


def rank_of(x: Assignment, element: int) -> int:
    """1-based position of `element` in `x`."""
    try:
        return x.index(element) + 1
    except ValueError:
        raise ElementNotFoundError(f"element {element} not in assignment {format_assignment(x)}") from None


def insertion_move(x: Assignment, element: int, rank: int) -> Assignment:
    """Remove `element` and reinsert it so it ends up at `rank`.

    The relative order of all other elements is preserved; the input is
    unchanged. Moving an element to its current rank returns an equal tuple.
    """
    if not 1 <= rank <= len(x):
        raise InvalidRankError(f"rank {rank} out of bounds for n={len(x)}")
    if element not in x:
        raise ElementNotFoundError(f"element {element} not in assignment {format_assignment(x)}")
    rest = [e for e in x if e != element]
    rest.insert(rank - 1, element)
    return tuple(rest)


def adjacent_transposition_diff(
    a: Assignment, b: Assignment
) -> Optional[tuple[tuple[int, int], int]]:
    """If `a` and `b` differ by one swap of neighbouring positions, report it.

    Returns ((a_element, b_element), rank) where `rank` is the left position
    of the swapped pair (so the swap touches ranks `rank` and `rank+1`), or
    None when the assignments are equal or differ by more than one adjacent
    swap.
    """
    if sorted(a) != sorted(b):
        raise IncompatibleAssignmentsError(
            f"assignments cover different elements: {format_assignment(a)} vs {format_assignment(b)}"
        )
    diffs = [i for i, (p, q) in enumerate(zip(a, b)) if p != q]
    if len(diffs) != 2:
        return None
    i, j = diffs
    if j != i + 1 or a[i] != b[j] or a[j] != b[i]:
        return None
    return (a[i], a[j]), i + 1


def enumerate_insertion_neighbors(x: Assignment) -> list[tuple[Move, Assignment]]:
    """All distinct assignments one insertion move away from `x`.

    Adjacent swaps are reachable from both sides (move the left element right,
    or the right element left); duplicates collapse to one entry keyed by the
    resulting assignment, keeping the lexicographically smallest descriptor.
    The identity is excluded. Entries come back sorted by descriptor, so the
    order is deterministic for seeded sampling.
    """
    n = len(x)
    best: dict[Assignment, Move] = {}
    for element in x:
        from_rank = rank_of(x, element)
        for to_rank in range(1, n + 1):
            if to_rank == from_rank:
                continue
            move = Move(element, from_rank, to_rank)
            neighbor = insertion_move(x, element, to_rank)
            seen = best.get(neighbor)
            if seen is None or move < seen:
                best[neighbor] = move
    return sorted(((m, a) for a, m in best.items()), key=lambda pair: pair[0])


def move_between(a: Assignment, b: Assignment) -> Move:
    """The insertion move carrying `a` to `b`; smallest descriptor on ties.

    Raises IncompatibleAssignmentsError when `b` is not exactly one insertion
    move away from `a`.
    """
    if sorted(a) != sorted(b):
        raise IncompatibleAssignmentsError(
            f"assignments cover different elements: {format_assignment(a)} vs {format_assignment(b)}"
        )
    if a == b:
        raise IncompatibleAssignmentsError("assignments are equal; no move between them")
    candidates = []
    for element in a:
        rest_a = tuple(e for e in a if e != element)
        rest_b = tuple(e for e in b if e != element)
        if rest_a == rest_b:
            candidates.append(Move(element, rank_of(a, element), rank_of(b, element)))
    if not candidates:
        raise IncompatibleAssignmentsError(
            f"{format_assignment(b)} is not one insertion move from {format_assignment(a)}"
        )
    return min(candidates)
