"""Non-dominated sorting and crowding-distance truncation.

Objective 0 (accuracy) is maximized and internally negated so that domination
is uniformly "weakly better in all objectives, strictly better in one" under
minimization.
"""

from __future__ import annotations

from ..errors import EvaluationOrderError
from .individual import Individual, Population

_INF = float("inf")


def _objective_vector(m: Individual, n_obj: int) -> tuple[float, ...]:
    if m.fitness is None or len(m.fitness) < n_obj:
        raise EvaluationOrderError(f"{m.name} lacks the full {n_obj}-objective vector")
    return (-m.fitness[0],) + tuple(m.fitness[1:n_obj])


def dominates(a: tuple[float, ...], b: tuple[float, ...]) -> bool:
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def nondominated_sort(members: list[Individual], n_obj: int = 2) -> list[list[Individual]]:
    """Partition ``members`` into fronts F1, F2, ... of decreasing quality."""
    vectors = [_objective_vector(m, n_obj) for m in members]
    n = len(members)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(vectors[i], vectors[j]):
                dominated_by[i].append(j)
                domination_count[j] += 1
            elif dominates(vectors[j], vectors[i]):
                dominated_by[j].append(i)
                domination_count[i] += 1
    fronts: list[list[Individual]] = []
    current = [i for i in range(n) if domination_count[i] == 0]
    while current:
        fronts.append([members[i] for i in current])
        nxt: list[int] = []
        for i in current:
            for j in dominated_by[i]:
                domination_count[j] -= 1
                if domination_count[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def crowding_distance(front: list[Individual], n_obj: int = 2) -> dict[str, float]:
    """Per-name crowding distance; boundary members of each objective get infinity."""
    dist = {m.name: 0.0 for m in front}
    if len(front) <= 2:
        return {name: _INF for name in dist}
    for k in range(n_obj):
        ordered = sorted(front, key=lambda m: (_objective_vector(m, n_obj)[k], m.name))
        lo = _objective_vector(ordered[0], n_obj)[k]
        hi = _objective_vector(ordered[-1], n_obj)[k]
        dist[ordered[0].name] = _INF
        dist[ordered[-1].name] = _INF
        span = hi - lo
        if span == 0.0:
            continue
        for i in range(1, len(ordered) - 1):
            gap = (
                _objective_vector(ordered[i + 1], n_obj)[k]
                - _objective_vector(ordered[i - 1], n_obj)[k]
            )
            if dist[ordered[i].name] != _INF:
                dist[ordered[i].name] += gap / span
    return dist


def crowding_select(
    parents: Population, offspring: Population, pop_size: int | None = None, n_obj: int = 2
) -> Population:
    """NSGA-II style environmental selection: fill front-by-front, truncate by crowding."""
    size = pop_size if pop_size is not None else len(parents)
    pool = parents.members + offspring.members
    survivors: list[Individual] = []
    for front in nondominated_sort(pool, n_obj):
        if len(survivors) + len(front) <= size:
            survivors.extend(sorted(front, key=lambda m: m.name))
            continue
        dist = crowding_distance(front, n_obj)
        ranked = sorted(front, key=lambda m: (-dist[m.name], m.name))
        survivors.extend(ranked[: size - len(survivors)])
        break
    return Population(generation=parents.generation + 1, members=survivors)
