#!/usr/bin/env python3
"""Quasi-steady-state DC cascading-failure simulator.

Each iteration finds islands, rebalances every island, solves the DC flow
and trips the single branch most overloaded relative to RateC. The cascade
ends when no in-service branch exceeds RateC.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import settings
from .dc_powerflow import Island, IslandPartition, find_islands, solve_dc
from .errors import IterationLimit, ValidationError
from .grid_model import GridCase, proportional_dispatch

logger = logging.getLogger(__name__)

TRIP_RATINGS = ("rate_c",)
OVERLOAD_TOLERANCE = 1e-9
BALANCE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SimConfig:
    blackout_threshold: float = settings.BLACKOUT_THRESHOLD
    trip_rating: str = "rate_c"
    max_iterations: Optional[int] = None
    strict: bool = False

    def __post_init__(self):
        if not 0 < self.blackout_threshold < 1:
            raise ValidationError(f"blackout_threshold must lie in (0, 1), got {self.blackout_threshold}")
        if self.trip_rating not in TRIP_RATINGS:
            raise ValidationError(f"Unsupported trip rating: {self.trip_rating}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValidationError(f"max_iterations must be >= 1, got {self.max_iterations}")

    def iteration_limit(self, case: GridCase) -> int:
        return self.max_iterations or 10 * max(case.n_branches, 1)


@dataclass(frozen=True)
class CascadeOutcome:
    load_shed_mw: float
    shed_fraction: float
    is_blackout: bool
    trip_sequence: tuple[int, ...]
    iterations: int
    converged: bool = True
    islands: int = 1

    def to_dict(self) -> dict:
        return {
            "load_shed_mw": self.load_shed_mw,
            "shed_fraction": self.shed_fraction,
            "is_blackout": self.is_blackout,
            "trip_sequence": list(self.trip_sequence),
            "iterations": self.iterations,
            "converged": self.converged,
            "islands": self.islands,
        }


@dataclass(frozen=True)
class IslandBalance:
    load_mw: dict[int, float]
    gen_mw: dict[int, float]
    tripped_generators: tuple[int, ...] = ()
    shed_mw: float = 0.0


@dataclass
class SystemState:
    """Served load per bus and output per generator during one simulation."""

    load_mw: dict[int, float]
    gen_mw: dict[int, float]
    out_generators: set[int] = field(default_factory=set)

    @classmethod
    def from_case(cls, case: GridCase) -> "SystemState":
        return cls(
            load_mw={bus.id: bus.load_mw for bus in case.buses},
            gen_mw={gen.id: gen.p_mw for gen in case.generators},
        )

    def apply(self, balance: IslandBalance) -> None:
        self.load_mw.update(balance.load_mw)
        self.gen_mw.update(balance.gen_mw)
        for gen_id in balance.tripped_generators:
            self.out_generators.add(gen_id)
            self.gen_mw[gen_id] = 0.0

    def injections(self, case: GridCase) -> np.ndarray:
        injections = np.array([-self.load_mw[bus.id] for bus in case.buses])
        for gen in case.generators:
            if gen.id not in self.out_generators:
                injections[case.bus_index[gen.bus]] += self.gen_mw[gen.id]
        return injections

    @property
    def served_load(self) -> float:
        return float(sum(self.load_mw.values()))


def _shed_proportionally(loads: dict[int, float], available: float) -> dict[int, float]:
    total = sum(loads.values())
    if total <= 0:
        return dict(loads)
    factor = max(available, 0.0) / total
    return {bus: load * factor for bus, load in loads.items()}


def rebalance_island(
    case: GridCase,
    island: Island,
    load_mw: Optional[dict[int, float]] = None,
    gen_mw: Optional[dict[int, float]] = None,
    out_generators: Iterable[int] = (),
) -> IslandBalance:
    """Match generation and load inside one island.

    - No generation: all island load is shed.
    - Capacity below load: generators go to p_max and load is shed pro rata.
    - Minimum generation above load: generators that cannot be backed down
      far enough are tripped, lowest p_max first (ties to the lowest id).
    - Otherwise generators are redispatched proportionally within limits.

    Args:
        load_mw, gen_mw: current served load per bus and output per generator;
            the case's base values when omitted
        out_generators: generators already tripped
    """
    out_generators = set(out_generators)
    buses = sorted(island.buses)
    current_load = load_mw if load_mw is not None else {b.id: b.load_mw for b in case.buses}
    current_gen = gen_mw if gen_mw is not None else {g.id: g.p_mw for g in case.generators}

    loads = {bus: current_load[bus] for bus in buses}
    demand = sum(loads.values())
    gens = [g for g in case.generators if g.bus in island.buses and g.id not in out_generators]

    tripped: list[int] = []
    if sum(g.p_min_mw for g in gens) > demand:
        for gen in sorted(gens, key=lambda g: (g.p_max_mw, g.id)):
            if sum(g.p_min_mw for g in gens) <= demand:
                break
            gens.remove(gen)
            tripped.append(gen.id)

    if not gens:
        return IslandBalance(
            load_mw={bus: 0.0 for bus in buses},
            gen_mw={},
            tripped_generators=tuple(tripped),
            shed_mw=demand,
        )

    capacity = sum(g.p_max_mw for g in gens)
    if capacity < demand:
        served = _shed_proportionally(loads, capacity)
        return IslandBalance(
            load_mw=served,
            gen_mw={g.id: g.p_max_mw for g in gens},
            tripped_generators=tuple(tripped),
            shed_mw=demand - capacity,
        )

    outputs = np.array([current_gen.get(g.id, g.p_mw) for g in gens])
    if abs(outputs.sum() - demand) <= BALANCE_TOLERANCE * max(demand, 1.0):
        return IslandBalance(
            load_mw=loads,
            gen_mw={g.id: float(p) for g, p in zip(gens, outputs)},
            tripped_generators=tuple(tripped),
        )

    dispatch = proportional_dispatch(
        outputs,
        np.array([g.p_min_mw for g in gens]),
        np.array([g.p_max_mw for g in gens]),
        demand,
    )
    return IslandBalance(
        load_mw=loads,
        gen_mw={g.id: float(p) for g, p in zip(gens, dispatch)},
        tripped_generators=tuple(tripped),
    )


def balance_state(
    case: GridCase, partition: IslandPartition, state: Optional[SystemState] = None
) -> SystemState:
    """Rebalance every island of ``partition``, updating ``state`` in place."""
    state = state if state is not None else SystemState.from_case(case)
    for island in partition.islands:
        state.apply(rebalance_island(case, island, state.load_mw, state.gen_mw, state.out_generators))
    return state


def _trip_limits(case: GridCase, config: SimConfig) -> np.ndarray:
    return np.array([br.rate_c_mw for br in case.branches])


def simulate(
    case: GridCase,
    initiating_outages: Iterable[int] = (),
    config: Optional[SimConfig] = None,
) -> CascadeOutcome:
    """Run one cascade from a set of initiating branch outages.

    Raises:
        ValidationError: if an outage names an unknown branch
        IterationLimit: if the cascade does not settle and ``config.strict``
    """
    config = config or SimConfig()
    out = set(initiating_outages)
    unknown = out - set(case.branch_index)
    if unknown:
        raise ValidationError(f"Unknown branch ids in outage set: {sorted(unknown)}")

    limits = _trip_limits(case, config)
    ids = np.array(case.branch_ids)
    state = SystemState.from_case(case)
    total_load = case.total_load
    trip_sequence: list[int] = []
    limit = config.iteration_limit(case)

    converged = False
    iterations = 0
    partition = None
    while iterations < limit:
        iterations += 1
        partition = find_islands(case, out, state.out_generators)
        balance_state(case, partition, state)
        solution = solve_dc(case, partition, state.injections(case))

        ratio = np.abs(solution.flow_mw) / limits
        worst = float(ratio.max()) if len(ratio) else 0.0
        if worst <= 1.0 + OVERLOAD_TOLERANCE:
            converged = True
            break
        branch_id = int(ids[ratio == worst].min())
        out.add(branch_id)
        trip_sequence.append(branch_id)

    if not converged:
        message = f"Cascade did not settle within {limit} iterations"
        if config.strict:
            raise IterationLimit(message)
        logger.warning(message)

    shed = min(max(total_load - state.served_load, 0.0), total_load)
    if shed < BALANCE_TOLERANCE * max(total_load, 1.0):
        shed = 0.0
    fraction = shed / total_load if total_load > 0 else 0.0
    return CascadeOutcome(
        load_shed_mw=shed,
        shed_fraction=fraction,
        is_blackout=fraction >= config.blackout_threshold,
        trip_sequence=tuple(trip_sequence),
        iterations=iterations,
        converged=converged,
        islands=len(partition) if partition is not None else 0,
    )


def is_blackout_set(
    case: GridCase, outage_set: Iterable[int], config: Optional[SimConfig] = None
) -> bool:
    """True when the outage set sheds at least the blackout threshold."""
    return simulate(case, outage_set, config).is_blackout


def n_minus_1_report(case: GridCase, config: Optional[SimConfig] = None) -> list[tuple[int, CascadeOutcome]]:
    """Outcome of every single in-service branch outage."""
    return [(branch_id, simulate(case, {branch_id}, config)) for branch_id in case.in_service_branch_ids]
