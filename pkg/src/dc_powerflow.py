#!/usr/bin/env python3
"""Lossless DC power flow solved independently on each connected island."""

from dataclasses import dataclass
from typing import Iterable

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SingularSystem, ValidationError
from .grid_model import GridCase

BALANCE_TOLERANCE_MW = 1e-6


@dataclass(frozen=True)
class Island:
    buses: frozenset[int]
    branches: frozenset[int]
    slack: int


@dataclass(frozen=True)
class IslandPartition:
    """Connected components of the in-service network, ordered by lowest bus id."""

    islands: tuple[Island, ...]

    def __len__(self) -> int:
        return len(self.islands)

    @property
    def slack_buses(self) -> tuple[int, ...]:
        return tuple(island.slack for island in self.islands)


@dataclass(frozen=True)
class FlowSolution:
    theta: np.ndarray      # per bus, radians, aligned with case.buses
    flow_mw: np.ndarray    # per branch, from -> to, aligned with case.branches
    converged: bool
    max_mismatch_pu: float = 0.0


def _pick_slack(case: GridCase, buses: Iterable[int], capacity_at_bus: dict[int, float]) -> int:
    """Generator bus with the largest p_max, ties to the lowest bus id.

    Islands without generation use the lowest-id slack candidate, then the
    lowest bus id.
    """
    buses = sorted(buses)
    with_gen = [b for b in buses if capacity_at_bus.get(b, 0.0) > 0]
    if with_gen:
        return min(with_gen, key=lambda b: (-capacity_at_bus[b], b))
    candidates = [b for b in buses if case.bus(b).is_slack_candidate]
    return candidates[0] if candidates else buses[0]


def find_islands(
    case: GridCase,
    out_branches: Iterable[int] = (),
    out_generators: Iterable[int] = (),
) -> IslandPartition:
    """Partition the network into islands after removing ``out_branches``.

    Generators in ``out_generators`` do not count when choosing slack buses.
    """
    out_branches = frozenset(out_branches)
    unknown = out_branches - set(case.branch_index)
    if unknown:
        raise ValidationError(f"Unknown branch ids: {sorted(unknown)}")
    out_generators = frozenset(out_generators)

    graph = nx.Graph()
    graph.add_nodes_from(bus.id for bus in case.buses)
    live = [br for br in case.branches if br.in_service and br.id not in out_branches]
    graph.add_edges_from((br.from_bus, br.to_bus) for br in live)

    capacity_at_bus: dict[int, float] = {}
    for gen in case.generators:
        if gen.id not in out_generators:
            capacity_at_bus[gen.bus] = capacity_at_bus.get(gen.bus, 0.0) + gen.p_max_mw

    components = sorted((frozenset(c) for c in nx.connected_components(graph)), key=min)
    owner = {bus: i for i, comp in enumerate(components) for bus in comp}
    branch_sets: list[set[int]] = [set() for _ in components]
    for br in live:
        branch_sets[owner[br.from_bus]].add(br.id)

    islands = tuple(
        Island(buses=comp, branches=frozenset(branch_sets[i]), slack=_pick_slack(case, comp, capacity_at_bus))
        for i, comp in enumerate(components)
    )
    return IslandPartition(islands=islands)


def _island_matrix(case: GridCase, island: Island) -> tuple[list[int], sp.csc_matrix]:
    """Reduced susceptance matrix (slack removed) for one island, in per unit."""
    order = sorted(island.buses - {island.slack})
    local = {bus: i for i, bus in enumerate(order)}
    rows, cols, vals = [], [], []
    for branch_id in island.branches:
        br = case.branch(branch_id)
        b = 1.0 / br.reactance_pu
        i, j = local.get(br.from_bus), local.get(br.to_bus)
        if i is not None:
            rows.append(i); cols.append(i); vals.append(b)
        if j is not None:
            rows.append(j); cols.append(j); vals.append(b)
        if i is not None and j is not None:
            rows.extend((i, j)); cols.extend((j, i)); vals.extend((-b, -b))
    n = len(order)
    matrix = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    return order, matrix


def solve_dc(case: GridCase, partition: IslandPartition, injections: np.ndarray) -> FlowSolution:
    """Solve B·θ = P per island with each slack angle fixed at 0.

    Args:
        case: grid case
        partition: islands from find_islands
        injections: net injection per bus in MW, aligned with ``case.buses``

    Returns:
        FlowSolution with angles, branch flows in MW and the largest KCL
        mismatch in per unit

    Raises:
        ValidationError: if an island's injections do not sum to zero
        SingularSystem: if an island's reduced matrix cannot be factorized
    """
    injections = np.asarray(injections, dtype=float)
    if injections.shape != (len(case.buses),):
        raise ValidationError(f"Expected {len(case.buses)} injections, got shape {injections.shape}")

    base = case.base_mva
    theta = np.zeros(len(case.buses))
    for island in partition.islands:
        positions = [case.bus_index[b] for b in island.buses]
        imbalance = float(injections[positions].sum())
        if abs(imbalance) > BALANCE_TOLERANCE_MW:
            raise ValidationError(
                f"Island with slack {island.slack} is unbalanced by {imbalance:.3e} MW"
            )
        if len(island.buses) == 1:
            continue

        order, matrix = _island_matrix(case, island)
        p_pu = np.array([injections[case.bus_index[b]] for b in order]) / base
        try:
            lu = splu(matrix)
        except RuntimeError as e:
            raise SingularSystem(f"Island with slack {island.slack}: {e}")
        angles = lu.solve(p_pu)
        if not np.all(np.isfinite(angles)):
            raise SingularSystem(f"Island with slack {island.slack}: non-finite angles")
        for bus, angle in zip(order, angles):
            theta[case.bus_index[bus]] = angle

    flow_mw = np.zeros(len(case.branches))
    net_pu = np.zeros(len(case.buses))
    live = set().union(*(island.branches for island in partition.islands)) if partition.islands else set()
    for k, br in enumerate(case.branches):
        if br.id not in live:
            continue
        i, j = case.bus_index[br.from_bus], case.bus_index[br.to_bus]
        flow_pu = (theta[i] - theta[j]) / br.reactance_pu
        flow_mw[k] = flow_pu * base
        net_pu[i] += flow_pu
        net_pu[j] -= flow_pu

    mismatch = float(np.max(np.abs(net_pu - injections / base))) if len(net_pu) else 0.0
    return FlowSolution(theta=theta, flow_mw=flow_mw, converged=True, max_mismatch_pu=mismatch)


def base_injections(case: GridCase) -> np.ndarray:
    """Net injection per bus (generation minus load) of the base dispatch."""
    injections = -case.load_vector.copy()
    for gen in case.generators:
        injections[case.bus_index[gen.bus]] += gen.p_mw
    return injections


def base_case_flows(case: GridCase) -> FlowSolution:
    """DC flows of the base case after balancing each island proportionally."""
    from .cascade_sim import balance_state

    partition = find_islands(case)
    state = balance_state(case, partition)
    return solve_dc(case, partition, state.injections(case))
