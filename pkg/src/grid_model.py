#!/usr/bin/env python3
"""Transmission grid cases: types, loading, validation and preparation.

A GridCase is immutable once loaded and is shared read-only by every
simulation, campaign worker and analysis step.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Optional

import networkx as nx
import numpy as np
import pandas as pd
from scipy.optimize import brentq

from . import settings
from .errors import DomainError, InfeasibleDispatch, ParseError, ValidationError

logger = logging.getLogger(__name__)

RATE_B_FACTOR = 1.10
RATE_C_FACTOR = 1.50

CASE_FORMATS = ("native-json", "matpower-text")


@dataclass(frozen=True)
class Bus:
    id: int
    x_km: float
    y_km: float
    load_mw: float = 0.0
    is_slack_candidate: bool = False


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance_pu: float
    rate_a_mw: float
    rate_b_mw: Optional[float] = None
    rate_c_mw: Optional[float] = None
    in_service: bool = True


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_mw: float
    p_max_mw: float
    p_min_mw: float = 0.0


@dataclass(frozen=True)
class GridCase:
    """The immutable system model.

    outage_probability is aligned with ``branches``; N is the branch count.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0
    outage_probability: tuple[float, ...] = ()
    name: str = ""
    n_components: int = 1

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        """Map bus id -> position in ``buses``."""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[int, int]:
        """Map branch id -> position in ``branches``."""
        return {br.id: i for i, br in enumerate(self.branches)}

    @cached_property
    def branch_ids(self) -> tuple[int, ...]:
        return tuple(br.id for br in self.branches)

    @cached_property
    def in_service_branch_ids(self) -> tuple[int, ...]:
        return tuple(br.id for br in self.branches if br.in_service)

    @cached_property
    def load_vector(self) -> np.ndarray:
        return np.array([bus.load_mw for bus in self.buses], dtype=float)

    @property
    def total_load(self) -> float:
        return float(self.load_vector.sum())

    @property
    def total_generation(self) -> float:
        return float(sum(gen.p_mw for gen in self.generators))

    @property
    def total_capacity(self) -> float:
        return float(sum(gen.p_max_mw for gen in self.generators))

    def branch(self, branch_id: int) -> Branch:
        try:
            return self.branches[self.branch_index[branch_id]]
        except KeyError:
            raise ValidationError(f"Unknown branch id: {branch_id}")

    def bus(self, bus_id: int) -> Bus:
        try:
            return self.buses[self.bus_index[bus_id]]
        except KeyError:
            raise ValidationError(f"Unknown bus id: {bus_id}")

    def branch_probability(self, branch_id: int) -> float:
        return self.outage_probability[self.branch_index[branch_id]]


def rate_to_probability(rate_hours_per_year: float) -> float:
    """Convert an outage rate in hours per year to a per-hour probability.

    The rate is read as expected outage-hours per year, so p = rate / 8760.

    Raises:
        DomainError: if the rate is negative or p would reach 0.5
    """
    if rate_hours_per_year < 0 or not math.isfinite(rate_hours_per_year):
        raise DomainError(f"Outage rate must be finite and >= 0, got {rate_hours_per_year}")
    p = rate_hours_per_year / settings.HOURS_PER_YEAR
    if p >= 0.5:
        raise DomainError(
            f"Outage rate {rate_hours_per_year} h/yr gives p={p:.4f}; copula calibration needs p < 0.5"
        )
    return p


def default_outage_probability() -> float:
    return rate_to_probability(settings.MEAN_OUTAGE_RATE_HOURS)


def synthesize_ratings(case: GridCase) -> GridCase:
    """Fill absent RateB/RateC as 110% and 150% of RateA; present values are kept.

    A filled rating never falls below RateB, so RateA <= RateB <= RateC
    holds whenever the present ratings allow it.
    """
    branches = []
    for br in case.branches:
        if br.rate_b_mw:
            rate_b = br.rate_b_mw
        else:
            rate_b = RATE_B_FACTOR * br.rate_a_mw
            if br.rate_c_mw:
                rate_b = max(br.rate_a_mw, min(rate_b, br.rate_c_mw))
        rate_c = br.rate_c_mw if br.rate_c_mw else max(RATE_C_FACTOR * br.rate_a_mw, rate_b)
        branches.append(replace(br, rate_b_mw=rate_b, rate_c_mw=rate_c))
    return replace(case, branches=tuple(branches))


def _check_finite(value: float, what: str) -> None:
    if value is None or not math.isfinite(value):
        raise ValidationError(f"{what} must be finite, got {value}")


def validate_case(case: GridCase) -> GridCase:
    """Check every case invariant and tag connected components.

    Returns:
        The case with ``n_components`` set and a default outage probability
        filled in when none was given.

    Raises:
        ValidationError: on the first violated invariant
    """
    if not case.base_mva > 0:
        raise ValidationError(f"base_mva must be > 0, got {case.base_mva}")
    if not case.buses:
        raise ValidationError("Case has no buses")

    bus_ids = [bus.id for bus in case.buses]
    if len(set(bus_ids)) != len(bus_ids):
        raise ValidationError("Bus ids are not unique")
    for bus in case.buses:
        _check_finite(bus.x_km, f"Bus {bus.id} x_km")
        _check_finite(bus.y_km, f"Bus {bus.id} y_km")
        if bus.load_mw < 0:
            raise ValidationError(f"Bus {bus.id} has negative load {bus.load_mw}")
    known = set(bus_ids)

    branch_ids = [br.id for br in case.branches]
    if len(set(branch_ids)) != len(branch_ids):
        raise ValidationError("Branch ids are not unique")
    for br in case.branches:
        if br.from_bus == br.to_bus:
            raise ValidationError(f"Branch {br.id} connects bus {br.from_bus} to itself")
        if br.from_bus not in known or br.to_bus not in known:
            raise ValidationError(f"Branch {br.id} references an unknown bus")
        if not br.reactance_pu > 0:
            raise ValidationError(f"Branch {br.id} has nonpositive reactance {br.reactance_pu}")
        if not br.rate_a_mw > 0:
            raise ValidationError(f"Branch {br.id} has nonpositive rate_a {br.rate_a_mw}")
        if not (br.rate_a_mw <= br.rate_b_mw <= br.rate_c_mw):
            raise ValidationError(
                f"Branch {br.id} ratings out of order: "
                f"a={br.rate_a_mw}, b={br.rate_b_mw}, c={br.rate_c_mw}"
            )

    gen_ids = [gen.id for gen in case.generators]
    if len(set(gen_ids)) != len(gen_ids):
        raise ValidationError("Generator ids are not unique")
    for gen in case.generators:
        if gen.bus not in known:
            raise ValidationError(f"Generator {gen.id} references unknown bus {gen.bus}")
        if gen.p_min_mw < 0 or not (gen.p_min_mw <= gen.p_mw <= gen.p_max_mw):
            raise ValidationError(
                f"Generator {gen.id} violates 0 <= p_min <= p <= p_max: "
                f"{gen.p_min_mw}, {gen.p_mw}, {gen.p_max_mw}"
            )

    total_load = sum(bus.load_mw for bus in case.buses)
    capacity = sum(gen.p_max_mw for gen in case.generators)
    if capacity < total_load:
        raise ValidationError(
            f"Total generation capacity {capacity:.3f} MW cannot meet total load {total_load:.3f} MW"
        )
    generation = sum(gen.p_mw for gen in case.generators)
    if abs(generation - total_load) > 1e-6 * max(total_load, 1.0):
        logger.warning(
            "Base dispatch %.3f MW differs from load %.3f MW; islands are rebalanced before each solve",
            generation, total_load,
        )

    probabilities = case.outage_probability
    if not probabilities:
        probabilities = (default_outage_probability(),) * len(case.branches)
    if len(probabilities) != len(case.branches):
        raise ValidationError(
            f"outage_probability has {len(probabilities)} entries for {len(case.branches)} branches"
        )
    for p in probabilities:
        if not 0 <= p < 0.5:
            raise ValidationError(f"Outage probability must lie in [0, 0.5), got {p}")

    graph = nx.Graph()
    graph.add_nodes_from(bus_ids)
    graph.add_edges_from((br.from_bus, br.to_bus) for br in case.branches if br.in_service)
    n_components = nx.number_connected_components(graph)
    if n_components > 1:
        logger.warning("Case is not connected with all branches in service: %d components", n_components)

    return replace(case, outage_probability=tuple(float(p) for p in probabilities), n_components=n_components)


def _bus_from_dict(raw: dict) -> Bus:
    return Bus(
        id=int(raw["id"]),
        x_km=float(raw["x_km"]) if raw.get("x_km") is not None else math.nan,
        y_km=float(raw["y_km"]) if raw.get("y_km") is not None else math.nan,
        load_mw=float(raw.get("load_mw", 0.0)),
        is_slack_candidate=bool(raw.get("is_slack_candidate", False)),
    )


def _branch_from_dict(raw: dict) -> Branch:
    return Branch(
        id=int(raw["id"]),
        from_bus=int(raw["from_bus"]),
        to_bus=int(raw["to_bus"]),
        reactance_pu=float(raw["reactance_pu"]),
        rate_a_mw=float(raw["rate_a_mw"]),
        rate_b_mw=float(raw["rate_b_mw"]) if raw.get("rate_b_mw") else None,
        rate_c_mw=float(raw["rate_c_mw"]) if raw.get("rate_c_mw") else None,
        in_service=bool(raw.get("in_service", True)),
    )


def _generator_from_dict(raw: dict) -> Generator:
    return Generator(
        id=int(raw["id"]),
        bus=int(raw["bus"]),
        p_mw=float(raw["p_mw"]),
        p_max_mw=float(raw["p_max_mw"]),
        p_min_mw=float(raw.get("p_min_mw", 0.0)),
    )


def case_from_dict(data: dict, name: str = "") -> GridCase:
    """Build an unvalidated case from the native JSON object."""
    try:
        buses = tuple(_bus_from_dict(b) for b in data["buses"])
        branches = tuple(_branch_from_dict(b) for b in data["branches"])
        generators = tuple(_generator_from_dict(g) for g in data.get("generators", []))
        base_mva = float(data.get("base_mva", 100.0))
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Malformed case field: {e}")

    probabilities = data.get("outage_probability")
    if probabilities is None:
        probabilities = ()
    elif isinstance(probabilities, (int, float)):
        probabilities = (float(probabilities),) * len(branches)
    else:
        probabilities = tuple(float(p) for p in probabilities)

    return GridCase(
        buses=buses,
        branches=branches,
        generators=generators,
        base_mva=base_mva,
        outage_probability=probabilities,
        name=data.get("name", name),
    )


def case_to_dict(case: GridCase) -> dict:
    """Native JSON object for a case; the inverse of case_from_dict."""
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [
            {
                "id": b.id, "x_km": b.x_km, "y_km": b.y_km,
                "load_mw": b.load_mw, "is_slack_candidate": b.is_slack_candidate,
            }
            for b in case.buses
        ],
        "branches": [
            {
                "id": br.id, "from_bus": br.from_bus, "to_bus": br.to_bus,
                "reactance_pu": br.reactance_pu, "rate_a_mw": br.rate_a_mw,
                "rate_b_mw": br.rate_b_mw, "rate_c_mw": br.rate_c_mw,
                "in_service": br.in_service,
            }
            for br in case.branches
        ],
        "generators": [
            {
                "id": g.id, "bus": g.bus, "p_mw": g.p_mw,
                "p_max_mw": g.p_max_mw, "p_min_mw": g.p_min_mw,
            }
            for g in case.generators
        ],
        "outage_probability": list(case.outage_probability),
    }


def write_case(case: GridCase, path: Path) -> Path:
    """Write a case in the native JSON format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(case_to_dict(case), f, indent=2)
    return path


def load_coordinates(path: Path) -> dict[int, tuple[float, float]]:
    """Read a coordinate CSV with header ``bus_id,x_km,y_km``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Coordinate file not found: {path}")
    df = pd.read_csv(path)
    missing = {"bus_id", "x_km", "y_km"} - set(df.columns)
    if missing:
        raise ParseError(f"Coordinate file {path} lacks columns: {sorted(missing)}")
    return {
        int(row.bus_id): (float(row.x_km), float(row.y_km))
        for row in df.itertuples(index=False)
    }


def write_coordinates(coords: dict[int, tuple[float, float]], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(
        [(bus_id, xy[0], xy[1]) for bus_id, xy in sorted(coords.items())],
        columns=["bus_id", "x_km", "y_km"],
    )
    df.to_csv(path, index=False)
    return path


def apply_coordinates(case: GridCase, coords: dict[int, tuple[float, float]]) -> GridCase:
    """Overwrite bus coordinates from a coordinate map; every bus must be present."""
    missing = [bus.id for bus in case.buses if bus.id not in coords]
    if missing:
        raise ValidationError(f"Coordinate file lacks buses: {missing[:10]}")
    buses = tuple(replace(bus, x_km=coords[bus.id][0], y_km=coords[bus.id][1]) for bus in case.buses)
    return replace(case, buses=buses)


def load_probabilities(path: Path) -> dict[int, float]:
    """Read a per-branch outage probability override CSV ``branch_id,p``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Probability file not found: {path}")
    df = pd.read_csv(path)
    if not {"branch_id", "p"} <= set(df.columns):
        raise ParseError(f"Probability file {path} needs columns branch_id,p")
    return {int(row.branch_id): float(row.p) for row in df.itertuples(index=False)}


def apply_probabilities(case: GridCase, overrides: dict[int, float]) -> GridCase:
    unknown = set(overrides) - set(case.branch_index)
    if unknown:
        raise ValidationError(f"Probability overrides name unknown branches: {sorted(unknown)[:10]}")
    probabilities = tuple(
        overrides.get(br.id, case.outage_probability[i]) for i, br in enumerate(case.branches)
    )
    return validate_case(replace(case, outage_probability=probabilities))


def load_case(
    path: Path,
    format: Optional[str] = None,
    coordinates: Optional[Path] = None,
    allow_missing_coordinates: bool = False,
    unrated_rate_mw: Optional[float] = None,
) -> GridCase:
    """Load, synthesize ratings for, and validate a grid case.

    Args:
        path: case file
        format: "native-json" or "matpower-text"; inferred from the suffix if None
        coordinates: optional CSV ``bus_id,x_km,y_km`` supplying bus coordinates
        allow_missing_coordinates: place buses without coordinates at the
            origin instead of rejecting the case (used when synthesizing a layout)
        unrated_rate_mw: RateA given to MATPOWER branches whose RateA is 0

    Returns:
        Validated GridCase

    Raises:
        FileNotFoundError: if the case file does not exist
        ParseError: on a malformed field
        ValidationError: on an invariant violation
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Case file not found: {path}")

    if format is None:
        format = "matpower-text" if path.suffix == ".m" else "native-json"
    if format not in CASE_FORMATS:
        raise ValidationError(f"Unknown case format: {format}")

    if format == "native-json":
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: {e}")
        case = case_from_dict(data, name=path.stem)
    else:
        from .parse_matpower import read_matpower
        case = read_matpower(path, unrated_rate_mw=unrated_rate_mw)

    if coordinates is not None:
        case = apply_coordinates(case, load_coordinates(coordinates))

    missing = [b.id for b in case.buses if not (math.isfinite(b.x_km) and math.isfinite(b.y_km))]
    if missing:
        if not allow_missing_coordinates:
            raise ValidationError(
                f"Buses lack coordinates ({len(missing)} of {len(case.buses)}); "
                "supply a coordinate file (bus_id,x_km,y_km)"
            )
        logger.warning("Placing %d buses without coordinates at the origin", len(missing))
        unplaced = set(missing)
        case = apply_coordinates(
            case, {b.id: (0.0, 0.0) if b.id in unplaced else (b.x_km, b.y_km) for b in case.buses}
        )

    return validate_case(synthesize_ratings(case))


def proportional_dispatch(
    weights: np.ndarray, p_min: np.ndarray, p_max: np.ndarray, target: float
) -> np.ndarray:
    """Scale outputs by a common factor, clipped to limits, to sum to ``target``.

    Solves sum(clip(s * weights, p_min, p_max)) = target for s, then spreads
    the floating-point residual over units strictly inside their limits.

    Raises:
        InfeasibleDispatch: if target lies outside [sum(p_min), sum(p_max)]
    """
    weights = np.asarray(weights, dtype=float)
    p_min = np.asarray(p_min, dtype=float)
    p_max = np.asarray(p_max, dtype=float)
    lo, hi = p_min.sum(), p_max.sum()
    scale = max(abs(target), 1.0)
    if target > hi + 1e-9 * scale or target < lo - 1e-9 * scale:
        raise InfeasibleDispatch(
            f"Cannot dispatch {target:.3f} MW within limits [{lo:.3f}, {hi:.3f}] MW"
        )
    if weights.sum() <= 0:
        weights = p_max.copy()

    clipped = np.clip(weights, p_min, p_max)
    if abs(clipped.sum() - target) <= 1e-12 * scale:
        return clipped

    def excess(s: float) -> float:
        return float(np.clip(s * weights, p_min, p_max).sum() - target)

    positive = weights > 0
    if not positive.any():
        s = 0.0
    else:
        s_hi = float(np.max(p_max[positive] / weights[positive])) * 2.0 + 1.0
        if excess(0.0) >= 0:
            s = 0.0
        elif excess(s_hi) <= 0:
            s = s_hi
        else:
            s = brentq(excess, 0.0, s_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)

    out = np.clip(s * weights, p_min, p_max)
    residual = target - out.sum()
    if residual != 0.0:
        room = (out < p_max) if residual > 0 else (out > p_min)
        if room.any():
            share = weights[room] if weights[room].sum() > 0 else np.ones(room.sum())
            out[room] += residual * share / share.sum()
            out = np.clip(out, p_min, p_max)
    return out


def _service_components(case: GridCase) -> list[set[int]]:
    graph = nx.Graph()
    graph.add_nodes_from(bus.id for bus in case.buses)
    graph.add_edges_from((br.from_bus, br.to_bus) for br in case.branches if br.in_service)
    return sorted((set(c) for c in nx.connected_components(graph)), key=min)


def scale_load(case: GridCase, factor: float) -> GridCase:
    """Multiply every load by ``factor`` and redispatch generators proportionally.

    Each connected component is redispatched to its own load, so islands
    present in the base case stay in balance. A component without
    generators keeps its scaled load.

    Raises:
        DomainError: if factor <= 0
        InfeasibleDispatch: if the scaled load exceeds total p_max, in the
            case or in any one component
    """
    if not factor > 0:
        raise DomainError(f"Load scaling factor must be > 0, got {factor}")

    buses = tuple(replace(bus, load_mw=bus.load_mw * factor) for bus in case.buses)
    total_load = sum(bus.load_mw for bus in buses)
    if total_load > case.total_capacity:
        raise InfeasibleDispatch(
            f"Scaled load {total_load:.3f} MW exceeds total capacity {case.total_capacity:.3f} MW"
        )

    if not case.generators:
        return replace(case, buses=buses)

    output = {g.id: g.p_mw for g in case.generators}
    for component in _service_components(case):
        units = [g for g in case.generators if g.bus in component]
        if not units:
            continue
        load = sum(bus.load_mw for bus in buses if bus.id in component)
        weights = np.array([g.p_mw for g in units])
        p_min = np.array([g.p_min_mw for g in units])
        p_max = np.array([g.p_max_mw for g in units])
        for g, p in zip(units, proportional_dispatch(weights, p_min, p_max, load)):
            output[g.id] = float(p)
    generators = tuple(
        replace(g, p_mw=output[g.id]) if g.p_mw != output[g.id] else g
        for g in case.generators
    )
    return replace(case, buses=buses, generators=generators)


def relieve_overloads(case: GridCase) -> tuple[GridCase, list[int]]:
    """Raise RateA of branches overloaded in the base-case DC flow.

    Branches whose base flow exceeds rate_a get rate_a equal to the flow
    magnitude; RateB and RateC are scaled by the same factor so their ratio
    to RateA is kept. Used to prepare cases that are not N-0 secure.

    Returns:
        (adjusted case, ids of adjusted branches)
    """
    from .dc_powerflow import base_case_flows

    flows = base_case_flows(case)
    adjusted = []
    branches = []
    for br, flow in zip(case.branches, flows.flow_mw):
        magnitude = abs(float(flow))
        if br.in_service and magnitude > br.rate_a_mw:
            ratio = magnitude / br.rate_a_mw
            branches.append(replace(
                br,
                rate_a_mw=magnitude,
                rate_b_mw=br.rate_b_mw * ratio,
                rate_c_mw=br.rate_c_mw * ratio,
            ))
            adjusted.append(br.id)
        else:
            branches.append(br)
    if adjusted:
        logger.info("Relieved %d overloaded branches", len(adjusted))
    return validate_case(replace(case, branches=tuple(branches))), adjusted


def synthesize_coordinates(
    case: GridCase, extent_km: float = 500.0, seed: int = 0
) -> dict[int, tuple[float, float]]:
    """Place buses with a seeded spring layout scaled to ``extent_km``."""
    graph = nx.Graph()
    graph.add_nodes_from(bus.id for bus in case.buses)
    graph.add_edges_from(
        (br.from_bus, br.to_bus, {"weight": 1.0 / br.reactance_pu})
        for br in case.branches if br.in_service
    )
    layout = nx.spring_layout(graph, seed=seed)
    half = extent_km / 2.0
    return {
        bus_id: (float(half + half * xy[0]), float(half + half * xy[1]))
        for bus_id, xy in layout.items()
    }
