"""Flood maps keyed by hurricane characteristics and the two-level scenario tree.

The outer level (index ``k``) is a preparedness node: what is known when
Tiger Dams are deployed. The inner level (index ``m``) is the hurricane
that actually lands, drawn from the node's scenario list. Several paths may
point at the same flood map.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping, NamedTuple

from .grid import GridModel

PROB_TOL = 1e-12


class ScenarioFormatError(ValueError):
    pass


class HurricaneKey(NamedTuple):
    direction: str
    category: int
    speed: int

    def __str__(self) -> str:
        return f"{self.direction}/c{self.category}/s{self.speed}"


@dataclass(frozen=True)
class FloodMapSet:
    """Integer flood heights (feet) per substation, one map per hurricane key.

    ``maps[key]`` is a tuple indexed by dense substation id.
    """

    maps: Mapping[HurricaneKey, tuple[int, ...]]
    num_substations: int

    def __post_init__(self):
        for key, heights in self.maps.items():
            if len(heights) != self.num_substations:
                raise ScenarioFormatError(f"map {key}: expected {self.num_substations} heights")
            for h in heights:
                if isinstance(h, bool) or int(h) != h or h < 0:
                    raise ScenarioFormatError(f"map {key}: heights must be nonnegative integers")

    @cached_property
    def W(self) -> tuple[int, ...]:
        """Maximum flood height per substation across every map."""
        out = [0] * self.num_substations
        for heights in self.maps.values():
            out = [max(a, int(b)) for a, b in zip(out, heights)]
        return tuple(out)

    def height(self, key: HurricaneKey, i: int) -> int:
        return int(self.maps[key][i])

    def mean_height(self, i: int) -> float:
        if not self.maps:
            return 0.0
        return sum(h[i] for h in self.maps.values()) / len(self.maps)


@dataclass(frozen=True)
class Scenario:
    index: int
    key: HurricaneKey
    prob: float  # conditional on the node


@dataclass(frozen=True)
class PreparednessNode:
    index: int
    prob: float
    scenarios: tuple[Scenario, ...]


class Leaf(NamedTuple):
    k: int
    m: int
    key: HurricaneKey
    prob: float  # joint P(k, m)


@dataclass(frozen=True)
class ScenarioTree:
    nodes: tuple[PreparednessNode, ...]

    def leaves(self) -> list[Leaf]:
        """All (k, m) paths, node-major, in scenario order."""
        return [Leaf(n.index, s.index, s.key, n.prob * s.prob)
                for n in self.nodes for s in n.scenarios]

    def __iter__(self) -> Iterator[PreparednessNode]:
        return iter(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def scenario(self, k: int, m: int) -> Scenario:
        if not 0 <= k < len(self.nodes):
            raise KeyError(f"no preparedness node {k}")
        node = self.nodes[k]
        if not 0 <= m < len(node.scenarios):
            raise KeyError(f"node {k} has no scenario {m}")
        return node.scenarios[m]

    def keys(self) -> set[HurricaneKey]:
        return {s.key for n in self.nodes for s in n.scenarios}


def make_tree(nodes: list[tuple[float, list[tuple[HurricaneKey, float]]]]) -> ScenarioTree:
    """Build a tree from ``[(P(k), [(key, P(m|k)), ...]), ...]``, assigning indices."""
    return ScenarioTree(tuple(
        PreparednessNode(k, float(pk), tuple(Scenario(m, HurricaneKey(*key), float(q))
                                             for m, (key, q) in enumerate(scen)))
        for k, (pk, scen) in enumerate(nodes)
    ))


def build_case_study_tree(directions, categories, speeds, maps: FloodMapSet) -> ScenarioTree:
    """One node per direction and consecutive category/speed pair, equal path probabilities."""
    categories = list(categories)
    speeds = list(speeds)
    if len(categories) < 2 or len(speeds) < 2:
        raise ValueError("need at least two categories and two speeds")
    if categories != sorted(categories) or speeds != sorted(speeds):
        raise ValueError("categories and speeds must be ascending")
    combos = []
    for d in directions:
        for c0, c1 in zip(categories, categories[1:]):
            for f0, f1 in zip(speeds, speeds[1:]):
                combos.append([HurricaneKey(d, c, f) for c in (c0, c1) for f in (f0, f1)])
    missing = sorted({str(key) for keys in combos for key in keys if key not in maps.maps})
    if missing:
        raise KeyError(f"missing flood maps: {', '.join(missing)}")
    pk = 1.0 / len(combos)
    return make_tree([(pk, [(key, 0.25) for key in keys]) for keys in combos])


def delta(maps: FloodMapSet, tree: ScenarioTree, i: int, k: int, m: int) -> int:
    """Flood height at substation ``i`` on path ``(k, m)``."""
    return maps.height(tree.scenario(k, m).key, i)


def validate_tree(tree: ScenarioTree, maps: FloodMapSet) -> list[str]:
    problems = []
    if not tree.nodes:
        problems.append("tree has no preparedness nodes")
    total = 0.0
    for node in tree.nodes:
        if node.prob < 0:
            problems.append(f"node {node.index}: negative probability")
        total += node.prob
        if not node.scenarios:
            problems.append(f"node {node.index}: no scenarios")
            continue
        inner = 0.0
        for s in node.scenarios:
            if s.prob < 0:
                problems.append(f"node {node.index} scenario {s.index}: negative probability")
            inner += s.prob
            if s.key not in maps.maps:
                problems.append(f"node {node.index} scenario {s.index}: no flood map for {s.key}")
        if abs(inner - 1.0) > PROB_TOL:
            problems.append(f"node {node.index}: scenario probabilities sum to {inner:.12g}")
    if tree.nodes and abs(total - 1.0) > PROB_TOL:
        problems.append(f"node probabilities sum to {total:.12g}")
    return problems


def validate_floods(maps: FloodMapSet, g: GridModel) -> list[str]:
    problems = []
    if maps.num_substations != len(g.substations):
        problems.append("flood maps and grid disagree on the number of substations")
        return problems
    for key, heights in maps.maps.items():
        for s in g.substations:
            if not s.is_flood_exposed and heights[s.id]:
                problems.append(f"map {key}: non-exposed substation "
                                f"{g.substation_labels[s.id]} has flood height {heights[s.id]}")
    for i in g.exposed:
        if maps.W[i] < 1:
            problems.append(f"flood-exposed substation {g.substation_labels[i]} never floods")
    return problems


def _key_from(obj: dict, where: str) -> HurricaneKey:
    try:
        d, c, f = obj["direction"], obj["category"], obj["speed"]
    except KeyError as exc:
        raise ScenarioFormatError(f"{where}: missing {exc.args[0]!r}") from None
    if not isinstance(d, str):
        raise ScenarioFormatError(f"{where}: direction must be a string")
    for name, v in (("category", c), ("speed", f)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioFormatError(f"{where}: {name} must be an integer")
    return HurricaneKey(d, c, f)


def floods_from_dict(data: dict, g: GridModel) -> FloodMapSet:
    """Parse floods JSON; substations are referenced by their file ids."""
    if not isinstance(data, dict) or set(data) - {"maps"}:
        raise ScenarioFormatError("floods document must be an object with a 'maps' list")
    index = {lab: k for k, lab in enumerate(g.substation_labels)}
    by_str = {str(lab): k for k, lab in enumerate(g.substation_labels)}
    maps: dict[HurricaneKey, tuple[int, ...]] = {}
    errors = []
    for n, entry in enumerate(data.get("maps", [])):
        where = f"maps[{n}]"
        if not isinstance(entry, dict):
            raise ScenarioFormatError(f"{where}: must be an object")
        extra = set(entry) - {"direction", "category", "speed", "heights"}
        if extra:
            raise ScenarioFormatError(f"{where}: unknown keys {sorted(extra)}")
        key = _key_from(entry, where)
        if key in maps:
            raise ScenarioFormatError(f"{where}: duplicate map for {key}")
        heights = [0] * len(g.substations)
        for sid, h in entry.get("heights", {}).items():
            i = index.get(sid, by_str.get(str(sid)))
            if i is None:
                errors.append(f"{where}: unknown substation {sid!r}")
                continue
            if isinstance(h, bool) or not isinstance(h, (int, float)) or int(h) != h or h < 0:
                raise ScenarioFormatError(
                    f"{where}: height at substation {sid!r} must be a nonnegative integer, got {h!r}")
            heights[i] = int(h)
        maps[key] = tuple(heights)
    if errors:
        raise ScenarioFormatError("; ".join(errors))
    return FloodMapSet(maps, len(g.substations))


def floods_to_dict(maps: FloodMapSet, g: GridModel) -> dict:
    return {"maps": [
        {"direction": key.direction, "category": key.category, "speed": key.speed,
         "heights": {str(g.substation_labels[i]): h for i, h in enumerate(heights) if h}}
        for key, heights in maps.maps.items()
    ]}


def tree_from_dict(data: dict, maps: FloodMapSet | None = None) -> ScenarioTree:
    """Parse tree JSON: an explicit ``nodes`` list, or a ``case_study`` generator description."""
    if not isinstance(data, dict):
        raise ScenarioFormatError("tree document must be an object")
    extra = set(data) - {"nodes", "case_study"}
    if extra:
        raise ScenarioFormatError(f"tree: unknown keys {sorted(extra)}")
    if "case_study" in data:
        if "nodes" in data:
            raise ScenarioFormatError("tree: give either 'nodes' or 'case_study', not both")
        gen = data["case_study"]
        if maps is None:
            raise ScenarioFormatError("tree: 'case_study' needs the flood maps")
        try:
            return build_case_study_tree(gen["directions"], gen["categories"], gen["speeds"],
                                         maps)
        except (KeyError, ValueError, TypeError) as exc:
            raise ScenarioFormatError(f"tree.case_study: {exc}") from None
    nodes = []
    for k, node in enumerate(data.get("nodes", [])):
        where = f"nodes[{k}]"
        if not isinstance(node, dict) or set(node) - {"prob", "scenarios"}:
            raise ScenarioFormatError(f"{where}: expected keys 'prob' and 'scenarios'")
        scen = []
        for m, s in enumerate(node.get("scenarios", [])):
            w = f"{where}.scenarios[{m}]"
            if not isinstance(s, dict) or set(s) - {"direction", "category", "speed", "prob"}:
                raise ScenarioFormatError(f"{w}: unexpected keys")
            scen.append((_key_from(s, w), _prob(s, w)))
        nodes.append((_prob(node, where), scen))
    return make_tree(nodes)


def _prob(obj: dict, where: str) -> float:
    p = obj.get("prob")
    if isinstance(p, bool) or not isinstance(p, (int, float)):
        raise ScenarioFormatError(f"{where}: 'prob' must be a number")
    return float(p)


def tree_to_dict(tree: ScenarioTree) -> dict:
    return {"nodes": [
        {"prob": n.prob, "scenarios": [
            {"direction": s.key.direction, "category": s.key.category, "speed": s.key.speed,
             "prob": s.prob} for s in n.scenarios]}
        for n in tree.nodes
    ]}
