"""Function call graph construction, reachability, and secure-path search.

The direct graph comes from disassembly callsites; indirect edges come from
resolved source facts.  A syscall is tainted for an API when no all-direct
path reaches its host function: those are the syscalls the runtime verifier
has to guard.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .disasm import DIRECT, INDIRECT, DisasmUnit
from .errors import UnknownApi, UnknownCaller
from .srcfacts import SourceFacts, resolve_indirect_targets

DEFAULT_MAX_PATH_LEN = 64
DEFAULT_MAX_PATHS = 4096


@dataclass(frozen=True)
class Edge:
    caller: str
    callee: str
    kind: str
    site_id: str


@dataclass
class CallGraph:
    nodes: set[str] = field(default_factory=set)
    edges: set[Edge] = field(default_factory=set)

    def successors(self, direct_only: bool = False) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for e in self.edges:
            if direct_only and e.kind != DIRECT:
                continue
            adj[e.caller].add(e.callee)
        return adj

    def has_direct_edge(self, caller: str, callee: str) -> bool:
        return any(
            e.caller == caller and e.callee == callee and e.kind == DIRECT
            for e in self.edges
        )


@dataclass(frozen=True)
class SecurePath:
    api: str
    syscall_name: str
    functions: tuple[str, ...]
    tainted: bool


@dataclass
class PathEnumeration:
    paths: list[tuple[str, ...]]
    truncated: bool  # more simple paths exist than the budget allowed


def build_direct_fcg(unit: DisasmUnit) -> CallGraph:
    graph = CallGraph()
    graph.nodes.update(fn.canonical_name for fn in unit.functions)
    for site in unit.callsites:
        if site.kind != DIRECT:
            continue
        graph.nodes.add(site.target)
        graph.edges.add(Edge(site.caller, site.target, DIRECT, site.site_id))
    return graph


def build_indirect_edges(facts: SourceFacts) -> set[Edge]:
    edges: set[Edge] = set()
    for site in facts.indirect_sites:
        for target in resolve_indirect_targets(site, facts):
            edges.add(Edge(site.caller, target, INDIRECT, site.site_id))
    return edges


def merge(direct: CallGraph, indirect_edges: set[Edge]) -> CallGraph:
    merged = CallGraph(nodes=set(direct.nodes), edges=set(direct.edges))
    for edge in indirect_edges:
        if edge.caller not in direct.nodes:
            raise UnknownCaller(edge.caller)
        merged.nodes.add(edge.callee)
        merged.edges.add(edge)
    return merged


def bfs_reachable(adj: dict[str, set[str]], start: str) -> set[str]:
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in adj.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def reachable_syscalls(
    graph: CallGraph, api: str, resolved_sites
) -> set[tuple[str, bool]]:
    """Syscall names whose host function is reachable from `api`.

    tainted is False exactly when some all-direct path reaches a host that
    invokes the syscall; direct evidence from any host wins.
    """
    if api not in graph.nodes:
        raise UnknownApi(api)
    full = bfs_reachable(graph.successors(), api)
    direct = bfs_reachable(graph.successors(direct_only=True), api)

    by_name: dict[str, bool] = {}
    for site in resolved_sites:
        if site.name is None or site.site.function not in full:
            continue
        untainted = site.site.function in direct
        prev = by_name.get(site.name)
        by_name[site.name] = (prev or untainted) if prev is not None else untainted
    return {(name, not untainted) for name, untainted in by_name.items()}


def enumerate_secure_paths(
    graph: CallGraph,
    api: str,
    host: str,
    max_len: int = DEFAULT_MAX_PATH_LEN,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> PathEnumeration:
    """All simple paths from `api` to `host`, lexicographic by node sequence,
    bounded by max_len nodes and max_paths paths."""
    adj = {n: sorted(succ) for n, succ in graph.successors().items()}
    result = PathEnumeration(paths=[], truncated=False)
    path = [api]
    on_path = {api}

    def walk(node: str) -> bool:
        if node == host:
            if len(result.paths) >= max_paths:
                result.truncated = True
                return False
            result.paths.append(tuple(path))
            return True
        if len(path) >= max_len:
            return True
        for nxt in adj.get(node, ()):
            if nxt in on_path:
                continue
            path.append(nxt)
            on_path.add(nxt)
            keep_going = walk(nxt)
            path.pop()
            on_path.discard(nxt)
            if not keep_going:
                return False
        return True

    walk(api)
    return result


def path_is_tainted(graph: CallGraph, functions: tuple[str, ...]) -> bool:
    """A path hop counts as indirect only when no direct edge covers it."""
    return any(
        not graph.has_direct_edge(a, b) for a, b in zip(functions, functions[1:])
    )
