"""Free-group engine: Stallings graphs, folding, membership and finite covers.

Edges are stored once, oriented by the positive letter: an edge ``(v, x, w)``
means reading ``x`` at ``v`` leads to ``w`` and reading ``x^-1`` at ``w``
leads back to ``v``.  Paths are read left to right, so the subgroup of a
graph is the set of words that lift to loops at the basepoint.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from sympy.combinatorics import Permutation, PermutationGroup

from .errors import MemberError, ValidationError
from .words import Word, conjugate_in_free_group

log = logging.getLogger(__name__)


class FoldingGraph:
    """Mutable labelled graph with on-the-fly Stallings folding.

    Vertices are merged with a union-find; stored edge targets may be stale
    ids and are always resolved through :meth:`find`.
    """

    def __init__(self):
        self.parent: list[int] = []
        self.out: list[dict[str, int]] = []
        self.inn: list[dict[str, int]] = []
        self.dead: set[int] = set()

    def new_vertex(self) -> int:
        v = len(self.parent)
        self.parent.append(v)
        self.out.append({})
        self.inn.append({})
        return v

    def find(self, v: int) -> int:
        root = v
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[v] != root:
            self.parent[v], v = root, self.parent[v]
        return root

    def vertices(self) -> list[int]:
        return [v for v in range(len(self.parent)) if self.parent[v] == v and v not in self.dead]

    def step(self, v: int, name: str, sign: int) -> int | None:
        table = self.out if sign > 0 else self.inn
        w = table[self.find(v)].get(name)
        return None if w is None else self.find(w)

    def add_edge(self, v: int, name: str, w: int) -> None:
        v, w = self.find(v), self.find(w)
        pending = []
        old = self.out[v].get(name)
        if old is not None:
            pending.append((old, w))
        else:
            self.out[v][name] = w
        old = self.inn[w].get(name)
        if old is not None:
            pending.append((old, v))
        else:
            self.inn[w][name] = v
        for a, b in pending:
            self.union(a, b)

    def union(self, a: int, b: int) -> bool:
        """Identify two vertices and fold.  Returns True if anything merged."""
        queue = deque([(a, b)])
        merged = False
        while queue:
            x, y = queue.popleft()
            x, y = self.find(x), self.find(y)
            if x == y:
                continue
            if y < x:
                x, y = y, x
            merged = True
            self.parent[y] = x
            for table in (self.out, self.inn):
                for name, z in table[y].items():
                    mine = table[x].get(name)
                    if mine is None:
                        table[x][name] = z
                    else:
                        queue.append((mine, z))
                table[y] = {}
        return merged

    def step_letter(self, v: int, letter: tuple[str, int], create: bool) -> int | None:
        name, sign = letter
        w = self.step(v, name, sign)
        if w is None and create:
            w = self.new_vertex()
            if sign > 0:
                self.add_edge(v, name, w)
            else:
                self.add_edge(w, name, v)
            w = self.find(w)
        return w

    def trace(self, v: int, word: Word, create: bool = False) -> int | None:
        v = self.find(v)
        for letter in word:
            v = self.step_letter(v, letter, create)
            if v is None:
                return None
        return v

    def trace_path(self, v: int, word: Word) -> list[int] | None:
        path = [self.find(v)]
        for letter in word:
            w = self.step_letter(path[-1], letter, False)
            if w is None:
                return None
            path.append(w)
        return path

    def add_loop(self, v: int, word: Word) -> None:
        """Attach a petal reading ``word`` at ``v`` and fold it in."""
        if not word:
            return
        letters = word.letters
        cur = self.find(v)
        for letter in letters[:-1]:
            cur = self.step_letter(cur, letter, True)
        name, sign = letters[-1]
        if sign > 0:
            self.add_edge(cur, name, v)
        else:
            self.add_edge(v, name, cur)

    def degree(self, v: int) -> int:
        v = self.find(v)
        return len(self.out[v]) + len(self.inn[v])

    def remove_vertex(self, v: int) -> None:
        v = self.find(v)
        for name, w in self.out[v].items():
            w = self.find(w)
            if self.inn[w].get(name) is not None and self.find(self.inn[w][name]) == v:
                del self.inn[w][name]
        for name, w in self.inn[v].items():
            w = self.find(w)
            if self.out[w].get(name) is not None and self.find(self.out[w][name]) == v:
                del self.out[w][name]
        self.out[v] = {}
        self.inn[v] = {}
        self.dead.add(v)

    def trim(self, keep: Iterable[int]) -> None:
        """Iteratively delete degree <= 1 vertices not in ``keep``."""
        keep = {self.find(k) for k in keep}
        changed = True
        while changed:
            changed = False
            for v in self.vertices():
                if v not in keep and self.degree(v) <= 1:
                    self.remove_vertex(v)
                    changed = True

    def close_chains(self, alphabet: Sequence[str]) -> None:
        """Complete every partial injection to a permutation.

        Each maximal chain of a letter is closed into a cycle by joining its
        last vertex back to its first; isolated vertices become fixed points.
        Vertices are processed in increasing id order.
        """
        for name in alphabet:
            for v in self.vertices():
                if name in self.out[v]:
                    continue
                s = v
                while True:
                    prev = self.inn[s].get(name)
                    if prev is None:
                        break
                    s = self.find(prev)
                self.out[v][name] = s
                self.inn[s][name] = v

    def freeze(self, basepoint: int, alphabet: Sequence[str]) -> tuple["SubgroupGraph", dict[int, int]]:
        """Canonically relabel (BFS from the basepoint) into an immutable graph."""
        base = self.find(basepoint)
        order = {base: 0}
        queue = deque([base])
        while queue:
            v = queue.popleft()
            for name in alphabet:
                for table in (self.out, self.inn):
                    w = table[v].get(name)
                    if w is not None:
                        w = self.find(w)
                        if w not in order:
                            order[w] = len(order)
                            queue.append(w)
        edges = []
        for v, i in order.items():
            for name, w in self.out[v].items():
                edges.append((i, name, order[self.find(w)]))
        graph = SubgroupGraph(len(order), tuple(sorted(edges, key=lambda e: (e[0], alphabet.index(e[1]), e[2]))),
                              tuple(alphabet))
        return graph, order

    @classmethod
    def from_graph(cls, graph: "SubgroupGraph") -> "FoldingGraph":
        g = cls()
        for _ in range(graph.n):
            g.new_vertex()
        for v, name, w in graph.edges:
            g.add_edge(v, name, w)
        return g


@dataclass(frozen=True)
class SubgroupGraph:
    """Folded labelled graph with basepoint 0 (a core graph or a finite cover)."""

    n: int
    edges: tuple[tuple[int, str, int], ...]
    alphabet: tuple[str, ...]
    _out: dict = field(default=None, compare=False, repr=False, hash=False)
    _in: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        out = {x: {} for x in self.alphabet}
        inn = {x: {} for x in self.alphabet}
        for v, name, w in self.edges:
            if name not in out:
                raise ValidationError(f"edge label {name!r} not in alphabet")
            if v in out[name] or w in inn[name]:
                raise ValidationError(f"graph not folded at label {name!r}")
            out[name][v] = w
            inn[name][w] = v
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "_in", inn)

    basepoint = 0

    def step(self, v: int, name: str, sign: int) -> int | None:
        return (self._out if sign > 0 else self._in)[name].get(v) if name in self._out else None

    def trace(self, v: int, word: Word) -> int | None:
        for name, sign in word:
            v = self.step(v, name, sign)
            if v is None:
                return None
        return v

    def contains(self, word: Word) -> bool:
        return self.trace(0, word) == 0

    @property
    def betti(self) -> int:
        return len(self.edges) - self.n + 1

    rank = betti

    @property
    def is_complete(self) -> bool:
        return all(len(self._out[x]) == self.n for x in self.alphabet)

    @property
    def index(self) -> int:
        if not self.is_complete:
            raise ValidationError("graph is not a complete cover")
        return self.n

    def degree(self, v: int) -> int:
        return sum((v in self._out[x]) + (v in self._in[x]) for x in self.alphabet)

    def permutation(self, name: str) -> tuple[int, ...]:
        if len(self._out[name]) != self.n:
            raise ValidationError(f"letter {name!r} is not a permutation")
        return tuple(self._out[name][v] for v in range(self.n))

    def tree_paths(self) -> list[Word]:
        """Words labelling BFS-tree paths from the basepoint to each vertex."""
        paths: list[Word | None] = [None] * self.n
        paths[0] = Word()
        queue = deque([0])
        while queue:
            v = queue.popleft()
            for name in self.alphabet:
                for sign in (1, -1):
                    w = self.step(v, name, sign)
                    if w is not None and paths[w] is None:
                        paths[w] = paths[v] * Word(((name, sign),))
                        queue.append(w)
        return paths

    def free_basis(self, tree_edges: set | None = None) -> list[Word]:
        """Free basis of the subgroup: one generator per non-tree edge."""
        paths = self.tree_paths()
        if tree_edges is None:
            tree_edges = self.bfs_tree_edges()
        basis = []
        for e in self.edges:
            if e not in tree_edges:
                v, name, w = e
                basis.append(paths[v] * Word(((name, 1),)) * paths[w].inverse())
        return basis

    def bfs_tree_edges(self) -> set:
        seen = {0}
        tree = set()
        queue = deque([0])
        while queue:
            v = queue.popleft()
            for name in self.alphabet:
                w = self._out[name].get(v)
                if w is not None and w not in seen:
                    seen.add(w)
                    tree.add((v, name, w))
                    queue.append(w)
                w = self._in[name].get(v)
                if w is not None and w not in seen:
                    seen.add(w)
                    tree.add((w, name, v))
                    queue.append(w)
        return tree

    def canonical(self) -> "SubgroupGraph":
        return FoldingGraph.from_graph(self).freeze(0, self.alphabet)[0]

    def to_dot(self, name: str = "G") -> str:
        lines = [f"digraph {name} {{"]
        for v in range(self.n):
            shape = "doublecircle" if v == 0 else "circle"
            lines.append(f"  v{v} [shape={shape}];")
        for v, label, w in self.edges:
            lines.append(f'  v{v} -> v{w} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


CoreGraph = SubgroupGraph
CoverGraph = SubgroupGraph


def _alphabet_of(words: Iterable[Word], alphabet: Sequence[str] | None) -> tuple[str, ...]:
    if alphabet is not None:
        return tuple(alphabet)
    names: set[str] = set()
    for w in words:
        names |= w.generators()
    return tuple(sorted(names))


def core_graph(generators: Sequence[Word], alphabet: Sequence[str] | None = None) -> SubgroupGraph:
    """Folded core graph of the subgroup generated by ``generators``."""
    alphabet = _alphabet_of(generators, alphabet)
    g = FoldingGraph()
    base = g.new_vertex()
    for w in generators:
        if not w:
            log.warning("dropping trivial generator")
            continue
        g.add_loop(base, w)
    g.trim([base])
    return g.freeze(base, alphabet)[0]


def contains(graph: SubgroupGraph, word: Word) -> bool:
    return graph.contains(word)


class HallCompletion(NamedTuple):
    cover: SubgroupGraph
    free_factor: list[Word]


def hall_complete(core: SubgroupGraph, avoid: Word, alphabet: Sequence[str] | None = None) -> HallCompletion:
    """Finite cover containing ``core`` whose subgroup excludes ``avoid``.

    The avoid word is grafted as an arc from the basepoint, then every
    partial permutation is closed up.  ``free_factor`` is a free basis of
    ``F`` with ``pi_1(cover) = H * F``.
    """
    names = list(alphabet) if alphabet is not None else list(core.alphabet)
    for x in sorted(avoid.generators()):
        if x not in names:
            names.append(x)
    if core.contains(avoid):
        g = FoldingGraph.from_graph(core)
        raise MemberError(f"{avoid} lies in the subgroup", witness=g.trace_path(0, avoid))
    g = FoldingGraph.from_graph(SubgroupGraph(core.n, core.edges, tuple(names)))
    end = g.trace(0, avoid, create=True)
    assert end != g.find(0)
    g.close_chains(names)
    cover, _ = g.freeze(0, names)
    if not cover.is_complete or cover.contains(avoid):
        raise AssertionError("hall completion failed its postcondition")
    return HallCompletion(cover, _complement_basis(core, cover))


def _complement_basis(core: SubgroupGraph, cover: SubgroupGraph) -> list[Word]:
    """Free basis of F where pi_1(cover) = pi_1(core) * F.

    The spanning tree of the cover extends one of the core, so non-tree core
    edges give a basis of H and the remaining non-tree edges a basis of F.
    """
    # Relabel the core into the cover by tracing its tree paths.
    core_paths = core.tree_paths()
    embed = [cover.trace(0, p) for p in core_paths]
    core_edges = {(embed[v], x, embed[w]) for v, x, w in core.edges}
    core_tree = {(embed[v], x, embed[w]) for v, x, w in core.bfs_tree_edges()}
    seen = set(embed)
    tree = set(core_tree)
    queue = deque(sorted(seen))
    while queue:
        v = queue.popleft()
        for x in cover.alphabet:
            for e in ((v, x, cover.step(v, x, 1)), (cover.step(v, x, -1), x, v)):
                other = e[2] if e[0] == v else e[0]
                if other is not None and other not in seen:
                    seen.add(other)
                    tree.add(e)
                    queue.append(other)
    # Paths along this tree.
    paths: dict[int, Word] = {0: Word()}
    queue = deque([0])
    adj: dict[int, list] = {}
    for v, x, w in tree:
        adj.setdefault(v, []).append((w, Word(((x, 1),))))
        adj.setdefault(w, []).append((v, Word(((x, -1),))))
    while queue:
        v = queue.popleft()
        for w, step in adj.get(v, []):
            if w not in paths:
                paths[w] = paths[v] * step
                queue.append(w)
    return [paths[v] * Word(((x, 1),)) * paths[w].inverse()
            for v, x, w in cover.edges if (v, x, w) not in tree and (v, x, w) not in core_edges]


@dataclass(frozen=True)
class FiberComponent:
    graph: SubgroupGraph
    conjugator: Word
    vertex: tuple[int, int]

    @property
    def betti(self) -> int:
        return self.graph.betti


def product_graph(u: SubgroupGraph, w: SubgroupGraph) -> FoldingGraph:
    alphabet = [x for x in u.alphabet if x in w.alphabet]
    g = FoldingGraph()
    for _ in range(u.n * w.n):
        g.new_vertex()
    for x in alphabet:
        for i, i2 in u._out[x].items():
            for j, j2 in w._out[x].items():
                g.add_edge(i * w.n + j, x, i2 * w.n + j2)
    return g


def fiber_product(u: SubgroupGraph, w: SubgroupGraph) -> list[FiberComponent]:
    """Components of the pullback with nontrivial fundamental group.

    The component at ``(i, j)`` represents ``U & x W x^-1`` with
    ``x = p_i . q_j^-1`` for tree paths ``p_i`` in ``u`` and ``q_j`` in ``w``.
    The component through ``(0, 0)`` (``U & W``) comes first when nontrivial.
    """
    alphabet = tuple(x for x in u.alphabet if x in w.alphabet)
    g = product_graph(u, w)
    g.trim([])
    comps: list[list[int]] = []
    seen: set[int] = set()
    for v in g.vertices():
        if v in seen:
            continue
        comp, queue = [], deque([v])
        seen.add(v)
        while queue:
            a = queue.popleft()
            comp.append(a)
            for table in (g.out, g.inn):
                for b in table[a].values():
                    b = g.find(b)
                    if b not in seen:
                        seen.add(b)
                        queue.append(b)
        comps.append(sorted(comp))
    pu, pw = u.tree_paths(), w.tree_paths()
    result = []
    for comp in comps:
        root = comp[0]
        graph, _ = g.freeze(root, alphabet)
        i, j = divmod(root, w.n)
        result.append(FiberComponent(graph, pu[i] * pw[j].inverse(), (i, j)))
    return result


class CosetAction(NamedTuple):
    permutations: dict[str, tuple[int, ...]]
    group_order: int
    normal_core_index: int


def coset_action(cover: SubgroupGraph) -> CosetAction:
    """Permutation action on cosets; the normal core index is the group order."""
    if not cover.is_complete:
        raise ValidationError("coset action needs a complete cover")
    perms = {x: cover.permutation(x) for x in cover.alphabet}
    if cover.n == 1:
        order = 1
    else:
        order = int(PermutationGroup([Permutation(list(p)) for p in perms.values()]).order())
    return CosetAction(perms, order, order)


def is_independent(elements: Sequence[Word]) -> bool:
    """No conjugate of one element commutes with another (free-group test)."""
    roots = []
    for w in elements:
        if not w:
            raise ValidationError("trivial element in independence test")
        roots.append(w.cyclic_reduction()[1].root()[0])
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if conjugate_in_free_group(roots[i], roots[j]) or conjugate_in_free_group(roots[i], roots[j].inverse()):
                return False
    return True
