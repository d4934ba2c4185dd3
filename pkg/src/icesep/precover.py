"""Pre-covers of ICE spaces and the separation pipeline.

For a height-1 tower ``G = F *_{<u_i>} (<u_i> x Z^k_i)`` the ICE space is a
bouquet Y (for F) with one torus T_i per extension glued along the loop u_i.
A pre-cover is stored as

* a folded graph over the base letters whose components are the Y-pieces;
* T-pieces, each an extension index with a lattice ``L`` in ``Z^(1+k)``
  (coordinate 0 is the root direction ``e0``); points are cosets of ``L``;
* attachments ``(y, piece, point)`` identifying the u-line through the Y
  vertex ``y`` with the ``e0``-circle through ``point``.

Points of a finished cover are the Y vertices; the base vertex is 0 and the
subgroup is its stabilizer under the right action (words read left to right).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

from .errors import MemberError, SearchExhausted, ValidationError
from .gice import CentExt, FreeProduct, GiceChain, Move, check_chain
from .lattice import (Lattice, complement_basis, hnf_with_determinant, is_saturated_in,
                      separate_abelian, torus_cover_single_elevation)
from .stallings import FoldingGraph, core_graph, hall_complete
from .tower import IceTower, abelianize, normalize_chain
from .words import Word

log = logging.getLogger(__name__)

Vec = tuple[int, ...]


def _unit(n: int, k: int, s: int = 1) -> Vec:
    v = [0] * n
    v[k] = s
    return tuple(v)


def _add(x: Sequence[int], y: Sequence[int]) -> Vec:
    return tuple(a + b for a, b in zip(x, y))


def _sub(x: Sequence[int], y: Sequence[int]) -> Vec:
    return tuple(a - b for a, b in zip(x, y))


def _scale(x: Sequence[int], m: int) -> Vec:
    return tuple(m * a for a in x)


# --- the ICE space -------------------------------------------------------

@dataclass(frozen=True)
class IceSpace:
    """Graph of spaces: vertex 0 is the bouquet, vertex i+1 the torus of extension i."""

    tower: IceTower
    vertices: tuple[str, ...]
    edges: tuple[tuple[int, int, Word], ...]

    def torus_rank(self, i: int) -> int:
        return 1 + len(self.tower.extensions[i].gens)

    def to_dot(self) -> str:
        lines = ["graph X {"]
        for k, kind in enumerate(self.vertices):
            shape = "circle" if kind == "Y" else "box"
            label = "Y " + " ".join(self.tower.base) if kind == "Y" else kind
            lines.append(f'  v{k} [shape={shape}, label="{label}"];')
        for a, b, root in self.edges:
            lines.append(f'  v{a} -- v{b} [label="{root}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def ice_space(t: IceTower) -> IceSpace:
    if normalize_chain(t) != t:
        raise ValidationError("ice_space needs a normalized tower")
    vertices = ["Y"] + [f"T{i}" for i in range(len(t.extensions))]
    edges = tuple((0, i + 1, e.root) for i, e in enumerate(t.extensions))
    return IceSpace(t, tuple(vertices), edges)


# --- immutable pre-cover snapshots ----------------------------------------

@dataclass(frozen=True)
class TPiece:
    ext: int
    lattice: Lattice

    @property
    def degree(self) -> int | None:
        return self.lattice.index


@dataclass(frozen=True, order=True)
class Attachment:
    y: int
    piece: int
    point: Vec


@dataclass(frozen=True)
class PreCover:
    tower: IceTower
    stage: str
    n_y: int
    y_edges: tuple[tuple[int, str, int], ...]
    pieces: tuple[TPiece, ...]
    attachments: tuple[Attachment, ...]
    protected_y: frozenset = frozenset()
    protected_t: tuple[tuple[int, Vec], ...] = ()

    def y_components(self) -> list[list[int]]:
        adj: dict[int, set[int]] = {v: set() for v in range(self.n_y)}
        for v, _, w in self.y_edges:
            adj[v].add(w)
            adj[w].add(v)
        seen: set[int] = set()
        comps = []
        for v in range(self.n_y):
            if v in seen:
                continue
            comp, queue = [], deque([v])
            seen.add(v)
            while queue:
                x = queue.popleft()
                comp.append(x)
                for z in sorted(adj[x]):
                    if z not in seen:
                        seen.add(z)
                        queue.append(z)
            comps.append(sorted(comp))
        return comps

    def y_is_complete(self) -> bool:
        outs, ins = set(), set()
        for v, x, w in self.y_edges:
            outs.add((v, x))
            ins.add((w, x))
        letters = self.tower.base
        return all((v, x) in outs and (v, x) in ins for v in range(self.n_y) for x in letters)

    def is_finite_sheeted(self) -> bool:
        return self.y_is_complete() and all(p.lattice.is_full_rank for p in self.pieces)

    def is_complete(self) -> bool:
        if not self.is_finite_sheeted():
            return False
        try:
            assemble(self)
        except ValidationError:
            return False
        return True

    def degrees(self) -> dict[str, list]:
        return {"Y": [len(c) for c in self.y_components()],
                "T": [p.degree for p in self.pieces]}

    def to_text(self) -> str:
        lines = [f"stage {self.stage}", f"y_vertices {self.n_y}"]
        for k, comp in enumerate(self.y_components()):
            lines.append(f"ypiece {k} vertices={len(comp)} first={comp[0]}")
        for v, x, w in self.y_edges:
            lines.append(f"yedge {v} {x} {w}")
        for k, p in enumerate(self.pieces):
            rows = " / ".join(" ".join(map(str, r)) for r in p.lattice.basis) or "0"
            lines.append(f"tpiece {k} ext={p.ext} degree={p.degree if p.degree else 'inf'} lattice={rows}")
        for a in self.attachments:
            lines.append(f"attach y={a.y} tpiece={a.piece} point={' '.join(map(str, a.point))}")
        return "\n".join(lines) + "\n"

    def to_dot(self, name: str = "P") -> str:
        lines = [f"digraph {name} {{"]
        for v in range(self.n_y):
            shape = "doublecircle" if v == 0 else "circle"
            style = ", style=bold" if v in self.protected_y else ""
            lines.append(f'  y{v} [shape={shape}{style}, label="{v}"];')
        for v, x, w in self.y_edges:
            lines.append(f'  y{v} -> y{w} [label="{x}"];')
        for k, p in enumerate(self.pieces):
            rows = ";".join(",".join(map(str, r)) for r in p.lattice.basis) or "0"
            lines.append(f'  t{k} [shape=box, label="T{p.ext} [{rows}]"];')
        for a in self.attachments:
            lines.append(f'  y{a.y} -> t{a.piece} [style=dashed, arrowhead=none, '
                         f'label="({",".join(map(str, a.point))})"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


# --- mutable builder --------------------------------------------------------

class _Builder:
    """Working state for the folding construction."""

    def __init__(self, tower: IceTower):
        self.tower = tower
        self.exts = tower.extensions
        self.dims = [1 + len(e.gens) for e in self.exts]
        self.Y = FoldingGraph()
        self.base = self.Y.new_vertex()
        self.lat: dict[int, Lattice] = {}
        self.piece_ext: dict[int, int] = {}
        self._next_piece = 0
        self.edges: list[list] = []
        self.prot_y: set[int] = set()
        self.prot_t: list[list] = []

    # construction helpers

    def new_piece(self, i: int, lattice: Lattice | None = None) -> int:
        q = self._next_piece
        self._next_piece += 1
        self.lat[q] = lattice or Lattice.from_rows([], self.dims[i])
        self.piece_ext[q] = i
        return q

    def e0(self, q: int) -> Vec:
        return _unit(self.dims[self.piece_ext[q]], 0)

    def tword(self, i: int, v: Sequence[int]) -> Word:
        ext = self.exts[i]
        w = ext.root ** v[0]
        for t, k in zip(ext.gens, v[1:]):
            w = w * Word.gen(t, k) if k else w
        return w

    def draw(self, word: Word, protect: bool = False) -> int:
        """Lay ``word`` out from the base with fresh pieces; returns the end Y vertex."""
        y, q, c = self.base, None, None
        if protect:
            self.prot_y.add(y)
        for name, sign in word:
            loc = self.tower.ext_of(name)
            if q is not None and (loc is None or loc[0] != self.piece_ext[q]):
                y = self.Y.new_vertex()
                self.edges.append([y, q, c])
                q = None
                if protect:
                    self.prot_y.add(y)
            if loc is None:
                y = self.Y.step_letter(y, (name, sign), True)
                if protect:
                    self.prot_y.add(y)
                continue
            i, k = loc
            if q is None:
                q = self.new_piece(i)
                c = _unit(self.dims[i], 0, 0)
                self.edges.append([y, q, c])
                if protect:
                    self.prot_t.append([q, c])
            c = _add(c, _unit(self.dims[i], 1 + k, sign))
            if protect:
                self.prot_t.append([q, c])
        if q is not None:
            y = self.Y.new_vertex()
            self.edges.append([y, q, c])
            if protect:
                self.prot_y.add(y)
        return y

    # u-lines

    def line(self, y: int, i: int):
        """``(key, offset, length)`` of the u_i-line through ``y``.

        ``key`` names the line, ``offset`` is the number of u-steps from the
        line's reference vertex to ``y``; ``length`` is None for open lines.
        """
        u = self.exts[i].root
        y = self.Y.find(y)
        pos = {y: 0}
        cur, k = y, 0
        while True:
            nxt = self.Y.trace(cur, u)
            if nxt is None:
                break
            k += 1
            if nxt == y:
                rep = min(pos)
                return ("c", i, rep), (-pos[rep]) % k, k
            assert nxt not in pos, "u-steps must be injective in a folded graph"
            pos[nxt] = k
            cur = nxt
        cur, k = y, 0
        ui = u.inverse()
        while True:
            prv = self.Y.trace(cur, ui)
            if prv is None:
                break
            k += 1
            cur = prv
        return ("l", i, cur), k, None

    # folding

    def normalize(self) -> None:
        seen = set()
        edges = []
        for y, q, c in self.edges:
            e = [self.Y.find(y), q, self.lat[q].reduce(c)]
            key = (e[0], e[1], e[2])
            if key not in seen:
                seen.add(key)
                edges.append(e)
        self.edges = edges
        for p in self.prot_t:
            p[1] = self.lat[p[0]].reduce(p[1])

    def _merge_pieces(self, keep: int, gone: int, shift: Vec) -> None:
        for e in self.edges:
            if e[1] == gone:
                e[1], e[2] = keep, _add(e[2], shift)
        for p in self.prot_t:
            if p[0] == gone:
                p[0], p[1] = keep, _add(p[1], shift)
        self.lat[keep] = self.lat[keep] + self.lat.pop(gone)
        del self.piece_ext[gone]

    def _fold_step(self) -> bool:
        self.normalize()
        # degrees must agree across every attachment
        for y, q, c in self.edges:
            i, L, e0 = self.piece_ext[q], self.lat[q], self.e0(q)
            m = self.line(y, i)[2]
            mt = L.order_of(e0)
            if m is not None and mt != m and not L.contains(_scale(e0, m)):
                self.lat[q] = L.with_vectors(_scale(e0, m))
                return True
            if mt is not None and m != mt:
                z = self.Y.trace(y, self.exts[i].root ** mt, create=True)
                self.Y.union(z, y)
                return True
        # one attachment per circle of a T-piece
        circles: dict[tuple, int] = {}
        for idx, (y, q, c) in enumerate(self.edges):
            e0 = self.e0(q)
            key = (q, self.lat[q].with_vectors(e0).reduce(c))
            if key in circles:
                y1, _, c1 = self.edges[circles[key]]
                j = self.lat[q].shift_along(_sub(c, c1), e0)
                z = self.Y.trace(y1, self.exts[self.piece_ext[q]].root ** j, create=True)
                self.Y.union(z, y)
                del self.edges[idx]
                return True
            circles[key] = idx
        # one attachment per u-line
        lines: dict[tuple, tuple[int, int]] = {}
        for idx, (y, q, c) in enumerate(self.edges):
            key, off, m = self.line(y, self.piece_ext[q])
            if key not in lines:
                lines[key] = (idx, off)
                continue
            idx1, off1 = lines[key]
            y1, q1, c1 = self.edges[idx1]
            j = off - off1
            if m:
                j %= m
            target = _add(c1, _scale(self.e0(q), j))
            if q == q1:
                v = _sub(c, target)
                if not self.lat[q].contains(v):
                    self.lat[q] = self.lat[q].with_vectors(v)
                    return True
            else:
                self._merge_pieces(q1, q, _sub(target, c))
                return True
        return False

    def fold(self) -> None:
        while self._fold_step():
            pass
        self.normalize()

    # trimming

    def components(self) -> list[list[int]]:
        seen: set[int] = set()
        comps = []
        for v in sorted(self.Y.vertices()):
            if v in seen:
                continue
            comp, queue = [], deque([v])
            seen.add(v)
            while queue:
                x = queue.popleft()
                comp.append(x)
                for table in (self.Y.out, self.Y.inn):
                    for w in table[x].values():
                        w = self.Y.find(w)
                        if w not in seen:
                            seen.add(w)
                            queue.append(w)
            comps.append(sorted(comp))
        return comps

    def _edge_count(self, comp: Sequence[int]) -> int:
        return sum(len(self.Y.out[v]) for v in comp)

    def trim(self) -> None:
        changed = True
        while changed:
            changed = False
            self.normalize()
            base = self.Y.find(self.base)
            prot = {self.Y.find(v) for v in self.prot_y}
            keep = {base} | prot | {e[0] for e in self.edges}
            for v in self.Y.vertices():
                if v not in keep and self.Y.degree(v) <= 1:
                    self.Y.remove_vertex(v)
                    changed = True
            if changed:
                continue
            for comp in self.components():
                cs = set(comp)
                if base in cs or cs & prot:
                    continue
                es = [e for e in self.edges if e[0] in cs]
                if len(es) > 1:
                    continue
                if es:
                    betti = self._edge_count(comp) - len(comp) + 1
                    m = self.line(es[0][0], self.piece_ext[es[0][1]])[2]
                    if not ((betti == 1 and m is not None) or (betti == 0 and m is None)):
                        continue
                    self.edges.remove(es[0])
                for v in comp:
                    self.Y.remove_vertex(v)
                changed = True
            if changed:
                continue
            guarded = {p[0] for p in self.prot_t}
            for q in sorted(self.lat):
                if q in guarded:
                    continue
                es = [e for e in self.edges if e[1] == q]
                along_root = all(not any(r[1:]) for r in self.lat[q].basis)
                if not es or (len(es) == 1 and along_root):
                    for e in es:
                        self.edges.remove(e)
                    del self.lat[q]
                    del self.piece_ext[q]
                    changed = True

    # snapshots

    def snapshot(self, stage: str) -> PreCover:
        self.normalize()
        verts = sorted(self.Y.vertices())
        vid = {v: k for k, v in enumerate(verts)}
        qid = {q: k for k, q in enumerate(sorted(self.lat))}
        y_edges = []
        for v in verts:
            for x, w in self.Y.out[v].items():
                y_edges.append((vid[v], x, vid[self.Y.find(w)]))
        order = {x: k for k, x in enumerate(self.tower.base)}
        y_edges.sort(key=lambda e: (e[0], order[e[1]], e[2]))
        pieces = tuple(TPiece(self.piece_ext[q], self.lat[q]) for q in sorted(self.lat))
        atts = sorted(Attachment(vid[y], qid[q], tuple(c)) for y, q, c in self.edges)
        prot_y = frozenset(vid[self.Y.find(v)] for v in self.prot_y if self.Y.find(v) in vid)
        prot_t = tuple(sorted({(qid[q], tuple(c)) for q, c in self.prot_t if q in qid}))
        return PreCover(self.tower, stage, len(verts), tuple(y_edges), pieces, tuple(atts), prot_y, prot_t)

    @classmethod
    def from_precover(cls, p: PreCover) -> "_Builder":
        b = cls(p.tower)
        for _ in range(p.n_y - 1):
            b.Y.new_vertex()
        for v, x, w in p.y_edges:
            b.Y.add_edge(v, x, w)
        for piece in p.pieces:
            b.new_piece(piece.ext, piece.lattice)
        b.edges = [[a.y, a.piece, a.point] for a in p.attachments]
        b.prot_y = set(p.protected_y)
        b.prot_t = [[q, c] for q, c in p.protected_t]
        return b

    # words for loops

    def edge_set(self) -> set[tuple[int, str, int]]:
        return {(v, x, self.Y.find(w)) for v in self.Y.vertices() for x, w in self.Y.out[v].items()}

    def spanning_tree(self, priority) -> set[tuple[int, str, int]]:
        """Kruskal over all Y edges, cheapest ``priority(edge)`` first."""
        parent = {v: v for v in self.Y.vertices()}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        tree = set()
        for e in sorted(self.edge_set(), key=lambda e: (priority(e), e)):
            a, b = find(e[0]), find(e[2])
            if a != b:
                parent[max(a, b)] = min(a, b)
                tree.add(e)
        return tree

    def paths(self, tree: set[tuple[int, str, int]]) -> dict[int, Word]:
        """Words from the base to every Y vertex.

        Inside a Y-piece the path follows ``tree``; a piece is entered once,
        through the first attachment reached.
        """
        comp_of = {}
        for k, comp in enumerate(self.components()):
            for v in comp:
                comp_of[v] = k
        base = self.Y.find(self.base)
        P = {base: Word()}
        entered = {comp_of[base]}
        adj: dict[int, list] = {v: [] for v in comp_of}
        for v, x, w in sorted(tree):
            adj[v].append((w, Word(((x, 1),))))
            adj[w].append((v, Word(((x, -1),))))
        by_piece: dict[int, list] = {}
        for y, q, c in sorted(self.edges, key=lambda e: (e[1], e[0], e[2])):
            by_piece.setdefault(q, []).append((y, c))
        att_at: dict[int, list] = {}
        for q, lst in by_piece.items():
            for y, c in lst:
                att_at.setdefault(y, []).append((q, c))
        queue = deque([base])
        while queue:
            v = queue.popleft()
            for w, letter in adj[v]:
                if w not in P:
                    P[w] = P[v] * letter
                    queue.append(w)
            for q, c in att_at.get(v, []):
                i = self.piece_ext[q]
                for y2, c2 in by_piece[q]:
                    if comp_of[y2] not in entered:
                        entered.add(comp_of[y2])
                        P[y2] = P[v] * self.tword(i, _sub(c2, c))
                        queue.append(y2)
        return P


# --- pipeline stages ----------------------------------------------------------

def build_core_precover(X: IceSpace, gens: Sequence[Word], extra: Sequence[Word] = ()) -> PreCover:
    """Folded pre-cover whose fundamental group is ``<gens>``, carrying ``extra`` as marked paths.

    Raises :class:`MemberError` when the path of an ``extra`` word closes up,
    i.e. the word lies in the subgroup.
    """
    if not gens:
        raise ValidationError("subgroup needs at least one generator")
    b = _Builder(X.tower)
    for h in gens:
        end = b.draw(h)
        b.Y.union(end, b.base)
        b.fold()
    ends = []
    for w in extra:
        ends.append(b.draw(w, protect=True))
        b.fold()
    for w, end in zip(extra, ends):
        if b.Y.find(end) == b.Y.find(b.base):
            raise MemberError(f"{w} lies in the subgroup: its path closes at the base", witness=w)
    b.trim()
    return b.snapshot("core")


class StageResult(NamedTuple):
    cover: PreCover
    moves: list[Move]


def _loop(b: _Builder, P: dict[int, Word], y: int, i: int, v: Sequence[int]) -> Word:
    return P[y] * b.tword(i, v) * P[y].inverse()


def _edge_word(P: dict[int, Word], e: tuple[int, str, int]) -> Word:
    v, x, w = e
    return P[v] * Word(((x, 1),)) * P[w].inverse()


def _torus_moves(old: Lattice, new: Lattice, loop) -> list[Move]:
    comp = complement_basis(old, new)
    if old.rank == 0:
        moves: list[Move] = [FreeProduct(("",), (loop(comp[0]),))]
        if comp[1:]:
            moves.append(CentExt(loop(comp[0]), ("",) * len(comp[1:]), tuple(loop(v) for v in comp[1:])))
        return moves
    return [CentExt(loop(old.basis[0]), ("",) * len(comp), tuple(loop(v) for v in comp))]


def _points_distinct(L: Lattice, points: Sequence[Vec]) -> bool:
    reduced = [L.reduce(p) for p in points]
    return len(set(reduced)) == len(reduced)


def finite_sheet(p: PreCover, d: int, choices: dict | None = None, degree_cap: int = 64) -> StageResult:
    """Replace every vertex space by a finite cover.

    Open u-lines carrying an attachment are closed into degree-``d`` cycles,
    Y-pieces are completed (after any loops chosen in ``choices[("Y", k)]``),
    and each infinite T-piece lattice is enlarged to a finite-index one that
    keeps the existing circles and marked points apart.  Raises
    :class:`SearchExhausted` when ``d`` or the cap do not allow this.
    """
    choices = choices or {}
    b = _Builder.from_precover(p)
    old_vertices = list(range(p.n_y))
    old_edges = b.edge_set()
    comps = b.components()
    for k, comp in enumerate(comps):
        for w in choices.get(("Y", k), []):
            b.Y.add_loop(comp[0], w)
    if len({b.Y.find(v) for v in old_vertices}) != len(old_vertices):
        raise SearchExhausted("chosen loops collapse the pre-cover")

    path_edges: set = set()
    closing: set = set()
    done: set = set()
    b.normalize()
    for y, q, c in sorted(b.edges, key=lambda e: (e[1], e[0])):
        i = b.piece_ext[q]
        key, _, m = b.line(y, i)
        if m is not None or key in done:
            continue
        done.add(key)
        u = b.exts[i].root
        start = key[2]
        turns, end = 0, start
        while True:
            nxt = b.Y.trace(end, u)
            if nxt is None:
                break
            turns, end = turns + 1, nxt
        if turns >= d:
            raise SearchExhausted(f"degree {d} is below an elevation already spanning {turns} turns")
        before = b.edge_set()
        letters = (u ** (d - turns)).letters
        cur = end
        for letter in letters[:-1]:
            cur = b.Y.step_letter(cur, letter, True)
        x, sign = letters[-1]
        src, dst = (cur, start) if sign > 0 else (start, cur)
        b.Y.add_edge(src, x, dst)
        if len({b.Y.find(v) for v in old_vertices}) != len(old_vertices):
            raise SearchExhausted(f"closing a line at degree {d} folds the pre-cover")
        if b.line(start, i)[2] != d:
            raise SearchExhausted(f"line through {start} does not close at degree {d}")
        close_edge = (b.Y.find(src), x, b.Y.find(dst))
        closing.add(close_edge)
        path_edges |= b.edge_set() - before - {close_edge}

    b.Y.close_chains(b.tower.base)
    b.normalize()

    changes = []
    for k, q in enumerate(sorted(b.lat)):
        i, L = b.piece_ext[q], b.lat[q]
        e0 = b.e0(q)
        atts = [(y, c) for y, qq, c in b.edges if qq == q]
        need = {b.line(y, i)[2] for y, _ in atts}
        if None in need or len(need) != 1:
            raise SearchExhausted(f"attachments of T-piece {k} demand degrees {sorted(need, key=str)}")
        m = need.pop()
        if L.is_full_rank:
            if L.order_of(e0) != m:
                raise SearchExhausted(f"T-piece {k} has root order {L.order_of(e0)}, Y side needs {m}")
            continue
        marked = [c for qq, c in b.prot_t if qq == q]
        marked = sorted({L.reduce(c) for c in marked})
        n = b.dims[i]

        def fits(cand: Lattice) -> bool:
            if not cand.contains_lattice(L) or not is_saturated_in(L, cand):
                return False
            if cand.order_of(e0) != m:
                return False
            circles = cand.with_vectors(e0)
            return _points_distinct(circles, [c for _, c in atts]) and _points_distinct(cand, marked)

        if ("T", k) in choices:
            cand = Lattice.from_rows(choices[("T", k)], n)
            if not (cand.is_full_rank and fits(cand)):
                raise SearchExhausted(f"chosen lattice for T-piece {k} is not admissible")
            found = cand
        else:
            found = None
            for det in range(m, degree_cap + 1, m):
                found = next((c for c in hnf_with_determinant(n, det) if fits(c)), None)
                if found is not None:
                    break
            if found is None:
                raise SearchExhausted(f"no admissible torus cover for T-piece {k} up to degree {degree_cap}")
        b.lat[q] = found
        changes.append((q, L, found))
    b.normalize()

    new_vertices = set(b.Y.vertices()) - set(old_vertices)

    def priority(e):
        if e in old_edges:
            return 0
        if e in path_edges:
            return 1
        return 3 if e in closing else 2

    tree = b.spanning_tree(priority)
    P = b.paths(tree)
    moves: list[Move] = []
    for q, L, Lp in changes:
        y, c = min((y, c) for y, qq, c in b.edges if qq == q)
        i = b.piece_ext[q]
        moves += _torus_moves(L, Lp, lambda v, y=y, i=i: _loop(b, P, y, i, v))
    for comp in b.components():
        fresh = [e for e in sorted(b.edge_set() - tree) if e[0] in set(comp)
                 and priority(e) in (1, 2)]
        if fresh:
            moves.append(FreeProduct(("",) * len(fresh), tuple(_edge_word(P, e) for e in fresh)))
    log.debug("finite sheet at d=%d added %d vertices", d, len(new_vertices))
    return StageResult(b.snapshot("finite"), moves)


def _circle_points(L: Lattice, e0: Vec) -> list[Vec]:
    """One representative point per e0-circle of a finite torus cover."""
    diag = [r[j] for r, j in zip(L.basis, L.pivots)]
    circles = L.with_vectors(e0)
    reps = {}
    box = [()]
    for dj in diag:
        box = [p + (x,) for p in box for x in range(dj)]
    for pt in box:
        reps.setdefault(circles.reduce(pt), pt)
    return sorted(reps)


def complete(p: PreCover) -> StageResult:
    """Cap every hanging elevation so the pre-cover becomes a cover.

    Hanging T circles get a Y-piece built from the root cycle (a free-product
    move); hanging u-cycles in Y get a single-elevation torus (a centralizer
    extension).
    """
    if not p.is_finite_sheeted():
        raise ValidationError("complete needs a finite-sheeted pre-cover")
    b = _Builder.from_precover(p)
    b.normalize()
    alphabet = b.tower.base
    old_edges = b.edge_set()
    cycle_edges: set = set()
    closing: set = set()
    new_y: list[int] = []
    for q in sorted(b.lat):
        i, L, e0 = b.piece_ext[q], b.lat[q], b.e0(q)
        circles = L.with_vectors(e0)
        taken = {circles.reduce(c) for y, qq, c in b.edges if qq == q}
        m = L.order_of(e0)
        for pt in _circle_points(L, e0):
            if pt in taken:
                continue
            before = b.edge_set()
            z = b.Y.new_vertex()
            b.Y.add_loop(z, b.exts[i].root ** m)
            root = b.exts[i].root ** m
            last_x, last_s = root.letters[-1]
            prev = b.Y.trace(z, Word(root.letters[:-1]))
            close_edge = (prev, last_x, z) if last_s > 0 else (z, last_x, prev)
            closing.add(close_edge)
            cycle_edges |= b.edge_set() - before - {close_edge}
            b.edges.append([z, q, pt])
            new_y.append(z)
    b.Y.close_chains(alphabet)
    b.normalize()

    tori = []
    for i in range(len(b.exts)):
        attached = {b.line(y, i)[0] for y, q, _ in b.edges if b.piece_ext[q] == i}
        for v in sorted(b.Y.vertices()):
            key, _, m = b.line(v, i)
            if key in attached:
                continue
            attached.add(key)
            n = b.dims[i]
            spec = torus_cover_single_elevation(n, _unit(n, 0), m)
            q = b.new_piece(i, spec.lattice)
            b.edges.append([v, q, _unit(n, 0, 0)])
            tori.append((v, i, m, spec))
    b.normalize()

    def priority(e):
        if e in old_edges:
            return 0
        if e in cycle_edges:
            return 1
        return 3 if e in closing else 2

    tree = b.spanning_tree(priority)
    P = b.paths(tree)
    moves: list[Move] = []
    non_tree = b.edge_set() - tree
    for comp in b.components():
        cs = set(comp)
        if not cs & set(new_y):
            continue
        fresh = [e for e in sorted(non_tree) if e[0] in cs and priority(e) in (1, 2)]
        if fresh:
            moves.append(FreeProduct(("",) * len(fresh), tuple(_edge_word(P, e) for e in fresh)))
    for v, i, m, spec in tori:
        n = b.dims[i]
        sub = Lattice.from_rows([_unit(n, 0, m)], n)
        comp = complement_basis(sub, spec.lattice)
        root = _loop(b, P, v, i, _unit(n, 0, m))
        moves.append(CentExt(root, ("",) * len(comp), tuple(_loop(b, P, v, i, c) for c in comp)))
    return StageResult(b.snapshot("complete"), moves)


# --- finished covers ------------------------------------------------------------

@dataclass(frozen=True)
class CoverAction:
    """Right action of the generators on the points of a finite cover."""

    n: int
    perms: dict

    def act(self, point: int, word: Word) -> int:
        for name, sign in word:
            perm = self.perms[name]
            point = perm[point] if sign > 0 else perm.index(point)
        return point

    def contains(self, word: Word) -> bool:
        return self.act(0, word) == 0

    def is_transitive(self) -> bool:
        seen, queue = {0}, deque([0])
        while queue:
            v = queue.popleft()
            for perm in self.perms.values():
                for w in (perm[v], perm.index(v)):
                    if w not in seen:
                        seen.add(w)
                        queue.append(w)
        return len(seen) == self.n

    def relation_failures(self, tower: IceTower) -> list[str]:
        out = []
        for e in tower.extensions:
            for t in e.gens:
                tw = Word.gen(t)
                comm = e.root * tw * e.root.inverse() * tw.inverse()
                if any(self.act(v, comm) != v for v in range(self.n)):
                    out.append(f"[{e.root},{t}] acts nontrivially")
            for s, t in zip(e.gens, e.gens[1:]):
                comm = Word.parse(f"{s}.{t}.{s}^-1.{t}^-1")
                if any(self.act(v, comm) != v for v in range(self.n)):
                    out.append(f"[{s},{t}] acts nontrivially")
        return out

    def to_text(self) -> str:
        return "".join(f"perm {x} {' '.join(map(str, p))}\n" for x, p in self.perms.items())


def assemble(p: PreCover) -> CoverAction:
    """Permutation action of the tower's generators on the Y vertices."""
    b = _Builder.from_precover(p)
    b.normalize()
    verts = sorted(b.Y.vertices())
    perms = {}
    for x in b.tower.base:
        img = [b.Y.step(v, x, 1) for v in verts]
        if None in img:
            raise ValidationError(f"letter {x} is not a permutation of the Y vertices")
        perms[x] = tuple(img)
    for i, ext in enumerate(b.exts):
        u = ext.root
        point_of: dict[int, tuple[int, Vec]] = {}
        at_circle: dict[tuple, tuple[int, Vec]] = {}
        for y, q, c in b.edges:
            if b.piece_ext[q] != i:
                continue
            e0 = b.e0(q)
            m = b.line(y, i)[2]
            if m is None or m != b.lat[q].order_of(e0):
                raise ValidationError("attachment degrees do not match")
            at_circle[(q, b.lat[q].with_vectors(e0).reduce(c))] = (y, c)
            cur = y
            for j in range(m):
                if cur in point_of:
                    raise ValidationError(f"vertex {cur} lies on two attached circles")
                point_of[cur] = (q, _add(c, _scale(e0, j)))
                cur = b.Y.trace(cur, u)
        if len(point_of) != len(verts):
            raise ValidationError(f"some u-cycles of extension {i} hang free")
        for k, t in enumerate(ext.gens):
            img = []
            for v in verts:
                q, pt = point_of[v]
                pt = _add(pt, _unit(len(pt), 1 + k))
                e0 = b.e0(q)
                key = (q, b.lat[q].with_vectors(e0).reduce(pt))
                if key not in at_circle:
                    raise ValidationError(f"T-piece circle without attachment reached by {t}")
                y1, c1 = at_circle[key]
                j = b.lat[q].shift_along(_sub(pt, c1), e0)
                img.append(b.Y.trace(y1, u ** j))
            perms[t] = tuple(img)
    return CoverAction(len(verts), perms)


# --- separation --------------------------------------------------------------

def _name_moves(moves: Sequence[Move], start: int = 1) -> list[Move]:
    out, k = [], start
    for m in moves:
        names = tuple(f"c{k + j}" for j in range(len(m.values)))
        k += len(names)
        if isinstance(m, FreeProduct):
            out.append(FreeProduct(names, m.values))
        else:
            out.append(CentExt(m.root, names, m.values))
    return out


@dataclass
class SeparationCertificate:
    """Finite-index K with H <= K and g outside K, plus the chain from H to K."""

    tower: IceTower
    subgroup: tuple[Word, ...]
    element: Word
    index: int
    chain: GiceChain
    route: str
    action: CoverAction | None = None
    lattice: Lattice | None = None
    stages: dict = field(default_factory=dict)
    degree: int | None = None
    choices: dict = field(default_factory=dict)
    degree_cap: int = 64

    def contains(self, w: Word) -> bool:
        if self.lattice is not None:
            return self.lattice.contains(abelianize(self.tower, w))
        return self.action.contains(w)

    def check(self) -> list[str]:
        """Self-verification; returns the list of failed checks (empty if sound)."""
        fails = []
        for h in self.subgroup:
            if not self.contains(h):
                fails.append(f"subgroup generator {h} not in K")
        if self.contains(self.element):
            fails.append(f"{self.element} lies in K")
        ok, problems = check_chain(self.chain)
        fails += problems
        for name, value in self.chain.values().items():
            if not self.contains(value):
                fails.append(f"chain generator {name}={value} not in K")
        for m in self.chain.moves:
            if isinstance(m, CentExt) and not self.contains(m.root):
                fails.append(f"root {m.root} not in K")
        if self.action is not None:
            if self.action.n != self.index:
                fails.append("index differs from the number of cover points")
            if not self.action.is_transitive():
                fails.append("cover is not connected")
            fails += self.action.relation_failures(self.tower)
        final = self.stages.get("complete")
        if final is not None:
            if sum(len(c) for c in final.y_components()) != self.index:
                fails.append("Y-piece degrees do not add up to the index")
            for i in range(len(self.tower.extensions)):
                total = sum(p.degree for p in final.pieces if p.ext == i)
                if total != self.index:
                    fails.append(f"T{i} degrees add up to {total}, not {self.index}")
        elif self.lattice is not None and self.lattice.index != self.index:
            fails.append("lattice index differs from the reported index")
        return fails

    def replay(self) -> "SeparationCertificate":
        return separate(self.tower, self.subgroup, self.element, degree_cap=self.degree_cap,
                        choices=self.choices)

    def report(self) -> str:
        lines = ["# separation certificate", f"route {self.route}",
                 "subgroup " + ", ".join(map(str, self.subgroup)),
                 f"element {self.element}", f"index {self.index}"]
        if self.degree is not None:
            lines.append(f"elevation_degree {self.degree}")
        lines.append("shape " + " ".join(f"{k}:{n}" for k, n in self.chain.shape()))
        lines.append("## chain")
        for name, value in zip(self.chain.base, self.chain.base_values):
            lines.append(f"base {name} = {value}")
        for m in self.chain.moves:
            lines.append(str(m))
            for name, value in zip(m.gens, m.values):
                lines.append(f"  {name} = {value}")
        if self.action is not None:
            lines.append("## cover")
            lines.append(self.action.to_text().rstrip())
        if self.lattice is not None:
            lines.append("## lattice")
            lines.append(self.lattice.to_text().rstrip())
        for name in ("core", "finite", "complete"):
            if name in self.stages:
                lines.append(f"## {name}")
                lines.append(self.stages[name].to_text().rstrip())
        lines.append("## self-check")
        fails = self.check()
        lines += [f"FAIL {f}" for f in fails] or ["PASS"]
        return "\n".join(lines) + "\n"

    def write_dot(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {"X.dot": ice_space(self.tower).to_dot()}
        for stage, fname in (("core", "Xprime.dot"), ("finite", "Xbar.dot"), ("complete", "Xhat.dot")):
            if stage in self.stages:
                files[fname] = self.stages[stage].to_dot(fname[:-4])
        out = []
        for fname, text in files.items():
            path = directory / fname
            path.write_text(text)
            out.append(path)
        return out


def _graph_precover(t: IceTower, graph, stage: str) -> PreCover:
    return PreCover(t, stage, graph.n, graph.edges, (), ())


def _separate_free(t: IceTower, H: Sequence[Word], g: Word) -> SeparationCertificate:
    core = core_graph(H, t.base)
    done = hall_complete(core, g, t.base)
    cover = done.cover
    action = CoverAction(cover.n, {x: cover.permutation(x) for x in t.base})
    base = tuple(f"h{k}" for k in range(1, len(H) + 1))
    moves = _name_moves([FreeProduct(("",) * len(done.free_factor), tuple(done.free_factor))]
                        if done.free_factor else [])
    chain = GiceChain(base, tuple(H), moves, ambient=True)
    stages = {"core": _graph_precover(t, core, "core"), "complete": _graph_precover(t, cover, "complete")}
    return SeparationCertificate(t, tuple(H), g, cover.n, chain, "free", action=action, stages=stages)


def _separate_abelian_tower(t: IceTower, H: Sequence[Word], g: Word) -> SeparationCertificate:
    n = len(t.alphabet)
    HL = Lattice.from_rows([abelianize(t, h) for h in H], n)
    K = separate_abelian(n, HL, abelianize(t, g))
    names = t.alphabet

    def word(v):
        return Word(tuple((x, 1 if e > 0 else -1) for x, e in zip(names, v) for _ in range(abs(e))))

    base = tuple(f"h{k}" for k in range(1, len(H) + 1))
    moves: list[Move] = []
    if HL.rank == 0:
        comp = list(K.basis)
        moves.append(FreeProduct(("",), (word(comp[0]),)))
        if comp[1:]:
            moves.append(CentExt(word(comp[0]), ("",) * len(comp[1:]), tuple(word(v) for v in comp[1:])))
    else:
        comp = complement_basis(HL, K)
        if comp:
            moves.append(CentExt(word(HL.basis[0]), ("",) * len(comp), tuple(word(v) for v in comp)))
    chain = GiceChain(base, tuple(H), _name_moves(moves), ambient=True)
    return SeparationCertificate(t, tuple(H), g, K.index, chain, "abelian", lattice=K)


def separate(tower: IceTower, H: Sequence[Word], g: Word, degree_cap: int = 64,
             choices: dict | None = None) -> SeparationCertificate:
    """Finite-index K >= H avoiding g, with an H-GICE chain.

    Free towers go through Hall completion, free abelian ones through the
    lattice routine, and height-1 towers through the pre-cover pipeline
    (smallest workable elevation degree first).  Raises
    :class:`MemberError` if g turns out to lie in H.
    """
    t = normalize_chain(tower)
    H = [Word.parse(str(h), t.alphabet) for h in H]
    g = Word.parse(str(g), t.alphabet)
    choices = dict(choices or {})
    if t.height == 0:
        return _separate_free(t, H, g)
    if len(t.base) == 1 and t.height == 1:
        return _separate_abelian_tower(t, H, g)
    if t.height > 1:
        raise ValidationError(f"tower has height {t.height}; the pre-cover pipeline handles height <= 1 "
                              "(every extension root must lie in the free base)")
    for e in t.extensions:
        if not e.root.is_cyclically_reduced():
            raise ValidationError(f"root {e.root} is not cyclically reduced; "
                                  "conjugate the presentation so that it is")
    X = ice_space(t)
    core = build_core_precover(X, H, [g])
    last: Exception | None = None
    for d in range(1, degree_cap + 1):
        try:
            sheet = finite_sheet(core, d, choices, degree_cap)
        except SearchExhausted as e:
            last = e
            continue
        done = complete(sheet.cover)
        action = assemble(done.cover)
        base = tuple(f"h{k}" for k in range(1, len(H) + 1))
        chain = GiceChain(base, tuple(H), _name_moves(list(sheet.moves) + list(done.moves)), ambient=True)
        cert = SeparationCertificate(t, tuple(H), g, action.n, chain, "tower", action=action,
                                     stages={"core": core, "finite": sheet.cover, "complete": done.cover},
                                     degree=d, choices=choices, degree_cap=degree_cap)
        fails = cert.check()
        if fails:
            raise ValidationError("certificate failed self-check: " + "; ".join(fails))
        log.info("separated %s with index %d (d=%d)", g, action.n, d)
        return cert
    raise SearchExhausted(f"no finite-sheeted pre-cover up to degree {degree_cap}: {last}")
