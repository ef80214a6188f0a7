"""Undirected networks over categorical levels and the machinery to split them.

Vertices are referred to by label in the public API and by position (an
integer in ``0..K-1`` following ``Network.vertices``) inside the compiled
kernels. The kernels work on a compressed adjacency (``indptr``/``indices``)
restricted to an active vertex subset, which is how the sampler calls them
when drawing decision rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numba as nb
import numpy as np

ZERO_TOL = 1e-10

# strategy codes shared with the sampler engine
UNIF, GS1, GS2, GS3, GS4 = 0, 1, 2, 3, 4
STRATEGIES = {"unif": UNIF, "gs1": GS1, "gs2": GS2, "gs3": GS3, "gs4": GS4}


class GraphError(ValueError):
    """Raised for malformed networks or impossible graph operations."""


@dataclass(frozen=True)
class Network:
    """Labeled simple undirected graph.

    Parameters
    ----------
    vertices : tuple
        Ordered vertex labels. The order fixes vertex positions.
    edges : frozenset of frozenset
        Unordered label pairs.
    """

    vertices: tuple
    edges: frozenset
    _index: dict = field(init=False, repr=False, compare=False)
    _indptr: np.ndarray = field(init=False, repr=False, compare=False)
    _indices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {v: i for i, v in enumerate(self.vertices)}
        if len(index) != len(self.vertices):
            raise GraphError("duplicate vertex labels")
        nbrs: list[list[int]] = [[] for _ in self.vertices]
        for e in self.edges:
            if len(e) != 2:
                raise GraphError(f"self-loop or malformed edge {set(e)!r}")
            u, v = tuple(e)
            if u not in index or v not in index:
                raise GraphError(f"edge {u!r}-{v!r} references an unknown vertex")
            nbrs[index[u]].append(index[v])
            nbrs[index[v]].append(index[u])
        indptr = np.zeros(len(self.vertices) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in nbrs])
        indices = np.array([j for a in nbrs for j in sorted(a)], dtype=np.int64)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_indptr", indptr)
        object.__setattr__(self, "_indices", indices)

    @classmethod
    def from_edges(cls, vertices: Sequence[Hashable], edges: Iterable[tuple]) -> "Network":
        pairs = set()
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at {u!r}")
            pairs.add(frozenset((u, v)))
        return cls(tuple(vertices), frozenset(pairs))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        return self._indptr, self._indices

    @property
    def adjacency(self) -> np.ndarray:
        k = self.n_vertices
        a = np.zeros((k, k))
        for i in range(k):
            a[i, self._indices[self._indptr[i] : self._indptr[i + 1]]] = 1.0
        return a

    def position(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise GraphError(f"unknown vertex {label!r}") from None

    def positions(self, labels: Iterable) -> np.ndarray:
        return np.array(sorted(self.position(v) for v in labels), dtype=np.int64)

    def neighbors(self, label) -> list:
        i = self.position(label)
        return [self.vertices[j] for j in self._indices[self._indptr[i] : self._indptr[i + 1]]]

    def is_connected(self) -> bool:
        return len(connected_components(self)) <= 1


@dataclass(frozen=True)
class SpanningTree:
    vertices: tuple
    tree_edges: frozenset

    def as_network(self) -> Network:
        return Network(self.vertices, self.tree_edges)


@dataclass(frozen=True)
class VertexBipartition:
    left: frozenset
    right: frozenset

    def __post_init__(self):
        if not self.left or not self.right:
            raise GraphError("bipartition sides must be non-empty")
        if self.left & self.right:
            raise GraphError("bipartition sides overlap")


# ---------------------------------------------------------------------------
# construction helpers


def path_graph(k: int) -> Network:
    return Network.from_edges(range(1, k + 1), [(i, i + 1) for i in range(1, k)])


def cycle_graph(k: int) -> Network:
    return Network.from_edges(range(1, k + 1), [(i, i % k + 1) for i in range(1, k + 1)])


def complete_graph(k: int) -> Network:
    return Network.from_edges(
        range(1, k + 1), [(i, j) for i in range(1, k + 1) for j in range(i + 1, k + 1)]
    )


def star_graph(k: int) -> Network:
    """Star with center 1 and leaves 2..k."""
    return Network.from_edges(range(1, k + 1), [(1, j) for j in range(2, k + 1)])


def grid_graph(rows: int, cols: int) -> Network:
    """Rook-adjacency lattice; vertex label ``r * cols + c``."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Network.from_edges(range(rows * cols), edges)


def load_network(path: str | Path, levels: Sequence[str] | None = None) -> Network:
    """Read a whitespace-separated edge list.

    When ``levels`` is given it fixes the vertex universe and its order;
    otherwise vertices appear in first-seen order.
    """
    edges = []
    seen: dict[str, None] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected two vertex labels, got {len(parts)}")
        edges.append((parts[0], parts[1]))
        seen.setdefault(parts[0])
        seen.setdefault(parts[1])
    vertices = list(levels) if levels is not None else list(seen)
    return Network.from_edges(vertices, edges)


def write_network(g: Network, path: str | Path) -> None:
    pos = g._index
    lines = []
    for e in sorted(g.edges, key=lambda e: sorted(pos[v] for v in e)):
        u, v = sorted(e, key=pos.__getitem__)
        lines.append(f"{u} {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# basic operations


def induced_subgraph(g: Network, vs: Iterable) -> Network:
    vs = set(vs)
    for v in vs:
        g.position(v)
    verts = tuple(v for v in g.vertices if v in vs)
    edges = frozenset(e for e in g.edges if e <= vs)
    return Network(verts, edges)


def connected_components(g: Network) -> list[frozenset]:
    """Maximal connected vertex sets, ordered by their first vertex position."""
    indptr, indices = g.csr
    label = np.full(g.n_vertices, -1, dtype=np.int64)
    comps = []
    for s in range(g.n_vertices):
        if label[s] >= 0:
            continue
        label[s] = len(comps)
        stack, members = [s], [s]
        while stack:
            u = stack.pop()
            for w in indices[indptr[u] : indptr[u + 1]]:
                if label[w] < 0:
                    label[w] = len(comps)
                    stack.append(w)
                    members.append(w)
        comps.append(frozenset(g.vertices[i] for i in members))
    return comps


def laplacian(g: Network) -> np.ndarray:
    a = g.adjacency
    return np.diag(a.sum(axis=1)) - a


def spanning_tree_count(g: Network) -> int:
    """Number of spanning trees from a Laplacian cofactor (matrix-tree theorem)."""
    k = g.n_vertices
    if k <= 1:
        return 1
    lap = laplacian(g)
    return int(round(np.linalg.det(lap[1:, 1:])))


def fiedler_vector(g: Network) -> np.ndarray:
    """Unit eigenvector for the second-smallest Laplacian eigenvalue.

    Sign convention: the first entry with magnitude above ``ZERO_TOL`` is
    positive.
    """
    if g.n_vertices < 2:
        raise GraphError("Fiedler vector needs at least two vertices")
    if not g.is_connected():
        raise GraphError("Fiedler vector of a disconnected graph is ambiguous")
    indptr, indices = g.csr
    return _fiedler_local(indptr, indices)


def _bipartition_from_mask(g: Network, left_mask: np.ndarray) -> VertexBipartition:
    left = frozenset(v for v, b in zip(g.vertices, left_mask) if b)
    right = frozenset(v for v, b in zip(g.vertices, left_mask) if not b)
    return VertexBipartition(left, right)


def _check_splittable(g: Network) -> None:
    if g.n_vertices < 2:
        raise GraphError("a single vertex has no non-trivial bipartition")
    if not g.is_connected():
        raise GraphError("network splits need a connected graph")


def split_gs1(g_sub: Network) -> VertexBipartition:
    """Deterministic Fiedler bipartition."""
    _check_splittable(g_sub)
    indptr, indices = g_sub.csr
    return _bipartition_from_mask(g_sub, _fiedler_split(indptr, indices))


def _split_random(g_sub: Network, rng: np.random.Generator, code: int) -> VertexBipartition:
    _check_splittable(g_sub)
    indptr, indices = g_sub.csr
    verts = np.arange(g_sub.n_vertices, dtype=np.int64)
    mask, ok = _split_network(code, indptr, indices, verts, rng)
    return _bipartition_from_mask(g_sub, mask)


def split_gs2(g_sub: Network, rng: np.random.Generator) -> VertexBipartition:
    """Uniform spanning tree, then delete a uniformly chosen tree edge."""
    return _split_random(g_sub, rng, GS2)


def split_gs3(g_sub: Network, rng: np.random.Generator) -> VertexBipartition:
    """Uniform spanning tree, then delete an edge with weight = smaller side size."""
    return _split_random(g_sub, rng, GS3)


def split_gs4(g_sub: Network, rng: np.random.Generator) -> VertexBipartition:
    """Fiedler bipartition of a uniform spanning tree."""
    return _split_random(g_sub, rng, GS4)


def wilson_spanning_tree(g: Network, rng: np.random.Generator) -> SpanningTree:
    """Uniform spanning tree via loop-erased random walks rooted at the first vertex."""
    if g.n_vertices == 0:
        raise GraphError("empty graph")
    if not g.is_connected():
        raise GraphError("disconnected graph has no spanning tree")
    indptr, indices = g.csr
    parent = _wilson_local(indptr, indices, rng)
    edges = frozenset(
        frozenset((g.vertices[v], g.vertices[parent[v]])) for v in range(1, g.n_vertices)
    )
    return SpanningTree(g.vertices, edges)


def adjacency_spectral_embedding(g: Network, d: int) -> np.ndarray:
    """``U_d diag(s_d)^{1/2}`` from the SVD of the adjacency matrix.

    Each left singular vector is sign-flipped so its first non-negligible
    entry is positive.
    """
    k = g.n_vertices
    if not 1 <= d <= k:
        raise GraphError(f"embedding dimension {d} outside [1, {k}]")
    u, s, _ = np.linalg.svd(g.adjacency)
    u = u[:, :d].copy()
    for c in range(d):
        nz = np.flatnonzero(np.abs(u[:, c]) > ZERO_TOL)
        if nz.size and u[nz[0], c] < 0:
            u[:, c] = -u[:, c]
    return u * np.sqrt(s[:d])


# ---------------------------------------------------------------------------
# compiled kernels; vertices are local positions 0..k-1


@nb.njit(cache=True)
def _induced_csr(indptr, indices, verts):
    """Local CSR of the subgraph induced by sorted global positions ``verts``."""
    k = verts.shape[0]
    nglobal = indptr.shape[0] - 1
    loc = np.full(nglobal, -1, dtype=np.int64)
    for a in range(k):
        loc[verts[a]] = a
    lindptr = np.zeros(k + 1, dtype=np.int64)
    buf = np.empty(indices.shape[0], dtype=np.int64)
    m = 0
    for a in range(k):
        v = verts[a]
        for e in range(indptr[v], indptr[v + 1]):
            b = loc[indices[e]]
            if b >= 0:
                buf[m] = b
                m += 1
        lindptr[a + 1] = m
    return lindptr, buf[:m].copy()


@nb.njit(cache=True)
def _is_connected_local(lindptr, lindices):
    k = lindptr.shape[0] - 1
    if k <= 1:
        return True
    seen = np.zeros(k, dtype=np.bool_)
    stack = np.empty(k, dtype=np.int64)
    stack[0] = 0
    seen[0] = True
    top = 1
    count = 1
    while top > 0:
        top -= 1
        u = stack[top]
        for e in range(lindptr[u], lindptr[u + 1]):
            w = lindices[e]
            if not seen[w]:
                seen[w] = True
                stack[top] = w
                top += 1
                count += 1
    return count == k


@nb.njit(cache=True)
def _wilson_local(lindptr, lindices, rng):
    """Parent pointers of a uniform spanning tree rooted at local vertex 0."""
    k = lindptr.shape[0] - 1
    in_tree = np.zeros(k, dtype=np.bool_)
    nxt = np.full(k, -1, dtype=np.int64)
    in_tree[0] = True
    for s in range(1, k):
        u = s
        while not in_tree[u]:
            deg = lindptr[u + 1] - lindptr[u]
            nxt[u] = lindices[lindptr[u] + rng.integers(0, deg)]
            u = nxt[u]
        u = s
        while not in_tree[u]:
            in_tree[u] = True
            u = nxt[u]
    nxt[0] = -1
    return nxt


@nb.njit(cache=True)
def _tree_subtree_sizes(parent):
    """Subtree sizes for a parent-pointer tree rooted at 0."""
    k = parent.shape[0]
    # depth-sort so children are processed before parents
    depth = np.zeros(k, dtype=np.int64)
    for v in range(k):
        d = 0
        u = v
        while parent[u] >= 0:
            u = parent[u]
            d += 1
        depth[v] = d
    order = np.argsort(-depth, kind="mergesort")
    size = np.ones(k, dtype=np.int64)
    for a in range(k):
        v = order[a]
        if parent[v] >= 0:
            size[parent[v]] += size[v]
    return size


@nb.njit(cache=True)
def _subtree_mask(parent, v):
    """Vertices whose root path passes through ``v`` (the component cut off with edge v-parent[v])."""
    k = parent.shape[0]
    mask = np.zeros(k, dtype=np.bool_)
    for w in range(k):
        u = w
        while u >= 0:
            if u == v:
                mask[w] = True
                break
            u = parent[u]
    return mask


@nb.njit(cache=True)
def _tree_csr(parent):
    k = parent.shape[0]
    deg = np.zeros(k, dtype=np.int64)
    for v in range(1, k):
        deg[v] += 1
        deg[parent[v]] += 1
    indptr = np.zeros(k + 1, dtype=np.int64)
    for v in range(k):
        indptr[v + 1] = indptr[v] + deg[v]
    fill = indptr[:-1].copy()
    indices = np.empty(indptr[k], dtype=np.int64)
    for v in range(1, k):
        p = parent[v]
        indices[fill[v]] = p
        fill[v] += 1
        indices[fill[p]] = v
        fill[p] += 1
    # sorted neighbor lists keep the Laplacian independent of insertion order
    for v in range(k):
        indices[indptr[v] : indptr[v + 1]] = np.sort(indices[indptr[v] : indptr[v + 1]])
    return indptr, indices


@nb.njit(cache=True)
def _fiedler_local(lindptr, lindices):
    k = lindptr.shape[0] - 1
    lap = np.zeros((k, k))
    for u in range(k):
        for e in range(lindptr[u], lindptr[u + 1]):
            w = lindices[e]
            lap[u, w] -= 1.0
            lap[u, u] += 1.0
    _, vecs = np.linalg.eigh(lap)
    v = vecs[:, 1].copy()
    v /= np.sqrt(np.sum(v * v))
    for a in range(k):
        if abs(v[a]) > ZERO_TOL:
            if v[a] < 0:
                v = -v
            break
    return v


@nb.njit(cache=True)
def _fiedler_split(lindptr, lindices):
    """Left mask: the connected component of {v > tol} holding the largest entry.

    Entries within ``ZERO_TOL`` of zero go right. Keeping a single positive
    component guarantees both sides are connected: the non-positive set is
    connected for any Fiedler vector, and every other positive component
    borders it.
    """
    k = lindptr.shape[0] - 1
    v = _fiedler_local(lindptr, lindices)
    pos = v > ZERO_TOL
    left = np.zeros(k, dtype=np.bool_)
    if not pos.any():
        left[np.argmin(np.abs(v))] = True
        return left
    start = np.argmax(v)
    stack = np.empty(k, dtype=np.int64)
    stack[0] = start
    left[start] = True
    top = 1
    while top > 0:
        top -= 1
        u = stack[top]
        for e in range(lindptr[u], lindptr[u + 1]):
            w = lindices[e]
            if pos[w] and not left[w]:
                left[w] = True
                stack[top] = w
                top += 1
    if left.all():
        # move the vertex with smallest magnitude across
        best = -1
        for a in range(k):
            if best < 0 or abs(v[a]) < abs(v[best]):
                best = a
        left[best] = False
    return left


@nb.njit(cache=True)
def _split_tree_edge(parent, rng, weighted):
    """Delete one spanning-tree edge; left side holds local vertex 0."""
    k = parent.shape[0]
    if weighted:
        size = _tree_subtree_sizes(parent)
        w = np.zeros(k)
        for v in range(1, k):
            w[v] = min(size[v], k - size[v])
        u = rng.random() * w.sum()
        acc = 0.0
        pick = k - 1
        for v in range(1, k):
            acc += w[v]
            if u < acc:
                pick = v
                break
    else:
        pick = 1 + rng.integers(0, k - 1)
    return ~_subtree_mask(parent, pick)


@nb.njit(cache=True)
def _draw_unif_subset(k, rng):
    """Each of ``k`` items left with probability 1/2, redrawn until both sides are non-empty."""
    mask = np.zeros(k, dtype=np.bool_)
    while True:
        nl = 0
        for a in range(k):
            mask[a] = rng.random() < 0.5
            nl += mask[a]
        if 0 < nl < k:
            return mask


@nb.njit(cache=True)
def _split_network(code, indptr, indices, verts, rng):
    """Left mask over ``verts`` (sorted global positions) for a strategy code.

    Returns ``(mask, ok)``; ``ok`` is False when the induced subgraph is
    disconnected and a network strategy was requested.
    """
    k = verts.shape[0]
    if code == UNIF:
        return _draw_unif_subset(k, rng), True
    lindptr, lindices = _induced_csr(indptr, indices, verts)
    if not _is_connected_local(lindptr, lindices):
        return np.zeros(k, dtype=np.bool_), False
    if code == GS1:
        return _fiedler_split(lindptr, lindices), True
    parent = _wilson_local(lindptr, lindices, rng)
    if code == GS2:
        return _split_tree_edge(parent, rng, False), True
    if code == GS3:
        return _split_tree_edge(parent, rng, True), True
    tindptr, tindices = _tree_csr(parent)
    return _fiedler_split(tindptr, tindices), True
