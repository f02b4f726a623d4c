"""Static percolation structure: clusters, the giant, boundaries, isoperimetry.

Cluster labeling leans on scipy's compiled connected-components rather than a
hand-rolled union-find; walker-side code rebuilds clusters at every edge flip,
so labeling sits on a hot path.  The giant is a maximum-size cluster, ties
broken uniformly at random when a generator is supplied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .environment import EnvConfig, sample_stationary
from .torus import TorusConfig


@dataclass
class ComponentLabeling:
    label: np.ndarray  # (n_vertices,) component id in 0..n_components-1
    sizes: np.ndarray  # (n_components,)
    n_components: int


def components(open_mask: np.ndarray, torus: TorusConfig) -> ComponentLabeling:
    """Exact partition of the vertex set into open-edge connected clusters."""
    nv = torus.n_vertices
    u_ep, w_ep = torus.edge_endpoints
    open_idx = np.nonzero(open_mask)[0]
    adj = sparse.csr_matrix(
        (np.ones(len(open_idx)), (u_ep[open_idx], w_ep[open_idx])), shape=(nv, nv)
    )
    n_comp, raw = csgraph.connected_components(adj, directed=False)
    # renumber in order of first appearance so labels are reproducible
    _, first = np.unique(raw, return_index=True)
    order = np.empty(n_comp, dtype=np.int64)
    order[raw[np.sort(first)]] = np.arange(n_comp)
    label = order[raw]
    sizes = np.bincount(label, minlength=n_comp)
    return ComponentLabeling(label=label, sizes=sizes, n_components=n_comp)


def giant(
    labeling: ComponentLabeling, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Boolean mask of a maximum-size cluster; ties broken uniformly via rng.

    With rng=None the tied cluster with the smallest label wins (deterministic).
    """
    top = labeling.sizes.max()
    tied = np.nonzero(labeling.sizes == top)[0]
    if len(tied) > 1 and rng is not None:
        pick = int(tied[rng.integers(len(tied))])
    else:
        pick = int(tied[0])
    return labeling.label == pick


def cluster_diameter(vertices: np.ndarray, torus: TorusConfig, metric: str = "linf") -> int:
    """Exact diameter of a vertex set.

    metric="linf": max over vertex pairs of toroidal L-infinity displacement.
    Decomposes per axis: the max over pairs of a coordinatewise max equals the
    max over axes of the largest circular distance among occupied residues.

    metric="graph": max over pairs of open-path graph distance is not defined
    here (needs the edge set); use cluster_graph_diameter instead.
    """
    if metric != "linf":
        raise ValueError("cluster_diameter computes the linf metric; see cluster_graph_diameter")
    verts = np.asarray(vertices)
    if verts.dtype == np.bool_:
        verts = np.nonzero(verts)[0]
    if len(verts) == 0:
        raise ValueError("empty vertex set")
    coords = torus.coords_table[verts]
    n = torus.n
    best = 0
    for axis in range(torus.d):
        residues = np.unique(coords[:, axis])
        if len(residues) == 1:
            continue
        delta = np.abs(residues[:, None] - residues[None, :])
        circ = np.minimum(delta, n - delta)
        best = max(best, int(circ.max()))
    return best


def cluster_graph_diameter(
    vertices: np.ndarray, open_mask: np.ndarray, torus: TorusConfig
) -> int:
    """Exact graph diameter of a cluster under the open edges (BFS from every vertex)."""
    verts = np.asarray(vertices)
    if verts.dtype == np.bool_:
        verts = np.nonzero(verts)[0]
    vset = set(verts.tolist())
    nbr_v = torus.neighbor_vertices
    nbr_e = torus.neighbor_edges
    adj = {
        v: [int(x) for x, e in zip(nbr_v[v], nbr_e[v]) if open_mask[e] and int(x) in vset]
        for v in vset
    }
    best = 0
    for src in vset:
        dist = {src: 0}
        queue = [src]
        for v in queue:
            for x in adj[v]:
                if x not in dist:
                    dist[x] = dist[v] + 1
                    queue.append(x)
        if len(dist) != len(vset):
            raise ValueError("vertex set is not connected under the open edges")
        best = max(best, max(dist.values()))
    return best


# ---- boundaries ----

def edge_boundary(
    S_mask: np.ndarray, torus: TorusConfig, open_mask: np.ndarray | None = None
) -> int:
    """Number of edges with exactly one endpoint in S.

    With open_mask=None all lattice edges count (so the bound |boundary| <= 2d|S|
    holds); otherwise only open edges count.
    """
    u_ep, w_ep = torus.edge_endpoints
    cross = S_mask[u_ep] != S_mask[w_ep]
    if open_mask is not None:
        cross &= open_mask
    return int(cross.sum())


def giant_boundary_of_intersection(
    S_mask: np.ndarray,
    giant_mask: np.ndarray,
    open_mask: np.ndarray,
    torus: TorusConfig,
) -> int:
    """Open edges inside the giant joining S-and-giant to giant-minus-S."""
    u_ep, w_ep = torus.edge_endpoints
    inside = giant_mask[u_ep] & giant_mask[w_ep] & open_mask
    cross = S_mask[u_ep] != S_mask[w_ep]
    return int((inside & cross).sum())


# ---- Monte Carlo statistics over stationary configurations ----

def giant_density_estimate(
    cfg: EnvConfig, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Mean giant density over iid stationary configurations, with standard error."""
    nv = cfg.torus.n_vertices
    vals = np.empty(samples)
    for i in range(samples):
        lab = components(sample_stationary(cfg, rng), cfg.torus)
        vals[i] = lab.sizes.max() / nv
    se = vals.std(ddof=1) / math.sqrt(samples) if samples > 1 else float("nan")
    return float(vals.mean()), float(se)


def giant_overlap_outlier_rate(
    A_mask: np.ndarray,
    cfg: EnvConfig,
    eps: float,
    samples: int,
    rng: np.random.Generator,
    theta: float | None = None,
) -> float:
    """Frequency of |A and giant| falling outside (alpha(theta-eps)n^d, alpha(theta+eps)n^d).

    alpha = |A| / n^d.  Requires eps < theta, mirroring the concentration regime.
    """
    if theta is None:
        theta, _ = giant_density_estimate(cfg, min(200, samples), rng)
    if eps >= theta:
        raise ValueError(f"eps={eps} must be below the giant density {theta:.4f}")
    a_size = int(A_mask.sum())
    lo = a_size * (theta - eps)
    hi = a_size * (theta + eps)
    outliers = 0
    for _ in range(samples):
        lab = components(sample_stationary(cfg, rng), cfg.torus)
        g = giant(lab, rng)
        overlap = int((A_mask & g).sum())
        if not lo < overlap < hi:
            outliers += 1
    return outliers / samples


def coverage_union_count(delta: float, theta: float) -> int:
    """Number of independent giants whose union should cover a (1-delta) fraction."""
    return int(2 * (1 - delta) / (delta * theta)) + 1


def union_coverage_failure_rate(
    cfg: EnvConfig,
    delta: float,
    samples: int,
    rng: np.random.Generator,
    theta: float | None = None,
) -> tuple[float, int, float]:
    """Frequency that k iid giants fail to cover (1-delta) of the vertices.

    Returns (failure rate, k, theta used).  Requires delta in (0, 1/4).
    """
    if not 0 < delta < 0.25:
        raise ValueError(f"delta={delta} outside (0, 1/4)")
    if theta is None:
        theta, _ = giant_density_estimate(cfg, 200, rng)
    k = coverage_union_count(delta, theta)
    nv = cfg.torus.n_vertices
    need = (1 - delta) * nv
    failures = 0
    for _ in range(samples):
        covered = np.zeros(nv, dtype=bool)
        for _ in range(k):
            lab = components(sample_stationary(cfg, rng), cfg.torus)
            covered |= giant(lab, rng)
        if covered.sum() < need:
            failures += 1
    return failures / samples, k, theta


def secondary_diameter_tail(
    cfg: EnvConfig, r: float, samples: int, rng: np.random.Generator
) -> float:
    """Frequency that some non-giant cluster has linf diameter >= r."""
    failures = 0
    for _ in range(samples):
        lab = components(sample_stationary(cfg, rng), cfg.torus)
        g = giant(lab, rng)
        glabel = int(lab.label[np.nonzero(g)[0][0]])
        hit = False
        for c in range(lab.n_components):
            if c == glabel or lab.sizes[c] <= r:  # linf diameter < cluster size
                continue
            verts = np.nonzero(lab.label == c)[0]
            if cluster_diameter(verts, cfg.torus) >= r:
                hit = True
                break
        failures += int(hit)
    return failures / samples


# ---- isoperimetry scan ----

@dataclass
class IsoperimetryScan:
    min_ratio: float
    argmin_vertices: np.ndarray  # global vertex ids of the witness set
    probe_ratios: np.ndarray  # best ratio reached by each probe
    mode: str


def _giant_adjacency(
    open_mask: np.ndarray, giant_mask: np.ndarray, torus: TorusConfig
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Local adjacency lists of the giant under open, giant-internal edges."""
    gverts = np.nonzero(giant_mask)[0]
    local = -np.ones(torus.n_vertices, dtype=np.int64)
    local[gverts] = np.arange(len(gverts))
    u_ep, w_ep = torus.edge_endpoints
    keep = open_mask & giant_mask[u_ep] & giant_mask[w_ep]
    eu = local[u_ep[keep]]
    ew = local[w_ep[keep]]
    adj: list[list[int]] = [[] for _ in range(len(gverts))]
    for a, b in zip(eu.tolist(), ew.tolist()):
        adj[a].append(b)
        adj[b].append(a)
    return gverts, [np.array(sorted(set(x)), dtype=np.int64) for x in adj]


def _connected_after_removal(members: np.ndarray, v: int, adj: list[np.ndarray]) -> bool:
    size = int(members.sum()) - 1
    if size == 0:
        return False
    start = -1
    for x in adj[v]:
        if members[x]:
            start = int(x)
            break
    if start == -1:
        return size == 0
    seen = {start}
    stack = [start]
    while stack:
        y = stack.pop()
        for x in adj[y]:
            xi = int(x)
            if xi != v and members[xi] and xi not in seen:
                seen.add(xi)
                stack.append(xi)
    return len(seen) == size


def isoperimetry_scan(
    open_mask: np.ndarray,
    giant_mask: np.ndarray,
    torus: TorusConfig,
    size_floor: int,
    size_cap: int,
    rng: np.random.Generator,
    probes: int = 1000,
    mode: str = "auto",
    descent_moves: int = 40,
    candidate_pool: int = 12,
    patience: int = 12,
) -> IsoperimetryScan:
    """Search for connected subsets of the giant with small boundary ratio.

    The ratio is |open giant-internal boundary of S| / |S|^(1 - 1/d) over
    connected S inside the giant with size_floor <= |S| <= size_cap.

    mode="exhaustive" enumerates every connected subset (giant size <= 20 only).
    mode="random" grows `probes` random connected subsets by uniform frontier
    expansion to a random target size, then locally minimizes the ratio with
    greedy single-vertex additions and removals (removals keep the set
    connected).  mode="auto" picks exhaustive when the giant is small enough.

    Returns the minimum ratio over everything examined plus the witness set.
    """
    gverts, adj = _giant_adjacency(open_mask, giant_mask, torus)
    g = len(gverts)
    if size_floor < 1 or size_cap > g or size_floor > size_cap:
        raise ValueError(f"bad size window [{size_floor}, {size_cap}] for giant of size {g}")
    expo = 1.0 - 1.0 / torus.d
    if mode == "auto":
        mode = "exhaustive" if g <= 20 else "random"

    if mode == "exhaustive":
        if g > 20:
            raise ValueError(f"exhaustive scan refuses giant of size {g} > 20")
        nbr_bits = [0] * g
        for i in range(g):
            for x in adj[i]:
                nbr_bits[i] |= 1 << int(x)
        best = math.inf
        best_mask = 0
        for mask in range(1, 1 << g):
            size = mask.bit_count()
            if not size_floor <= size <= size_cap:
                continue
            # connectivity by bit BFS
            seed_bit = mask & -mask
            reach = seed_bit
            while True:
                grow = reach
                m = reach
                while m:
                    low = m & -m
                    grow |= nbr_bits[low.bit_length() - 1] & mask
                    m ^= low
                if grow == reach:
                    break
                reach = grow
            if reach != mask:
                continue
            boundary = 0
            m = mask
            while m:
                low = m & -m
                boundary += (nbr_bits[low.bit_length() - 1] & ~mask).bit_count()
                m ^= low
            ratio = boundary / size ** expo
            if ratio < best:
                best = ratio
                best_mask = mask
        witness = gverts[[i for i in range(g) if best_mask >> i & 1]]
        return IsoperimetryScan(
            min_ratio=float(best),
            argmin_vertices=np.asarray(witness),
            probe_ratios=np.array([best]),
            mode="exhaustive",
        )

    if mode != "random":
        raise ValueError(f"unknown mode {mode!r}")

    deg = np.array([len(a) for a in adj])
    best = math.inf
    best_members: np.ndarray | None = None
    probe_best = np.empty(probes)

    for probe in range(probes):
        target = int(rng.integers(size_floor, size_cap + 1))
        members = np.zeros(g, dtype=bool)
        start = int(rng.integers(g))
        members[start] = True
        size = 1
        boundary = int(deg[start])
        frontier = set(int(x) for x in adj[start])
        while size < target and frontier:
            v = list(frontier)[int(rng.integers(len(frontier)))]
            inside = int(members[adj[v]].sum())
            boundary += int(deg[v]) - 2 * inside
            members[v] = True
            size += 1
            frontier.discard(v)
            for x in adj[v]:
                if not members[x]:
                    frontier.add(int(x))
        ratio = boundary / size ** expo

        stale = 0
        moves = 0
        while moves < descent_moves and stale < patience:
            cand: list[tuple[float, int, int, str]] = []
            pool_add = list(frontier) if size < size_cap else []
            inside_ids = np.nonzero(members)[0]
            for _ in range(candidate_pool):
                if pool_add and rng.random() < 0.5:
                    v = pool_add[int(rng.integers(len(pool_add)))]
                    inside = int(members[adj[v]].sum())
                    nb = boundary + int(deg[v]) - 2 * inside
                    cand.append((nb / (size + 1) ** expo, nb, v, "add"))
                elif size - 1 >= size_floor and size > 1:
                    v = int(inside_ids[int(rng.integers(len(inside_ids)))])
                    inside = int(members[adj[v]].sum())
                    nb = boundary - int(deg[v]) + 2 * inside
                    cand.append((nb / (size - 1) ** expo, nb, v, "rem"))
            cand.sort(key=lambda c: c[0])
            applied = False
            for new_ratio, nb, v, kind in cand:
                if new_ratio >= ratio:
                    break
                if kind == "rem" and not _connected_after_removal(members, v, adj):
                    continue
                if kind == "add":
                    members[v] = True
                    size += 1
                    frontier.discard(v)
                    for x in adj[v]:
                        if not members[x]:
                            frontier.add(int(x))
                else:
                    members[v] = False
                    size -= 1
                    if any(members[x] for x in adj[v]):
                        frontier.add(v)
                    for x in adj[v]:
                        xi = int(x)
                        if not members[xi] and not any(members[y] for y in adj[xi]):
                            frontier.discard(xi)
                boundary = nb
                ratio = new_ratio
                applied = True
                moves += 1
                break
            stale = 0 if applied else stale + 1

        probe_best[probe] = ratio
        if ratio < best:
            best = ratio
            best_members = members.copy()

    assert best_members is not None
    return IsoperimetryScan(
        min_ratio=float(best),
        argmin_vertices=gverts[np.nonzero(best_members)[0]],
        probe_ratios=probe_best,
        mode="random",
    )
