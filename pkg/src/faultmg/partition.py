"""Box decomposition of the hierarchy into simulated ranks.

Each rank stores, on every level, its closed box plus one ghost layer as a
C-ordered block inside a flat per-level buffer.  A node shared by several
closed boxes is *owned* by the lowest rank id among them; every other copy
is a ghost refreshed from the owner's entry.  Ghost sources are always
owned entries and never ghost entries, so an exchange is a pure copy with
a unique source per destination and its result cannot depend on the order
in which ranks are processed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridHierarchy

POISON = np.nan


class PartitionError(ValueError):
    pass


class DeadRankError(RuntimeError):
    """A global operation touched the storage of a crashed rank."""


@dataclass(frozen=True)
class Subdomain:
    rank: int
    block: tuple[int, int, int]
    lo0: tuple[int, int, int]  # closed box in level-0 node indices
    hi0: tuple[int, int, int]

    def box(self, level: int):
        s = 2**level
        return tuple(a * s for a in self.lo0), tuple(b * s for b in self.hi0)

    def cells(self, level: int):
        lo, hi = self.box(level)
        return tuple(b - a for a, b in zip(lo, hi))


class LevelLayout:
    """Where every rank's block lives in the flat buffer of one level.

    Per-entry arrays (length ``size``):
      owned      unknowns this rank updates (canonical owner, not Dirichlet)
      interior   strict interior of the rank's closed box (lost on a crash)
      closed     inside the closed box
      boundary   Dirichlet node of the global domain
      gidx       flat C-order index of the node in the global array
    """

    def __init__(self, hierarchy: GridHierarchy, subdomains, counts, level: int):
        self.level = level
        self.cells = hierarchy.levels[level].cells
        n = self.cells
        self.shape = (n + 1,) * 3
        R = len(subdomains)

        owner_1d = []
        for d, P in enumerate(counts):
            b = n // P
            i = np.arange(n + 1)
            owner_1d.append(np.clip((i - 1) // b, 0, P - 1))
        ox, oy, oz = np.meshgrid(*owner_1d, indexing="ij")
        owner = ox + counts[0] * (oy + counts[1] * oz)
        phys = np.ones(self.shape, dtype=bool)
        phys[1:-1, 1:-1, 1:-1] = False
        owner[phys] = -1
        self.owner = owner

        self.origins = np.zeros((R, 3), dtype=np.int64)
        self.shapes = np.zeros((R, 3), dtype=np.int64)
        self.offs = np.zeros(R, dtype=np.int64)
        owned, interior, closed, boundary, gidx = [], [], [], [], []
        off = 0
        for sd in subdomains:
            lo, hi = sd.box(level)
            elo = [max(0, a - 1) for a in lo]
            ehi = [min(n, b + 1) for b in hi]
            axes = [np.arange(a, b + 1) for a, b in zip(elo, ehi)]
            sel = np.ix_(*axes)
            shp = tuple(len(a) for a in axes)
            in_closed = [(ax >= a) & (ax <= b) for ax, a, b in zip(axes, lo, hi)]
            in_open = [(ax > a) & (ax < b) for ax, a, b in zip(axes, lo, hi)]
            cl = in_closed[0][:, None, None] & in_closed[1][None, :, None] & in_closed[2][None, None, :]
            op = in_open[0][:, None, None] & in_open[1][None, :, None] & in_open[2][None, None, :]
            own = owner[sel] == sd.rank
            gi = np.ravel_multi_index(np.meshgrid(*axes, indexing="ij"), self.shape)
            owned.append(own.reshape(-1))
            interior.append(op.reshape(-1))
            closed.append(cl.reshape(-1))
            boundary.append(phys[sel].reshape(-1))
            gidx.append(gi.reshape(-1))
            self.origins[sd.rank] = elo
            self.shapes[sd.rank] = shp
            self.offs[sd.rank] = off
            off += int(np.prod(shp))
        self.size = off
        self.owned = np.concatenate(owned)
        self.interior = np.concatenate(interior)
        self.closed = np.concatenate(closed)
        self.boundary = np.concatenate(boundary)
        self.gidx = np.concatenate(gidx).astype(np.int64)
        self.rank_of = np.repeat(np.arange(R), [int(np.prod(s)) for s in self.shapes])

        owner_entry = np.full(int(np.prod(self.shape)), -1, dtype=np.int64)
        own_idx = np.flatnonzero(self.owned)
        owner_entry[self.gidx[own_idx]] = own_idx
        self.owner_entry = owner_entry

        ghost = np.flatnonzero(~self.owned & ~self.boundary)
        # entries are already grouped by rank, so ghost_dst is sorted by destination rank
        self.ghost_dst = ghost
        self.ghost_src = owner_entry[self.gidx[ghost]]
        self.ghost_src_rank = self.rank_of[self.ghost_src]
        self.ghost_ptr = np.searchsorted(self.rank_of[ghost], np.arange(R + 1))
        self.owned_idx = own_idx
        self.boundary_idx = np.flatnonzero(self.boundary)

    def block(self, buf: np.ndarray, rank: int) -> np.ndarray:
        o = self.offs[rank]
        shp = tuple(self.shapes[rank])
        return buf[o:o + int(np.prod(shp))].reshape(shp)

    def span(self, rank: int) -> slice:
        o = int(self.offs[rank])
        return slice(o, o + int(np.prod(self.shapes[rank])))

    def distribute(self, glob: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(glob, dtype=float).reshape(-1)[self.gidx]

    def assemble(self, buf: np.ndarray) -> np.ndarray:
        out = np.zeros(int(np.prod(self.shape)))
        out[self.gidx[self.boundary_idx]] = buf[self.boundary_idx]
        out[self.gidx[self.owned_idx]] = buf[self.owned_idx]
        return out.reshape(self.shape)


@dataclass
class Partition:
    hierarchy: GridHierarchy
    counts: tuple[int, int, int]
    subdomains: list[Subdomain]
    layouts: list[LevelLayout] = field(repr=False)

    @property
    def rank_count(self) -> int:
        return len(self.subdomains)

    def rank_of_block(self, px: int, py: int, pz: int) -> int:
        Px, Py, _ = self.counts
        return px + Px * (py + Py * pz)

    def node_sets(self, rank: int, level: int):
        """Boolean global masks ``(interior, interface, physical_boundary)`` of a rank's closed box."""
        lay = self.layouts[level]
        sl = lay.span(rank)
        glob = np.zeros(int(np.prod(lay.shape)), dtype=bool)

        def mark(sel):
            m = glob.copy()
            m[lay.gidx[sl][sel]] = True
            return m.reshape(lay.shape)

        cl = lay.closed[sl]
        bd = lay.boundary[sl]
        it = lay.interior[sl]
        return mark(it), mark(cl & ~it & ~bd), mark(cl & bd)

    def interior_ranks(self) -> list[int]:
        """Ranks whose closed box does not touch the physical boundary."""
        return [sd.rank for sd in self.subdomains
                if all(0 < b < P - 1 for b, P in zip(sd.block, self.counts))]


def build_partition(hierarchy: GridHierarchy, Px: int, Py: int, Pz: int, *, min_ranks: int = 2) -> Partition:
    counts = (int(Px), int(Py), int(Pz))
    for name, P in zip("xyz", counts):
        if P < 1:
            raise PartitionError(f"partition count P{name}={P} must be positive")
        if hierarchy.n0 % P:
            raise PartitionError(
                f"n0={hierarchy.n0} is not divisible by P{name}={P} (partition {counts})")
    R = counts[0] * counts[1] * counts[2]
    if R < min_ranks:
        raise PartitionError(f"partition {counts} has {R} rank(s); at least {min_ranks} needed")
    sizes = [hierarchy.n0 // P for P in counts]
    subdomains = []
    for pz in range(counts[2]):
        for py in range(counts[1]):
            for px in range(counts[0]):
                b = (px, py, pz)
                rank = px + counts[0] * (py + counts[1] * pz)
                lo = tuple(p * s for p, s in zip(b, sizes))
                hi = tuple((p + 1) * s for p, s in zip(b, sizes))
                subdomains.append(Subdomain(rank, b, lo, hi))
    layouts = [LevelLayout(hierarchy, subdomains, counts, l) for l in range(hierarchy.L + 1)]
    return Partition(hierarchy, counts, subdomains, layouts)


class RankState:
    """One rank's view of the shared storage."""

    def __init__(self, states: "DistributedState", rank: int):
        self._states = states
        self.rank = rank

    @property
    def alive(self) -> bool:
        return bool(self._states.alive[self.rank])

    def values(self, name: str, level: int) -> np.ndarray:
        lay = self._states.partition.layouts[level]
        return lay.block(self._states.fields[name][level], self.rank)


class DistributedState:
    """Per-level flat buffers for the fields ``u`` (iterate / correction),
    ``f`` (right-hand side) and ``r`` (residual) of every rank.

    ``rhs`` is the finest-level right-hand side as problem data; a
    substitute rank re-reads it after a crash.
    """

    FIELDS = ("u", "f", "r")

    def __init__(self, partition: Partition, rhs: np.ndarray | None = None):
        self.partition = partition
        hier = partition.hierarchy
        self.fields = {name: [np.zeros(lay.size) for lay in partition.layouts] for name in self.FIELDS}
        self.alive = np.ones(partition.rank_count, dtype=bool)
        self.rhs = np.zeros(hier.finest.shape) if rhs is None else np.asarray(rhs, dtype=float)
        top = partition.layouts[-1]
        self.fields["u"][-1][:] = top.distribute(hier.boundary_field())
        self.fields["f"][-1][:] = top.distribute(self.rhs)
        self.ranks = [RankState(self, r) for r in range(partition.rank_count)]

    def layout(self, level: int) -> LevelLayout:
        return self.partition.layouts[level]

    def assemble(self, name: str = "u", level: int | None = None) -> np.ndarray:
        level = self.partition.hierarchy.L if level is None else level
        return self.layout(level).assemble(self.fields[name][level])

    def distribute(self, glob: np.ndarray, name: str = "u", level: int | None = None) -> None:
        level = self.partition.hierarchy.L if level is None else level
        self.fields[name][level][:] = self.layout(level).distribute(glob)

    def require_alive(self, what: str = "operation") -> None:
        if not self.alive.all():
            dead = np.flatnonzero(~self.alive).tolist()
            raise DeadRankError(f"{what} touches crashed rank(s) {dead}")


def ghost_exchange(states: DistributedState, level: int, name: str = "u",
                   ranks=None, order=None) -> None:
    """Refresh ghost copies from their owners.

    ``ranks`` restricts the refresh to those destination ranks; ``order``
    processes destination ranks one by one in the given order (the default
    is a single vectorised copy, with identical results).
    """
    lay = states.layout(level)
    buf = states.fields[name][level]
    if ranks is None and order is None:
        states.require_alive("ghost exchange")
        buf[lay.ghost_dst] = buf[lay.ghost_src]
        return
    targets = list(order) if order is not None else list(ranks)
    for r in targets:
        if ranks is not None and r not in ranks:
            continue
        seg = slice(lay.ghost_ptr[r], lay.ghost_ptr[r + 1])
        src_ranks = np.unique(lay.ghost_src_rank[seg])
        if ranks is None and not states.alive[r]:
            raise DeadRankError(f"ghost exchange into crashed rank {r}")
        if not states.alive[src_ranks].all():
            dead = src_ranks[~states.alive[src_ranks]].tolist()
            raise DeadRankError(f"ghost exchange for rank {r} reads crashed rank(s) {dead}")
        buf[lay.ghost_dst[seg]] = buf[lay.ghost_src[seg]]


def _lost_entries(lay: LevelLayout, rank: int) -> np.ndarray:
    """Entries of a rank that do not survive a crash: strict interior and outer ghosts."""
    sl = lay.span(rank)
    lost = lay.interior[sl] | ~lay.closed[sl]
    return np.flatnonzero(lost) + sl.start


def erase_rank(states: DistributedState, rank: int) -> None:
    """Simulate the crash of ``rank``: its interior data on every level is poisoned.

    Interface nodes of the closed box are kept; they are replicated on the
    neighbouring ranks and count as surviving.
    """
    if not states.alive[rank]:
        raise DeadRankError(f"rank {rank} is already dead")
    for name in states.FIELDS:
        for level, lay in enumerate(states.partition.layouts):
            states.fields[name][level][_lost_entries(lay, rank)] = POISON
    states.alive[rank] = False


def assign_substitute(states: DistributedState, rank: int) -> None:
    """A spare process takes over a crashed rank: zero interior, problem data
    (right-hand side and Dirichlet values) re-read, ghost copies pulled from
    the neighbours."""
    if states.alive[rank]:
        raise ValueError(f"rank {rank} is alive; nothing to substitute")
    parts = states.partition.layouts
    for name in states.FIELDS:
        for level, lay in enumerate(parts):
            states.fields[name][level][_lost_entries(lay, rank)] = 0.0
    top = parts[-1]
    sl = top.span(rank)
    states.fields["f"][-1][sl] = states.rhs.reshape(-1)[top.gidx[sl]]
    # Dirichlet data is problem input as well; ghost exchange never covers it
    ub = states.fields["u"][-1][sl]
    bd = top.boundary[sl]
    ub[bd] = states.partition.hierarchy.boundary_field().reshape(-1)[top.gidx[sl][bd]]
    states.alive[rank] = True
    for name in states.FIELDS:
        for level in range(len(parts)):
            ghost_exchange(states, level, name, ranks=[rank])
