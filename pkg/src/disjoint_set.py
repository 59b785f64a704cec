"""Union-find over interned addresses, producing deterministic clusters."""

from __future__ import annotations

from dataclasses import dataclass

TAG_COMMON_SPENDING = "common_spending"
TAG_CHANGE = "change"
TAG_EXCHANGE_SEED = "exchange_seed"
TAG_GATHERING = "gathering"


@dataclass(frozen=True)
class MergeRecord:
    """One successful union: the two representatives that were joined."""

    tag: str
    txid: str
    left: str
    right: str


@dataclass(frozen=True)
class Cluster:
    """Finalized cluster; `addresses` sorted, representative is the smallest."""

    cluster_id: int
    representative: str
    addresses: tuple[str, ...]
    heuristics: tuple[str, ...] = ()


class Partition:
    """
    Disjoint-set over addresses with union by rank and path compression.

    Addresses are interned to dense indices; parent/rank live in flat lists.
    Each root also carries a bitmask of the heuristic tags of every union
    request made inside its cluster, so `finalize` does not depend on the
    order unions were applied in.
    """

    def __init__(self) -> None:
        self._index: dict[str, int] = {}
        self._addresses: list[str] = []
        self._parent: list[int] = []
        self._rank: list[int] = []
        self._tag_mask: list[int] = []
        self._tag_bits: dict[str, int] = {}
        self.merge_log: list[MergeRecord] = []

    def __len__(self) -> int:
        return len(self._addresses)

    def __contains__(self, address: str) -> bool:
        return address in self._index

    @property
    def addresses(self) -> list[str]:
        """Interned addresses in index order."""
        return list(self._addresses)

    def intern(self, address: str) -> int:
        """Return the dense index of `address`, assigning the next one on first sight."""
        index = self._index.get(address)
        if index is None:
            index = len(self._addresses)
            self._index[address] = index
            self._addresses.append(address)
            self._parent.append(index)
            self._rank.append(0)
            self._tag_mask.append(0)
        return index

    def _root(self, index: int) -> int:
        parent = self._parent
        root = index
        while parent[root] != root:
            root = parent[root]
        while parent[index] != root:
            parent[index], index = root, parent[index]
        return root

    def find(self, address: str) -> int:
        """Index of the internal root of `address`'s cluster (interns if new)."""
        return self._root(self.intern(address))

    def connected(self, first: str, second: str) -> bool:
        return self.find(first) == self.find(second)

    def _tag_bit(self, tag: str) -> int:
        bit = self._tag_bits.get(tag)
        if bit is None:
            bit = 1 << len(self._tag_bits)
            self._tag_bits[tag] = bit
        return bit

    def union(self, first: str, second: str, tag: str, txid: str) -> bool:
        """Join the clusters of two addresses; False when already joined."""
        root_first = self._root(self.intern(first))
        root_second = self._root(self.intern(second))
        bit = self._tag_bit(tag)
        if root_first == root_second:
            if first != second:
                self._tag_mask[root_first] |= bit
            return False

        rank = self._rank
        if rank[root_first] < rank[root_second]:
            root_first, root_second = root_second, root_first
        elif rank[root_first] == rank[root_second]:
            rank[root_first] += 1
        self._parent[root_second] = root_first
        self._tag_mask[root_first] |= self._tag_mask[root_second] | bit

        self.merge_log.append(
            MergeRecord(
                tag=tag,
                txid=txid,
                left=self._addresses[root_first],
                right=self._addresses[root_second],
            )
        )
        return True

    def cluster_count(self) -> int:
        return len(self._addresses) - len(self.merge_log)

    def merge_from(self, other: Partition) -> None:
        """Replay another partition (built over a disjoint shard) into this one."""
        for address in other._addresses:  # pylint: disable=protected-access
            self.intern(address)
        for record in other.merge_log:
            self.union(record.left, record.right, record.tag, record.txid)

        other_tags = {bit: tag for tag, bit in other._tag_bits.items()}  # pylint: disable=protected-access
        for index, address in enumerate(other._addresses):  # pylint: disable=protected-access
            mask = other._tag_mask[index]  # pylint: disable=protected-access
            if not mask or other._root(index) != index:  # pylint: disable=protected-access
                continue
            root = self.find(address)
            for bit, tag in other_tags.items():
                if mask & bit:
                    self._tag_mask[root] |= self._tag_bit(tag)

    def finalize(self) -> list[Cluster]:
        """
        Emit clusters sorted by representative.

        Members are sorted ascending; str ordering matches bytewise UTF-8 ordering.
        """
        members_by_root: dict[int, list[str]] = {}
        for index, address in enumerate(self._addresses):
            members_by_root.setdefault(self._root(index), []).append(address)

        tag_names = sorted(self._tag_bits.items(), key=lambda item: item[0])
        groups = []
        for root, members in members_by_root.items():
            members.sort()
            mask = self._tag_mask[root]
            heuristics = tuple(tag for tag, bit in tag_names if mask & bit)
            groups.append((members, heuristics))
        groups.sort(key=lambda group: group[0][0])

        return [
            Cluster(
                cluster_id=cluster_id,
                representative=members[0],
                addresses=tuple(members),
                heuristics=heuristics,
            )
            for cluster_id, (members, heuristics) in enumerate(groups)
        ]
