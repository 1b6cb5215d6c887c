"""Columnar table model: columns, pages, chunks and snapshots.

A table is tracked purely by positions. Each column stores a fixed number of
tuples per page, so the page holding tuple ``t`` of a column is
``t // tuples_per_page``. Chunks are logical tuple ranges of ``chunk_size``
tuples; translating a chunk to pages is done per column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

DEFAULT_CHUNK_SIZE = 100_000
DEFAULT_PAGE_SIZE = 65_536


class StorageError(ValueError):
    """Raised for out-of-bounds positions or unknown columns."""


class PageId(NamedTuple):
    table_version: int
    column_id: int
    page_index: int


class ChunkId(NamedTuple):
    table_version: int
    chunk_index: int


class TupleRange(NamedTuple):
    """Half-open range ``[begin, end)`` of tuple positions."""

    begin: int
    end: int

    def __len__(self) -> int:
        return max(0, self.end - self.begin)

    def intersect(self, other: "TupleRange") -> "TupleRange":
        lo = max(self.begin, other.begin)
        hi = min(self.end, other.end)
        return TupleRange(lo, max(lo, hi))


@dataclass(frozen=True)
class ColumnDef:
    column_id: int
    tuples_per_page: int
    page_size_bytes: int = DEFAULT_PAGE_SIZE

    def __post_init__(self):
        if self.tuples_per_page < 1:
            raise StorageError(f"tuples_per_page must be >= 1, got {self.tuples_per_page}")


@dataclass(frozen=True)
class Snapshot:
    """Per-column lists of physical page numbers visible to one transaction.

    Position ``i`` of a column's list is the page holding tuples
    ``[i * tpp, (i + 1) * tpp)``. Appends add pages at the end; a checkpoint
    produces a snapshot with a new ``table_version`` and fresh pages.
    """

    snapshot_id: int
    table_version: int
    tuple_count: int
    pages_per_column: dict[int, tuple[int, ...]]
    is_master: bool = False


@dataclass(frozen=True)
class TableDef:
    table_id: int
    tuple_count: int
    columns: tuple[ColumnDef, ...]
    chunk_size: int = DEFAULT_CHUNK_SIZE
    version: int | None = None
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.tuple_count < 0:
            raise StorageError("tuple_count must be >= 0")
        if self.chunk_size < 1:
            raise StorageError("chunk_size must be >= 1")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "_by_id", {c.column_id: c for c in self.columns})
        if len(self._by_id) != len(self.columns):
            raise StorageError("duplicate column ids")
        if self.version is None:
            object.__setattr__(self, "version", self.table_id)

    @property
    def column_ids(self) -> tuple[int, ...]:
        return tuple(c.column_id for c in self.columns)

    @property
    def n_chunks(self) -> int:
        return -(-self.tuple_count // self.chunk_size)

    def column(self, column_id: int) -> ColumnDef:
        try:
            return self._by_id[column_id]
        except KeyError:
            raise StorageError(f"unknown column {column_id!r} in table {self.table_id}") from None

    def n_pages(self, column_id: int) -> int:
        return -(-self.tuple_count // self.column(column_id).tuples_per_page)

    def page_size(self, page: PageId) -> int:
        return self.column(page.column_id).page_size_bytes

    def master_snapshot(self, snapshot_id: int = 0) -> Snapshot:
        pages = {c.column_id: tuple(range(self.n_pages(c.column_id))) for c in self.columns}
        return Snapshot(snapshot_id, self.version, self.tuple_count, pages, is_master=True)

    def page_positions(self, column_id: int, rng: TupleRange, tuple_count: int | None = None) -> range:
        """Positions (not identifiers) of the pages a tuple range touches."""
        limit = self.tuple_count if tuple_count is None else tuple_count
        if rng.begin < 0 or rng.end > limit or rng.begin > rng.end:
            raise StorageError(f"range {tuple(rng)} outside [0, {limit})")
        tpp = self.column(column_id).tuples_per_page
        if rng.begin == rng.end:
            return range(0)
        return range(rng.begin // tpp, -(-rng.end // tpp))

    def pages_for_range(self, column_id: int, rng: TupleRange, snapshot: Snapshot | None = None) -> list[PageId]:
        if snapshot is None:
            positions = self.page_positions(column_id, rng)
            return [PageId(self.version, column_id, i) for i in positions]
        positions = self.page_positions(column_id, rng, snapshot.tuple_count)
        physical = snapshot.pages_per_column[column_id]
        return [PageId(snapshot.table_version, column_id, physical[i]) for i in positions]

    def chunk_range(self, chunk_index: int, tuple_count: int | None = None) -> TupleRange:
        limit = self.tuple_count if tuple_count is None else tuple_count
        begin = chunk_index * self.chunk_size
        if chunk_index < 0 or begin >= limit:
            raise StorageError(f"chunk {chunk_index} outside table of {limit} tuples")
        return TupleRange(begin, min(begin + self.chunk_size, limit))

    def chunk_pages(self, chunk: ChunkId | int, columns: Iterable[int] | None = None,
                    snapshot: Snapshot | None = None) -> set[PageId]:
        index = chunk.chunk_index if isinstance(chunk, ChunkId) else chunk
        limit = None if snapshot is None else snapshot.tuple_count
        rng = self.chunk_range(index, limit)
        cols = self.column_ids if columns is None else columns
        out: set[PageId] = set()
        for col in cols:
            out.update(self.pages_for_range(col, rng, snapshot))
        return out

    def chunk_of_sid(self, sid: int, tuple_count: int | None = None) -> ChunkId:
        limit = self.tuple_count if tuple_count is None else tuple_count
        if sid < 0 or sid >= limit:
            raise StorageError(f"sid {sid} outside [0, {limit})")
        return ChunkId(self.version, sid // self.chunk_size)

    def chunks_for_range(self, rng: TupleRange) -> range:
        if rng.begin >= rng.end:
            return range(0)
        return range(rng.begin // self.chunk_size, -(-rng.end // self.chunk_size))


def pages_for_range(table: TableDef, column: int, rng: TupleRange | Sequence[int]) -> list[PageId]:
    return table.pages_for_range(column, TupleRange(*rng))


def chunk_pages(table: TableDef, chunk: ChunkId | int, columns: Iterable[int] | None = None) -> set[PageId]:
    return table.chunk_pages(chunk, columns)


def chunk_of_sid(table: TableDef, sid: int) -> ChunkId:
    return table.chunk_of_sid(sid)


def make_table(tuple_count: int, tuples_per_page: Sequence[int], chunk_size: int = DEFAULT_CHUNK_SIZE,
               page_size: int = DEFAULT_PAGE_SIZE, table_id: int = 0, version: int | None = None) -> TableDef:
    """Build a table whose columns are numbered 0..k-1."""
    cols = tuple(ColumnDef(i, tpp, page_size) for i, tpp in enumerate(tuples_per_page))
    return TableDef(table_id, tuple_count, cols, chunk_size, version)
