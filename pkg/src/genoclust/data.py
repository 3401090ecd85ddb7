"""Genotype matrices: parsing, dense allele relabeling and count tables.

Allele labels are stored 0-based (``0 .. A_l - 1``) in ascending order of
the raw integer codes read from file. Loci are likewise indexed from 0.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

MISSING_CODE = -9


class GenotypeFormatError(ValueError):
    """Raised when a genotype file or array cannot be turned into a dataset."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class AlleleIndex:
    """Per-locus mapping between raw allele codes and dense labels."""

    raw_codes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for l, codes in enumerate(self.raw_codes):
            if len(codes) < 1:
                raise ValueError(f"locus {l} has no observed alleles")
            if list(codes) != sorted(set(codes)):
                raise ValueError(f"raw codes at locus {l} must be strictly increasing")

    @property
    def n_loci(self) -> int:
        return len(self.raw_codes)

    @property
    def n_alleles(self) -> np.ndarray:
        """A_l for every locus."""
        return np.array([len(c) for c in self.raw_codes], dtype=np.int64)

    @property
    def n_genotypes(self) -> np.ndarray:
        """G_l = A_l (A_l + 1) / 2 distinct unordered genotypes per locus."""
        a = self.n_alleles
        return a * (a + 1) // 2

    @property
    def max_alleles(self) -> int:
        return int(self.n_alleles.max())

    def allele_mask(self) -> np.ndarray:
        """Boolean (L, max_alleles) mask of valid label positions."""
        a = self.n_alleles
        return np.arange(self.max_alleles)[None, :] < a[:, None]

    def encode(self, locus: int, code: int) -> int:
        codes = self.raw_codes[locus]
        pos = int(np.searchsorted(codes, code))
        if pos >= len(codes) or codes[pos] != code:
            raise KeyError(f"allele code {code} not observed at locus {locus}")
        return pos

    def decode(self, locus: int, label: int) -> int:
        return self.raw_codes[locus][label]


@dataclass(frozen=True, eq=False)
class GenotypeDataset:
    """Complete diploid genotypes of ``n`` individuals at ``L`` loci.

    ``genotypes`` has shape ``(n, L, 2)`` and holds dense labels with the two
    alleles of every locus sorted so that ``genotypes[i, l, 0] <= genotypes[i, l, 1]``.
    """

    genotypes: np.ndarray
    index: AlleleIndex
    ids: tuple[str, ...]
    locus_names: tuple[str, ...]
    _table: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        g = np.ascontiguousarray(self.genotypes, dtype=np.int64)
        if g.ndim != 3 or g.shape[2] != 2:
            raise GenotypeFormatError(f"genotypes must have shape (n, L, 2), got {g.shape}")
        n, L, _ = g.shape
        if n == 0:
            raise GenotypeFormatError("dataset has zero individuals")
        if L == 0:
            raise GenotypeFormatError("dataset has zero loci")
        if self.index.n_loci != L:
            raise GenotypeFormatError("allele index does not match the number of loci")
        if len(self.ids) != n or len(self.locus_names) != L:
            raise GenotypeFormatError("identifier or locus-name count mismatch")
        a = self.index.n_alleles
        if g.min() < 0 or np.any(g.max(axis=(0, 2)) >= a):
            raise GenotypeFormatError("allele label outside 0..A_l-1")
        g = np.sort(g, axis=2)
        g.setflags(write=False)
        object.__setattr__(self, "genotypes", g)
        uniq, inverse, counts = np.unique(
            g.reshape(n, 2 * L), axis=0, return_inverse=True, return_counts=True
        )
        uniq = uniq.reshape(-1, L, 2)
        for arr in (uniq, inverse, counts):
            arr.setflags(write=False)
        object.__setattr__(self, "_table", (uniq, inverse.reshape(-1), counts))

    @property
    def n(self) -> int:
        return self.genotypes.shape[0]

    @property
    def n_loci(self) -> int:
        return self.genotypes.shape[1]

    @property
    def unique_genotypes(self) -> np.ndarray:
        """Distinct multilocus genotypes, shape ``(U, L, 2)``, lexicographically sorted."""
        return self._table[0]

    @property
    def inverse(self) -> np.ndarray:
        """Row of ``unique_genotypes`` for every individual."""
        return self._table[1]

    @property
    def counts(self) -> np.ndarray:
        """``n_u`` for every row of ``unique_genotypes``."""
        return self._table[2]

    def raw_genotypes(self) -> np.ndarray:
        """Genotypes translated back to the original allele codes."""
        out = np.empty_like(self.genotypes)
        for l, codes in enumerate(self.index.raw_codes):
            out[:, l, :] = np.asarray(codes, dtype=np.int64)[self.genotypes[:, l, :]]
        return out

    @classmethod
    def from_codes(
        cls,
        codes,
        ids: Optional[Sequence[str]] = None,
        locus_names: Optional[Sequence[str]] = None,
    ) -> "GenotypeDataset":
        """Build a dataset from raw integer codes of shape ``(n, L, 2)`` or ``(n, 2L)``."""
        arr = np.asarray(codes)
        if arr.ndim == 2:
            if arr.shape[1] % 2:
                raise GenotypeFormatError("flat genotype arrays need an even number of columns")
            arr = arr.reshape(arr.shape[0], arr.shape[1] // 2, 2)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise GenotypeFormatError(f"expected shape (n, L, 2) or (n, 2L), got {arr.shape}")
        if arr.shape[0] == 0:
            raise GenotypeFormatError("dataset has zero individuals")
        if arr.shape[1] == 0:
            raise GenotypeFormatError("dataset has zero loci")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise GenotypeFormatError("allele codes must be integers")
        arr = arr.astype(np.int64)
        bad = np.argwhere(arr == MISSING_CODE)
        if len(bad):
            i, l, c = bad[0]
            raise GenotypeFormatError(
                "missing-data code -9 is not supported", row=int(i) + 1, column=int(2 * l + c) + 1
            )
        n, L, _ = arr.shape
        labels = np.empty_like(arr)
        raw = []
        for l in range(L):
            values, inv = np.unique(arr[:, l, :], return_inverse=True)
            labels[:, l, :] = inv.reshape(n, 2)
            raw.append(tuple(int(v) for v in values))
        if ids is None:
            ids = [f"ind{i + 1}" for i in range(n)]
        if locus_names is None:
            locus_names = [f"L{l + 1}" for l in range(L)]
        return cls(labels, AlleleIndex(tuple(raw)), tuple(map(str, ids)), tuple(map(str, locus_names)))

    def subset(self, rows) -> "GenotypeDataset":
        """Dataset restricted to ``rows``, relabeled against the alleles still observed."""
        rows = np.asarray(rows)
        return GenotypeDataset.from_codes(
            self.raw_genotypes()[rows], [self.ids[i] for i in rows], self.locus_names
        )


def parse_genotypes(stream: TextIO | str) -> GenotypeDataset:
    """Read the whitespace-separated genotype format.

    The first line names the ``L`` loci. Every following non-blank line holds an
    individual identifier then ``2L`` integer allele codes.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = iter(enumerate(stream, start=1))
    header = None
    for lineno, line in lines:
        if line.strip():
            header = line.split()
            break
    if header is None:
        raise GenotypeFormatError("empty input, no header line")
    L = len(header)
    ids: list[str] = []
    rows: list[list[int]] = []
    for lineno, line in lines:
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 2 * L + 1:
            raise GenotypeFormatError(
                f"expected {2 * L + 1} fields (id + 2x{L} alleles), found {len(tokens)}", row=lineno
            )
        values = []
        for col, tok in enumerate(tokens[1:], start=2):
            try:
                v = int(tok)
            except ValueError:
                raise GenotypeFormatError(f"non-integer allele code {tok!r}", row=lineno, column=col) from None
            if v == MISSING_CODE:
                raise GenotypeFormatError("missing-data code -9 is not supported", row=lineno, column=col)
            values.append(v)
        ids.append(tokens[0])
        rows.append(values)
    if not rows:
        raise GenotypeFormatError("no individuals after the header")
    return GenotypeDataset.from_codes(np.array(rows, dtype=np.int64), ids, header)


def read_genotypes(path) -> GenotypeDataset:
    with open(path) as fh:
        return parse_genotypes(fh)


def format_genotypes(ds: GenotypeDataset) -> str:
    raw = ds.raw_genotypes().reshape(ds.n, -1)
    lines = [" ".join(ds.locus_names)]
    for ident, row in zip(ds.ids, raw):
        lines.append(ident + " " + " ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_genotypes(ds: GenotypeDataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_genotypes(ds))


def genotype_counts(ds: GenotypeDataset) -> list[tuple[tuple[tuple[int, int], ...], int]]:
    """Distinct multilocus genotypes and how many individuals carry each."""
    table = []
    for geno, count in zip(ds.unique_genotypes, ds.counts):
        key = tuple((int(a), int(b)) for a, b in geno)
        table.append((key, int(count)))
    return table


def allele_copy_counts(genotypes: np.ndarray, n_alleles: Iterable[int]) -> np.ndarray:
    """Copies of each allele carried by every row: shape ``(rows, L, max_alleles)``, values 0..2."""
    n_alleles = list(n_alleles)
    rows, L, _ = genotypes.shape
    out = np.zeros((rows, L, max(n_alleles)), dtype=np.float64)
    r = np.arange(rows)[:, None]
    l = np.arange(L)[None, :]
    np.add.at(out, (r, l, genotypes[:, :, 0]), 1.0)
    np.add.at(out, (r, l, genotypes[:, :, 1]), 1.0)
    return out
