"""Readers and writers for proportion tables.

Two text formats are understood:

* variant tables with columns ``Chr Pos AlleleRef AlleleVar NCalls Depth``,
  tab-, comma- or whitespace-separated, header optional;
* generic proportion CSV files with a header naming ``n``, ``d`` and
  optionally ``id``.

Every error raised while reading rows is a :class:`ParseError` carrying the
physical line number of the offending row.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .errors import InputError, ParseError
from .table import ProportionTable

VARIANT_COLUMNS = ("Chr", "Pos", "AlleleRef", "AlleleVar", "NCalls", "Depth")
BASES = frozenset("ACGT")
WHITESPACE = "whitespace"


@dataclass(frozen=True)
class VariantRecord:
    chromosome: str
    position: int
    allele_ref: str
    allele_var: str
    n_calls: int
    depth: int

    @property
    def id(self) -> str:
        return f"{self.chromosome}:{self.position}:{self.allele_ref}>{self.allele_var}"


def _split(line: str, delimiter: str) -> list[str]:
    if delimiter == WHITESPACE:
        return line.split()
    return [f.strip() for f in next(csv.reader([line], delimiter=delimiter))]


def _sniff(line: str) -> str:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return WHITESPACE


def _data_lines(stream: Iterable[str]) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\r\n")
        if line.strip() and not line.lstrip().startswith("#"):
            yield lineno, line


def _int(text: str, what: str, lineno: int) -> int:
    if not re.fullmatch(r"[+-]?\d+", text):
        raise ParseError(f"{what} is not an integer: {text!r}", lineno)
    return int(text)


def parse_variant_table(
    stream: Iterable[str],
    delimiter: str | None = None,
    header: bool | None = None,
) -> ProportionTable:
    """Read a variant table into one column per row, in input order.

    ``delimiter`` is ``"\\t"``, ``","`` or ``"whitespace"``; by default it is
    inferred from the first non-blank line. ``header=None`` detects a header
    by its column names. Blank lines and ``#`` comments are skipped.
    """
    lines = _data_lines(stream)
    first = next(lines, None)
    if first is None:
        raise InputError("no data rows")
    delimiter = delimiter or _sniff(first[1])
    fields = _split(first[1], delimiter)
    names = {f.lower(): i for i, f in enumerate(fields)}
    if header is None:
        header = all(c.lower() in names for c in VARIANT_COLUMNS)
    if header:
        missing = [c for c in VARIANT_COLUMNS if c.lower() not in names]
        if missing:
            raise ParseError(f"header lacks column(s) {', '.join(missing)}", first[0])
        positions = [names[c.lower()] for c in VARIANT_COLUMNS]
        rows = lines
    else:
        positions = list(range(len(VARIANT_COLUMNS)))
        rows = _chain_first(first, lines)

    records = []
    seen = {}
    for lineno, line in rows:
        fields = _split(line, delimiter)
        if len(fields) <= max(positions):
            raise ParseError(
                f"expected at least {max(positions) + 1} fields, found {len(fields)}", lineno
            )
        chrom, pos, ref, var, calls, depth = (fields[i] for i in positions)
        rec = _variant_record(chrom, pos, ref, var, calls, depth, lineno)
        if rec.id in seen:
            raise ParseError(f"duplicate variant {rec.id} (first seen on line {seen[rec.id]})", lineno)
        seen[rec.id] = lineno
        records.append(rec)
    if not records:
        raise InputError("no data rows")
    return ProportionTable(
        tuple(r.id for r in records),
        [r.n_calls for r in records],
        [r.depth for r in records],
        meta=tuple(records),
    )


def _chain_first(first, rest):
    yield first
    yield from rest


def _variant_record(chrom, pos, ref, var, calls, depth, lineno) -> VariantRecord:
    if not chrom:
        raise ParseError("empty chromosome name", lineno)
    position = _int(pos, "Pos", lineno)
    if position < 1:
        raise ParseError(f"Pos must be positive, got {position}", lineno)
    ref, var = ref.upper(), var.upper()
    for name, base in (("AlleleRef", ref), ("AlleleVar", var)):
        if base not in BASES:
            raise ParseError(f"{name} must be one of A, C, G, T, got {base!r}", lineno)
    if ref == var:
        raise ParseError(f"AlleleRef and AlleleVar are both {ref}", lineno)
    n = _int(calls, "NCalls", lineno)
    d = _int(depth, "Depth", lineno)
    if d < 1:
        raise ParseError(f"Depth must be positive, got {d}", lineno)
    if n < 0:
        raise ParseError(f"NCalls must be nonnegative, got {n}", lineno)
    if n > d:
        raise ParseError(f"NCalls exceeds Depth (need n <= d): {n} > {d}", lineno)
    return VariantRecord(chrom, position, ref, var, n, d)


def parse_proportions_csv(stream: Iterable[str]) -> ProportionTable:
    """Read ``id,n,d`` rows; ids are numbered from 1 when the column is absent."""
    lines = _data_lines(stream)
    first = next(lines, None)
    if first is None:
        raise InputError("no data rows")
    names = [f.strip().lower() for f in _split(first[1], ",")]
    for required in ("n", "d"):
        if required not in names:
            raise ParseError(f"header must name column {required!r}", first[0])
    i_n, i_d = names.index("n"), names.index("d")
    i_id = names.index("id") if "id" in names else None

    ids, ns, ds = [], [], []
    seen = {}
    for lineno, line in lines:
        fields = _split(line, ",")
        if len(fields) != len(names):
            raise ParseError(f"expected {len(names)} fields, found {len(fields)}", lineno)
        ident = fields[i_id] if i_id is not None else str(len(ids) + 1)
        if not ident:
            raise ParseError("empty id", lineno)
        n = _int(fields[i_n], "n", lineno)
        d = _int(fields[i_d], "d", lineno)
        if d < 1:
            raise ParseError(f"d must be positive, got {d}", lineno)
        if n < 0:
            raise ParseError(f"n must be nonnegative, got {n}", lineno)
        if n > d:
            raise ParseError(f"n exceeds d (need n <= d): {n} > {d}", lineno)
        if ident in seen:
            raise ParseError(f"duplicate id {ident!r} (first seen on line {seen[ident]})", lineno)
        seen[ident] = lineno
        ids.append(ident)
        ns.append(n)
        ds.append(d)
    if not ids:
        raise InputError("no data rows")
    return ProportionTable(tuple(ids), ns, ds)


def write_proportions_csv(table: ProportionTable, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["id", "n", "d"])
    for row in zip(table.ids, table.n.tolist(), table.d.tolist()):
        writer.writerow(row)


def write_variant_table(table: ProportionTable, stream: IO[str], delimiter: str = "\t") -> None:
    """Write a variant table; column ids must have the ``Chr:Pos:Ref>Var`` form."""
    stream.write(delimiter.join(VARIANT_COLUMNS) + "\n")
    for ident, n, d in zip(table.ids, table.n.tolist(), table.d.tolist()):
        m = re.fullmatch(r"(.+):(\d+):([ACGT])>([ACGT])", ident)
        if m is None:
            raise InputError(f"column id {ident!r} is not of the form Chr:Pos:Ref>Var")
        stream.write(delimiter.join([*m.groups(), str(n), str(d)]) + "\n")


def read_table(path, fmt: str = "auto") -> ProportionTable:
    """Open ``path`` and parse it as ``"variants"``, ``"proportions"`` or ``"auto"``.

    ``auto`` picks the proportions reader when the first line is a CSV header
    naming ``n`` and ``d``.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not UTF-8 text") from exc
    lines = text.splitlines(keepends=True)
    if fmt == "auto":
        head = next((l for _, l in _data_lines(lines)), "")
        names = {f.strip().lower() for f in head.split(",")}
        fmt = "proportions" if {"n", "d"} <= names else "variants"
    if fmt == "proportions":
        return parse_proportions_csv(lines)
    if fmt == "variants":
        return parse_variant_table(lines)
    raise InputError(f"unknown input format {fmt!r}")
