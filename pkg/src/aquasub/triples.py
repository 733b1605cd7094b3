"""Parsers and writers for the three supported edge interchange formats.

Supported inputs:

* a line-oriented N-Triples subset (IRIs/CURIEs in angle brackets, plain or
  datatype-tagged string literals, ``#`` comments),
* KGTK-style tab-separated edge files with the fixed column order
  ``id<TAB>node1<TAB>label<TAB>node2``,
* water-footprint CSV tables with header ``name,wf_m3_per_ton,source``.

All parsers preserve document order, report 1-based source line numbers on
every error, and support a strict mode (fail on first error, the default)
and a lenient mode (collect errors, skip bad lines). Writers emit a
canonical form such that ``parse(write(x)) == x``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union


class ParseError(ValueError):
    """Base class for all interchange-format errors; carries a 1-based line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MalformedLine(ParseError):
    def __init__(self, line: int, reason: str):
        super().__init__(reason, line)
        self.reason = reason


class MalformedHeader(ParseError):
    pass


class DuplicateEdgeId(ParseError):
    def __init__(self, edge_id: str, line: int):
        super().__init__(f"duplicate edge id {edge_id!r}", line)
        self.edge_id = edge_id


class ColumnCount(ParseError):
    def __init__(self, line: int, found: int, expected: int):
        super().__init__(f"expected {expected} columns, found {found}", line)
        self.found = found
        self.expected = expected


class NegativeValue(ParseError):
    def __init__(self, line: int, value: float):
        super().__init__(f"negative value {value}", line)
        self.value = value


class UnparsableNumber(ParseError):
    def __init__(self, line: int, text: str):
        super().__init__(f"not a number: {text!r}", line)
        self.text = text


#: datatype local names treated as numeric when they tag a literal
NUMERIC_DATATYPES = frozenset(
    {"decimal", "double", "float", "integer", "int", "long", "nonNegativeInteger"}
)


def local_name(iri: str) -> str:
    """Last path segment of an IRI/CURIE (after ``#``, ``/`` or ``:``)."""
    for sep in ("#", "/", ":"):
        if sep in iri:
            iri = iri.rsplit(sep, 1)[1]
    return iri


def format_number(value: float) -> str:
    """Canonical decimal rendering: integral values lose the ``.0`` suffix."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True)
class Literal:
    """A literal edge value: exactly one of a string or a decimal number,
    optionally carrying a datatype/unit tag."""

    value: Union[str, float]
    tag: Optional[str] = None

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.value, float)

    def lexical(self) -> str:
        return format_number(self.value) if self.is_numeric else str(self.value)


@dataclass(frozen=True)
class RawTriple:
    subject: str
    predicate: str
    object: Union[str, Literal]
    line: int = 0


@dataclass(frozen=True)
class KgtkEdgeRow:
    id: str
    node1: str
    label: str
    node2: str


@dataclass(frozen=True)
class WfRecord:
    name: str
    wf_value: float
    source: str


# --- N-Triples subset ---------------------------------------------------

_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}
_UNESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t"}


def _fail(strict: bool, errors: Optional[List[ParseError]], err: ParseError) -> None:
    if strict:
        raise err
    if errors is not None:
        errors.append(err)


def _read_iri(text: str, pos: int, lineno: int) -> tuple:
    if pos >= len(text) or text[pos] != "<":
        raise MalformedLine(lineno, "expected '<'")
    end = text.find(">", pos + 1)
    if end < 0:
        raise MalformedLine(lineno, "unbalanced angle brackets")
    iri = text[pos + 1 : end]
    if not iri:
        raise MalformedLine(lineno, "empty IRI")
    if any(c.isspace() for c in iri):
        raise MalformedLine(lineno, "whitespace inside IRI")
    return iri, end + 1


def _read_string(text: str, pos: int, lineno: int) -> tuple:
    # pos points at the opening quote
    out = []
    i = pos + 1
    while i < len(text):
        c = text[i]
        if c == '"':
            return "".join(out), i + 1
        if c == "\\":
            if i + 1 >= len(text):
                raise MalformedLine(lineno, "dangling escape")
            esc = text[i + 1]
            if esc not in _ESCAPES:
                raise MalformedLine(lineno, f"unsupported escape \\{esc}")
            out.append(_ESCAPES[esc])
            i += 2
            continue
        out.append(c)
        i += 1
    raise MalformedLine(lineno, "unbalanced quotes")


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in " \t":
        pos += 1
    return pos


def _parse_assertion(line: str, lineno: int) -> RawTriple:
    pos = _skip_ws(line, 0)
    if line[pos] == "_":
        raise MalformedLine(lineno, "blank nodes are not supported")
    subject, pos = _read_iri(line, pos, lineno)
    pos = _skip_ws(line, pos)
    predicate, pos = _read_iri(line, pos, lineno)
    pos = _skip_ws(line, pos)
    if pos >= len(line):
        raise MalformedLine(lineno, "missing object")

    obj: Union[str, Literal]
    if line[pos] == "<":
        obj, pos = _read_iri(line, pos, lineno)
    elif line[pos] == '"':
        text, pos = _read_string(line, pos, lineno)
        tag = None
        if line.startswith("^^", pos):
            tag, pos = _read_iri(line, pos + 2, lineno)
        elif pos < len(line) and line[pos] == "@":
            raise MalformedLine(lineno, "language tags are not supported")
        if tag is not None and local_name(tag) in NUMERIC_DATATYPES:
            try:
                obj = Literal(float(text), tag)
            except ValueError:
                raise MalformedLine(lineno, f"literal is not a number: {text!r}")
        else:
            obj = Literal(text, tag)
    elif line[pos] == "_":
        raise MalformedLine(lineno, "blank nodes are not supported")
    else:
        raise MalformedLine(lineno, f"unexpected object start {line[pos]!r}")

    pos = _skip_ws(line, pos)
    if pos >= len(line) or line[pos] != ".":
        raise MalformedLine(lineno, "missing terminal dot")
    rest = line[pos + 1 :].strip()
    if rest:
        raise MalformedLine(lineno, f"trailing content after dot: {rest!r}")
    return RawTriple(subject, predicate, obj, lineno)


def parse_ntriples(
    text: str,
    strict: bool = True,
    errors: Optional[List[ParseError]] = None,
) -> List[RawTriple]:
    """Parse an N-Triples subset document into triples, in document order.

    In strict mode the first malformed line raises :class:`MalformedLine`.
    In lenient mode malformed lines are skipped and appended to ``errors``
    when a list is given.
    """
    triples: List[RawTriple] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            triples.append(_parse_assertion(line, lineno))
        except MalformedLine as err:
            _fail(strict, errors, err)
    return triples


def _escape_string(value: str) -> str:
    return "".join(_UNESCAPES.get(c, c) for c in value)


def write_ntriples(triples: Sequence[RawTriple]) -> str:
    """Serialize triples to canonical N-Triples text (one line per triple)."""
    lines = []
    for t in triples:
        if isinstance(t.object, Literal):
            lit = t.object
            if lit.is_numeric:
                tag = lit.tag if lit.tag is not None else "xsd:decimal"
                obj = f'"{format_number(lit.value)}"^^<{tag}>'
            elif lit.tag is not None:
                obj = f'"{_escape_string(lit.value)}"^^<{lit.tag}>'
            else:
                obj = f'"{_escape_string(lit.value)}"'
        else:
            obj = f"<{t.object}>"
        lines.append(f"<{t.subject}> <{t.predicate}> {obj} .\n")
    return "".join(lines)


# --- KGTK edge TSV --------------------------------------------------------

KGTK_COLUMNS = ("id", "node1", "label", "node2")
KGTK_HEADER = "\t".join(KGTK_COLUMNS)


def parse_kgtk_edges(
    text: str,
    strict: bool = True,
    errors: Optional[List[ParseError]] = None,
) -> List[KgtkEdgeRow]:
    """Parse a KGTK edge TSV document into rows, in file order."""
    lines = text.splitlines()
    if not lines or lines[0] != KGTK_HEADER:
        found = lines[0] if lines else ""
        raise MalformedHeader(f"expected header {KGTK_HEADER!r}, found {found!r}", 1)
    rows: List[KgtkEdgeRow] = []
    seen = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            _fail(strict, errors, ColumnCount(lineno, len(fields), 4))
            continue
        edge_id, node1, label, node2 = fields
        if edge_id in seen:
            _fail(strict, errors, DuplicateEdgeId(edge_id, lineno))
            continue
        seen[edge_id] = lineno
        rows.append(KgtkEdgeRow(edge_id, node1, label, node2))
    return rows


def write_kgtk_edges(rows: Sequence[KgtkEdgeRow]) -> str:
    """Serialize rows to the canonical KGTK TSV form (header, LF line ends).

    Raises ``ValueError`` if a row violates the format invariants (duplicate
    ids, embedded tabs or newlines); writers only accept valid rows.
    """
    seen = set()
    out = io.StringIO()
    out.write(KGTK_HEADER + "\n")
    for row in rows:
        fields = (row.id, row.node1, row.label, row.node2)
        for field in fields:
            if "\t" in field or "\n" in field:
                raise ValueError(f"field contains tab or newline: {field!r}")
        if not row.id:
            raise ValueError("empty edge id")
        if row.id in seen:
            raise ValueError(f"duplicate edge id {row.id!r}")
        seen.add(row.id)
        out.write("\t".join(fields) + "\n")
    return out.getvalue()


# --- water-footprint CSV ---------------------------------------------------

WF_HEADER = ("name", "wf_m3_per_ton", "source")


def parse_wf_table(
    text: str,
    strict: bool = True,
    errors: Optional[List[ParseError]] = None,
) -> List[WfRecord]:
    """Parse a water-footprint CSV table into records, in file order."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedHeader("empty document", 1)
    if tuple(header) != WF_HEADER:
        raise MalformedHeader(
            f"expected header {','.join(WF_HEADER)!r}, found {','.join(header)!r}", 1
        )
    records: List[WfRecord] = []
    for row in reader:
        lineno = reader.line_num
        if not row:
            continue
        if len(row) != 3:
            _fail(strict, errors, ColumnCount(lineno, len(row), 3))
            continue
        name, wf_text, source = row
        if not name:
            _fail(strict, errors, MalformedLine(lineno, "empty ingredient name"))
            continue
        try:
            wf = float(wf_text)
        except ValueError:
            _fail(strict, errors, UnparsableNumber(lineno, wf_text))
            continue
        if wf < 0:
            _fail(strict, errors, NegativeValue(lineno, wf))
            continue
        records.append(WfRecord(name, wf, source))
    return records
