"""Line-oriented block language for annotations, and the trajectory log format.

A document is a sequence of blocks.  Each block starts with a header such as
``[SPAT] pedestrian_1 @ t=0`` and continues with ``key: value`` lines.  The
grammar is given in EBNF in docs/dsl.md.  Parsing never raises on bad input:
problems come back as ``ParseError`` records carrying line and column.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .model import (
    Action,
    Constraint,
    Element,
    LayerEntry,
    ModalityStream,
    PhysicalAnnotation,
    PredictedEvent,
    Quantity,
    RelationDelta,
    Rule,
    ScenarioAnticipation,
    ScenarioDescription,
    SemanticAnnotation,
    SpatialAnnotation,
    StateInterval,
    StateSample,
    TemporalAnnotation,
    Utterance,
    ViolationRecord,
    as_matrix,
    yaw_matrix,
)
from .schema import canonical, canonical_anticipation

TAGS = (
    "SCENARIO",
    "CONTEXT",
    "RULE",
    "UTTERANCE",
    "MODALITY",
    "ELEMENT",
    "SEM",
    "SPAT",
    "TEMP",
    "PHYS",
    "ANTICIPATE",
    "ACTION",
)
UNITS = ("m", "s", "m/s", "m/s^2", "rad", "rad/s", "m^3", "Hz")

# Unit of the measured value recorded in a violation, per constraint kind.
VIOLATION_UNITS = {"max_speed": "m/s", "max_accel": "m/s^2", "min_gap_rss": "m", "traffic_rule": "m/s"}

DEFAULT_ID = "candidate"
DEFAULT_EGO = "ego"


@dataclass(frozen=True)
class ParseError:
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.message}"


# -- tokens and values ------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_.:+\-/^]*)
  | (?P<punct>[()\[\],=@])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int


class _Fail(Exception):
    def __init__(self, column: int, message: str):
        super().__init__(message)
        self.column = column
        self.message = message


def tokenize(text: str, column0: int = 1) -> List[Token]:
    out = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise _Fail(column0 + pos, f"unexpected character {text[pos]!r}")
        kind = match.lastgroup
        if kind != "ws":
            out.append(Token(kind, match.group(), column0 + pos))  # type: ignore[arg-type]
        pos = match.end()
    return out


@dataclass(frozen=True)
class Atom:
    """One value: a number, vector or interval (each with an optional unit), a word or a string."""

    kind: str  # number | vector | range | word | string | named
    value: object
    unit: Optional[str]
    column: int
    name: str = ""


class _Stream:
    def __init__(self, tokens: Sequence[Token], end_column: int):
        self.tokens = list(tokens)
        self.i = 0
        self.end_column = end_column

    def peek(self, k: int = 0) -> Optional[Token]:
        j = self.i + k
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise _Fail(self.end_column, "unexpected end of line")
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise _Fail(tok.column, f"expected '{text}', got '{tok.text}'")
        return tok

    @property
    def column(self) -> int:
        tok = self.peek()
        return tok.column if tok is not None else self.end_column


def _number(tok: Token) -> float:
    if tok.kind != "number":
        raise _Fail(tok.column, f"expected a number, got '{tok.text}'")
    value = float(tok.text)
    if not math.isfinite(value):
        raise _Fail(tok.column, "number out of range")
    return value


def _unit(stream: _Stream) -> Optional[str]:
    tok = stream.peek()
    if tok is not None and tok.kind == "word" and tok.text in UNITS:
        stream.i += 1
        return tok.text
    return None


def _atom(stream: _Stream) -> Atom:
    tok = stream.next()
    if tok.kind == "number":
        return Atom("number", _number(tok), _unit(stream), tok.column)
    if tok.text == "(":
        values = [_number(stream.next())]
        while stream.peek() is not None and stream.peek().text == ",":  # type: ignore[union-attr]
            stream.i += 1
            values.append(_number(stream.next()))
        stream.expect(")")
        return Atom("vector", tuple(values), _unit(stream), tok.column)
    if tok.text == "[":
        a = _number(stream.next())
        stream.expect(",")
        b = _number(stream.next())
        stream.expect("]")
        return Atom("range", (a, b), _unit(stream), tok.column)
    if tok.kind == "string":
        try:
            text = json.loads(tok.text)
        except ValueError:
            raise _Fail(tok.column, "malformed string escape") from None
        return Atom("string", text, None, tok.column)
    if tok.kind == "word":
        nxt = stream.peek()
        if nxt is not None and nxt.text == "=":
            stream.i += 1
            inner = _atom(stream)
            return Atom("named", inner, None, tok.column, name=tok.text)
        return Atom("word", tok.text, None, tok.column)
    raise _Fail(tok.column, f"unexpected '{tok.text}'")


def parse_value(text: str, column0: int = 1) -> List[List[Atom]]:
    """Comma-separated items, each a sequence of atoms."""
    stream = _Stream(tokenize(text, column0), column0 + len(text))
    items: List[List[Atom]] = []
    current: List[Atom] = []
    while stream.peek() is not None:
        tok = stream.peek()
        if tok.text == ",":  # type: ignore[union-attr]
            if not current:
                raise _Fail(tok.column, "empty list item")  # type: ignore[union-attr]
            items.append(current)
            current = []
            stream.i += 1
            continue
        current.append(_atom(stream))
    if current:
        items.append(current)
    elif items:
        raise _Fail(stream.end_column, "trailing comma")
    return items


# -- document structure -----------------------------------------------------------


@dataclass
class Field:
    key: str
    items: List[List[Atom]]
    line: int
    column: int


@dataclass
class Block:
    tag: str
    target: Optional[str]
    time: Optional[float]
    interval: Optional[Tuple[float, float]]
    line: int
    fields: List[Field] = field(default_factory=list)


@dataclass
class AnnotationDocument:
    blocks: List[Block] = field(default_factory=list)


_HEADER = re.compile(r"^\s*\[([^\]]*)\](.*)$")
_FIELD = re.compile(r"^(\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:(.*)$")


def _parse_header(line_no: int, line: str) -> Block:
    match = _HEADER.match(line)
    if match is None:
        raise _Fail(len(line) + 1, "unterminated block header, expected ']'")
    tag = match.group(1).strip()
    if tag not in TAGS:
        raise _Fail(line.index("[") + 2, f"unknown dimension tag '{tag}'")
    rest_col = match.start(2) + 1
    stream = _Stream(tokenize(match.group(2), rest_col), len(line) + 1)
    target = None
    time = None
    interval = None
    tok = stream.peek()
    if tok is not None and tok.kind == "word":
        target = tok.text
        stream.i += 1
    if stream.peek() is not None:
        stream.expect("@")
        t_tok = stream.next()
        if t_tok.text != "t":
            raise _Fail(t_tok.column, "expected 't=' after '@'")
        stream.expect("=")
        atom = _atom(stream)
        if atom.unit not in (None, "s"):
            raise _Fail(atom.column, f"time must be in s, got {atom.unit}")
        if atom.kind == "number":
            time = float(atom.value)  # type: ignore[arg-type]
        elif atom.kind == "range":
            interval = atom.value  # type: ignore[assignment]
        else:
            raise _Fail(atom.column, "expected a time or an interval [a, b]")
        if stream.peek() is not None:
            raise _Fail(stream.column, f"unexpected '{stream.peek().text}' after header")  # type: ignore[union-attr]
    return Block(tag, target, time, interval, line_no)


def split_lines(text: str) -> List[str]:
    """Lines split on newlines only (with a trailing carriage return dropped), so positions match editors."""
    lines = [line[:-1] if line.endswith("\r") else line for line in text.split("\n")]
    if len(lines) > 1 and lines[-1] == "":
        lines.pop()
    return lines


def parse_document(text: str) -> Tuple[AnnotationDocument, List[ParseError]]:
    """Split text into blocks and tokenized fields (no semantic checks)."""
    doc = AnnotationDocument()
    errors: List[ParseError] = []
    current: Optional[Block] = None
    skipping = False
    for line_no, raw in enumerate(split_lines(text), start=1):
        line = raw.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            if stripped.startswith("["):
                current = _parse_header(line_no, line)
                doc.blocks.append(current)
                skipping = False
                continue
            match = _FIELD.match(line)
            if match is None:
                raise _Fail(len(line) - len(line.lstrip()) + 1, "expected 'key: value' or a block header")
            if current is None:
                if not skipping:
                    raise _Fail(1, "field outside of a block")
                continue
            key = match.group(2)
            value_col = match.start(3) + 1
            items = parse_value(match.group(3), value_col)
            current.fields.append(Field(key, items, line_no, len(match.group(1)) + 1))
        except _Fail as fail:
            errors.append(ParseError(line_no, max(1, min(fail.column, len(line) + 1)), fail.message))
            if stripped.startswith("["):
                current = None
                skipping = True
    return doc, errors


# -- typed interpretation ---------------------------------------------------------


@dataclass
class ParseResult:
    """Outcome of reading an annotation document."""

    description: Optional[ScenarioDescription]
    anticipation: Optional[ScenarioAnticipation] = None
    actions: List[Action] = field(default_factory=list)
    errors: List[ParseError] = field(default_factory=list)
    warnings: List[ParseError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _single(f: Field) -> List[Atom]:
    if len(f.items) != 1:
        col = f.items[1][0].column if len(f.items) > 1 else f.column
        raise _Fail(col, f"'{f.key}' takes a single value")
    return f.items[0]


def _one_atom(f: Field) -> Atom:
    atoms = _single(f)
    if len(atoms) != 1:
        raise _Fail(atoms[1].column, f"'{f.key}' takes a single value")
    return atoms[0]


def _require_unit(atom: Atom, unit: str) -> None:
    if atom.unit is None:
        raise _Fail(atom.column, f"missing unit (expected {unit})")
    if atom.unit != unit:
        raise _Fail(atom.column, f"unit mismatch: expected {unit}, got {atom.unit}")


def _num(atom: Atom, unit: Optional[str]) -> float:
    if atom.kind != "number":
        raise _Fail(atom.column, "expected a number")
    if unit is None:
        if atom.unit is not None:
            raise _Fail(atom.column, f"unexpected unit {atom.unit}")
    else:
        _require_unit(atom, unit)
    return float(atom.value)  # type: ignore[arg-type]


def _vector(atom: Atom, n: int, unit: str) -> Tuple[float, ...]:
    if atom.kind != "vector" or len(atom.value) != n:  # type: ignore[arg-type]
        raise _Fail(atom.column, f"expected a vector of {n} numbers")
    _require_unit(atom, unit)
    return tuple(float(x) for x in atom.value)  # type: ignore[union-attr]


def _range(atom: Atom, unit: str) -> Tuple[float, float]:
    if atom.kind != "range":
        raise _Fail(atom.column, "expected an interval [a, b]")
    _require_unit(atom, unit)
    a, b = atom.value  # type: ignore[misc]
    return float(a), float(b)


def _word(atom: Atom) -> str:
    if atom.kind != "word":
        raise _Fail(atom.column, "expected an identifier")
    return str(atom.value)


def _text(atom: Atom) -> str:
    if atom.kind not in ("word", "string"):
        raise _Fail(atom.column, "expected an identifier or a quoted string")
    return str(atom.value)


def _words(f: Field) -> List[str]:
    out = []
    for item in f.items:
        if len(item) != 1:
            raise _Fail(item[1].column, "expected one identifier per list item")
        out.append(_word(item[0]))
    return out


def _texts(f: Field) -> List[str]:
    out = []
    for item in f.items:
        if len(item) != 1:
            raise _Fail(item[1].column, "expected one value per list item")
        out.append(_text(item[0]))
    return out


def _arity(item: List[Atom], lo: int, hi: int, what: str, f: Field) -> None:
    if not lo <= len(item) <= hi:
        col = item[hi].column if len(item) > hi else (item[0].column if item else f.column)
        raise _Fail(col, f"expected {what}")


def rpy_to_matrix(rpy) -> Tuple:
    roll, pitch, yaw = (float(x) for x in rpy)
    if roll == 0.0 and pitch == 0.0:
        return yaw_matrix(yaw)
    return as_matrix(Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix())


def matrix_to_rpy(orientation) -> Tuple[float, float, float]:
    m = np.asarray(orientation, dtype=float)
    if abs(m[2, 0]) < 1e-12 and abs(m[2, 1]) < 1e-12 and abs(m[0, 2]) < 1e-12 and abs(m[1, 2]) < 1e-12:
        return 0.0, 0.0, math.atan2(m[1, 0], m[0, 0])
    yaw, pitch, roll = Rotation.from_matrix(m).as_euler("ZYX")
    snap = lambda x: 0.0 if abs(x) < 1e-12 else float(x)  # noqa: E731
    return snap(roll), snap(pitch), snap(yaw)


def _sample(item: List[Atom], f: Field) -> StateSample:
    _arity(item, 4, 5, "t s, (x, y, z) m, (roll, pitch, yaw) rad, speed m/s [, yaw_rate rad/s]", f)
    t = _num(item[0], "s")
    pos = _vector(item[1], 3, "m")
    rpy = _vector(item[2], 3, "rad")
    speed = _num(item[3], "m/s")
    yaw_rate = _num(item[4], "rad/s") if len(item) == 5 else None
    return StateSample(t, pos, rpy_to_matrix(rpy), speed, yaw_rate)  # type: ignore[arg-type]


def _param(atom: Atom):
    if atom.kind == "number":
        if atom.unit is None:
            raise _Fail(atom.column, "missing unit")
        return Quantity(float(atom.value), atom.unit)  # type: ignore[arg-type]
    return _text(atom)


def _named_params(atoms: Sequence[Atom]) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for atom in atoms:
        if atom.kind != "named":
            raise _Fail(atom.column, "expected name=value")
        if atom.name in out:
            raise _Fail(atom.column, f"duplicate parameter '{atom.name}'")
        out[atom.name] = _param(atom.value)  # type: ignore[arg-type]
    return out


class _Reader:
    """Turns blocks into model objects, collecting errors and warnings."""

    def __init__(self):
        self.errors: List[ParseError] = []
        self.warnings: List[ParseError] = []
        self.scenario: Optional[Block] = None
        self.desc = ScenarioDescription(DEFAULT_ID, (0.0, 0.0), DEFAULT_EGO)
        self.anticipation: Optional[ScenarioAnticipation] = None
        self.actions: List[Action] = []
        self.seen: Dict[Tuple, int] = {}
        self.layer_of: Dict[str, int] = {}
        # (element id, line, column) references checked once all blocks are read.
        self.refs: List[Tuple[str, int, int]] = []
        self.declared_elements: List[str] = []
        self.mentioned: List[str] = []

    def error(self, line: int, column: int, message: str) -> None:
        self.errors.append(ParseError(line, max(1, column), message))

    def ref(self, element_id: str, f: Field, atom: Atom) -> str:
        self.refs.append((element_id, f.line, atom.column))
        return element_id

    def run_fields(self, block: Block, handlers: Dict[str, Tuple[bool, Callable[[Field], None]]]) -> None:
        """Dispatch fields; ``repeatable`` keys may occur on several lines."""
        used = set()
        for f in block.fields:
            if f.key not in handlers:
                self.warnings.append(ParseError(f.line, f.column, f"unknown key '{f.key}' ignored"))
                continue
            repeatable, handler = handlers[f.key]
            if f.key in used and not repeatable:
                self.error(f.line, f.column, f"duplicate key '{f.key}'")
                continue
            used.add(f.key)
            if not f.items:
                self.error(f.line, f.column, f"'{f.key}' needs a value")
                continue
            try:
                handler(f)
            except _Fail as fail:
                self.error(f.line, fail.column, fail.message)

    def claim(self, key: Tuple, block: Block) -> bool:
        if key in self.seen:
            self.error(block.line, 1, f"duplicate block for {key[0]} {key[1]} (first at line {self.seen[key]})")
            return False
        self.seen[key] = block.line
        return True

    def need_target(self, block: Block) -> bool:
        if block.target is None:
            self.error(block.line, 1, f"[{block.tag}] needs a target id")
            return False
        return True

    def need_time(self, block: Block, kind: str) -> bool:
        if kind == "t" and block.time is None:
            self.error(block.line, 1, f"[{block.tag}] needs '@ t=<seconds>'")
            return False
        if kind == "interval" and block.interval is None:
            self.error(block.line, 1, f"[{block.tag}] needs '@ t=[start, end]'")
            return False
        if kind == "none" and (block.time is not None or block.interval is not None):
            self.error(block.line, 1, f"[{block.tag}] takes no time")
            return False
        return True

    # -- blocks ----------------------------------------------------------------

    def scenario_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "none") and self.claim(("SCENARIO", ""), b)):
            return
        self.desc.id = b.target  # type: ignore[assignment]
        self.scenario = b

        def window(f):
            self.desc.window = _range(_one_atom(f), "s")

        def ego(f):
            atom = _one_atom(f)
            self.desc.ego_id = self.ref(_word(atom), f, atom)

        self.run_fields(b, {"window": (False, window), "ego": (False, ego)})

    def context_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "none") and self.claim(("CONTEXT", b.target), b)):
            return
        entry = LayerEntry(b.target, "", "")  # type: ignore[arg-type]
        layer = [None]
        props = entry.properties

        def set_layer(f):
            atom = _one_atom(f)
            value = _num(atom, None)
            if value != int(value):
                raise _Fail(atom.column, "layer must be an integer")
            layer[0] = int(value)

        def put(name, convert):
            def handler(f):
                props[name] = convert(f)

            return handler

        handlers = {
            "layer": (False, set_layer),
            "kind": (False, lambda f: setattr(entry, "kind", _text(_one_atom(f)))),
            "label": (False, lambda f: setattr(entry, "label", _text(_one_atom(f)))),
            "class": (False, put("class", lambda f: _word(_one_atom(f)))),
            "extent": (False, put("extent", lambda f: list(_vector(_one_atom(f), 3, "m")))),
            "box_offset": (False, put("box_offset", lambda f: list(_vector(_one_atom(f), 2, "m")))),
            "attributes": (False, put("attributes", _texts)),
            "affordances": (False, put("affordances", _words)),
            "materials": (False, put("materials", _texts)),
            "wheelbase": (False, put("wheelbase", lambda f: _num(_one_atom(f), "m"))),
        }
        self.run_fields(b, handlers)
        if layer[0] is None:
            self.error(b.line, 1, "[CONTEXT] needs 'layer'")
            return
        self.desc.context.layers.setdefault(layer[0], []).append(entry)

    def rule_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "none") and self.claim(("RULE", b.target), b)):
            return
        rule = Rule(b.target, "")  # type: ignore[arg-type]
        for f in b.fields:
            try:
                atom = _one_atom(f)
                if f.key == "kind":
                    rule.kind = _word(atom)
                elif f.key in rule.parameters:
                    raise _Fail(f.column, f"duplicate key '{f.key}'")
                else:
                    rule.parameters[f.key] = _param(atom)
            except _Fail as fail:
                self.error(f.line, fail.column, fail.message)
        if not rule.kind:
            self.error(b.line, 1, "[RULE] needs 'kind'")
            return
        self.desc.context.rules.append(rule)

    def utterance_block(self, b: Block) -> None:
        if not self.need_time(b, "t"):
            return
        if b.target is not None:
            self.error(b.line, 1, "[UTTERANCE] takes no target")
            return
        text = [None]

        def set_text(f):
            text[0] = _text(_one_atom(f))

        self.run_fields(b, {"text": (False, set_text)})
        if text[0] is None:
            self.error(b.line, 1, "[UTTERANCE] needs 'text'")
            return
        self.desc.context.driver_channel.append(Utterance(b.time, text[0]))  # type: ignore[arg-type]

    def modality_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "none")):
            return
        stream = ModalityStream(b.target, "")  # type: ignore[arg-type]

        def source(f):
            stream.source = _text(_one_atom(f))

        def sample(f):
            for item in f.items:
                _arity(item, 2, 2, "t s, payload reference", f)
                stream.samples.append((_num(item[0], "s"), _text(item[1])))

        self.run_fields(b, {"source": (False, source), "sample": (True, sample)})
        key = ("MODALITY", (stream.kind, stream.source))
        if self.claim(key, b):
            self.desc.modalities.append(stream)

    def element_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "none") and self.claim(("ELEMENT", b.target), b)):
            return
        element = Element(b.target)  # type: ignore[arg-type]

        def sample(f):
            for item in f.items:
                element.trajectory.append(_sample(item, f))

        self.run_fields(b, {"sample": (True, sample)})
        self.desc.elements.append(element)
        self.declared_elements.append(element.id)

    def sem_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "t") and self.claim(("SEM", b.target, b.time), b)):
            return
        ann = SemanticAnnotation(b.target, b.time, "")  # type: ignore[arg-type]
        got = set()

        def cls(f):
            ann.class_ = _word(_one_atom(f))
            got.add("class")

        def state(f):
            ann.state = _word(_one_atom(f))
            got.add("state")

        self.run_fields(
            b,
            {
                "class": (False, cls),
                "state": (False, state),
                "attributes": (False, lambda f: setattr(ann, "attributes", _texts(f))),
                "affordances": (False, lambda f: setattr(ann, "affordances", _words(f))),
            },
        )
        for key in ("class", "state"):
            if key not in got:
                self.error(b.line, 1, f"[SEM] needs '{key}'")
                return
        self.mentioned.append(ann.element_id)
        self.desc.semantic.append(ann)

    def spat_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "t") and self.claim(("SPAT", b.target, b.time), b)):
            return
        ann = SpatialAnnotation(b.target, b.time)  # type: ignore[arg-type]

        def relation(f):
            for item in f.items:
                _arity(item, 2, 2, "relation other_id", f)
                ann.topology.append((self.ref(_word(item[1]), f, item[1]), _word(item[0])))

        def occluded_by(f):
            for item in f.items:
                _arity(item, 1, 1, "one element id per list item", f)
                ann.occluded_by.append(self.ref(_word(item[0]), f, item[0]))

        self.run_fields(
            b,
            {
                "position": (False, lambda f: setattr(ann, "position", _vector(_one_atom(f), 3, "m"))),
                "orientation": (False, lambda f: setattr(ann, "orientation", rpy_to_matrix(_vector(_one_atom(f), 3, "rad")))),
                "distance_to_ego": (False, lambda f: setattr(ann, "distance_to_ego", _num(_one_atom(f), "m"))),
                "occupancy": (False, lambda f: setattr(ann, "occupancy", _vector(_one_atom(f), 3, "m"))),
                "relation": (True, relation),
                "visibility": (False, lambda f: setattr(ann, "visibility", _word(_one_atom(f)))),
                "occluded_by": (True, occluded_by),
            },
        )
        self.mentioned.append(ann.element_id)
        self.desc.spatial.append(ann)

    def temp_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "interval") and self.claim(("TEMP", b.target), b)):
            return
        ann = TemporalAnnotation(b.target, b.interval)  # type: ignore[arg-type]

        def timed(name, unit):
            def handler(f):
                for item in f.items:
                    _arity(item, 2, 2, f"t s, (x, y, z) {unit}", f)
                    getattr(ann, name).append((_num(item[0], "s"), _vector(item[1], 3, unit)))

            return handler

        def intervals(name):
            def handler(f):
                for item in f.items:
                    _arity(item, 2, 2, "state [start, end] s", f)
                    a, c = _range(item[1], "s")
                    getattr(ann, name).append(StateInterval(_word(item[0]), a, c))

            return handler

        def ordering(f):
            for item in f.items:
                _arity(item, 2, 2, "ordering other_id", f)
                ann.orderings.append((self.ref(_word(item[1]), f, item[1]), _word(item[0])))

        self.run_fields(
            b,
            {
                "velocity": (True, timed("velocity_samples", "m/s")),
                "acceleration": (True, timed("acceleration_samples", "m/s^2")),
                "state": (True, intervals("state_sequence")),
                "ordering": (True, ordering),
                "periodicity": (False, lambda f: setattr(ann, "periodicity", _num(_one_atom(f), "s"))),
                "visibility": (True, intervals("visibility_sequence")),
            },
        )
        self.mentioned.append(ann.element_id)
        self.desc.temporal.append(ann)

    def phys_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "interval") and self.claim(("PHYS", b.target), b)):
            return
        ann = PhysicalAnnotation(b.target, b.interval, "")  # type: ignore[arg-type]
        kinds: Dict[str, str] = {}
        pending: List[Tuple[Field, List[Atom]]] = []

        def model(f):
            ann.model = _word(_one_atom(f))

        def constraint(f):
            for item in f.items:
                if len(item) < 2:
                    raise _Fail(item[0].column, "expected constraint_id kind name=value ...")
                cid, kind = _word(item[0]), _word(item[1])
                ann.constraint_set.append(Constraint(cid, kind, _named_params(item[2:])))  # type: ignore[arg-type]
                kinds[cid] = kind

        def violation(f):
            for item in f.items:
                pending.append((f, item))

        self.run_fields(
            b,
            {
                "model": (False, model),
                "materials": (False, lambda f: setattr(ann, "material_tags", _texts(f))),
                "constraint": (True, constraint),
                "violation": (True, violation),
            },
        )
        for f, item in pending:
            try:
                _arity(item, 3, 3, "constraint_id t s value unit", f)
                cid = _word(item[0])
                t = _num(item[1], "s")
                unit = VIOLATION_UNITS.get(kinds.get(cid, ""))
                if unit is None:
                    if item[2].unit is None:
                        raise _Fail(item[2].column, "missing unit")
                    value = _num(item[2], item[2].unit)
                else:
                    value = _num(item[2], unit)
                ann.violations.append(ViolationRecord(cid, t, value))
            except _Fail as fail:
                self.error(f.line, fail.column, fail.message)
        if not ann.model:
            self.error(b.line, 1, "[PHYS] needs 'model'")
            return
        self.mentioned.append(ann.element_id)
        self.desc.physical.append(ann)

    def anticipate_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "none") and self.claim(("ANTICIPATE", ""), b)):
            return
        ant = ScenarioAnticipation(b.target, 0.0)  # type: ignore[arg-type]
        got_horizon = [False]

        def horizon(f):
            ant.horizon = _num(_one_atom(f), "s")
            got_horizon[0] = True

        def model(f):
            for item in f.items:
                _arity(item, 2, 2, "element_id model", f)
                ant.models[self.ref(_word(item[0]), f, item[0])] = _word(item[1])

        def event(f):
            for item in f.items:
                if len(item) < 3:
                    raise _Fail(item[0].column, "expected t s tag element_id ...")
                t = _num(item[0], "s")
                ids = tuple(self.ref(_word(a), f, a) for a in item[2:])
                ant.predicted_events.append(PredictedEvent(t, _word(item[1]), ids))

        def relation(f):
            for item in f.items:
                _arity(item, 5, 5, "t s added|removed element_id relation other_id", f)
                flag = _word(item[1])
                if flag not in ("added", "removed"):
                    raise _Fail(item[1].column, "expected 'added' or 'removed'")
                ant.predicted_relations.append(
                    RelationDelta(
                        _num(item[0], "s"),
                        self.ref(_word(item[2]), f, item[2]),
                        self.ref(_word(item[4]), f, item[4]),
                        _word(item[3]),
                        flag == "added",
                    )
                )

        def trajectory(f):
            for item in f.items:
                if not item:
                    continue
                eid = self.ref(_word(item[0]), f, item[0])
                ant.predicted_trajectories.setdefault(eid, []).append(_sample(item[1:], f))

        self.run_fields(
            b,
            {
                "horizon": (False, horizon),
                "model": (True, model),
                "event": (True, event),
                "relation": (True, relation),
                "trajectory": (True, trajectory),
            },
        )
        if not got_horizon[0]:
            self.error(b.line, 1, "[ANTICIPATE] needs 'horizon'")
            return
        self.anticipation = ant

    def action_block(self, b: Block) -> None:
        if not (self.need_target(b) and self.need_time(b, "none")):
            return
        action = Action(b.target)  # type: ignore[arg-type]
        self.run_fields(b, {"justification": (False, lambda f: setattr(action, "justification", _texts(f)))})
        self.actions.append(action)

    def finish(self) -> None:
        known = set(self.declared_elements)
        if not known:
            # Candidate documents often carry annotations only; their targets
            # become elements without trajectories.
            synthesized = list(self.mentioned)
            if synthesized or any(eid == self.desc.ego_id for eid, _, _ in self.refs):
                synthesized.append(self.desc.ego_id)
            for eid in dict.fromkeys(synthesized):
                self.desc.elements.append(Element(eid))
            known = set(synthesized)
        known.add(self.desc.ego_id)
        for eid, line, col in self.refs:
            if eid not in known:
                self.error(line, col, f"dangling element reference '{eid}'")
        for ann in (*self.desc.semantic, *self.desc.spatial, *self.desc.temporal, *self.desc.physical):
            if ann.element_id not in known:
                block_line = next(
                    (line for key, line in self.seen.items() if len(key) > 1 and key[1] == ann.element_id), 1
                )
                self.error(block_line, 1, f"dangling element reference '{ann.element_id}'")
        if self.scenario is None and (self.desc.semantic or self.desc.spatial):
            times = [a.t for a in (*self.desc.semantic, *self.desc.spatial)]
            self.desc.window = (min(0.0, min(times)), 0.0)
        if self.anticipation is not None and self.scenario is None:
            self.desc.id = self.anticipation.base


HANDLERS = {
    "SCENARIO": _Reader.scenario_block,
    "CONTEXT": _Reader.context_block,
    "RULE": _Reader.rule_block,
    "UTTERANCE": _Reader.utterance_block,
    "MODALITY": _Reader.modality_block,
    "ELEMENT": _Reader.element_block,
    "SEM": _Reader.sem_block,
    "SPAT": _Reader.spat_block,
    "TEMP": _Reader.temp_block,
    "PHYS": _Reader.phys_block,
    "ANTICIPATE": _Reader.anticipate_block,
    "ACTION": _Reader.action_block,
}

# Blocks that make up the scenario itself, in the order they are serialized.
ORDER = {tag: k for k, tag in enumerate(TAGS)}


def parse_annotation_text(text: str) -> ParseResult:
    """Read a document into a candidate description (plus optional anticipation and actions).

    Never raises for bad input; on errors ``description`` is None and
    ``errors`` lists every problem found.
    """
    if not isinstance(text, str):
        return ParseResult(None, errors=[ParseError(1, 1, "input must be text")])
    doc, errors = parse_document(text)
    reader = _Reader()
    reader.errors.extend(errors)
    for block in doc.blocks:
        HANDLERS[block.tag](reader, block)
    reader.finish()
    errs = sorted(reader.errors, key=lambda e: (e.line, e.column))
    if errs:
        return ParseResult(None, None, [], errs, reader.warnings)
    return ParseResult(reader.desc, reader.anticipation, reader.actions, [], reader.warnings)


# -- serialization ------------------------------------------------------------------


def fmt(x: float) -> str:
    """Six significant digits; never ``-0``."""
    text = format(float(x), ".6g")
    return "0" if text in ("-0", "0") else text


def _vec_text(values, unit: str) -> str:
    return "(" + ", ".join(fmt(v) for v in values) + ") " + unit


def _range_text(a: float, b: float, unit: str = "s") -> str:
    return f"[{fmt(a)}, {fmt(b)}] {unit}"


_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.:+\-/^]*\Z")


def _text_out(value: str) -> str:
    """Bare identifier when unambiguous, quoted string otherwise."""
    if _WORD_RE.match(value) and value not in UNITS:
        return value
    return json.dumps(value, ensure_ascii=False)


def _quoted(value: str) -> str:
    return json.dumps(value, ensure_ascii=False)


def _param_text(value) -> str:
    if isinstance(value, Quantity):
        return f"{fmt(value.value)} {value.unit}"
    return _text_out(str(value))


def _sample_text(s: StateSample) -> str:
    parts = [f"{fmt(s.t)} s", _vec_text(s.position, "m"), _vec_text(matrix_to_rpy(s.orientation), "rad"), f"{fmt(s.speed)} m/s"]
    if s.yaw_rate is not None:
        parts.append(f"{fmt(s.yaw_rate)} rad/s")
    return " ".join(parts)


def _header(tag: str, target: Optional[str] = None, t: Optional[float] = None, interval=None) -> str:
    out = f"[{tag}]"
    if target is not None:
        out += f" {target}"
    if t is not None:
        out += f" @ t={fmt(t)}"
    if interval is not None:
        out += f" @ t=[{fmt(interval[0])}, {fmt(interval[1])}]"
    return out


def serialize(desc: ScenarioDescription, anticipation: Optional[ScenarioAnticipation] = None, actions: Sequence[Action] = ()) -> str:
    """Deterministic document for a description (and optionally its anticipation and actions)."""
    d = canonical(desc)
    blocks: List[List[str]] = []
    blocks.append([_header("SCENARIO", d.id), f"window: {_range_text(*d.window)}", f"ego: {d.ego_id}"])
    for layer, entries in sorted(d.context.layers.items()):
        for e in entries:
            lines = [_header("CONTEXT", e.id), f"layer: {layer}", f"kind: {_text_out(e.kind)}", f"label: {_quoted(e.label)}"]
            p = e.properties
            if "class" in p:
                lines.append(f"class: {p['class']}")
            if "extent" in p:
                lines.append(f"extent: {_vec_text(p['extent'], 'm')}")
            if "box_offset" in p:
                lines.append(f"box_offset: {_vec_text(p['box_offset'], 'm')}")
            for key in ("attributes", "materials"):
                if p.get(key):
                    lines.append(f"{key}: " + ", ".join(_quoted(x) for x in p[key]))  # type: ignore[union-attr]
            if p.get("affordances"):
                lines.append("affordances: " + ", ".join(p["affordances"]))  # type: ignore[arg-type]
            if "wheelbase" in p:
                lines.append(f"wheelbase: {fmt(p['wheelbase'])} m")  # type: ignore[arg-type]
            blocks.append(lines)
    for r in d.context.rules:
        blocks.append([_header("RULE", r.id), f"kind: {r.kind}"] + [f"{k}: {_param_text(v)}" for k, v in r.parameters.items()])
    for u in d.context.driver_channel:
        blocks.append([_header("UTTERANCE", t=u.t), f"text: {_quoted(u.text)}"])
    for mod in d.modalities:
        blocks.append(
            [_header("MODALITY", mod.kind), f"source: {_quoted(mod.source)}"]
            + [f"sample: {fmt(t)} s {_quoted(ref)}" for t, ref in mod.samples]
        )
    for e in d.elements:
        blocks.append([_header("ELEMENT", e.id)] + [f"sample: {_sample_text(s)}" for s in e.trajectory])
    for a in d.semantic:
        lines = [_header("SEM", a.element_id, t=a.t), f"class: {a.class_}", f"state: {a.state}"]
        if a.attributes:
            lines.append("attributes: " + ", ".join(_quoted(x) for x in a.attributes))
        if a.affordances:
            lines.append("affordances: " + ", ".join(a.affordances))
        blocks.append(lines)
    for a in d.spatial:
        lines = [_header("SPAT", a.element_id, t=a.t)]
        if a.position is not None:
            lines.append(f"position: {_vec_text(a.position, 'm')}")
        if a.orientation is not None:
            lines.append(f"orientation: {_vec_text(matrix_to_rpy(a.orientation), 'rad')}")
        if a.distance_to_ego is not None:
            lines.append(f"distance_to_ego: {fmt(a.distance_to_ego)} m")
        if a.occupancy is not None:
            lines.append(f"occupancy: {_vec_text(a.occupancy, 'm')}")
        if a.topology:
            lines.append("relation: " + ", ".join(f"{rel} {other}" for other, rel in a.topology))
        if a.visibility is not None:
            lines.append(f"visibility: {a.visibility}")
        if a.occluded_by:
            lines.append("occluded_by: " + ", ".join(a.occluded_by))
        blocks.append(lines)
    for a in d.temporal:
        lines = [_header("TEMP", a.element_id, interval=a.interval)]
        lines += [f"velocity: {fmt(t)} s {_vec_text(v, 'm/s')}" for t, v in a.velocity_samples]
        lines += [f"acceleration: {fmt(t)} s {_vec_text(v, 'm/s^2')}" for t, v in a.acceleration_samples]
        lines += [f"state: {si.state} {_range_text(si.start, si.end)}" for si in a.state_sequence]
        lines += [f"visibility: {si.state} {_range_text(si.start, si.end)}" for si in a.visibility_sequence]
        lines += [f"ordering: {rel} {other}" for other, rel in a.orderings]
        if a.periodicity is not None:
            lines.append(f"periodicity: {fmt(a.periodicity)} s")
        blocks.append(lines)
    for a in d.physical:
        lines = [_header("PHYS", a.element_id, interval=a.interval), f"model: {a.model}"]
        if a.material_tags:
            lines.append("materials: " + ", ".join(_quoted(x) for x in a.material_tags))
        kinds = {}
        for c in a.constraint_set:
            kinds[c.id] = c.kind
            params = " ".join(f"{k}={_param_text(v)}" for k, v in c.parameters.items())
            lines.append(f"constraint: {c.id} {c.kind}" + (f" {params}" if params else ""))
        for v in a.violations:
            unit = VIOLATION_UNITS.get(kinds.get(v.constraint_id, ""), "m")
            lines.append(f"violation: {v.constraint_id} {fmt(v.t)} s {fmt(v.value)} {unit}")
        blocks.append(lines)
    if anticipation is not None:
        blocks.append(_anticipation_lines(anticipation))
    for act in actions:
        lines = [_header("ACTION", act.verb)]
        if act.justification:
            lines.append("justification: " + ", ".join(_quoted(x) for x in act.justification))
        blocks.append(lines)
    return "\n\n".join("\n".join(b) for b in blocks) + "\n"


def _anticipation_lines(ant: ScenarioAnticipation) -> List[str]:
    a = canonical_anticipation(ant)
    lines = [_header("ANTICIPATE", a.base), f"horizon: {fmt(a.horizon)} s"]
    lines += [f"model: {eid} {kind}" for eid, kind in a.models.items()]
    lines += [f"event: {fmt(e.t)} s {e.tag} " + " ".join(e.element_ids) for e in a.predicted_events]
    lines += [
        f"relation: {fmt(r.t)} s {'added' if r.added else 'removed'} {r.element_id} {r.relation} {r.other_id}"
        for r in a.predicted_relations
    ]
    for eid, samples in a.predicted_trajectories.items():
        lines += [f"trajectory: {eid} {_sample_text(s)}" for s in samples]
    return lines


def serialize_anticipation(ant: ScenarioAnticipation) -> str:
    return "\n".join(_anticipation_lines(ant)) + "\n"


# -- trajectory logs ----------------------------------------------------------------

LOG_COLUMNS = ("t", "id", "class", "x", "y", "z", "yaw", "speed")
_LOG_HEADER = re.compile(r"^#\s*ego=(\S+)\s+rate=(\S+)\s*$")


@dataclass(frozen=True)
class LogRow:
    t: float
    id: str
    class_hint: str
    x: float
    y: float
    z: float
    yaw: float
    speed: float


@dataclass
class TrajectoryLog:
    ego_id: str
    rate: float  # Hz
    rows: List[LogRow] = field(default_factory=list)

    def element_ids(self) -> List[str]:
        return sorted({r.id for r in self.rows})

    def class_hints(self) -> Dict[str, str]:
        return {r.id: r.class_hint for r in self.rows if r.class_hint}

    def to_elements(self) -> List[Element]:
        """Elements with yaw turned into rotation matrices and yaw rate estimated from heading changes."""
        by_id: Dict[str, List[LogRow]] = {}
        for r in self.rows:
            by_id.setdefault(r.id, []).append(r)
        out = []
        for eid in sorted(by_id):
            rows = by_id[eid]
            times = np.array([r.t for r in rows])
            yaws = np.unwrap(np.array([r.yaw for r in rows]))
            if len(rows) >= 2:
                rates = np.gradient(yaws, times, edge_order=2 if len(rows) >= 3 else 1)
            else:
                rates = [None]
            samples = [
                StateSample(
                    r.t,
                    (r.x, r.y, r.z),
                    yaw_matrix(r.yaw),
                    r.speed,
                    None if rate is None else _snap(float(rate)),
                )
                for r, rate in zip(rows, rates)
            ]
            out.append(Element(eid, samples))
        return out


def _snap(x: float, tol: float = 1e-12) -> float:
    return 0.0 if abs(x) < tol else x


def parse_trajectory_log(text: str):
    """Parse a log; returns ``TrajectoryLog`` or a list of ``ParseError``.

    Format: a header ``#ego=<id> rate=<hz>``, an optional column line
    ``t,id,class,x,y,z,yaw,speed``, then one comma-separated row per element
    and sample, sorted by (t, id).
    """
    errors: List[ParseError] = []
    lines = split_lines(text)
    if lines == [""]:
        lines = []
    if not lines:
        return [ParseError(1, 1, "missing header '#ego=<id> rate=<hz>'")]
    match = _LOG_HEADER.match(lines[0].strip())
    if match is None:
        return [ParseError(1, 1, "missing header '#ego=<id> rate=<hz>'")]
    try:
        rate = float(match.group(2))
    except ValueError:
        rate = math.nan
    if not (math.isfinite(rate) and rate > 0):
        return [ParseError(1, match.start(2) + 1, "sample rate must be a positive number")]
    log = TrajectoryLog(match.group(1), rate)
    previous: Optional[Tuple[float, str]] = None
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            row = next(csv.reader([line]), [])
        except csv.Error as exc:
            errors.append(ParseError(line_no, 1, f"unreadable row: {exc}"))
            continue
        if not row or (len(row) == 1 and not row[0].strip()) or row[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in row]
        if tuple(cells) == LOG_COLUMNS:
            continue
        if len(cells) != len(LOG_COLUMNS):
            errors.append(ParseError(line_no, 1, f"expected {len(LOG_COLUMNS)} columns ({','.join(LOG_COLUMNS)}), got {len(cells)}"))
            continue
        values = {}
        bad = False
        col = 1
        for name, cell, raw in zip(LOG_COLUMNS, cells, row):
            if name not in ("id", "class"):
                try:
                    values[name] = float(cell)
                    if not math.isfinite(values[name]):
                        raise ValueError
                except ValueError:
                    errors.append(ParseError(line_no, col, f"column '{name}' is not a finite number: {cell!r}"))
                    bad = True
            col += len(raw) + 1
        if not cells[1]:
            errors.append(ParseError(line_no, len(row[0]) + 2, "empty element id"))
            bad = True
        if bad:
            continue
        if values["speed"] < 0:
            errors.append(ParseError(line_no, 1, "speed must be >= 0"))
            continue
        key = (values["t"], cells[1])
        if previous is not None and key <= previous:
            errors.append(ParseError(line_no, 1, "rows must be sorted by (t, id) without duplicates"))
            continue
        previous = key
        log.rows.append(
            LogRow(values["t"], cells[1], cells[2], values["x"], values["y"], values["z"], values["yaw"], values["speed"])
        )
    return errors if errors else log


def format_trajectory_log(log: TrajectoryLog) -> str:
    """Log text with ten significant digits, enough to keep derived yaw rates clean."""

    def num(x: float) -> str:
        text = format(float(x), ".10g")
        return "0" if text == "-0" else text

    out = [f"#ego={log.ego_id} rate={num(log.rate)}", ",".join(LOG_COLUMNS)]
    for r in log.rows:
        out.append(",".join([num(r.t), r.id, r.class_hint, num(r.x), num(r.y), num(r.z), num(r.yaw), num(r.speed)]))
    return "\n".join(out) + "\n"
