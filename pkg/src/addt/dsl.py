"""Scenario description language: parsing, validation, canonical text, sweeps.

The language is block-oriented::

    scenario "overtaking"
    road { lanes: 2, lane_width: 3.5, segments: [500, 0] }
    ego { lane: 0, s: 40, speed: 15 }
    agent "lead" { lane: 0, s: 65, speed: 8, behavior: cruise }
    mission overtake { target_s: 420, timeout: 60 }
    fault sensor.drop { rate: $drop_rate }
    sweep drop_rate in [0.01, 0.02, 0.05, 0.10]

Pairs inside braces are separated by commas and/or newlines, ``#`` starts a
comment, and numbers may carry a unit suffix (``3.5m``, ``10m/s``) which is
ignored. ``$name`` references must be declared by exactly one sweep axis.
Units are fixed by convention: meters, m/s, seconds, radians, rates as
fractions of one.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Union

SPEED_WARNING_THRESHOLD = 60.0
BEHAVIOR_KINDS = ("cruise", "emergency_brake", "cut_in", "stop")
MISSION_KINDS = ("follow", "turn", "overtake")
FAULT_KINDS = ("sensor.drop", "sensor.shift", "compute.bitflip")
PIPELINE_NODES = ("perception", "planning", "control")
MAX_EAGER_CONFIGS = 4096


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class ScenarioError(Exception):
    """Parse or validation failure carrying positioned diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class VarRef:
    name: str


Num = Union[int, float, VarRef]


@dataclass(frozen=True)
class SweepAxis:
    name: str
    values: tuple[int | float | str, ...]
    pos: tuple[int, int] = field(default=(1, 1), compare=False)


@dataclass(frozen=True)
class RoadDecl:
    lane_count: Num = 1
    lane_width: Num = 3.5
    segments: tuple[tuple[Num, Num], ...] = ()
    pos: tuple[int, int] = field(default=(1, 1), compare=False)


@dataclass(frozen=True)
class AgentDecl:
    name: str
    lane: Num = 0
    s: Num = 0.0
    speed: Num = 0.0
    behavior: str = "cruise"
    at: Num = 0.0
    decel: Num = 6.0
    target_lane: Num = 0
    duration: Num = 2.0
    length: Num = 4.5
    width: Num = 1.8
    wheelbase: Num = 2.5
    pos: tuple[int, int] = field(default=(1, 1), compare=False)


@dataclass(frozen=True)
class MissionDecl:
    kind: str
    target_s: Num
    timeout: Num
    lane: Num = 0
    pos: tuple[int, int] = field(default=(1, 1), compare=False)


@dataclass(frozen=True)
class DropFaultDecl:
    rate: Num = 0.0
    delay_sigma: Num = 0.0
    pos: tuple[int, int] = field(default=(1, 1), compare=False)

    kind = "sensor.drop"


@dataclass(frozen=True)
class ShiftFaultDecl:
    translation_sigma: Num = 0.0
    rotation_sigma: Num = 0.0
    dx: Num = 0.0
    dy: Num = 0.0
    dz: Num = 0.0
    yaw: Num = 0.0
    pitch: Num = 0.0
    roll: Num = 0.0
    pos: tuple[int, int] = field(default=(1, 1), compare=False)

    kind = "sensor.shift"

    @property
    def has_fixed_offset(self) -> bool:
        vals = (self.dx, self.dy, self.dz, self.yaw, self.pitch, self.roll)
        return any(isinstance(v, VarRef) or v != 0.0 for v in vals)


@dataclass(frozen=True)
class BitflipFaultDecl:
    node: str | VarRef = "control"
    count: Num = 1
    mode: str = "flip"
    value: Num = 0.0
    from_tick: Num = 0
    to_tick: Num = -1  # -1 means "until 80% of the mission timeout"
    pos: tuple[int, int] = field(default=(1, 1), compare=False)

    kind = "compute.bitflip"


FaultDecl = Union[DropFaultDecl, ShiftFaultDecl, BitflipFaultDecl]


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    road: RoadDecl
    ego: AgentDecl
    agents: tuple[AgentDecl, ...]
    mission: MissionDecl
    faults: tuple[FaultDecl, ...] = ()
    sweeps: tuple[SweepAxis, ...] = ()


@dataclass(frozen=True)
class ResolvedConfig:
    scenario: ScenarioSpec
    binding: tuple[tuple[str, int | float | str], ...] = ()

    @property
    def config_id(self) -> str:
        if not self.binding:
            return self.scenario.name
        parts = ",".join(f"{k}={_format_value(v)}" for k, v in self.binding)
        return f"{self.scenario.name}[{parts}]"


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<ws>[ \t\r]+)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)(?P<unit>[A-Za-z/][A-Za-z0-9/]*)?
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<var>\$[A-Za-z_][A-Za-z0-9_]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<punct>[{}\[\]:,])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "string" | "var" | "ident" | punct chars | "newline" | "eof"
    value: object
    line: int
    col: int


def _lex(text: str) -> tuple[list[_Token], list[Diagnostic]]:
    tokens: list[_Token] = []
    diagnostics: list[Diagnostic] = []
    line, line_start = 1, 0
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            diagnostics.append(Diagnostic("error", line, i - line_start + 1,
                                          f"unexpected character {text[i]!r}"))
            i += 1
            continue
        col = m.start() - line_start + 1
        if m.lastgroup in ("comment", "ws"):
            pass
        elif m.lastgroup == "newline":
            tokens.append(_Token("newline", "\n", line, col))
            line += 1
            line_start = m.end()
        elif m.lastgroup in ("number", "unit"):
            raw = m.group("number")
            value: int | float
            if re.fullmatch(r"-?\d+", raw):
                value = int(raw)
            else:
                value = float(raw)
            tokens.append(_Token("number", value, line, col))
        elif m.lastgroup == "string":
            raw = m.group("string")[1:-1]
            value = raw.replace('\\"', '"').replace("\\\\", "\\")
            tokens.append(_Token("string", value, line, col))
        elif m.lastgroup == "var":
            tokens.append(_Token("var", m.group("var")[1:], line, col))
        elif m.lastgroup == "ident":
            tokens.append(_Token("ident", m.group("ident"), line, col))
        else:
            tokens.append(_Token(m.group("punct"), m.group("punct"), line, col))
        i = m.end()
    tokens.append(_Token("eof", None, line, max(1, len(text) - line_start + 1)))
    return tokens, diagnostics


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0
        self.diagnostics: list[Diagnostic] = []

    # -- token plumbing

    def peek(self, skip_newlines: bool = True) -> _Token:
        j = self.i
        while skip_newlines and self.tokens[j].kind == "newline":
            j += 1
        return self.tokens[j]

    def next(self, skip_newlines: bool = True) -> _Token:
        while skip_newlines and self.tokens[self.i].kind == "newline":
            self.i += 1
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def error(self, tok: _Token, message: str) -> None:
        self.diagnostics.append(Diagnostic("error", tok.line, tok.col, message))

    def warn(self, tok: _Token, message: str) -> None:
        self.diagnostics.append(Diagnostic("warning", tok.line, tok.col, message))

    def expect(self, kind: str, what: str) -> _Token | None:
        tok = self.next()
        if tok.kind != kind:
            self.error(tok, f"expected {what}, got {_describe(tok)}")
            return None
        return tok

    # -- grammar

    def parse_program(self) -> dict:
        blocks: dict = {"scenario": None, "road": None, "ego": None, "mission": None,
                        "agents": [], "faults": [], "sweeps": []}
        while True:
            tok = self.next()
            if tok.kind == "eof":
                break
            if tok.kind != "ident":
                self.error(tok, f"expected a block keyword, got {_describe(tok)}")
                self._recover()
                continue
            kw = tok.value
            if kw == "scenario":
                name_tok = self.expect("string", "scenario name string")
                if name_tok is not None:
                    if blocks["scenario"] is not None:
                        self.error(tok, "duplicate scenario block")
                    blocks["scenario"] = (name_tok.value, (tok.line, tok.col))
            elif kw == "road":
                pairs = self.parse_pairs()
                if blocks["road"] is not None:
                    self.error(tok, "duplicate road block")
                blocks["road"] = (pairs, (tok.line, tok.col))
            elif kw == "ego":
                pairs = self.parse_pairs()
                if blocks["ego"] is not None:
                    self.error(tok, "duplicate ego block")
                blocks["ego"] = (pairs, (tok.line, tok.col))
            elif kw == "agent":
                name_tok = self.expect("string", "agent name string")
                pairs = self.parse_pairs()
                if name_tok is not None:
                    blocks["agents"].append((name_tok.value, pairs, (tok.line, tok.col)))
            elif kw == "mission":
                kind_tok = self.expect("ident", "mission kind")
                pairs = self.parse_pairs()
                if kind_tok is not None:
                    if blocks["mission"] is not None:
                        self.error(tok, "duplicate mission block")
                    blocks["mission"] = (kind_tok.value, pairs, (tok.line, tok.col))
            elif kw == "fault":
                kind_tok = self.expect("ident", "fault kind")
                pairs = self.parse_pairs()
                if kind_tok is not None:
                    blocks["faults"].append((kind_tok.value, pairs, (kind_tok.line, kind_tok.col)))
            elif kw == "sweep":
                self.parse_sweep(tok, blocks)
            else:
                self.error(tok, f"unknown block {kw!r}")
                self._recover()
        return blocks

    def _recover(self) -> None:
        """Skip to the next plausible block start so one error doesn't cascade."""
        keywords = {"scenario", "road", "ego", "agent", "mission", "fault", "sweep"}
        depth = 0
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                return
            if depth == 0 and tok.kind == "ident" and tok.value in keywords:
                return
            tok = self.next()
            if tok.kind == "{":
                depth += 1
            elif tok.kind == "}":
                depth = max(0, depth - 1)

    def parse_sweep(self, kw_tok: _Token, blocks: dict) -> None:
        name_tok = self.expect("ident", "sweep variable name")
        in_tok = self.next()
        if in_tok.kind != "ident" or in_tok.value != "in":
            self.error(in_tok, f"expected 'in', got {_describe(in_tok)}")
            return
        open_tok = self.expect("[", "'['")
        if open_tok is None or name_tok is None:
            return
        values: list[int | float | str] = []
        while True:
            tok = self.next()
            if tok.kind == "]":
                break
            if tok.kind == "eof":
                self.error(tok, "unterminated sweep value list")
                return
            if tok.kind == "number" or tok.kind == "ident":
                values.append(tok.value)
            elif tok.kind == ",":
                continue
            else:
                self.error(tok, f"invalid sweep value {_describe(tok)}")
        if not values:
            self.error(kw_tok, f"sweep axis '{name_tok.value}' has no values")
        blocks["sweeps"].append(SweepAxis(name=name_tok.value, values=tuple(values),
                                          pos=(kw_tok.line, kw_tok.col)))

    def parse_pairs(self) -> list[tuple[str, object, _Token]]:
        pairs: list[tuple[str, object, _Token]] = []
        if self.expect("{", "'{'") is None:
            return pairs
        need_separator = False
        while True:
            # Newlines count as pair separators inside braces.
            saw_newline = False
            while self.peek(skip_newlines=False).kind == "newline":
                self.next(skip_newlines=False)
                saw_newline = True
            tok = self.peek(skip_newlines=False)
            if tok.kind == "}":
                self.next()
                return pairs
            if tok.kind == "eof":
                self.error(tok, "unterminated block: expected '}'")
                return pairs
            if tok.kind == ",":
                self.next()
                need_separator = False
                continue
            if need_separator and not saw_newline:
                self.error(tok, "expected ',' or newline between pairs")
            key_tok = self.next()
            if key_tok.kind != "ident":
                self.error(key_tok, f"expected key identifier, got {_describe(key_tok)}")
                self._skip_to_pair_end()
                need_separator = False
                continue
            if self.expect(":", "':' after key") is None:
                self._skip_to_pair_end()
                need_separator = False
                continue
            value = self.parse_value()
            pairs.append((key_tok.value, value, key_tok))
            need_separator = True

    def _skip_to_pair_end(self) -> None:
        while self.peek(skip_newlines=False).kind not in (",", "}", "newline", "eof"):
            self.next(skip_newlines=False)

    def parse_value(self) -> object:
        tok = self.next()
        if tok.kind == "number" or tok.kind == "string":
            return tok.value
        if tok.kind == "var":
            return VarRef(tok.value)
        if tok.kind == "ident":
            return tok.value
        if tok.kind == "[":
            items = []
            while True:
                nxt = self.peek()
                if nxt.kind == "]":
                    self.next()
                    return tuple(items)
                if nxt.kind == "eof":
                    self.error(nxt, "unterminated list")
                    return tuple(items)
                if nxt.kind == ",":
                    self.next()
                    continue
                items.append(self.parse_value())
        self.error(tok, f"expected a value, got {_describe(tok)}")
        return 0.0


def _describe(tok: _Token) -> str:
    if tok.kind == "eof":
        return "end of input"
    if tok.kind == "newline":
        return "end of line"
    return f"{tok.kind} {tok.value!r}" if tok.kind in ("ident", "number", "string") else repr(tok.value)


# ---------------------------------------------------------------------------
# Binding raw blocks into the typed spec

_INT_KEYS = {"lanes", "lane", "target_lane", "count", "from_tick", "to_tick"}

_BLOCK_KEYS = {
    "road": ("lanes", "lane_width", "segments"),
    "ego": ("lane", "s", "speed", "length", "width", "wheelbase"),
    "agent": ("lane", "s", "speed", "behavior", "at", "decel", "target_lane",
              "duration", "length", "width", "wheelbase"),
    "mission": ("target_s", "timeout", "lane"),
    "sensor.drop": ("rate", "delay_sigma"),
    "sensor.shift": ("translation_sigma", "rotation_sigma", "dx", "dy", "dz",
                     "yaw", "pitch", "roll"),
    "compute.bitflip": ("node", "count", "mode", "value", "from_tick", "to_tick"),
}


class _Binder:
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics

    def error(self, tok: _Token, message: str) -> None:
        self.diagnostics.append(Diagnostic("error", tok.line, tok.col, message))

    def warn(self, tok: _Token, message: str) -> None:
        self.diagnostics.append(Diagnostic("warning", tok.line, tok.col, message))

    def check_pairs(self, block: str, pairs: list[tuple[str, object, _Token]]) -> dict[str, object]:
        allowed = _BLOCK_KEYS[block]
        out: dict[str, object] = {}
        for key, value, tok in pairs:
            if key not in allowed:
                self.error(tok, f"unknown key '{key}' in {block} block")
                continue
            if key in out:
                self.error(tok, f"duplicate key '{key}' in {block} block")
                continue
            out[key] = (value, tok)
        return out

    def num(self, block: str, got: dict, key: str, default: Num | None = None) -> Num:
        if key not in got:
            if default is None:
                self.diagnostics.append(Diagnostic(
                    "error", 1, 1, f"{block} block is missing required key '{key}'"))
                return 0
            return default
        value, tok = got[key]
        if isinstance(value, VarRef):
            return value
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            self.error(tok, f"'{key}' expects a number, got {type(value).__name__}")
            return default if default is not None else 0
        if key in _INT_KEYS:
            if isinstance(value, float):
                if value != int(value):
                    self.error(tok, f"'{key}' expects an integer, got {value}")
                    return default if default is not None else 0
                value = int(value)
            return value
        return float(value)

    def ident(self, block: str, got: dict, key: str, default: str | None,
              choices: tuple[str, ...] | None = None, allow_var: bool = False) -> str | VarRef:
        if key not in got:
            if default is None:
                self.diagnostics.append(Diagnostic(
                    "error", 1, 1, f"{block} block is missing required key '{key}'"))
                return choices[0] if choices else ""
            return default
        value, tok = got[key]
        if isinstance(value, VarRef):
            if allow_var:
                return value
            self.error(tok, f"'{key}' may not be swept")
            return default or (choices[0] if choices else "")
        if not isinstance(value, str):
            self.error(tok, f"'{key}' expects an identifier, got {type(value).__name__}")
            return default or (choices[0] if choices else "")
        if choices is not None and value not in choices:
            self.error(tok, f"'{key}' must be one of {', '.join(choices)}; got '{value}'")
            return default or choices[0]
        return value

    def bind_road(self, raw: tuple | None) -> RoadDecl:
        if raw is None:
            self.diagnostics.append(Diagnostic("error", 1, 1, "missing road block"))
            return RoadDecl()
        pairs, pos = raw
        got = self.check_pairs("road", pairs)
        lane_count = self.num("road", got, "lanes")
        lane_width = self.num("road", got, "lane_width")
        segments: tuple[tuple[Num, Num], ...] = ()
        if "segments" in got:
            value, tok = got["segments"]
            if not isinstance(value, tuple):
                self.error(tok, "'segments' expects a list of alternating length, curvature values")
            elif len(value) % 2 != 0:
                self.error(tok, "'segments' list must have an even number of values")
            else:
                items = []
                ok = True
                for v in value:
                    if isinstance(v, VarRef):
                        items.append(v)
                    elif isinstance(v, (int, float)):
                        items.append(float(v))
                    else:
                        self.error(tok, f"'segments' values must be numbers, got {type(v).__name__}")
                        ok = False
                        break
                if ok:
                    segments = tuple((items[i], items[i + 1]) for i in range(0, len(items), 2))
        return RoadDecl(lane_count=lane_count, lane_width=lane_width, segments=segments, pos=pos)

    def bind_agent(self, name: str, pairs: list, pos: tuple[int, int], is_ego: bool) -> AgentDecl:
        block = "ego" if is_ego else "agent"
        got = self.check_pairs(block, pairs)
        behavior = "cruise"
        if not is_ego:
            behavior = self.ident(block, got, "behavior", "cruise", BEHAVIOR_KINDS)
            for key in ("at", "decel", "target_lane", "duration"):
                if key in got and not _behavior_uses(behavior, key):
                    self.warn(got[key][1], f"'{key}' is ignored for behavior '{behavior}'")
        return AgentDecl(
            name=name,
            lane=self.num(block, got, "lane"),
            s=self.num(block, got, "s"),
            speed=self.num(block, got, "speed"),
            behavior=behavior,
            at=self.num(block, got, "at", 0.0),
            decel=self.num(block, got, "decel", 6.0),
            target_lane=self.num(block, got, "target_lane", 0),
            duration=self.num(block, got, "duration", 2.0),
            length=self.num(block, got, "length", 4.5),
            width=self.num(block, got, "width", 1.8),
            wheelbase=self.num(block, got, "wheelbase", 2.5),
            pos=pos,
        )

    def bind_mission(self, raw: tuple | None, ego: AgentDecl) -> MissionDecl:
        if raw is None:
            self.diagnostics.append(Diagnostic("error", 1, 1, "missing mission block"))
            return MissionDecl(kind="follow", target_s=0.0, timeout=1.0)
        kind, pairs, pos = raw
        got = self.check_pairs("mission", pairs)
        if kind not in MISSION_KINDS:
            self.error(_Token("ident", kind, pos[0], pos[1]),
                       f"mission kind must be one of {', '.join(MISSION_KINDS)}; got '{kind}'")
            kind = "follow"
        default_lane = ego.lane if not isinstance(ego.lane, VarRef) else 0
        return MissionDecl(
            kind=kind,
            target_s=self.num("mission", got, "target_s"),
            timeout=self.num("mission", got, "timeout"),
            lane=self.num("mission", got, "lane", default_lane),
            pos=pos,
        )

    def bind_fault(self, kind: str, pairs: list, pos: tuple[int, int]) -> FaultDecl | None:
        if kind not in FAULT_KINDS:
            self.error(_Token("ident", kind, pos[0], pos[1]),
                       f"fault kind must be one of {', '.join(FAULT_KINDS)}; got '{kind}'")
            return None
        got = self.check_pairs(kind, pairs)
        if kind == "sensor.drop":
            return DropFaultDecl(
                rate=self.num(kind, got, "rate"),
                delay_sigma=self.num(kind, got, "delay_sigma", 0.0),
                pos=pos,
            )
        if kind == "sensor.shift":
            return ShiftFaultDecl(
                translation_sigma=self.num(kind, got, "translation_sigma", 0.0),
                rotation_sigma=self.num(kind, got, "rotation_sigma", 0.0),
                dx=self.num(kind, got, "dx", 0.0),
                dy=self.num(kind, got, "dy", 0.0),
                dz=self.num(kind, got, "dz", 0.0),
                yaw=self.num(kind, got, "yaw", 0.0),
                pitch=self.num(kind, got, "pitch", 0.0),
                roll=self.num(kind, got, "roll", 0.0),
                pos=pos,
            )
        return BitflipFaultDecl(
            node=self.ident(kind, got, "node", None, PIPELINE_NODES, allow_var=True),
            count=self.num(kind, got, "count"),
            mode=self.ident(kind, got, "mode", "flip", ("flip", "stuck")),
            value=self.num(kind, got, "value", 0.0),
            from_tick=self.num(kind, got, "from_tick", 0),
            to_tick=self.num(kind, got, "to_tick", -1),
            pos=pos,
        )


def _behavior_uses(kind: str, key: str) -> bool:
    table = {
        "cruise": (),
        "stop": (),
        "emergency_brake": ("at", "decel"),
        "cut_in": ("at", "target_lane", "duration"),
    }
    return key in table[kind]


# ---------------------------------------------------------------------------
# Public operations

def parse_scenario(text: str) -> ScenarioSpec:
    """Parse scenario text into a validated spec; raises ScenarioError on errors."""
    spec, diagnostics = try_parse_scenario(text)
    errors = [d for d in diagnostics if d.severity == "error"]
    if errors or spec is None:
        raise ScenarioError(errors or diagnostics)
    return spec


def try_parse_scenario(text: str) -> tuple[ScenarioSpec | None, list[Diagnostic]]:
    """Like parse_scenario, but returns (spec-or-None, all diagnostics)."""
    tokens, diagnostics = _lex(text)
    parser = _Parser(tokens)
    blocks = parser.parse_program()
    diagnostics.extend(parser.diagnostics)

    binder = _Binder(diagnostics)
    if blocks["scenario"] is None:
        diagnostics.append(Diagnostic("error", 1, 1, "missing scenario block"))
        name = ""
    else:
        name = blocks["scenario"][0]
    road = binder.bind_road(blocks["road"])
    if blocks["ego"] is None:
        diagnostics.append(Diagnostic("error", 1, 1, "missing ego block"))
        ego = AgentDecl(name="ego")
    else:
        ego = binder.bind_agent("ego", blocks["ego"][0], blocks["ego"][1], is_ego=True)
    agents = tuple(binder.bind_agent(n, p, pos, is_ego=False) for n, p, pos in blocks["agents"])
    mission = binder.bind_mission(blocks["mission"], ego)
    faults = tuple(f for f in (binder.bind_fault(k, p, pos) for k, p, pos in blocks["faults"])
                   if f is not None)
    spec = ScenarioSpec(name=name, road=road, ego=ego, agents=agents,
                        mission=mission, faults=faults, sweeps=tuple(blocks["sweeps"]))

    if not any(d.severity == "error" for d in diagnostics):
        diagnostics.extend(validate(spec))
    if any(d.severity == "error" for d in diagnostics):
        return None, diagnostics
    return spec, diagnostics


def _iter_numeric_fields(spec: ScenarioSpec) -> Iterable[tuple[str, object, tuple[int, int]]]:
    """(field path, value, block position) over every substitutable field."""
    yield "road.lanes", spec.road.lane_count, spec.road.pos
    yield "road.lane_width", spec.road.lane_width, spec.road.pos
    for i, (length, curv) in enumerate(spec.road.segments):
        yield f"road.segments[{i}].length", length, spec.road.pos
        yield f"road.segments[{i}].curvature", curv, spec.road.pos
    for decl in (spec.ego, *spec.agents):
        prefix = "ego" if decl.name == "ego" else f"agent '{decl.name}'"
        for key in ("lane", "s", "speed", "at", "decel", "target_lane", "duration",
                    "length", "width", "wheelbase"):
            yield f"{prefix}.{key}", getattr(decl, key), decl.pos
    for key in ("target_s", "timeout", "lane"):
        yield f"mission.{key}", getattr(spec.mission, key), spec.mission.pos
    for i, fault in enumerate(spec.faults):
        for f in fields(fault):
            if f.name == "pos":
                continue
            yield f"fault[{i}].{f.name}", getattr(fault, f.name), fault.pos


def validate(spec: ScenarioSpec) -> list[Diagnostic]:
    """Structural invariant checks; an empty error set means the spec is runnable.

    Fields still carrying ``$var`` references are checked per sweep value by
    expanding the (small) sweep product eagerly.
    """
    diags: list[Diagnostic] = []

    declared = {}
    for axis in spec.sweeps:
        if axis.name in declared:
            diags.append(Diagnostic("error", *axis.pos,
                                    f"duplicate sweep axis '{axis.name}'"))
        declared[axis.name] = axis
        if not axis.values:
            diags.append(Diagnostic("error", *axis.pos, f"sweep axis '{axis.name}' has no values"))

    referenced: set[str] = set()
    for path, value, pos in _iter_numeric_fields(spec):
        if isinstance(value, VarRef):
            referenced.add(value.name)
            if value.name not in declared:
                diags.append(Diagnostic("error", *pos,
                                        f"undeclared sweep variable '${value.name}' in {path}"))
    for axis in spec.sweeps:
        if axis.name not in referenced:
            diags.append(Diagnostic("warning", *axis.pos,
                                    f"sweep axis '{axis.name}' is never referenced"))

    if any(d.severity == "error" for d in diags):
        return diags

    if not spec.sweeps:
        diags.extend(_validate_resolved(spec))
        return diags

    total = 1
    for axis in spec.sweeps:
        total *= len(axis.values)
    if total > MAX_EAGER_CONFIGS:
        diags.append(Diagnostic("warning", *spec.sweeps[0].pos,
                                f"sweep product of {total} configs is too large to pre-validate"))
        return diags
    for config in expand_sweeps(spec):
        for d in _validate_resolved(config.scenario):
            binding = ", ".join(f"{k}={v}" for k, v in config.binding)
            msg = f"{d.message} (with {binding})" if d.severity == "error" else d.message
            dd = Diagnostic(d.severity, d.line, d.column, msg)
            if dd not in diags:
                diags.append(dd)
    return diags


def _validate_resolved(spec: ScenarioSpec) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def err(pos: tuple[int, int], msg: str) -> None:
        diags.append(Diagnostic("error", pos[0], pos[1], msg))

    def warn(pos: tuple[int, int], msg: str) -> None:
        diags.append(Diagnostic("warning", pos[0], pos[1], msg))

    road = spec.road
    if road.lane_count < 1:
        err(road.pos, "lane_count ≥ 1 is required")
    if road.lane_width <= 0:
        err(road.pos, "lane_width must be > 0")
    total_len = 0.0
    for i, (length, curv) in enumerate(road.segments):
        if length <= 0:
            err(road.pos, f"segment {i} length must be > 0")
        else:
            total_len += length
        if road.lane_width > 0 and abs(curv) * road.lane_width >= 1.0:
            err(road.pos, f"segment {i} curvature {curv} too large for lane width")
    mission = spec.mission
    if mission.timeout <= 0:
        err(mission.pos, "timeout must be > 0")
    if mission.target_s <= 0:
        err(mission.pos, "target_s must be > 0")
    if road.segments and mission.target_s > total_len:
        err(mission.pos, f"target_s {mission.target_s} exceeds road length {total_len}")
    if road.lane_count >= 1 and not isinstance(mission.lane, VarRef):
        if not 0 <= mission.lane < road.lane_count:
            err(mission.pos, f"mission lane {mission.lane} must be < lane_count {road.lane_count}")

    for decl in (spec.ego, *spec.agents):
        what = "ego" if decl.name == "ego" else f"agent '{decl.name}'"
        if not 0 <= decl.lane < road.lane_count:
            err(decl.pos, f"{what} lane {decl.lane} must be < lane_count {road.lane_count}")
        if decl.speed < 0:
            err(decl.pos, f"{what} speed must be >= 0")
        elif decl.speed > SPEED_WARNING_THRESHOLD:
            warn(decl.pos, f"{what} speed {decl.speed} m/s is implausibly high")
        if decl.s < 0:
            err(decl.pos, f"{what} initial s must be >= 0")
        elif road.segments and decl.s > total_len:
            err(decl.pos, f"{what} initial s {decl.s} exceeds road length {total_len}")
        if decl.behavior == "cut_in" and not 0 <= decl.target_lane < road.lane_count:
            err(decl.pos, f"{what} cut_in target lane {decl.target_lane} must be < lane_count")
        if decl.behavior == "emergency_brake" and decl.decel <= 0:
            err(decl.pos, f"{what} decel must be > 0")
        if decl.behavior == "cut_in" and decl.duration <= 0:
            err(decl.pos, f"{what} cut_in duration must be > 0")
        if decl.length <= 0 or decl.width <= 0 or decl.wheelbase <= 0:
            err(decl.pos, f"{what} footprint dimensions must be > 0")

    seen = set()
    for agent in spec.agents:
        if agent.name in seen:
            err(agent.pos, f"duplicate agent name '{agent.name}'")
        seen.add(agent.name)

    for fault in spec.faults:
        if isinstance(fault, DropFaultDecl):
            if not 0.0 <= fault.rate <= 1.0:
                err(fault.pos, f"drop rate {fault.rate} must be in [0, 1]")
            if fault.delay_sigma < 0:
                err(fault.pos, "delay_sigma must be >= 0")
        elif isinstance(fault, ShiftFaultDecl):
            if fault.translation_sigma < 0 or fault.rotation_sigma < 0:
                err(fault.pos, "shift sigmas must be >= 0")
        else:
            if isinstance(fault.node, str) and fault.node not in PIPELINE_NODES:
                err(fault.pos, f"unknown pipeline node '{fault.node}'")
            if fault.count < 0:
                err(fault.pos, "bitflip count must be >= 0")
            if fault.from_tick < 0:
                err(fault.pos, "from_tick must be >= 0")
            if fault.to_tick != -1 and fault.to_tick < fault.from_tick:
                err(fault.pos, "to_tick must be >= from_tick")
    return diags


def has_unresolved_vars(spec: ScenarioSpec) -> bool:
    return any(isinstance(v, VarRef) for _, v, _ in _iter_numeric_fields(spec))


def _subst(value, binding: dict):
    if isinstance(value, VarRef):
        return binding[value.name]
    return value


def _resolve_spec(spec: ScenarioSpec, binding: dict) -> ScenarioSpec:
    def resolve_agent(decl: AgentDecl) -> AgentDecl:
        kwargs = {}
        for f in fields(decl):
            if f.name in ("name", "behavior", "pos"):
                continue
            kwargs[f.name] = _subst(getattr(decl, f.name), binding)
        return replace(decl, **kwargs)

    road = replace(
        spec.road,
        lane_count=_subst(spec.road.lane_count, binding),
        lane_width=_subst(spec.road.lane_width, binding),
        segments=tuple((_subst(a, binding), _subst(b, binding)) for a, b in spec.road.segments),
    )
    mission = replace(
        spec.mission,
        target_s=_subst(spec.mission.target_s, binding),
        timeout=_subst(spec.mission.timeout, binding),
        lane=_subst(spec.mission.lane, binding),
    )
    faults = []
    for fault in spec.faults:
        kwargs = {f.name: _subst(getattr(fault, f.name), binding)
                  for f in fields(fault) if f.name != "pos"}
        faults.append(replace(fault, **kwargs))
    return replace(spec, road=road, ego=resolve_agent(spec.ego),
                   agents=tuple(resolve_agent(a) for a in spec.agents),
                   mission=mission, faults=tuple(faults), sweeps=())


def expand_sweeps(spec: ScenarioSpec) -> list[ResolvedConfig]:
    """Cartesian product over sweep axes, axes in declaration order.

    With no axes the result is a single config identical to the spec.
    """
    if not spec.sweeps:
        return [ResolvedConfig(scenario=spec, binding=())]
    names = [axis.name for axis in spec.sweeps]
    configs = []
    for combo in itertools.product(*(axis.values for axis in spec.sweeps)):
        binding = dict(zip(names, combo))
        configs.append(ResolvedConfig(
            scenario=_resolve_spec(spec, binding),
            binding=tuple(zip(names, combo)),
        ))
    return configs


# ---------------------------------------------------------------------------
# Canonical serialization

def _format_value(value) -> str:
    if isinstance(value, VarRef):
        return f"${value.name}"
    if isinstance(value, bool):
        raise TypeError("booleans are not scenario values")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    if isinstance(value, str):
        return value
    raise TypeError(f"cannot serialize {value!r}")


def _format_string(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _pairs_block(header: str, pairs: list[tuple[str, object]]) -> str:
    lines = [f"{header} {{"]
    for key, value in pairs:
        lines.append(f"  {key}: {_format_value(value)}")
    lines.append("}")
    return "\n".join(lines)


def _agent_pairs(decl: AgentDecl, is_ego: bool) -> list[tuple[str, object]]:
    pairs: list[tuple[str, object]] = [("lane", decl.lane), ("s", decl.s), ("speed", decl.speed)]
    if not is_ego:
        pairs.append(("behavior", decl.behavior))
        if decl.behavior == "emergency_brake":
            pairs += [("at", decl.at), ("decel", decl.decel)]
        elif decl.behavior == "cut_in":
            pairs += [("at", decl.at), ("target_lane", decl.target_lane),
                      ("duration", decl.duration)]
    for key, default in (("length", 4.5), ("width", 1.8), ("wheelbase", 2.5)):
        value = getattr(decl, key)
        if isinstance(value, VarRef) or value != default:
            pairs.append((key, value))
    return pairs


def serialize(spec: ScenarioSpec) -> str:
    """Canonical text: LF line endings, two-space indent, fixed key order.

    parse(serialize(spec)) is structurally equal to the spec.
    """
    chunks = [f"scenario {_format_string(spec.name)}"]

    road_pairs: list[tuple[str, object]] = [("lanes", spec.road.lane_count),
                                            ("lane_width", spec.road.lane_width)]
    if spec.road.segments:
        flat = tuple(v for seg in spec.road.segments for v in seg)
        road_pairs.append(("segments", flat))
    chunks.append(_pairs_block("road", road_pairs))

    chunks.append(_pairs_block("ego", _agent_pairs(spec.ego, is_ego=True)))
    for agent in spec.agents:
        chunks.append(_pairs_block(f"agent {_format_string(agent.name)}",
                                   _agent_pairs(agent, is_ego=False)))

    mission_pairs = [("target_s", spec.mission.target_s), ("timeout", spec.mission.timeout),
                     ("lane", spec.mission.lane)]
    chunks.append(_pairs_block(f"mission {spec.mission.kind}", mission_pairs))

    for fault in spec.faults:
        if isinstance(fault, DropFaultDecl):
            pairs = [("rate", fault.rate)]
            if isinstance(fault.delay_sigma, VarRef) or fault.delay_sigma != 0.0:
                pairs.append(("delay_sigma", fault.delay_sigma))
        elif isinstance(fault, ShiftFaultDecl):
            pairs = [(k, getattr(fault, k))
                     for k in ("translation_sigma", "rotation_sigma",
                               "dx", "dy", "dz", "yaw", "pitch", "roll")
                     if isinstance(getattr(fault, k), VarRef) or getattr(fault, k) != 0.0]
        else:
            pairs = [("node", fault.node), ("count", fault.count)]
            if fault.mode != "flip":
                pairs.append(("mode", fault.mode))
            if isinstance(fault.value, VarRef) or fault.value != 0.0:
                pairs.append(("value", fault.value))
            if isinstance(fault.from_tick, VarRef) or fault.from_tick != 0:
                pairs.append(("from_tick", fault.from_tick))
            if isinstance(fault.to_tick, VarRef) or fault.to_tick != -1:
                pairs.append(("to_tick", fault.to_tick))
        chunks.append(_pairs_block(f"fault {fault.kind}", pairs))

    for axis in spec.sweeps:
        values = ", ".join(_format_value(v) for v in axis.values)
        chunks.append(f"sweep {axis.name} in [{values}]")

    return "\n\n".join(chunks) + "\n"
