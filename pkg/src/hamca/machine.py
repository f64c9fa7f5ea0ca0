"""Two-mode reversible Turing machines on finite one-dimensional lattices.

A machine alternates read-write steps and shift steps.  Lattice sites hold
either the finite control (a (mode, state) pair) or a tape cell.  Cells come
in two kinds: amplification cells ("A", symbol) and simulation cells
("M", bit1, bit2, symbol) whose bit pair is read-only.  In read-write mode
the control acts on the cell immediately to its right; in shift mode the
control swaps with a neighbour according to the state's shift class.  A
configuration with no applicable rule has no successor; injectivity of the
rule table makes the whole step map injective, which is what "reversible"
means here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

# Cell symbols are tuples: ("A", a) or ("M", b1, b2, s).
# Control sites are tuples: ("Q", mode, state) with mode in {0, 1}.
Cell = tuple
Site = tuple

MODE0 = 0
MODE1 = 1

PLUS = "+"
MINUS = "-"
ZERO = "0"

# Second-track symbol marking the left end of the tape.  MARK2/MARK3 are the
# rewritten forms used by the two-way amplification stage.
MARK = "mk"
MARK2 = "mk2"
MARK3 = "mk3"
MARK_FAMILY = (MARK, MARK2, MARK3)

BLANK = "s0"  # fresh second-track symbol of a simulation cell

BITS = ((0, 0), (0, 1), (1, 0), (1, 1))


def a_cell(sym: str) -> Cell:
    return ("A", sym)


def m_cell(b1: int, b2: int, sym: str) -> Cell:
    return ("M", b1, b2, sym)


def control(mode: int, state: str) -> Site:
    return ("Q", mode, state)


def is_control(site: Site) -> bool:
    return site[0] == "Q"


def cell_track2(cell: Cell) -> str:
    """Second-track symbol of a cell of either kind."""
    return cell[1] if cell[0] == "A" else cell[3]


def with_track2(cell: Cell, sym: str) -> Cell:
    return ("A", sym) if cell[0] == "A" else ("M", cell[1], cell[2], sym)


class MalformedConfiguration(ValueError):
    pass


class NotReversible(ValueError):
    pass


@dataclass(frozen=True)
class SymbolSet:
    """Cell alphabet of a machine: simulation-track and amplification-track symbols."""

    m_track2: tuple  # second-track symbols available on M-cells
    a_track2: tuple  # second-track symbols available on A-cells

    def cells(self) -> list:
        out = [("A", a) for a in self.a_track2]
        out.extend(("M", b1, b2, s) for (b1, b2) in BITS for s in self.m_track2)
        return out

    def validate(self) -> list:
        problems = []
        if BLANK not in self.m_track2:
            problems.append("m_track2 must contain the blank symbol")
        if MARK not in self.m_track2:
            problems.append("m_track2 must contain the left-end marker")
        if MARK not in self.a_track2:
            problems.append("a_track2 must contain the left-end marker")
        return problems


@dataclass(frozen=True)
class ControlSet:
    """Control states with their shift classes.

    The three class sets must be pairwise disjoint and cover every state
    (unique direction property); violations are reported by
    ``validate_reversible`` rather than raised here.
    """

    states: tuple
    plus: frozenset
    minus: frozenset
    zero: frozenset

    def shift_class(self, state: str) -> str:
        if state in self.plus:
            return PLUS
        if state in self.minus:
            return MINUS
        return ZERO

    def direction_problems(self) -> list:
        problems = []
        for a, b, name in (
            (self.plus, self.minus, "+/-"),
            (self.plus, self.zero, "+/0"),
            (self.minus, self.zero, "-/0"),
        ):
            for q in sorted(a & b):
                problems.append(f"state {q!r} is in both shift classes {name}")
        declared = self.plus | self.minus | self.zero
        for q in self.states:
            if q not in declared:
                problems.append(f"state {q!r} has no shift class")
        return problems


@dataclass(frozen=True)
class MachineSpec:
    """Rule table plus structural data of a two-mode machine.

    ``rw_mode`` is the mode in which read-write rules fire; shifts happen in
    the other mode.  ``shift_enabled`` lists the states that may shift at
    all: a state that is never produced by a read-write rule cannot occur in
    shift mode along a legal run, and giving it no shift keeps legal initial
    configurations free of predecessors.
    """

    name: str
    symbols: SymbolSet
    control: ControlSet
    rules: Mapping  # (state, cell) -> (state', cell')
    rw_mode: int = MODE0
    shift_enabled: frozenset = frozenset()
    init_state: str = "boot"
    variant: str = "one-way-amp"
    stage_marks: Mapping = field(default_factory=dict)  # label -> state name

    def shift_mode(self) -> int:
        return 1 - self.rw_mode

    def rule_items(self):
        return sorted(self.rules.items(), key=lambda kv: repr(kv[0]))


@dataclass(frozen=True)
class ValidationReport:
    collisions: tuple
    direction_violations: tuple
    structural: tuple

    def ok(self) -> bool:
        return not (self.collisions or self.direction_violations or self.structural)

    def summary(self) -> str:
        if self.ok():
            return "reversible"
        lines = list(self.structural)
        lines += [f"collision: {c}" for c in self.collisions]
        lines += [f"direction: {d}" for d in self.direction_violations]
        return "; ".join(lines)


@dataclass(frozen=True)
class Configuration:
    cells: tuple
    boundary: str = "periodic"  # or "open"

    def __post_init__(self):
        if self.boundary not in ("periodic", "open"):
            raise MalformedConfiguration(f"unknown boundary {self.boundary!r}")

    @property
    def size(self) -> int:
        return len(self.cells)

    def control_sites(self) -> list:
        return [i for i, x in enumerate(self.cells) if is_control(x)]

    def single_control(self) -> int:
        sites = self.control_sites()
        if len(sites) != 1:
            raise MalformedConfiguration(
                f"expected exactly one control site, found {len(sites)}"
            )
        return sites[0]


@dataclass(frozen=True)
class Orbit:
    """Maximal forward trajectory of a configuration under the step map.

    ``terminal`` is ("dead_end", J), ("cycle", period) or ("truncated", n).
    States are pairwise distinct except for the cycle closure, which is not
    stored twice.
    """

    states: tuple
    terminal: tuple
    machine: MachineSpec

    @property
    def length(self) -> int:
        return len(self.states)

    @property
    def kind(self) -> str:
        return self.terminal[0]


# ---------------------------------------------------------------------------
# Validation and inversion
# ---------------------------------------------------------------------------


def validate_reversible(spec: MachineSpec) -> ValidationReport:
    """Scan the rule table for injectivity collisions and direction violations."""
    structural = list(spec.symbols.validate())
    known_cells = set(spec.symbols.cells())
    seen_targets = {}
    collisions = []
    for src, dst in spec.rule_items():
        q, cell = src
        q2, cell2 = dst
        if q not in spec.control.states or q2 not in spec.control.states:
            structural.append(f"rule {src}->{dst} uses an undeclared state")
        if cell not in known_cells or cell2 not in known_cells:
            structural.append(f"rule {src}->{dst} uses an undeclared cell symbol")
        if cell[0] != cell2[0]:
            structural.append(f"rule {src}->{dst} changes the cell kind")
        if cell[0] == "M" and cell2[0] == "M" and cell[1:3] != cell2[1:3]:
            structural.append(f"rule {src}->{dst} rewrites a read-only bit pair")
        if dst in seen_targets:
            collisions.append(f"{seen_targets[dst]} and {src} both map to {dst}")
        else:
            seen_targets[dst] = src
    direction = spec.control.direction_problems()
    return ValidationReport(tuple(collisions), tuple(direction), tuple(structural))


def invert(spec: MachineSpec) -> MachineSpec:
    """Machine that undoes one step of ``spec`` per step.

    Read-write rules become their inverse relation, shift classes flip sign
    and the roles of the two modes swap, so running the result forward walks
    the original trajectory backward.
    """
    report = validate_reversible(spec)
    if not report.ok():
        raise NotReversible(report.summary())
    inv_rules = {dst: src for src, dst in spec.rules.items()}
    ctrl = ControlSet(
        states=spec.control.states,
        plus=spec.control.minus,
        minus=spec.control.plus,
        zero=spec.control.zero,
    )
    name = spec.name[:-4] if spec.name.endswith("~inv") else spec.name + "~inv"
    return replace(
        spec,
        name=name,
        control=ctrl,
        rules=inv_rules,
        rw_mode=spec.shift_mode(),
    )


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Successor:
    next: Configuration


class NoSuccessor:
    """Sentinel: the configuration has no successor under the machine."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NoSuccessor"


NO_SUCCESSOR = NoSuccessor()


def step(spec: MachineSpec, config: Configuration):
    """One machine step on a single-control configuration.

    Returns Successor or NO_SUCCESSOR.  Raises MalformedConfiguration when
    the control site is missing or duplicated.
    """
    i = config.single_control()
    cells = config.cells
    n = len(cells)
    _, mode, q = cells[i]

    def site(k):
        if config.boundary == "periodic":
            return k % n
        return k if 0 <= k < n else None

    if mode == spec.rw_mode:
        r = site(i + 1)
        if r is None:
            return NO_SUCCESSOR  # tape exhausted at the open boundary
        target = cells[r]
        if is_control(target):
            return NO_SUCCESSOR  # adjacent control: blocks never interact
        rule = spec.rules.get((q, target))
        if rule is None:
            return NO_SUCCESSOR
        q2, cell2 = rule
        new = list(cells)
        new[i] = control(1 - mode, q2)
        new[r] = cell2
        return Successor(Configuration(tuple(new), config.boundary))

    # shift mode
    if q not in spec.shift_enabled:
        return NO_SUCCESSOR
    cls = spec.control.shift_class(q)
    if cls == ZERO:
        new = list(cells)
        new[i] = control(1 - mode, q)
        return Successor(Configuration(tuple(new), config.boundary))
    j = site(i + 1) if cls == PLUS else site(i - 1)
    if j is None:
        return NO_SUCCESSOR  # shifted off the open lattice
    if is_control(cells[j]):
        return NO_SUCCESSOR
    new = list(cells)
    new[j] = control(1 - mode, q)
    new[i] = cells[j]
    return Successor(Configuration(tuple(new), config.boundary))


def run_orbit(spec: MachineSpec, config: Configuration, max_steps: int) -> Orbit:
    """Iterate ``step`` until a dead end, a repeat, or the step budget.

    Visited configurations are kept in a hash set keyed by the full cell
    tuple; on a hash hit the closure is confirmed by tuple equality, and by
    injectivity the repeat can only be the initial configuration.
    """
    states = [config]
    seen = {config.cells: 0}
    current = config
    for _ in range(max_steps):
        result = step(spec, current)
        if result is NO_SUCCESSOR:
            return Orbit(tuple(states), ("dead_end", len(states)), spec)
        current = result.next
        hit = seen.get(current.cells)
        if hit is not None:
            if hit != 0:  # pragma: no cover - impossible for injective maps
                raise AssertionError("re-entry into the middle of an orbit")
            return Orbit(tuple(states), ("cycle", len(states)), spec)
        seen[current.cells] = len(states)
        states.append(current)
    return Orbit(tuple(states), ("truncated", len(states)), spec)


# ---------------------------------------------------------------------------
# Fast streaming runner: exact per-step symbol statistics without storing
# configurations.  Used for long amplification runs (thousands of sites,
# millions of steps).
# ---------------------------------------------------------------------------


@dataclass
class RunStats:
    """Exact bookkeeping of one forward run of length J (configurations 1..J).

    ``total_steps_by_value`` maps each site value v to Σ_{j=1..J} (number of
    sites holding v in configuration j).  ``change_steps`` records, for each
    tracked second-track symbol, the steps j at which its site count grew.
    ``stage_entry_steps`` maps an instrumentation label to the first step j
    whose configuration has the control in the labelled state.
    """

    length: int
    terminal: str
    total_steps_by_value: dict
    first_hist: dict
    last_hist: dict
    change_steps: dict
    stage_entry_steps: dict


def run_stats(
    spec: MachineSpec,
    config: Configuration,
    max_steps: int,
    track_increments: Sequence[str] = (),
) -> RunStats:
    """Run forward, accumulating exact integer statistics in O(1) per step."""
    i0 = config.single_control()
    i = i0
    c0 = config.cells[i0]
    cells = list(config.cells)
    n = len(cells)
    periodic = config.boundary == "periodic"
    rules = spec.rules
    rw_mode = spec.rw_mode
    shift_enabled = spec.shift_enabled
    shift_class = {q: spec.control.shift_class(q) for q in spec.control.states}

    hist = {}
    for x in cells:
        hist[x] = hist.get(x, 0) + 1
    first_hist = dict(hist)

    since = [1] * n  # step at which each site acquired its current value
    totals = {}
    track = {s: [] for s in track_increments}
    marks = {}
    label_of_state = {v: k for k, v in spec.stage_marks.items()}

    def write(site_idx, new, j_now):
        old = cells[site_idx]
        totals[old] = totals.get(old, 0) + (j_now - since[site_idx])
        since[site_idx] = j_now
        cells[site_idx] = new
        hist[old] -= 1
        hist[new] = hist.get(new, 0) + 1
        if new[0] == "Q":
            label = label_of_state.get(new[2])
            if label is not None and label not in marks:
                marks[label] = j_now

    j = 1
    terminal = "truncated"
    while j <= max_steps:
        _, mode, q = cells[i]
        if mode == rw_mode:
            r = i + 1
            if r >= n:
                if not periodic:
                    terminal = "dead_end"
                    break
                r = 0
            target = cells[r]
            if target[0] == "Q":
                terminal = "dead_end"
                break
            rule = rules.get((q, target))
            if rule is None:
                terminal = "dead_end"
                break
            q2, cell2 = rule
            j += 1
            write(i, control(1 - mode, q2), j)
            if cell2 != target:
                write(r, cell2, j)
                # only rewrites change symbol counts; shifts relocate cells
                if track:
                    t2 = cell_track2(cell2)
                    if t2 in track and cell_track2(target) != t2:
                        track[t2].append(j)
        else:
            if q not in shift_enabled:
                terminal = "dead_end"
                break
            cls = shift_class[q]
            j += 1
            if cls == ZERO:
                write(i, control(1 - mode, q), j)
            else:
                k = i + 1 if cls == PLUS else i - 1
                if k >= n or k < 0:
                    if not periodic:
                        terminal = "dead_end"
                        j -= 1
                        break
                    k %= n
                if cells[k][0] == "Q":
                    terminal = "dead_end"
                    j -= 1
                    break
                moved = cells[k]
                write(k, control(1 - mode, q), j)
                write(i, moved, j)
                i = k
        if i == i0 and cells[i0] == c0 and tuple(cells) == config.cells:
            terminal = "cycle"
            j -= 1  # the repeat itself is not a new configuration
            break

    J = j
    for s in range(n):
        v = cells[s]
        totals[v] = totals.get(v, 0) + (J + 1 - since[s])
    return RunStats(
        length=J,
        terminal=terminal,
        total_steps_by_value=totals,
        first_hist=first_hist,
        last_hist=dict(hist),
        change_steps=track,
        stage_entry_steps=marks,
    )


# ---------------------------------------------------------------------------
# Amplification statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AmplificationStats:
    """Counts of a second-track symbol along an orbit."""

    counts: tuple  # N(j) for j = 1..J
    average: Fraction  # (1/J) Σ_j N(j) / (number of sites)

    @property
    def total(self) -> int:
        return sum(self.counts)


def amplification_stats(orbit: Orbit, track2_symbol: str) -> AmplificationStats:
    if orbit.kind == "truncated":
        raise ValueError("amplification statistics need a complete orbit")
    counts = []
    for cfg in orbit.states:
        c = 0
        for x in cfg.cells:
            if not is_control(x) and cell_track2(x) == track2_symbol:
                c += 1
        counts.append(c)
    J = len(counts)
    n_sites = orbit.states[0].size
    avg = Fraction(sum(counts), J * n_sites)
    return AmplificationStats(tuple(counts), avg)


def stats_average(stats: RunStats, track2_symbol: str, n_sites: int) -> Fraction:
    """(1/J) Σ_j N_sym(j) / n_sites from a streaming run, exact."""
    total = 0
    for value, duration in stats.total_steps_by_value.items():
        if value[0] != "Q" and cell_track2(value) == track2_symbol:
            total += duration
    return Fraction(total, stats.length * n_sites)


# ---------------------------------------------------------------------------
# Block decomposition (independent sub-machines between control sites)
# ---------------------------------------------------------------------------


def split_blocks(config: Configuration) -> list:
    """Split a multi-control configuration into per-block configurations.

    A dynamical block is a control site together with the run of cells to its
    right, up to the next control site.  Each block is returned as an open
    configuration, since its machine can never leave it.
    """
    sites = config.control_sites()
    if not sites:
        raise MalformedConfiguration("no control site")
    n = config.size
    blocks = []
    for idx, start in enumerate(sites):
        end = sites[(idx + 1) % len(sites)]
        cells = [config.cells[start]]
        k = (start + 1) % n
        while k != end and k != start:
            cells.append(config.cells[k])
            k = (k + 1) % n
        blocks.append(Configuration(tuple(cells), "open"))
    return blocks


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def cell_to_tag(x: Site) -> str:
    if x[0] == "Q":
        return f"Q:{x[1]}:{x[2]}"
    if x[0] == "A":
        return f"A:{x[1]}"
    return f"M:{x[1]}{x[2]}:{x[3]}"


def tag_to_cell(tag: str) -> Site:
    kind, rest = tag.split(":", 1)
    if kind == "Q":
        mode, state = rest.split(":", 1)
        return control(int(mode), state)
    if kind == "A":
        return a_cell(rest)
    bits, sym = rest.split(":", 1)
    return m_cell(int(bits[0]), int(bits[1]), sym)


def spec_to_json(spec: MachineSpec) -> dict:
    return {
        "name": spec.name,
        "variant": spec.variant,
        "rw_mode": spec.rw_mode,
        "init_state": spec.init_state,
        "states": list(spec.control.states),
        "shift_plus": sorted(spec.control.plus),
        "shift_minus": sorted(spec.control.minus),
        "shift_zero": sorted(spec.control.zero),
        "shift_enabled": sorted(spec.shift_enabled),
        "m_track2": list(spec.symbols.m_track2),
        "a_track2": list(spec.symbols.a_track2),
        "rules": [
            [src[0], cell_to_tag(src[1]), dst[0], cell_to_tag(dst[1])]
            for src, dst in spec.rule_items()
        ],
        "stage_marks": dict(spec.stage_marks),
    }


def spec_from_json(data: dict) -> MachineSpec:
    rules = {}
    for q, ctag, q2, ctag2 in data["rules"]:
        rules[(q, tag_to_cell(ctag))] = (q2, tag_to_cell(ctag2))
    return MachineSpec(
        name=data["name"],
        symbols=SymbolSet(tuple(data["m_track2"]), tuple(data["a_track2"])),
        control=ControlSet(
            states=tuple(data["states"]),
            plus=frozenset(data["shift_plus"]),
            minus=frozenset(data["shift_minus"]),
            zero=frozenset(data["shift_zero"]),
        ),
        rules=rules,
        rw_mode=data["rw_mode"],
        shift_enabled=frozenset(data["shift_enabled"]),
        init_state=data["init_state"],
        variant=data["variant"],
        stage_marks=dict(data.get("stage_marks", {})),
    )


def save_spec(spec: MachineSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_json(spec), fh, indent=1, sort_keys=True)


def load_spec(path) -> MachineSpec:
    with open(path) as fh:
        return spec_from_json(json.load(fh))


def orbit_to_jsonl(orbit: Orbit) -> str:
    lines = []
    for j, cfg in enumerate(orbit.states, start=1):
        lines.append(
            json.dumps(
                {"j": j, "cells": [cell_to_tag(x) for x in cfg.cells]},
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"
