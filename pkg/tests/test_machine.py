"""Machine-level behaviour: validation, stepping, orbits, inversion."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamca.machine import (
    BLANK,
    MARK,
    NO_SUCCESSOR,
    Configuration,
    ControlSet,
    MachineSpec,
    MalformedConfiguration,
    NotReversible,
    SymbolSet,
    a_cell,
    amplification_stats,
    cell_track2,
    control,
    invert,
    is_control,
    run_orbit,
    run_stats,
    spec_from_json,
    spec_to_json,
    step,
    validate_reversible,
)
from hamca.encoding import anchored_configuration, scattered_m_sites
from hamca.staged import build_staged_machine


def small_symbols():
    return SymbolSet(m_track2=(BLANK, MARK), a_track2=("a1", "a2", MARK))


def test_validate_clean_fixture(oneway):
    assert validate_reversible(oneway).ok()


def test_validate_reports_collision():
    rules = {
        ("q", a_cell("a1")): ("q", a_cell("a2")),
        ("q", a_cell("a2")): ("q", a_cell("a2")),  # same target
    }
    spec = MachineSpec(
        name="bad",
        symbols=small_symbols(),
        control=ControlSet(("q",), frozenset({"q"}), frozenset(), frozenset()),
        rules=rules,
        shift_enabled=frozenset({"q"}),
        init_state="q",
    )
    report = validate_reversible(spec)
    assert len(report.collisions) == 1
    assert not report.ok()
    with pytest.raises(NotReversible):
        invert(spec)


def test_validate_reports_direction_violation():
    spec = MachineSpec(
        name="bad-dir",
        symbols=small_symbols(),
        control=ControlSet(("q",), frozenset({"q"}), frozenset({"q"}), frozenset()),
        rules={("q", a_cell("a1")): ("q", a_cell("a1"))},
        shift_enabled=frozenset({"q"}),
        init_state="q",
    )
    report = validate_reversible(spec)
    assert report.direction_violations
    assert not report.ok()


def test_step_boot_marks_first_cell(oneway):
    cfg = anchored_configuration(oneway, 4)
    nxt = step(oneway, cfg).next
    assert nxt.cells[1] == a_cell(MARK)
    assert nxt.cells[0] == control(1, "scan")


def test_step_right_mover_dies_on_marked_cell(oneway_nd):
    # amplification state re-reading the marker: the forbidden pattern
    cells = (a_cell("a2"), control(0, "amp"), a_cell(MARK), a_cell("a1"))
    assert step(oneway_nd, Configuration(cells)) is NO_SUCCESSOR


def test_step_open_boundary_exhaustion(drifter_nd):
    cells = (a_cell("a1"), a_cell("a1"), control(1, "drift"))
    assert step(drifter_nd, Configuration(cells, "open")) is NO_SUCCESSOR


def test_step_requires_single_control(oneway):
    cells = (control(0, "boot"), a_cell("a1"), control(0, "boot"), a_cell("a1"))
    with pytest.raises(MalformedConfiguration):
        step(oneway, Configuration(cells))


def test_orbit_cycle_is_full_period(shuttle):
    cfg = Configuration((control(0, "glide"),) + (a_cell("a1"),) * 4)
    orbit = run_orbit(shuttle, cfg, 10_000)
    assert orbit.terminal == ("cycle", 2 * 5)
    assert len({c.cells for c in orbit.states}) == orbit.length


def test_orbit_dead_end_after_sweep(oneway_nd):
    L = 6
    orbit = run_orbit(oneway_nd, anchored_configuration(oneway_nd, L), 10_000)
    assert orbit.kind == "dead_end"
    assert orbit.length == (orbit.length - 2 * L) + 2 * L  # J = j0 + 2L bookkeeping
    # the final configuration is about to re-read the marker rightward
    last = orbit.states[-1]
    i = last.single_control()
    assert last.cells[i][1] == 0  # read-write mode
    assert cell_track2(last.cells[(i + 1) % last.size]) == MARK


def test_orbit_truncation():
    spec = build_staged_machine("ping_pong", "one-way-amp")
    orbit = run_orbit(spec, anchored_configuration(spec, 4), 0)
    assert orbit.terminal == ("truncated", 1)


def test_invert_is_involution(oneway):
    twice = invert(invert(oneway))
    assert twice.rules == oneway.rules
    assert twice.rw_mode == oneway.rw_mode
    assert twice.control.plus == oneway.control.plus


def test_invert_round_trip_long(oneway):
    spec = build_staged_machine("counter", "one-way-amp")
    L = 60
    sites = scattered_m_sites(L, 20, witness_at=20)
    cfg = anchored_configuration(spec, L, sites)
    cur = cfg
    for _ in range(10_000):
        res = step(spec, cur)
        if res is NO_SUCCESSOR:
            break
        cur = res.next
    steps_taken = _count_back(spec, cfg, cur)
    inv = invert(spec)
    back = cur
    for _ in range(steps_taken):
        back = step(inv, back).next
    assert back.cells == cfg.cells
    assert step(inv, back) is NO_SUCCESSOR  # no predecessor before the start


def _count_back(spec, start, end):
    cur = start
    k = 0
    while cur.cells != end.cells:
        cur = step(spec, cur).next
        k += 1
    return k


def test_track1_immutable_and_kind_conserved(oneway):
    L = 10
    sites = scattered_m_sites(L, 3, witness_at=1)
    cfg = anchored_configuration(oneway, L, sites)
    orbit = run_orbit(oneway, cfg, 10_000)
    bits0 = sorted(x[1:3] for x in cfg.cells if not is_control(x) and x[0] == "M")
    kinds0 = sorted(x[0] for x in cfg.cells if not is_control(x))
    for c in orbit.states:
        bits = sorted(x[1:3] for x in c.cells if not is_control(x) and x[0] == "M")
        kinds = sorted(x[0] for x in c.cells if not is_control(x))
        assert bits == bits0
        assert kinds == kinds0


def test_injectivity_exhaustive_small(shuttle):
    """All single-control configurations on a short ring map injectively."""
    cells = shuttle.symbols.cells()
    L = 4
    seen = {}
    for pos in range(L + 1):
        for mode in (0, 1):
            for combo in itertools.product(cells, repeat=L):
                lattice = list(combo[:pos]) + [control(mode, "glide")] + list(combo[pos:])
                cfg = Configuration(tuple(lattice))
                res = step(shuttle, cfg)
                if res is NO_SUCCESSOR:
                    continue
                key = res.next.cells
                assert key not in seen, (cfg.cells, seen[key])
                seen[key] = cfg.cells


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_injectivity_sampled(data, oneway):
    """Random configuration pairs at L = 5 never collide under the step map."""
    cells = oneway.symbols.cells()
    L = 5

    def draw_cfg():
        pos = data.draw(st.integers(0, L))
        mode = data.draw(st.integers(0, 1))
        q = data.draw(st.sampled_from(sorted(oneway.control.states)))
        body = [
            cells[data.draw(st.integers(0, len(cells) - 1))] for _ in range(L)
        ]
        lattice = body[:pos] + [control(mode, q)] + body[pos:]
        return Configuration(tuple(lattice))

    a, b = draw_cfg(), draw_cfg()
    ra, rb = step(oneway, a), step(oneway, b)
    if ra is not NO_SUCCESSOR and rb is not NO_SUCCESSOR and a.cells != b.cells:
        assert ra.next.cells != rb.next.cells


def test_counts_invariant_after_marking(oneway):
    """n_a1 + n_a2 equals the flippable-cell count at every step past the first."""
    L = 12
    sites = scattered_m_sites(L, 3, witness_at=1)
    cfg = anchored_configuration(oneway, L, sites)
    orbit = run_orbit(oneway, cfg, 10_000)
    n1 = amplification_stats(orbit, "a1").counts
    n2 = amplification_stats(orbit, "a2").counts
    expected = L - len(sites) - 1
    assert all(a + b == expected for a, b in zip(n1[1:], n2[1:]))


def test_run_stats_matches_orbit(oneway):
    L = 9
    sites = scattered_m_sites(L, 2, witness_at=1)
    cfg = anchored_configuration(oneway, L, sites)
    orbit = run_orbit(oneway, cfg, 10_000)
    stats = run_stats(oneway, cfg, 10_000, track_increments=("a2",))
    assert stats.length == orbit.length
    assert stats.terminal == orbit.kind
    for sym in ("a1", "a2"):
        series = amplification_stats(orbit, sym)
        exact = sum(
            v
            for k, v in stats.total_steps_by_value.items()
            if k[0] != "Q" and cell_track2(k) == sym
        )
        assert exact == series.total
    # increment steps reproduce the count series
    counts = amplification_stats(orbit, "a2").counts
    incs = stats.change_steps["a2"]
    assert [counts[j - 1] for j in incs] == list(range(1, len(incs) + 1))


def test_spec_json_round_trip(oneway):
    data = spec_to_json(oneway)
    back = spec_from_json(data)
    assert back.rules == oneway.rules
    assert back.control == oneway.control
    assert back.symbols == oneway.symbols
    assert back.shift_enabled == oneway.shift_enabled
