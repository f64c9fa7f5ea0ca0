"""Compilation to local pair maps, the update isometry, orbit spectra."""

import numpy as np
import pytest

from hamca.dynamics import run_orbit_cached
from hamca.encoding import anchored_configuration, scattered_m_sites
from hamca.hamiltonian import (
    ZERO_STATE,
    apply_update,
    apply_update_dagger,
    compile_machine,
    energy_gap_bound,
    hamiltonian_from_json,
    hamiltonian_to_json,
    min_distinct_gap,
    orbit_spectrum,
    reachable_space,
    TruncatedOrbit,
)
from hamca.machine import (
    MARK,
    NO_SUCCESSOR,
    Configuration,
    Orbit,
    a_cell,
    control,
    run_orbit,
    step,
)


def test_update_agrees_with_step_along_runs(oneway, h_oneway, rng):
    """Cross-module equality on configurations drawn from real runs."""
    checked = 0
    for seed in range(8):
        L = int(rng.randint(4, 9))
        m = int(rng.randint(0, 3))
        sites = scattered_m_sites(L, m, witness_at=1, seed=seed) if m else {}
        cfg = anchored_configuration(oneway, L, sites)
        cur = cfg
        for _ in range(40):
            s = step(oneway, cur)
            u = apply_update(h_oneway, cur)
            if s is NO_SUCCESSOR:
                assert u is ZERO_STATE
                break
            assert u.cells == s.next.cells
            assert apply_update_dagger(h_oneway, u).cells == cur.cells
            cur = s.next
            checked += 1
    assert checked >= 100


def test_update_zero_on_marker_read(oneway_nd, h_oneway=None):
    h = compile_machine(oneway_nd)
    cells = (a_cell("a2"), control(0, "amp"), a_cell(MARK), a_cell("a1"))
    assert apply_update(h, Configuration(cells)) is ZERO_STATE


def test_initial_configuration_has_no_predecessor(oneway, h_oneway):
    cfg = anchored_configuration(oneway, 6, scattered_m_sites(6, 2, witness_at=1))
    assert apply_update_dagger(h_oneway, cfg) is ZERO_STATE


def test_update_zero_on_terminal(oneway_nd):
    h = compile_machine(oneway_nd)
    orbit = run_orbit(oneway_nd, anchored_configuration(oneway_nd, 5), 10_000)
    assert orbit.kind == "dead_end"
    assert apply_update(h, orbit.states[-1]) is ZERO_STATE


def test_locality_of_update(oneway, h_oneway):
    """Rewriting a cell two or more sites from the control leaves the local
    action unchanged."""
    L = 8
    cfg = anchored_configuration(oneway, L, {4: (0, 1)})
    base = apply_update(h_oneway, cfg)
    flipped = list(cfg.cells)
    flipped[6] = a_cell("a2")  # distance >= 2 from the control at site 0
    other = apply_update(h_oneway, Configuration(tuple(flipped)))
    assert base is not ZERO_STATE and other is not ZERO_STATE
    assert base.cells[:2] == other.cells[:2]
    assert other.cells[6] == a_cell("a2")


def test_reachable_closure_is_orbit_for_initial(oneway_nd):
    h = compile_machine(oneway_nd)
    cfg = anchored_configuration(oneway_nd, 5)
    orbit = run_orbit(oneway_nd, cfg, 10_000)
    space = reachable_space(h, [cfg])
    assert space.dim == orbit.length
    u = space.u_matrix()
    assert np.allclose(u @ u.T @ u, u)  # partial isometry on the basis
    assert np.count_nonzero(u) == orbit.length - 1


def test_block_isolation_structural(iid_nd):
    """No update pair joins two control sites; per-block steps commute with
    whole-lattice application order."""
    h = compile_machine(iid_nd)
    e0 = control(0, "boot")
    cells = (e0, a_cell("a1"), e0, a_cell("a1"), a_cell("a1"))
    cfg = Configuration(cells)
    space = reachable_space(h, [cfg])
    # the closure factorizes: dim equals the product of block orbit lengths
    from hamca.machine import split_blocks

    blocks = split_blocks(cfg)
    j1 = run_orbit_cached(blocks[0], h, 1000).length
    j2 = run_orbit_cached(blocks[1], h, 1000).length
    assert space.dim == j1 * j2


def test_spectrum_examples():
    def fake_orbit(J, kind):
        states = tuple(
            Configuration((control(0, "x"),) + (a_cell("a1"),) * j) for j in range(1, J + 1)
        )
        return Orbit(states, (kind, J), None)

    spec2 = orbit_spectrum(fake_orbit(2, "dead_end"))
    assert np.allclose(sorted(spec2.eigenvalues), [-1.0, 1.0])
    spec7 = orbit_spectrum(fake_orbit(7, "dead_end"))
    assert min_distinct_gap(spec7) == pytest.approx(0.4336, abs=2e-4)
    assert energy_gap_bound(fake_orbit(7, "dead_end")) == pytest.approx(0.125)
    cyc4 = orbit_spectrum(fake_orbit(4, "cycle"))
    assert np.allclose(sorted(cyc4.eigenvalues), [-2.0, 0.0, 0.0, 2.0])
    assert energy_gap_bound(fake_orbit(1, "dead_end")) == 2
    with pytest.raises(TruncatedOrbit):
        orbit_spectrum(fake_orbit(3, "truncated"))


def test_spectrum_matches_dense_matrices():
    """Closed forms against direct eigensolves of the path and the cycle."""
    for J in (2, 5, 12, 100):
        path = np.diag(np.ones(J - 1), 1) + np.diag(np.ones(J - 1), -1)
        lam = np.linalg.eigvalsh(path)
        states = None
        spec = orbit_spectrum(
            Orbit(tuple([None] * J), ("dead_end", J), None)
        )
        assert np.allclose(np.sort(spec.eigenvalues), lam)
    for J in (3, 4, 9):
        cyc = np.zeros((J, J))
        for j in range(J):
            cyc[j, (j + 1) % J] = 1
            cyc[(j + 1) % J, j] = 1
        lam = np.linalg.eigvalsh(cyc)
        spec = orbit_spectrum(Orbit(tuple([None] * J), ("cycle", J), None))
        assert np.allclose(np.sort(spec.eigenvalues), lam)


def test_eigenvector_first_row_normalized():
    spec = orbit_spectrum(Orbit(tuple([None] * 40), ("dead_end", 40), None))
    assert abs((spec.vectors[0] ** 2).sum() - 1.0) < 1e-12


def test_gap_bound_sweep():
    for J in (1, 7, 100):
        orbit = Orbit(tuple([None] * J), ("dead_end", J), None)
        bound = float(energy_gap_bound(orbit))
        if J > 1:
            assert min_distinct_gap(orbit_spectrum(orbit)) >= bound - 1e-12


def test_hamiltonian_json_round_trip(oneway, h_oneway):
    data = hamiltonian_to_json(h_oneway)
    back = hamiltonian_from_json(data)
    assert back.u0_pairs == h_oneway.u0_pairs
    assert back.shift_dirs == h_oneway.shift_dirs
    assert back.site_values == h_oneway.site_values
