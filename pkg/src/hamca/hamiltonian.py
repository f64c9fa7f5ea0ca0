"""Local update operator U and Hamiltonian H = U + U† on the lattice.

U is kept as a partial injection on the configuration basis, represented by
two-site pair maps: read-write pairs act on (control site, cell to its
right); shift pairs swap the control with a neighbour.  H is never
materialized on the full tensor space; dense linear algebra happens only on
the subspace reachable from a seed set of configurations, which for a legal
initial configuration is exactly its orbit.

``apply_update`` deliberately re-implements the stepping mechanics from the
pair maps alone, so agreement with ``machine.step`` is a two-route check of
the compilation, not a tautology.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .machine import (
    MARK,
    PLUS,
    ZERO,
    Configuration,
    MachineSpec,
    NotReversible,
    Orbit,
    cell_to_tag,
    is_control,
    tag_to_cell,
    validate_reversible,
)


class TruncatedOrbit(ValueError):
    pass


class DimensionGuard(ValueError):
    pass


@dataclass(frozen=True)
class LocalHamiltonian:
    """Pair maps of the one-step isometry, plus shift metadata."""

    site_values: tuple  # every value a site can hold (cells and controls)
    rw_mode: int
    u0_pairs: dict  # ((mode,q), cell) -> ((mode',q'), cell')
    shift_dirs: dict  # state -> "+" | "-" | "0" for shift-enabled states
    boundary: str = "periodic"

    @property
    def site_dim(self) -> int:
        return len(self.site_values)

    def value_index(self, value) -> int:
        return self.site_values.index(value)


def compile_machine(spec: MachineSpec, boundary: str = "periodic") -> LocalHamiltonian:
    """Compile a reversible machine into local pair maps."""
    report = validate_reversible(spec)
    if not report.ok():
        raise NotReversible(report.summary())
    u0 = {}
    for (q, cell), (q2, cell2) in spec.rules.items():
        t2 = cell[1] if cell[0] == "A" else cell[3]
        if t2 == MARK and q in spec.control.plus:
            raise NotReversible(
                "read-write pair from a right-moving state onto the marked cell"
            )
        u0[((spec.rw_mode, q), cell)] = ((spec.shift_mode(), q2), cell2)
    dirs = {q: spec.control.shift_class(q) for q in sorted(spec.shift_enabled)}
    values = tuple(spec.symbols.cells()) + tuple(
        ("Q", m, q) for m in (0, 1) for q in spec.control.states
    )
    return LocalHamiltonian(
        site_values=values,
        rw_mode=spec.rw_mode,
        u0_pairs=u0,
        shift_dirs=dirs,
        boundary=boundary,
    )


class Zero:
    """Sentinel for U|x> = 0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Zero"


ZERO_STATE = Zero()


def _apply_at(h: LocalHamiltonian, cells, i, n, dagger=False):
    """Apply the (possibly adjoint) update at control site i; None if null."""
    periodic = h.boundary == "periodic"

    def site(k):
        if periodic:
            return k % n
        return k if 0 <= k < n else None

    _, mode, q = cells[i]
    if not dagger:
        if mode == h.rw_mode:
            r = site(i + 1)
            if r is None or is_control(cells[r]):
                return None
            hit = h.u0_pairs.get(((mode, q), cells[r]))
            if hit is None:
                return None
            (m2, q2), cell2 = hit
            out = list(cells)
            out[i] = ("Q", m2, q2)
            out[r] = cell2
            return tuple(out)
        d = h.shift_dirs.get(q)
        if d is None:
            return None
        if d == ZERO:
            out = list(cells)
            out[i] = ("Q", h.rw_mode, q)
            return tuple(out)
        j = site(i + 1) if d == PLUS else site(i - 1)
        if j is None or is_control(cells[j]):
            return None
        out = list(cells)
        out[j] = ("Q", h.rw_mode, q)
        out[i] = cells[j]
        return tuple(out)

    # adjoint: undo a read-write if mode is the shift mode, else undo a shift
    if mode != h.rw_mode:
        r = site(i + 1)
        if r is None or is_control(cells[r]):
            return None
        for src, dst in h.u0_pairs.items():
            if dst == ((mode, q), cells[r]):
                (m0, q0), cell0 = src
                out = list(cells)
                out[i] = ("Q", m0, q0)
                out[r] = cell0
                return tuple(out)
        return None
    d = h.shift_dirs.get(q)
    if d is None:
        return None
    if d == ZERO:
        out = list(cells)
        out[i] = ("Q", 1 - h.rw_mode, q)
        return tuple(out)
    # a "+" shift brought the control here from the left
    j = site(i - 1) if d == PLUS else site(i + 1)
    if j is None or is_control(cells[j]):
        return None
    out = list(cells)
    out[j] = ("Q", 1 - h.rw_mode, q)
    out[i] = cells[j]
    return tuple(out)


def apply_update(h: LocalHamiltonian, config: Configuration):
    """U applied to a single-control basis configuration."""
    i = config.single_control()
    out = _apply_at(h, config.cells, i, config.size, dagger=False)
    if out is None:
        return ZERO_STATE
    return Configuration(out, config.boundary)


def apply_update_dagger(h: LocalHamiltonian, config: Configuration):
    """U† applied to a single-control basis configuration."""
    i = config.single_control()
    out = _apply_at(h, config.cells, i, config.size, dagger=True)
    if out is None:
        return ZERO_STATE
    return Configuration(out, config.boundary)


def _branches(h: LocalHamiltonian, cells, n, dagger):
    outs = []
    for i, x in enumerate(cells):
        if is_control(x):
            out = _apply_at(h, cells, i, n, dagger=dagger)
            if out is not None:
                outs.append(out)
    return outs


@dataclass
class ReachableSpace:
    """Basis closure of a seed set under U and U†, with U as a sparse matrix.

    ``basis`` lists cell tuples; ``u_target[k]`` is the index of U|k> per
    control site (several entries when several blocks can step), so the U
    matrix has entries U[t, k] = 1 for t in u_target[k].
    """

    basis: list
    index: dict
    u_edges: list  # list of (source_idx, target_idx)
    boundary: str

    @property
    def dim(self):
        return len(self.basis)

    def u_matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for k, t in self.u_edges:
            m[t, k] = 1.0
        return m

    def h_matrix(self) -> np.ndarray:
        u = self.u_matrix()
        return u + u.T


def reachable_space(
    h: LocalHamiltonian, seeds: Iterable[Configuration], guard: int = 1 << 20
) -> ReachableSpace:
    """Breadth-first closure under both U and U† starting from the seeds."""
    basis = []
    index = {}
    boundary = None
    frontier = []
    for cfg in seeds:
        if boundary is None:
            boundary = cfg.boundary
        if cfg.cells not in index:
            index[cfg.cells] = len(basis)
            basis.append(cfg.cells)
            frontier.append(cfg.cells)
    edges = set()
    while frontier:
        cells = frontier.pop()
        n = len(cells)
        k = index[cells]
        for t_cells in _branches(h, cells, n, dagger=False):
            if t_cells not in index:
                if len(basis) >= guard:
                    raise DimensionGuard(f"reachable subspace exceeds {guard} states")
                index[t_cells] = len(basis)
                basis.append(t_cells)
                frontier.append(t_cells)
            edges.add((k, index[t_cells]))
        for s_cells in _branches(h, cells, n, dagger=True):
            if s_cells not in index:
                if len(basis) >= guard:
                    raise DimensionGuard(f"reachable subspace exceeds {guard} states")
                index[s_cells] = len(basis)
                basis.append(s_cells)
                frontier.append(s_cells)
            edges.add((index[s_cells], k))
    return ReachableSpace(basis=basis, index=index, u_edges=sorted(edges), boundary=boundary)


# ---------------------------------------------------------------------------
# Orbit-restricted spectra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitSpectrum:
    kind: str  # "dead_end" or "cycle"
    length: int
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors over j = 1..J

    def distinct_gaps(self, tol: float = 1e-9) -> np.ndarray:
        lam = np.sort(np.unique(np.round(self.eigenvalues / tol) * tol))
        return np.diff(lam)


def orbit_spectrum(orbit: Orbit) -> OrbitSpectrum:
    """Eigendata of H restricted to the orbit span.

    Dead-end orbits carry the J-site path spectrum 2cos(k pi/(J+1)) with sine
    eigenvectors; cyclic orbits carry the circulant spectrum 2cos(2 pi k/J)
    with Fourier eigenvectors.
    """
    J = orbit.length
    if orbit.kind == "truncated":
        raise TruncatedOrbit("spectrum needs a complete orbit")
    if orbit.kind == "dead_end":
        k = np.arange(1, J + 1)
        lam = 2 * np.cos(k * np.pi / (J + 1))
        j = np.arange(1, J + 1)[:, None]
        vecs = np.sqrt(2.0 / (J + 1)) * np.sin(j * k[None, :] * np.pi / (J + 1))
        return OrbitSpectrum("dead_end", J, lam, vecs)
    k = np.arange(J)
    lam = 2 * np.cos(2 * np.pi * k / J)
    j = np.arange(J)[:, None]
    vecs = np.exp(2j * np.pi * k[None, :] * j / J) / np.sqrt(J)
    return OrbitSpectrum("cycle", J, lam, vecs)


def energy_gap_bound(orbit: Orbit) -> Fraction:
    """Certified lower bound 8/(J+1)^2 on distinct-eigenvalue gaps."""
    if orbit.kind == "truncated":
        raise TruncatedOrbit("gap bound needs a complete orbit")
    J = orbit.length
    return Fraction(8, (J + 1) ** 2)


def min_distinct_gap(spectrum: OrbitSpectrum, tol: float = 1e-9) -> float:
    gaps = spectrum.distinct_gaps(tol)
    return float(gaps.min()) if gaps.size else float("inf")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def hamiltonian_to_json(h: LocalHamiltonian) -> dict:
    def ctag(mq):
        return f"Q:{mq[0]}:{mq[1]}"

    return {
        "boundary": h.boundary,
        "rw_mode": h.rw_mode,
        "site_dim": h.site_dim,
        "u0_pairs": sorted(
            [ctag(src[0]), cell_to_tag(src[1]), ctag(dst[0]), cell_to_tag(dst[1])]
            for src, dst in h.u0_pairs.items()
        ),
        "shift_dirs": dict(sorted(h.shift_dirs.items())),
        "site_values": [cell_to_tag(v) for v in h.site_values],
    }


def hamiltonian_from_json(data: dict) -> LocalHamiltonian:
    u0 = {}
    for c1, t1, c2, t2 in data["u0_pairs"]:
        src_q = tag_to_cell(c1)
        dst_q = tag_to_cell(c2)
        u0[((src_q[1], src_q[2]), tag_to_cell(t1))] = (
            (dst_q[1], dst_q[2]),
            tag_to_cell(t2),
        )
    return LocalHamiltonian(
        site_values=tuple(tag_to_cell(t) for t in data["site_values"]),
        rw_mode=data["rw_mode"],
        u0_pairs=u0,
        shift_dirs=dict(data["shift_dirs"]),
        boundary=data["boundary"],
    )
