"""Exact continuous-time dynamics on orbit subspaces.

Everything is computed in the basis of lattice configurations reachable from
the initial one, never on the full tensor space.  A dead-end orbit of length
J carries the J-site path Hamiltonian, whose propagator has the closed sine
form; a cyclic orbit carries the circulant form.  Long-term averages use the
exact diagonal/near-diagonal weight kernel; the brute-force route runs a
dense eigendecomposition on the reachable subspace.

All trace norms are the unhalved sum of absolute eigenvalues, so two
orthogonal pure states are at distance 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .hamiltonian import (
    DimensionGuard,
    LocalHamiltonian,
    ReachableSpace,
    TruncatedOrbit,
    reachable_space,
)
from .machine import Configuration, Orbit

DEFAULT_GUARD = 1 << 20


# ---------------------------------------------------------------------------
# Spectral evolution on a single orbit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitAmplitudes:
    orbit: Orbit
    t: float
    amps: np.ndarray  # complex, index j-1 for j = 1..J


def path_amplitudes(J: int, t: float) -> np.ndarray:
    """<j| exp(-i t H_path) |1> for the J-site path, all j, closed form."""
    k = np.arange(1, J + 1)
    lam = 2 * np.cos(k * np.pi / (J + 1))
    phase = np.exp(-1j * lam * t) * np.sin(k * np.pi / (J + 1))
    j = np.arange(1, J + 1)
    return (2.0 / (J + 1)) * np.sin(np.outer(j, k) * np.pi / (J + 1)) @ phase


def cycle_amplitudes(J: int, t: float) -> np.ndarray:
    """<j| exp(-i t H_cycle) |1> for the J-cycle, Fourier form."""
    k = np.arange(J)
    lam = 2 * np.cos(2 * np.pi * k / J)
    phase = np.exp(-1j * lam * t) / J
    j = np.arange(J)
    return np.exp(2j * np.pi * np.outer(j, k) / J) @ phase


def evolve_spectral(orbit: Orbit, t: float) -> OrbitAmplitudes:
    if orbit.kind == "truncated":
        raise TruncatedOrbit("spectral evolution needs a complete orbit")
    J = orbit.length
    amps = path_amplitudes(J, t) if orbit.kind == "dead_end" else cycle_amplitudes(J, t)
    return OrbitAmplitudes(orbit, t, amps)


# ---------------------------------------------------------------------------
# Exact time-average kernels
# ---------------------------------------------------------------------------


def trig_kernel(J: int, j: int, jp: int) -> Fraction:
    """Closed form of sum_k sin^2(pi k/(J+1)) sin(j' k pi/(J+1)) sin(j k pi/(J+1)).

    Four cases: (J+1)/4 on the diagonal away from the ends, 3(J+1)/8 at the
    two ends, -(J+1)/8 two steps off the diagonal, zero elsewhere.  J = 1 is
    the one degenerate size where the end formula does not apply.
    """
    if not (1 <= j <= J and 1 <= jp <= J):
        raise ValueError("indices must lie in 1..J")
    if J == 1:
        return Fraction(1)
    if j == jp:
        if j == 1 or j == J:
            return Fraction(3 * (J + 1), 8)
        return Fraction(J + 1, 4)
    if abs(j - jp) == 2:
        return Fraction(-(J + 1), 8)
    return Fraction(0)


def trig_kernel_direct(J: int, j: int, jp: int) -> Fraction:
    """Direct numerical summation, certified back to an exact rational.

    Every value of the sum is an integer multiple of 1/8, and the float
    error of J <= a few hundred terms is far below the 1/8 spacing, so the
    rounding is exact.
    """
    k = np.arange(1, J + 1) * (np.pi / (J + 1))
    s = float(np.sum(np.sin(k) ** 2 * np.sin(jp * k) * np.sin(j * k)))
    n = round(8 * s)
    if abs(8 * s - n) > 1e-6:
        raise ArithmeticError(f"summation not certifiable at J={J}, j={j}, jp={jp}")
    return Fraction(n, 8)


def _cosine_sum(J: int, m: int) -> int:
    """sum_{k=1..J} cos(m k pi/(J+1)), exact by the geometric-series identity."""
    m = abs(m)
    if m % (2 * (J + 1)) == 0:
        return J
    return -1 if m % 2 == 0 else 0


def overlap_kernel(J: int, j: int, jp: int) -> Fraction:
    """The same sum evaluated through exact cosine sums (independent route)."""
    c = lambda m: _cosine_sum(J, m)
    total = (
        2 * c(j - jp)
        - 2 * c(j + jp)
        - c(j - jp + 2)
        - c(j - jp - 2)
        + c(j + jp + 2)
        + c(j + jp - 2)
    )
    return Fraction(total, 8)


def time_avg_probs(J: int) -> list:
    """Visit probabilities p_j of a dead-end orbit: uniform 1/(J+1) inside,
    3/2 of that at the two ends; the J = 1 orbit sits at its single step."""
    if J < 1:
        raise ValueError("J must be positive")
    if J == 1:
        return [Fraction(1)]
    ps = [Fraction(1, J + 1)] * J
    ps[0] = Fraction(3, 2 * (J + 1))
    ps[-1] = Fraction(3, 2 * (J + 1))
    return ps


def time_avg_probs_overlap(J: int) -> list:
    """p_j recomputed from eigenvector overlaps via exact cosine sums."""
    return [4 * overlap_kernel(J, j, j) / (J + 1) ** 2 for j in range(1, J + 1)]


def pair_weight_matrix(J: int, kind: str) -> np.ndarray:
    """Infinite-time average of amp_j(t) * conj(amp_j'(t)) as a J x J matrix."""
    if kind == "dead_end":
        w = np.zeros((J, J))
        for j in range(1, J + 1):
            w[j - 1, j - 1] = float(4 * trig_kernel(J, j, j)) / (J + 1) ** 2
            for jp in (j - 2, j + 2):
                if 1 <= jp <= J:
                    w[j - 1, jp - 1] = float(4 * trig_kernel(J, j, jp)) / (J + 1) ** 2
        return w
    # cycle: group equal eigenvalues, then average the Fourier phases
    k = np.arange(J)
    lam = 2 * np.cos(2 * np.pi * k / J)
    order = np.argsort(lam)
    w = np.zeros((J, J), dtype=complex)
    j = np.arange(J)
    start = 0
    while start < J:
        end = start
        while end + 1 < J and lam[order[end + 1]] - lam[order[start]] < 1e-9:
            end += 1
        group = order[start : end + 1]
        amp1 = np.sum(np.exp(2j * np.pi * np.outer(j, group) / J), axis=1) / J
        w += np.outer(amp1, amp1.conj())
        start = end + 1
    return w


# ---------------------------------------------------------------------------
# Single-site states
# ---------------------------------------------------------------------------


def check_state(rho: np.ndarray, tol: float = 1e-9) -> None:
    if np.linalg.norm(rho - rho.conj().T) > 1e-12 + tol:
        raise ValueError("state is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-10 + tol:
        raise ValueError("state does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10 - tol:
        raise ValueError("state is not positive semidefinite")


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Unhalved trace norm of the difference: orthogonal pure states are at 2."""
    return float(np.abs(np.linalg.eigvalsh(a - b)).sum())


def basis_state(h: LocalHamiltonian, value) -> np.ndarray:
    d = h.site_dim
    rho = np.zeros((d, d), dtype=complex)
    k = h.value_index(value)
    rho[k, k] = 1.0
    return rho


# ---------------------------------------------------------------------------
# Orbit-path site averages
# ---------------------------------------------------------------------------


@dataclass
class OrbitSiteData:
    """Per-orbit data for space-averaged single-site matrix elements.

    ``hist``: (J, d) integer counts of each site value per step.
    ``cross``: list of (j, j', value_index_j, value_index_j') for pairs of
    steps whose configurations differ at exactly one site; only such pairs
    contribute off-diagonal step-cross terms.
    """

    J: int
    n_sites: int
    hist: np.ndarray
    cross: list


def orbit_site_data(orbit: Orbit, h: LocalHamiltonian) -> OrbitSiteData:
    idx = {v: i for i, v in enumerate(h.site_values)}
    arr = np.array(
        [[idx[x] for x in cfg.cells] for cfg in orbit.states], dtype=np.int32
    )
    J, n = arr.shape
    d = h.site_dim
    hist = np.zeros((J, d), dtype=np.int64)
    for j in range(J):
        np.add.at(hist[j], arr[j], 1)
    cross = []
    for j in range(J):
        diff = arr != arr[j]
        counts = diff.sum(axis=1)
        for jp in np.nonzero(counts == 1)[0]:
            if jp == j:
                continue
            i0 = int(np.nonzero(diff[jp])[0][0])
            cross.append((j + 1, int(jp) + 1, int(arr[j, i0]), int(arr[jp, i0])))
    return OrbitSiteData(J=J, n_sites=n, hist=hist, cross=cross)


def site_average_from_amplitudes(
    data: OrbitSiteData, amps: np.ndarray, d: int
) -> np.ndarray:
    """Space-averaged single-site state of sum_j amps_j |j;x>."""
    p = np.abs(amps) ** 2
    rho = np.zeros((d, d), dtype=complex)
    diag = p @ data.hist
    rho[np.arange(d), np.arange(d)] = diag
    for j, jp, vj, vjp in data.cross:
        rho[vj, vjp] += amps[j - 1] * np.conj(amps[jp - 1])
    return rho / data.n_sites


def site_average_weighted(data: OrbitSiteData, w: np.ndarray, d: int) -> np.ndarray:
    """Space-averaged state under a step-pair weight matrix w[j-1, j'-1]."""
    rho = np.zeros((d, d), dtype=complex)
    diag = np.real(np.einsum("jj,jd->d", w, data.hist.astype(float)))
    rho[np.arange(d), np.arange(d)] = diag
    for j, jp, vj, vjp in data.cross:
        rho[vj, vjp] += w[j - 1, jp - 1]
    return rho / data.n_sites


def orbit_site_average(orbit: Orbit, h: LocalHamiltonian, t: float) -> np.ndarray:
    data = orbit_site_data(orbit, h)
    amps = evolve_spectral(orbit, t).amps
    return site_average_from_amplitudes(data, amps, h.site_dim)


def orbit_longterm_average(orbit: Orbit, h: LocalHamiltonian) -> np.ndarray:
    data = orbit_site_data(orbit, h)
    w = pair_weight_matrix(orbit.length, orbit.kind)
    return site_average_weighted(data, w, h.site_dim)


def member_orbit_terms(h: LocalHamiltonian, cfg: Configuration, max_steps: int):
    """Orbit contributions of one configuration to the space average.

    A single-control configuration contributes its own orbit with weight one.
    A multi-control configuration splits into non-interacting blocks, and the
    space average over the whole lattice is the size-weighted sum of the
    per-block space averages, so each block orbit enters with weight
    block_size / lattice_size.
    """
    from .machine import Orbit as _Orbit
    from .machine import split_blocks

    controls = cfg.control_sites()
    if len(controls) == 0:
        # no control anywhere: the update never acts, the state is frozen
        return [(_Orbit((cfg,), ("dead_end", 1), None), 1.0)]
    if len(controls) == 1:
        return [(run_orbit_cached(cfg, h, max_steps), 1.0)]
    out = []
    for block in split_blocks(cfg):
        out.append((run_orbit_cached(block, h, max_steps), block.size / cfg.size))
    return out


def ensemble_longterm_average(members, h: LocalHamiltonian, max_steps=100000):
    """Long-term averaged site state of a classical mixture, with the radius
    certified for the uniform-step approximation.

    Each member contributes the plain 1/J step average of its orbit's site
    histograms; the returned radius 2/L + 2/J_min covers both the deviation
    of the visit law from uniform and the step-cross terms.
    """
    d = h.site_dim
    rho = np.zeros((d, d), dtype=complex)
    j_min = None
    n_sites = None
    for cfg, weight in members:
        if n_sites is None:
            n_sites = cfg.size
        for orbit, scale in member_orbit_terms(h, cfg, max_steps):
            if orbit.kind == "truncated":
                raise TruncatedOrbit("orbit budget exhausted in long-term average")
            data = orbit_site_data(orbit, h)
            uniform = data.hist.astype(float).sum(axis=0) / (orbit.length * data.n_sites)
            rho[np.arange(d), np.arange(d)] += float(weight) * scale * uniform
            j_min = orbit.length if j_min is None else min(j_min, orbit.length)
    radius = 2.0 / max(n_sites - 1, 1) + 2.0 / max(j_min, 1)
    return rho, radius


def ensemble_site_average(members, h: LocalHamiltonian, t: float, max_steps=100000):
    """Space-averaged state of a classical mixture of configurations at time t.

    ``members`` is an iterable of (Configuration, weight).  Each configuration
    evolves inside its own orbit (per block, when it carries several control
    sites); weights combine linearly, mixtures having no cross terms between
    distinct initial configurations.
    """
    rho = np.zeros((h.site_dim, h.site_dim), dtype=complex)
    total = 0.0
    for cfg, weight in members:
        for orbit, scale in member_orbit_terms(h, cfg, max_steps):
            rho += float(weight) * scale * orbit_site_average(orbit, h, t)
        total += float(weight)
    if abs(total - 1.0) > 1e-9:
        rho /= total
    return rho


_ORBIT_CACHE = {}  # id(h) -> (strong ref to h, {cells: orbit}); the strong
# reference pins the id so entries can never alias a recycled object


def run_orbit_cached(cfg: Configuration, h: LocalHamiltonian, max_steps: int) -> Orbit:
    """Forward orbit computed through the compiled update maps."""
    from .hamiltonian import ZERO_STATE, apply_update
    from .machine import Orbit as _Orbit

    _, per_h = _ORBIT_CACHE.setdefault(id(h), (h, {}))
    key = (cfg.cells, cfg.boundary)
    hit = per_h.get(key)
    if hit is not None:
        return hit
    states = [cfg]
    seen = {cfg.cells}
    current = cfg
    terminal = ("truncated", 0)
    for _ in range(max_steps):
        nxt = apply_update(h, current)
        if nxt is ZERO_STATE:
            terminal = ("dead_end", len(states))
            break
        if nxt.cells in seen:
            terminal = ("cycle", len(states))
            break
        states.append(nxt)
        seen.add(nxt.cells)
        current = nxt
    else:
        terminal = ("truncated", len(states))
    orbit = _Orbit(tuple(states), terminal, None)
    per_h[key] = orbit
    return orbit


# ---------------------------------------------------------------------------
# Dense oracle on the reachable subspace
# ---------------------------------------------------------------------------


@dataclass
class DenseSpace:
    """Eigendecomposed H on the closure of a seed set of configurations."""

    space: ReachableSpace
    eigvals: np.ndarray
    eigvecs: np.ndarray
    site_dim: int
    value_index: dict

    def evolve(self, amplitudes: np.ndarray, t: float) -> np.ndarray:
        coeff = self.eigvecs.conj().T @ amplitudes
        return self.eigvecs @ (np.exp(-1j * self.eigvals * t) * coeff)

    def state_vector(self, cfg: Configuration) -> np.ndarray:
        v = np.zeros(self.space.dim, dtype=complex)
        v[self.space.index[cfg.cells]] = 1.0
        return v

    def site_average(self, vec: np.ndarray) -> np.ndarray:
        """Space-averaged single-site state of an arbitrary vector."""
        d = self.site_dim
        rho = np.zeros((d, d), dtype=complex)
        basis = self.space.basis
        n = len(basis[0])
        groups = {}
        for b, cells in enumerate(basis):
            for i in range(n):
                key = (i, cells[:i] + cells[i + 1 :])
                groups.setdefault(key, []).append((b, self.value_index[cells[i]]))
        for (_, _), hits in groups.items():
            for b1, v1 in hits:
                a1 = vec[b1]
                if a1 == 0:
                    continue
                for b2, v2 in hits:
                    rho[v1, v2] += a1 * np.conj(vec[b2])
        return rho / n

    def longterm_site_average(self, vec: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Infinite-time average via spectral projections, eigenvalues grouped
        within ``tol`` before projecting."""
        coeff = self.eigvecs.conj().T @ vec
        order = np.argsort(self.eigvals)
        dim = len(self.eigvals)
        avg_vecs = []
        start = 0
        while start < dim:
            end = start
            while (
                end + 1 < dim
                and self.eigvals[order[end + 1]] - self.eigvals[order[start]] < tol
            ):
                end += 1
            group = order[start : end + 1]
            avg_vecs.append(self.eigvecs[:, group] @ coeff[group])
            start = end + 1
        d = self.site_dim
        rho = np.zeros((d, d), dtype=complex)
        for gv in avg_vecs:
            rho += self.site_average(gv)
        return rho


def dense_space(
    h: LocalHamiltonian, seeds, guard: int = DEFAULT_GUARD, dense_guard: int = 4096
) -> DenseSpace:
    space = reachable_space(h, seeds, guard=guard)
    if space.dim > dense_guard:
        raise DimensionGuard(
            f"dense oracle refuses {space.dim} basis states (> {dense_guard})"
        )
    vals, vecs = np.linalg.eigh(space.h_matrix())
    return DenseSpace(
        space=space,
        eigvals=vals,
        eigvecs=vecs,
        site_dim=h.site_dim,
        value_index={v: i for i, v in enumerate(h.site_values)},
    )


# ---------------------------------------------------------------------------
# Cross terms between distinct initial configurations
# ---------------------------------------------------------------------------


def pair_overlap_matrix(
    orbit_a: Orbit, orbit_b: Orbit, h: LocalHamiltonian, b_matrix: np.ndarray
) -> np.ndarray:
    """M[j', j] = <j'; x'| B^(L) |j; x> for the space average of B."""
    idx = {v: i for i, v in enumerate(h.site_values)}
    arr_a = np.array([[idx[x] for x in c.cells] for c in orbit_a.states], dtype=np.int32)
    arr_b = np.array([[idx[x] for x in c.cells] for c in orbit_b.states], dtype=np.int32)
    Ja, n = arr_a.shape
    Jb, _ = arr_b.shape
    out = np.zeros((Jb, Ja), dtype=complex)
    for j in range(Ja):
        diff = arr_b != arr_a[j]
        counts = diff.sum(axis=1)
        same = np.nonzero(counts == 0)[0]
        for jp in same:
            out[jp, j] = b_matrix[arr_b[jp], arr_a[j]].sum() / n
        for jp in np.nonzero(counts == 1)[0]:
            i0 = int(np.nonzero(diff[jp])[0][0])
            out[jp, j] = b_matrix[arr_b[jp, i0], arr_a[j, i0]] / n
    return out


def dephasing_cross_term(
    h: LocalHamiltonian,
    x: Configuration,
    xp: Configuration,
    b_matrix: np.ndarray,
    ts,
    max_steps: int = 100000,
) -> float:
    """max over t of |<x'| e^{itH} B^(L) e^{-itH} |x>| through orbit expansions."""
    orbit_a = run_orbit_cached(x, h, max_steps)
    orbit_b = run_orbit_cached(xp, h, max_steps)
    if orbit_a.kind == "truncated" or orbit_b.kind == "truncated":
        raise TruncatedOrbit("dephasing check needs complete orbits")
    m = pair_overlap_matrix(orbit_a, orbit_b, h, b_matrix)
    worst = 0.0
    for t in ts:
        aa = evolve_spectral(orbit_a, t).amps
        ab = evolve_spectral(orbit_b, t).amps
        val = abs(np.conj(ab) @ m @ aa)
        worst = max(worst, float(val))
    return worst


def space_average_operator(ds: DenseSpace, b_matrix: np.ndarray) -> np.ndarray:
    """B^(L) assembled on a dense closure basis (entries between basis states
    that differ at no more than one site)."""
    idx = ds.value_index
    basis = [np.array([idx[x] for x in cells], dtype=np.int32) for cells in ds.space.basis]
    arr = np.stack(basis)
    dim, n = arr.shape
    out = np.zeros((dim, dim), dtype=complex)
    for b in range(dim):
        diff = arr != arr[b]
        counts = diff.sum(axis=1)
        for bp in np.nonzero(counts == 0)[0]:
            out[bp, b] = b_matrix[arr[bp], arr[b]].sum() / n
        for bp in np.nonzero(counts == 1)[0]:
            i0 = int(np.nonzero(diff[bp])[0][0])
            out[bp, b] = b_matrix[arr[bp, i0], arr[b, i0]] / n
    return out


def dense_cross_term(
    h: LocalHamiltonian,
    x: Configuration,
    xp: Configuration,
    b_matrix: np.ndarray,
    ts,
) -> float:
    """Same cross element computed densely; handles multi-block configurations."""
    ds = dense_space(h, [x, xp])
    op = space_average_operator(ds, b_matrix)
    vx = ds.state_vector(x)
    vxp = ds.state_vector(xp)
    worst = 0.0
    for t in ts:
        ex = ds.evolve(vx, t)
        exp_ = ds.evolve(vxp, t)
        worst = max(worst, float(abs(exp_.conj() @ op @ ex)))
    return worst
