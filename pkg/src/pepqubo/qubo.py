"""Binary-variable registry and Hamiltonian assembly for both design stages.

Stage 1 optimizes sequence and pose jointly: one bit per (site, family), one
per candidate bond, and one ancilla per (bond, family) keeping the bonded-pair
exclusion quadratic. Stage 2 freezes the geometry and keeps one bit per
(position, residue) with an exactly-one constraint.

Energies are in kT throughout. The assembled problem is a plain dictionary
QUBO (linear, quadratic over unordered index pairs, constant offset) plus the
exact spin-form transformation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chem import InteractionModel, pair_energy_matrix
from .errors import InputError
from .pocket import ExternalField, PocketLattice

Label = tuple

ENDPOINT_SIGN_DEFAULT = 1.0     # +(1 - sum_k q)^2: penalize empty endpoints
ENDPOINT_SIGN_LITERAL = -1.0    # the sign-flipped variant of the endpoint term


@dataclass(frozen=True)
class VariableRegistry:
    """Dense index assignment for the problem's binary variables.

    Labels are tuples: ("site", point, family), ("bond", i, j) with i < j,
    ("anc", i, j, family) attached to the bond's lower-index endpoint, and
    ("res", position, residue) for stage-2 problems.
    """

    labels: tuple[Label, ...]
    index: dict[Label, int]

    @classmethod
    def from_labels(cls, labels) -> "VariableRegistry":
        labels = tuple(tuple(l) for l in labels)
        return cls(labels=labels, index={l: i for i, l in enumerate(labels)})

    @classmethod
    def for_stage1(cls, lattice: PocketLattice, D: int) -> "VariableRegistry":
        labels = [("site", i, k)
                  for i in range(lattice.n_points) for k in range(D)]
        labels += [("bond", i, j) for i, j in lattice.adjacency]
        labels += [("anc", i, j, k)
                   for i, j in lattice.adjacency for k in range(D)]
        return cls.from_labels(labels)

    @classmethod
    def for_stage2(cls, n_positions: int, D: int = 20) -> "VariableRegistry":
        return cls.from_labels(
            [("res", n, t) for n in range(n_positions) for t in range(D)])

    @property
    def total(self) -> int:
        return len(self.labels)

    def site(self, i: int, k: int) -> int:
        return self.index[("site", i, k)]

    def bond(self, i: int, j: int) -> int:
        return self.index[("bond", min(i, j), max(i, j))]

    def anc(self, i: int, j: int, k: int) -> int:
        return self.index[("anc", min(i, j), max(i, j), k)]


@dataclass
class QuboProblem:
    """Minimize offset + sum_i linear[i] q_i + sum_{i<j} quadratic[i,j] q_i q_j."""

    linear: dict[int, float]
    quadratic: dict[tuple[int, int], float]
    offset: float
    registry: VariableRegistry
    meta: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return self.registry.total

    def energy(self, bits) -> float:
        bits = np.asarray(bits)
        e = self.offset
        for i, c in self.linear.items():
            if bits[i]:
                e += c
        for (i, j), c in self.quadratic.items():
            if bits[i] and bits[j]:
                e += c
        return float(e)

    def dense(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(h, M, offset) with energy = offset + h.q + q.M.q / 2, M symmetric."""
        n = self.num_vars
        h = np.zeros(n)
        M = np.zeros((n, n))
        for i, c in self.linear.items():
            h[i] += c
        for (i, j), c in self.quadratic.items():
            M[i, j] += c
            M[j, i] += c
        return h, M, self.offset


@dataclass
class IsingProblem:
    """Spin form: offset + sum_l h[l] s_l + sum_{l<m} J[l,m] s_l s_m, s in {-1,+1}."""

    h: dict[int, float]
    J: dict[tuple[int, int], float]
    offset: float
    registry: VariableRegistry
    meta: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return self.registry.total

    def energy(self, spins) -> float:
        spins = np.asarray(spins)
        e = self.offset
        for i, c in self.h.items():
            e += c * spins[i]
        for (i, j), c in self.J.items():
            e += c * spins[i] * spins[j]
        return float(e)


class _Accumulator:
    """Coefficient sink shared by all Hamiltonian terms."""

    def __init__(self):
        self.linear: dict[int, float] = {}
        self.quadratic: dict[tuple[int, int], float] = {}
        self.offset = 0.0

    def add_linear(self, i: int, c: float):
        if c != 0.0:
            self.linear[i] = self.linear.get(i, 0.0) + c

    def add_quadratic(self, i: int, j: int, c: float):
        if i == j:
            raise ValueError("quadratic term on a single variable")
        if c != 0.0:
            key = (min(i, j), max(i, j))
            self.quadratic[key] = self.quadratic.get(key, 0.0) + c

    def add_square(self, items: list[tuple[int, float]], const: float, scale: float):
        """Accumulate scale * (const + sum coef * q)^2 for binary q."""
        if scale == 0.0:
            return
        self.offset += scale * const * const
        for a, (v, c) in enumerate(items):
            self.add_linear(v, scale * (2.0 * const * c + c * c))
            for w, d in items[a + 1:]:
                self.add_quadratic(v, w, scale * 2.0 * c * d)


# ---------------------------------------------------------------------------
# Stage 1: joint sequence + pose
# ---------------------------------------------------------------------------

def default_penalty(max_physical: float, length: int) -> float:
    """Constraint scale: an order of magnitude above the largest soft term,
    multiplied by the chain length so sums of soft terms stay dominated."""
    base = max_physical if max_physical > 0 else 1.0
    return 10.0 * base * max(length, 1)


def length_weight(A: float, L0: int, p: float) -> float:
    """Hard bond-count constraint (w = A) or a soft one permitting relative
    length fluctuations of order p."""
    if p <= 0:
        return A
    return A / (L0 * L0 * p * p)


def build_stage1_qubo(lattice: PocketLattice, ext: ExternalField,
                      model: InteractionModel, L0: int, p: float = 0.0,
                      A: float | None = None, w: float | None = None,
                      endpoint_sign: float = ENDPOINT_SIGN_DEFAULT) -> QuboProblem:
    """Assemble the six-term stage-1 Hamiltonian over a pocket lattice.

    Terms: per-site external field (E - E0), intra-chain pair interactions
    with the bonded-pair exclusion applied through ancillas on the bond's
    lower-index endpoint, the AND-gadget tying each ancilla to its (site,
    bond) pair, at-most-one occupancy per site, endpoint/continuity path
    penalties, and the quadratic bond-count constraint. A defaults to
    10 * max|soft coefficient| * L0; w defaults to the hard length mode.
    """
    if lattice.s is None or lattice.t is None:
        raise InputError("lattice endpoints must be set before encoding")
    if lattice.n_points == 0:
        raise InputError("cannot encode an empty lattice")
    if L0 < 1:
        raise InputError("target length must be at least one bond")
    D = model.D
    reg = VariableRegistry.for_stage1(lattice, D)
    acc = _Accumulator()
    adjacency = set(lattice.adjacency)

    # External field: (E - E0) per occupied (site, family).
    ext_coef = ext.E - ext.E0[None, :]
    max_physical = float(np.abs(ext_coef).max()) if ext_coef.size else 0.0
    for i in range(lattice.n_points):
        for k in range(D):
            acc.add_linear(reg.site(i, k), ext_coef[i, k])

    # Intra-chain interactions over unordered site pairs within the cutoff.
    dists = np.linalg.norm(
        lattice.points[:, None, :] - lattice.points[None, :, :], axis=2)
    for i in range(lattice.n_points):
        for j in range(i + 1, lattice.n_points):
            r = dists[i, j]
            if r > model.cutoff:
                continue
            u = pair_energy_matrix(model, r)
            if not np.any(u):
                continue
            max_physical = max(max_physical, float(np.abs(u).max()))
            bonded = (i, j) in adjacency
            for k in range(D):
                for l in range(D):
                    if u[k, l] == 0.0:
                        continue
                    acc.add_quadratic(reg.site(i, k), reg.site(j, l), u[k, l])
                    if bonded:
                        acc.add_quadratic(reg.anc(i, j, k), reg.site(j, l),
                                          -u[k, l])

    if A is None:
        A = default_penalty(max_physical, L0)
    if A <= 0:
        raise InputError("penalty scale must be positive")
    if w is None:
        w = length_weight(A, L0, p)

    # Ancilla AND-gadget: a = q_site AND q_bond, per (bond, family).
    for i, j in lattice.adjacency:
        y = reg.bond(i, j)
        for k in range(D):
            x = reg.site(i, k)
            a = reg.anc(i, j, k)
            acc.add_linear(a, 3.0 * A)
            acc.add_quadratic(x, y, A)
            acc.add_quadratic(x, a, -2.0 * A)
            acc.add_quadratic(y, a, -2.0 * A)

    # Occupancy: at most one family per site (ordered k != l sum).
    for i in range(lattice.n_points):
        for k in range(D):
            for l in range(k + 1, D):
                acc.add_quadratic(reg.site(i, k), reg.site(i, l), 2.0 * A)

    # Path constraints: endpoints carry one bond, interior sites two.
    incident: dict[int, list[int]] = {i: [] for i in range(lattice.n_points)}
    for i, j in lattice.adjacency:
        b = reg.bond(i, j)
        incident[i].append(b)
        incident[j].append(b)
    for endpoint in (lattice.s, lattice.t):
        site_items = [(reg.site(endpoint, k), -1.0) for k in range(D)]
        acc.add_square(site_items, 1.0, endpoint_sign * A)
        items = [(reg.site(endpoint, k), 1.0) for k in range(D)]
        items += [(b, -1.0) for b in incident[endpoint]]
        acc.add_square(items, 0.0, A)
    for r in range(lattice.n_points):
        if r in (lattice.s, lattice.t):
            continue
        items = [(reg.site(r, k), 2.0) for k in range(D)]
        items += [(b, -1.0) for b in incident[r]]
        acc.add_square(items, 0.0, A)

    # Bond-count constraint.
    bond_items = [(reg.bond(i, j), -1.0) for i, j in lattice.adjacency]
    acc.add_square(bond_items, float(L0), w)

    meta = {"kind": "stage1", "A": A, "w": w, "L0": L0, "p": p, "D": D,
            "dims": list(lattice.dims), "endpoint_sign": endpoint_sign,
            "s": lattice.s, "t": lattice.t}
    return QuboProblem(linear=acc.linear, quadratic=acc.quadratic,
                       offset=acc.offset, registry=reg, meta=meta)


# ---------------------------------------------------------------------------
# Stage 2: sequence refinement on a frozen geometry
# ---------------------------------------------------------------------------

def validate_path(lattice: PocketLattice, path) -> list[int]:
    path = [int(i) for i in path]
    if len(path) < 1:
        raise InputError("path must hold at least one position")
    if len(set(path)) != len(path):
        raise InputError("path revisits a lattice site")
    adjacency = set(lattice.adjacency)
    for a, b in zip(path, path[1:]):
        if (min(a, b), max(a, b)) not in adjacency:
            raise InputError(f"path steps between non-adjacent sites {a}, {b}")
    if not all(0 <= i < lattice.n_points for i in path):
        raise InputError("path references sites outside the lattice")
    return path


def build_stage2_qubo(lattice: PocketLattice, path, ext: ExternalField,
                      model: InteractionModel, A: float | None = None) -> QuboProblem:
    """Sequence-only Hamiltonian on a frozen self-avoiding path.

    Ancilla, path, and bond-count terms disappear with the fixed geometry;
    what remains is the external field, pair interactions between non-bonded
    positions (|n - m| >= 2) within the cutoff, and an exactly-one residue
    constraint per position.
    """
    path = validate_path(lattice, path)
    L = len(path)
    D = model.D
    reg = VariableRegistry.for_stage2(L, D)
    acc = _Accumulator()

    ext_coef = ext.E - ext.E0[None, :]
    max_physical = float(np.abs(ext_coef[path]).max()) if ext_coef.size else 0.0
    for n, site in enumerate(path):
        for t in range(D):
            acc.add_linear(reg.index[("res", n, t)], ext_coef[site, t])

    coords = lattice.points[path]
    for n in range(L):
        for m in range(n + 2, L):
            r = float(np.linalg.norm(coords[n] - coords[m]))
            if r > model.cutoff:
                continue
            u = pair_energy_matrix(model, r)
            if not np.any(u):
                continue
            max_physical = max(max_physical, float(np.abs(u).max()))
            for t in range(D):
                for v in range(D):
                    acc.add_quadratic(reg.index[("res", n, t)],
                                      reg.index[("res", m, v)], u[t, v])

    if A is None:
        A = default_penalty(max_physical, L)
    for n in range(L):
        items = [(reg.index[("res", n, t)], -1.0) for t in range(D)]
        acc.add_square(items, 1.0, A)

    meta = {"kind": "stage2", "A": A, "D": D, "path": list(path)}
    return QuboProblem(linear=acc.linear, quadratic=acc.quadratic,
                       offset=acc.offset, registry=reg, meta=meta)


# ---------------------------------------------------------------------------
# Spin transformation and resource counting
# ---------------------------------------------------------------------------

def to_ising(problem: QuboProblem) -> IsingProblem:
    """Exact energy-preserving map under s = 2q - 1.

    Each linear c*q contributes c/2 to the field and c/2 to the offset; each
    quadratic c*q_a*q_b contributes c/4 to the coupling, c/4 to both fields,
    and c/4 to the offset.
    """
    h: dict[int, float] = {}
    J: dict[tuple[int, int], float] = {}
    offset = problem.offset
    for i, c in problem.linear.items():
        h[i] = h.get(i, 0.0) + c / 2.0
        offset += c / 2.0
    for (i, j), c in problem.quadratic.items():
        J[(i, j)] = J.get((i, j), 0.0) + c / 4.0
        h[i] = h.get(i, 0.0) + c / 4.0
        h[j] = h.get(j, 0.0) + c / 4.0
        offset += c / 4.0
    return IsingProblem(h=h, J=J, offset=offset,
                        registry=problem.registry, meta=dict(problem.meta))


def count_variables(dims: tuple[int, int, int], D: int) -> tuple[int, int]:
    """(annealer, gate-based) variable counts for a full box lattice.

    Annealer: one bit per (site, family), per bond, and per (bond, family)
    ancilla. Gate-based hardware drops the ancillas and encodes the D + 1
    site states in ceil(log2(D + 1)) qubits.
    """
    lx, ly, lz = dims
    if min(lx, ly, lz) < 1 or D < 1:
        raise InputError("dims and alphabet size must be positive")
    n_points = lx * ly * lz
    n_bonds = (lx - 1) * ly * lz + lx * (ly - 1) * lz + lx * ly * (lz - 1)
    annealer = n_bonds * (D + 1) + D * n_points
    gate_based = n_bonds + math.ceil(math.log2(D + 1)) * n_points
    return annealer, gate_based


def annealer_count(n_points: int, n_bonds: int, D: int) -> int:
    """Registry size for an arbitrary (possibly pruned) lattice."""
    return n_bonds * (D + 1) + D * n_points
