"""Pocket geometry: structure ingestion, lattice construction, field precomputation.

The receptor stays off-lattice (C-alpha beads at their crystallographic
positions); candidate peptides live on a cubic grid whose spacing matches the
virtual peptide-bond length. Per-site, per-family interaction energies with
the receptor are precomputed once, together with the mean-field offset that
penalizes generically sticky residues.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .chem import THREE_TO_ONE, InteractionModel, lj_pair
from .errors import ConvergenceError, InputError

DEFAULT_SPACING = 3.8   # Angstrom, virtual bond length
DEFAULT_RADIUS = 7.6    # Angstrom, grid retention radius around seed points
DEFAULT_CLASH_FACTOR = 0.8


@dataclass(frozen=True)
class ProteinStructure:
    """C-alpha trace of the receptor: one bead per residue."""

    codes: list[str]
    coords: np.ndarray           # (R, 3) Angstrom
    chains: list[str]
    numbers: list[int]

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 3)
        if len(self.codes) == 0:
            raise InputError("structure holds no residues")
        if not np.all(np.isfinite(coords)):
            raise InputError("structure has non-finite coordinates")
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return len(self.codes)

    def family_indices(self, model: InteractionModel) -> np.ndarray:
        from .chem import AA_INDEX
        return np.array([model.cluster_map[AA_INDEX[c]] for c in self.codes])


@dataclass(frozen=True)
class PocketLattice:
    """Cubic in-pocket grid with axis-aligned nearest-neighbor adjacency.

    points    -- (P, 3) coordinates
    grid      -- (P, 3) integer offsets of each point in grid units
    adjacency -- sorted tuples (i, j), i < j, of nearest-neighbor pairs
    dims      -- bounding box (L_x, L_y, L_z) in grid units
    s, t      -- endpoint point indices, set via with_endpoints()
    """

    points: np.ndarray
    grid: np.ndarray
    adjacency: tuple[tuple[int, int], ...]
    spacing: float
    dims: tuple[int, int, int]
    s: int | None = None
    t: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=int))
        if self.s is not None and self.s == self.t:
            raise InputError("endpoints must be distinct")

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_bonds(self) -> int:
        return len(self.adjacency)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.adjacency:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def with_endpoints(self, s: int, t: int) -> "PocketLattice":
        return replace(self, s=s, t=t)


@dataclass(frozen=True)
class ExternalField:
    """Precomputed pocket interactions for every (site, family) pair.

    E[i, k]  -- energy of an isolated family-k bead at lattice site i (kT)
    E0[k]    -- mean-field offset: nc * sum_j freq_j * eps_kj (kT)
    nc       -- average contacts per peptide residue used for E0
    """

    E: np.ndarray
    E0: np.ndarray
    nc: float


# ---------------------------------------------------------------------------
# Structure parsing
# ---------------------------------------------------------------------------

def parse_structure(path: str | Path) -> ProteinStructure:
    """Extract the C-alpha trace from a PDB file (ATOM records only).

    Keeps the first occurrence per (chain, residue number, insertion code);
    alternate locations other than '' and 'A' are skipped. Unknown residue
    types are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"structure file not found: {path}")
    codes: list[str] = []
    coords: list[list[float]] = []
    chains: list[str] = []
    numbers: list[int] = []
    seen: set[tuple] = set()
    for line in path.read_text().splitlines():
        if not line.startswith("ATOM"):
            continue
        name = line[12:16].strip()
        if name != "CA":
            continue
        altloc = line[16].strip()
        if altloc not in ("", "A"):
            continue
        resname = line[17:20].strip()
        chain = line[21].strip()
        try:
            resnum = int(line[22:26])
            xyz = [float(line[30:38]), float(line[38:46]), float(line[46:54])]
        except ValueError as exc:
            raise InputError(f"malformed ATOM record: {line!r}") from exc
        key = (chain, resnum, line[26])
        if key in seen:
            continue
        seen.add(key)
        if resname not in THREE_TO_ONE:
            raise InputError(f"unknown residue code {resname!r} in {path.name}")
        codes.append(THREE_TO_ONE[resname])
        coords.append(xyz)
        chains.append(chain)
        numbers.append(resnum)
    if not codes:
        raise InputError(f"no C-alpha atoms in {path}")
    return ProteinStructure(codes=codes, coords=np.array(coords),
                            chains=chains, numbers=numbers)


# ---------------------------------------------------------------------------
# Lattice construction
# ---------------------------------------------------------------------------

def grid_lattice(nx: int, ny: int, nz: int, origin=(0.0, 0.0, 0.0),
                 spacing: float = DEFAULT_SPACING) -> PocketLattice:
    """Full nx x ny x nz box lattice; handy for tests and resource estimates."""
    grid = np.array([(i, j, k)
                     for i in range(nx) for j in range(ny) for k in range(nz)])
    points = np.asarray(origin, dtype=float) + spacing * grid
    return PocketLattice(points=points, grid=grid,
                         adjacency=_adjacency_from_grid(grid),
                         spacing=spacing, dims=(nx, ny, nz))


def _adjacency_from_grid(grid: np.ndarray) -> tuple[tuple[int, int], ...]:
    index = {tuple(g): i for i, g in enumerate(grid)}
    pairs = []
    for i, g in enumerate(grid):
        for axis in range(3):
            nb = list(g)
            nb[axis] += 1
            j = index.get(tuple(nb))
            if j is not None:
                pairs.append((min(i, j), max(i, j)))
    return tuple(sorted(pairs))


def build_lattice(protein: ProteinStructure, seed_points,
                  radius: float = DEFAULT_RADIUS,
                  spacing: float = DEFAULT_SPACING,
                  clash_distance: float = 3.6) -> PocketLattice:
    """Lay a cubic grid over the pocket region.

    The grid is anchored at the centroid of the seed points; a grid point is
    retained when it lies within `radius` of at least one seed point and at
    least `clash_distance` from every receptor C-alpha. The CLI derives
    clash_distance as clash_factor * min family diameter.
    """
    seeds = np.asarray(seed_points, dtype=float).reshape(-1, 3)
    if seeds.size == 0:
        raise InputError("at least one seed point is required")
    if radius <= 0:
        raise InputError("radius must be positive")
    anchor = seeds.mean(axis=0)

    lo = np.floor((seeds.min(axis=0) - radius - anchor) / spacing).astype(int)
    hi = np.ceil((seeds.max(axis=0) + radius - anchor) / spacing).astype(int)
    axes = [np.arange(lo[d], hi[d] + 1) for d in range(3)]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T
    points = anchor + spacing * grid

    d_seed = np.linalg.norm(points[:, None, :] - seeds[None, :, :], axis=2)
    keep = d_seed.min(axis=1) <= radius
    if clash_distance > 0 and len(protein):
        d_prot = np.linalg.norm(
            points[:, None, :] - protein.coords[None, :, :], axis=2)
        keep &= d_prot.min(axis=1) >= clash_distance
    if not keep.any():
        raise InputError("empty lattice after filtering; "
                         "increase radius or lower the clash distance")
    grid = grid[keep]
    points = points[keep]
    dims = tuple(int(x) for x in grid.max(axis=0) - grid.min(axis=0) + 1)
    return PocketLattice(points=points, grid=grid,
                         adjacency=_adjacency_from_grid(grid),
                         spacing=spacing, dims=dims)


def choose_endpoints(lattice: PocketLattice, a, b) -> tuple[int, int]:
    """Grid points nearest to a and b; ties break to the lower point index.

    If both targets resolve to the same point, t falls back to the point
    second-nearest to b.
    """
    if lattice.n_points < 2:
        raise InputError("endpoint selection needs a lattice with >= 2 points")
    da = np.linalg.norm(lattice.points - np.asarray(a, dtype=float), axis=1)
    db = np.linalg.norm(lattice.points - np.asarray(b, dtype=float), axis=1)
    s = int(np.argmin(da))
    t = int(np.argmin(db))
    if s == t:
        order = np.argsort(db, kind="stable")
        t = int(order[1])
    return s, t


# ---------------------------------------------------------------------------
# External field
# ---------------------------------------------------------------------------

def mean_field_offset(model: InteractionModel, nc: float) -> np.ndarray:
    """E0[k] = nc * sum_j freq_j * eps_kj over the model's family alphabet."""
    if nc < 0:
        raise InputError("contact number must be non-negative")
    return nc * (model.epsilon @ model.freq)


def compute_external_field(lattice: PocketLattice, protein: ProteinStructure | None,
                           model: InteractionModel, nc: float = 0.0) -> ExternalField:
    """Sum receptor pair energies per (lattice site, family).

    Residues beyond the interaction cutoff from a site contribute exactly 0
    there; an empty receptor yields a zero field. The offset E0 depends only
    on the model and nc.
    """
    P = lattice.n_points
    E = np.zeros((P, model.D))
    if protein is not None and len(protein):
        fams = protein.family_indices(model)
        dists = np.linalg.norm(
            lattice.points[:, None, :] - protein.coords[None, :, :], axis=2)
        for k in range(model.D):
            eps_row = model.epsilon[k, fams]
            sig_row = model.sigma_pair[k, fams]
            u = lj_pair(eps_row[None, :], sig_row[None, :], dists, model.cutoff)
            E[:, k] = u.sum(axis=1)
    return ExternalField(E=E, E0=mean_field_offset(model, nc), nc=nc)


# ---------------------------------------------------------------------------
# Contact-number iteration
# ---------------------------------------------------------------------------

def partial_contacts(coords: np.ndarray, families, protein: ProteinStructure,
                     model: InteractionModel) -> float:
    """Average partial contacts per peptide residue against the receptor.

    A pair's partial contact is its interaction energy divided by the well
    depth, u(r) / eps; only attractive pairs (eps < 0) count, and each
    contribution is clamped to [0, 1] so a pair at the LJ minimum scores
    exactly 1.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 3)
    fams = np.asarray(families, dtype=int)
    prot_fams = protein.family_indices(model)
    total = 0.0
    for pos in range(len(coords)):
        k = fams[pos]
        eps_row = model.epsilon[k, prot_fams]
        sig_row = model.sigma_pair[k, prot_fams]
        r = np.linalg.norm(protein.coords - coords[pos], axis=1)
        u = lj_pair(eps_row, sig_row, r, model.cutoff)
        attractive = eps_row < 0
        frac = np.zeros_like(u)
        frac[attractive] = np.clip(u[attractive] / eps_row[attractive], 0.0, 1.0)
        total += frac.sum()
    return total / len(coords)


@dataclass
class ContactEstimate:
    """Converged contact number with the (nc_in, nc_out) iteration trace."""

    nc: float
    trace: list[tuple[float, float]] = field(default_factory=list)
    converged: bool = True


def estimate_contacts(design_fn: Callable[[float], tuple[np.ndarray, list[int]]],
                      protein: ProteinStructure, model: InteractionModel,
                      tolerance: float = 0.10,
                      max_iterations: int = 10) -> ContactEstimate:
    """Self-consistent contact number: design, measure contacts, repeat.

    design_fn(nc) must run a design with the given contact number and return
    the decoded pose as (coords, families). Iteration starts from nc = 0 and
    stops when the relative change falls within `tolerance`.
    """
    if not 0 < tolerance < 1:
        raise InputError("tolerance must lie in (0, 1)")
    nc = 0.0
    trace: list[tuple[float, float]] = []
    for _ in range(max_iterations):
        coords, families = design_fn(nc)
        nc_out = partial_contacts(coords, families, protein, model)
        trace.append((nc, nc_out))
        if nc == 0.0:
            change = 0.0 if nc_out == 0.0 else float("inf")
        else:
            change = abs(nc_out - nc) / abs(nc)
        if change <= tolerance:
            return ContactEstimate(nc=nc_out, trace=trace)
        nc = nc_out
    raise ConvergenceError(
        f"contact iteration did not settle within {max_iterations} rounds",
        trace=trace)
