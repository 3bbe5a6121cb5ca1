"""Residue alphabet, contact-energy tables, pair potential, and alphabet clustering.

The energy model follows the Kim-Hummer formulation of the Miyazawa-Jernigan
statistical potential: tabulated contact energies are rescaled to well depths
eps_ij = lam * (e_ij - e0), bead diameters are mixed arithmetically, and pairs
interact through a three-branch 12-6 potential truncated at a hard cutoff.

The 20-letter alphabet can be compressed to D < 20 families by minimizing the
squared deviation between the raw contact matrix and its block-mean
approximation; the resulting effective tables feed the same potential.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

# Canonical one-letter codes, index 0..19 addresses every 20x20 table.
ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
AA_INDEX = {c: i for i, c in enumerate(ALPHABET)}

THREE_TO_ONE = {
    "ALA": "A", "CYS": "C", "ASP": "D", "GLU": "E", "PHE": "F",
    "GLY": "G", "HIS": "H", "ILE": "I", "LYS": "K", "LEU": "L",
    "MET": "M", "ASN": "N", "PRO": "P", "GLN": "Q", "ARG": "R",
    "SER": "S", "THR": "T", "VAL": "V", "TRP": "W", "TYR": "Y",
}

# Defaults of the energy rescaling and the interaction cutoff.
DEFAULT_LAMBDA = 0.159
DEFAULT_E0 = -2.27      # kT
DEFAULT_CUTOFF = 8.5    # Angstrom

MJ_FILE = "mj_contact_energies.dat"
SIGMA_FILE = "vdw_diameters.dat"
FREQ_FILE = "surface_frequencies.dat"

TABLES_ENV = "PEPQUBO_TABLES"


def default_table_dir() -> Path:
    """Packaged data directory, overridable via the PEPQUBO_TABLES env var."""
    env = os.environ.get(TABLES_ENV)
    if env:
        return Path(env)
    return Path(__file__).parent / "data"


@dataclass(frozen=True)
class RawTables:
    """Untransformed per-residue tables over the full 20-letter alphabet.

    e          -- 20x20 symmetric contact energies (kT)
    sigma      -- 20-vector of vdW diameters (Angstrom)
    f_surface  -- 20-vector of relative surface frequencies, sums to 1
    """

    e: np.ndarray
    sigma: np.ndarray
    f_surface: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.e, dtype=float)
        if e.shape != (20, 20):
            raise InputError(f"contact matrix must be 20x20, got {e.shape}")
        asym = np.abs(e - e.T).max()
        if asym > 1e-9:
            raise InputError(f"contact matrix asymmetric by {asym:g}")
        if not np.all(np.isfinite(e)):
            raise InputError("contact matrix contains non-finite entries")
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (20,) or np.any(sigma <= 0):
            raise InputError("vdW diameters must be 20 positive values")
        f = np.asarray(self.f_surface, dtype=float)
        if f.shape != (20,) or np.any(f < 0):
            raise InputError("surface frequencies must be 20 non-negative values")
        if abs(f.sum() - 1.0) > 1e-9:
            raise InputError(f"surface frequencies sum to {f.sum():.12f}, not 1")
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "f_surface", f)


@dataclass(frozen=True)
class ClusteringResult:
    """Assignment of the 20 residues to D families with the effective tables.

    assignment -- 20-vector of family indices in {0..D-1}, canonically
                  relabeled by first occurrence
    loss       -- squared deviation between e and its block-mean approximation
    e_eff      -- DxD effective contact energies (block means, ordered pairs)
    sigma_eff  -- D-vector of family-averaged diameters
    """

    D: int
    assignment: np.ndarray
    loss: float
    e_eff: np.ndarray
    sigma_eff: np.ndarray

    def members(self, family: int) -> list[int]:
        return [i for i in range(20) if self.assignment[i] == family]

    def family_of(self, code: str) -> int:
        return int(self.assignment[AA_INDEX[code]])


@dataclass(frozen=True)
class InteractionModel:
    """Transformed pair-energy and pair-range tables over D families.

    epsilon[i, j] = lam * (e_eff[i, j] - e0)      (kT)
    sigma_pair[i, j] = (sigma[i] + sigma[j]) / 2  (Angstrom)
    freq[k] = summed surface frequency of the family's member residues
    cluster_map[r] = family of residue index r
    """

    D: int
    epsilon: np.ndarray
    sigma: np.ndarray
    sigma_pair: np.ndarray
    freq: np.ndarray
    cluster_map: np.ndarray
    cutoff: float = DEFAULT_CUTOFF
    lam: float = DEFAULT_LAMBDA
    e0: float = DEFAULT_E0

    def family_of(self, code: str) -> int:
        return int(self.cluster_map[AA_INDEX[code]])

    def family_labels(self) -> list[str]:
        """One label per family, listing member residues (e.g. 'FILMV')."""
        return ["".join(ALPHABET[i] for i in range(20) if self.cluster_map[i] == k)
                for k in range(self.D)]


# ---------------------------------------------------------------------------
# Table loading
# ---------------------------------------------------------------------------

def _data_lines(path: Path) -> list[list[str]]:
    if not path.is_file():
        raise InputError(f"table file not found: {path}")
    lines = []
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    return lines


def load_raw_tables(table_dir: str | Path | None = None) -> RawTables:
    """Load and validate the three residue tables from a directory.

    Expects mj_contact_energies.dat (header row of one-letter codes followed
    by 20 rows of 20 energies), vdw_diameters.dat and surface_frequencies.dat
    (20 lines of 'code value' each). '#' starts a comment. Entries are
    re-indexed into the canonical alphabetical order.
    """
    table_dir = Path(table_dir) if table_dir is not None else default_table_dir()

    lines = _data_lines(table_dir / MJ_FILE)
    header = lines[0]
    if sorted(header) != sorted(ALPHABET):
        raise InputError("contact matrix header must list all 20 residue codes")
    if len(lines) != 21:
        missing = [header[i] for i in range(len(lines) - 1, 20)]
        raise InputError(f"contact matrix missing residue rows: {missing}")
    e_file = np.array([[float(x) for x in row] for row in lines[1:]])
    if e_file.shape != (20, 20):
        raise InputError("contact matrix rows must hold 20 energies each")
    order = [AA_INDEX[c] for c in header]
    e = np.empty((20, 20))
    e[np.ix_(order, order)] = e_file

    def read_vector(name: str) -> np.ndarray:
        entries = {}
        for row in _data_lines(table_dir / name):
            if len(row) != 2 or row[0] not in AA_INDEX:
                raise InputError(f"{name}: expected 'code value' lines, got {row}")
            entries[row[0]] = float(row[1])
        missing = [c for c in ALPHABET if c not in entries]
        if missing:
            raise InputError(f"{name} missing residues: {missing}")
        return np.array([entries[c] for c in ALPHABET])

    return RawTables(e=e, sigma=read_vector(SIGMA_FILE),
                     f_surface=read_vector(FREQ_FILE))


# ---------------------------------------------------------------------------
# Pair potential
# ---------------------------------------------------------------------------

def transform_epsilon(raw: RawTables, lam: float = DEFAULT_LAMBDA,
                      e0: float = DEFAULT_E0) -> np.ndarray:
    """Rescale raw contact energies into well depths: lam * (e - e0)."""
    if lam <= 0:
        raise InputError(f"scale must be positive, got {lam}")
    return lam * (raw.e - e0)


def lj_pair(eps, sigma, r, cutoff: float = DEFAULT_CUTOFF):
    """Three-branch 12-6 pair potential, truncated to 0 beyond the cutoff.

    eps < 0: plain attractive LJ with well depth |eps| at r0 = 2^(1/6) sigma.
    eps > 0: repulsive below r0 (shifted up by 2 eps), sign-flipped tail above,
             continuous at r0 where both branches equal +eps.
    Broadcasts over array arguments; r must be strictly positive.
    """
    eps = np.asarray(eps, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("pair distance must be positive")
    eps, sigma, r = np.broadcast_arrays(eps, sigma, r)

    sr6 = (sigma / r) ** 6
    shape = 4.0 * (sr6 * sr6 - sr6)          # unit-depth LJ
    r0 = 2.0 ** (1.0 / 6.0) * sigma
    u = np.where(eps < 0, np.abs(eps) * shape,
                 np.where(r < r0, eps * shape + 2.0 * eps, -eps * shape))
    u = np.where(eps == 0, 0.0, u)
    u = np.where(r > cutoff, 0.0, u)
    if u.ndim == 0:
        return float(u)
    return u


def lj_energy(model: InteractionModel, i: int, j: int, r) -> float:
    """Pair potential between families i and j at distance r (Angstrom)."""
    return lj_pair(model.epsilon[i, j], model.sigma_pair[i, j], r, model.cutoff)


def pair_energy_matrix(model: InteractionModel, r: float) -> np.ndarray:
    """DxD matrix of pair energies for all family pairs at one distance."""
    return lj_pair(model.epsilon, model.sigma_pair,
                   np.full_like(model.epsilon, r), model.cutoff)


# ---------------------------------------------------------------------------
# Reduced-alphabet clustering
# ---------------------------------------------------------------------------

def _block_means(e: np.ndarray, assignment: np.ndarray, D: int) -> np.ndarray:
    """Effective DxD matrix: mean of e over all ordered member pairs."""
    masks = [(assignment == k) for k in range(D)]
    sizes = np.array([m.sum() for m in masks], dtype=float)
    sums = np.zeros((D, D))
    for a in range(D):
        ea = e[masks[a]]
        for b in range(D):
            sums[a, b] = ea[:, masks[b]].sum()
    return sums / np.outer(sizes, sizes)


def clustering_loss(e: np.ndarray, assignment: np.ndarray, D: int) -> float:
    """Squared deviation of e from its block-mean approximation."""
    means = _block_means(e, assignment, D)
    return float(((e - means[np.ix_(assignment, assignment)]) ** 2).sum())


def _canonical_labels(assignment: np.ndarray) -> np.ndarray:
    """Relabel families in order of first occurrence along the alphabet."""
    remap: dict[int, int] = {}
    out = np.empty_like(assignment)
    for i, a in enumerate(assignment):
        if a not in remap:
            remap[a] = len(remap)
        out[i] = remap[a]
    return out


def _local_search(e: np.ndarray, assignment: np.ndarray, D: int) -> np.ndarray:
    """Greedy single-residue reassignment until no move improves the loss."""
    assignment = assignment.copy()
    loss = clustering_loss(e, assignment, D)
    improved = True
    while improved:
        improved = False
        for i in range(20):
            current = assignment[i]
            if np.count_nonzero(assignment == current) == 1:
                continue  # keep every family populated
            best_d, best_loss = current, loss
            for d in range(D):
                if d == current:
                    continue
                assignment[i] = d
                trial = clustering_loss(e, assignment, D)
                if trial < best_loss - 1e-12:
                    best_d, best_loss = d, trial
            assignment[i] = best_d
            if best_d != current:
                loss = best_loss
                improved = True
    return assignment


def _exhaustive_bipartition(e: np.ndarray) -> np.ndarray:
    """Exact D=2 optimum by scanning all bipartitions (residue 0 fixed)."""
    best_loss = math.inf
    best = None
    codes = np.arange(1, 2 ** 19)
    # vectorized block sums: loss = SS_tot - sum_blocks n_a n_b mean^2
    ss_tot = float((e * e).sum())
    for start in range(0, codes.size, 1 << 15):
        chunk = codes[start:start + (1 << 15)]
        masks = ((chunk[:, None] >> np.arange(19)[None, :]) & 1).astype(float)
        v = np.concatenate([np.zeros((chunk.size, 1)), masks], axis=1)  # family-1 mask
        n1 = v.sum(axis=1)
        n0 = 20.0 - n1
        ev = v @ e
        s11 = (ev * v).sum(axis=1)
        s10 = (ev * (1.0 - v)).sum(axis=1)
        e_total = e.sum()
        s00 = e_total - 2.0 * s10 - s11
        fit = s00 ** 2 / (n0 * n0) + 2.0 * s10 ** 2 / (n0 * n1) + s11 ** 2 / (n1 * n1)
        losses = ss_tot - fit
        idx = int(np.argmin(losses))
        if losses[idx] < best_loss:
            best_loss = float(losses[idx])
            best = np.concatenate([[0], ((chunk[idx] >> np.arange(19)) & 1)])
    return best.astype(int)


def cluster_alphabet(raw: RawTables, D: int, seed: int = 0,
                     restarts: int = 32) -> ClusteringResult:
    """Group the 20 residues into D families minimizing the block-mean loss.

    D=20 is the identity assignment (loss 0); D=1 is the single global
    family; D=2 uses exhaustive search over all bipartitions; otherwise
    multi-restart local search with single-residue reassignment moves.
    Deterministic for a fixed seed.
    """
    if not 1 <= D <= 20:
        raise InputError(f"alphabet size must be in 1..20, got {D}")
    e = raw.e
    if D == 20:
        assignment = np.arange(20)
    elif D == 1:
        assignment = np.zeros(20, dtype=int)
    elif D == 2:
        assignment = _exhaustive_bipartition(e)
    else:
        rng = np.random.default_rng(seed)
        best = None
        best_loss = math.inf
        for _ in range(restarts):
            init = np.concatenate([np.arange(D), rng.integers(0, D, size=20 - D)])
            rng.shuffle(init)
            cand = _local_search(e, init, D)
            loss = clustering_loss(e, cand, D)
            if loss < best_loss - 1e-12:
                best, best_loss = cand, loss
        assignment = best
    assignment = _canonical_labels(assignment)

    masks = [(assignment == k) for k in range(D)]
    sigma_eff = np.array([raw.sigma[m].mean() for m in masks])
    return ClusteringResult(
        D=D,
        assignment=assignment,
        loss=clustering_loss(e, assignment, D),
        e_eff=_block_means(e, assignment, D),
        sigma_eff=sigma_eff,
    )


def reduce_model(raw: RawTables, clustering: ClusteringResult,
                 cutoff: float = DEFAULT_CUTOFF, lam: float = DEFAULT_LAMBDA,
                 e0: float = DEFAULT_E0) -> InteractionModel:
    """Build the D-family interaction model from a clustering of the raw tables."""
    D = clustering.D
    epsilon = lam * (clustering.e_eff - e0)
    sigma = clustering.sigma_eff
    freq = np.array([raw.f_surface[clustering.assignment == k].sum()
                     for k in range(D)])
    return InteractionModel(
        D=D,
        epsilon=epsilon,
        sigma=sigma,
        sigma_pair=0.5 * (sigma[:, None] + sigma[None, :]),
        freq=freq,
        cluster_map=clustering.assignment.copy(),
        cutoff=cutoff,
        lam=lam,
        e0=e0,
    )


def full_model(raw: RawTables, cutoff: float = DEFAULT_CUTOFF,
               lam: float = DEFAULT_LAMBDA, e0: float = DEFAULT_E0) -> InteractionModel:
    """The D=20 model (identity clustering)."""
    return reduce_model(raw, cluster_alphabet(raw, 20), cutoff, lam, e0)
