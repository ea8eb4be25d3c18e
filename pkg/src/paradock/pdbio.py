"""Minimal PDB reading/writing for CA-only residue models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyStructure, ParseError

# The twenty standard amino acids, alphabetical by three-letter code.
AA3 = (
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
)
AA_INDEX = {name: i for i, name in enumerate(AA3)}
UNK_INDEX = 20
N_RESIDUE_TYPES = 21


@dataclass(eq=False)
class Residue:
    name: str
    type_index: int
    seq_number: int
    insertion_code: str
    coord: np.ndarray


@dataclass(eq=False)
class Chain:
    chain_id: str
    residues: list[Residue] = field(default_factory=list)


@dataclass(eq=False)
class ProteinStructure:
    """Chains of CA-represented residues, in file order within sorted residues."""

    chains: list[Chain]
    unknown_residues: int = 0

    @property
    def n_residues(self) -> int:
        return sum(len(c.residues) for c in self.chains)

    @property
    def coords(self) -> np.ndarray:
        """All CA coordinates, (N, 3) float64, chain-major order."""
        pts = [r.coord for c in self.chains for r in c.residues]
        return np.stack(pts).astype(np.float64)

    @property
    def residue_types(self) -> np.ndarray:
        return np.array(
            [r.type_index for c in self.chains for r in c.residues], dtype=np.int64
        )

    @property
    def chain_positions(self) -> np.ndarray:
        """Zero-based residue position within its own chain, (N,) int64."""
        pos = []
        for c in self.chains:
            pos.extend(range(len(c.residues)))
        return np.array(pos, dtype=np.int64)

    @property
    def chain_ids(self) -> list[str]:
        return [c.chain_id for c in self.chains]

    def with_coords(self, coords) -> "ProteinStructure":
        """Copy of the structure with every CA coordinate replaced, same order."""
        arr = np.asarray(coords, dtype=np.float64)
        if arr.shape != (self.n_residues, 3):
            raise ValueError(f"need {(self.n_residues, 3)} coords, got {arr.shape}")
        chains, k = [], 0
        for c in self.chains:
            residues = []
            for r in c.residues:
                residues.append(
                    Residue(r.name, r.type_index, r.seq_number, r.insertion_code, arr[k].copy())
                )
                k += 1
            chains.append(Chain(c.chain_id, residues))
        return ProteinStructure(chains, self.unknown_residues)

    @classmethod
    def from_arrays(cls, coords, residue_types=None, chain_id: str = "A") -> "ProteinStructure":
        """Build a single-chain structure from raw arrays (synthetic data, tests)."""
        arr = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
        n = arr.shape[0]
        if residue_types is None:
            types = np.zeros(n, dtype=np.int64)
        else:
            types = np.asarray(residue_types, dtype=np.int64).reshape(-1)
            if types.shape[0] != n:
                raise ValueError("residue_types length must match coords")
        residues = [
            Residue(AA3[t] if t < 20 else "UNK", int(t), i + 1, "", arr[i].copy())
            for i, t in enumerate(types)
        ]
        return cls([Chain(chain_id, residues)])


def parse_pdb(text: str) -> ProteinStructure:
    """Parse CA atoms from ATOM records of the first model.

    Alternate locations keep the highest-occupancy copy (first wins on ties),
    residues sort by (seq number, insertion code) within each chain, chains keep
    first-appearance order. Unknown residue names map to a dedicated extra type
    and are counted on the result.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    # chain id -> {(seq, icode): (occupancy, order, name, coord)}
    per_chain: dict[str, dict] = {}
    chain_order: list[str] = []
    model_seen = 0
    order = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        rec = line[:6]
        if rec.startswith("MODEL"):
            model_seen += 1
            if model_seen > 1:
                break
            continue
        if rec.startswith("ENDMDL"):
            break
        if rec != "ATOM  ":
            continue
        if len(line) < 54:
            raise ParseError("ATOM record too short to hold coordinates", line_no)
        if line[12:16].strip() != "CA":
            continue
        try:
            seq = int(line[22:26])
            xyz = np.array(
                [float(line[30:38]), float(line[38:46]), float(line[46:54])],
                dtype=np.float64,
            )
            occ_field = line[54:60].strip()
            occ = float(occ_field) if occ_field else 1.0
        except ValueError as exc:
            raise ParseError(f"unparsable ATOM fields ({exc})", line_no) from None
        chain = line[21]
        icode = line[26].strip() if len(line) > 26 else ""
        name = line[17:20].strip()
        if chain not in per_chain:
            per_chain[chain] = {}
            chain_order.append(chain)
        key = (seq, icode)
        existing = per_chain[chain].get(key)
        if existing is None or occ > existing[0]:
            keep_order = order if existing is None else existing[1]
            per_chain[chain][key] = (occ, keep_order, name, xyz)
        order += 1
    chains = []
    unknown = 0
    for cid in chain_order:
        residues = []
        for (seq, icode) in sorted(per_chain[cid]):
            _, _, name, xyz = per_chain[cid][(seq, icode)]
            idx = AA_INDEX.get(name, UNK_INDEX)
            if idx == UNK_INDEX:
                unknown += 1
            residues.append(Residue(name, idx, seq, icode, xyz))
        if residues:
            chains.append(Chain(cid, residues))
    if not chains:
        raise EmptyStructure("no CA atoms found in any ATOM record")
    return ProteinStructure(chains, unknown)


def load_pdb(path) -> ProteinStructure:
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        return parse_pdb(fh.read())


def to_pdb(structure: ProteinStructure, coords=None) -> str:
    """Render a structure as CA-only ATOM records (3-decimal coordinates)."""
    if coords is not None:
        structure = structure.with_coords(coords)
    lines = []
    serial = 1
    for chain in structure.chains:
        for r in chain.residues:
            icode = r.insertion_code if r.insertion_code else " "
            name = r.name[:3] if r.name else "UNK"
            x, y, z = (float(v) for v in r.coord)
            lines.append(
                f"ATOM  {serial:5d}  CA  {name:>3s} {chain.chain_id}{r.seq_number:4d}"
                f"{icode}   {x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}"
                f"          {'C':>2s}"
            )
            serial += 1
        lines.append(f"TER   {serial:5d}")
        serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


def save_pdb(path, structure: ProteinStructure, coords=None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(to_pdb(structure, coords))


_CHAIN_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789abcdefghijklmnopqrstuvwxyz"


def write_complex(
    ligand: ProteinStructure, receptor: ProteinStructure,
    ligand_coords=None, receptor_coords=None,
) -> tuple[str, dict[str, str]]:
    """Merge two structures into one PDB text; ligand chains first.

    Receptor chains keep their ids; a ligand chain whose id collides with a
    receptor chain is renamed to the next free letter. Returns the text and
    the ligand chain-id mapping actually used.
    """
    if ligand_coords is not None:
        ligand = ligand.with_coords(ligand_coords)
    if receptor_coords is not None:
        receptor = receptor.with_coords(receptor_coords)
    used = set(receptor.chain_ids)
    mapping: dict[str, str] = {}
    renamed = []
    for chain in ligand.chains:
        cid = chain.chain_id
        if cid in used:
            cid = next(c for c in _CHAIN_ALPHABET if c not in used and c not in mapping.values())
        mapping[chain.chain_id] = cid
        used.add(cid)
        renamed.append(Chain(cid, chain.residues))
    merged = ProteinStructure(renamed + receptor.chains, 0)
    return to_pdb(merged), mapping


def split_complex(structure: ProteinStructure, split: str) -> tuple[ProteinStructure, ProteinStructure]:
    """Split a complex into (ligand, receptor) by a chain spec like ``"A:B"``.

    Every chain in the file must be assigned to exactly one side.
    """
    parts = split.split(":")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise ConfigError(f"split must look like LIGCHAINS:RECCHAINS, got {split!r}")
    lig_ids, rec_ids = set(parts[0]), set(parts[1])
    if lig_ids & rec_ids:
        raise ConfigError(f"chains {sorted(lig_ids & rec_ids)} appear on both sides")
    present = set(structure.chain_ids)
    for cid in (lig_ids | rec_ids) - present:
        raise ConfigError(f"chain {cid!r} not present in structure")
    for cid in present - (lig_ids | rec_ids):
        raise ConfigError(f"chain {cid!r} not assigned to either side")
    lig = [c for c in structure.chains if c.chain_id in lig_ids]
    rec = [c for c in structure.chains if c.chain_id in rec_ids]
    return ProteinStructure(lig), ProteinStructure(rec)
