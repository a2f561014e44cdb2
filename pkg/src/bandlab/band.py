"""Block tridiagonal band ensembles and their samplers.

A Hamiltonian here is a symmetric block tridiagonal matrix with N diagonal
blocks of size W x W.  Entries of sqrt(W) times each block are iid draws from
the ensemble's laws (diagonal blocks symmetric, coupling blocks full), so
individual matrix entries have variance at most 1/W.

Sampling is keyed by block: block i of kind `tag` always draws from the
substream `stream.child(tag, i)`, so the blocks of a shorter chain are a
prefix of the blocks of a longer chain under the same stream, and sampling
order or process layout cannot change the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .laws import RegularLaw
from .streams import Stream

__all__ = [
    "TAG_DIAG",
    "TAG_OFF",
    "BandEnsemble",
    "BlockTridiagonal",
    "sample_hamiltonian",
    "sample_diag_block",
    "sample_coupling_block",
    "assemble_dense",
    "restrict",
    "write_dense_text",
]

TAG_DIAG = 0
TAG_OFF = 1


@dataclass(frozen=True)
class BandEnsemble:
    """Distribution of a block tridiagonal Hamiltonian at a fixed energy.

    `energy` must sit strictly inside (-energy_window, energy_window); the
    window is where the chain's fluctuation estimates are quoted, and the
    default of 2 matches the bulk of the spectrum under unit-variance laws.
    """

    n_blocks: int
    block_size: int
    energy: float
    a_law: RegularLaw
    b_law: RegularLaw
    energy_window: float = 2.0

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be at least 1")
        if self.block_size < 1:
            raise ConfigError("block_size must be at least 1")
        if not self.energy_window > 0:
            raise ConfigError("energy_window must be positive")
        if not abs(self.energy) < self.energy_window:
            raise ConfigError(
                f"energy {self.energy} outside (-{self.energy_window}, {self.energy_window})"
            )

    @property
    def dimension(self) -> int:
        return self.n_blocks * self.block_size


@dataclass(frozen=True)
class BlockTridiagonal:
    """A sampled symmetric block tridiagonal matrix.

    Block (i, i) is diag_blocks[i]; block (i, i+1) is off_blocks[i] and
    block (i+1, i) its transpose.
    """

    diag_blocks: tuple = field(repr=False)
    off_blocks: tuple = field(repr=False)

    def __post_init__(self):
        if len(self.diag_blocks) < 1:
            raise DimensionError("need at least one diagonal block")
        if len(self.off_blocks) != len(self.diag_blocks) - 1:
            raise DimensionError(
                f"{len(self.diag_blocks)} diagonal blocks need "
                f"{len(self.diag_blocks) - 1} coupling blocks, got {len(self.off_blocks)}"
            )
        w = self.diag_blocks[0].shape[0]
        for block in (*self.diag_blocks, *self.off_blocks):
            if block.shape != (w, w):
                raise DimensionError(f"every block must be {w}x{w}, got {block.shape}")

    @property
    def n_blocks(self) -> int:
        return len(self.diag_blocks)

    @property
    def block_size(self) -> int:
        return self.diag_blocks[0].shape[0]

    @property
    def dimension(self) -> int:
        return self.n_blocks * self.block_size


def sample_diag_block(law: RegularLaw, w: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric W x W block whose scaled entries sqrt(W)*a_ik are iid draws."""
    root_w = math.sqrt(w)
    iu = np.triu_indices(w)
    values = law.sample(rng, iu[0].size) / root_w
    block = np.zeros((w, w))
    block[iu] = values
    block.T[iu] = values
    return block


def sample_coupling_block(law: RegularLaw, w: int, rng: np.random.Generator) -> np.ndarray:
    """Full W x W block whose scaled entries sqrt(W)*b_ik are iid draws."""
    return law.sample(rng, (w, w)) / math.sqrt(w)


def sample_hamiltonian(ensemble: BandEnsemble, stream: Stream) -> BlockTridiagonal:
    """Draw one Hamiltonian, one substream per block."""
    w = ensemble.block_size
    diag = tuple(
        sample_diag_block(ensemble.a_law, w, stream.child(TAG_DIAG, i).generator())
        for i in range(ensemble.n_blocks)
    )
    off = tuple(
        sample_coupling_block(ensemble.b_law, w, stream.child(TAG_OFF, i).generator())
        for i in range(ensemble.n_blocks - 1)
    )
    return BlockTridiagonal(diag, off)


def assemble_dense(ham: BlockTridiagonal, shift: float = 0.0) -> np.ndarray:
    """Dense symmetric matrix for the chain, with `shift` times I subtracted."""
    n, w = ham.n_blocks, ham.block_size
    out = np.zeros((n * w, n * w))
    for i, block in enumerate(ham.diag_blocks):
        sl = slice(i * w, (i + 1) * w)
        out[sl, sl] = block
    for i, block in enumerate(ham.off_blocks):
        rows = slice(i * w, (i + 1) * w)
        cols = slice((i + 1) * w, (i + 2) * w)
        out[rows, cols] = block
        out[cols, rows] = block.T
    if shift:
        out[np.diag_indices_from(out)] -= shift
    return out


def restrict(ham: BlockTridiagonal, lo: int, hi: int) -> BlockTridiagonal:
    """Sub-chain on the 1-indexed inclusive block interval [lo, hi]."""
    if not (1 <= lo <= hi <= ham.n_blocks):
        raise DimensionError(
            f"block interval [{lo}, {hi}] not inside [1, {ham.n_blocks}]"
        )
    return BlockTridiagonal(
        ham.diag_blocks[lo - 1 : hi],
        ham.off_blocks[lo - 1 : hi - 1],
    )


def write_dense_text(ham: BlockTridiagonal, path) -> None:
    """Write the dense matrix as whitespace-separated text, full precision."""
    np.savetxt(path, assemble_dense(ham), fmt="%.17g")
