"""Architecture model: genotypes, decoding to a layer IR, and analytic cost counting."""

from .genotype import (
    BlockGene,
    BlockKind,
    CellGraphPayload,
    FixedBinaryPayload,
    Genotype,
    PoolType,
    Scheme,
    canonical_serialize,
    canonical_text,
    identifier,
    parse_canonical,
)
from .ir import (
    ArchIR,
    Concat,
    Conv,
    Dense,
    Pool,
    Ref,
    Skip,
    check_shapes,
    decode,
    flop_count,
    param_count,
)
from .spaces import CellGraphSpace, EncodingSpace, FixedBinarySpace, VariableBlocksSpace

__all__ = [
    "ArchIR",
    "BlockGene",
    "BlockKind",
    "CellGraphPayload",
    "CellGraphSpace",
    "Concat",
    "Conv",
    "Dense",
    "EncodingSpace",
    "FixedBinaryPayload",
    "FixedBinarySpace",
    "Genotype",
    "Pool",
    "PoolType",
    "Ref",
    "Scheme",
    "Skip",
    "VariableBlocksSpace",
    "canonical_serialize",
    "canonical_text",
    "check_shapes",
    "decode",
    "flop_count",
    "identifier",
    "param_count",
    "parse_canonical",
]
