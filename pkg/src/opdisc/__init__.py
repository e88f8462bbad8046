"""Perfect discrimination of quantum channels from the identity.

Computes single-query fidelities, query-count bounds and explicit
sequential protocols, and checks them by simulation.
"""

__version__ = "0.1.0"

from .core import (
    DensityOperator,
    KrausChannel,
    PureState,
    apply_channel,
    extend_with_ancilla,
    make_replace_channel,
    make_rotation_channel,
    validate_channel,
)
from .fidelity import alpha0, f1_ea, f1_identity, lemma2_witness, max_fidelity_states, q_max_fidelity
from .search import OptimizerConfig

__all__ = [
    "DensityOperator",
    "KrausChannel",
    "OptimizerConfig",
    "PureState",
    "alpha0",
    "apply_channel",
    "extend_with_ancilla",
    "f1_ea",
    "f1_identity",
    "lemma2_witness",
    "make_replace_channel",
    "make_rotation_channel",
    "max_fidelity_states",
    "q_max_fidelity",
    "validate_channel",
]
