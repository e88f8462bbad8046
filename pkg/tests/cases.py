"""Channel families shared by the test modules, with cached optimizer results."""
import math
from functools import lru_cache

import numpy as np

from opdisc.core import (
    PAULI_Z,
    amplitude_damping_channel,
    depolarizing_channel,
    identity_channel,
    make_replace_channel,
    make_rotation_channel,
    qutrit_replace_channel,
    unitary_channel,
)
from opdisc.fidelity import alpha0, f1_ea, f1_identity
from opdisc.protocol import plan_2d, plan_general
from opdisc.search import OptimizerConfig

ANGLES = (math.pi / 6, math.pi / 4, math.pi / 3, 0.4, 1.2)
#: ceil(pi / (2 theta)) for ANGLES, evaluated by hand.
NMIN_2D = (3, 2, 2, 4, 2)

DEFAULT = OptimizerConfig()
QUICK = OptimizerConfig(starts=16)


def _build():
    chans = {}
    for t in ANGLES:
        chans[f"rotation:{t:.10f}"] = make_rotation_channel(t)
        chans[f"replace:{t:.10f}"] = make_replace_channel(t)
    chans["Z"] = unitary_channel(PAULI_Z, name="Z")
    chans["qutrit_replace:pi/6:0.5"] = qutrit_replace_channel(math.pi / 6, 0.5)
    chans["qutrit_replace:0.4:1"] = qutrit_replace_channel(0.4, 1.0)
    return chans


CHANNELS = _build()
#: Exact angle to the identity for every distinguishable test channel.
THETA = {name: (math.pi / 2 if name == "Z" else None) for name in CHANNELS}
for _t in ANGLES:
    THETA[f"rotation:{_t:.10f}"] = _t
    THETA[f"replace:{_t:.10f}"] = _t
THETA["qutrit_replace:pi/6:0.5"] = math.pi / 6
THETA["qutrit_replace:0.4:1"] = 0.4

QUBIT_FAMILIES = [n for n in CHANNELS if n.startswith(("rotation:", "replace:"))]
DISTINGUISHABLE = list(CHANNELS)

INDISTINGUISHABLE = {
    "identity": identity_channel(),
    "amplitude_damping:0.5": amplitude_damping_channel(0.5),
    "depolarizing:0.5": depolarizing_channel(0.5),
}


def channel(name):
    return CHANNELS.get(name) or INDISTINGUISHABLE[name]


@lru_cache(maxsize=None)
def f1_of(name, starts=DEFAULT.starts):
    return f1_identity(channel(name), OptimizerConfig(starts=starts))


@lru_cache(maxsize=None)
def alpha0_of(name, starts=DEFAULT.starts):
    return alpha0(channel(name), f1_of(name, starts))


@lru_cache(maxsize=None)
def f1_ea_of(name, starts=DEFAULT.starts):
    return f1_ea(channel(name), OptimizerConfig(starts=starts), f1=f1_of(name, starts))


@lru_cache(maxsize=None)
def plan_2d_of(name):
    return plan_2d(channel(name), f1_of(name))


@lru_cache(maxsize=None)
def plan_general_of(name):
    f1 = f1_of(name)
    a0 = alpha0_of(name) if f1.value > 1e-9 else None
    return plan_general(channel(name), f1, a0)


def random_states(dim, count, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
