import numpy as np
import pytest

from cellfree.clustering import build_assignment
from cellfree.config import SimulationConfig
from cellfree.estimation import SetupContext
from cellfree.power import ul_full_power
from cellfree.rng import TOPOLOGY, stream
from cellfree.topology import generate_topology


def make_cfg(**kw) -> SimulationConfig:
    """Small valid config; overrides welcome."""
    defaults = dict(
        num_aps=8,
        antennas_per_ap=2,
        num_ues=6,
        area_side_km=0.5,
        pilot_len=3,
        coherence_len=200,
        ul_data_len=95,
        dl_data_len=95,
        seed=1,
        num_setups=1,
        num_realizations=50,
        schemes=("MR",),
        mode="distributed",
    )
    defaults.update(kw)
    return SimulationConfig(**defaults).validate()


def make_setup(cfg, setup_index: int = 0):
    """Topology, assignment, and estimation context for one setup."""
    topology = generate_topology(cfg, stream(cfg.seed, setup_index, TOPOLOGY))
    assignment = build_assignment(cfg, topology)
    ctx = SetupContext(topology, assignment, ul_full_power(cfg), cfg)
    return topology, assignment, ctx


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
