"""Joint initial access, pilot assignment, and cooperation-cluster formation.

Each connecting UE appoints the AP with the strongest large-scale coefficient
as its master, gets the pilot on which that AP currently sees the least pilot
power, and is then picked up by neighboring APs that either have the pilot
slot free or prefer the new UE's channel. An AP serves at most one UE per
pilot, so every AP serves at most pilot_len UEs no matter how many UEs the
network admits - this is what keeps per-AP cost bounded.

The assignment also represents the benchmark "all APs serve all UEs" mode
used for unscalable reference schemes; there the one-UE-per-pilot-per-AP
bookkeeping is disabled but pilots are still assigned by the same rule.
"""

import json
from dataclasses import dataclass

import numpy as np

from .config import SimulationConfig
from .topology import Topology


class AdmissionError(RuntimeError):
    """A UE could not be admitted (e.g. master AP out of pilot capacity)."""


@dataclass
class ClusterAssignment:
    """Pilot indices, serving sets, and master APs for all admitted UEs."""

    pilot_len: int
    pilot_of: np.ndarray          # (K,) pilot index, -1 while unadmitted
    master_of: np.ndarray         # (K,) AP index, -1 while unadmitted
    serves: np.ndarray            # (L, K) bool, serves[l, k] iff AP l serves UE k
    ue_on_pilot: np.ndarray       # (L, pilot_len) occupant UE or -1 (unused in all-serve-all)
    all_serve_all: bool = False

    @property
    def num_aps(self):
        return self.serves.shape[0]

    @property
    def num_ues(self):
        return self.serves.shape[1]

    def serving_aps(self, k: int) -> np.ndarray:
        """M_k: indices of APs serving UE k."""
        return np.flatnonzero(self.serves[:, k])

    def served_ues(self, l: int) -> np.ndarray:
        """D_l: indices of UEs served by AP l."""
        return np.flatnonzero(self.serves[l])

    def sharers(self, t: int) -> np.ndarray:
        """S_t: UEs assigned to pilot t."""
        return np.flatnonzero(self.pilot_of == t)

    def cluster_sizes(self) -> np.ndarray:
        """|D_l| for every AP."""
        return self.serves.sum(axis=1)

    def to_json(self) -> str:
        return json.dumps(
            {
                "pilot_len": self.pilot_len,
                "all_serve_all": self.all_serve_all,
                "pilot_of": self.pilot_of.tolist(),
                "master_of": self.master_of.tolist(),
                "serving_aps": [self.serving_aps(k).tolist() for k in range(self.num_ues)],
                "num_aps": int(self.num_aps),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ClusterAssignment":
        data = json.loads(text)
        K = len(data["pilot_of"])
        L = data["num_aps"]
        serves = np.zeros((L, K), dtype=bool)
        for k, aps in enumerate(data["serving_aps"]):
            serves[aps, k] = True
        assignment = cls(
            pilot_len=data["pilot_len"],
            pilot_of=np.asarray(data["pilot_of"], dtype=int),
            master_of=np.asarray(data["master_of"], dtype=int),
            serves=serves,
            ue_on_pilot=np.full((L, data["pilot_len"]), -1, dtype=int),
            all_serve_all=data["all_serve_all"],
        )
        if not assignment.all_serve_all:
            for k in range(K):
                t = assignment.pilot_of[k]
                if t >= 0:
                    assignment.ue_on_pilot[assignment.serving_aps(k), t] = k
        return assignment


def compute_partners(assignment: ClusterAssignment) -> np.ndarray:
    """(K, K) boolean partner matrix: UEs whose serving sets overlap.

    Symmetric, and contains k itself for every admitted UE.
    """
    serves = assignment.serves
    return (serves.T.astype(np.int32) @ serves.astype(np.int32)) > 0


@dataclass
class AdmissionState:
    """Mutable admission bookkeeping (single-writer)."""

    cfg: SimulationConfig
    topology: Topology
    assignment: ClusterAssignment
    trace_psi: np.ndarray          # (L, pilot_len) running tr(Psi_tl)
    master_pilot_taken: np.ndarray  # (L, pilot_len) AP is master of a UE on that pilot

    @classmethod
    def empty(cls, cfg: SimulationConfig, topology: Topology, all_serve_all: bool = False):
        L, K = cfg.num_aps, cfg.num_ues
        assignment = ClusterAssignment(
            pilot_len=cfg.pilot_len,
            pilot_of=np.full(K, -1, dtype=int),
            master_of=np.full(K, -1, dtype=int),
            serves=np.zeros((L, K), dtype=bool),
            ue_on_pilot=np.full((L, cfg.pilot_len), -1, dtype=int),
            all_serve_all=all_serve_all,
        )
        # with no UEs assigned, tr(Psi_tl) = N * sigma_ul^2 on every pilot
        trace_psi = np.full((L, cfg.pilot_len), cfg.antennas_per_ap * cfg.noise_ul_w)
        return cls(cfg, topology, assignment, trace_psi,
                   np.zeros((L, cfg.pilot_len), dtype=bool))

    def _register_pilot(self, k: int, t: int):
        # UE k joins S_t: every AP's tr(Psi_tl) grows by tau_p * p_k * tr(R_kl)
        self.trace_psi[:, t] += (
            self.cfg.pilot_len * self.cfg.ue_power_w
            * self.cfg.antennas_per_ap * self.topology.beta[k]
        )


def appoint_master(state: AdmissionState, k: int) -> int:
    """Step 1: the AP with the largest beta_kl (ties: lowest index)."""
    return int(np.argmax(state.topology.beta[k]))


def assign_pilot(state: AdmissionState, master: int) -> int:
    """Step 2: the pilot with the least observed pilot power at the master.

    Pilots on which the master AP already serves a UE as its master are
    excluded (that role has priority). Ties break toward the lowest index.
    """
    traces = state.trace_psi[master].copy()
    traces[state.master_pilot_taken[master]] = np.inf
    if not np.isfinite(traces).any():
        raise AdmissionError(f"master at capacity: AP {master} is master on all pilots")
    return int(np.argmin(traces))


def neighbor_aps(state: AdmissionState, master: int) -> np.ndarray:
    """APs invited in Step 3: within the radius of the master, nearest first."""
    dist = state.topology.ap_distances_from(master)
    candidates = np.flatnonzero((dist <= state.cfg.neighbor_radius_km)
                                & (np.arange(len(dist)) != master))
    order = np.argsort(dist[candidates], kind="stable")
    return candidates[order][: state.cfg.max_neighbors]


def form_cluster(state: AdmissionState, k: int, pilot: int, master: int,
                 neighbors: np.ndarray) -> None:
    """Step 3: the master always serves; neighbors serve if free or better.

    A neighbor already serving some UE j on this pilot switches to UE k only
    if beta_kl > beta_jl, and never if it is j's master AP.
    """
    assignment = state.assignment
    beta = state.topology.beta
    for l in (master, *neighbors):
        occupant = assignment.ue_on_pilot[l, pilot]
        if occupant >= 0:
            if assignment.master_of[occupant] == l:
                # Step-2 pilot exclusion keeps the master slot collision-free
                assert l != master
                continue  # never drop a UE from its own master
            if l != master and beta[k, l] <= beta[occupant, l]:
                continue
            assignment.serves[l, occupant] = False
        assignment.serves[l, k] = True
        assignment.ue_on_pilot[l, pilot] = k
    assignment.pilot_of[k] = pilot
    assignment.master_of[k] = master
    state.master_pilot_taken[master, pilot] = True
    state._register_pilot(k, pilot)


def admit_ue(state: AdmissionState, k: int, forced_pilot: int = None) -> None:
    """Run the three-step access procedure for UE k."""
    if state.assignment.pilot_of[k] >= 0:
        raise AdmissionError(f"UE {k} is already admitted")
    master = appoint_master(state, k)
    if state.assignment.all_serve_all:
        _admit_all_serve_all(state, k, master, forced_pilot)
        return
    if forced_pilot is None:
        pilot = assign_pilot(state, master)
    else:
        pilot = forced_pilot
        if state.master_pilot_taken[master, pilot]:
            raise AdmissionError(
                f"pilot {pilot} already carries a master-bound UE at AP {master}"
            )
    form_cluster(state, k, pilot, master, neighbor_aps(state, master))


def _admit_all_serve_all(state: AdmissionState, k: int, master: int, forced_pilot):
    # benchmark mode: D_i = I for everyone; pilots follow the same Step-2
    # rule but per-AP pilot occupancy is not enforced
    pilot = forced_pilot if forced_pilot is not None else assign_pilot(state, master)
    assignment = state.assignment
    assignment.serves[:, k] = True
    assignment.pilot_of[k] = pilot
    assignment.master_of[k] = master
    state.master_pilot_taken[master, pilot] = True
    state._register_pilot(k, pilot)


def remove_ue(state: AdmissionState, k: int) -> None:
    """Detach UE k entirely (used to re-run access after movement)."""
    assignment = state.assignment
    t = assignment.pilot_of[k]
    if t < 0:
        raise AdmissionError(f"UE {k} is not admitted")
    self_mask = assignment.ue_on_pilot[:, t] == k
    assignment.ue_on_pilot[self_mask, t] = -1
    assignment.serves[:, k] = False
    state.master_pilot_taken[assignment.master_of[k], t] = False
    state.trace_psi[:, t] -= (
        state.cfg.pilot_len * state.cfg.ue_power_w
        * state.cfg.antennas_per_ap * state.topology.beta[k]
    )
    assignment.pilot_of[k] = -1
    assignment.master_of[k] = -1


def build_assignment(cfg: SimulationConfig, topology: Topology) -> ClusterAssignment:
    """Admit every UE: first pilot_len UEs on distinct pilots, rest in order."""
    state = AdmissionState.empty(cfg, topology, all_serve_all=cfg.all_serve_all)
    initial = min(cfg.pilot_len, cfg.num_ues)
    for k in range(initial):
        admit_ue(state, k, forced_pilot=k)
    for k in range(initial, cfg.num_ues):
        admit_ue(state, k)
    return state.assignment
