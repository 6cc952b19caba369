"""Pilot despreading and per-AP MMSE channel estimation.

Everything that depends only on channel statistics is computed once per
setup: the pilot-correlation matrices Psi_tl, the estimation filters
sqrt(p_k*tau_p) R_kl Psi_tl^{-1}, the estimate covariances
B_kl = p_k*tau_p R_kl Psi_tl^{-1} R_kl, and the error covariances
C_kl = R_kl - B_kl. Per coherence block only the despreaded pilot signal and
the filter multiply remain; estimates are materialized lazily for exactly
the (UE, AP) pairs a processing scheme demands.
"""

import numpy as np

from .config import SimulationConfig
from .clustering import ClusterAssignment, compute_partners
from .rng import complex_normal
from .topology import Topology


class SetupContext:
    """Statistics shared by all channel realizations of one setup."""

    def __init__(self, topology: Topology, assignment: ClusterAssignment,
                 ul_power: np.ndarray, cfg: SimulationConfig):
        K, L = topology.beta.shape
        N = topology.antennas_per_ap
        tau_p = cfg.pilot_len
        if np.any(assignment.pilot_of < 0):
            raise ValueError("all UEs must be admitted before estimation")

        self.topology = topology
        self.assignment = assignment
        self.cfg = cfg
        self.ul_power = np.asarray(ul_power, dtype=float)
        self.pilot_of = assignment.pilot_of

        R = topology.R
        eye = np.eye(N)
        # Psi_tl = sum_{i in S_t} tau_p p_i R_il + sigma^2 I  -> (tau_p, L, N, N)
        weights = np.zeros((tau_p, K))
        weights[self.pilot_of, np.arange(K)] = tau_p * self.ul_power
        self.psi = np.einsum("tk,klmn->tlmn", weights, R) + cfg.noise_ul_w * eye

        # statistical filters A_kl = sqrt(p_k tau_p) R_kl Psi_{t_k l}^{-1},
        # precomputed once; R Psi^{-1} = (Psi^{-1} R)^H for Hermitian inputs
        psi_of_ue = self.psi[self.pilot_of]                    # (K, L, N, N)
        self.psi_inv_R = np.linalg.solve(psi_of_ue, R)         # Psi_{t_k l}^{-1} R_kl
        scale = np.sqrt(self.ul_power * tau_p)[:, None, None, None]
        self.filter = scale * np.conj(np.swapaxes(self.psi_inv_R, -1, -2))
        # estimate covariance B and error covariance C = R - B
        self.B = scale * self.filter @ R
        self.B = 0.5 * (self.B + np.conj(np.swapaxes(self.B, -1, -2)))
        self.C = R - self.B
        self.C = 0.5 * (self.C + np.conj(np.swapaxes(self.C, -1, -2)))
        # sum_i p_i C_il, the statistical part of the centralized noise matrix
        self.C_weighted_sum = np.einsum("k,klmn->lmn", self.ul_power, self.C)

        # despreading weights: y_tl = sum_{i in S_t} sqrt(tau_p p_i) h_il + noise
        self._despread = np.zeros((tau_p, K))
        self._despread[self.pilot_of, np.arange(K)] = np.sqrt(tau_p * self.ul_power)

        self._partners = None
        self._noise_cache = {}

    def pilot_correlation(self, t: int, l: int) -> np.ndarray:
        """Psi_tl for one pilot/AP pair."""
        return self.psi[t, l]

    def compact_blocks(self, k: int) -> np.ndarray:
        """Serving-AP indices defining UE k's reduced-dimension subspace."""
        return self.assignment.serving_aps(k)

    def partners(self) -> np.ndarray:
        if self._partners is None:
            self._partners = compute_partners(self.assignment)
        return self._partners

    def noise_matrix(self, k: int, partner_only: bool = False) -> np.ndarray:
        """Z_k on UE k's subspace: blockdiag of sum_i p_i C_il + sigma^2 I.

        With partner_only the statistical sum runs over the partner set only
        (the regularizer of partial MMSE combining); otherwise over all UEs.
        """
        key = (k, partner_only)
        if key in self._noise_cache:
            return self._noise_cache[key]
        aps = self.compact_blocks(k)
        N = self.topology.antennas_per_ap
        if partner_only:
            members = np.flatnonzero(self.partners()[k])
            csum = np.einsum("k,klmn->lmn", self.ul_power[members], self.C[members][:, aps])
        else:
            csum = self.C_weighted_sum[aps]
        n = N * len(aps)
        Z = np.zeros((n, n), dtype=complex)
        for j, block in enumerate(csum):
            Z[j * N:(j + 1) * N, j * N:(j + 1) * N] = block
        Z[np.diag_indices(n)] += self.cfg.noise_ul_w
        self._noise_cache[key] = Z
        return Z


class EstimationBundle:
    """Per-batch pilot observations and lazily computed MMSE estimates."""

    def __init__(self, ctx: SetupContext, channels: np.ndarray, rng):
        self.ctx = ctx
        self.channels = channels
        batch, K, L, N = channels.shape
        noise = np.sqrt(ctx.cfg.noise_ul_w) * complex_normal(
            rng, (batch, ctx.cfg.pilot_len, L, N)
        )
        self.y_pilot = np.einsum("tk,bkln->btln", ctx._despread, channels) + noise
        self.hhat = np.zeros_like(channels)
        self._computed = np.zeros((K, L), dtype=bool)

    def ensure(self, mask: np.ndarray) -> None:
        """Materialize estimates for every (UE, AP) pair flagged in mask."""
        todo = np.argwhere(mask & ~self._computed)
        if todo.size == 0:
            return
        ues, aps = todo[:, 0], todo[:, 1]
        filters = self.ctx.filter[ues, aps]                       # (P, N, N)
        y = self.y_pilot[:, self.ctx.pilot_of[ues], aps, :]       # (B, P, N)
        self.hhat[:, ues, aps, :] = np.einsum("pmn,bpn->bpm", filters, y)
        self._computed[ues, aps] = True

    def ensure_all(self) -> None:
        self.ensure(np.ones(self._computed.shape, dtype=bool))

    def estimate(self, k: int, l: int) -> np.ndarray:
        """(B, N) estimates of one link, computing them if needed."""
        if not self._computed[k, l]:
            mask = np.zeros(self._computed.shape, dtype=bool)
            mask[k, l] = True
            self.ensure(mask)
        return self.hhat[:, k, l, :]
