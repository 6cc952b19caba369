"""Receive combining and duality-based precoding.

Batched implementations (leading axis = channel realization) of

* MR: v_kl = hhat_kl at serving APs,
* MMSE: the SINR-optimal centralized combiner on the compacted
  N*|M_k|-dimensional subspace of UE k's serving APs,
* P-MMSE: same structure but with interference/statistics restricted to the
  partner set P_k (UEs sharing at least one serving AP),
* LP-MMSE: per-AP N x N regularized solve over the UEs that AP serves,
* L-MMSE: the unscalable variant of LP-MMSE summing over all K UEs,

plus the normalized precoders w = v / sqrt(E{v^H D v}) scaled by the
allocated downlink powers. Single-realization reference versions mirror the
batched code path and carry an operation counter used to cross-check the
complexity accounting.
"""

from dataclasses import dataclass

import numpy as np

from .estimation import EstimationBundle, SetupContext


class DegeneratePrecoderError(RuntimeError):
    """E{v^H D v} = 0: the UE is never actually served by its combiner."""


@dataclass
class OpCounter:
    """Complex-multiplication tally per the solve-cost convention.

    Hermitian outer products cost (n^2+n)/2, a factorization plus one
    right-hand-side solve costs n^2 + (n^3-n)/3, and each demanded channel
    estimate costs N*tau_p (despreading) + N^2 (filter multiply).
    """

    estimates: int = 0
    combining_mults: int = 0

    def count_estimate(self, n: int = 1):
        self.estimates += n

    def outer_product(self, n: int):
        self.combining_mults += (n * n + n) // 2

    def factor_and_solve(self, n: int):
        self.combining_mults += n * n + (n**3 - n) // 3

    def estimation_mults(self, num_antennas: int, pilot_len: int) -> int:
        return self.estimates * (num_antennas * pilot_len + num_antennas**2)


def _solve_hermitian(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Stacked solve with pseudo-inverse semantics on singular input.

    A: (..., n, n) Hermitian, rhs: (..., n). The fast path is a plain solve
    (A is positive definite whenever the noise power is positive); if LAPACK
    reports singularity the solution is recomputed from an eigendecomposition
    with eigenvalues below 1e-12 * max discarded.
    """
    try:
        return np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(A)
        cutoff = 1e-12 * np.max(np.abs(vals), axis=-1, keepdims=True)
        inv_vals = np.where(np.abs(vals) > cutoff, 1.0 / vals, 0.0)
        proj = np.einsum("...nm,...n->...m", np.conj(vecs), rhs)
        return np.einsum("...nm,...m->...n", vecs, inv_vals * proj)


def estimate_demand_mask(scheme: str, ctx: SetupContext) -> np.ndarray:
    """(K, L) mask of channel estimates the scheme's combiners consume."""
    serves = ctx.assignment.serves
    K = serves.shape[1]
    if scheme in ("MR", "LP-MMSE"):
        return serves.T.copy()
    if scheme in ("MMSE", "L-MMSE"):
        # every UE's estimate at every AP that serves anyone
        mask = np.zeros((K, serves.shape[0]), dtype=bool)
        mask[:, serves.any(axis=1)] = True
        return mask
    if scheme == "P-MMSE":
        partners = ctx.partners().astype(np.int32)
        return (partners @ serves.T.astype(np.int32)) > 0
    raise ValueError(f"unknown scheme {scheme!r}")


def compute_combiners(scheme: str, bundle: EstimationBundle) -> np.ndarray:
    """(B, K, L, N) combining vectors, exactly zero outside serving APs."""
    bundle.ensure(estimate_demand_mask(scheme, bundle.ctx))
    if scheme == "MR":
        return mr_combiner(bundle)
    if scheme in ("LP-MMSE", "L-MMSE"):
        return local_mmse_combiner(bundle, all_ues=(scheme == "L-MMSE"))
    if scheme in ("MMSE", "P-MMSE"):
        return centralized_mmse_combiner(bundle, partial=(scheme == "P-MMSE"))
    raise ValueError(f"unknown scheme {scheme!r}")


def mr_combiner(bundle: EstimationBundle) -> np.ndarray:
    mask = bundle.ctx.assignment.serves.T[None, :, :, None]
    return bundle.hhat * mask


def local_mmse_combiner(bundle: EstimationBundle, all_ues: bool = False) -> np.ndarray:
    """LP-MMSE (or L-MMSE with all_ues): per-AP N x N regularized solves."""
    ctx = bundle.ctx
    K, L = ctx.topology.beta.shape
    N = ctx.topology.antennas_per_ap
    p = ctx.ul_power
    sigma2 = ctx.cfg.noise_ul_w
    v = np.zeros_like(bundle.hhat)
    eye = sigma2 * np.eye(N)
    for l in range(L):
        served = ctx.assignment.served_ues(l)
        if served.size == 0:
            continue
        members = np.arange(K) if all_ues else served
        hh = bundle.hhat[:, members, l, :]                      # (B, S, N)
        gram = np.einsum("i,bim,bin->bmn", p[members], hh, np.conj(hh))
        gram += np.einsum("i,imn->mn", p[members], ctx.C[members, l])
        gram += eye
        rhs = np.swapaxes(bundle.hhat[:, served, l, :], 1, 2)   # (B, N, |D_l|)
        sol = np.linalg.solve(gram, rhs)
        v[:, served, l, :] = p[served][None, :, None] * np.swapaxes(sol, 1, 2)
    return v


def centralized_mmse_combiner(bundle: EstimationBundle, partial: bool = False) -> np.ndarray:
    """MMSE / P-MMSE combining on each UE's compacted subspace."""
    ctx = bundle.ctx
    K, L = ctx.topology.beta.shape
    N = ctx.topology.antennas_per_ap
    p = ctx.ul_power
    B = bundle.hhat.shape[0]
    v = np.zeros_like(bundle.hhat)

    if ctx.assignment.all_serve_all:
        # every UE shares the same subspace and interference set: factor the
        # common Gram matrix once and solve all right-hand sides together
        hh = bundle.hhat.reshape(B, K, L * N)
        gram = np.einsum("i,bim,bin->bmn", p, hh, np.conj(hh))
        gram += ctx.noise_matrix(0, partner_only=partial)
        sol = _solve_multi(gram, np.swapaxes(hh, 1, 2))
        vc = p[None, :, None] * np.swapaxes(sol, 1, 2)
        return vc.reshape(B, K, L, N)

    partners = ctx.partners()
    for k in range(K):
        aps = ctx.compact_blocks(k)
        if aps.size == 0:
            continue
        members = np.flatnonzero(partners[k]) if partial else np.arange(K)
        n = N * aps.size
        hh = bundle.hhat[:, members][:, :, aps, :].reshape(B, members.size, n)
        gram = np.einsum("i,bim,bin->bmn", p[members], hh, np.conj(hh))
        gram += ctx.noise_matrix(k, partner_only=partial)
        rhs = bundle.hhat[:, k, aps, :].reshape(B, n)
        vc = p[k] * _solve_hermitian(gram, rhs)
        v[:, k, aps, :] = vc.reshape(B, aps.size, N)
    return v


def _solve_multi(A, rhs):
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(A)
        cutoff = 1e-12 * np.max(np.abs(vals), axis=-1, keepdims=True)
        inv_vals = np.where(np.abs(vals) > cutoff, 1.0 / vals, 0.0)
        proj = np.einsum("...nm,...nk->...mk", np.conj(vecs), rhs)
        return np.einsum("...nm,...mk->...nk", vecs, inv_vals[..., None] * proj)


def optimal_sinr(bundle: EstimationBundle, k: int) -> np.ndarray:
    """(B,) maximal instantaneous SINR for UE k.

    This is the generalized-Rayleigh-quotient maximum
    p_k hhat_k^H D (sum_{i != k} p_i D hhat_i hhat_i^H D + Z_k)^† D hhat_k
    attained by MMSE combining.
    """
    ctx = bundle.ctx
    bundle.ensure_all()
    N = ctx.topology.antennas_per_ap
    p = ctx.ul_power
    aps = ctx.compact_blocks(k)
    B = bundle.hhat.shape[0]
    n = N * aps.size
    others = np.arange(ctx.topology.beta.shape[0]) != k
    hh = bundle.hhat[:, others][:, :, aps, :].reshape(B, -1, n)
    gram = np.einsum("i,bim,bin->bmn", p[others], hh, np.conj(hh))
    gram += ctx.noise_matrix(k)
    rhs = bundle.hhat[:, k, aps, :].reshape(B, n)
    sol = _solve_hermitian(gram, rhs)
    return p[k] * np.real(np.einsum("bn,bn->b", np.conj(rhs), sol))


# ---------------------------------------------------------------------------
# precoder construction (uplink-downlink duality: w = v / sqrt(E{v^H D v}))
# ---------------------------------------------------------------------------

def precoder_normalization(v_samples: np.ndarray) -> float:
    """Monte-Carlo estimate of E{v^H D v} from masked combiner samples."""
    return float(np.mean(np.sum(np.abs(v_samples) ** 2, axis=tuple(range(1, v_samples.ndim)))))


def build_precoders_centralized(v: np.ndarray, rho: np.ndarray, norm: np.ndarray) -> np.ndarray:
    """w_i = sqrt(rho_i) v_i / sqrt(E{v_i^H D_i v_i}), powers folded in.

    v: (B, K, L, N) masked combiners, rho: (K,) powers, norm: (K,) estimated
    E{v^H D v}. UEs with zero power are simply not transmitted to.
    """
    active = rho > 0
    if np.any(active & (norm <= 0)):
        raise DegeneratePrecoderError("zero combiner energy for a powered UE")
    scale = np.where(active, np.sqrt(rho / np.where(norm > 0, norm, 1.0)), 0.0)
    return v * scale[None, :, None, None]


def build_precoders_distributed(v: np.ndarray, rho_per_ap: np.ndarray,
                                norm_per_ap: np.ndarray) -> np.ndarray:
    """Per-AP normalization: w_il = sqrt(rho_il) v_il / sqrt(E{||v_il||^2}).

    rho_per_ap, norm_per_ap: (K, L). Entries with rho_il = 0 stay zero.
    """
    active = rho_per_ap > 0
    if np.any(active & (norm_per_ap <= 0)):
        raise DegeneratePrecoderError("zero combiner energy at a powered AP")
    scale = np.where(active, np.sqrt(rho_per_ap / np.where(norm_per_ap > 0, norm_per_ap, 1.0)), 0.0)
    return v * scale[None, :, :, None]


# ---------------------------------------------------------------------------
# single-realization reference path (readable, instrumented)
# ---------------------------------------------------------------------------

def combiner_single(scheme: str, k: int, hhat, ctx: SetupContext,
                    counter: OpCounter = None) -> np.ndarray:
    """Combining vector of UE k for one realization, (L, N) layout.

    hhat is a (K, L, N) array of channel estimates; the counter, when given,
    records the estimates demanded and the multiplications spent for this UE
    alone (shared work is charged per UE, matching the per-UE accounting).
    """
    K, L, N = hhat.shape
    p = ctx.ul_power
    sigma2 = ctx.cfg.noise_ul_w
    aps = ctx.compact_blocks(k)
    v = np.zeros((L, N), dtype=complex)

    def fetch(i, l):
        if counter is not None:
            counter.count_estimate()
        return hhat[i, l]

    if scheme == "MR":
        for l in aps:
            v[l] = fetch(k, l)
        return v

    if scheme in ("LP-MMSE", "L-MMSE"):
        for l in aps:
            members = np.arange(K) if scheme == "L-MMSE" else ctx.assignment.served_ues(l)
            gram = sigma2 * np.eye(N, dtype=complex)
            for i in members:
                hi = fetch(i, l)
                gram += p[i] * (np.outer(hi, np.conj(hi)) + ctx.C[i, l])
                if counter is not None:
                    counter.outer_product(N)
            v[l] = p[k] * np.linalg.solve(gram, hhat[k, l])
            if counter is not None:
                counter.factor_and_solve(N)
        return v

    if scheme in ("MMSE", "P-MMSE"):
        partial = scheme == "P-MMSE"
        members = np.flatnonzero(ctx.partners()[k]) if partial else np.arange(K)
        n = N * aps.size
        gram = ctx.noise_matrix(k, partner_only=partial).copy()
        for i in members:
            hi = np.concatenate([fetch(i, l) for l in aps])
            gram += p[i] * np.outer(hi, np.conj(hi))
            if counter is not None:
                counter.outer_product(n)
        rhs = np.concatenate([hhat[k, l] for l in aps])
        vc = p[k] * _solve_hermitian(gram, rhs)
        if counter is not None:
            counter.factor_and_solve(n)
        v[aps] = vc.reshape(aps.size, N)
        return v

    raise ValueError(f"unknown scheme {scheme!r}")
