"""Spectral-efficiency bounds and their Monte-Carlo accumulators.

Uplink, centralized: ergodic average of log2(1 + instantaneous SINR) with the
SINR computed from channel estimates and the analytic error-covariance noise
matrix (valid for any combiner).

Uplink, distributed: the use-and-then-forget bound - log2(1 + SINR) where the
SINR is a ratio of expectations accumulated across realizations (signal mean,
interference second moments, combiner norm).

Downlink: the hardening bound with the same structure, driven by normalized
precoders, plus a genie-aided reference where the UE knows its instantaneous
effective channel.

Monte-Carlo standard errors: ergodic-log bounds use the exact per-realization
std/sqrt(n); ratio-of-means bounds use batch means (the SE is recomputed per
realization batch, including that batch's own precoder normalization, and the
spread of those replicas gives the stderr).
"""

from dataclasses import dataclass

import numpy as np

from .estimation import EstimationBundle


class NumericError(RuntimeError):
    """Monte-Carlo output inconsistent beyond sampling noise (likely a bug)."""


@dataclass
class UatfMoments:
    """The three expectation families of the statistics-only SINR.

    signal[k] = E{v_k^H D_k h_k},
    cross[k, i] = E{|v_k^H D_k h_i|^2},
    combiner_norm[k] = E{||D_k v_k||^2}.
    """

    signal: np.ndarray
    cross: np.ndarray
    combiner_norm: np.ndarray


def uatf_sinr(moments: UatfMoments, ul_power: np.ndarray, noise_w: float) -> np.ndarray:
    """Effective UL SINR of the use-and-then-forget bound."""
    num = ul_power * np.abs(moments.signal) ** 2
    den = (moments.cross @ ul_power
           - num + noise_w * moments.combiner_norm)
    return _safe_ratio(num, den)


def dl_sinr_from_ul_moments(moments: UatfMoments, rho: np.ndarray,
                            noise_dl_w: float) -> np.ndarray:
    """DL hardening-bound SINR when precoders are the normalized combiners.

    With w_i = v_i / sqrt(E{v_i^H D_i v_i}), every DL expectation is a rescale
    of a UL moment: E{h_k^H D_i w_i} = conj(signal[i]) / sqrt(norm[i]) for
    i = k and E{|h_k^H D_i w_i|^2} = cross[i, k] / norm[i].
    """
    a2 = np.abs(moments.signal) ** 2 / moments.combiner_norm
    num = rho * a2
    den = (moments.cross.T / moments.combiner_norm[None, :]) @ rho - num + noise_dl_w
    return _safe_ratio(num, den)


def _safe_ratio(num, den):
    out = np.zeros_like(num, dtype=float)
    good = den > 0
    out[good] = num[good] / den[good]
    if np.any(~good & (num > 0)):
        raise NumericError("positive signal power with nonpositive denominator")
    return out


def se_from_sinr(sinr: np.ndarray, prelog: float) -> np.ndarray:
    return prelog * np.log2(1.0 + np.maximum(sinr, 0.0))


# ---------------------------------------------------------------------------
# per-batch Monte-Carlo terms
# ---------------------------------------------------------------------------

def combining_gains(v: np.ndarray, h: np.ndarray) -> np.ndarray:
    """g[b, k, i] = v_k^H D_k h_i (the mask lives in v's zero blocks)."""
    return np.einsum("bkln,biln->bki", np.conj(v), h, optimize=True)


def instantaneous_sinr(v: np.ndarray, bundle: EstimationBundle,
                       ul_power: np.ndarray) -> np.ndarray:
    """(B, K) instantaneous effective SINR of the centralized bound.

    Uses the channel estimates of all UEs on each UE's serving subspace and
    the analytic noise matrix Z_k (estimation-error covariances of all UEs
    plus thermal noise, masked to the subspace).
    """
    ctx = bundle.ctx
    bundle.ensure_all()
    B, K = v.shape[0], v.shape[1]
    N = ctx.topology.antennas_per_ap
    sinr = np.zeros((B, K))
    for k in range(K):
        aps = ctx.compact_blocks(k)
        if aps.size == 0:
            continue
        n = N * aps.size
        vc = v[:, k, aps, :].reshape(B, n)
        hh = bundle.hhat[:, :, aps, :].reshape(B, K, n)
        g = np.einsum("bn,bin->bi", np.conj(vc), hh, optimize=True)
        Z = ctx.noise_matrix(k)
        zq = np.real(np.einsum("bn,nm,bm->b", np.conj(vc), Z, vc, optimize=True))
        power_g = ul_power[None, :] * np.abs(g) ** 2
        num = power_g[:, k]
        den = power_g.sum(axis=1) - num + zq
        np.divide(num, den, out=sinr[:, k], where=den > 0)
    return sinr


# ---------------------------------------------------------------------------
# accumulators (mergeable in fixed batch order for bit-reproducibility)
# ---------------------------------------------------------------------------

class ErgodicLogAccumulator:
    """Mean and stderr of prelog * log2(1 + SINR_r) over realizations."""

    def __init__(self, num_ues: int):
        self.n = 0
        self.log_sum = np.zeros(num_ues)
        self.log_sq_sum = np.zeros(num_ues)

    @staticmethod
    def batch_partial(sinr: np.ndarray) -> dict:
        logs = np.log2(1.0 + np.maximum(sinr, 0.0))
        return {"n": sinr.shape[0], "log_sum": logs.sum(axis=0),
                "log_sq_sum": (logs**2).sum(axis=0)}

    def merge(self, partial: dict) -> None:
        self.n += partial["n"]
        self.log_sum += partial["log_sum"]
        self.log_sq_sum += partial["log_sq_sum"]

    def finalize(self, prelog: float) -> tuple:
        mean = self.log_sum / self.n
        if self.n > 1:
            var = np.maximum(self.log_sq_sum - self.n * mean**2, 0.0) / (self.n - 1)
            stderr = np.sqrt(var / self.n)
        else:
            stderr = np.full_like(mean, np.nan)
        return prelog * mean, prelog * stderr


class UatfAccumulator:
    """Moment sums for the use-and-then-forget / hardening bounds.

    Batch partials carry the sums plus one SE replica computed from the
    batch's own moments; replicas give the batch-means stderr.
    """

    def __init__(self, num_ues: int, num_aps: int):
        self.n = 0
        self.signal = np.zeros(num_ues, dtype=complex)
        self.cross = np.zeros((num_ues, num_ues))
        self.norm = np.zeros(num_ues)
        self.norm_local = np.zeros((num_ues, num_aps))
        self.den_replicas = []
        self.se_replicas = []

    @staticmethod
    def batch_partial(v: np.ndarray, h: np.ndarray, ul_power: np.ndarray,
                      noise_w: float, prelog: float) -> dict:
        g = combining_gains(v, h)
        B, K = g.shape[0], g.shape[1]
        cross = np.abs(g) ** 2
        partial = {
            "n": B,
            "signal": np.einsum("bkk->k", g),
            "cross": cross.sum(axis=0),
            "norm": np.sum(np.abs(v) ** 2, axis=(2, 3)).sum(axis=0),
            "norm_local": np.sum(np.abs(v) ** 2, axis=3).sum(axis=0),
        }
        batch_moments = UatfMoments(
            partial["signal"] / B, partial["cross"] / B, partial["norm"] / B
        )
        num = ul_power * np.abs(batch_moments.signal) ** 2
        den = batch_moments.cross @ ul_power - num + noise_w * batch_moments.combiner_norm
        with np.errstate(divide="ignore", invalid="ignore"):
            se = np.where(den > 0, prelog * np.log2(1.0 + np.maximum(num / den, 0.0)), np.nan)
        partial["den_replica"] = den
        partial["se_replica"] = se
        return partial

    def merge(self, partial: dict) -> None:
        self.n += partial["n"]
        self.signal += partial["signal"]
        self.cross += partial["cross"]
        self.norm += partial["norm"]
        self.norm_local += partial["norm_local"]
        self.den_replicas.append(partial["den_replica"])
        self.se_replicas.append(partial["se_replica"])

    def moments(self) -> UatfMoments:
        return UatfMoments(self.signal / self.n, self.cross / self.n, self.norm / self.n)

    def local_norms(self) -> np.ndarray:
        """E{||v_kl||^2} per (UE, AP), the per-AP precoder normalizations."""
        return self.norm_local / self.n

    def finalize(self, ul_power: np.ndarray, noise_w: float, prelog: float) -> tuple:
        """(se, stderr) with the spec'd negative-denominator handling."""
        m = self.moments()
        num = ul_power * np.abs(m.signal) ** 2
        den = m.cross @ ul_power - num + noise_w * m.combiner_norm
        own_var = np.diag(m.cross) - np.abs(m.signal) ** 2
        if np.any(own_var < -1e-9 * np.maximum(np.diag(m.cross), 1e-300)):
            raise NumericError("second moment below squared mean beyond tolerance")
        den = self._clamp_denominator(den, num)
        sinr = _safe_ratio(num, den)
        return se_from_sinr(sinr, prelog), _replica_stderr(self.se_replicas)

    def _clamp_denominator(self, den, num):
        bad = (den <= 0) & (num > 0)
        if not np.any(bad):
            return den
        reps = np.stack(self.den_replicas)
        stderr = np.nanstd(reps, axis=0, ddof=1) / np.sqrt(reps.shape[0])
        within_noise = np.abs(den) <= 3.0 * stderr
        if np.any(bad & ~within_noise):
            raise NumericError(
                "negative interference denominator beyond 3 standard errors; "
                "increase num_realizations or suspect a combiner bug"
            )
        return np.where(bad, 1e-15, den)


class DownlinkAccumulator:
    """Hardening-bound terms E{h_k^H D_i w_i} plus the genie-aided reference.

    Precoders arrive with powers folded in, so the SINR is
    |E a_k|^2 / (sum_i E q_ki - |E a_k|^2 + sigma_dl^2).
    """

    def __init__(self, num_ues: int):
        self.n = 0
        self.signal = np.zeros(num_ues, dtype=complex)
        self.cross = np.zeros((num_ues, num_ues))
        self.genie = ErgodicLogAccumulator(num_ues)
        self.den_replicas = []
        self.se_replicas = []

    @staticmethod
    def batch_partial(w: np.ndarray, w_batchnorm: np.ndarray, h: np.ndarray,
                      noise_dl_w: float, prelog: float) -> dict:
        """w uses the campaign-wide normalization (reported SE and genie);
        w_batchnorm is renormalized from this batch alone (stderr replicas)."""
        g = np.einsum("bkln,biln->bki", np.conj(h), w, optimize=True)
        B = g.shape[0]
        q = np.abs(g) ** 2
        own = q[:, np.arange(g.shape[1]), np.arange(g.shape[1])]
        genie_sinr = _safe_ratio_batch(own, q.sum(axis=2) - own + noise_dl_w)
        partial = {
            "n": B,
            "signal": np.einsum("bkk->k", g),
            "cross": q.sum(axis=0),
            "genie": ErgodicLogAccumulator.batch_partial(genie_sinr),
        }
        gb = np.einsum("bkln,biln->bki", np.conj(h), w_batchnorm, optimize=True)
        mean_a = np.einsum("bkk->k", gb) / B
        mean_q = np.mean(np.abs(gb) ** 2, axis=0)
        num = np.abs(mean_a) ** 2
        den = mean_q.sum(axis=1) - num + noise_dl_w
        with np.errstate(divide="ignore", invalid="ignore"):
            se = np.where(den > 0, prelog * np.log2(1.0 + np.maximum(num / den, 0.0)), np.nan)
        partial["den_replica"] = den
        partial["se_replica"] = se
        return partial

    def merge(self, partial: dict) -> None:
        self.n += partial["n"]
        self.signal += partial["signal"]
        self.cross += partial["cross"]
        self.genie.merge(partial["genie"])
        self.den_replicas.append(partial["den_replica"])
        self.se_replicas.append(partial["se_replica"])

    def finalize(self, noise_dl_w: float, prelog: float) -> tuple:
        mean_a = self.signal / self.n
        mean_q = self.cross / self.n
        num = np.abs(mean_a) ** 2
        den = mean_q.sum(axis=1) - num + noise_dl_w
        bad = (den <= 0) & (num > 0)
        if np.any(bad):
            reps = np.stack(self.den_replicas)
            stderr = np.nanstd(reps, axis=0, ddof=1) / np.sqrt(reps.shape[0])
            if np.any(bad & (np.abs(den) > 3.0 * stderr)):
                raise NumericError("negative downlink denominator beyond 3 standard errors")
            den = np.where(bad, 1e-15, den)
        sinr = _safe_ratio(num, den)
        return se_from_sinr(sinr, prelog), _replica_stderr(self.se_replicas)

    def finalize_genie(self, prelog: float) -> tuple:
        return self.genie.finalize(prelog)


def _safe_ratio_batch(num, den):
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _replica_stderr(replicas: list) -> np.ndarray:
    reps = np.stack(replicas)
    if reps.shape[0] < 2:
        return np.full(reps.shape[1], np.nan)
    valid = np.sum(~np.isnan(reps), axis=0)
    with np.errstate(invalid="ignore"):
        stderr = np.nanstd(reps, axis=0, ddof=1) / np.sqrt(np.maximum(valid, 1))
    stderr[valid < 2] = np.nan
    return stderr


# ---------------------------------------------------------------------------
# closed forms for MR (no sampling)
# ---------------------------------------------------------------------------

def ul_mr_closed_form_moments(ctx) -> UatfMoments:
    """The use-and-then-forget moments under MR combining, in closed form.

    signal[k] = norm[k] = sum_{l in M_k} tr(B_kl) with B the estimate
    covariance; cross[k, i] adds to the trace term a coherent part for UEs
    sharing UE k's pilot.
    """
    K, L = ctx.topology.beta.shape
    serves = ctx.assignment.serves
    R = ctx.topology.R
    B = ctx.B
    pilot_of = ctx.pilot_of
    tau_p = ctx.cfg.pilot_len
    p = ctx.ul_power

    signal = np.zeros(K)
    cross = np.zeros((K, K))
    for k in range(K):
        aps = np.flatnonzero(serves[:, k])
        signal[k] = np.real(np.einsum("lmm->", B[k, aps]))
        # noncoherent: sum_l tr(R_il B_kl)
        cross[k] = np.real(np.einsum("ilmn,lnm->i", R[:, aps], B[k, aps]))
        # coherent addition for pilot sharers: p_k p_i tau_p^2 |sum_l tr(R_il psi^-1 R_kl)|^2
        coh = np.einsum("ilmn,lnm->i", R[:, aps], ctx.psi_inv_R[k, aps])
        sharers = pilot_of == pilot_of[k]
        cross[k, sharers] += (p[k] * p[sharers] * tau_p**2) * np.abs(coh[sharers]) ** 2
    return UatfMoments(signal.astype(complex), cross, signal.copy())


def ul_se_mr_closed_form(ctx, prelog: float) -> np.ndarray:
    moments = ul_mr_closed_form_moments(ctx)
    return se_from_sinr(uatf_sinr(moments, ctx.ul_power, ctx.cfg.noise_ul_w), prelog)


def dl_mr_closed_form_terms(ctx, rho_per_ap: np.ndarray) -> tuple:
    """Closed-form hardening-bound terms under per-AP-normalized MR precoding.

    Returns (signal_mean, second_moment) with powers folded in:
    signal_mean[k] = E{h_k^H D_k w_k}, second_moment[k, i] = E{|h_k^H D_i w_i|^2}.
    """
    K, L = ctx.topology.beta.shape
    serves = ctx.assignment.serves
    R = ctx.topology.R
    pilot_of = ctx.pilot_of
    tau_p = ctx.cfg.pilot_len
    p = ctx.ul_power
    # unpowered estimate covariance B0 = R psi^-1 R and its traces
    B0 = ctx.B / (p * tau_p)[:, None, None, None]
    trB0 = np.real(np.trace(B0, axis1=-2, axis2=-1))  # (K, L)

    signal = np.zeros(K)
    second = np.zeros((K, K))
    for i in range(K):
        aps = np.flatnonzero(serves[:, i])
        rho_il = rho_per_ap[i, aps]
        # E{h_i^H D_i w_i} contribution (used when i is the target UE)
        signal[i] = np.sum(np.sqrt(rho_il * p[i] * tau_p * trB0[i, aps]))
        # noncoherent term toward every UE k: rho_il tr(B0_il R_kl) / tr(B0_il)
        frac = np.real(np.einsum("lmn,klnm->kl", B0[i, aps], R[:, aps]))
        second[:, i] = frac @ (rho_il / trB0[i, aps])
        # coherent term for pilot sharers of UE i
        sharers = np.flatnonzero(pilot_of == pilot_of[i])
        weights = np.sqrt(rho_il * p[sharers, None] * tau_p / trB0[i, aps][None, :])
        cross_tr = np.einsum("klmn,lnm->kl", R[sharers][:, aps], ctx.psi_inv_R[i, aps])
        second[sharers, i] += np.abs(np.sum(weights * cross_tr, axis=1)) ** 2
    return signal, second


def dl_se_mr_closed_form(ctx, rho_per_ap: np.ndarray, prelog: float) -> np.ndarray:
    signal, second = dl_mr_closed_form_terms(ctx, rho_per_ap)
    num = signal**2
    den = second.sum(axis=1) - num + ctx.cfg.noise_dl_w
    return se_from_sinr(_safe_ratio(num, den), prelog)


def cdf_statistics(values) -> tuple:
    """Sorted samples, empirical CDF levels i/n, and the arithmetic mean."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty value list")
    ordered = np.sort(values)
    levels = np.arange(1, ordered.size + 1) / ordered.size
    return ordered, levels, float(np.mean(ordered))
