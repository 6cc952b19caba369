"""Monte-Carlo campaign orchestration and result emission.

A campaign runs num_setups independent network drops; each setup admits the
UEs once and then averages the SE bounds over num_realizations channel draws,
processed in batches. Channel and noise draws come from counter-based streams
keyed by (seed, setup, purpose, batch), so batches can run on any number of
threads - partial results are merged in batch order and outputs are
byte-identical regardless of parallelism. Downlink evaluation needs the
precoder normalization constants E{v^H D v}, which are Monte-Carlo means over
the whole setup, so it re-generates the same realizations in a second pass.
"""

import concurrent.futures
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import build_assignment
from .combining import (
    build_precoders_centralized,
    build_precoders_distributed,
    compute_combiners,
)
from .config import SimulationConfig
from .estimation import EstimationBundle, SetupContext
from .power import dl_centralized_equal, dl_distributed_proportional, ul_full_power
from .rng import CHANNEL, PILOT_NOISE, TOPOLOGY, stream
from .se import (
    DownlinkAccumulator,
    ErgodicLogAccumulator,
    UatfAccumulator,
    cdf_statistics,
    instantaneous_sinr,
)
from .topology import generate_topology, sample_channels


@dataclass
class SEEntry:
    se: np.ndarray
    stderr: np.ndarray


@dataclass
class SEReport:
    """Per-UE spectral efficiencies of one campaign.

    Arrays are indexed by the campaign-global UE id
    setup_index * num_ues + ue_index (the mapping is echoed in the metadata
    file).
    """

    seed: int
    config_hash: str
    num_setups: int
    ues_per_setup: int
    schemes: tuple
    directions: tuple
    mode: str
    entries: dict           # (scheme, direction) -> SEEntry
    assignments: list       # per-setup ClusterAssignment JSON strings
    config_lines: list

    def values(self, scheme: str, direction: str) -> np.ndarray:
        return self.entries[(scheme, direction)].se

    def mean(self, scheme: str, direction: str) -> float:
        return float(np.mean(self.values(scheme, direction)))

    def setup_means(self, scheme: str, direction: str) -> np.ndarray:
        per_ue = self.values(scheme, direction)
        return per_ue.reshape(self.num_setups, self.ues_per_setup).mean(axis=1)


def _batch_sizes(cfg: SimulationConfig) -> list:
    """Realization batches: bounded memory, and >= 16 batches when possible
    so the batch-means stderr has enough replicas."""
    n = cfg.num_realizations
    per_real = cfg.num_ues * cfg.num_aps * cfg.antennas_per_ap
    mem_cap = max(1, (1 << 22) // max(1, per_real))
    size = max(1, min(1024, mem_cap, -(-n // 16)))
    sizes = [size] * (n // size)
    if n % size:
        sizes.append(n % size)
    return sizes


def _norm_partial(v: np.ndarray) -> dict:
    return {
        "n": v.shape[0],
        "norm": np.sum(np.abs(v) ** 2, axis=(2, 3)).sum(axis=0),
        "norm_local": np.sum(np.abs(v) ** 2, axis=3).sum(axis=0),
    }


class _NormAccumulator:
    def __init__(self, num_ues, num_aps):
        self.n = 0
        self.norm = np.zeros(num_ues)
        self.norm_local = np.zeros((num_ues, num_aps))

    def merge(self, partial):
        self.n += partial["n"]
        self.norm += partial["norm"]
        self.norm_local += partial["norm_local"]


def run_campaign(cfg: SimulationConfig, threads: int = 1) -> SEReport:
    """Run the full campaign described by cfg. Deterministic given the seed."""
    cfg.validate()
    if cfg.num_realizations < 1:
        raise ValueError("no realizations (run.num_realizations must be >= 1)")
    need_ul = cfg.ul_data_len > 0
    need_dl = cfg.dl_data_len > 0
    directions = tuple(
        d for d, on in (("ul", need_ul), ("dl", need_dl),
                        ("dl_genie", need_dl and cfg.genie_dl)) if on
    )
    if not directions:
        raise ValueError("nothing to evaluate: both ul_data_len and dl_data_len are zero")

    K = cfg.num_ues
    total = cfg.num_setups * K
    entries = {
        (scheme, d): SEEntry(np.zeros(total), np.zeros(total))
        for scheme in cfg.schemes for d in directions
    }
    assignments = []
    for s in range(cfg.num_setups):
        setup_results = _run_setup(cfg, s, threads, need_ul, need_dl)
        assignments.append(setup_results.pop("assignment_json"))
        for key, (se, stderr) in setup_results.items():
            entries[key].se[s * K:(s + 1) * K] = se
            entries[key].stderr[s * K:(s + 1) * K] = stderr

    return SEReport(
        seed=cfg.seed,
        config_hash=cfg.config_hash(),
        num_setups=cfg.num_setups,
        ues_per_setup=K,
        schemes=cfg.schemes,
        directions=directions,
        mode=cfg.mode,
        entries=entries,
        assignments=assignments,
        config_lines=cfg.to_lines(),
    )


def _run_setup(cfg: SimulationConfig, s: int, threads: int,
               need_ul: bool, need_dl: bool) -> dict:
    topology = generate_topology(cfg, stream(cfg.seed, s, TOPOLOGY))
    assignment = build_assignment(cfg, topology)
    p = ul_full_power(cfg)
    ctx = SetupContext(topology, assignment, p, cfg)
    sizes = _batch_sizes(cfg)
    prelog_ul = cfg.ul_data_len / cfg.coherence_len
    prelog_dl = cfg.dl_data_len / cfg.coherence_len
    centralized = cfg.mode == "centralized"
    K, L = cfg.num_ues, cfg.num_aps

    def realizations(b):
        h = sample_channels(topology, stream(cfg.seed, s, CHANNEL, b), sizes[b])
        bundle = EstimationBundle(ctx, h, stream(cfg.seed, s, PILOT_NOISE, b))
        return h, bundle

    def pass1(b):
        h, bundle = realizations(b)
        if centralized and need_ul:
            bundle.ensure_all()
        out = {}
        for scheme in cfg.schemes:
            v = compute_combiners(scheme, bundle)
            entry = {}
            if centralized:
                if need_ul:
                    sinr = instantaneous_sinr(v, bundle, p)
                    entry["ul"] = ErgodicLogAccumulator.batch_partial(sinr)
                if need_dl:
                    entry["norm"] = _norm_partial(v)
            else:
                entry["uatf"] = UatfAccumulator.batch_partial(
                    v, h, p, cfg.noise_ul_w, prelog_ul
                )
            out[scheme] = entry
        return out

    ul_acc = {}
    norm_acc = {}
    for scheme in cfg.schemes:
        if centralized:
            ul_acc[scheme] = ErgodicLogAccumulator(K)
            norm_acc[scheme] = _NormAccumulator(K, L)
        else:
            ul_acc[scheme] = UatfAccumulator(K, L)

    for partial in _map_batches(_with_context(pass1, s), len(sizes), threads):
        for scheme, entry in partial.items():
            if "ul" in entry:
                ul_acc[scheme].merge(entry["ul"])
            if "norm" in entry:
                norm_acc[scheme].merge(entry["norm"])
            if "uatf" in entry:
                ul_acc[scheme].merge(entry["uatf"])

    results = {"assignment_json": assignment.to_json()}
    for scheme in cfg.schemes:
        if need_ul:
            try:
                if centralized:
                    results[(scheme, "ul")] = ul_acc[scheme].finalize(prelog_ul)
                else:
                    results[(scheme, "ul")] = ul_acc[scheme].finalize(
                        p, cfg.noise_ul_w, prelog_ul
                    )
            except Exception as exc:
                exc.args = (f"setup {s}, scheme {scheme}: {exc}",) + exc.args[1:]
                raise

    if need_dl:
        rho_central = dl_centralized_equal(cfg)
        rho_dist = dl_distributed_proportional(assignment, topology, cfg)
        global_norm = {}
        for scheme in cfg.schemes:
            acc = norm_acc[scheme] if centralized else ul_acc[scheme]
            global_norm[scheme] = (acc.norm / acc.n, acc.norm_local / acc.n)

        def pass2(b):
            h, bundle = realizations(b)
            out = {}
            for scheme in cfg.schemes:
                v = compute_combiners(scheme, bundle)
                batch = _norm_partial(v)
                if centralized:
                    wg = build_precoders_centralized(v, rho_central, global_norm[scheme][0])
                    wb = build_precoders_centralized(v, rho_central, batch["norm"] / batch["n"])
                else:
                    wg = build_precoders_distributed(v, rho_dist, global_norm[scheme][1])
                    wb = build_precoders_distributed(v, rho_dist, batch["norm_local"] / batch["n"])
                out[scheme] = DownlinkAccumulator.batch_partial(
                    wg, wb, h, cfg.noise_dl_w, prelog_dl
                )
            return out

        dl_acc = {scheme: DownlinkAccumulator(K) for scheme in cfg.schemes}
        for partial in _map_batches(_with_context(pass2, s), len(sizes), threads):
            for scheme, entry in partial.items():
                dl_acc[scheme].merge(entry)
        for scheme in cfg.schemes:
            results[(scheme, "dl")] = dl_acc[scheme].finalize(cfg.noise_dl_w, prelog_dl)
            if cfg.genie_dl:
                results[(scheme, "dl_genie")] = dl_acc[scheme].finalize_genie(prelog_dl)
    return results


def _map_batches(fn, count, threads):
    if threads <= 1 or count <= 1:
        for b in range(count):
            yield fn(b)
        return
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
        yield from ex.map(fn, range(count))


def _with_context(fn, setup: int):
    """Tag numerical failures with their (setup, batch) coordinates."""

    def wrapped(b):
        try:
            return fn(b)
        except Exception as exc:
            exc.args = (f"setup {setup}, batch {b}: {exc}",) + exc.args[1:]
            raise

    return wrapped


# ---------------------------------------------------------------------------
# result files
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def emit_results(report: SEReport, out_dir) -> None:
    """Write the per-UE table, per-curve CDF files, and campaign metadata.

    Identical reports produce identical bytes; every value is recomputable
    from the echoed config and seed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["ue,scheme,direction,se,stderr"]
    total = report.num_setups * report.ues_per_setup
    for ue in range(total):
        for scheme in report.schemes:
            for direction in report.directions:
                entry = report.entries[(scheme, direction)]
                lines.append(
                    f"{ue},{scheme},{direction},"
                    f"{_fmt(entry.se[ue])},{_fmt(entry.stderr[ue])}"
                )
    (out / "se_per_ue.csv").write_text("\n".join(lines) + "\n")

    for (scheme, direction), entry in report.entries.items():
        ordered, levels, _ = cdf_statistics(entry.se)
        rows = ["se,cdf"]
        rows.extend(f"{_fmt(v)},{_fmt(c)}" for v, c in zip(ordered, levels))
        (out / f"cdf_{direction}_{scheme}.csv").write_text("\n".join(rows) + "\n")

    meta = [
        "# campaign metadata",
        f"config_hash = {report.config_hash}",
        f"row_mapping = ue is setup_index * {report.ues_per_setup} + ue_index",
        "",
        "# config echo",
    ]
    meta.extend(report.config_lines)
    (out / "metadata.txt").write_text("\n".join(meta) + "\n")
    (out / "assignments.json").write_text(
        "[" + ",".join(report.assignments) + "]" + "\n"
    )
