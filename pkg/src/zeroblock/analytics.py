"""Closed-form probabilities and trace statistics.

The trace functions work on :class:`~zeroblock.simnet.SimTrace` objects,
whether produced in memory or parsed back from a trace file.
"""

from collections import defaultdict
from dataclasses import dataclass, field
import csv
import io
import math
import random

from .simnet import GENESIS_ID, HONEST, SELFISH, Constant, Empirical, Uniform

# --- closed forms -----------------------------------------------------------


def selfish_threshold_lower(gamma: float) -> float:
    """Smallest profitable withholding share for tie-routing fraction ``gamma``."""
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must be in [0, 1]")
    return (1 - gamma) / (3 - 2 * gamma)


def poisson_pmf(rho: int, lam: float) -> float:
    if rho < 0 or lam <= 0:
        raise ValueError("need rho >= 0 and lambda > 0")
    return math.exp(rho * math.log(lam) - lam - math.lgamma(rho + 1))


def event4_max_probability(sp: float) -> float:
    """Bound on a selfish-then-honest pair inside one expected-block window.

    Evaluated exactly as the bound is stated: the product of the two
    single-discovery Poisson terms, times ``sp``.
    """
    if not 0 <= sp < 1:
        raise ValueError("sp must be in [0, 1)")
    hp = 1 - sp
    return (sp * math.exp(-sp)) * (hp * math.exp(-hp)) * sp


def event4_monte_carlo(sp: float, trials: int = 200_000, seed: int = 0) -> float:
    """Frequency of "selfish discovers first, an honest block follows" within
    one expected-block window (total rate 1 per window)."""
    rng = random.Random(seed)
    hp = 1 - sp
    hits = 0
    for _ in range(trials):
        ts = rng.expovariate(sp)
        if ts >= 1:
            continue
        th = rng.expovariate(hp)
        if ts < th < 1:
            hits += 1
    return hits / trials


def event4_exact_pattern(sp: float) -> float:
    """Closed form of the pattern counted by :func:`event4_monte_carlo`."""
    hp = 1 - sp
    # integral_0^1 sp e^{-sp t} (e^{-hp t} - e^{-hp}) dt, with sp + hp = 1
    return sp * (1 - math.exp(-1)) - math.exp(-hp) * (1 - math.exp(-sp))


def accidental_fork_probability(model, other_share: float, avt_net: float = 600.0) -> float:
    """Chance that the rest of the network (``other_share`` of hash power)
    finds a competing block before a fresh block reaches it."""
    r = other_share / avt_net
    if isinstance(model, Constant):
        return 1 - math.exp(-r * model.delay)
    if isinstance(model, Uniform):
        if model.hi == model.lo:
            return 1 - math.exp(-r * model.lo)
        width = model.hi - model.lo
        return 1 - (math.exp(-r * model.lo) - math.exp(-r * model.hi)) / (r * width)
    if isinstance(model, Empirical):
        return 1 - sum(math.exp(-r * d) for d in model.samples) / len(model.samples)
    raise ValueError(f"unknown propagation model {model!r}")


# --- trace statistics ---------------------------------------------------------

def _kv(extra: str) -> dict:
    return dict(p.split("=", 1) for p in extra.split(";") if "=" in p)


@dataclass
class TraceIndex:
    miners: dict                 # id -> (role, share)
    meta: dict
    parent: dict                 # block id -> parent id
    mat: dict
    creator: dict                # standard block id -> miner
    minted: dict                 # standard block id -> mint time
    published: dict              # block id -> first publication time
    accepted: set                # blocks held by some honest miner
    heads: dict                  # miner -> final head id
    reveals: int = 0
    complete: bool = False

    def chain_ids(self, head: bytes) -> list:
        out = []
        while head is not None and head != GENESIS_ID:
            out.append(head)
            head = self.parent.get(head)
        return out


def index_trace(trace) -> TraceIndex:
    meta = {}
    miners = {}
    parent, mat, creator, minted, published = {}, {}, {}, {}, {}
    accepted = set()
    heads = {}
    reveals = 0
    complete = False
    for t, kind, miner, bid, extra in trace.records:
        if kind == "mint" or kind == "dummy":
            kv = _kv(extra)
            parent[bid] = bytes.fromhex(kv["parent"])
            mat[bid] = int(kv["mat"])
            if kind == "mint":
                creator[bid] = miner
                minted[bid] = t
                if miners[miner][0] == HONEST:
                    accepted.add(bid)
        elif kind == "accept":
            if miners[miner][0] == HONEST:
                accepted.add(bid)
        elif kind == "broadcast":
            node = bid
            while node in parent and node not in published:
                published[node] = t
                node = parent[node]
        elif kind == "reveal":
            reveals += 1
        elif kind == "head":
            heads[miner] = bid
        elif kind == "meta":
            meta = _kv(extra)
            for item in meta.get("miners", "").split("|"):
                mid, role, share = item.split(":")
                miners[mid] = (role, float(share))
        elif kind == "end":
            complete = extra == "complete=1"
    return TraceIndex(miners, meta, parent, mat, creator, minted, published, accepted,
                      heads, reveals, complete)


def final_chain(ix: TraceIndex) -> list:
    """Block ids of the chain held by the largest share of honest hash power."""
    weight = defaultdict(float)
    for mid, head in ix.heads.items():
        role, share = ix.miners[mid]
        if role == HONEST:
            weight[head] += share
    if not weight:
        return []
    best = max(weight, key=lambda h: (weight[h], sum(1 for b in ix.chain_ids(h) if b in ix.creator), h))
    return ix.chain_ids(best)


@dataclass
class MinerRevenue:
    miner: str
    role: str
    hash_power: float
    minted: int = 0
    in_chain: int = 0
    orphaned: int = 0
    rejected: int = 0
    share: float = 0.0


@dataclass
class RevenueReport:
    miners: list = field(default_factory=list)
    total_in_chain: int = 0
    total_minted: int = 0
    accidental_forks: int = 0
    intentional_forks: int = 0
    partial: bool = False

    @property
    def fork_rate(self) -> float:
        return self.accidental_forks / self.total_in_chain if self.total_in_chain else 0.0

    def share_of(self, miner: str) -> float:
        for m in self.miners:
            if m.miner == miner:
                return m.share
        raise KeyError(miner)

    def selfish_share(self) -> float:
        return sum(m.share for m in self.miners if m.role == SELFISH)


def _accidental_forks(ix: TraceIndex, window: float) -> int:
    children = defaultdict(list)
    for bid, who in ix.creator.items():
        if ix.miners[who][0] == HONEST and bid in ix.published:
            children[ix.parent[bid]].append(ix.minted[bid])
    forks = 0
    for times in children.values():
        if len(times) < 2:
            continue
        times.sort()
        forks += sum(1 for a, b in zip(times, times[1:]) if b - a <= window)
    return forks


def revenue_shares(trace) -> RevenueReport:
    ix = trace if isinstance(trace, TraceIndex) else index_trace(trace)
    chain = set(final_chain(ix))
    per = {mid: MinerRevenue(mid, role, share) for mid, (role, share) in ix.miners.items()}
    for bid, who in ix.creator.items():
        r = per[who]
        r.minted += 1
        if bid in chain:
            r.in_chain += 1
        elif bid in ix.published and bid not in ix.accepted:
            r.rejected += 1
        else:
            r.orphaned += 1
    total = sum(r.in_chain for r in per.values())
    for r in per.values():
        r.share = r.in_chain / total if total else 0.0
    window = float(ix.meta.get("delay_cap", ix.meta.get("ipt", "60")))
    return RevenueReport(
        miners=list(per.values()),
        total_in_chain=total,
        total_minted=len(ix.creator),
        accidental_forks=_accidental_forks(ix, window),
        intentional_forks=ix.reveals,
        partial=not ix.complete,
    )


def fork_rate(trace) -> float:
    return revenue_shares(trace).fork_rate


def withheld_past_boundary(trace) -> set:
    """Selfish blocks first published after the end of their mat interval
    (or never published)."""
    ix = trace if isinstance(trace, TraceIndex) else index_trace(trace)
    mat_len = float(ix.meta["avt_net"]) + float(ix.meta["ipt"])
    out = set()
    for bid, who in ix.creator.items():
        if ix.miners[who][0] != SELFISH:
            continue
        end = ix.mat[bid] * mat_len
        if ix.published.get(bid, math.inf) >= end:
            out.add(bid)
    return out


def withheld_in_honest_chains(trace) -> int:
    """How many withheld-past-boundary blocks sit in some honest miner's final chain."""
    ix = trace if isinstance(trace, TraceIndex) else index_trace(trace)
    bad = withheld_past_boundary(ix)
    held = set()
    for mid, head in ix.heads.items():
        if ix.miners[mid][0] == HONEST:
            held.update(ix.chain_ids(head))
    return len(bad & held)


# --- report CSV -------------------------------------------------------------

REPORT_COLUMNS = ["miner", "role", "hash_power", "minted", "in_chain", "orphaned", "rejected",
                  "share", "accidental_forks", "intentional_forks", "fork_rate", "partial"]


def report_rows(report: RevenueReport) -> list:
    rows = []
    for m in report.miners:
        rows.append([m.miner, m.role, f"{m.hash_power:.6g}", m.minted, m.in_chain, m.orphaned,
                     m.rejected, f"{m.share:.6f}", "", "", "", ""])
    rows.append(["TOTAL", "", f"{sum(m.hash_power for m in report.miners):.6g}",
                 report.total_minted, report.total_in_chain,
                 sum(m.orphaned for m in report.miners), sum(m.rejected for m in report.miners),
                 f"{sum(m.share for m in report.miners):.6f}", report.accidental_forks,
                 report.intentional_forks, f"{report.fork_rate:.6f}", int(report.partial)])
    return rows


def report_csv(report: RevenueReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    w.writerows(report_rows(report))
    return buf.getvalue()


def parse_report_csv(text: str) -> list:
    return list(csv.DictReader(io.StringIO(text)))
