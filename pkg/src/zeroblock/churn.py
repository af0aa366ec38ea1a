"""Joining the network: majority chain selection over a peer sample.

All closed forms use exact :class:`~fractions.Fraction` arithmetic over
big-integer binomials, so they can be compared to enumeration exactly.
"""

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from math import comb
import logging
import random

from .chain import Chain, chain_problem, make_genesis, make_standard

log = logging.getLogger(__name__)

MAJORITY = "majority"
HOMOGENEOUS_RETRY = "homogeneous-retry"
STRATEGIES = (MAJORITY, HOMOGENEOUS_RETRY)

# (eta, psi) rows of the reference table; n = 5000 peers, sigma = 8 sampled
TABLE_N = 5000
TABLE_SIGMA = 8
TABLE_ROWS = ((4750, 250), (4250, 750), (3750, 1250), (3250, 1750))


@dataclass(frozen=True)
class ChurnParams:
    n: int
    sigma: int
    eta: int
    psi: int

    def __post_init__(self):
        if min(self.n, self.sigma, self.eta, self.psi) < 0:
            raise ValueError("parameters must be non-negative")
        if self.eta + self.psi != self.n:
            raise ValueError(f"eta + psi = {self.eta + self.psi} but n = {self.n}")
        if not 1 <= self.sigma <= self.n:
            raise ValueError(f"sigma must be in [1, n={self.n}], got {self.sigma}")


def _hypergeom(p: ChurnParams, h: int) -> Fraction:
    """P(exactly ``h`` honest peers among ``sigma`` drawn without replacement)."""
    return Fraction(comb(p.eta, h) * comb(p.psi, p.sigma - h), comb(p.n, p.sigma))


def majority_threshold(sigma: int) -> int:
    """Fewest honest peers that form a strict majority of ``sigma``."""
    return sigma // 2 + 1


def join_majority_probability(p: ChurnParams) -> Fraction:
    """P(h >= floor(sigma/2) + 1), summed over every h up to ``sigma``."""
    return sum((_hypergeom(p, h) for h in range(majority_threshold(p.sigma), p.sigma + 1)),
               Fraction(0))


def homogeneous_probability(p: ChurnParams):
    """``(P_hom, P_hcorr, P_hnotc)``: all-same, all-honest and all-adversarial samples."""
    total = comb(p.n, p.sigma)
    correct = Fraction(comb(p.eta, p.sigma), total)
    not_correct = Fraction(comb(p.psi, p.sigma), total)
    return correct + not_correct, correct, not_correct


def retry_success_probability(p: ChurnParams, m: int) -> Fraction:
    """``(1 - P_hom)**m * P_hcorr``: m failed draws, then an all-honest one."""
    if m < 0:
        raise ValueError("m must be non-negative")
    hom, correct, _ = homogeneous_probability(p)
    return (1 - hom) ** m * correct


def table_rows(extra=()) -> list:
    """Reference rows plus any ``extra`` ChurnParams, as (params, probability)."""
    rows = [ChurnParams(TABLE_N, TABLE_SIGMA, eta, psi) for eta, psi in TABLE_ROWS]
    rows.extend(extra)
    return [(p, join_majority_probability(p)) for p in rows]


# --- join protocol ------------------------------------------------------------

@dataclass(frozen=True)
class JoinOutcome:
    chosen_chain: object        # None when inconclusive or a retry is needed
    strategy: str
    trials: int = 0
    honest_selected: int = 0
    excluded: tuple = ()        # (position, reason) of sampled chains that failed validation

    @property
    def retry(self) -> bool:
        return self.chosen_chain is None


def join_protocol(sampled_chains, strategy: str = MAJORITY, target=None, honest=None,
                  trials: int = 0) -> JoinOutcome:
    """Pick a chain from one round of peer samples.

    ``target`` enables validation of each sample; invalid samples are
    dropped.  ``honest`` is an optional set of head ids counted into
    ``honest_selected`` (bookkeeping only, the choice never uses it).
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown join strategy {strategy!r}")
    chains = []
    excluded = []
    for pos, c in enumerate(sampled_chains):
        problem = chain_problem(c, target) if target is not None else None
        if problem is not None:
            log.info("sample %d excluded: %s at block %d", pos, problem[1].value, problem[0])
            excluded.append((pos, problem[1]))
        else:
            chains.append(c)
    sigma = len(chains)
    h = sum(1 for c in chains if honest and c.head.id in honest)
    by_head = Counter(c.head.id for c in chains)
    chosen = None
    if sigma:
        head_id, count = by_head.most_common(1)[0]
        if strategy == MAJORITY:
            ok = count >= majority_threshold(sigma)
        else:
            ok = count == sigma
        if ok:
            chosen = next(c for c in chains if c.head.id == head_id)
    return JoinOutcome(chosen, strategy, trials, h, tuple(excluded))


def simulate_join(p: ChurnParams, strategy: str = MAJORITY, runs: int = 100_000, seed: int = 0,
                  max_trials: int = 10_000):
    """Monte Carlo join against ``p``: every honest peer serves one chain and
    every adversarial peer another.  Returns the fraction of joins that end
    on the honest chain and the mean number of retries."""
    g = Chain(make_genesis())
    honest_chain = Chain(make_standard(g.head, 1, 0, "honest"), g)
    adv_chain = Chain(make_standard(g.head, 1, 1, "adversary"), g)
    honest_ids = {honest_chain.head.id}
    rng = random.Random(seed)
    population = range(p.n)
    good = 0
    retries = 0
    for _ in range(runs):
        for trial in range(max_trials):
            picks = rng.sample(population, p.sigma)
            sample = [honest_chain if i < p.eta else adv_chain for i in picks]
            out = join_protocol(sample, strategy, honest=honest_ids, trials=trial)
            if not out.retry or strategy == MAJORITY:
                break
        retries += out.trials
        if out.chosen_chain is honest_chain:
            good += 1
    return good / runs, retries / runs
