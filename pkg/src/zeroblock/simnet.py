"""Deterministic discrete-event simulator.

Every miner runs one of the step functions from :mod:`zeroblock.protocol`.
The engine owns the clock, a single seeded ``random.Random``, the event
heap and the trace.  Events at equal times run in insertion order.
"""

from dataclasses import dataclass, field
import heapq
import logging
import math
import random

from .chain import Chain, Kind, make_genesis
from .mining import (
    DEFAULT_AVT_NET,
    DEFAULT_IPT,
    SIM_TARGET,
    MatSchedule,
    Target,
    adjust_difficulty,
    search_nonce,
)
from .protocol import (
    AGAINST_ZEROBLOCK,
    POLICY_MODES,
    Accept,
    AdoptChain,
    BlockArrival,
    Broadcast,
    GenerateDummy,
    MatExpiry,
    MinerState,
    PoWSuccess,
    Reject,
    RevealPrivate,
    SelfishState,
    StartMining,
    StopMining,
    Withhold,
    honest_step,
    selfish_step,
)

log = logging.getLogger(__name__)

HONEST = "honest"
SELFISH = "selfish"
MAX_SELFISH_SHARE = 0.49


class ConfigError(ValueError):
    pass


# --- propagation -------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    delay: float


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float


@dataclass(frozen=True)
class Empirical:
    """Delays drawn uniformly from a table of observed values."""

    samples: tuple


def model_bounds(model):
    if isinstance(model, Constant):
        return model.delay, model.delay
    if isinstance(model, Uniform):
        return model.lo, model.hi
    if isinstance(model, Empirical):
        return min(model.samples), max(model.samples)
    raise ConfigError(f"unknown propagation model {model!r}")


def propagation_delay(model, rng: random.Random) -> float:
    if isinstance(model, Constant):
        return model.delay
    if isinstance(model, Uniform):
        return rng.uniform(model.lo, model.hi)
    if isinstance(model, Empirical):
        return model.samples[rng.randrange(len(model.samples))]
    raise ConfigError(f"unknown propagation model {model!r}")


# Upper end of uniform delays that makes two equal pools fork 1.69% of the
# time at avt_net = 600 s (see analytics.accidental_fork_probability).
CALIBRATED_DELAY_CAP = 41.0
DEFAULT_PROPAGATION = Uniform(0.0, CALIBRATED_DELAY_CAP)


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class MinerSpec:
    id: str
    role: str
    share: float
    skew: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    miners: tuple
    avt_net: float = DEFAULT_AVT_NET
    ipt: float = DEFAULT_IPT
    propagation: object = DEFAULT_PROPAGATION
    zeroblock_enabled: bool = True
    forced_gamma: float | None = None
    blocks: int | None = None
    seconds: float | None = None
    seed: int = 0
    difficulty_epoch: int = 0
    initial_difficulty: float = 1.0
    backend: str = "stochastic"
    target: Target = SIM_TARGET
    policy_mode: str = AGAINST_ZEROBLOCK
    selfish_private_dummies: bool = False
    mine_until_boundary: bool = False
    allow_majority_adversary: bool = False

    def validate(self):
        if not self.miners:
            raise ConfigError("at least one miner is required")
        ids = [m.id for m in self.miners]
        if len(set(ids)) != len(ids):
            raise ConfigError("miner ids must be unique")
        for m in self.miners:
            if not m.id or any(c in m.id for c in ",;|=:\n") or m.id == "-":
                raise ConfigError(f"invalid miner id {m.id!r}")
            if m.role not in (HONEST, SELFISH):
                raise ConfigError(f"miner {m.id}: unknown role {m.role!r}")
            if not 0 <= m.share <= 1:
                raise ConfigError(f"miner {m.id}: share must be in [0, 1]")
            if m.skew and not self.zeroblock_enabled:
                raise ConfigError("clock skew only applies with zeroblock enabled")
        if abs(sum(m.share for m in self.miners) - 1.0) > 1e-9:
            raise ConfigError("hash-power shares must sum to 1")
        selfish = [m for m in self.miners if m.role == SELFISH]
        if len(selfish) > 1:
            raise ConfigError("at most one selfish miner (a cartel is one miner)")
        if not any(m.role == HONEST for m in self.miners):
            raise ConfigError("at least one honest miner is required")
        if selfish and selfish[0].share > MAX_SELFISH_SHARE and not self.allow_majority_adversary:
            raise ConfigError(f"selfish share {selfish[0].share} exceeds {MAX_SELFISH_SHARE}")
        if self.avt_net <= 0 or self.ipt < 0:
            raise ConfigError("avt_net must be positive and ipt non-negative")
        lo, hi = model_bounds(self.propagation)
        if lo < 0 or hi > self.ipt:
            raise ConfigError(f"propagation delays must lie in [0, ipt={self.ipt}]")
        if self.forced_gamma is not None and not 0 <= self.forced_gamma <= 1:
            raise ConfigError("forced_gamma must be in [0, 1]")
        if self.blocks is None and self.seconds is None:
            raise ConfigError("a horizon (blocks or seconds) is required")
        if self.blocks is not None and self.blocks < 1:
            raise ConfigError("blocks must be positive")
        if self.seconds is not None and self.seconds <= 0:
            raise ConfigError("seconds must be positive")
        if self.difficulty_epoch < 0 or self.initial_difficulty <= 0:
            raise ConfigError("invalid difficulty settings")
        if self.backend not in ("stochastic", "hash"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.policy_mode not in POLICY_MODES:
            raise ConfigError(f"unknown policy mode {self.policy_mode!r}")
        return self

    @property
    def schedule(self) -> MatSchedule | None:
        return MatSchedule(self.avt_net, self.ipt) if self.zeroblock_enabled else None


# --- trace -------------------------------------------------------------------

GENESIS_ID = make_genesis().id


@dataclass
class SimTrace:
    """Time-ordered records ``(time, kind, miner, block_id, extra)``.

    ``block_id`` is raw bytes (or ``None``); serialization hex-encodes it.
    """

    records: list = field(default_factory=list)
    complete: bool = False

    def dumps(self) -> str:
        return "".join(format_record(r) + "\n" for r in self.records)

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            for r in self.records:
                fh.write(format_record(r))
                fh.write("\n")


def format_record(r) -> str:
    t, kind, miner, bid, extra = r
    return f"{t:.6f},{kind},{miner or '-'},{bid.hex() if bid else '-'},{extra}"


def parse_trace(text: str) -> SimTrace:
    trace = SimTrace()
    for n, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        parts = line.split(",", 4)
        if len(parts) != 5:
            raise ValueError(f"trace line {n}: expected 5 fields")
        t, kind, miner, bid, extra = parts
        trace.records.append((float(t), kind, None if miner == "-" else miner,
                              None if bid == "-" else bytes.fromhex(bid), extra))
        if kind == "end":
            trace.complete = extra == "complete=1"
    return trace


def read_trace(path) -> SimTrace:
    with open(path) as fh:
        return parse_trace(fh.read())


# --- engine ------------------------------------------------------------------

_MINT, _DELIVER, _BOUNDARY = 0, 1, 2


class Simulation:
    def __init__(self, config: SimConfig):
        self.cfg = config.validate()
        self.sched = config.schedule
        self.rng = random.Random(config.seed)
        self.trace = SimTrace()
        self.heap = []
        self.seq = 0
        self.now = 0.0
        self.difficulty = config.initial_difficulty
        self.specs = {m.id: m for m in config.miners}
        self.selfish_ids = {m.id for m in config.miners if m.role == SELFISH}
        self.states = {}
        self.tokens = {}
        self.mint_time = {}
        self.best_height = 0
        self.best_chain = Chain.genesis()
        self.next_retarget = config.difficulty_epoch or None
        for m in config.miners:
            if m.role == HONEST:
                self.states[m.id] = MinerState.initial(m.id, m.share, m.skew)
            else:
                self.states[m.id] = SelfishState.initial(
                    m.id, m.share, config.policy_mode, config.selfish_private_dummies)
            self.tokens[m.id] = 0
        if config.backend == "hash":
            # trials/s for the whole network so that expected block time is avt_net
            self.net_trials = 1.0 / (float(config.target.probability) * config.avt_net)

    # queue ---------------------------------------------------------------

    def push(self, time, kind, a=None, b=None, c=None):
        self.seq += 1
        heapq.heappush(self.heap, (time, self.seq, kind, a, b, c))

    def record(self, kind, miner, bid, extra=""):
        self.trace.records.append((self.now, kind, miner, bid, extra))

    # mining ----------------------------------------------------------------

    def _window_end(self, mid):
        if self.sched is None:
            return math.inf
        s = self.states[mid]
        spec = self.specs[mid]
        if self.cfg.mine_until_boundary:
            return self.sched.boundary(s.index) + spec.skew
        return self.sched.window_end(s.index) + spec.skew

    def start_mining(self, mid, chain):
        self.tokens[mid] += 1
        share = self.specs[mid].share
        if share <= 0:
            return
        end = self._window_end(mid)
        if self.now >= end:
            return
        if self.cfg.backend == "stochastic":
            rate = share / (self.cfg.avt_net * self.difficulty)
            when = self.now + self.rng.expovariate(rate)
            if when < end:
                self.push(when, _MINT, mid, self.tokens[mid], None)
            return
        trial_rate = share * self.net_trials / self.difficulty
        start = self.rng.getrandbits(62)
        budget = None if end == math.inf else int((end - self.now) * trial_rate)
        if budget == 0:
            return
        nonce, trials = search_nonce(chain.head.id, self.cfg.target, start, budget)
        if nonce is not None:
            when = self.now + trials / trial_rate
            if when < end:
                self.push(when, _MINT, mid, self.tokens[mid], nonce)

    # event handling ---------------------------------------------------------

    def step(self, mid, event):
        s = self.states[mid]
        if mid in self.selfish_ids:
            new, actions = selfish_step(s, event, self.cfg.target)
        else:
            new, actions = honest_step(s, event, self.sched, self.cfg.target,
                                       mine_until_boundary=self.cfg.mine_until_boundary)
        self.states[mid] = new
        self.apply(mid, s, new, actions)

    def apply(self, mid, old, new, actions):
        honest = mid not in self.selfish_ids
        for act in actions:
            if isinstance(act, StartMining):
                self.start_mining(mid, act.head)
            elif isinstance(act, StopMining):
                self.tokens[mid] += 1
            elif isinstance(act, Broadcast):
                self.broadcast(mid, act.chain)
            elif isinstance(act, RevealPrivate):
                self.record("reveal", mid, act.chain.head.id, f"prefix={act.prefix_length}")
                self.broadcast(mid, act.chain)
            elif isinstance(act, Accept):
                self.record("accept", mid, act.block.id, "")
            elif isinstance(act, Reject):
                self.record("reject", mid, act.block.id, f"reason={act.reason.value}")
            elif isinstance(act, GenerateDummy):
                b = act.block
                self.record("dummy", mid, b.id, f"parent={b.parent.hex()};mat={b.mat_index}")
            elif isinstance(act, (AdoptChain, Withhold)):
                pass
        if honest:
            chain = new.local_chain
            if chain.standard_height > self.best_height:
                self.best_height = chain.standard_height
                self.best_chain = chain
                if self.next_retarget and self.best_height >= self.next_retarget:
                    self.retarget(chain)

    def broadcast(self, mid, chain):
        self.record("broadcast", mid, chain.head.id, f"std={chain.standard_height}")
        for other in self.specs:
            if other != mid:
                delay = propagation_delay(self.cfg.propagation, self.rng)
                self.push(self.now + delay, _DELIVER, other, chain, mid)

    def on_mint(self, mid, token, nonce):
        if token != self.tokens[mid]:
            return
        s = self.states[mid]
        before = s.local_chain if mid not in self.selfish_ids else s.private_chain
        if nonce is None:
            nonce, _ = search_nonce(before.head.id, self.cfg.target, self.rng.getrandbits(62))
        mark = len(self.trace.records)
        self.step(mid, PoWSuccess(nonce, self.now))
        s = self.states[mid]
        after = s.local_chain if mid not in self.selfish_ids else s.private_chain
        b = after.head
        if after is not before and b.kind is Kind.STANDARD and b.creator == mid:
            self.mint_time[b.id] = self.now
            # the mint precedes the broadcast/reveal records the step produced
            self.trace.records.insert(mark, (
                self.now, "mint", mid, b.id, f"parent={b.parent.hex()};mat={b.mat_index}"))

    def on_deliver(self, mid, chain, sender):
        self.record("deliver", mid, chain.head.id, f"from={sender}")
        tie = False
        gamma = self.cfg.forced_gamma
        s = self.states[mid]
        if gamma is not None and mid not in self.selfish_ids:
            local = s.local_chain
            if (chain.standard_height == local.standard_height
                    and chain.head.id != local.head.id and local.head.creator != mid):
                inc_adv = chain.head.creator in self.selfish_ids
                loc_adv = local.head.creator in self.selfish_ids
                if inc_adv and not loc_adv:
                    tie = self.rng.random() < gamma
                elif loc_adv and not inc_adv:
                    tie = self.rng.random() >= gamma
        self.step(mid, BlockArrival(chain, self.now, tie))

    def on_boundary(self, mid, index):
        self.step(mid, MatExpiry(index, self.now))
        spec = self.specs[mid]
        self.push(self.sched.boundary(index + 1) + spec.skew, _BOUNDARY, mid, index + 1, None)

    def retarget(self, chain):
        epoch = self.cfg.difficulty_epoch
        times = []
        node = chain
        while node is not None and len(times) < epoch + 1:
            if node.head.is_standard:
                # the block whose mint triggered this retarget has no recorded time yet
                times.append(self.mint_time.get(node.head.id, self.now))
            node = node.prev
        times.reverse()
        if len(times) == epoch + 1:
            start, recent = times[0], times[1:]
        else:
            start, recent = 0.0, times
        old = self.difficulty
        self.difficulty = adjust_difficulty(recent, old, epoch, epoch_start=start,
                                            avt_net=self.cfg.avt_net)
        self.next_retarget += epoch
        self.record("retarget", None, None, f"difficulty={self.difficulty:.9g}")
        for mid, s in self.states.items():
            if self._mining(mid):
                head = s.local_chain if mid not in self.selfish_ids else s.private_chain
                self.start_mining(mid, head)

    def _mining(self, mid):
        # a pending mint exists iff the newest token was scheduled; re-draw is memoryless
        return any(e[2] == _MINT and e[3] == mid and e[4] == self.tokens[mid] for e in self.heap)

    # main loop ---------------------------------------------------------------

    def run(self) -> SimTrace:
        cfg = self.cfg
        meta = ";".join([
            "miners=" + "|".join(f"{m.id}:{m.role}:{m.share!r}" for m in cfg.miners),
            f"avt_net={cfg.avt_net!r}", f"ipt={cfg.ipt!r}",
            f"delay_cap={model_bounds(cfg.propagation)[1]!r}",
            f"zeroblock={int(cfg.zeroblock_enabled)}", f"seed={cfg.seed}",
        ])
        self.record("meta", None, None, meta)
        for mid in self.specs:
            s = self.states[mid]
            head = s.local_chain if mid not in self.selfish_ids else s.private_chain
            self.start_mining(mid, head)
            if self.sched is not None and (mid not in self.selfish_ids
                                           or cfg.policy_mode == AGAINST_ZEROBLOCK):
                self.push(self.sched.boundary(1) + self.specs[mid].skew, _BOUNDARY, mid, 1, None)
        horizon_t = cfg.seconds if cfg.seconds is not None else math.inf
        horizon_b = cfg.blocks if cfg.blocks is not None else math.inf
        heap = self.heap
        while heap:
            if self.best_height >= horizon_b:
                break
            if heap[0][0] > horizon_t:
                break
            time, _, kind, a, b, c = heapq.heappop(heap)
            self.now = time
            if kind == _MINT:
                self.on_mint(a, b, c)
            elif kind == _DELIVER:
                self.on_deliver(a, b, c)
            else:
                self.on_boundary(a, b)
        if cfg.seconds is not None and self.now < cfg.seconds and not heap:
            self.now = cfg.seconds
        for mid in self.specs:
            s = self.states[mid]
            head = s.local_chain if mid not in self.selfish_ids else s.private_chain
            self.record("head", mid, head.head.id, f"std={head.standard_height}")
        self.record("end", None, None, "complete=1")
        self.trace.complete = True
        return self.trace


def run(config: SimConfig) -> SimTrace:
    return Simulation(config).run()
