"""Scenario files: flat ``key = value`` lines, ``#`` starts a comment.

Miners are given one per line as ``miner = id,role,share[,skew]``.  A
minimal file::

    name = honest-pair
    seed = 1
    zeroblock = true
    blocks = 1000
    miner = a,honest,0.5
    miner = b,honest,0.5
"""

from dataclasses import dataclass, replace
from importlib import resources

from .mining import Target
from .simnet import ConfigError, Constant, Empirical, MinerSpec, SimConfig, Uniform

REQUIRED = ("name", "seed", "zeroblock")


class ScenarioError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, source: str = "<scenario>"):
        where = f"{source}:{lineno}" if lineno else source
        super().__init__(f"{where}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Scenario:
    name: str
    config: SimConfig
    reps: int = 1

    def run_config(self, run_index: int) -> SimConfig:
        """Config for repetition ``run_index``; seeds are ``seed + run_index``."""
        return replace(self.config, seed=self.config.seed + run_index)

    def with_overrides(self, seed: int | None = None, reps: int | None = None,
                       blocks: int | None = None) -> "Scenario":
        cfg = self.config
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if blocks is not None:
            cfg = replace(cfg, blocks=blocks, seconds=None)
        if reps is not None and reps < 1:
            raise ScenarioError("reps must be at least 1")
        return Scenario(self.name, cfg.validate(), reps if reps is not None else self.reps)


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _propagation(v: str):
    kind, *args = v.split()
    nums = [float(a) for a in args]
    if kind == "constant" and len(nums) == 1:
        return Constant(nums[0])
    if kind == "uniform" and len(nums) == 2:
        return Uniform(nums[0], nums[1])
    if kind == "empirical" and nums:
        return Empirical(tuple(nums))
    raise ValueError(f"bad propagation model {v!r} (constant D | uniform LO HI | empirical D...)")


def _optional_float(v: str):
    return None if v.lower() == "none" else float(v)


def _target(v: str) -> Target:
    value, _, width = v.partition("/")
    return Target(int(value), int(width or 256))


# key -> (SimConfig field, converter)
_FIELDS = {
    "blocks": ("blocks", int),
    "seconds": ("seconds", float),
    "avt_net": ("avt_net", float),
    "ipt": ("ipt", float),
    "zeroblock": ("zeroblock_enabled", _bool),
    "forced_gamma": ("forced_gamma", _optional_float),
    "propagation": ("propagation", _propagation),
    "backend": ("backend", str),
    "policy": ("policy_mode", str),
    "difficulty_epoch": ("difficulty_epoch", int),
    "initial_difficulty": ("initial_difficulty", float),
    "target": ("target", _target),
    "selfish_private_dummies": ("selfish_private_dummies", _bool),
    "mine_until_boundary": ("mine_until_boundary", _bool),
    "allow_majority_adversary": ("allow_majority_adversary", _bool),
}


def _miner(v: str) -> MinerSpec:
    parts = [p.strip() for p in v.split(",")]
    if len(parts) not in (3, 4):
        raise ValueError("expected id,role,share[,skew]")
    skew = float(parts[3]) if len(parts) == 4 else 0.0
    return MinerSpec(parts[0], parts[1], float(parts[2]), skew)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    values = {}
    first_line = {}
    miners = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ScenarioError("expected key = value", lineno, source)
        try:
            if key == "miner":
                miners.append(_miner(value))
                first_line.setdefault("miner", lineno)
                continue
            if key in values:
                raise ValueError(f"duplicate key {key!r}")
            if key == "name":
                values[key] = value
            elif key in ("seed", "reps"):
                values[key] = int(value)
            elif key in _FIELDS:
                values[key] = _FIELDS[key][1](value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ScenarioError(str(exc), lineno, source) from None
        first_line[key] = lineno
    missing = [k for k in REQUIRED if k not in values]
    if not miners:
        missing.append("miner")
    if "blocks" not in values and "seconds" not in values:
        missing.append("blocks or seconds")
    if missing:
        raise ScenarioError("missing " + ", ".join(missing), None, source)
    reps = values.pop("reps", 1)
    if reps < 1:
        raise ScenarioError("reps must be at least 1", first_line["reps"], source)
    kwargs = {_FIELDS[k][0]: v for k, v in values.items() if k in _FIELDS}
    try:
        cfg = SimConfig(miners=tuple(miners), seed=values["seed"], **kwargs).validate()
    except (ConfigError, ValueError) as exc:
        raise ScenarioError(str(exc), None, source) from None
    return Scenario(values["name"], cfg, reps)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read(), str(path))


def bundled_scenarios() -> list:
    """Names of the scenario files shipped with the package."""
    files = resources.files("zeroblock") / "scenarios"
    return sorted(p.name for p in files.iterdir() if p.name.endswith(".cfg"))


def bundled_path(name: str):
    return resources.files("zeroblock") / "scenarios" / name
