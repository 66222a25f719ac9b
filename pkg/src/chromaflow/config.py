"""Run configuration: flat key=value files, strict key checking.

One RunConfig drives training, inference, evaluation and the ablation
harness. Unknown keys are rejected so typos fail loudly; CLI flags
override file values.
"""

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .losses import LossConfig
from .network import NetworkConfig


def _parse_bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _parse_d_set(v):
    if isinstance(v, (tuple, list)):
        return tuple(int(d) for d in v)
    return tuple(int(p) for p in str(v).split(",") if p.strip())


@dataclass
class RunConfig:
    # data
    scene: str | None = None
    train_manifest: str | None = None
    tau: int = 2
    stride: int = 1
    height: int = 64
    width: int = 64
    # network
    channels: int = 32
    spatial_windows: int = 4
    temporal_windows: int = 2
    heads: int = 4
    hist_cells: int = 8
    hist_l_bins: int = 8
    hist_a_bins: int = 16
    hist_b_bins: int = 16
    regions: int = 4
    kernel: int = 3
    use_histogram: bool = True
    use_flow: bool = True
    use_spatial_attn: bool = True
    use_temporal_attn: bool = True
    connection: str = "multiply"
    # priors / loss
    theta: float = 50.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    alpha: float = 9.0
    epsilon: float = 1e-3
    d_set: tuple = (1, 2)
    # optimizer
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    steps: int = 300
    checkpoint_every: int = 100
    seed: int = 0
    # io
    out: str = "runs/default"
    flow_source: str = "auto"  # auto | estimated | gt | dir
    flow_dir: str | None = None

    def __post_init__(self):
        self.d_set = _parse_d_set(self.d_set)
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.flow_source not in ("auto", "estimated", "gt", "dir"):
            raise ConfigError(f"unknown flow_source {self.flow_source!r}")
        if self.flow_source == "dir" and not self.flow_dir:
            raise ConfigError("flow_source=dir requires flow_dir=")
        self.network_config().validate()
        self.loss_config()

    def network_config(self):
        return NetworkConfig(
            channels=self.channels,
            tau=self.tau,
            height=self.height,
            width=self.width,
            s_spatial=self.spatial_windows,
            s_temporal=self.temporal_windows,
            heads=self.heads,
            hist_cells=self.hist_cells,
            hist_l_bins=self.hist_l_bins,
            hist_a_bins=self.hist_a_bins,
            hist_b_bins=self.hist_b_bins,
            regions=self.regions,
            kernel=self.kernel,
            theta=self.theta,
            use_histogram=self.use_histogram,
            use_flow=self.use_flow,
            use_spatial_attn=self.use_spatial_attn,
            use_temporal_attn=self.use_temporal_attn,
            connection=self.connection,
        )

    def loss_config(self):
        return LossConfig(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            alpha=self.alpha,
            epsilon=self.epsilon,
            d_set=self.d_set,
        )

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, values):
        parsers = _key_parsers()
        kwargs = {}
        for key, raw in values.items():
            if key not in parsers:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = parsers[key](raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides=None):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values = {}
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            values[k] = v
        values.update(overrides or {})
        return cls.from_dict(values)

    def write(self, path):
        lines = [f"{k}={v}" for k, v in self.to_dict().items() if v is not None]
        Path(path).write_text("\n".join(lines) + "\n")


_INT_KEYS = {
    "tau", "stride", "height", "width", "channels", "spatial_windows",
    "temporal_windows", "heads", "hist_cells", "hist_l_bins", "hist_a_bins",
    "hist_b_bins", "regions", "kernel", "steps", "checkpoint_every", "seed",
}
_FLOAT_KEYS = {"theta", "lambda1", "lambda2", "alpha", "epsilon", "lr", "beta1", "beta2"}
_BOOL_KEYS = {"use_histogram", "use_flow", "use_spatial_attn", "use_temporal_attn"}


def _parse_str(v):
    return None if v in (None, "", "none") else str(v)


def _key_parsers():
    parsers = {}
    for f in fields(RunConfig):
        if f.name == "d_set":
            parsers[f.name] = _parse_d_set
        elif f.name in _BOOL_KEYS:
            parsers[f.name] = _parse_bool
        elif f.name in _INT_KEYS:
            parsers[f.name] = lambda v: int(str(v))
        elif f.name in _FLOAT_KEYS:
            parsers[f.name] = lambda v: float(str(v))
        else:
            parsers[f.name] = _parse_str
    return parsers


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))
