from dataclasses import dataclass, fields

from ..errors import ConfigError


@dataclass(frozen=True)
class NetConfig:
    """Architecture of the K-stage unfolded network.

    The defaults are the desk-scale toy setting; :meth:`paper` returns the
    full-size configuration (K=6, C=32, l_O=6, 17x17 contrast kernel).
    """

    stages: int = 3
    channels: int = 8
    oem_layers: int = 4
    irm_layers: int = 3
    dcpm_kernel: int = 9
    se_ratio: int = 4
    lstm_kernel: int = 3
    mam_enabled: bool = True
    dcpm_enabled: bool = True

    def __post_init__(self):
        if self.stages < 1 or self.channels < 1:
            raise ConfigError("stages and channels must be >= 1")
        if self.oem_layers < 0 or self.irm_layers < 0:
            raise ConfigError("oem_layers and irm_layers must be >= 0")
        if self.dcpm_kernel < 1 or self.dcpm_kernel % 2 == 0:
            raise ConfigError(f"dcpm_kernel must be a positive odd integer, got {self.dcpm_kernel}")
        if self.lstm_kernel < 1 or self.lstm_kernel % 2 == 0:
            raise ConfigError(f"lstm_kernel must be a positive odd integer, got {self.lstm_kernel}")
        if self.se_ratio < 1:
            raise ConfigError("se_ratio must be >= 1")

    @classmethod
    def paper(cls, stages=6):
        return cls(stages=stages, channels=32, oem_layers=6, irm_layers=3, dcpm_kernel=17, se_ratio=4)


@dataclass(frozen=True)
class LossConfig:
    sigma: float = 0.1
    smooth: float = 1e-6

    def __post_init__(self):
        if not (self.sigma >= 0 and self.sigma < float("inf")):
            raise ConfigError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.smooth < 0:
            raise ConfigError("smooth must be >= 0")


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 200
    batch_size: int = 8
    base_lr: float = 1e-3
    power: float = 0.9
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.base_lr <= 0:
            raise ConfigError("epochs >= 0, batch_size >= 1 and base_lr > 0 required")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")


def field_names(cls):
    return [f.name for f in fields(cls)]
