"""Engine configuration: the model ensemble and its table geometry.

The default ensemble is six byte-order context models (orders 1..6), one
whole-word model, and one match model — eight predictors mixed per bit.
The configuration digest is embedded in every compressed stream and
snapshot so that state is never decoded under the wrong geometry.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigError

HISTORY_BYTES = 65536      # ring buffer of processed history (fixed)
MIXER_ROWS = 256           # weight-row selector: previous whole byte
WEIGHT_FRAC_BITS = 16      # mixer weights are int32 with 16 fractional bits
WEIGHT_CLAMP = 8 << WEIGHT_FRAC_BITS   # |w| <= 8.0
MATCH_COUNTERS = 128       # (length bucket, predicted bit) pairs
MATCH_LEN_CAP = 63         # length bucket saturation


@dataclass(frozen=True)
class EngineConfig:
    """Immutable description of an engine's model ensemble.

    orders:           byte-context orders, each in 1..6, strictly increasing
    use_word:         include the whole-word context model
    use_match:        include the longest-suffix match model
    table_bits:       log2 slot count of each hashed counter table (16..24)
    checksum_bits:    width of the slot-verification tag (4..8)
    match_table_bits: log2 slot count of the match position table (16..24)
    match_min_len:    minimum suffix length for a match (>= 2)
    mixer_lr:         mixer learning rate in logit units
    """

    orders: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    use_word: bool = True
    use_match: bool = True
    table_bits: int = 22
    checksum_bits: int = 8
    match_table_bits: int = 20
    match_min_len: int = 4
    mixer_lr: float = 0.002

    def __post_init__(self) -> None:
        object.__setattr__(self, "orders", tuple(int(n) for n in self.orders))
        if not self.orders and not self.use_word and not self.use_match:
            raise ConfigError("ensemble is empty")
        if any(not 1 <= n <= 6 for n in self.orders):
            raise ConfigError(f"orders must be in 1..6, got {self.orders}")
        if list(self.orders) != sorted(set(self.orders)):
            raise ConfigError(f"orders must be strictly increasing, got {self.orders}")
        if not 16 <= self.table_bits <= 24:
            raise ConfigError(f"table_bits must be in 16..24, got {self.table_bits}")
        if not 4 <= self.checksum_bits <= 8:
            raise ConfigError(f"checksum_bits must be in 4..8, got {self.checksum_bits}")
        if not 16 <= self.match_table_bits <= 24:
            raise ConfigError(
                f"match_table_bits must be in 16..24, got {self.match_table_bits}"
            )
        if self.match_min_len < 2:
            raise ConfigError(f"match_min_len must be >= 2, got {self.match_min_len}")
        if not 0.0 < self.mixer_lr <= 1.0:
            raise ConfigError(f"mixer_lr must be in (0, 1], got {self.mixer_lr}")

    @property
    def n_hashed(self) -> int:
        """Number of hashed-table models (byte orders plus word model)."""
        return len(self.orders) + (1 if self.use_word else 0)

    @property
    def n_models(self) -> int:
        return self.n_hashed + (1 if self.use_match else 0)

    @property
    def lr_scaled(self) -> int:
        """Learning rate as an integer numerator over 2**16."""
        n = round(self.mixer_lr * (1 << 16))
        return max(n, 1)

    def to_json(self) -> str:
        return json.dumps(
            {
                "orders": list(self.orders),
                "use_word": self.use_word,
                "use_match": self.use_match,
                "table_bits": self.table_bits,
                "checksum_bits": self.checksum_bits,
                "match_table_bits": self.match_table_bits,
                "match_min_len": self.match_min_len,
                "mixer_lr": self.mixer_lr,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "EngineConfig":
        raw = json.loads(text)
        raw["orders"] = tuple(raw["orders"])
        return cls(**raw)

    def digest(self) -> bytes:
        """8-byte configuration fingerprint for stream/snapshot headers."""
        return hashlib.sha256(self.to_json().encode("ascii")).digest()[:8]


DEFAULT_CONFIG = EngineConfig()
