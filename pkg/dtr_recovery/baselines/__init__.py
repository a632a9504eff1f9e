"""Classical completion baselines."""

from dtr_recovery.baselines.tnn import (
    AdmmParams,
    TnnResult,
    prox_tnn,
    svt_slices,
    tnn_admm_complete,
    tnn_norm,
)

__all__ = [
    "AdmmParams",
    "TnnResult",
    "prox_tnn",
    "svt_slices",
    "tnn_admm_complete",
    "tnn_norm",
]
